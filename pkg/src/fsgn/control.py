"""Length normalisation, frequency-domain compression and chunked rollout.

The input side turns an arbitrary-length observed sequence into a fixed
``(t_in, K)`` coefficient matrix; the output side maps decoder coefficients
back to ``t_out`` frames. :func:`rollout` chains forecasts to cover any
horizon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numeric import dct, idct

PADDING_MODES = ("prepend", "append")


@dataclass(frozen=True)
class ControlConfig:
    t_in: int = 50
    t_out: int = 10
    lam: float = 0.8
    padding: str = "prepend"

    def __post_init__(self):
        if self.t_in < 1 or self.t_out < 1:
            raise ValueError(f"t_in and t_out must be >= 1, got {self.t_in}, {self.t_out}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.padding not in PADDING_MODES:
            raise ValueError(f"padding must be one of {PADDING_MODES}, got {self.padding!r}")


def time_control_in(x: np.ndarray, t_in: int, padding: str = "prepend") -> np.ndarray:
    """Keep the last ``t_in`` frames, or pad with stationary frames.

    Short sequences are padded with copies of the first frame placed in
    front (``padding="prepend"``) or with copies of the last frame placed
    after (``padding="append"``).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise ValueError(f"expected a (T, K) sequence, got shape {x.shape}")
    n = x.shape[-2]
    if n == 0:
        raise ValueError("cannot time-control an empty sequence")
    if n >= t_in:
        return x[..., n - t_in:, :]
    missing = t_in - n
    if padding == "prepend":
        pad = np.repeat(x[..., :1, :], missing, axis=-2)
        return np.concatenate([pad, x], axis=-2)
    if padding == "append":
        pad = np.repeat(x[..., -1:, :], missing, axis=-2)
        return np.concatenate([x, pad], axis=-2)
    raise ValueError(f"unknown padding mode {padding!r}")


def cutoff_rows(n: int, lam: float) -> int:
    """Number of low-frequency rows kept by :func:`lowpass`."""
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda must lie in (0, 1], got {lam}")
    # floor(lam * n) without being fooled by e.g. 0.6 * 50 == 29.999...
    return min(n, int(math.floor(lam * n + 1e-9)))


def lowpass(c: np.ndarray, lam: float) -> np.ndarray:
    """Zero every frequency row past ``floor(lam * T)``; shape is preserved."""
    c = np.asarray(c, dtype=np.float64)
    keep = cutoff_rows(c.shape[-2], lam)
    out = c.copy()
    out[..., keep:, :] = 0.0
    return out


def input_pipeline(x: np.ndarray, cfg: ControlConfig) -> np.ndarray:
    """Observed frames -> low-passed DCT coefficients of the last ``t_in`` frames."""
    return lowpass(dct(time_control_in(x, cfg.t_in, cfg.padding)), cfg.lam)


def output_pipeline(d: np.ndarray, cfg: ControlConfig) -> np.ndarray:
    """Decoder coefficients -> first ``t_out`` time-domain frames."""
    if cfg.t_out > d.shape[-2]:
        raise ValueError(
            f"t_out={cfg.t_out} exceeds the {d.shape[-2]} decoded frames; use rollout()"
        )
    return idct(d)[..., : cfg.t_out, :]


def rollout(
    history: np.ndarray,
    model: Callable[[np.ndarray], np.ndarray],
    cfg,
    horizon: int,
) -> np.ndarray:
    """Forecast ``horizon`` frames by repeatedly calling ``model``.

    ``model`` maps a history ``(..., T, K)`` to ``(..., >= t_out, K)``
    absolute frames; ``cfg`` is anything with a ``t_out`` attribute. Each
    pass keeps the first ``t_out`` frames, appends them to the working
    history and continues until ``horizon`` frames exist.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    t_out = cfg.t_out
    work = np.asarray(history, dtype=np.float64)
    chunks = []
    produced = 0
    while produced < horizon:
        step = np.asarray(model(work))[..., :t_out, :]
        if step.shape[-2] == 0:
            raise ValueError("model produced no frames")
        chunks.append(step)
        produced += step.shape[-2]
        work = np.concatenate([work, step], axis=-2)
    return np.concatenate(chunks, axis=-2)[..., :horizon, :]
