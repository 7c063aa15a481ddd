"""Residual layer-normalised MLP encoder-decoder.

Spatial blocks mix the K coordinate channels of each frequency row, temporal
blocks (after a transpose) mix the ``t_in`` frequency coefficients of each
channel. The decoder mirrors the encoder. The network output is read as a
displacement from the last observed frame.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterator

import numpy as np

from .control import ControlConfig, cutoff_rows, time_control_in
from .numeric import dct_matrix

LN_EPS = 1e-5
BLOCK_KINDS = ("improved", "no_ln", "traditional")
STAGES = ("spatial_enc", "temporal_enc", "temporal_dec", "spatial_dec")


@dataclass(frozen=True)
class ModelConfig:
    """Network and loss hyperparameters (defaults: the Human3.6M setting).

    ``block``, ``use_dct`` and ``relative`` only exist for ablations; the
    default values give the full model. ``unit_scale`` converts data units
    to network units (mm -> m by default); layer normalisation is not scale
    invariant, so this matters.
    """

    k: int = 66
    t_in: int = 50
    t_out: int = 10
    lam: float = 0.8
    n_s: int = 1
    n_t: int = 20
    alpha_v: float = 1.0
    alpha_a: float = 1.0
    block: str = "improved"
    use_dct: bool = True
    relative: bool = True
    padding: str = "prepend"
    unit_scale: float = 1e-3

    def __post_init__(self):
        for name in ("k", "t_in", "t_out"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        # zero block counts are only meaningful for the component ablation
        if self.n_s < 0 or self.n_t < 0:
            raise ValueError(f"block counts must be >= 0, got n_s={self.n_s}, n_t={self.n_t}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.alpha_v < 0 or self.alpha_a < 0:
            raise ValueError("loss coefficients must be non-negative")
        if self.t_out > self.t_in:
            raise ValueError(f"t_out={self.t_out} > t_in={self.t_in}; use rollout for long horizons")
        if not self.unit_scale > 0:
            raise ValueError(f"unit_scale must be positive, got {self.unit_scale}")
        if self.block not in BLOCK_KINDS:
            raise ValueError(f"block must be one of {BLOCK_KINDS}, got {self.block!r}")

    @property
    def control(self) -> ControlConfig:
        return ControlConfig(self.t_in, self.t_out, self.lam, self.padding)

    @property
    def joints(self) -> int:
        if self.k % 3:
            raise ValueError(f"k={self.k} is not a multiple of 3")
        return self.k // 3

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        head = ["k", "t_in", "t_out", "lambda", "n_s", "n_t", "alpha_v", "alpha_a"]
        return {key: d[key] for key in head + [key for key in d if key not in head]}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class MlpBlock:
    w: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "MlpBlock":
        return cls(np.zeros((n, n)), np.zeros(n), np.zeros(n), np.zeros(n))


@dataclass
class FsgnParams:
    """All learnable tensors. Also used as the gradient container."""

    spatial_enc: list[MlpBlock] = field(default_factory=list)
    temporal_enc: list[MlpBlock] = field(default_factory=list)
    temporal_dec: list[MlpBlock] = field(default_factory=list)
    spatial_dec: list[MlpBlock] = field(default_factory=list)

    def named_tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        """Tensors in checkpoint order."""
        for stage in STAGES:
            for i, blk in enumerate(getattr(self, stage)):
                for attr in ("w", "b", "gamma", "beta"):
                    yield f"{stage}[{i}].{attr}", getattr(blk, attr)

    def tensors(self) -> list[np.ndarray]:
        return [t for _, t in self.named_tensors()]

    def size(self) -> int:
        return sum(t.size for t in self.tensors())

    def zeros_like(self) -> "FsgnParams":
        return FsgnParams(
            *[[MlpBlock.zeros(blk.n) for blk in getattr(self, s)] for s in STAGES]
        )

    def copy(self) -> "FsgnParams":
        return FsgnParams(
            *[
                [MlpBlock(b.w.copy(), b.b.copy(), b.gamma.copy(), b.beta.copy()) for b in getattr(self, s)]
                for s in STAGES
            ]
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors()])

    def load_flat(self, values: np.ndarray) -> None:
        """Overwrite every tensor in place from a flat vector."""
        values = np.asarray(values, dtype=np.float64)
        if values.size != self.size():
            raise ValueError(f"expected {self.size()} values, got {values.size}")
        pos = 0
        for t in self.tensors():
            t[...] = values[pos:pos + t.size].reshape(t.shape)
            pos += t.size


Gradients = FsgnParams


def param_count(cfg: ModelConfig) -> int:
    """Closed-form learnable-parameter count: n*n + 3n per block, encoder and decoder."""
    return 2 * cfg.n_s * (cfg.k ** 2 + 3 * cfg.k) + 2 * cfg.n_t * (cfg.t_in ** 2 + 3 * cfg.t_in)


def init_params(cfg: ModelConfig, seed: int = 0, gain: float = 1.0) -> FsgnParams:
    """Xavier-uniform FC weights (times ``gain``), zero biases, unit LN scale, zero LN shift."""
    rng = np.random.default_rng(seed)
    widths = {"spatial_enc": (cfg.n_s, cfg.k), "temporal_enc": (cfg.n_t, cfg.t_in),
              "temporal_dec": (cfg.n_t, cfg.t_in), "spatial_dec": (cfg.n_s, cfg.k)}
    stages = []
    for stage in STAGES:
        count, n = widths[stage]
        limit = gain * np.sqrt(6.0 / (2 * n))
        stages.append([
            MlpBlock(rng.uniform(-limit, limit, size=(n, n)), np.zeros(n), np.ones(n), np.zeros(n))
            for _ in range(count)
        ])
    return FsgnParams(*stages)


def zero_params(cfg: ModelConfig) -> FsgnParams:
    p = init_params(cfg)
    p.load_flat(np.zeros(p.size()))
    return p


# -- forward ---------------------------------------------------------------

def block_forward(blk: MlpBlock, m: np.ndarray, kind: str = "improved", cache: list | None = None) -> np.ndarray:
    """One block: ``LN(m @ w + b) + m`` with LN over the last axis.

    ``kind="no_ln"`` drops the normalisation (``FC + residual``) and
    ``kind="traditional"`` is ``relu(FC)`` without residual. When ``cache``
    is a list, intermediates needed by the backward pass are appended to it.
    """
    if m.shape[-1] != blk.n:
        raise ValueError(f"block width {blk.n} does not match input width {m.shape[-1]}")
    u = m @ blk.w + blk.b
    if kind == "improved":
        mu = u.mean(axis=-1, keepdims=True)
        xc = u - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + LN_EPS)
        xhat = xc * inv_std
        out = xhat * blk.gamma + blk.beta + m
        if cache is not None:
            cache.append((m, xhat, inv_std))
        return out
    if kind == "no_ln":
        if cache is not None:
            cache.append((m,))
        return u + m
    if kind == "traditional":
        if cache is not None:
            cache.append((m, u > 0))
        return np.maximum(u, 0.0)
    raise ValueError(f"unknown block kind {kind!r}")


def _run_stage(blocks, m, kind, caches):
    for blk in blocks:
        m = block_forward(blk, m, kind, caches)
    return m


def encode(p: FsgnParams, e0: np.ndarray, kind: str = "improved", cache: dict | None = None) -> np.ndarray:
    """Spatial blocks, transpose, temporal blocks: ``(t_in, k) -> (k, t_in)``."""
    sc = [] if cache is not None else None
    tc = [] if cache is not None else None
    e = _run_stage(p.spatial_enc, e0, kind, sc)
    e = np.swapaxes(e, -1, -2)
    e = _run_stage(p.temporal_enc, e, kind, tc)
    if cache is not None:
        cache["spatial_enc"], cache["temporal_enc"] = sc, tc
    return e


def decode(p: FsgnParams, e_hat: np.ndarray, kind: str = "improved", cache: dict | None = None) -> np.ndarray:
    """Temporal blocks, transpose, spatial blocks: ``(k, t_in) -> (t_in, k)``."""
    tc = [] if cache is not None else None
    sc = [] if cache is not None else None
    d = _run_stage(p.temporal_dec, e_hat, kind, tc)
    d = np.swapaxes(d, -1, -2)
    d = _run_stage(p.spatial_dec, d, kind, sc)
    if cache is not None:
        cache["temporal_dec"], cache["spatial_dec"] = tc, sc
    return d


def input_matrix(cfg: ModelConfig) -> np.ndarray:
    """Linear map window -> encoder input (low-passed DCT, or identity without DCT)."""
    if not cfg.use_dct:
        return np.eye(cfg.t_in)
    c = np.array(dct_matrix(cfg.t_in))
    c[cutoff_rows(cfg.t_in, cfg.lam):] = 0.0
    return c


def output_matrix(cfg: ModelConfig) -> np.ndarray:
    """Linear map decoder output -> first ``t_out`` frames, shape ``(t_out, t_in)``."""
    if not cfg.use_dct:
        return np.eye(cfg.t_in)[: cfg.t_out]
    return np.array(dct_matrix(cfg.t_in).T[: cfg.t_out])


def forward(p: FsgnParams, cfg: ModelConfig, x_obs: np.ndarray, cache: dict | None = None) -> np.ndarray:
    """Observed frames ``(..., T, K)`` -> absolute future frames ``(..., t_out, K)``."""
    x_obs = np.asarray(x_obs, dtype=np.float64)
    if x_obs.shape[-1] != cfg.k:
        raise ValueError(f"expected {cfg.k} channels, got {x_obs.shape[-1]}")
    window = time_control_in(x_obs, cfg.t_in, cfg.padding)
    e0 = input_matrix(cfg) @ (window * cfg.unit_scale)
    d = decode(p, encode(p, e0, cfg.block, cache), cfg.block, cache)
    out = (output_matrix(cfg) @ d) / cfg.unit_scale
    if cfg.relative:
        out = out + window[..., -1:, :]
    return out


def predictor(p: FsgnParams, cfg: ModelConfig):
    """Bind parameters into a history -> ``t_out`` frames callable for rollout."""
    return lambda history: forward(p, cfg, history)


# -- checkpoints -----------------------------------------------------------

def save_checkpoint(directory, p: FsgnParams, cfg: ModelConfig, seed: int = 0, epoch: int = 0) -> None:
    """Write ``model.json`` (metadata) and ``model.bin`` (float64 LE tensors)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "config": cfg.to_dict(),
        "seed": int(seed),
        "epoch": int(epoch),
        "tensor_order": [{"name": n, "shape": list(t.shape)} for n, t in p.named_tensors()],
    }
    (directory / "model.json").write_text(json.dumps(meta, indent=2) + "\n")
    with open(directory / "model.bin", "wb") as fh:
        for t in p.tensors():
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(directory) -> tuple[FsgnParams, ModelConfig, dict]:
    directory = Path(directory)
    try:
        meta = json.loads((directory / "model.json").read_text())
        cfg = ModelConfig.from_dict(meta["config"])
    except (OSError, KeyError, json.JSONDecodeError, TypeError) as exc:
        raise CheckpointError(f"cannot read {directory / 'model.json'}: {exc}") from exc
    p = init_params(cfg)
    expected = [{"name": n, "shape": list(t.shape)} for n, t in p.named_tensors()]
    if meta.get("tensor_order") != expected:
        raise CheckpointError("tensor_order does not match the configured architecture")
    raw = (directory / "model.bin").read_bytes()
    if len(raw) != 8 * p.size():
        raise CheckpointError(f"model.bin holds {len(raw)} bytes, expected {8 * p.size()}")
    p.load_flat(np.frombuffer(raw, dtype="<f8"))
    return p, cfg, meta
