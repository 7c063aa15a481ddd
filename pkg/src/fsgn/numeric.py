"""Dense matrix primitives and the orthonormal DCT-II/III pair.

Every transform works along axis ``-2`` (time), so a single ``(T, K)``
sequence and a stacked ``(B, T, K)`` batch go through the same code.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _dct_basis(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    t = np.arange(n)[None, :]
    basis = np.cos(np.pi * (2 * t + 1) * k / (2 * n))
    scale = np.full(n, np.sqrt(2.0 / n))
    scale[0] = np.sqrt(1.0 / n)
    basis = basis * scale[:, None]
    basis.setflags(write=False)
    return basis


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix ``C`` with ``dct(x) == C @ x`` (read-only)."""
    if n < 1:
        raise ValueError(f"DCT length must be >= 1, got {n}")
    return _dct_basis(int(n))


def dct(m: np.ndarray) -> np.ndarray:
    """Orthonormal DCT-II of every column of ``m`` along the time axis.

    Row ``t`` of the result holds frequency index ``t``.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim < 2:
        raise ValueError(f"expected a (T, K) matrix, got shape {m.shape}")
    return dct_matrix(m.shape[-2]) @ m


def idct(c: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dct` (orthonormal DCT-III)."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim < 2:
        raise ValueError(f"expected a (T, K) matrix, got shape {c.shape}")
    return dct_matrix(c.shape[-2]).T @ c


def transpose(m: np.ndarray) -> np.ndarray:
    """Swap the last two axes."""
    return np.swapaxes(np.asarray(m), -1, -2)


def affine(m: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise affine map ``m @ w + b``."""
    m = np.asarray(m, dtype=np.float64)
    if w.ndim != 2 or m.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ValueError(
            f"shape mismatch: m {m.shape}, w {w.shape}, b {np.shape(b)}"
        )
    return m @ w + b
