"""Kinematic loss, exact reverse-mode gradients, Adam and the training loop."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .control import time_control_in
from .model import (FsgnParams, Gradients, MlpBlock, ModelConfig, decode, encode,
                    init_params, input_matrix, output_matrix, save_checkpoint)

LOSS_CSV_HEADER = ("step", "epoch", "loss_total", "loss_p", "loss_v", "loss_a")
# fixed reduction granularity so results do not depend on the worker count
CHUNK = 32


class NumericError(FloatingPointError):
    """Raised when a non-finite value shows up; ``stage`` names where."""

    def __init__(self, stage: str, message: str = ""):
        self.stage = stage
        super().__init__(f"non-finite values in {stage}" + (f": {message}" if message else ""))


def frame_diff(x: np.ndarray) -> np.ndarray:
    """Frame-by-frame difference along time; the first row is zero."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    out[..., 1:, :] = x[..., 1:, :] - x[..., :-1, :]
    return out


def _diff_transpose(g: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`frame_diff`."""
    out = np.zeros_like(g)
    out[..., 1:, :] += g[..., 1:, :]
    out[..., :-1, :] -= g[..., 1:, :]
    return out


def _joint_norms(r: np.ndarray) -> np.ndarray:
    if r.shape[-1] % 3:
        raise ValueError(f"channel count {r.shape[-1]} is not a multiple of 3")
    return np.linalg.norm(r.reshape(*r.shape[:-1], -1, 3), axis=-1)


def mpjpe(y: np.ndarray, x: np.ndarray, v: int | None = None) -> float:
    """Mean per-joint Euclidean error, averaged over joints, frames and leading axes."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape != x.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {x.shape}")
    if v is not None and y.shape[-1] != 3 * v:
        raise ValueError(f"K={y.shape[-1]} does not equal 3 * {v} joints")
    return float(_joint_norms(y - x).mean())


def _mpjpe_grad(r: np.ndarray) -> np.ndarray:
    """Gradient of ``mean ||r_joint||`` w.r.t. ``r``; zero where a residual vanishes."""
    j = r.reshape(*r.shape[:-1], -1, 3)
    norms = np.linalg.norm(j, axis=-1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    g = np.where(norms > 0, j / safe, 0.0)
    return g.reshape(r.shape) / (norms.size)


def loss_fsgn(pred: np.ndarray, target: np.ndarray, cfg: ModelConfig) -> tuple[float, dict]:
    """Position + ``alpha_v`` * velocity + ``alpha_a`` * acceleration MPJPE."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    vp, vt = frame_diff(pred), frame_diff(target)
    parts = {
        "L_p": mpjpe(target, pred),
        "L_v": mpjpe(vt, vp),
        "L_a": mpjpe(frame_diff(vt), frame_diff(vp)),
    }
    total = parts["L_p"] + cfg.alpha_v * parts["L_v"] + cfg.alpha_a * parts["L_a"]
    return total, parts


def _loss_grad(pred, target, cfg):
    r = pred - target
    g = _mpjpe_grad(r)
    rv = frame_diff(r)
    if cfg.alpha_v:
        g = g + cfg.alpha_v * _diff_transpose(_mpjpe_grad(rv))
    if cfg.alpha_a:
        g = g + cfg.alpha_a * _diff_transpose(_diff_transpose(_mpjpe_grad(frame_diff(rv))))
    return g


def _sum_rows(a: np.ndarray) -> np.ndarray:
    return a.reshape(-1, a.shape[-1]).sum(axis=0)


def _block_backward(blk: MlpBlock, cache: tuple, dy: np.ndarray, kind: str, g: MlpBlock) -> np.ndarray:
    """Accumulate parameter gradients into ``g`` and return the input gradient."""
    m = cache[0]
    n = blk.n
    if kind == "improved":
        _, xhat, inv_std = cache
        g.gamma += _sum_rows(dy * xhat)
        g.beta += _sum_rows(dy)
        dxhat = dy * blk.gamma
        du = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        dm = dy
    elif kind == "no_ln":
        du = dy
        dm = dy
    elif kind == "traditional":
        du = dy * cache[1]
        dm = 0.0
    else:
        raise ValueError(f"unknown block kind {kind!r}")
    g.w += m.reshape(-1, n).T @ du.reshape(-1, n)
    g.b += _sum_rows(du)
    return du @ blk.w.T + dm


def _check(stage: str, a) -> None:
    if not np.all(np.isfinite(a)):
        raise NumericError(stage)


def backward(p: FsgnParams, cfg: ModelConfig, x_obs: np.ndarray, target: np.ndarray):
    """Loss and exact gradient for one sample or a stacked batch.

    Batched inputs ``(B, T, K)`` give the batch-mean loss and its gradient.

    Returns
    -------
    (loss, parts, grads)
    """
    x_obs = np.asarray(x_obs, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    window = time_control_in(x_obs, cfg.t_in, cfg.padding)
    e0 = input_matrix(cfg) @ (window * cfg.unit_scale)
    cache: dict = {}
    _check("input_control", e0)
    with np.errstate(invalid="ignore", over="ignore"):
        e_hat = encode(p, e0, cfg.block, cache)
        _check("encoder", e_hat)
        d = decode(p, e_hat, cfg.block, cache)
    _check("decoder", d)
    out_m = output_matrix(cfg)
    pred = (out_m @ d) / cfg.unit_scale
    if cfg.relative:
        pred = pred + window[..., -1:, :]
    loss, parts = loss_fsgn(pred, target, cfg)
    if not math.isfinite(loss):
        raise NumericError("loss", f"loss={loss}")

    grads = p.zeros_like()
    dd = out_m.T @ _loss_grad(pred, target, cfg) / cfg.unit_scale
    for stage, transpose_after in (("spatial_dec", True), ("temporal_dec", False),
                                   ("temporal_enc", True), ("spatial_enc", False)):
        blocks = getattr(p, stage)
        gblocks = getattr(grads, stage)
        for blk, gblk, c in zip(reversed(blocks), reversed(gblocks), reversed(cache[stage])):
            dd = _block_backward(blk, c, dd, cfg.block, gblk)
        if transpose_after:
            dd = np.swapaxes(dd, -1, -2)
    for _, t in grads.named_tensors():
        _check("gradients", t)
    return loss, parts, grads


# -- optimiser -------------------------------------------------------------

@dataclass
class OptimizerState:
    m: Gradients
    v: Gradients
    step: int = 0

    @classmethod
    def zeros(cls, p: FsgnParams) -> "OptimizerState":
        return cls(p.zeros_like(), p.zeros_like(), 0)


BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


def adam_step(p: FsgnParams, g: Gradients, state: OptimizerState, lr: float):
    """Bias-corrected Adam update, applied in place; returns ``(p, state)``."""
    state.step += 1
    bc1 = 1.0 - BETA1 ** state.step
    bc2 = 1.0 - BETA2 ** state.step
    for w, gw, m, v in zip(p.tensors(), g.tensors(), state.m.tensors(), state.v.tensors()):
        m *= BETA1
        m += (1.0 - BETA1) * gw
        v *= BETA2
        v += (1.0 - BETA2) * gw * gw
        w -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    return p, state


def clip_grad_norm(g: Gradients, max_norm: float) -> float:
    norm = float(np.sqrt(sum(float((t * t).sum()) for t in g.tensors())))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for t in g.tensors():
            t *= scale
    return norm


# -- training loop ---------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    batch_size: int = 256
    learning_rate: float = 1e-5
    lr_decay: float = 1.0
    lr_decay_every: int = 1
    seed: int = 0
    grad_clip: float | None = None
    threads: int = 1
    # FC weights start near zero so every LN sits in its eps-dominated, almost linear regime
    init_gain: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.init_gain < 0:
            raise ValueError("init_gain must be >= 0")
        if self.lr_decay_every < 1:
            raise ValueError("lr_decay_every must be >= 1")


def n_updates(n_samples: int, batch_size: int, epochs: int) -> int:
    """Optimizer steps taken by :func:`train`."""
    return epochs * math.ceil(n_samples / batch_size)


def stack_pairs(dataset, t_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack (observed, future) pairs into arrays, trimming futures to ``t_out``."""
    obs, fut = [], []
    for item in dataset:
        o, f = (item.observed, item.future) if hasattr(item, "observed") else item
        if f.shape[0] < t_out:
            raise ValueError(f"future window has {f.shape[0]} frames, need {t_out}")
        obs.append(np.asarray(o, dtype=np.float64))
        fut.append(np.asarray(f[:t_out], dtype=np.float64))
    if not obs:
        raise ValueError("empty dataset")
    return np.stack(obs), np.stack(fut)


def batch_gradient(p, cfg, x, y, pool: ThreadPoolExecutor | None = None):
    """Batch-mean loss and gradient, reduced over fixed-size chunks in order."""
    bounds = [(i, min(i + CHUNK, len(x))) for i in range(0, len(x), CHUNK)]

    def work(b):
        lo, hi = b
        return backward(p, cfg, x[lo:hi], y[lo:hi])

    results = list(pool.map(work, bounds)) if pool is not None else [work(b) for b in bounds]
    n = len(x)
    total = p.zeros_like()
    loss = 0.0
    parts = {"L_p": 0.0, "L_v": 0.0, "L_a": 0.0}
    for (lo, hi), (l, pr, g) in zip(bounds, results):
        w = (hi - lo) / n
        loss += w * l
        for key in parts:
            parts[key] += w * pr[key]
        for acc, t in zip(total.tensors(), g.tensors()):
            acc += w * t
    return loss, parts, total


def train(dataset, model_cfg: ModelConfig, train_cfg: TrainConfig, out_dir=None,
          params: FsgnParams | None = None, max_steps: int | None = None):
    """Minibatch Adam training.

    Returns ``(params, curve)``, where ``curve`` has one dict per optimizer
    step with the keys of :data:`LOSS_CSV_HEADER`. With ``out_dir`` the final
    checkpoint and ``loss.csv`` are written there.
    """
    x, y = stack_pairs(dataset, model_cfg.t_out)
    if params is None:
        params = init_params(model_cfg, train_cfg.seed, train_cfg.init_gain)
    state = OptimizerState.zeros(params)
    rng = np.random.default_rng(train_cfg.seed)
    n = len(x)
    curve: list[dict] = []
    step = 0
    pool = ThreadPoolExecutor(train_cfg.threads) if train_cfg.threads > 1 else None
    try:
        for epoch in range(train_cfg.epochs):
            lr = train_cfg.learning_rate * train_cfg.lr_decay ** (epoch // train_cfg.lr_decay_every)
            order = rng.permutation(n)
            for lo in range(0, n, train_cfg.batch_size):
                idx = order[lo:lo + train_cfg.batch_size]
                loss, parts, g = batch_gradient(params, model_cfg, x[idx], y[idx], pool)
                if train_cfg.grad_clip is not None:
                    clip_grad_norm(g, train_cfg.grad_clip)
                adam_step(params, g, state, lr)
                step += 1
                curve.append({"step": step, "epoch": epoch + 1, "loss_total": loss,
                              "loss_p": parts["L_p"], "loss_v": parts["L_v"], "loss_a": parts["L_a"]})
                if max_steps is not None and step >= max_steps:
                    break
            if max_steps is not None and step >= max_steps:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    if out_dir is not None:
        save_checkpoint(out_dir, params, model_cfg, seed=train_cfg.seed, epoch=epoch + 1)
        write_loss_csv(Path(out_dir) / "loss.csv", curve)
    return params, curve


def write_loss_csv(path, curve: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOSS_CSV_HEADER)
        for row in curve:
            w.writerow([row["step"], row["epoch"]] + [repr(float(row[k])) for k in LOSS_CSV_HEADER[2:]])
