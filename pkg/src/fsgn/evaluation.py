"""MPJPE-vs-horizon reports, ranking tables and the ablation grid runner."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .control import rollout
from .data import WindowSample, baseline_constant_velocity, baseline_zero_velocity
from .model import FsgnParams, ModelConfig, param_count, predictor
from .training import TrainConfig, _joint_norms, train

H36M_HORIZONS_MS = (80, 160, 320, 400, 560, 720, 880, 1000)
NJUST_HORIZONS_MS = (100, 200, 300, 400, 500)

# predictor(observed (B, T, K), horizon_frames) -> (B, horizon_frames, K)
Predictor = Callable[[np.ndarray, int], np.ndarray]


@dataclass
class EvalReport:
    predictor: str
    horizons_ms: list[int]
    mpjpe_mm: list[float]
    n_samples: int
    params_count: int = 0

    def __post_init__(self):
        if len(self.horizons_ms) != len(self.mpjpe_mm):
            raise ValueError("horizons_ms and mpjpe_mm differ in length")
        if any(b <= a for a, b in zip(self.horizons_ms, self.horizons_ms[1:])):
            raise ValueError(f"horizons must be strictly increasing: {self.horizons_ms}")
        if any(e < 0 for e in self.mpjpe_mm):
            raise ValueError("negative MPJPE")


def ms_to_frames(ms: float, fps: float) -> int:
    """Round half up, so 1000 ms at 25 fps is 25 frames and 500 ms at 30 fps is 15."""
    return int(math.floor(ms * fps / 1000.0 + 0.5))


def fsgn_predictor(p: FsgnParams, cfg: ModelConfig) -> Predictor:
    step = predictor(p, cfg)
    return lambda obs, horizon: rollout(obs, step, cfg, horizon)


def zero_velocity_predictor(obs, horizon):
    return baseline_zero_velocity(obs, horizon)


def constant_velocity_predictor(obs, horizon):
    return baseline_constant_velocity(obs, horizon)


def _predict_all(pred: Predictor, samples: Sequence[WindowSample], horizon: int):
    shapes = {s.observed.shape for s in samples}
    truth = np.stack([s.future[:horizon] for s in samples])
    if len(shapes) == 1:
        out = pred(np.stack([s.observed for s in samples]), horizon)
    else:
        out = np.stack([pred(s.observed, horizon) for s in samples])
    return np.asarray(out), truth


def evaluate(pred: Predictor, samples: Sequence[WindowSample], fps: float,
             horizons_ms: Iterable[float] = H36M_HORIZONS_MS, name: str = "predictor",
             params_count: int = 0, cumulative: bool = True) -> EvalReport:
    """MPJPE at each horizon, predicting once to the longest horizon.

    With ``cumulative`` the error at ``h`` averages frames ``1..h``;
    otherwise only frame ``h`` is scored.
    """
    horizons_ms = [int(h) for h in horizons_ms]
    if not samples:
        raise ValueError("no samples to evaluate")
    frames = [ms_to_frames(h, fps) for h in horizons_ms]
    available = min(s.future.shape[0] for s in samples)
    if frames[0] < 1:
        raise ValueError(f"horizon {horizons_ms[0]} ms is shorter than one frame at {fps} fps")
    if frames[-1] > available:
        raise ValueError(f"horizon {horizons_ms[-1]} ms needs {frames[-1]} frames, samples have {available}")
    out, truth = _predict_all(pred, samples, frames[-1])
    per_frame = _joint_norms(out - truth).mean(axis=-1)  # (B, H)
    per_frame = per_frame.mean(axis=0)
    errs = [float(per_frame[:h].mean() if cumulative else per_frame[h - 1]) for h in frames]
    return EvalReport(name, horizons_ms, errs, len(samples), params_count)


def compare(reports: Sequence[EvalReport]) -> list[EvalReport]:
    """Rank by MPJPE at the last horizon, ties broken by fewer parameters."""
    if not reports:
        return []
    ref = list(reports[0].horizons_ms)
    for r in reports:
        if list(r.horizons_ms) != ref:
            raise ValueError(f"report {r.predictor!r} uses horizons {r.horizons_ms}, expected {ref}")
    return sorted(reports, key=lambda r: (r.mpjpe_mm[-1], r.params_count))


def format_table(reports: Sequence[EvalReport]) -> str:
    """Aligned text table: one row per predictor, one column per horizon."""
    ranked = compare(reports)
    if not ranked:
        return ""
    head = ["Method", "Params/M"] + [str(h) for h in ranked[0].horizons_ms]
    rows = [[r.predictor, f"{r.params_count / 1e6:.2f}"] + [f"{e:.1f}" for e in r.mpjpe_mm] for r in ranked]
    widths = [max(len(row[i]) for row in [head] + rows) for i in range(len(head))]
    fmt = lambda row: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
    return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows])


def write_report_csv(path, reports: Sequence[EvalReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["predictor", "params", "h_ms", "mpjpe_mm"])
        for r in reports:
            for h, e in zip(r.horizons_ms, r.mpjpe_mm):
                w.writerow([r.predictor, r.params_count, h, repr(float(e))])


def select_samples(samples: Sequence[WindowSample], cap: int = 256, seed: int = 0,
                   exclude_labels: Iterable[str] = ()) -> list[WindowSample]:
    """Seeded draw of at most ``cap`` samples per label, dropping excluded labels."""
    excluded = set(exclude_labels)
    groups: dict = {}
    for s in samples:
        if s.label not in excluded:
            groups.setdefault(s.label, []).append(s)
    rng = np.random.default_rng(seed)
    picked = []
    for label in sorted(groups, key=lambda x: (x is None, str(x))):
        group = groups[label]
        if len(group) <= cap:
            picked.extend(group)
        else:
            idx = np.sort(rng.choice(len(group), size=cap, replace=False))
            picked.extend(group[i] for i in idx)
    return picked


# -- ablations -------------------------------------------------------------

COMPONENTS = {
    "fsgn": {},
    "no_spatial": {"n_s": 0},
    "no_temporal": {"n_t": 0},
    "no_ln": {"block": "no_ln"},
    "no_dct": {"use_dct": False},
    "traditional_mlp": {"block": "traditional"},
    "absolute_position": {"relative": False},
}

DEFAULT_GRIDS = {
    "t_in_t_out": [(25, 10), (50, 10), (75, 10), (50, 1), (50, 25)],
    "n_s_n_t": [(1, 1), (1, 4), (1, 16), (1, 20), (1, 24), (1, 28), (1, 32), (2, 20), (4, 20)],
    "alpha": [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (2.0, 0.0), (1.0, 0.5), (1.0, 1.0), (1.0, 2.0)],
    "components": ["no_spatial", "no_temporal", "no_ln", "no_dct", "traditional_mlp", "fsgn"],
    "lambda": [1.0, 0.8, 0.6, 0.4, 0.2],
    "displacement": ["absolute", "relative"],
}
AXES = tuple(DEFAULT_GRIDS)


def ablation_configs(axis: str, grid, base: ModelConfig) -> list[tuple[str, ModelConfig]]:
    """Expand a grid into named configs; raises before anything is trained."""
    if axis not in DEFAULT_GRIDS:
        raise ValueError(f"unknown ablation axis {axis!r}; valid axes: {', '.join(AXES)}")
    grid = list(grid)
    if not grid:
        raise ValueError("empty ablation grid")
    out = []
    for point in grid:
        if axis == "t_in_t_out":
            t_in, t_out = point
            out.append((f"t_in={t_in},t_out={t_out}", replace(base, t_in=int(t_in), t_out=int(t_out))))
        elif axis == "n_s_n_t":
            n_s, n_t = point
            out.append((f"n_s={n_s},n_t={n_t}", replace(base, n_s=int(n_s), n_t=int(n_t))))
        elif axis == "alpha":
            av, aa = point
            out.append((f"alpha_v={av:g},alpha_a={aa:g}", replace(base, alpha_v=float(av), alpha_a=float(aa))))
        elif axis == "lambda":
            out.append((f"lambda={float(point):g}", replace(base, lam=float(point))))
        elif axis == "components":
            if point not in COMPONENTS:
                raise ValueError(f"unknown component variant {point!r}; valid: {', '.join(COMPONENTS)}")
            out.append((point, replace(base, **COMPONENTS[point])))
        elif axis == "displacement":
            if point not in ("absolute", "relative"):
                raise ValueError(f"displacement grid values are 'absolute' or 'relative', got {point!r}")
            out.append((point, replace(base, relative=point == "relative")))
    return out


def run_ablation(axis: str, grid, base: ModelConfig, train_samples, test_samples, fps: float,
                 horizons_ms=H36M_HORIZONS_MS, train_cfg: TrainConfig | None = None,
                 on_report: Callable[[EvalReport], None] | None = None) -> list[EvalReport]:
    """Train and evaluate one model per grid point with shared seed and data order."""
    configs = ablation_configs(axis, grid, base)
    train_cfg = train_cfg or TrainConfig()
    reports = []
    for name, cfg in configs:
        p, _ = train(train_samples, cfg, train_cfg)
        rep = evaluate(fsgn_predictor(p, cfg), test_samples, fps, horizons_ms, name, param_count(cfg))
        reports.append(rep)
        if on_report is not None:
            on_report(rep)
    return reports
