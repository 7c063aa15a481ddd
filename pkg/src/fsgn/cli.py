"""Command-line interface: ``fsgn {train,predict,eval,ablate,param-count,synth}``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import data as D
from .evaluation import (AXES, DEFAULT_GRIDS, H36M_HORIZONS_MS, EvalReport, ablation_configs,
                         constant_velocity_predictor,
                         evaluate, format_table, fsgn_predictor, ms_to_frames, run_ablation,
                         select_samples, write_report_csv, zero_velocity_predictor)
from .model import CheckpointError, ModelConfig, load_checkpoint, param_count
from .training import NumericError, TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    joints: list | None = None
    fps: int = 25
    downsample: int = 1
    t_obs: int | None = None
    stride: int = 1
    test_stride: int = 1
    label_regex: str | None = r"^([^_.]+)"
    exclude_labels: list = field(default_factory=list)
    # in-memory synthetic corpus instead of files
    synthetic: dict | None = None


@dataclass
class EvalConfig:
    horizons_ms: list = field(default_factory=lambda: list(H36M_HORIZONS_MS))
    sample_cap: int = 256
    seed: int = 0
    cumulative: bool = True
    baselines: bool = True


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ablation: dict = field(default_factory=dict)
    base_dir: Path = Path(".")


def _strict(cls, d, section):
    if not isinstance(d, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name for f in fields(cls)}
    if section == "model":
        known |= {"lambda"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")


def parse_config(doc: dict, base_dir=".") -> RunConfig:
    """Build a :class:`RunConfig`; missing keys take their defaults, unknown keys are rejected."""
    top = {"model", "train", "data", "eval", "ablation"}
    unknown = set(doc) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        m = doc.get("model", {})
        _strict(ModelConfig, m, "model")
        t = doc.get("train", {})
        _strict(TrainConfig, t, "train")
        d = doc.get("data", {})
        _strict(DataConfig, d, "data")
        e = doc.get("eval", {})
        _strict(EvalConfig, e, "eval")
        abl = doc.get("ablation", {})
        bad = set(abl) - set(AXES)
        if bad:
            raise ConfigError(f"unknown ablation axes {sorted(bad)}; valid axes: {', '.join(AXES)}")
        return RunConfig(ModelConfig.from_dict(m), TrainConfig(**t), DataConfig(**d), EvalConfig(**e),
                         abl, Path(base_dir))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(doc, path.parent)


# -- data plumbing ---------------------------------------------------------

def _synth_spec(d: dict) -> tuple[D.SynthSpec, int, int, int]:
    d = dict(d)
    n = int(d.pop("n_sequences", 20))
    n_train = int(d.pop("n_train", max(1, n - n // 5)))
    seed = int(d.pop("seed", 0))
    for key in ("amp_range", "freq_range", "offset_range"):
        if key in d:
            d[key] = tuple(d[key])
    try:
        spec = D.SynthSpec(**d)
    except TypeError as exc:
        raise ConfigError(f"data.synthetic: {exc}") from exc
    return spec, n, n_train, seed


def _split_sequences(cfg: RunConfig):
    dc = cfg.data
    if dc.synthetic is not None:
        spec, n, n_train, seed = _synth_spec(dc.synthetic)
        seqs = D.synthetic_corpus(n, spec, seed)
        return [(s, None) for s in seqs[:n_train]], [(s, None) for s in seqs[n_train:]]
    train_set = D.load_corpus(dc.train, cfg.base_dir, dc.joints, dc.downsample, dc.label_regex) if dc.train else []
    test_set = D.load_corpus(dc.test, cfg.base_dir, dc.joints, dc.downsample, dc.label_regex) if dc.test else []
    return train_set, test_set


def _windows(pairs, t_obs, horizon, stride, exclude=()):
    out = []
    for seq, label in pairs:
        if label in exclude:
            continue
        out.extend(D.make_windows(seq, t_obs, horizon, stride, label))
    return out


def _fps(cfg: RunConfig) -> int:
    if cfg.data.synthetic is not None:
        return int(cfg.data.synthetic.get("fps", D.SynthSpec.fps))
    return cfg.data.fps


def training_windows(cfg: RunConfig, model: ModelConfig | None = None):
    model = model or cfg.model
    train_pairs, _ = _split_sequences(cfg)
    t_obs = cfg.data.t_obs or model.t_in
    ws = _windows(train_pairs, t_obs, model.t_out, cfg.data.stride)
    if not ws:
        raise D.SequenceFormatError("no training windows: sequences too short or no training data")
    return ws


def test_windows(cfg: RunConfig, t_in: int):
    _, test_pairs = _split_sequences(cfg)
    horizon = ms_to_frames(max(cfg.eval.horizons_ms), _fps(cfg))
    t_obs = cfg.data.t_obs or t_in
    ws = _windows(test_pairs, t_obs, horizon, cfg.data.test_stride, set(cfg.data.exclude_labels))
    if not ws:
        raise D.SequenceFormatError("no test windows: sequences too short or no test data")
    return select_samples(ws, cfg.eval.sample_cap, cfg.eval.seed)


# -- commands --------------------------------------------------------------

def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args, cfg: RunConfig) -> int:
    ws = training_windows(cfg)
    out = _out_dir(args)
    params, curve = train(ws, cfg.model, cfg.train, out_dir=out)
    print(f"trained {len(curve)} steps on {len(ws)} windows; final loss {curve[-1]['loss_total']:.4f}")
    print(f"checkpoint: {out / 'model.json'}, {out / 'model.bin'}; loss curve: {out / 'loss.csv'}")
    return EXIT_OK


def cmd_predict(args, cfg: RunConfig) -> int:
    if args.checkpoint is None or args.input is None:
        raise ConfigError("predict needs --checkpoint and --input")
    params, mcfg, _ = load_checkpoint(args.checkpoint)
    seq = D.load_sequence(args.input)
    if 3 * seq.v != mcfg.k:
        raise D.SequenceFormatError(f"{args.input}: {3 * seq.v} channels, checkpoint expects {mcfg.k}")
    n = ms_to_frames(args.horizon_ms, seq.fps)
    frames = fsgn_predictor(params, mcfg)(seq.frames, n) if n > 0 else np.zeros((0, mcfg.k))
    out = _out_dir(args) / (Path(args.input).stem + ".pred.txt")
    D.save_sequence(out, D.SkeletonSequence(seq.fps, seq.v, frames))
    print(f"wrote {n} frames to {out}")
    return EXIT_OK


def _baseline_reports(cfg, samples, fps):
    if not cfg.eval.baselines:
        return []
    return [
        evaluate(zero_velocity_predictor, samples, fps, cfg.eval.horizons_ms, "zero-velocity", 0, cfg.eval.cumulative),
        evaluate(constant_velocity_predictor, samples, fps, cfg.eval.horizons_ms, "constant-velocity", 0,
                 cfg.eval.cumulative),
    ]


def _emit(reports: list[EvalReport], path: Path) -> None:
    write_report_csv(path, reports)
    print(format_table(reports))
    print(f"report: {path}")


def cmd_eval(args, cfg: RunConfig) -> int:
    if args.checkpoint is None:
        raise ConfigError("eval needs --checkpoint")
    params, mcfg, _ = load_checkpoint(args.checkpoint)
    fps = _fps(cfg)
    samples = test_windows(cfg, mcfg.t_in)
    reports = [evaluate(fsgn_predictor(params, mcfg), samples, fps, cfg.eval.horizons_ms, "FSGN",
                        param_count(mcfg), cfg.eval.cumulative)]
    reports += _baseline_reports(cfg, samples, fps)
    _emit(reports, _out_dir(args) / "report.csv")
    return EXIT_OK


def cmd_ablate(args, cfg: RunConfig) -> int:
    axis = args.axis
    if axis not in AXES:
        raise ConfigError(f"unknown ablation axis {axis!r}; valid axes: {', '.join(AXES)}")
    grid = cfg.ablation.get(axis, DEFAULT_GRIDS[axis])
    grid = [tuple(g) if isinstance(g, list) else g for g in grid]
    configs = ablation_configs(axis, grid, cfg.model)
    t_max = max(c.t_in for _, c in configs)
    t_out_max = max(c.t_out for _, c in configs)
    obs = cfg.data.t_obs or t_max
    train_pairs, _ = _split_sequences(cfg)
    train_ws = _windows(train_pairs, obs, t_out_max, cfg.data.stride)
    if not train_ws:
        raise D.SequenceFormatError("no training windows for the ablation grid")
    test_ws = test_windows(RunConfig(cfg.model, cfg.train, _with_t_obs(cfg.data, obs), cfg.eval,
                                     cfg.ablation, cfg.base_dir), t_max)
    fps = _fps(cfg)
    reports = run_ablation(axis, grid, cfg.model, train_ws, test_ws, fps, cfg.eval.horizons_ms, cfg.train,
                           on_report=lambda r: print(f"  {r.predictor}: {r.mpjpe_mm[-1]:.1f} mm", flush=True))
    _emit(reports, _out_dir(args) / f"ablation_{axis}.csv")
    return EXIT_OK


def _with_t_obs(dc: DataConfig, t_obs: int) -> DataConfig:
    d = asdict(dc)
    d["t_obs"] = t_obs
    return DataConfig(**d)


def cmd_param_count(args, cfg: RunConfig) -> int:
    n = param_count(cfg.model)
    print(f"{n} ({n / 1e6:.2f}M)")
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    base = dict(cfg.data.synthetic or {})
    overrides = {"v": args.joints, "fps": args.fps, "T": args.frames, "n_harmonics": args.harmonics}
    base.update({k: v for k, v in overrides.items() if v is not None})
    base["n_sequences"] = args.n
    spec, n, _, seed = _synth_spec(base)
    if args.seed is not None:
        seed = args.seed
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            D.save_sequence(out / f"synth_{i:03d}.txt", D.synth_motion(spec, seed + i))
    except OSError as exc:
        raise D.SequenceFormatError(f"cannot write to {out}: {exc}") from exc
    print(f"wrote {n} sequences to {out}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "param-count": cmd_param_count,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common.add_argument("--config", default=None, help="JSON run config; omitted keys use the defaults (t_in=50, t_out=10, lambda=0.8, n_s=1, n_t=20, alpha_v=alpha_a=1, k=66)")
    common.add_argument("--seed", type=int, default=None, help="override train.seed and eval.seed")
    common.add_argument("--out", default="runs", help="output directory")
    common.add_argument("--threads", type=int, default=None, help="gradient workers, 0 = all cores")

    parser = argparse.ArgumentParser(prog="fsgn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter
    sub.add_parser("train", parents=[common], formatter_class=fmt,
                   help="train a model; writes model.json, model.bin, loss.csv")
    p = sub.add_parser("predict", parents=[common], formatter_class=fmt, help="roll out a future sequence")
    p.add_argument("--checkpoint", default=None, help="directory holding model.json/model.bin")
    p.add_argument("--input", default=None, help="observed sequence file")
    p.add_argument("--horizon-ms", type=float, default=1000.0, help="forecast length in milliseconds")
    p = sub.add_parser("eval", parents=[common], formatter_class=fmt, help="MPJPE report vs baselines")
    p.add_argument("--checkpoint", default=None, help="directory holding model.json/model.bin")
    p = sub.add_parser("ablate", parents=[common], formatter_class=fmt, help="train/evaluate an ablation grid")
    p.add_argument("axis", help=f"one of: {', '.join(AXES)}")
    sub.add_parser("param-count", parents=[common], formatter_class=fmt, help="print the parameter count")
    p = sub.add_parser("synth", parents=[common], formatter_class=fmt, help="write synthetic sequences")
    p.add_argument("--n", type=int, default=1, help="number of sequences")
    p.add_argument("--joints", type=int, default=None, help="joint count (default 8)")
    p.add_argument("--fps", type=int, default=None, help="frame rate (default 25)")
    p.add_argument("--frames", type=int, default=None, help="frames per sequence (default 200)")
    p.add_argument("--harmonics", type=int, default=None, help="sinusoids per channel (default 3)")
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    tc = cfg.train
    if args.seed is not None:
        tc = replace(tc, seed=args.seed)
        cfg.eval = replace(cfg.eval, seed=args.seed)
    if args.threads is not None:
        tc = replace(tc, threads=args.threads or (os.cpu_count() or 1))
    cfg.train = tc
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"fsgn {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, D.SequenceFormatError, FileNotFoundError, OSError) as exc:
        print(f"fsgn {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"fsgn {args.command}: numeric failure [{exc.stage}]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"fsgn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
