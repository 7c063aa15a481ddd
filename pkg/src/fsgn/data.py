"""Skeleton sequence files, windowing, synthetic motion and naive baselines."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class SequenceFormatError(ValueError):
    """Base class for malformed sequence files."""


class HeaderError(SequenceFormatError):
    pass


class RaggedRowError(SequenceFormatError):
    pass


class NonFiniteError(SequenceFormatError):
    pass


@dataclass
class SkeletonSequence:
    """``frames`` is ``(T, 3 * v)`` in millimetres, joint-major (x1, y1, z1, x2, ...)."""

    fps: int
    v: int
    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64).reshape(-1, 3 * self.v)
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if not np.all(np.isfinite(self.frames)):
            raise NonFiniteError("sequence contains NaN or Inf")

    def __len__(self) -> int:
        return self.frames.shape[0]

    def select_joints(self, joints) -> "SkeletonSequence":
        """Keep the listed joint indices, in the given order."""
        cols = np.asarray([[3 * j, 3 * j + 1, 3 * j + 2] for j in joints], dtype=int).ravel()
        return SkeletonSequence(self.fps, len(joints), self.frames[:, cols])

    def downsample(self, factor: int) -> "SkeletonSequence":
        """Keep every ``factor``-th frame, e.g. 2 for 50 Hz -> 25 Hz."""
        if self.fps % factor:
            raise ValueError(f"fps {self.fps} is not divisible by {factor}")
        return SkeletonSequence(self.fps // factor, self.v, self.frames[::factor])


@dataclass
class WindowSample:
    observed: np.ndarray
    future: np.ndarray
    label: str | None = None


_HEADER = re.compile(r"^#\s*fps=(\d+)\s+joints=(\d+)\s+dims=(\d+)\s+frames=(\d+)\s*$")


def load_sequence(path) -> SkeletonSequence:
    """Parse the comma-separated sequence format (see README)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise HeaderError(f"{path}: empty file")
    m = _HEADER.match(lines[0].strip())
    if m is None:
        raise HeaderError(f"{path}: bad header {lines[0]!r}")
    fps, joints, dims, n_frames = map(int, m.groups())
    if dims != 3:
        raise HeaderError(f"{path}: dims must be 3, got {dims}")
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n_frames:
        raise HeaderError(f"{path}: header announces {n_frames} frames, found {len(body)}")
    width = 3 * joints
    frames = np.empty((n_frames, width))
    for i, ln in enumerate(body):
        cells = ln.split(",")
        if len(cells) != width:
            raise RaggedRowError(f"{path}: row {i + 1} has {len(cells)} values, expected {width}")
        try:
            frames[i] = [float(c) for c in cells]
        except ValueError as exc:
            raise SequenceFormatError(f"{path}: row {i + 1}: {exc}") from exc
    if not np.all(np.isfinite(frames)):
        raise NonFiniteError(f"{path}: NaN or Inf value")
    return SkeletonSequence(fps, joints, frames)


def save_sequence(path, seq: SkeletonSequence) -> None:
    frames = seq.frames
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# fps={seq.fps} joints={seq.v} dims=3 frames={frames.shape[0]}\n")
        for row in frames:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def make_windows(seq, t_obs: int, horizon: int, stride: int = 1, label: str | None = None) -> list[WindowSample]:
    """Adjacent observed/future windows at offsets 0, stride, 2 * stride, ..."""
    frames = seq.frames if isinstance(seq, SkeletonSequence) else np.asarray(seq)
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    span = t_obs + horizon
    return [
        WindowSample(frames[s:s + t_obs], frames[s + t_obs:s + span], label)
        for s in range(0, frames.shape[0] - span + 1, stride)
    ]


@dataclass(frozen=True)
class SynthSpec:
    """Sum-of-sinusoids motion: amplitudes in mm, frequencies in Hz."""

    v: int = 8
    fps: int = 25
    T: int = 200
    n_harmonics: int = 3
    amp_range: tuple[float, float] = (50.0, 300.0)
    freq_range: tuple[float, float] = (0.2, 1.5)
    offset_range: tuple[float, float] = (-500.0, 500.0)


@dataclass
class SynthMotion:
    """Closed-form parameters of a synthetic sequence; evaluates any frame."""

    spec: SynthSpec
    offset: np.ndarray  # (K,)
    amp: np.ndarray  # (H, K)
    freq: np.ndarray  # (H, K)
    phase: np.ndarray  # (H, K)

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)[:, None, None]
        arg = 2 * np.pi * self.freq * t / self.spec.fps + self.phase
        return self.offset + (self.amp * np.sin(arg)).sum(axis=1)

    def sequence(self, start: int = 0, length: int | None = None) -> SkeletonSequence:
        length = self.spec.T if length is None else length
        return SkeletonSequence(self.spec.fps, self.spec.v, self.at(np.arange(start, start + length)))


def synth_model(spec: SynthSpec, seed: int) -> SynthMotion:
    rng = np.random.default_rng(seed)
    k = 3 * spec.v
    h = spec.n_harmonics
    offset = rng.uniform(*spec.offset_range, size=k)
    amp = rng.uniform(*spec.amp_range, size=(h, k))
    freq = rng.uniform(*spec.freq_range, size=(h, k))
    phase = rng.uniform(0.0, 2 * np.pi, size=(h, k))
    return SynthMotion(spec, offset, amp, freq, phase)


def synth_motion(spec: SynthSpec, seed: int) -> SkeletonSequence:
    """Seeded synthetic sequence; ``synth_model(spec, seed).at(t)`` continues it exactly."""
    if spec.T < 1:
        raise ValueError(f"T must be >= 1, got {spec.T}")
    return synth_model(spec, seed).sequence()


def baseline_zero_velocity(observed: np.ndarray, horizon: int) -> np.ndarray:
    """Repeat the last observed frame ``horizon`` times."""
    observed = np.asarray(observed, dtype=np.float64)
    if observed.shape[-2] == 0:
        raise ValueError("empty observation")
    return np.repeat(observed[..., -1:, :], horizon, axis=-2)


def baseline_constant_velocity(observed: np.ndarray, horizon: int) -> np.ndarray:
    """Extrapolate the last frame with the last frame-to-frame velocity."""
    observed = np.asarray(observed, dtype=np.float64)
    if observed.shape[-2] < 2:
        raise ValueError("constant-velocity baseline needs at least 2 observed frames")
    last = observed[..., -1:, :]
    vel = last - observed[..., -2:-1, :]
    steps = np.arange(1, horizon + 1, dtype=np.float64)[:, None]
    return last + steps * vel


def synthetic_corpus(n_sequences: int = 20, spec: SynthSpec | None = None, seed: int = 0) -> list[SkeletonSequence]:
    """``n_sequences`` independent synthetic sequences with seeds ``seed, seed + 1, ...``."""
    spec = spec or SynthSpec()
    return [synth_motion(spec, seed + i) for i in range(n_sequences)]


def load_corpus(patterns, base_dir=".", joints=None, downsample: int = 1,
                label_regex: str | None = r"^([^_.]+)") -> list[tuple[SkeletonSequence, str | None]]:
    """Load every file matching the glob ``patterns`` (relative to ``base_dir``).

    ``joints`` optionally selects joint indices, ``downsample`` keeps every
    n-th frame and ``label_regex`` (group 1, matched on the file name)
    assigns an activity label.
    """
    base = Path(base_dir)
    paths = sorted({p for pat in patterns for p in base.glob(pat) if p.is_file()})
    if not paths:
        raise FileNotFoundError(f"no sequence files match {list(patterns)} under {base}")
    rx = re.compile(label_regex) if label_regex else None
    out = []
    for p in paths:
        seq = load_sequence(p)
        if joints is not None:
            seq = seq.select_joints(joints)
        if downsample > 1:
            seq = seq.downsample(downsample)
        label = None
        if rx is not None:
            m = rx.search(p.name)
            label = m.group(1) if m else None
        out.append((seq, label))
    return out
