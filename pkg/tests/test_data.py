import numpy as np
import pytest

from fsgn.data import (HeaderError, NonFiniteError, RaggedRowError, SkeletonSequence, SynthSpec,
                       baseline_constant_velocity, baseline_zero_velocity, load_corpus, load_sequence,
                       make_windows, save_sequence, synth_model, synth_motion)
from fsgn.numeric import dct
from fsgn.training import mpjpe


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_two_frames(tmp_path):
    row = ",".join(str(i) for i in range(66))
    seq = load_sequence(write(tmp_path / "a.txt", f"# fps=25 joints=22 dims=3 frames=2\n{row}\n{row}\n"))
    assert seq.fps == 25 and seq.v == 22 and seq.frames.shape == (2, 66)
    np.testing.assert_array_equal(seq.frames[1], np.arange(66))


def test_load_accepts_scientific(tmp_path):
    seq = load_sequence(write(tmp_path / "a.txt", "# fps=30 joints=1 dims=3 frames=1\n1e3,-2.5E-1,0\n"))
    np.testing.assert_array_equal(seq.frames, [[1000.0, -0.25, 0.0]])


@pytest.mark.parametrize("text, err", [
    ("# fps=25 joints=22 dims=3 frames=1\n" + ",".join(["1"] * 65) + "\n", RaggedRowError),
    ("fps=25 joints=1 dims=3 frames=1\n1,2,3\n", HeaderError),
    ("# fps=25 joints=1 dims=2 frames=1\n1,2\n", HeaderError),
    ("# fps=25 joints=1 dims=3 frames=2\n1,2,3\n", HeaderError),
    ("# fps=25 joints=1 dims=3 frames=1\n1,nan,3\n", NonFiniteError),
    ("# fps=25 joints=1 dims=3 frames=1\n1,inf,3\n", NonFiniteError),
    ("", HeaderError),
])
def test_load_errors(tmp_path, text, err):
    with pytest.raises(err):
        load_sequence(write(tmp_path / "bad.txt", text))


def test_save_load_roundtrip_is_bit_exact(tmp_path, rng):
    seq = SkeletonSequence(25, 4, rng.normal(size=(7, 12)) * 1e3)
    save_sequence(tmp_path / "s.txt", seq)
    back = load_sequence(tmp_path / "s.txt")
    assert back.fps == 25 and back.v == 4
    np.testing.assert_array_equal(back.frames, seq.frames)


def test_save_empty_body(tmp_path):
    save_sequence(tmp_path / "e.txt", SkeletonSequence(25, 2, np.zeros((0, 6))))
    assert (tmp_path / "e.txt").read_text() == "# fps=25 joints=2 dims=3 frames=0\n"
    assert load_sequence(tmp_path / "e.txt").frames.shape == (0, 6)


@pytest.mark.parametrize("t, count", [(75, 1), (77, 3), (10, 0)])
def test_make_windows_counts(t, count):
    frames = np.arange(t * 3, dtype=float).reshape(t, 3)
    ws = make_windows(SkeletonSequence(25, 1, frames), 50, 25, 1)
    assert len(ws) == count
    for s, w in enumerate(ws):
        assert w.observed.shape == (50, 3) and w.future.shape == (25, 3)
        np.testing.assert_array_equal(np.vstack([w.observed, w.future]), frames[s:s + 75])


def test_make_windows_stride():
    frames = np.arange(100 * 3, dtype=float).reshape(100, 3)
    ws = make_windows(frames, 10, 5, stride=20)
    assert [w.observed[0, 0] / 3 for w in ws] == [0, 20, 40, 60, 80]


def test_select_joints_and_downsample():
    frames = np.arange(4 * 9, dtype=float).reshape(4, 9)
    seq = SkeletonSequence(50, 3, frames)
    sub = seq.select_joints([2, 0])
    np.testing.assert_array_equal(sub.frames[0], [6, 7, 8, 0, 1, 2])
    ds = seq.downsample(2)
    assert ds.fps == 25 and len(ds) == 2
    np.testing.assert_array_equal(ds.frames, frames[::2])


def test_synth_constant_when_no_harmonics():
    seq = synth_motion(SynthSpec(v=3, T=40, n_harmonics=0), 1)
    np.testing.assert_array_equal(seq.frames, np.tile(seq.frames[0], (40, 1)))
    zv = baseline_zero_velocity(seq.frames[:30], 10)
    assert mpjpe(zv, seq.frames[30:]) == 0.0


def test_synth_deterministic_and_seed_sensitive():
    spec = SynthSpec(v=2, T=30)
    np.testing.assert_array_equal(synth_motion(spec, 4).frames, synth_motion(spec, 4).frames)
    for s in range(10):
        assert not np.array_equal(synth_motion(spec, s).frames, synth_motion(spec, s + 100).frames)


def test_synth_continuation_is_analytic():
    spec = SynthSpec(v=2, T=60)
    model = synth_model(spec, 9)
    np.testing.assert_allclose(model.sequence(start=50, length=10).frames, synth_motion(spec, 9).frames[50:],
                               atol=1e-9)


def test_single_harmonic_energy_is_low_frequency():
    # one full 2 s period at 25 fps; 99.9 % of the centred energy sits in the first 10 of 50 coefficients
    spec = SynthSpec(v=1, fps=25, T=50, n_harmonics=1, freq_range=(0.5, 0.5))
    frames = synth_motion(spec, 3).frames
    c = dct(frames - frames.mean(axis=0))
    share = (c[:10] ** 2).sum(axis=0) / (c ** 2).sum(axis=0)
    assert np.all(share > 0.998)


def test_zero_velocity_baseline(rng):
    obs = rng.normal(size=(5, 6))
    out = baseline_zero_velocity(obs, 4)
    assert out.shape == (4, 6)
    np.testing.assert_array_equal(out, np.tile(obs[-1], (4, 1)))
    with pytest.raises(ValueError):
        baseline_zero_velocity(np.zeros((0, 6)), 3)


def test_zero_velocity_error_on_ramp_grows_linearly():
    v = np.array([3.0, 4.0, 0.0])
    ramp = np.outer(np.arange(40), v)
    obs, fut = ramp[:30], ramp[30:]
    pred = baseline_zero_velocity(obs, 10)
    for h in range(1, 11):
        # errors are 1|v|, 2|v|, ..., h|v| -> mean (h + 1) / 2 * |v|
        assert mpjpe(pred[:h], fut[:h]) == pytest.approx((h + 1) / 2 * 5.0)


def test_constant_velocity_baseline(rng):
    v = rng.normal(size=6)
    ramp = np.outer(np.arange(20), v) + rng.normal(size=6)
    np.testing.assert_allclose(baseline_constant_velocity(ramp[:15], 5), ramp[15:], atol=1e-12)
    const = np.tile(rng.normal(size=6), (5, 1))
    np.testing.assert_array_equal(baseline_constant_velocity(const, 3), baseline_zero_velocity(const, 3))
    with pytest.raises(ValueError):
        baseline_constant_velocity(np.zeros((1, 6)), 2)


def test_constant_velocity_against_sinusoid_oracle():
    spec = SynthSpec(v=1, fps=25, T=40, n_harmonics=1)
    model = synth_model(spec, 2)
    obs = model.sequence(0, 30).frames
    truth = model.at(np.arange(30, 40))
    pred = baseline_constant_velocity(obs, 10)
    # closed-form: x(29) + h * (x(29) - x(28))
    x29, x28 = model.at([29])[0], model.at([28])[0]
    expected = x29 + np.arange(1, 11)[:, None] * (x29 - x28)
    np.testing.assert_allclose(pred, expected, atol=1e-9)
    assert mpjpe(pred, truth) > 1.0


def test_load_corpus(tmp_path):
    spec = SynthSpec(v=2, T=20)
    for name in ("walking_1.txt", "eating_2.txt"):
        save_sequence(tmp_path / name, synth_motion(spec, len(name)))
    pairs = load_corpus(["*.txt"], tmp_path, joints=[1], downsample=1)
    assert [lab for _, lab in pairs] == ["eating", "walking"]
    assert pairs[0][0].frames.shape == (20, 3)
    with pytest.raises(FileNotFoundError):
        load_corpus(["nothing/*.txt"], tmp_path)
