import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsgn.data import WindowSample
from fsgn.model import ModelConfig, forward, init_params
from fsgn.training import (LOSS_CSV_HEADER, NumericError, OptimizerState, TrainConfig, adam_step, backward,
                           batch_gradient, frame_diff, n_updates, loss_fsgn, mpjpe, train, write_loss_csv)

TINY = ModelConfig(k=6, t_in=8, t_out=4, n_s=1, n_t=2)


def perturbed_params(cfg, seed=3, scale=0.3):
    p = init_params(cfg, seed)
    p.load_flat(p.flat() + np.random.default_rng(seed).normal(0, scale, p.size()))
    return p


def central_differences(p, cfg, x, y, h=1e-5):
    flat = p.flat()
    out = np.empty_like(flat)
    for i in range(flat.size):
        f = flat.copy()
        f[i] += h
        p.load_flat(f)
        up = backward(p, cfg, x, y)[0]
        f[i] -= 2 * h
        p.load_flat(f)
        down = backward(p, cfg, x, y)[0]
        out[i] = (up - down) / (2 * h)
    p.load_flat(flat)
    return out


def relative_error(a, n, floor=1e-8):
    denom = np.maximum(np.abs(a), np.abs(n))
    return np.where(denom < floor, 0.0, np.abs(a - n) / np.where(denom < floor, 1.0, denom))


def test_frame_diff():
    np.testing.assert_array_equal(frame_diff(np.ones((4, 3))), 0.0)
    v = np.array([1.0, -2.0, 0.5])
    ramp = np.outer(np.arange(4), v)
    np.testing.assert_array_equal(frame_diff(ramp), [0 * v, v, v, v])
    np.testing.assert_array_equal(frame_diff(frame_diff(ramp)), [0 * v, v, 0 * v, 0 * v])


def test_mpjpe_examples():
    x = np.random.default_rng(0).normal(size=(3, 6))
    assert mpjpe(x, x) == 0.0
    assert mpjpe(np.array([[3.0, 4.0, 0.0]]), np.zeros((1, 3)), 1) == 5.0
    assert mpjpe(np.tile([1.0, 0, 0], (2, 2)), np.zeros((2, 6)), 2) == 1.0
    with pytest.raises(ValueError):
        mpjpe(np.zeros((2, 6)), np.zeros((3, 6)))
    with pytest.raises(ValueError):
        mpjpe(np.zeros((2, 6)), np.zeros((2, 6)), 3)


def test_loss_examples(rng):
    y = rng.normal(size=(5, 6))
    assert loss_fsgn(y, y, TINY) == (0.0, {"L_p": 0.0, "L_v": 0.0, "L_a": 0.0})
    pred = rng.normal(size=(5, 6))
    cfg0 = ModelConfig(k=6, t_in=8, t_out=4, alpha_v=0.0, alpha_a=0.0)
    total, parts = loss_fsgn(pred, y, cfg0)
    assert total == parts["L_p"]
    shifted = y + np.tile([1.0, 0.0, 0.0], 2)
    for av, aa in [(0.0, 0.0), (1.0, 1.0), (2.0, 0.5)]:
        total, parts = loss_fsgn(shifted, y, ModelConfig(k=6, t_in=8, t_out=4, alpha_v=av, alpha_a=aa))
        assert parts["L_p"] == pytest.approx(1.0)
        assert parts["L_v"] == pytest.approx(0.0, abs=1e-12)
        assert parts["L_a"] == pytest.approx(0.0, abs=1e-12)
        assert total == pytest.approx(1.0)


def test_loss_decomposition(rng):
    cfg = ModelConfig(k=6, t_in=8, t_out=4, alpha_v=0.7, alpha_a=1.3)
    pred, target = rng.normal(size=(2, 5, 6))
    total, parts = loss_fsgn(pred, target, cfg)
    assert total == parts["L_p"] + 0.7 * parts["L_v"] + 1.3 * parts["L_a"]


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 10_000), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_loss_translation_invariance(seed, ox, oy, oz):
    rng = np.random.default_rng(seed)
    pred, target = rng.normal(size=(2, 5, 6)) * 50
    off = np.tile([ox, oy, oz], 2)
    _, a = loss_fsgn(pred, target, TINY)
    _, b = loss_fsgn(pred + off, target + off, TINY)
    for key in a:
        assert b[key] == pytest.approx(a[key], rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("block", ["improved", "no_ln", "traditional"])
@pytest.mark.parametrize("relative, use_dct", [(True, True), (False, True), (True, False)])
def test_gradients_match_finite_differences(block, relative, use_dct):
    cfg = ModelConfig(k=6, t_in=8, t_out=4, n_s=1, n_t=2, block=block, relative=relative, use_dct=use_dct)
    rng = np.random.default_rng(7)
    p = perturbed_params(cfg)
    x = rng.normal(size=(10, 6)) * 200
    y = x[-1] + rng.normal(size=(4, 6)) * 50
    _, _, g = backward(p, cfg, x, y)
    err = relative_error(g.flat(), central_differences(p, cfg, x, y))
    assert err.max() < 1e-4


def test_gradients_batched_equal_mean_of_samples(rng):
    p = perturbed_params(TINY)
    x = rng.normal(size=(3, 8, 6)) * 100
    y = rng.normal(size=(3, 4, 6)) * 100
    loss, _, g = backward(p, TINY, x, y)
    per = [backward(p, TINY, x[i], y[i]) for i in range(3)]
    assert loss == pytest.approx(np.mean([r[0] for r in per]))
    np.testing.assert_allclose(g.flat(), np.mean([r[2].flat() for r in per], axis=0), atol=1e-10)


def test_zero_gradient_at_exact_fit(rng):
    p = perturbed_params(TINY)
    x = rng.normal(size=(8, 6)) * 100
    y = forward(p, TINY, x)
    loss, _, g = backward(p, TINY, x, y)
    assert loss == 0.0
    np.testing.assert_array_equal(g.flat(), 0.0)


def test_gradient_scales_with_loss(rng):
    # scaling the data by c while dividing unit_scale by c leaves the network
    # inputs unchanged and multiplies the loss by c
    c = 3.0
    p = perturbed_params(TINY)
    x = rng.normal(size=(8, 6)) * 100
    y = rng.normal(size=(4, 6)) * 100
    cfg_c = ModelConfig(k=6, t_in=8, t_out=4, n_s=1, n_t=2, unit_scale=TINY.unit_scale / c)
    l1, _, g1 = backward(p, TINY, x, y)
    l2, _, g2 = backward(p, cfg_c, c * x, c * y)
    assert l2 == pytest.approx(c * l1, rel=1e-12)
    np.testing.assert_allclose(g2.flat(), c * g1.flat(), rtol=1e-9, atol=1e-12)


def test_non_finite_raises_with_stage(rng):
    p = init_params(TINY)
    p.spatial_enc[0].w[0, 0] = np.inf
    with pytest.raises(NumericError) as info:
        backward(p, TINY, rng.normal(size=(8, 6)), rng.normal(size=(4, 6)))
    assert info.value.stage == "encoder"


def test_adam_zero_gradient_keeps_params():
    p = init_params(TINY, 1)
    before = p.flat()
    adam_step(p, p.zeros_like(), OptimizerState.zeros(p), 1e-3)
    np.testing.assert_array_equal(p.flat(), before)


def test_adam_first_step_magnitude_is_lr():
    p = init_params(TINY, 1)
    before = p.flat()
    g = p.zeros_like()
    g.load_flat(np.full(p.size(), 0.37))
    state = OptimizerState.zeros(p)
    adam_step(p, g, state, 1e-3)
    # m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    np.testing.assert_allclose(before - p.flat(), 1e-3 * 0.37 / (0.37 + 1e-8), rtol=1e-12)
    assert state.step == 1


def test_adam_deterministic(rng):
    a, b = init_params(TINY, 2), init_params(TINY, 2)
    g = a.zeros_like()
    g.load_flat(rng.normal(size=a.size()))
    sa, sb = OptimizerState.zeros(a), OptimizerState.zeros(b)
    for _ in range(3):
        adam_step(a, g, sa, 1e-3)
        adam_step(b, g, sb, 1e-3)
    np.testing.assert_array_equal(a.flat(), b.flat())
    np.testing.assert_array_equal(sa.v.flat(), sb.v.flat())


def _toy_dataset(n, rng):
    t = np.arange(12)[:, None]
    out = []
    for _ in range(n):
        phase = rng.uniform(0, 6)
        seq = 200 * np.sin(0.3 * t + phase + np.arange(6)) + rng.normal(size=6) * 100
        out.append(WindowSample(seq[:8], seq[8:]))
    return out


def test_train_curve_length_and_csv(tmp_path, rng):
    data = _toy_dataset(10, rng)
    p, curve = train(data, TINY, TrainConfig(epochs=3, batch_size=4), out_dir=tmp_path)
    assert len(curve) == 3 * math.ceil(10 / 4)
    assert [r["step"] for r in curve] == list(range(1, 10))
    assert [r["epoch"] for r in curve] == [1, 1, 1, 2, 2, 2, 3, 3, 3]
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == ",".join(LOSS_CSV_HEADER)
    assert len(lines) == 10
    row = curve[0]
    assert row["loss_total"] == pytest.approx(row["loss_p"] + row["loss_v"] + row["loss_a"])
    assert (tmp_path / "model.bin").stat().st_size == 8 * p.size()


def test_train_deterministic(rng):
    data = _toy_dataset(9, rng)
    a, ca = train(data, TINY, TrainConfig(epochs=2, batch_size=4, seed=5))
    b, cb = train(data, TINY, TrainConfig(epochs=2, batch_size=4, seed=5))
    np.testing.assert_array_equal(a.flat(), b.flat())
    assert ca == cb


def test_threads_do_not_change_results(rng):
    x = rng.normal(size=(70, 8, 6)) * 100
    y = rng.normal(size=(70, 4, 6)) * 100
    p = perturbed_params(TINY)
    from concurrent.futures import ThreadPoolExecutor

    l1, _, g1 = batch_gradient(p, TINY, x, y)
    with ThreadPoolExecutor(3) as pool:
        l2, _, g2 = batch_gradient(p, TINY, x, y, pool)
    assert l1 == l2
    np.testing.assert_array_equal(g1.flat(), g2.flat())


def test_train_reduces_loss(rng):
    data = _toy_dataset(4, rng)
    _, curve = train(data, TINY, TrainConfig(epochs=300, batch_size=4, learning_rate=3e-5))
    assert curve[-1]["loss_total"] < 0.2 * curve[0]["loss_total"]


def test_update_budget():
    # ~687 batches of 256 per epoch for 80 epochs gives about 55k updates
    assert n_updates(687 * 256 - 100, 256, 80) == 54_960
    assert n_updates(10, 4, 3) == 9


def test_train_rejects_empty():
    with pytest.raises(ValueError):
        train([], TINY, TrainConfig(epochs=1))


def test_train_config_validation():
    for bad in (dict(epochs=0), dict(batch_size=0), dict(learning_rate=0.0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_grad_clip_bounds_norm(rng):
    from fsgn.training import clip_grad_norm

    p = init_params(TINY)
    g = p.zeros_like()
    g.load_flat(rng.normal(size=p.size()) * 10)
    clip_grad_norm(g, 1.0)
    assert np.linalg.norm(g.flat()) == pytest.approx(1.0, rel=1e-9)


def test_write_loss_csv(tmp_path):
    write_loss_csv(tmp_path / "l.csv", [{"step": 1, "epoch": 1, "loss_total": 1.5, "loss_p": 1.0,
                                         "loss_v": 0.25, "loss_a": 0.25}])
    assert (tmp_path / "l.csv").read_text().splitlines()[1] == "1,1,1.5,1.0,0.25,0.25"
