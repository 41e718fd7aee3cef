"""Adam update rule, gradient checker, and snapshot round-trips."""

import numpy as np
import pytest

from sarb.autodiff import Var, backward
from sarb.gradcheck import grad_check
from sarb.optim import Adam
from sarb.serialize import load_arrays, save_arrays


def test_adam_first_step_matches_hand_evaluation():
    # with grad=1 everywhere, bias correction gives m_hat = v_hat = 1,
    # so the first update is -lr/(1 + eps)
    p = Var(np.zeros(3), trainable=True)
    opt = Adam({"p": p}, lr=1e-5, weight_decay=0.0)
    p.grad[...] = 1.0
    opt.step()
    np.testing.assert_allclose(p.data, np.full(3, -1e-5), atol=1e-12)
    assert opt.t == 1


def test_adam_zero_gradient_is_identity():
    start = np.array([0.3, -0.7])
    p = Var(start.copy(), trainable=True)
    opt = Adam({"p": p}, lr=0.1, weight_decay=0.0)
    for _ in range(3):
        opt.step()
    np.testing.assert_array_equal(p.data, start)


def test_adam_zero_lr_is_identity():
    p = Var(np.ones(4), trainable=True)
    opt = Adam({"p": p}, lr=0.0, weight_decay=0.5)
    p.grad[...] = 2.0
    opt.step()
    np.testing.assert_array_equal(p.data, np.ones(4))


def test_adam_empty_parameter_set_is_noop():
    opt = Adam({})
    opt.step()
    assert opt.t == 1


def test_adam_decoupled_weight_decay_and_exemptions():
    p = Var(np.full(2, 2.0), trainable=True)
    q = Var(np.full(2, 2.0), trainable=True)
    opt = Adam({"p": p, "q": q}, lr=0.1, weight_decay=0.5, no_decay=("q",))
    opt.step()  # zero gradients: only decay acts
    np.testing.assert_allclose(p.data, np.full(2, 2.0 * (1 - 0.1 * 0.5)))
    np.testing.assert_array_equal(q.data, np.full(2, 2.0))


def test_adam_lr_scale_per_parameter():
    p = Var(np.zeros(1), trainable=True)
    q = Var(np.zeros(1), trainable=True)
    opt = Adam({"p": p, "q": q}, lr=1e-3, weight_decay=0.0, lr_scale={"q": 0.1})
    p.grad[...] = 1.0
    q.grad[...] = 1.0
    opt.step()
    assert p.data[0] == pytest.approx(-1e-3, rel=1e-6)
    assert q.data[0] == pytest.approx(-1e-4, rel=1e-6)


def test_adam_state_roundtrip(tmp_path):
    p = Var(np.zeros(3), trainable=True)
    opt = Adam({"p": p}, lr=0.01)
    p.grad[...] = 1.0
    opt.step()
    save_arrays(tmp_path / "state.bin", opt.state_arrays())
    opt2 = Adam({"p": p}, lr=0.01)
    opt2.load_state_arrays(load_arrays(tmp_path / "state.bin"))
    assert opt2.t == 1
    np.testing.assert_array_equal(opt2.m["p"], opt.m["p"])
    np.testing.assert_array_equal(opt2.v["p"], opt.v["p"])


# -- gradient checker -----------------------------------------------------


def test_grad_check_quadratic_is_tight():
    x = Var(np.array([1.0, -2.0, 0.5]), trainable=True)
    report = grad_check(lambda: (x * x).sum(), {"x": x}, tolerance=1e-6)
    assert report.max_rel_error < 1e-6
    assert report.passed


def test_grad_check_unused_parameter_gradient_is_zero():
    x = Var(np.ones(2), trainable=True)
    unused = Var(np.ones(2), trainable=True)
    report = grad_check(lambda: (x * x).sum(), {"x": x, "unused": unused})
    assert report.per_param["unused"] == 0.0
    backward((x * x).sum())
    np.testing.assert_array_equal(unused.grad, np.zeros(2))


def test_grad_check_detects_wrong_gradient():
    x = Var(np.array([0.7]), trainable=True)

    def build():
        # sabotage: gradient of x**3 is checked against a loss of x**2
        y = x * x
        return y.sum()

    report = grad_check(build, {"x": x}, tolerance=1e-6)
    assert report.passed
    x.grad[...] = 123.0  # stale garbage must not leak into the check
    report = grad_check(build, {"x": x}, tolerance=1e-6)
    assert report.passed


# -- snapshot format -------------------------------------------------------


def test_snapshot_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {
        "csrl.queries": rng.standard_normal((5, 8)),
        "clf.linear_bias": rng.standard_normal(5),
        "adam.t": np.array([3.0]),
    }
    path = tmp_path / "snap.bin"
    save_arrays(path, arrays)
    loaded = load_arrays(path)
    assert set(loaded) == set(arrays)
    for name in arrays:
        np.testing.assert_array_equal(loaded[name], arrays[name])


def test_snapshot_header(tmp_path):
    path = tmp_path / "snap.bin"
    save_arrays(path, {"x": np.zeros(2)})
    raw = path.read_bytes()
    assert raw[:4] == b"SARB"
    assert int.from_bytes(raw[4:8], "little") == 1


def test_snapshot_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        load_arrays(path)
