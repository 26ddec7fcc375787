import numpy as np
import pytest

from mixpro.optim import OptimizerState, adamw_step, lr_at_step


def test_first_step_is_signed_lr():
    p = [np.zeros(4)]
    g = [np.array([0.3, -2.0, 1e-3, -7.0])]
    st = OptimizerState(lr=0.01, weight_decay=0.0)
    adamw_step(p, g, st)
    expected = -0.01 * g[0] / (np.abs(g[0]) + 1e-8)
    np.testing.assert_allclose(p[0], expected, rtol=1e-12)
    np.testing.assert_allclose(p[0], -0.01 * np.sign(g[0]), rtol=1e-4)
    assert st.t == 1


def test_zero_gradient_no_decay_is_noop():
    theta = np.array([1.0, -2.0])
    p = [theta.copy()]
    adamw_step(p, [np.zeros(2)], OptimizerState(lr=0.1, weight_decay=0.0))
    np.testing.assert_array_equal(p[0], theta)


def test_decay_only_step():
    theta = np.array([1.0, -2.0, 0.5])
    p = [theta.copy()]
    adamw_step(p, [np.zeros(3)], OptimizerState(lr=0.1, weight_decay=0.05))
    np.testing.assert_allclose(p[0], theta * (1 - 0.1 * 0.05), rtol=1e-15)


def test_decay_is_decoupled_from_moments():
    st = OptimizerState(lr=0.1, weight_decay=0.5)
    p = [np.array([3.0])]
    adamw_step(p, [np.zeros(1)], st)
    assert st.m[0][0] == 0.0 and st.v[0][0] == 0.0


def test_decay_mask_exempts():
    p = [np.array([1.0]), np.array([1.0])]
    adamw_step(p, [None, None], OptimizerState(lr=0.1, weight_decay=0.5), [True, False])
    assert p[0][0] == pytest.approx(0.95) and p[1][0] == 1.0


def test_step_counter_and_shapes(rng):
    st = OptimizerState()
    p = [rng.standard_normal((2, 3)), rng.standard_normal(5)]
    for k in range(1, 4):
        adamw_step(p, [rng.standard_normal((2, 3)), rng.standard_normal(5)], st)
        assert st.t == k
    assert [m.shape for m in st.m] == [(2, 3), (5,)]
    with pytest.raises(ValueError):
        adamw_step(p, [np.zeros((3, 2)), np.zeros(5)], st)


def test_deterministic(rng):
    p0 = [rng.standard_normal(10)]
    grads = [[rng.standard_normal(10)] for _ in range(5)]
    outs = []
    for _ in range(2):
        p, st = [p0[0].copy()], OptimizerState()
        for g in grads:
            adamw_step(p, g, st)
        outs.append(p[0].tobytes())
    assert outs[0] == outs[1]


def test_matches_reference_loop(rng):
    """Compare against a scalar transcription of the AdamW update."""
    theta, m, v = 0.7, 0.0, 0.0
    lr, b1, b2, eps, wd = 0.01, 0.9, 0.999, 1e-8, 0.05
    p, st = [np.array([theta])], OptimizerState(lr=lr, weight_decay=wd)
    for t in range(1, 6):
        g = float(rng.standard_normal())
        adamw_step(p, [np.array([g])], st)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta * (1 - lr * wd) - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        assert p[0][0] == pytest.approx(theta, rel=1e-13)


class TestSchedule:
    def test_endpoints(self):
        assert lr_at_step(10, 10, 100, 1e-3, 1e-5) == pytest.approx(1e-3, rel=1e-15)
        assert lr_at_step(100, 10, 100, 1e-3, 1e-5) == pytest.approx(1e-5, rel=1e-12)
        assert lr_at_step(0, 10, 100, 1e-3, 1e-5) == 0.0

    def test_cosine_midpoint(self):
        assert lr_at_step(55, 10, 100, 1e-3, 1e-5) == pytest.approx((1e-3 + 1e-5) / 2, rel=1e-12)

    def test_linear_ramp(self):
        assert lr_at_step(5, 10, 100, 1e-3, 0.0) == pytest.approx(5e-4)

    def test_monotone_after_warmup(self):
        lrs = [lr_at_step(s, 10, 100, 1e-3, 1e-5) for s in range(10, 101)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    def test_bounds(self):
        with pytest.raises(ValueError):
            lr_at_step(101, 10, 100, 1e-3, 0.0)
        with pytest.raises(ValueError):
            lr_at_step(1, 100, 100, 1e-3, 0.0)
