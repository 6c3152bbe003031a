import numpy as np
import pytest

from relalign.optim import AdamState, adam_step


def test_zero_gradient_leaves_params():
    state = AdamState((3,))
    p = np.array([1.0, -2.0, 0.5])
    adam_step(state, p, np.zeros(3))
    assert p.tolist() == [1.0, -2.0, 0.5]
    assert state.t == 1


def test_first_step_is_lr():
    # at t=1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    state = AdamState((1,), lr=0.01)
    p = np.array([0.0])
    adam_step(state, p, np.array([1.0]))
    assert p[0] == pytest.approx(-0.01 * 1.0 / (1.0 + 1e-8), rel=1e-12)


@pytest.mark.parametrize("g", [1e-3, 0.5, 7.0, -40.0, 1e4])
def test_first_step_scale_free(g):
    state = AdamState((1,), lr=0.01)
    p = np.array([0.0])
    adam_step(state, p, np.array([g]))
    assert abs(p[0]) == pytest.approx(0.01, rel=1e-5)
    assert np.sign(p[0]) == -np.sign(g)


def test_matches_hand_evaluated_second_step():
    state = AdamState((1,), lr=0.1)
    p = np.array([0.0])
    adam_step(state, p, np.array([2.0]))
    adam_step(state, p, np.array([-1.0]))
    m = 0.9 * (0.1 * 2.0) + 0.1 * -1.0
    v = 0.999 * (0.001 * 4.0) + 0.001 * 1.0
    m_hat, v_hat = m / (1 - 0.9**2), v / (1 - 0.999**2)
    expected = -0.1 * 2.0 / (2.0 + 1e-8) - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
    assert p[0] == pytest.approx(expected, rel=1e-12)


def test_minimizes_quadratic():
    state = AdamState((1,), lr=1e-2)
    x = np.array([1.0])
    for _ in range(2000):
        adam_step(state, x, 2 * x)
    assert abs(x[0]) < 1e-3


def test_deterministic():
    rng = np.random.default_rng(0)
    g = rng.standard_normal((4, 5))
    outs = []
    for _ in range(2):
        st = AdamState((4, 5))
        p = np.ones((4, 5))
        for k in range(3):
            adam_step(st, p, g * (k + 1))
        outs.append(p.tobytes())
    assert outs[0] == outs[1]


def test_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step(AdamState((2,)), np.zeros(3), np.zeros(3))


def test_non_finite_gradient_skipped(caplog):
    state = AdamState((2,))
    p = np.array([1.0, 1.0])
    adam_step(state, p, np.array([np.nan, 1.0]))
    assert p.tolist() == [1.0, 1.0]
    assert state.t == 0 and state.skipped == 1
    assert np.all(np.isfinite(state.m)) and np.all(np.isfinite(state.v))
    assert "non-finite" in caplog.text
