import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netlspi.network import ExplorationConfig, act, act_explore, advance_network, split_gain
from netlspi.plant_models import step
from netlspi.seeding import derive_rng, episode_rng
from netlspi.tasks import point_mass_task


def _matvec(W, x):
    return [sum(w * v for w, v in zip(row, x)) for row in W]


def test_zero_policy():
    assert not np.any(act(np.zeros((3, 7)), np.arange(7.0)))


def test_selector_policy():
    m, n = 2, 3
    W = np.hstack([np.zeros((n, 2 * m)), np.eye(n)])
    omega = np.array([1, 2, 3, 4, 5, 6, 7.0])
    np.testing.assert_array_equal(act(W, omega), [5, 6, 7])


def test_matches_reference_matvec():
    r = derive_rng(3, "test")
    W, omega = r.standard_normal((2, 5)), r.standard_normal(5)
    np.testing.assert_allclose(act(W, omega), _matvec(W, omega), rtol=1e-14)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        act(np.zeros((2, 5)), np.zeros(4))


def test_noiseless_explore_equals_act():
    r = np.random.default_rng(0)
    W, omega = r.standard_normal((4, 8)), r.standard_normal(8)
    np.testing.assert_array_equal(act_explore(W, omega, 0.0, np.random.default_rng(1)), act(W, omega))


def test_explore_reproducible():
    W, omega = np.ones((3, 5)), np.ones(5)
    a = act_explore(W, omega, 0.01, episode_rng(7, "adapt", 2))
    b = act_explore(W, omega, 0.01, episode_rng(7, "adapt", 2))
    c = act_explore(W, omega, 0.01, episode_rng(7, "adapt", 3))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_noise_statistics():
    N = 100_000
    rng = np.random.default_rng(2024)
    eps = np.array([act_explore(np.zeros((1, 1)), np.zeros(1), 0.01, rng)[0] for _ in range(N)])
    sigma = 0.1
    assert abs(eps.mean()) < 3 * sigma / np.sqrt(N)
    assert eps.var(ddof=1) == pytest.approx(0.01, rel=0.05)


def test_stream_alignment_independent_of_variance():
    # the same normals are drawn regardless of sigma, so noise scales exactly
    W, omega = np.zeros((4, 6)), np.zeros(6)
    a = act_explore(W, omega, 0.01, np.random.default_rng(5))
    b = act_explore(W, omega, 0.04, np.random.default_rng(5))
    np.testing.assert_allclose(b, 2 * a, rtol=1e-14)


def test_exploration_config():
    with pytest.raises(ValueError):
        ExplorationConfig(sigma_y2=-1)
    a = ExplorationConfig(seed=4).stream("explore", 1).standard_normal(3)
    b = derive_rng(4, "explore", 1).standard_normal(3)
    np.testing.assert_array_equal(a, b)


class TestAdvance:
    def test_origin(self):
        np.testing.assert_array_equal(advance_network(np.zeros(3), np.zeros(3), 0.1), np.zeros(3))

    def test_arithmetic(self):
        np.testing.assert_allclose(advance_network([1.0], [2.0], 0.1), [1.2], rtol=1e-15)

    @given(st.integers(1, 200), st.floats(-5, 5), st.floats(-5, 5))
    @settings(max_examples=30, deadline=None)
    def test_telescoping(self, T, x0, u):
        x = np.array([x0])
        for _ in range(T):
            x = advance_network(x, [u], 0.1)
        assert x[0] == pytest.approx(x0 + T * 0.1 * u, abs=1e-9)

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            advance_network([0.0], [0.0], 0.0)


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3))
@settings(max_examples=25, deadline=None)
def test_act_linear(seed, c):
    r = np.random.default_rng(seed)
    W = r.standard_normal((3, 6))
    a, b = r.standard_normal((2, 6))
    np.testing.assert_allclose(act(W, a + c * b), act(W, a) + c * act(W, b), atol=1e-10)


def test_two_timescale_consistency():
    task = point_mass_task(n=5, seed=2)
    sys, m = task.system, 2
    r = np.random.default_rng(8)
    W, omega = r.standard_normal((5, 9)), r.standard_normal(9)
    u = act(W, omega)
    nxt, _ = step(sys, omega, u)
    W_psi, W_nu, W_x = split_gain(W, m)
    psi, nu, x = omega[:m], omega[m : 2 * m], omega[2 * m :]
    expected_x = x + sys.dt * (W_psi @ psi + W_nu @ nu + W_x @ x)
    np.testing.assert_allclose(nxt[2 * m :], expected_x, rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(nxt[2 * m :], advance_network(x, u, sys.dt), rtol=0, atol=0)
