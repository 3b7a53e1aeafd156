import numpy as np
import pytest
import scipy.linalg
from scipy.optimize import bisect

from netlspi import oracle
from netlspi.plant_models import AugmentedSystem
from netlspi.tasks import pendulum_task, point_mass_task


def scalar(a=0.5, b=1.0, q=1.0, r=1.0):
    return AugmentedSystem(A=[[a]], B=[[b]], Q=[[q]], R=[[r]], m=0)


def scalar_fixed_point(a, b, q, r, gamma):
    f = lambda p: q + gamma * a * a * p - (gamma * a * b * p) ** 2 / (r + gamma * b * b * p) - p
    return bisect(f, q, 100 * q, xtol=1e-15)


def dare(system, gamma):
    g = np.sqrt(gamma)
    return scipy.linalg.solve_discrete_are(g * system.A, g * system.B, system.Q, system.R)


class TestScalar:
    def test_hand_value(self):
        sol = oracle.solve_discounted_riccati(scalar(), 1.0)
        by_formula = (0.25 + np.sqrt(4.0625)) / 2
        assert sol.P[0, 0] == pytest.approx(scalar_fixed_point(0.5, 1, 1, 1, 1.0), abs=1e-9)
        assert sol.P[0, 0] == pytest.approx(by_formula, abs=1e-9)
        assert sol.P[0, 0] == pytest.approx(1.13278, abs=1e-5)

    @pytest.mark.parametrize("gamma", [0.3, 0.7, 0.99])
    def test_discounted(self, gamma):
        sol = oracle.solve_discounted_riccati(scalar(1.2, 0.5, 2.0, 0.5), gamma)
        assert sol.P[0, 0] == pytest.approx(scalar_fixed_point(1.2, 0.5, 2.0, 0.5, gamma), rel=1e-9)

    def test_memoryless(self):
        sys = AugmentedSystem(A=np.zeros((2, 2)), B=np.ones((2, 1)), Q=np.diag([1.0, 2.0]),
                              R=np.eye(1), m=1)
        P1 = next(oracle.riccati_iterates(sys, 0.9))
        np.testing.assert_array_equal(P1, sys.Q)
        np.testing.assert_array_equal(oracle.solve_discounted_riccati(sys, 0.9).P, sys.Q)


@pytest.mark.parametrize("make", [point_mass_task, pendulum_task])
class TestBenchmarkSystems:
    def test_residual_and_dare(self, make):
        sys = make(seed=0).system
        sol = oracle.solve_discounted_riccati(sys, 0.99)
        assert sol.residual <= 1e-10
        assert oracle.bellman_residual(sys, sol.P, 0.99) <= 1e-10
        P_ref = dare(sys, 0.99)
        np.testing.assert_allclose(sol.P, P_ref, rtol=1e-6, atol=1e-8 * np.abs(P_ref).max())

    def test_gain_forms_agree(self, make):
        sys = make(seed=1).system
        sol = oracle.solve_discounted_riccati(sys, 0.99)
        H = oracle.q_matrix(sys, sol.P, 0.99)
        n_p = sys.n_prime
        W_h = -np.linalg.solve(H[n_p:, n_p:], H[n_p:, :n_p])
        np.testing.assert_allclose(sol.W_star, W_h, rtol=0, atol=1e-10)

    def test_policy_value_fixed_point(self, make):
        sys = make(seed=2).system
        sol = oracle.solve_discounted_riccati(sys, 0.99)
        P_W = oracle.evaluate_policy_value(sys, sol.W_star, 0.99)
        np.testing.assert_allclose(P_W, sol.P, rtol=1e-7, atol=1e-8 * np.abs(sol.P).max())

    def test_scale_invariance(self, make):
        task = make(seed=3)
        sys = task.system
        scaled = AugmentedSystem(A=sys.A, B=sys.B, Q=3.0 * sys.Q, R=3.0 * sys.R, m=sys.m, dt=sys.dt)
        a = oracle.solve_discounted_riccati(sys, 0.99)
        b = oracle.solve_discounted_riccati(scaled, 0.99)
        np.testing.assert_allclose(b.W_star, a.W_star, atol=1e-8)
        np.testing.assert_allclose(b.P, 3.0 * a.P, rtol=1e-7, atol=1e-8 * np.abs(b.P).max())


def test_iteration_monotone(pm_task):
    sys = pm_task.system
    P = np.array(sys.Q)
    for i, P_next in enumerate(oracle.riccati_iterates(sys, 0.99)):
        assert np.linalg.eigvalsh(P_next - P).min() >= -1e-9 * np.abs(P_next).max()
        P = P_next
        if i > 300:
            break


def test_network_activity_damped(pm_task):
    sol = oracle.solve_discounted_riccati(pm_task.system, 0.99, tol=1e-6)
    W_x = sol.W_star[:, 4:]
    # the x-block of the closed loop contracts network activity
    assert np.all(np.diag(W_x) < 0)
    Acl = pm_task.system.A + pm_task.system.B @ sol.W_star
    assert np.max(np.abs(np.linalg.eigvals(Acl))) < 1


class TestPolicyEvaluation:
    def test_memoryless_zero_policy(self):
        sys = AugmentedSystem(A=np.zeros((2, 2)), B=np.ones((2, 1)), Q=np.diag([1.0, 2.0]),
                              R=np.eye(1), m=1)
        np.testing.assert_allclose(oracle.evaluate_policy_value(sys, np.zeros((1, 2)), 0.9), sys.Q)

    def test_unstable_pendulum(self, pend_task):
        with pytest.raises(oracle.UnstableClosedLoopError):
            oracle.evaluate_policy_value(pend_task.system, np.zeros((10, 14)), 0.99)

    def test_matches_series(self):
        sys = scalar(0.5, 1.0, 1.0, 1.0)
        W, g = np.array([[-0.2]]), 0.9
        acl = 0.3
        expected = (1 + 0.04) / (1 - g * acl**2)
        assert oracle.evaluate_policy_value(sys, W, g)[0, 0] == pytest.approx(expected, rel=1e-12)


class TestExactQ:
    def test_origin(self, pm_task):
        P = np.eye(14)
        assert oracle.exact_q(pm_task.system, P, 0.9, np.zeros(14), np.zeros(10)) == 0.0

    def test_undiscounted_is_cost(self, pm_task, rng):
        sys = pm_task.system
        omega, u = rng.standard_normal(14), rng.standard_normal(10)
        c = omega @ sys.Q @ omega + u @ sys.R @ u
        assert oracle.exact_q(sys, np.eye(14), 0.0, omega, u) == pytest.approx(c, rel=1e-14)

    def test_bellman_and_h_forms_agree(self, pm_task, rng):
        sys = pm_task.system
        W = 0.1 * rng.standard_normal((10, 14))
        W = oracle.solve_discounted_riccati(sys, 0.99).W_star + 0.01 * W
        P_W = oracle.evaluate_policy_value(sys, W, 0.99)
        H = oracle.q_matrix(sys, P_W, 0.99)
        for _ in range(20):
            omega, u = rng.standard_normal(14), rng.standard_normal(10)
            z = np.concatenate([omega, u])
            bellman = oracle.exact_q(sys, P_W, 0.99, omega, u)
            assert z @ H @ z == pytest.approx(bellman, rel=1e-10)


def test_gamma_domain(pm_task):
    with pytest.raises(ValueError):
        oracle.solve_discounted_riccati(pm_task.system, 0.0)
    with pytest.raises(ValueError):
        oracle.solve_discounted_riccati(pm_task.system, 1.5)


def test_non_convergence():
    # unstabilizable: B = 0 with an unstable A
    sys = AugmentedSystem(A=[[2.0]], B=[[0.0]], Q=[[1.0]], R=[[1.0]], m=0)
    with pytest.raises(oracle.RiccatiConvergenceError):
        oracle.solve_discounted_riccati(sys, 1.0, max_iter=200)
