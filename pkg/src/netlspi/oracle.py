"""Known-dynamics ground truth for the discounted LQR problem.

Costs carry no 1/2 factor: ``c = omega'Q omega + u'R u`` and
``V(omega) = sum_i gamma^i c_{t+i} = omega' P omega``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from netlspi.plant_models import AugmentedSystem
from netlspi.value_estimation import ValueEstimate


class RiccatiConvergenceError(RuntimeError):
    pass


class UnstableClosedLoopError(RuntimeError):
    def __init__(self, radius: float, gamma: float):
        self.radius, self.gamma = radius, gamma
        super().__init__(
            f"closed loop spectral radius {radius:.6g} >= 1/sqrt(gamma) = "
            f"{1 / np.sqrt(gamma):.6g}; discounted value is infinite"
        )


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    P: np.ndarray
    W_star: np.ndarray
    H_star: ValueEstimate
    iterations: int
    residual: float


def riccati_map(system: AugmentedSystem, P, gamma: float) -> np.ndarray:
    A, B, Q, R = system.A, system.B, system.Q, system.R
    BtPA = B.T @ P @ A
    G = R + gamma * B.T @ P @ B
    out = Q + gamma * A.T @ P @ A - gamma**2 * BtPA.T @ np.linalg.solve(G, BtPA)
    return 0.5 * (out + out.T)


def riccati_iterates(system: AugmentedSystem, gamma: float, P0=None):
    """Yield ``P_1, P_2, ...`` of the value iteration started at ``P0 = Q``."""
    P = np.array(system.Q if P0 is None else P0, dtype=float)
    while True:
        P = riccati_map(system, P, gamma)
        yield P


def optimal_gain(system: AugmentedSystem, P, gamma: float) -> np.ndarray:
    A, B, R = system.A, system.B, system.R
    return -gamma * np.linalg.solve(R + gamma * B.T @ P @ B, B.T @ P @ A)


def q_matrix(system: AugmentedSystem, P, gamma: float) -> np.ndarray:
    """``H`` of the Q-function whose continuation value is ``omega'P omega``."""
    A, B, Q, R = system.A, system.B, system.Q, system.R
    H = np.block(
        [
            [Q + gamma * A.T @ P @ A, gamma * A.T @ P @ B],
            [gamma * B.T @ P @ A, R + gamma * B.T @ P @ B],
        ]
    )
    return 0.5 * (H + H.T)


def bellman_residual(system: AugmentedSystem, P, gamma: float) -> float:
    return float(np.linalg.norm(riccati_map(system, P, gamma) - P, 2))


def solve_discounted_riccati(system: AugmentedSystem, gamma: float, tol: float = 1e-10,
                             max_iter: int = 100_000) -> RiccatiSolution:
    """Fixed-point iteration on the discounted Riccati map from ``P0 = Q``.

    Stops once successive iterates differ by less than ``tol`` in spectral
    norm and the Bellman residual of the returned ``P`` is below ``tol``.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    P = np.array(system.Q, dtype=float)
    for i, P_next in enumerate(riccati_iterates(system, gamma), start=1):
        if not np.all(np.isfinite(P_next)):
            break
        delta = np.linalg.norm(P_next - P, 2)
        P = P_next
        if delta < tol:
            residual = bellman_residual(system, P, gamma)
            if residual < tol:
                W = optimal_gain(system, P, gamma)
                H = ValueEstimate.from_matrix(q_matrix(system, P, gamma), system.n_prime)
                return RiccatiSolution(P=P, W_star=W, H_star=H, iterations=i, residual=residual)
        if i >= max_iter:
            break
    raise RiccatiConvergenceError(
        f"discounted Riccati iteration did not converge within {max_iter} iterations "
        f"(gamma={gamma}); is (sqrt(gamma) A, B) stabilizable?"
    )


def closed_loop_radius(system: AugmentedSystem, W) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(system.A + system.B @ W))))


def evaluate_policy_value(system: AugmentedSystem, W, gamma: float) -> np.ndarray:
    """``P_W`` with ``P = Q + W'RW + gamma (A+BW)' P (A+BW)``."""
    W = np.asarray(W, dtype=float)
    Acl = system.A + system.B @ W
    radius = float(np.max(np.abs(np.linalg.eigvals(Acl))))
    if not np.sqrt(gamma) * radius < 1.0:
        raise UnstableClosedLoopError(radius, gamma)
    P = scipy.linalg.solve_discrete_lyapunov(np.sqrt(gamma) * Acl.T, system.Q + W.T @ system.R @ W)
    return 0.5 * (P + P.T)


def exact_q(system: AugmentedSystem, P_W, gamma: float, omega, u) -> float:
    """``c(omega, u) + gamma V(A omega + B u)`` for the policy whose value is ``P_W``."""
    omega = np.asarray(omega, dtype=float)
    u = np.asarray(u, dtype=float)
    nxt = system.A @ omega + system.B @ u
    cost = omega @ system.Q @ omega + u @ system.R @ u
    return float(cost + gamma * nxt @ P_W @ nxt)
