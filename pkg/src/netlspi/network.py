"""Fast timescale: the network's input and activity update.

A policy is a plain ``(n, n')`` array ``W``; its column blocks
``[W_psi | W_nu | W_x]`` say how plant positions, plant velocities and the
network's own activity drive each unit.
"""

from dataclasses import dataclass

import numpy as np

from netlspi.seeding import derive_rng


@dataclass(frozen=True)
class ExplorationConfig:
    sigma_y2: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.sigma_y2 < 0:
            raise ValueError(f"exploration variance must be >= 0, got {self.sigma_y2}")

    def stream(self, label: str = "explore", *extra: int) -> np.random.Generator:
        return derive_rng(self.seed, label, *extra)


def split_gain(W, m: int):
    """Column blocks ``(W_psi, W_nu, W_x)`` of a feedback matrix."""
    W = np.asarray(W)
    return W[:, :m], W[:, m : 2 * m], W[:, 2 * m :]


def act(W, omega) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if W.ndim != 2 or W.shape[1] != omega.shape[0]:
        raise ValueError(f"policy of shape {W.shape} cannot act on state of length {omega.shape[0]}")
    return W @ omega


def act_explore(W, omega, sigma_y2: float, rng: np.random.Generator) -> np.ndarray:
    """``W omega + eps`` with ``eps ~ N(0, sigma_y2 I)``.

    Always consumes exactly ``n`` standard normals from ``rng`` (even when
    ``sigma_y2 == 0``) so streams stay aligned across configurations.
    """
    u = act(W, omega)
    eps = rng.standard_normal(u.shape[0])
    return u + np.sqrt(sigma_y2) * eps


def advance_network(x, u, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError("dt must be positive")
    return np.asarray(x, dtype=float) + dt * np.asarray(u, dtype=float)
