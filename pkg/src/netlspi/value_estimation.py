"""Quadratic state-action value functions fitted by least squares.

For a linear policy the Q-function is ``z' H z`` with ``z = [omega; u]``.
Writing it as ``theta . (z kron z)`` turns the Bellman equation along an
episode into a linear regression for ``theta = vec(H)``.
"""

from dataclasses import dataclass

import numpy as np


class EstimationError(RuntimeError):
    """Policy evaluation produced no usable estimate."""


class RankDeficientError(EstimationError):
    def __init__(self, rank: int, required: int, n_samples: int):
        self.rank, self.required, self.n_samples = rank, required, n_samples
        super().__init__(
            f"regression rank {rank} < {required} identifiable parameters "
            f"({n_samples} samples): episode too short or exploration too weak"
        )


class IllConditionedError(EstimationError):
    def __init__(self, cond: float, limit: float):
        self.cond, self.limit = cond, limit
        super().__init__(f"H22 condition number {cond:.3e} exceeds {limit:.1e}")


@dataclass(frozen=True, eq=False)
class EpisodeData:
    """Transitions of one episode, stacked row-wise.

    ``omegas[t], us[t], costs[t], omegas_next[t]`` is the ``t``-th tuple.
    """

    omegas: np.ndarray
    us: np.ndarray
    costs: np.ndarray
    omegas_next: np.ndarray

    def __post_init__(self):
        T = len(self.costs)
        if T < 1:
            raise ValueError("an episode needs at least one transition")
        if not (len(self.omegas) == len(self.us) == len(self.omegas_next) == T):
            raise ValueError("episode arrays must have equal length")
        if self.omegas.shape != self.omegas_next.shape:
            raise ValueError("state arrays disagree in dimension")

    def __len__(self):
        return len(self.costs)


@dataclass(frozen=True, eq=False)
class ValueEstimate:
    theta: np.ndarray
    H: np.ndarray
    n_prime: int
    residual: float = 0.0
    rank: int = -1

    @property
    def H11(self):
        return self.H[: self.n_prime, : self.n_prime]

    @property
    def H12(self):
        return self.H[: self.n_prime, self.n_prime :]

    @property
    def H21(self):
        return self.H[self.n_prime :, : self.n_prime]

    @property
    def H22(self):
        return self.H[self.n_prime :, self.n_prime :]

    def q(self, omega, u) -> float:
        z = np.concatenate([omega, u])
        return float(z @ self.H @ z)

    @classmethod
    def from_matrix(cls, H, n_prime: int, **kw) -> "ValueEstimate":
        H = np.asarray(H, dtype=float)
        return cls(theta=pack(H), H=H, n_prime=n_prime, **kw)


def n_params(d: int, symmetric: bool = False) -> int:
    return d * (d + 1) // 2 if symmetric else d * d


def pack(H) -> np.ndarray:
    return np.asarray(H, dtype=float).reshape(-1)


def unpack(theta, d: int) -> np.ndarray:
    """Matrix form of ``theta`` (row-major, matching ``z kron z``)."""
    return np.asarray(theta, dtype=float).reshape(d, d)


def symmetrize(H) -> np.ndarray:
    return 0.5 * (H + H.T)


def feature_phi(omega, u) -> np.ndarray:
    z = np.concatenate([np.ravel(omega), np.ravel(u)])
    return np.kron(z, z)


def _features(Z: np.ndarray, symmetric: bool) -> np.ndarray:
    """Row-wise ``z kron z`` (or its upper-triangle reduction) for a stack ``Z``."""
    outer = Z[:, :, None] * Z[:, None, :]
    if not symmetric:
        return outer.reshape(len(Z), -1)
    iu = np.triu_indices(Z.shape[1])
    scale = np.where(iu[0] == iu[1], 1.0, 2.0)
    return outer[:, iu[0], iu[1]] * scale


def regression_feature(omega, u, omega_next, W_eval, gamma: float) -> np.ndarray:
    """``phi(omega, u) - gamma phi(omega', W omega')`` for one transition."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    u_next = np.asarray(W_eval) @ omega_next
    return feature_phi(omega, u) - gamma * feature_phi(omega_next, u_next)


def regression_matrix(data: EpisodeData, W_eval, gamma: float, symmetric: bool = False):
    """Stacked regression features, one row per transition."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    Z = np.hstack([data.omegas, data.us])
    Z_next = np.hstack([data.omegas_next, data.omegas_next @ np.asarray(W_eval).T])
    return _features(Z, symmetric) - gamma * _features(Z_next, symmetric)


def estimate_theta(data: EpisodeData, W_eval, gamma: float, *, symmetric: bool = False,
                   rcond: float | None = None) -> ValueEstimate:
    """Least-squares fit of the Q-function of ``W_eval`` from one episode.

    Minimum-norm solution via SVD.  With the full Kronecker parameterization
    ``theta_ij`` and ``theta_ji`` multiply the same regressor, so only
    ``d(d+1)/2`` combinations are identifiable; the rank check is against
    that count in both parameterizations.  The min-norm solution splits each
    pair evenly, so ``H`` comes out symmetric; it is symmetrized anyway.

    Raises
    ------
    RankDeficientError
        If the data do not pin down every identifiable parameter.
    """
    n_prime = data.omegas.shape[1]
    d = n_prime + data.us.shape[1]
    Phi = regression_matrix(data, W_eval, gamma, symmetric)
    if rcond is None:
        rcond = np.finfo(float).eps * max(Phi.shape)
    theta, _, rank, _ = np.linalg.lstsq(Phi, data.costs, rcond=rcond)
    required = n_params(d, symmetric=True)
    if rank < required:
        raise RankDeficientError(int(rank), required, len(data))
    residual = float(np.linalg.norm(Phi @ theta - data.costs))

    if symmetric:
        H = np.zeros((d, d))
        iu = np.triu_indices(d)
        H[iu] = theta
        H = H + np.triu(H, 1).T
    else:
        H = symmetrize(unpack(theta, d))
    return ValueEstimate(theta=theta, H=H, n_prime=n_prime, residual=residual, rank=int(rank))


def improve_policy(estimate: ValueEstimate, cond_max: float = 1e8) -> np.ndarray:
    """Greedy gain ``W = -H22^{-1} H21``."""
    H22 = estimate.H22
    cond = np.linalg.cond(H22)
    if not cond <= cond_max:
        raise IllConditionedError(float(cond), cond_max)
    return -np.linalg.solve(H22, estimate.H21)
