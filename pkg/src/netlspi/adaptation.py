"""Slow timescale: episodic least-squares policy iteration.

Each episode runs the current feedback matrix with Gaussian exploration,
fits the Q-function of that matrix from the episode alone, and switches to
the greedy gain of the fit before the next episode starts.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from netlspi import oracle as _oracle
from netlspi.network import act_explore
from netlspi.plant_models import AugmentedSystem
from netlspi.seeding import episode_rng
from netlspi.value_estimation import (
    EpisodeData,
    EstimationError,
    ValueEstimate,
    estimate_theta,
    improve_policy,
)

logger = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, t: int, norm: float, guard: float):
        self.t, self.norm, self.guard = t, norm, guard
        super().__init__(f"state norm {norm:.3e} exceeded guard {guard:.1e} at step {t}")


class AdaptationFailure(RuntimeError):
    """An episode diverged or its estimate was unusable.

    ``kind`` is ``"divergence"`` or ``"estimation"``; ``history`` holds every
    record up to and including the failed episode.
    """

    def __init__(self, kind: str, episode: int, history: "AdaptationHistory", cause: Exception):
        self.kind, self.episode, self.history = kind, episode, history
        super().__init__(f"{kind} failure in episode {episode}: {cause}")


@dataclass(frozen=True, eq=False)
class AdaptationConfig:
    T: int = 500
    gamma: float = 0.99
    sigma_y2: float = 0.01
    tol: float = 1e-3
    max_episodes: int = 50
    seed: int = 0
    divergence_guard: float = 1e6
    symmetric_features: bool = False
    cond_max: float = 1e8
    run_id: str = "adapt"

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("episode length T must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.sigma_y2 < 0:
            raise ValueError("sigma_y2 must be >= 0")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_episodes < 1:
            raise ValueError("max_episodes must be >= 1")


@dataclass(frozen=True, eq=False)
class EpisodeRecord:
    k: int
    W: np.ndarray           # policy that collected the episode
    W_next: np.ndarray | None
    H: np.ndarray | None
    h_delta: float          # ||H_k - H_{k-1}||_F
    xi: float               # ||W_next - W||_F
    episode_cost: float
    residual: float
    rank: int
    diverged: bool = False


@dataclass(eq=False)
class AdaptationHistory:
    records: list = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def xi(self) -> np.ndarray:
        return np.array([r.xi for r in self.records])

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.episode_cost for r in self.records])

    @property
    def final_policy(self):
        for r in reversed(self.records):
            if r.W_next is not None:
                return r.W_next
        return self.records[0].W if self.records else None

    def extend(self, other: "AdaptationHistory") -> "AdaptationHistory":
        return AdaptationHistory(self.records + other.records, other.converged)


def collect_episode(system: AugmentedSystem, W, cfg: AdaptationConfig, initial,
                    rng: np.random.Generator) -> EpisodeData:
    """Run ``cfg.T`` steps of ``u = W omega + eps`` and record the transitions."""
    W = np.asarray(W, dtype=float)
    A, B, Q, R = system.A, system.B, system.Q, system.R
    T, n_prime, n = cfg.T, system.n_prime, system.n
    omegas = np.empty((T, n_prime))
    us = np.empty((T, n))
    costs = np.empty(T)
    nxt = np.empty((T, n_prime))
    omega = np.array(initial, dtype=float)
    if omega.shape != (n_prime,):
        raise ValueError(f"initial state must have length {n_prime}")
    for t in range(T):
        u = act_explore(W, omega, cfg.sigma_y2, rng)
        omega_next = A @ omega + B @ u
        omegas[t], us[t], nxt[t] = omega, u, omega_next
        costs[t] = omega @ Q @ omega + u @ R @ u
        norm = np.max(np.abs(omega_next))
        if not norm <= cfg.divergence_guard:
            raise DivergenceError(t, float(norm), cfg.divergence_guard)
        omega = omega_next
    return EpisodeData(omegas=omegas, us=us, costs=costs, omegas_next=nxt)


def perturbed_gain(W, rel: float, rng: np.random.Generator) -> np.ndarray:
    """``W * (1 + rel * U[-1, 1])`` entrywise."""
    W = np.asarray(W, dtype=float)
    return W * (1.0 + rel * rng.uniform(-1.0, 1.0, size=W.shape))


def _relative_change(h_delta: float, H_norm: float) -> float:
    if H_norm > 0:
        return h_delta / H_norm
    return 0.0 if h_delta == 0 else np.inf


def run_adaptation(system: AugmentedSystem, cfg: AdaptationConfig, initial, W0=None, *,
                   first_episode: int = 1, H_prev=None, stop_on_convergence: bool = True,
                   max_episodes: int | None = None,
                   on_episode: Callable[[EpisodeRecord], None] | None = None):
    """Online least-squares approximate policy iteration.

    Parameters
    ----------
    initial : array or callable
        Initial state of every episode, or ``initial(k) -> state``.
    W0 : array, optional
        Starting policy; zeros if omitted.
    first_episode, H_prev :
        Continue an earlier run (episode numbering, noise streams and the
        stopping test pick up where it stopped).
    stop_on_convergence :
        If False, run exactly ``max_episodes`` episodes.

    Stops when ``||H_k - H_{k-1}||_F < tol * ||H_k||_F`` (with ``H_0 = 0`` on
    a fresh run) or after ``max_episodes`` episodes.

    Returns
    -------
    (W, history)
        The last improved policy and the per-episode records.

    Raises
    ------
    AdaptationFailure
        On divergence or estimation failure, with the partial history.
    """
    n, n_prime = system.n, system.n_prime
    W = np.zeros((n, n_prime)) if W0 is None else np.array(W0, dtype=float)
    if W.shape != (n, n_prime):
        raise ValueError(f"policy must be {n}x{n_prime}, got {W.shape}")
    H_prev = np.zeros((n_prime + n,) * 2) if H_prev is None else np.asarray(H_prev)
    draw = initial if callable(initial) else (lambda k: initial)
    budget = cfg.max_episodes if max_episodes is None else max_episodes
    history = AdaptationHistory()

    for k in range(first_episode, first_episode + budget):
        rng = episode_rng(cfg.seed, cfg.run_id, k)
        try:
            data = collect_episode(system, W, cfg, draw(k), rng)
            est = estimate_theta(data, W, cfg.gamma, symmetric=cfg.symmetric_features)
            W_next = improve_policy(est, cfg.cond_max)
        except (DivergenceError, EstimationError) as exc:
            kind = "divergence" if isinstance(exc, DivergenceError) else "estimation"
            history.records.append(EpisodeRecord(
                k=k, W=W, W_next=None, H=None, h_delta=np.nan, xi=np.nan,
                episode_cost=np.nan, residual=np.nan, rank=getattr(exc, "rank", -1),
                diverged=kind == "divergence",
            ))
            logger.info("episode %d failed: %s", k, exc)
            raise AdaptationFailure(kind, k, history, exc) from exc

        h_delta = float(np.linalg.norm(est.H - H_prev))
        rec = EpisodeRecord(
            k=k, W=W, W_next=W_next, H=est.H, h_delta=h_delta,
            xi=float(np.linalg.norm(W_next - W)), episode_cost=float(data.costs.sum()),
            residual=est.residual, rank=est.rank,
        )
        history.records.append(rec)
        if on_episode is not None:
            on_episode(rec)
        logger.debug("episode %d: h_delta=%.3e xi=%.3e cost=%.6g", k, h_delta, rec.xi,
                     rec.episode_cost)
        W, H_prev = W_next, est.H
        if stop_on_convergence and _relative_change(h_delta, np.linalg.norm(est.H)) < cfg.tol:
            history.converged = True
            break
    return W, history


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    xi: np.ndarray
    xi_ratios: np.ndarray
    epsilon: float | None = None
    bound: float | None = None
    value_gap: np.ndarray | None = None
    violations: int | None = None

    @property
    def max_value_gap(self):
        return None if self.value_gap is None else float(np.max(np.abs(self.value_gap)))


def sample_unit_states(n_prime: int, n_samples: int, seed: int) -> np.ndarray:
    X = np.random.default_rng(seed).standard_normal((n_samples, n_prime))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def convergence_diagnostics(history: AdaptationHistory, *, system: AugmentedSystem | None = None,
                            gamma: float | None = None,
                            oracle: "_oracle.RiccatiSolution | None" = None,
                            n_samples: int = 100, seed: int = 0) -> ConvergenceReport:
    """Empirical contraction ratios and, with an oracle, the value-error bound.

    ``xi_ratios[j] = xi_{j+2} / xi_{j+1}`` over successful episodes.  With an
    oracle, ``epsilon`` is the largest ``|Q_hat - Q_*|`` over ``n_samples``
    unit states paired with both the learned and the optimal action, and
    ``value_gap`` is ``V_pi - V_*`` on the same states; the bound is
    ``2 epsilon / (1 - gamma)``.
    """
    ok = [r for r in history.records if r.W_next is not None]
    if len(ok) < 2:
        raise ValueError("convergence diagnostics need at least two completed episodes")
    xi = np.array([r.xi for r in ok])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = xi[1:] / xi[:-1]
    if oracle is None:
        return ConvergenceReport(xi=xi, xi_ratios=ratios)
    if system is None or gamma is None:
        raise ValueError("system and gamma are required with an oracle")

    last = ok[-1]
    H_hat, W = last.H, last.W_next
    H_star, W_star = oracle.H_star.H, oracle.W_star
    states = sample_unit_states(system.n_prime, n_samples, seed)
    eps = 0.0
    for gain in (W, W_star):
        Z = np.hstack([states, states @ gain.T])
        diff = np.einsum("ti,ij,tj->t", Z, H_hat - H_star, Z)
        eps = max(eps, float(np.max(np.abs(diff))))
    bound = 2.0 * eps / (1.0 - gamma) if gamma < 1 else np.inf
    try:
        P_pi = _oracle.evaluate_policy_value(system, W, gamma)
        gap = np.einsum("ti,ij,tj->t", states, P_pi - oracle.P, states)
    except _oracle.UnstableClosedLoopError:
        gap = np.full(n_samples, np.inf)
    violations = int(np.sum(gap > bound))
    return ConvergenceReport(xi=xi, xi_ratios=ratios, epsilon=eps, bound=bound,
                             value_gap=gap, violations=violations)
