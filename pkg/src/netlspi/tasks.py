"""The two benchmark tasks: point-mass navigation and cart-pendulum balancing.

The point mass is simulated in target-shifted coordinates (position error
``p - p_T``), so both tasks are regulation to the origin; ``offset`` maps
simulated positions back to the plane.
"""

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from netlspi import oracle
from netlspi.adaptation import AdaptationConfig, perturbed_gain
from netlspi.plant_models import (
    AugmentedSystem,
    PlantDynamics,
    apply_lesion,
    build_augmented,
    make_pendulum,
    make_point_mass,
)
from netlspi.seeding import derive_rng

POSITION_TOLERANCE = 0.05
ANGLE_TOLERANCE = 0.01


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray   # (steps + 1, n')
    us: np.ndarray       # (steps, n)
    costs: np.ndarray    # (steps,)

    @property
    def diverged(self) -> bool:
        return not np.all(np.isfinite(self.states))


@dataclass(frozen=True, eq=False)
class Task:
    name: str
    plant: PlantDynamics
    Q_plant: np.ndarray
    S: np.ndarray
    R: np.ndarray
    initial_state: np.ndarray
    horizon: int
    offset: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @cached_property
    def system(self) -> AugmentedSystem:
        return build_augmented(self.plant, self.Q_plant, self.S, self.R)

    def with_plant(self, plant: PlantDynamics) -> "Task":
        return replace(self, plant=plant)

    def lesioned(self, n_f: int) -> "Task":
        return self.with_plant(apply_lesion(self.plant, n_f))

    def success(self, traj: Trajectory) -> bool:
        if traj.diverged:
            return False
        psi = traj.states[-1, : self.plant.m]
        if self.name == "pendulum":
            return bool(abs(psi[1]) < ANGLE_TOLERANCE)
        return bool(np.linalg.norm(psi) < POSITION_TOLERANCE)

    def positions(self, traj: Trajectory) -> np.ndarray:
        return traj.states[:, : self.plant.m] + self.offset


def _diag(values, m: int) -> np.ndarray:
    values = np.broadcast_to(np.asarray(values, dtype=float), (m,))
    return np.diag(values)


def point_mass_task(n: int = 10, seed: int = 0, *, dt: float = 0.1, lambda_v: float = 0.25,
                    target=(1.0, 0.0), position=10.0, velocity=0.0, s: float = 2.0,
                    r: float = 2.0, horizon: int = 500) -> Task:
    plant, p_T = make_point_mass(n, seed, dt=dt, lambda_v=lambda_v, target=target)
    Q_plant = np.zeros((4, 4))
    Q_plant[:2, :2] = _diag(position, 2)
    Q_plant[2:, 2:] = _diag(velocity, 2)
    start = np.zeros(4 + n)
    start[:2] = -p_T  # origin of the plane, expressed as position error
    return Task("point_mass", plant, Q_plant, s * np.eye(n), r * np.eye(n), start, horizon,
                offset=p_T)


def pendulum_task(n: int = 10, seed: int = 0, *, dt: float = 0.1, mass: float = 0.2,
                  length: float = 0.3, inertia: float = 0.006, cart_mass: float = 0.5,
                  friction: float = 0.1, gravity: float = 9.8, theta0: float = 0.1,
                  position=(1.0, 10.0), velocity=(1.0, 10.0), s: float = 2.0, r: float = 2.0,
                  horizon: int = 400) -> Task:
    plant = make_pendulum(n, seed, dt=dt, mass=mass, length=length, inertia=inertia,
                          cart_mass=cart_mass, friction=friction, gravity=gravity)
    Q_plant = np.zeros((4, 4))
    Q_plant[:2, :2] = _diag(position, 2)  # rho_p, rho_theta
    Q_plant[2:, 2:] = _diag(velocity, 2)  # rho_v, rho_omega
    start = np.zeros(4 + n)
    start[1] = theta0
    return Task("pendulum", plant, Q_plant, s * np.eye(n), r * np.eye(n), start, horizon)


def make_task(name: str, **kw) -> Task:
    if name == "point_mass":
        return point_mass_task(**kw)
    if name == "pendulum":
        return pendulum_task(**kw)
    raise ValueError(f"unknown system {name!r}")


def rollout(system: AugmentedSystem, W, initial, steps: int) -> Trajectory:
    """Noise-free closed-loop simulation; stops filling once the state blows up."""
    W = np.asarray(W, dtype=float)
    states = np.full((steps + 1, system.n_prime), np.nan)
    us = np.full((steps, system.n), np.nan)
    costs = np.full(steps, np.nan)
    omega = np.array(initial, dtype=float)
    states[0] = omega
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(steps):
            u = W @ omega
            us[t] = u
            costs[t] = omega @ system.Q @ omega + u @ system.R @ u
            omega = system.A @ omega + system.B @ u
            states[t + 1] = omega
            if not np.all(np.isfinite(omega)):
                break
    return Trajectory(states, us, costs)


def initial_policy(task: Task, cfg: AdaptationConfig, kind: str = "zero",
                   perturbation: float = 0.2, seed: int | None = None,
                   max_tries: int = 1000) -> np.ndarray:
    """Starting feedback matrix.

    ``"zero"`` is the zero matrix.  ``"oracle"`` perturbs every entry of the
    exact discounted-LQR gain of ``task`` by a relative factor drawn uniformly
    from ``[-perturbation, perturbation]`` (``"w0"`` stream of ``seed``).
    Draws whose closed loop is not Schur-stable are rejected and redrawn
    from the same stream.  Plain Schur stability implies the sqrt(gamma)
    condition and also keeps the undiscounted data-collecting episodes
    bounded, which the sqrt(gamma) condition alone does not for small gamma.
    """
    n, n_prime = task.system.n, task.system.n_prime
    if kind == "zero":
        return np.zeros((n, n_prime))
    if kind == "oracle":
        W_star = oracle.solve_discounted_riccati(task.system, cfg.gamma).W_star
        rng = derive_rng(cfg.seed if seed is None else seed, "w0")
        for _ in range(max_tries):
            W0 = perturbed_gain(W_star, perturbation, rng)
            if oracle.closed_loop_radius(task.system, W0) < 1.0:
                return W0
        raise RuntimeError(f"no stabilizing perturbation found in {max_tries} draws")
    raise ValueError(f"unknown initial policy kind {kind!r}")
