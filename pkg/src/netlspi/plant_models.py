"""Second-order linear plants and their augmented (plant + network) form.

A plant in this class evolves as

    psi_{t+1} = psi_t + C nu_t
    nu_{t+1}  = A_psi psi_t + A_nu nu_t + B_x x_t

where ``x`` is the activity of an ``n``-unit network integrating its input,
``x_{t+1} = x_t + dt u_t``.  Stacking ``omega = [psi; nu; x]`` gives a single
linear system ``omega_{t+1} = A omega_t + B u_t`` in which the learner poses a
discounted LQR problem.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from netlspi.seeding import derive_rng

LESION_TIMINGS = ("before", "during", "after")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PlantDynamics:
    """True plant matrices; hidden from the learner."""

    A_psi: np.ndarray
    A_nu: np.ndarray
    B_x: np.ndarray
    C: np.ndarray
    dt: float

    def __post_init__(self):
        for name in ("A_psi", "A_nu", "B_x", "C"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        m, n = self.B_x.shape
        for name in ("A_psi", "A_nu", "C"):
            if getattr(self, name).shape != (m, m):
                raise ValueError(f"{name} must be {m}x{m}, got {getattr(self, name).shape}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not n > m:
            raise ValueError(f"network size n={n} must exceed plant dimension m={m}")

    @property
    def m(self) -> int:
        return self.B_x.shape[0]

    @property
    def n(self) -> int:
        return self.B_x.shape[1]


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    m: int
    dt: float = field(default=1.0)

    def __post_init__(self):
        for name in ("A", "B", "Q", "R"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n(self) -> int:
        return self.B.shape[1]

    @property
    def n_prime(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class LesionSpec:
    """``n_f`` functioning units; lesion applied before, during (after ``k1``
    episodes) or after learning."""

    n_f: int
    when: str = "before"
    k1: int = 5

    def __post_init__(self):
        if self.n_f < 0:
            raise ValueError("n_f must be non-negative")
        if self.when not in LESION_TIMINGS:
            raise ValueError(f"lesion timing must be one of {LESION_TIMINGS}, got {self.when!r}")
        if self.when == "during" and self.k1 < 1:
            raise ValueError("k1 must be >= 1 for a lesion during learning")


def build_augmented(plant: PlantDynamics, Q_plant, S, R) -> AugmentedSystem:
    """Assemble ``A``, ``B`` and the block-diagonal penalty ``Q = diag(Q_plant, S)``."""
    m, n = plant.m, plant.n
    Q_plant = np.atleast_2d(np.asarray(Q_plant, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if Q_plant.shape != (2 * m, 2 * m):
        raise ValueError(f"Q_plant must be {2 * m}x{2 * m}, got {Q_plant.shape}")
    if S.shape != (n, n) or R.shape != (n, n):
        raise ValueError(f"S and R must be {n}x{n}, got {S.shape} and {R.shape}")
    for name, M in (("Q_plant", Q_plant), ("S", S), ("R", R)):
        if not np.allclose(M, M.T):
            raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(R).min() <= 0:
        raise ValueError("R must be positive definite")

    I_m, I_n = np.eye(m), np.eye(n)
    A = np.block(
        [
            [I_m, plant.C, np.zeros((m, n))],
            [plant.A_psi, plant.A_nu, plant.B_x],
            [np.zeros((n, 2 * m)), I_n],
        ]
    )
    B = np.vstack([np.zeros((2 * m, n)), plant.dt * I_n])
    Q = np.zeros((2 * m + n, 2 * m + n))
    Q[: 2 * m, : 2 * m] = Q_plant
    Q[2 * m :, 2 * m :] = S
    return AugmentedSystem(A=A, B=B, Q=Q, R=R, m=m, dt=plant.dt)


def extract_plant(system: AugmentedSystem) -> PlantDynamics:
    """Inverse of the dynamics part of :func:`build_augmented`."""
    m = system.m
    A = system.A
    return PlantDynamics(
        A_psi=A[m : 2 * m, :m],
        A_nu=A[m : 2 * m, m : 2 * m],
        B_x=A[m : 2 * m, 2 * m :],
        C=A[:m, m : 2 * m],
        dt=system.dt,
    )


def split_state(omega, m: int):
    """Return views ``(psi, nu, x)`` of an augmented state."""
    omega = np.asarray(omega)
    return omega[:m], omega[m : 2 * m], omega[2 * m :]


def make_state(psi, nu, x) -> np.ndarray:
    return np.concatenate([np.ravel(psi), np.ravel(nu), np.ravel(x)]).astype(float)


def make_point_mass(n: int = 10, seed: int = 0, *, dt: float = 0.1, lambda_v: float = 0.25,
                    target=(1.0, 0.0)):
    """Planar unit point mass driven by an ``n``-unit network.

    ``b`` has entries uniform on [0, 1) drawn from the ``"plant"`` stream of
    ``seed``.  Returns ``(plant, target)``.
    """
    m = 2
    if n <= m:
        raise ValueError(f"network size must exceed {m}, got {n}")
    b = derive_rng(seed, "plant").uniform(0.0, 1.0, size=(m, n))
    plant = PlantDynamics(
        A_psi=np.zeros((m, m)),
        A_nu=(1.0 - dt * lambda_v) * np.eye(m),
        B_x=dt * b,
        C=dt * np.eye(m),
        dt=dt,
    )
    return plant, np.array(target, dtype=float)


def pendulum_blocks(*, mass=0.2, length=0.3, inertia=0.006, cart_mass=0.5, friction=0.1,
                    gravity=9.8, dt=0.1):
    """Linearized cart-pendulum coefficients around the upright equilibrium.

    Returns ``(A_psi, A_nu, control_gain)`` where ``control_gain`` is the
    2-vector multiplying ``b @ x`` in the ``[v, omega]`` rows.  Psi is
    ``[p, theta]`` and nu is ``[v, omega]``.
    """
    den = inertia * (cart_mass + mass) + cart_mass * mass * length**2
    ml = mass * length
    A_psi = dt / den * np.array(
        [
            [0.0, mass**2 * gravity * length**2],
            [0.0, ml * gravity * (cart_mass + mass)],
        ]
    )
    # rows follow the v and omega equations of motion; the omega row picks up
    # cart friction through -m l b_fric v
    A_nu = np.eye(2) + dt / den * np.array(
        [
            [-(inertia + mass * length**2) * friction, 0.0],
            [-ml * friction, 0.0],
        ]
    )
    gain = dt / den * np.array([inertia + mass * length**2, ml])
    return A_psi, A_nu, gain


def make_pendulum(n: int = 10, seed: int = 0, *, dt: float = 0.1, mass: float = 0.2,
                  length: float = 0.3, inertia: float = 0.006, cart_mass: float = 0.5,
                  friction: float = 0.1, gravity: float = 9.8) -> PlantDynamics:
    """Inverted pendulum on a cart, linearized, actuated through a 1 x n ``b``."""
    m = 2
    if n <= m:
        raise ValueError(f"network size must exceed {m}, got {n}")
    b = derive_rng(seed, "plant").uniform(0.0, 1.0, size=(1, n))
    A_psi, A_nu, gain = pendulum_blocks(
        mass=mass, length=length, inertia=inertia, cart_mass=cart_mass,
        friction=friction, gravity=gravity, dt=dt,
    )
    return PlantDynamics(A_psi=A_psi, A_nu=A_nu, B_x=gain[:, None] * b,
                         C=dt * np.eye(m), dt=dt)


def apply_lesion(plant: PlantDynamics, n_f: int) -> PlantDynamics:
    """Silence units ``n_f .. n-1``: their columns of ``B_x`` become zero."""
    if not 0 <= n_f <= plant.n:
        raise ValueError(f"n_f must lie in [0, {plant.n}], got {n_f}")
    B_x = np.array(plant.B_x)
    B_x[:, n_f:] = 0.0
    return replace(plant, B_x=B_x)


def lesioned_columns_zero(system: AugmentedSystem, n_f: int) -> bool:
    m = system.m
    return not np.any(system.A[m : 2 * m, 2 * m + n_f :])


def step(system: AugmentedSystem, omega, u):
    """One transition: ``(A omega + B u, omega'Q omega + u'R u)``."""
    omega = np.asarray(omega, dtype=float)
    u = np.asarray(u, dtype=float)
    if omega.shape != (system.n_prime,) or u.shape != (system.n,):
        raise ValueError(
            f"expected omega of length {system.n_prime} and u of length {system.n}, "
            f"got {omega.shape} and {u.shape}"
        )
    cost = float(omega @ system.Q @ omega + u @ system.R @ u)
    return system.A @ omega + system.B @ u, cost
