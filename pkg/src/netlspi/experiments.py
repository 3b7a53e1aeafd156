"""Lesion-robustness and hyperparameter studies.

Every seed of every cell is an independent work item; ``jobs > 1`` fans
them out over processes and results come back in submission order, so the
output does not depend on the worker count.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from netlspi import oracle
from netlspi.adaptation import (
    AdaptationConfig,
    AdaptationFailure,
    AdaptationHistory,
    collect_episode,
    run_adaptation,
)
from netlspi.plant_models import LESION_TIMINGS, LesionSpec, lesioned_columns_zero
from netlspi.seeding import episode_rng
from netlspi.tasks import Task, initial_policy, make_task, rollout

logger = logging.getLogger(__name__)

SWEEP_KINDS = {"episode_length": "T", "discount": "gamma", "exploration": "sigma_y2"}
EARLY_STEPS = 25


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def policy_deviation(W_a, W_b, states):
    """Per-state ``||W_a w - W_b w||`` and the Frobenius gap ``||W_a - W_b||_F``."""
    D = np.asarray(W_a, dtype=float) - np.asarray(W_b, dtype=float)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    return np.linalg.norm(states @ D.T, axis=1), float(np.linalg.norm(D))


@dataclass(frozen=True, eq=False)
class TaskRecipe:
    """Picklable description of a task family; ``build(seed)`` draws one plant.

    With ``plant_seed`` set every seed gets that same plant, and the seed
    only selects the exploration noise.
    """

    system: str = "point_mass"
    params: dict = field(default_factory=dict)
    w0: str = "zero"
    w0_perturbation: float = 0.2
    plant_seed: int | None = None

    def build(self, seed: int) -> Task:
        return make_task(self.system, seed=seed if self.plant_seed is None else self.plant_seed,
                         **self.params)

    def start_policy(self, task: Task, cfg: AdaptationConfig) -> np.ndarray:
        return initial_policy(task, cfg, self.w0, self.w0_perturbation)


@dataclass(frozen=True, eq=False)
class LesionExperimentSpec:
    recipe: TaskRecipe
    config: AdaptationConfig
    lesion: LesionSpec
    n_seeds: int = 10
    base_seed: int = 0

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")


@dataclass(frozen=True, eq=False)
class ExperimentOutcome:
    seed: int
    timing: str
    n_f: int
    success: bool
    recovered: bool
    failure: str | None
    episodes: int
    W_final: np.ndarray | None
    W_full: np.ndarray | None
    frobenius_gap: float
    final_error: float
    policy_deviation_trace: np.ndarray
    cost_trace: np.ndarray
    episode_gap_trace: np.ndarray
    history: AdaptationHistory


def _gap_trace(hist: AdaptationHistory, base: AdaptationHistory) -> np.ndarray:
    """Per-episode ``||W_k - W_k^full||_F``, holding each run's last policy."""
    a = [r.W for r in hist] + ([hist.final_policy] if len(hist) else [])
    b = [r.W for r in base] + ([base.final_policy] if len(base) else [])
    if not a or not b:
        return np.zeros(0)
    K = max(len(a), len(b))
    a += [a[-1]] * (K - len(a))
    b += [b[-1]] * (K - len(b))
    return np.array([np.linalg.norm(x - y) for x, y in zip(a, b)])


def _continue(system, cfg, start, W, hist, n_f, lesioned):
    def check(rec):
        if lesioned and not lesioned_columns_zero(system, n_f):
            raise AssertionError(f"lesioned units reactivated in episode {rec.k}")

    H_prev = hist.records[-1].H if len(hist) else None
    W2, h2 = run_adaptation(system, cfg, start, W, first_episode=len(hist) + 1,
                            H_prev=H_prev, on_episode=check)
    return W2, hist.extend(h2)


def run_lesion_seed(spec: LesionExperimentSpec, seed: int) -> ExperimentOutcome:
    """One seed of the lesion protocol, paired with its unlesioned baseline."""
    recipe, lesion = spec.recipe, spec.lesion
    cfg = replace(spec.config, seed=seed)
    task = recipe.build(seed)
    W0 = recipe.start_policy(task, cfg)
    start = task.initial_state
    is_lesion = lesion.n_f < task.plant.n
    les_task = task.lesioned(lesion.n_f)

    try:
        W_full, base_hist = run_adaptation(task.system, cfg, start, W0)
    except AdaptationFailure as exc:
        W_full, base_hist = None, exc.history

    failure = None
    hist = AdaptationHistory()
    W = None
    try:
        if lesion.when == "before":
            def check(rec):
                if not lesioned_columns_zero(les_task.system, lesion.n_f):
                    raise AssertionError(f"lesioned units reactivated in episode {rec.k}")
            W, hist = run_adaptation(les_task.system, cfg, start, W0, on_episode=check)
        else:
            budget = lesion.k1 if lesion.when == "during" else cfg.max_episodes
            W, hist = run_adaptation(task.system, cfg, start, W0, max_episodes=budget)
            if is_lesion or (lesion.when == "during" and not hist.converged):
                W, hist = _continue(les_task.system, cfg, start, W, hist, lesion.n_f, is_lesion)
    except AdaptationFailure as exc:
        failure = exc.kind
        # hist holds only the phases that completed before the failure
        hist = hist.extend(exc.history)
        W = None

    if W is None:
        return ExperimentOutcome(
            seed=seed, timing=lesion.when, n_f=lesion.n_f, success=False, recovered=False,
            failure=failure, episodes=len(hist), W_final=None, W_full=W_full,
            frobenius_gap=np.nan, final_error=np.nan, policy_deviation_trace=np.zeros(0),
            cost_trace=np.zeros(0), episode_gap_trace=_gap_trace(hist, base_hist), history=hist,
        )

    traj = rollout(les_task.system, W, start, task.horizon)
    success = les_task.success(traj)
    final = traj.states[-1, : task.plant.m]
    final_error = float(abs(final[1])) if task.name == "pendulum" else float(np.linalg.norm(final))
    if W_full is not None:
        dev, gap = policy_deviation(W, W_full, traj.states[:-1])
    else:
        dev, gap = np.full(task.horizon, np.nan), np.nan
    return ExperimentOutcome(
        seed=seed, timing=lesion.when, n_f=lesion.n_f, success=success,
        recovered=hist.converged, failure=None, episodes=len(hist), W_final=W, W_full=W_full,
        frobenius_gap=gap, final_error=final_error, policy_deviation_trace=dev,
        cost_trace=traj.costs, episode_gap_trace=_gap_trace(hist, base_hist), history=hist,
    )


def _lesion_item(args):
    spec, seed = args
    return run_lesion_seed(spec, seed)


def run_lesion_experiment(spec: LesionExperimentSpec, jobs: int = 1) -> list:
    seeds = [spec.base_seed + i for i in range(spec.n_seeds)]
    return _map(_lesion_item, [(spec, s) for s in seeds], jobs)


def success_flag(outcomes, threshold: float = 0.8) -> str:
    """``"Y"`` when at least ``threshold`` of the seeds completed the task."""
    if not outcomes:
        return "N"
    rate = sum(o.success for o in outcomes) / len(outcomes)
    return "Y" if rate >= threshold else "N"


def lesion_table(results: dict, threshold: float = 0.8) -> dict:
    """``{system: {timing: "Y"|"N"}}`` from ``{(system, timing): outcomes}``."""
    table = {}
    for (system, timing), outcomes in results.items():
        table.setdefault(system, {})[timing] = success_flag(outcomes, threshold)
    return {s: {t: row[t] for t in LESION_TIMINGS if t in row} for s, row in table.items()}


@dataclass(frozen=True, eq=False)
class SweepRow:
    kind: str
    value: float
    seed: int
    status: str
    episodes: int
    gain_error: float
    cumulative_cost: float
    early_cost: float
    final_us: np.ndarray | None = None
    cost_trace: np.ndarray | None = None


def run_sweep_cell(kind: str, value, seed: int, base: AdaptationConfig,
                   recipe: TaskRecipe) -> SweepRow:
    field_name = SWEEP_KINDS[kind]
    if field_name == "T":
        value = int(value)
    cfg = replace(base, seed=seed, **{field_name: value})
    task = recipe.build(seed)
    nan = float("nan")
    try:
        W0 = recipe.start_policy(task, cfg)
        W, hist = run_adaptation(task.system, cfg, task.initial_state, W0)
    except AdaptationFailure as exc:
        return SweepRow(kind, value, seed, exc.kind, len(exc.history), nan, nan, nan)
    except oracle.RiccatiConvergenceError:
        return SweepRow(kind, value, seed, "oracle", 0, nan, nan, nan)

    status = "ok" if hist.converged else "not_converged"
    try:
        W_star = oracle.solve_discounted_riccati(task.system, cfg.gamma).W_star
        gain_error = float(np.linalg.norm(W - W_star) / np.linalg.norm(W_star))
    except oracle.RiccatiConvergenceError:
        gain_error = nan
    traj = rollout(task.system, W, task.initial_state, task.horizon)
    # replay the last episode's exploratory inputs (same stream => same data)
    last = hist.records[-1]
    data = collect_episode(task.system, last.W, cfg, task.initial_state,
                           episode_rng(cfg.seed, cfg.run_id, last.k))
    return SweepRow(kind, value, seed, status, len(hist), gain_error,
                    float(np.sum(traj.costs)), float(np.sum(traj.costs[:EARLY_STEPS])),
                    final_us=data.us, cost_trace=traj.costs)


def _sweep_item(args):
    return run_sweep_cell(*args)


def run_sweep(kind: str, grid, base: AdaptationConfig, n_seeds: int = 5,
              recipe: TaskRecipe = TaskRecipe(), base_seed: int = 0, jobs: int = 1,
              fixed_plant: bool | None = None) -> list:
    """One :class:`SweepRow` per (grid value, seed); seeds are shared across values.

    ``fixed_plant`` (default: only for the exploration sweep) pins every seed
    to the plant of ``base_seed`` so the spread across seeds comes from the
    exploration noise alone rather than from differing plants.
    """
    if fixed_plant is None:
        fixed_plant = kind == "exploration"
    if fixed_plant and recipe.plant_seed is None:
        recipe = replace(recipe, plant_seed=base_seed)
    if kind not in SWEEP_KINDS:
        raise ValueError(f"sweep kind must be one of {sorted(SWEEP_KINDS)}, got {kind!r}")
    grid = list(grid)
    if not grid:
        raise ValueError("sweep grid is empty")
    items = [(kind, v, base_seed + i, base, recipe) for v in grid for i in range(n_seeds)]
    return _map(_sweep_item, items, jobs)


def exploration_spread(rows) -> dict:
    """Per-timestep ``2 std`` band of the applied inputs, per grid value.

    For each value the final data-collecting episode of every successful seed
    is stacked; the standard deviation across seeds is taken per timestep and
    unit and then averaged over units.
    """
    out = {}
    for value in dict.fromkeys(r.value for r in rows):
        stack = [r.final_us for r in rows if r.value == value and r.final_us is not None]
        if len(stack) < 2:
            continue
        U = np.stack(stack)  # seeds x T x n
        out[value] = 2.0 * U.std(axis=0, ddof=1).mean(axis=1)
    return out


def summarize_sweep(rows) -> list:
    """Mean gain error and costs per grid value over successful seeds."""
    summary = []
    for value in dict.fromkeys(r.value for r in rows):
        cell = [r for r in rows if r.value == value]
        ok = [r for r in cell if r.status in ("ok", "not_converged")]
        mean = (lambda xs: float(np.mean(xs)) if xs else float("nan"))
        summary.append({
            "value": value,
            "n_ok": len(ok),
            "n_failed": len(cell) - len(ok),
            "gain_error": mean([r.gain_error for r in ok]),
            "cumulative_cost": mean([r.cumulative_cost for r in ok]),
            "early_cost": mean([r.early_cost for r in ok]),
        })
    return summary
