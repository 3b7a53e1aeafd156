"""Command-line entry point.

    netlspi train  [--config FILE] [--seed S] [--out DIR] [--jobs J]
    netlspi lesion ...
    netlspi sweep  ...
    netlspi oracle ...

Numbers are written with 17 significant digits and nothing time- or
host-dependent goes into the output, so a rerun with the same master seed
reproduces every file byte for byte.
"""

import argparse
import csv
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np

from netlspi import oracle
from netlspi.adaptation import (
    AdaptationConfig,
    AdaptationFailure,
    AdaptationHistory,
    convergence_diagnostics,
    run_adaptation,
)
from netlspi.config import ConfigError, RunConfig, default_config, dump_config, load_config
from netlspi.experiments import (
    EARLY_STEPS,
    LesionExperimentSpec,
    TaskRecipe,
    exploration_spread,
    lesion_table,
    run_lesion_experiment,
    run_sweep,
    summarize_sweep,
)
from netlspi.plant_models import LesionSpec
from netlspi.tasks import make_task, rollout

logger = logging.getLogger("netlspi")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _json(obj, indent: int = 0) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{_json(str(k))}: {_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_json(v) for v in seq) + "]"
        return "[\n" + ",\n".join(inner + _json(v, indent + 1) for v in seq) + "\n" + pad + "]"
    if isinstance(obj, str):
        import json
        return json.dumps(obj)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format(float(obj), ".17g") if math.isfinite(obj) else "null"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: Path, obj):
    path.write_text(_json(obj) + "\n", encoding="utf-8")


def adaptation_config(cfg: RunConfig, seed: int | None = None) -> AdaptationConfig:
    a = cfg.adaptation
    return AdaptationConfig(
        T=a.T, gamma=a.gamma, sigma_y2=a.sigma_y2, tol=a.tol, max_episodes=a.max_episodes,
        seed=cfg.seed if seed is None else seed, divergence_guard=a.divergence_guard,
        symmetric_features=a.symmetric_features, cond_max=a.cond_max,
    )


def recipe(cfg: RunConfig) -> TaskRecipe:
    return TaskRecipe(cfg.system, cfg.task_kwargs(), cfg.adaptation.w0,
                      cfg.adaptation.w0_perturbation)


HISTORY_COLUMNS = ["k", "h_delta", "xi_k", "episode_cost", "regression_rank", "residual", "diverged"]


def write_history(path: Path, history: AdaptationHistory):
    write_csv(path, HISTORY_COLUMNS, (
        [r.k, r.h_delta, r.xi, r.episode_cost, r.rank, r.residual, r.diverged] for r in history
    ))


def write_trajectory(path: Path, task, traj):
    m, n = task.plant.m, task.plant.n
    if task.name == "pendulum":
        pos, vel = ["p", "theta"], ["v", "omega"]
    else:
        pos, vel = [f"p{i + 1}" for i in range(m)], [f"v{i + 1}" for i in range(m)]
    header = (["timestep"] + pos + vel + [f"x{i + 1}" for i in range(n)]
              + [f"u{i + 1}" for i in range(n)] + ["cost"])
    positions = task.positions(traj)
    rows = []
    for t in range(len(traj.costs)):
        s = traj.states[t]
        rows.append([t, *positions[t], *s[m : 2 * m], *s[2 * m :], *traj.us[t], traj.costs[t]])
    write_csv(path, header, rows)


def _matrix(M):
    return None if M is None else [list(map(float, row)) for row in np.atleast_2d(M)]


def cmd_train(cfg: RunConfig, out: Path, jobs: int) -> int:
    task = make_task(cfg.system, seed=cfg.seed, **cfg.task_kwargs())
    acfg = adaptation_config(cfg)
    summary = {"experiment": "train", "system": cfg.system, "seed": cfg.seed, "failure": None}
    try:
        sol = oracle.solve_discounted_riccati(task.system, acfg.gamma)
    except oracle.RiccatiConvergenceError:
        sol = None
    W0 = recipe(cfg).start_policy(task, acfg)

    try:
        W, history = run_adaptation(task.system, acfg, task.initial_state, W0)
    except AdaptationFailure as exc:
        write_history(out / "history.csv", exc.history)
        summary.update(failure=exc.kind, failed_episode=exc.episode, message=str(exc))
        write_json(out / "summary.json", summary)
        logger.error("%s", exc)
        return 1

    write_history(out / "history.csv", history)
    traj = rollout(task.system, W, task.initial_state, task.horizon)
    write_trajectory(out / "trajectory.csv", task, traj)
    final = traj.states[-1, : task.plant.m]
    summary.update(
        converged=history.converged,
        episodes=len(history),
        task_success=task.success(traj),
        final_error=float(abs(final[1])) if task.name == "pendulum" else float(np.linalg.norm(final)),
        rollout_cost=float(np.sum(traj.costs)),
        final_gain=_matrix(W),
        oracle_gain=None if sol is None else _matrix(sol.W_star),
        relative_gain_error=None if sol is None else float(
            np.linalg.norm(W - sol.W_star) / np.linalg.norm(sol.W_star)),
    )
    if len(history) >= 2:
        rep = convergence_diagnostics(history, system=task.system, gamma=acfg.gamma,
                                      oracle=sol, seed=cfg.seed)
        summary["xi_ratios"] = [float(x) for x in rep.xi_ratios]
        if sol is not None:
            summary["value_bound"] = {
                "epsilon": rep.epsilon, "bound": rep.bound,
                "max_value_gap": rep.max_value_gap, "violations": rep.violations,
            }
    write_json(out / "summary.json", summary)
    return 0


def cmd_oracle(cfg: RunConfig, out: Path, jobs: int) -> int:
    task = make_task(cfg.system, seed=cfg.seed, **cfg.task_kwargs())
    gamma = cfg.adaptation.gamma
    try:
        sol = oracle.solve_discounted_riccati(task.system, gamma)
    except oracle.RiccatiConvergenceError as exc:
        write_json(out / "oracle.json", {"failure": "riccati", "message": str(exc)})
        return 1
    result = {
        "system": cfg.system, "seed": cfg.seed, "gamma": gamma,
        "iterations": sol.iterations, "bellman_residual": sol.residual,
        "closed_loop_radius": oracle.closed_loop_radius(task.system, sol.W_star),
        "gain": _matrix(sol.W_star), "value_matrix": _matrix(sol.P),
    }
    text = _json(result) + "\n"
    (out / "oracle.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _system_config(cfg: RunConfig, system: str) -> RunConfig:
    if system == cfg.system:
        return cfg
    return dataclasses.replace(default_config(system), seed=cfg.seed, lesion=cfg.lesion)


def cmd_lesion(cfg: RunConfig, out: Path, jobs: int) -> int:
    les = cfg.lesion
    results, rows, dev_rows, gap_rows = {}, [], [], []
    for system in les.systems:
        scfg = _system_config(cfg, system)
        for timing in les.timings:
            spec = LesionExperimentSpec(
                recipe=recipe(scfg), config=adaptation_config(scfg),
                lesion=LesionSpec(n_f=min(les.n_f, scfg.plant.n), when=timing, k1=les.k1),
                n_seeds=les.n_seeds, base_seed=cfg.seed,
            )
            outcomes = run_lesion_experiment(spec, jobs=jobs)
            results[(system, timing)] = outcomes
            for o in outcomes:
                rows.append([system, timing, o.seed, o.n_f, o.success, o.recovered,
                             o.failure or "", o.episodes, o.frobenius_gap, o.final_error])
                dev_rows += [[system, timing, o.seed, t, d]
                             for t, d in enumerate(o.policy_deviation_trace)]
                gap_rows += [[system, timing, o.seed, k + 1, g]
                             for k, g in enumerate(o.episode_gap_trace)]
    write_csv(out / "lesion.csv", ["system", "timing", "seed", "n_f", "success", "recovered",
                                   "failure", "episodes", "frobenius_gap", "final_error"], rows)
    write_csv(out / "lesion_deviation.csv",
              ["system", "timing", "seed", "timestep", "deviation"], dev_rows)
    write_csv(out / "lesion_episode_gap.csv",
              ["system", "timing", "seed", "episode", "frobenius_gap"], gap_rows)
    table = lesion_table(results, les.success_fraction)
    write_csv(out / "table1.csv", ["system", *les.timings],
              ([s, *(table[s][t] for t in les.timings)] for s in les.systems))
    write_json(out / "summary.json", {
        "experiment": "lesion", "n_f": les.n_f, "n_seeds": les.n_seeds,
        "success_fraction": les.success_fraction, "table": table,
        "successes": {f"{s}/{t}": sum(o.success for o in v) for (s, t), v in results.items()},
    })
    return 0


def cmd_sweep(cfg: RunConfig, out: Path, jobs: int) -> int:
    sw = cfg.sweep
    rows = run_sweep(sw.kind, sw.grid, adaptation_config(cfg), sw.n_seeds, recipe(cfg),
                     base_seed=cfg.seed, jobs=jobs)
    write_csv(out / "sweep.csv", ["kind", "value", "seed", "status", "episodes", "gain_error",
                                  "cumulative_cost", f"first{EARLY_STEPS}_cost"],
              ([r.kind, r.value, r.seed, r.status, r.episodes, r.gain_error,
                r.cumulative_cost, r.early_cost] for r in rows))
    summary = summarize_sweep(rows)
    write_csv(out / "sweep_summary.csv", ["value", "n_ok", "n_failed", "gain_error",
                                          "cumulative_cost", f"first{EARLY_STEPS}_cost"],
              ([s["value"], s["n_ok"], s["n_failed"], s["gain_error"], s["cumulative_cost"],
                s["early_cost"]] for s in summary))
    values = list(dict.fromkeys(r.value for r in rows))
    # mean running cost per timestep of the final rollout, per grid value
    traces = {v: [r.cost_trace for r in rows if r.value == v and r.cost_trace is not None]
              for v in values}
    traces = {v: np.mean(ts, axis=0) for v, ts in traces.items() if ts}
    if traces:
        steps = min(len(t) for t in traces.values())
        write_csv(out / "running_cost.csv", ["timestep", *[f"value={fmt(v)}" for v in traces]],
                  ([t, *(tr[t] for tr in traces.values())] for t in range(steps)))
    spread = exploration_spread(rows)
    if spread:
        steps = min(len(b) for b in spread.values())
        write_csv(out / "spread.csv", ["timestep", *[f"value={fmt(v)}" for v in spread]],
                  ([t, *(b[t] for b in spread.values())] for t in range(steps)))
    write_json(out / "summary.json", {"experiment": "sweep", "kind": sw.kind, "cells": summary,
                                      "mean_spread": {fmt(v): float(np.mean(b))
                                                      for v, b in spread.items()}})
    return 0


COMMANDS = {"train": cmd_train, "lesion": cmd_lesion, "sweep": cmd_sweep, "oracle": cmd_oracle}


def execute(cfg: RunConfig, command: str | None = None, out=None, jobs: int = 1) -> int:
    """Run ``command`` (default: ``cfg.experiment``) and write its artifacts."""
    command = command or cfg.experiment
    out = Path(out if out is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dump_config(cfg), encoding="utf-8")
    return COMMANDS[command](cfg, out, jobs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netlspi", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="flat TOML run configuration")
    parser.add_argument("--system", choices=("point_mass", "pendulum"),
                        help="system to use when no config file is given")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--out", type=Path, help="output directory (overrides the config)")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for lesion/sweep")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else default_config(args.system or "point_mass")
    except (ConfigError, OSError) as exc:
        print(f"netlspi: config error: {exc}", file=sys.stderr)
        return 2
    if args.system and args.config and args.system != cfg.system:
        print("netlspi: --system conflicts with the config file", file=sys.stderr)
        return 2
    if args.seed is not None:
        if args.seed < 0:
            print("netlspi: --seed must be non-negative", file=sys.stderr)
            return 2
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.command != "oracle":
        cfg = dataclasses.replace(cfg, experiment=args.command)
    return execute(cfg, args.command, args.out, max(1, args.jobs))


if __name__ == "__main__":
    sys.exit(main())
