"""Command line front end: run a scenario, or compare solver formulations on it.

Exit codes: 0 on success, 1 on a runtime failure (the simulation or a
controller gave up), 2 on a configuration error (bad file, bad field,
bad value).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .dynamics import VARIANTS, forward_dynamics, forward_dynamics_classical
from .errors import ProjdynError, RankDeficientError, ScenarioError
from .scenario import Scenario, load_scenario
from .simulate import TrajectoryLog, simulate
from .systems import GeneralizedState


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _write_summary(path: str, items: list) -> None:
    with open(path, "w") as fh:
        for key, val in items:
            fh.write(f"{key} = {val}\n")


def _summarize_run(scenario: Scenario, log: TrajectoryLog) -> list:
    e0, e1 = log.energy[0], log.energy[-1]
    drift = abs(e1 - e0)
    rel = drift / max(abs(e0), 1e-300)
    return [
        ("scenario", scenario.name),
        ("model", scenario.system.name),
        ("control", scenario.control_kind),
        ("rows", log.rows),
        ("dt", _fmt(scenario.config.dt)),
        ("t_end", _fmt(scenario.config.t_end)),
        ("max_phi_norm", _fmt(float(np.max(log.phi_norm)))),
        ("energy_initial", _fmt(float(e0))),
        ("energy_final", _fmt(float(e1))),
        ("energy_drift_abs", _fmt(float(drift))),
        ("energy_drift_rel", _fmt(float(rel))),
        ("nr_iters_mean", _fmt(float(np.mean(log.nr_iters)))),
        ("nr_iters_max", int(np.max(log.nr_iters))),
        ("max_abs_multiplier", _fmt(float(np.max(np.abs(log.multipliers))))),
    ]


def cmd_run(scenario: Scenario, out_dir: str, quiet: bool) -> int:
    os.makedirs(out_dir, exist_ok=True)
    try:
        log = simulate(scenario.system, scenario.initial,
                       scenario.make_policy(), scenario.config)
    except ProjdynError as exc:
        partial = getattr(exc, "partial_log", None)
        if partial is not None and scenario.csv_path:
            path = os.path.join(out_dir, scenario.csv_path)
            partial.to_csv(path)
            print(f"error: {exc} (partial log written to {path})", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 1

    items = _summarize_run(scenario, log)
    if scenario.csv_path:
        log.to_csv(os.path.join(out_dir, scenario.csv_path))
    if scenario.summary_path:
        _write_summary(os.path.join(out_dir, scenario.summary_path), items)
    if not quiet:
        for key, val in items:
            print(f"{key} = {val}")
        if scenario.csv_path:
            print(f"trajectory written to {os.path.join(out_dir, scenario.csv_path)}")
    return 0


def cmd_compare(scenario: Scenario, out_dir: str, quiet: bool) -> int:
    """Replay the projection run's states under every solver formulation.

    The scenario is simulated once with the projection solver; at every
    logged state the applied force is fed to the classical multiplier
    solver and to all constraint-inertia variants, and the resulting
    accelerations are compared pointwise.
    """
    os.makedirs(out_dir, exist_ok=True)
    system, config = scenario.system, scenario.config
    try:
        log = simulate(system, scenario.initial, scenario.make_policy(), config)
    except ProjdynError as exc:
        print(f"error: projection-solver run failed: {exc}", file=sys.stderr)
        return 1

    classical_failures = 0
    max_classical_diff = 0.0
    variant_diff = {(a, b): 0.0 for i, a in enumerate(VARIANTS)
                    for b in VARIANTS[i + 1:]}
    for i in range(log.rows):
        state = GeneralizedState(log.q[i], log.qdot[i], log.t[i])
        f = log.force[i]
        accels = {}
        for variant in VARIANTS:
            sol = forward_dynamics(system, state, f, variant=variant,
                                   gamma=config.gamma, rank_tol=config.rank_tol)
            accels[variant] = sol.qddot
        for (a, b) in variant_diff:
            d = float(np.max(np.abs(accels[a] - accels[b])))
            variant_diff[(a, b)] = max(variant_diff[(a, b)], d)
        try:
            qddot_cl, _ = forward_dynamics_classical(system, state, f,
                                                     rank_tol=config.rank_tol)
            d = float(np.max(np.abs(accels[config.dynamics_variant] - qddot_cl)))
            max_classical_diff = max(max_classical_diff, d)
        except RankDeficientError:
            classical_failures += 1

    items = [
        ("scenario", scenario.name),
        ("model", system.name),
        ("rows", log.rows),
        ("projection_failures", 0),
        ("classical_failures", classical_failures),
        ("max_abs_qddot_diff_classical", _fmt(max_classical_diff)),
    ]
    for (a, b), d in variant_diff.items():
        items.append((f"max_abs_qddot_diff_{a}_vs_{b}", _fmt(d)))
    items.append(("max_phi_norm", _fmt(float(np.max(log.phi_norm)))))

    if scenario.csv_path:
        log.to_csv(os.path.join(out_dir, scenario.csv_path))
    if scenario.summary_path:
        _write_summary(os.path.join(out_dir, scenario.summary_path), items)
    if not quiet:
        for key, val in items:
            print(f"{key} = {val}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="projdyn",
        description="Constrained-dynamics scenario runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario file")
    p_run.add_argument("scenario", help="path to a TOML scenario file")
    p_cmp = sub.add_parser(
        "compare",
        help="run a scenario and compare solver formulations state by state")
    p_cmp.add_argument("scenario", help="path to a TOML scenario file")
    for p in (p_run, p_cmp):
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="seed for any stochastic scenario elements")
        p.add_argument("--quiet", action="store_true",
                       help="suppress the summary on stdout")

    args = parser.parse_args(argv)
    if args.seed is not None:
        np.random.seed(args.seed)

    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        where = f" (field {exc.field})" if exc.field else ""
        print(f"configuration error: {exc}{where}", file=sys.stderr)
        return 2

    if args.command == "run":
        return cmd_run(scenario, args.out, args.quiet)
    return cmd_compare(scenario, args.out, args.quiet)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
