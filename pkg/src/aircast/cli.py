"""Command-line entry point.

Subcommands: validate, predict (exact), simulate (Monte-Carlo), optimize,
monitor.  Inputs are scenario JSON files; tabular reports are CSV, structured
outputs JSON.  Exit codes: 0 success, 1 usage/parse error, 2 invariant
violation, 3 hard-constraint infeasibility.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import flights, monitor, optimizer, pdfs, scenarios, sectors
from .monitor import EventError, ObservationEvent
from .optimizer import AirspaceSnapshot, OptimizerConfig
from .scenario_io import ScenarioError, ScenarioFile, load_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVARIANT = 2
EXIT_INFEASIBLE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aircast",
        description="Stochastic airspace prediction, simulation and "
                    "clearance optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--slices", type=float, metavar="MIN",
                       help="time-slice width in minutes")
        p.add_argument("--epsilon", type=float,
                       help="congestion probability threshold")
        p.add_argument("--p", type=float, dest="equity_p",
                       help="equity exponent of the delay cost")
        p.add_argument("--seed", type=int, help="master random seed")

    sub.add_parser("validate", help="check a scenario file").add_argument(
        "scenario"
    )

    pp = sub.add_parser("predict", help="exact arrival and congestion "
                                        "reports")
    add_common(pp)
    pp.add_argument("--discretize", type=float, metavar="STEP",
                    help="grid step for the discretization fallback")

    ps = sub.add_parser("simulate", help="Monte-Carlo reports")
    add_common(ps)
    ps.add_argument("--samples", type=int, metavar="M",
                    help="number of scenarios")
    ps.add_argument("--dump-pdfs", action="store_true",
                    help="write per-point density curves")
    ps.add_argument("--dump-scenarios", action="store_true",
                    help="write the sampled scenario set as JSON lines")

    po = sub.add_parser("optimize", help="search clearance decisions")
    add_common(po)
    po.add_argument("--constraint", choices=("hard", "soft"),
                    help="sector constraint mode")
    po.add_argument("--samples", type=int, metavar="M",
                    help="MC samples per evaluation (0 = exact)")
    po.add_argument("--max-iters", type=int, default=400)

    pm = sub.add_parser("monitor", help="replay an observation stream")
    add_common(pm)
    pm.add_argument("--events", required=True, help="JSON-lines event file")
    pm.add_argument("--strict", action="store_true",
                    help="abort on the first bad event")
    pm.add_argument("--constraint", choices=("hard", "soft"))
    return parser


def _load(path: str, args) -> ScenarioFile:
    scenario = load_scenario(path)
    cfg = scenario.config
    updates = {}
    if getattr(args, "slices", None) is not None:
        updates["slice_width"] = args.slices
    if getattr(args, "epsilon", None) is not None:
        updates["epsilon"] = args.epsilon
    if getattr(args, "equity_p", None) is not None:
        updates["p"] = args.equity_p
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "samples", None) is not None:
        updates["samples"] = args.samples
    if getattr(args, "constraint", None) is not None:
        updates["constraint_mode"] = args.constraint
    if updates:
        scenario.config = replace(cfg, **updates)
    return scenario


def _opt_config(scenario: ScenarioFile, mc_samples=0, max_iters=400,
                ) -> OptimizerConfig:
    cfg = scenario.config
    return OptimizerConfig(
        p=cfg.p,
        epsilon=cfg.epsilon,
        constraint_mode=cfg.constraint_mode,
        soft_weight=cfg.lambda_congestion,
        reroute_penalty=cfg.lambda_reroute,
        mc_samples=mc_samples,
        max_iters=max_iters,
        seed=cfg.seed,
    )


def _write_arrivals(path, rows, header):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_validate(args) -> int:
    try:
        load_scenario(args.scenario)
    except ScenarioError as exc:
        for problem in exc.problems:
            print(problem, file=sys.stderr)
        return EXIT_USAGE if exc.parse else EXIT_INVARIANT
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    print("OK")
    return EXIT_OK


def cmd_predict(args) -> int:
    scenario = _load(args.scenario, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        beliefs = {
            fid: flights.propagate(p, discretize_step=args.discretize)
            for fid, p in scenario.plans.items()
        }
    except pdfs.PieceCountError as exc:
        print(f"{exc}; rerun with --discretize <step>", file=sys.stderr)
        return EXIT_INVARIANT
    rows = []
    for fid in sorted(beliefs):
        arr = beliefs[fid].arrival()
        sched = scenario.plans[fid].scheduled_arrival
        rows.append([fid, f"{arr.mean():.9f}", f"{arr.variance():.9f}",
                     f"{sched:.9f}", f"{arr.mean() - sched:.9f}"])
    _write_arrivals(
        out / "arrivals.csv", rows,
        ["flight", "expected_arrival", "variance", "scheduled",
         "expected_delay"],
    )
    timeline = sectors.congestion_timeline(
        list(beliefs.values()), scenario.sectors,
        scenario.config.slicing(), scenario.config.epsilon,
    )
    with open(out / "congestion.csv", "w", newline="") as fh:
        timeline.write_csv(fh)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = _load(args.scenario, args)
    cfg = scenario.config
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sset = scenarios.sample_scenarios(
        scenario.plans, M=cfg.samples, master_seed=cfg.seed
    )
    est = scenarios.estimate_expected_arrivals(sset)
    rows = []
    for fid in sorted(est):
        mean, half = est[fid]
        sched = scenario.plans[fid].scheduled_arrival
        rows.append([fid, f"{mean:.9f}", f"{half:.9f}", f"{sched:.9f}",
                     f"{mean - sched:.9f}"])
    _write_arrivals(
        out / "arrivals.csv", rows,
        ["flight", "mean_arrival", "half_width", "scheduled",
         "expected_delay"],
    )
    timeline = scenarios.estimate_congestion(
        sset, scenario.sectors, cfg.slicing(), cfg.epsilon
    )
    with open(out / "congestion.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sector_id", "t0", "t1", "congestion_probability",
                    "half_width", "flagged"])
        for r in timeline.rows:
            half = 3.0 * np.sqrt(
                r.probability * (1 - r.probability) / cfg.samples
            )
            w.writerow([r.sector_id, f"{r.t0:.6f}", f"{r.t1:.6f}",
                        f"{r.probability:.9f}", f"{half:.9f}",
                        int(r.flagged)])
    if args.dump_pdfs:
        _dump_pdf_curves(scenario, out / "pdf_curves.csv")
    if args.dump_scenarios:
        with open(out / "scenarios.jsonl", "w") as fh:
            scenarios.dump_scenarios(sset, fh)
    return EXIT_OK


def _dump_pdf_curves(scenario: ScenarioFile, path, n=201):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["flight", "point", "t", "density"])
        for fid in sorted(scenario.plans):
            belief = flights.propagate(scenario.plans[fid])
            for point in belief.route:
                f = belief.point_pdfs[point]
                if f.is_point_mass:
                    w.writerow([fid, point, f"{f.point:.6f}", "inf"])
                    continue
                ts = np.linspace(f.lo, f.hi, n)
                for t, d in zip(ts, f.pdf(ts)):
                    w.writerow([fid, point, f"{t:.6f}", f"{d:.9f}"])


def cmd_optimize(args) -> int:
    scenario = _load(args.scenario, args)
    cfg = scenario.config
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    snapshot = AirspaceSnapshot(
        plans=scenario.plans,
        sectors=scenario.sectors,
        slicing=cfg.slicing(),
    )
    opt_cfg = _opt_config(scenario, mc_samples=args.samples or 0,
                          max_iters=args.max_iters)
    result = optimizer.optimize(snapshot, opt_cfg)
    with open(out / "clearances.json", "w") as fh:
        json.dump({
            "status": result.status,
            "clearances": optimizer.clearances(snapshot, result.decision),
            "decision": {
                "routes": result.decision.routes,
                "shifts": {
                    fid: {f"{a}-{b}": d for (a, b), d in per.items()}
                    for fid, per in result.decision.shifts.items()
                },
            },
        }, fh, indent=2)
    with open(out / "evaluation.json", "w") as fh:
        rep = result.report
        json.dump({
            "delay_cost": rep.delay_cost,
            "max_congestion": rep.max_congestion,
            "penalty": rep.penalty,
            "reroutes": rep.reroutes,
            "feasible": rep.feasible,
            "total_cost": rep.total_cost,
            "congestion": [
                {"sector": s, "t0": sl[0], "t1": sl[1], "probability": p}
                for (s, sl), p in rep.congestion.items()
            ],
            "arrival_expectations": rep.arrival_expectations,
        }, fh, indent=2)
    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "best_cost"])
        for i, c in enumerate(result.history):
            w.writerow([i, f"{c:.9f}"])
    if result.status == "infeasible":
        print("no feasible solution found", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _read_events(path, strict):
    events = []
    errors = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(
                    (lineno, ObservationEvent.from_dict(json.loads(line)))
                )
            except (json.JSONDecodeError, EventError, ValueError) as exc:
                if strict:
                    raise EventError(f"{path}:{lineno}: {exc}") from exc
                errors.append(f"{path}:{lineno}: {exc}")
    return events, errors


def cmd_monitor(args) -> int:
    scenario = _load(args.scenario, args)
    cfg = scenario.config
    try:
        parsed, parse_errors = _read_events(args.events, args.strict)
    except EventError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVARIANT
    for msg in parse_errors:
        print(msg, file=sys.stderr)
    linenos = {id(e): ln for ln, e in parsed}
    events = [e for _, e in parsed]
    state = monitor.initial_state(scenario.plans)
    opt_cfg = _opt_config(scenario)
    failed = False

    def on_error(event, exc):
        nonlocal failed
        ln = linenos.get(id(event), "?")
        print(f"{args.events}:{ln}: {exc}", file=sys.stderr)
        failed = True

    try:
        loop = monitor.run_loop(
            state, events, scenario.sectors, cfg.slicing(), opt_cfg,
            on_error=None if args.strict else on_error,
        )
        for _, update in loop:
            print(json.dumps({
                "version": update.version,
                "timestamp": (
                    update.timestamp
                    if update.timestamp != float("-inf") else None
                ),
                "status": update.status,
                "max_congestion": update.report.max_congestion,
                "delay_cost": update.report.delay_cost,
                "clearances": update.clearances,
            }))
    except (EventError, flights.ObservationError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "predict":
            return cmd_predict(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "optimize":
            return cmd_optimize(args)
        if args.command == "monitor":
            return cmd_monitor(args)
    except ScenarioError as exc:
        for problem in exc.problems:
            print(problem, file=sys.stderr)
        return EXIT_USAGE if exc.parse else EXIT_INVARIANT
    except OSError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    parser.error(f"unknown command {args.command}")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
