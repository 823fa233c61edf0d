"""Command-line entry point.

    freeflyer plan-global --scenario F --seed N --out D
    freeflyer run         --scenario F --seed N --out D [--no-info]
    freeflyer montecarlo  --scenario F --runs N --out D
    freeflyer compare     --scenario F --runs N --out D

``--scenario`` takes a YAML path or the name of a shipped scenario.  Outputs
contain no wall-clock quantities, so repeated commands write identical files.
Failures print one JSON object to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from freeflyer.global_plan import NoPlanFound, StartInCollision, plan_global
from freeflyer.harness import (
    PARAM_NAMES, GlobalPlanFailed, StackSettings, check_trace, compare_informative, monte_carlo, run_scenario,
)
from freeflyer.scenario import ScenarioError, load_scenario, shipped_scenarios

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PLAN_FAILED = 3
EXIT_TIMEOUT = 4

log = logging.getLogger("freeflyer")


class CommandFailed(Exception):
    def __init__(self, code: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.code, self.kind, self.extra = code, kind, extra


def _r(v, nd=12):
    return round(float(v), nd)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _config(args):
    cfg = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_(seed=args.seed)
    return cfg


def cmd_plan_global(args, out: Path) -> dict:
    cfg = _config(args)
    settings = StackSettings()
    try:
        gp = plan_global(np.asarray(cfg.x0), cfg.goal, cfg.world, cfg.theta_init.theta, settings.rrt_budget,
                         seed=cfg.seed, u_max=settings.rrt_authority * settings.u_max)
    except (NoPlanFound, StartInCollision) as exc:
        raise CommandFailed(EXIT_PLAN_FAILED, type(exc).__name__, str(exc)) from exc
    with open(out / "global_plan.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "rx", "ry", "vx", "vy", "fx", "fy"])
        for node in gp.nodes:
            a = node.action if node.action is not None else (0.0, 0.0)
            w.writerow([repr(float(v)) for v in (node.t, *node.p, *node.v, *a)])
    summary = {
        "seed": cfg.seed,
        "nodes": len(gp.nodes),
        "total_time": _r(gp.total_time),
        "iterations": gp.iterations,
        "tree_size": gp.tree_size,
    }
    _write_json(out / "global_plan.json", summary)
    if not args.no_plots:
        from freeflyer import plotting

        plotting.plot_global_plan(gp, cfg.world, cfg.goal, out / "global_plan.png")
    return summary


def cmd_run(args, out: Path) -> dict:
    cfg = _config(args)
    if args.no_info:
        cfg = cfg.with_(flags=replace(cfg.flags, informative=False))
    try:
        trace = run_scenario(cfg)
    except GlobalPlanFailed as exc:
        raise CommandFailed(EXIT_PLAN_FAILED, "GlobalPlanFailed", str(exc)) from exc
    (out / "trace.csv").write_text(trace.to_csv())
    theta, p = trace.final_params()
    summary = {
        "seed": cfg.seed,
        "informative": cfg.flags.informative,
        "status": trace.status,
        "duration": _r(trace.duration),
        "param_names": list(PARAM_NAMES),
        "theta_true": [_r(v) for v in np.asarray(cfg.theta_true)],
        "final_theta": [_r(v) for v in theta],
        "final_p": [_r(v, 15) for v in p],
        "replans": trace.n_replans,
        "model_updates": trace.n_model_updates,
        "swaps": [{"t": _r(t), "theta": [_r(v) for v in th]} for t, th in trace.swaps],
        "global_plan_time": _r(trace.global_plan.total_time),
        "tau": _r(trace.tau),
        "trace_problems": check_trace(trace),
    }
    _write_json(out / "summary.json", summary)
    if not args.no_plots:
        from freeflyer import plotting

        plotting.plot_run(trace, out / "run.png")
        plotting.plot_estimates(trace, out / "estimates.png")
    if not trace.success:
        raise CommandFailed(EXIT_TIMEOUT, "Timeout", f"goal not reached within {cfg.max_sim_time} s",
                            duration=summary["duration"])
    return summary


def cmd_montecarlo(args, out: Path) -> dict:
    cfg = _config(args)
    summary = monte_carlo(cfg, args.runs)
    (out / "summary.json").write_text(summary.to_json())
    return {"runs": args.runs, "failures": summary.failures}


def cmd_compare(args, out: Path) -> dict:
    cfg = _config(args)
    comp = compare_informative(cfg, args.runs)
    (out / "comparison.json").write_text(comp.to_json())
    (out / "comparison.csv").write_text(comp.table())
    if not args.no_plots:
        from freeflyer import plotting

        plotting.plot_comparison(comp, out / "comparison.png")
    return {"runs": args.runs, "covariance_change_pct": {k: round(v, 4) for k, v in comp.change_pct.items()}}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freeflyer", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False, runs=False):
        p.add_argument("--scenario", required=True,
                       help=f"YAML file or shipped name ({', '.join(shipped_scenarios())})")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
        if runs:
            p.add_argument("--runs", type=int, required=True)
            p.add_argument("--seed", type=int, default=None, help="first seed (default: scenario seed)")
        p.add_argument("--out", required=True, type=Path, help="output directory (created if missing)")
        p.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    common(sub.add_parser("plan-global", help="global kinodynamic plan only"), seed=True)
    p = sub.add_parser("run", help="one closed-loop run")
    common(p, seed=True)
    p.add_argument("--no-info", action="store_true", help="disable the information term (gamma = 0)")
    common(sub.add_parser("montecarlo", help="seeded batch of closed-loop runs"), runs=True)
    common(sub.add_parser("compare", help="matched-seed nominal vs information-aware runs"), runs=True)
    return parser


COMMANDS = {"plan-global": cmd_plan_global, "run": cmd_run, "montecarlo": cmd_montecarlo, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code not in (0, None):
            print(json.dumps({"error": "UsageError", "message": "invalid arguments"}), file=sys.stderr)
        return int(exc.code or 0)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](args, args.out)
    except CommandFailed as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc), **exc.extra}), file=sys.stderr)
        return exc.code
    except (ScenarioError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(result))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
