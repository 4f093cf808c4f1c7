"""Command line entry point.

Exit codes: 0 success, 1 bad input, 2 no path, 3 invariant violation.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness, planner, primitives
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_PATH = 2
EXIT_INVARIANT = 3

log = logging.getLogger("adaptlattice")


def _cmd_plan(args) -> int:
    scen = load_scenario(args.scenario).with_overrides(args.executions, args.seed)

    def progress(rec):
        log.info("execution %d: nominal %d, cost %.6g, diam %.6g -> %.6g, tube dev %.3g / %.3g",
                 rec.execution, rec.nominal_id, rec.plan_cost, rec.diam_start, rec.diam_end,
                 rec.max_tube_dev, rec.delta)

    report = harness.run_campaign(scen, Path(args.out), emit_plots=args.emit_plots,
                                  progress=progress)
    bad = [r.execution for r in report.records if r.tube_violation or not r.torque_bound_ok]
    print(f"{len(report.records)} executions, plan costs "
          + ", ".join(f"{c:.6g}" for c in report.costs)
          + f"; final diam ratio {report.final_diam_ratio:.4f}")
    if bad:
        print(f"invariant violated in executions {bad}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _cmd_gen(args) -> int:
    scen = load_scenario(args.scenario)
    model = scen.system.build()
    lib = harness.get_library(scen, model, harness.nominal_candidates(scen))
    lib.save(args.out)
    failed = [e for e in lib.report if e["status"] != "ok"]
    print(f"{len(lib.entries)} primitives written to {args.out} ({len(failed)} infeasible)")
    return EXIT_OK


def _cmd_verify(args) -> int:
    lib = primitives.PrimitiveLibrary.load(args.library)
    if "planning_model" not in lib.meta:
        print("library does not record its planning model", file=sys.stderr)
        return EXIT_INPUT
    model, theta = harness.planning_model_from_meta(lib.meta["planning_model"])
    worst = 0.0
    for (i, off), prim in sorted(lib.entries.items()):
        err = primitives.verify_primitive(model, prim, theta, lib.lattice, refine=args.refine)
        worst = max(worst, err)
        flag = "ok" if err <= primitives.ENDPOINT_TOL else "FAIL"
        print(f"nominal {i} offset {off}: endpoint error {err:.3e} grid units {flag}")
    print(f"worst endpoint error {worst:.3e} over {len(lib.entries)} primitives")
    return EXIT_OK if worst <= primitives.ENDPOINT_TOL else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptlattice",
                                description="Adaptive lattice-based motion planning harness")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-execution progress")
    sub = p.add_subparsers(dest="command", required=True)

    pl = sub.add_parser("plan", help="run a multi-execution campaign")
    pl.add_argument("--scenario", required=True, type=Path)
    pl.add_argument("--out", required=True, type=Path)
    pl.add_argument("--executions", type=int, default=None)
    pl.add_argument("--seed", type=int, default=None)
    pl.add_argument("--emit-plots", action="store_true")
    pl.set_defaults(func=_cmd_plan)

    gp = sub.add_parser("gen-primitives", help="build and save the primitive library")
    gp.add_argument("--scenario", required=True, type=Path)
    gp.add_argument("--out", required=True, type=Path)
    gp.set_defaults(func=_cmd_gen)

    vp = sub.add_parser("verify", help="re-integrate every primitive of a library")
    vp.add_argument("--library", required=True, type=Path)
    vp.add_argument("--refine", type=int, default=10)
    vp.set_defaults(func=_cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (planner.NoPath, planner.InfeasibleEndpoint) as exc:
        print(f"no path: {exc}", file=sys.stderr)
        return EXIT_NO_PATH
    except (harness.InvariantViolation, planner.NoNominalInSet) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
