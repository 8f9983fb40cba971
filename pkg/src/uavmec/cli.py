"""Command line front end: ``run``, ``sweep`` and ``validate``.

Exit status is 0 whenever the simulation completed, deadlocked runs
included, 2 for a bad scenario or flag value and 3 for I/O failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .env import DEMAND_MODELS
from .planner import PATH_MODES
from .scenario import (
    METRICS_HEADER,
    ScenarioError,
    SweepSpec,
    build,
    read_scenario,
    run_once,
    run_sweep,
)
from .sim import PLANNER_KINDS

EXIT_CONFIG = 2
EXIT_IO = 3


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _csv_choice(choices):
    def parse(text: str) -> list[str]:
        items = [v.strip() for v in text.split(",") if v.strip()]
        bad = [v for v in items if v not in choices]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"choose from {', '.join(choices)}; got {text!r}")
        return items
    return parse


def _add_run_flags(p: argparse.ArgumentParser, lists: bool = False) -> None:
    p.add_argument("--scenario", required=True, help="scenario YAML, or a built-in name such as paper_default")
    p.add_argument("--seed", type=int)
    if lists:
        p.add_argument("--planner", type=_csv_choice(PLANNER_KINDS), help="one or more of rl,astar")
        p.add_argument("--demand", type=_csv_choice(DEMAND_MODELS), help="one or more of sigmoid,linear")
    else:
        p.add_argument("--planner", choices=PLANNER_KINDS)
        p.add_argument("--demand", choices=DEMAND_MODELS)
    p.add_argument("--path-mode", choices=PATH_MODES)
    p.add_argument("--K", type=float)
    p.add_argument("--M", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--max-ticks", type=int)
    p.add_argument("--out", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavmec", description="Multi-UAV edge-service path planning simulator.")
    sub = parser.add_subparsers(dest="verb", required=True)

    _add_run_flags(sub.add_parser("run", help="run one episode, write metrics.csv and trace.jsonl"))

    sw = sub.add_parser("sweep", help="sweep K or M, write sweep.csv and one trace per point")
    _add_run_flags(sw, lists=True)
    sw.add_argument("--axis", choices=("K", "M"), required=True)
    sw.add_argument("--values", type=_csv_floats, required=True, help="comma-separated, strictly increasing")
    sw.add_argument("--reps", type=int, default=1)

    va = sub.add_parser("validate", help="parse and check a scenario without running it")
    va.add_argument("--scenario", required=True)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    return {
        "seed": args.seed, "planner": args.planner, "demand": args.demand, "path_mode": args.path_mode,
        "K": args.K, "M": args.M, "eta": args.eta, "beta": args.beta, "max_ticks": args.max_ticks,
    }


def _print_rows(rows: list[dict], header: list[str]) -> None:
    print(",".join(header))
    for r in rows:
        print(",".join(str(r.get(k, "")) for k in header))


def _cmd_run(args) -> int:
    res = run_once(args.scenario, _overrides(args), args.out)
    _print_rows([res.row], METRICS_HEADER)
    return 0


def _cmd_sweep(args) -> int:
    doc = read_scenario(args.scenario)
    fixed = {k: v for k, v in _overrides(args).items() if k not in ("planner", "demand", args.axis)}
    base = build(doc, fixed)[1]
    spec = SweepSpec(
        axis=args.axis,
        values=args.values,
        reps=args.reps,
        planners=args.planner or [base.planner_kind],
        demand_models=args.demand or [base.demand_model],
        fixed=fixed,
    )
    rows = run_sweep(spec, doc, args.out)
    _print_rows(rows, METRICS_HEADER + ["rep", "status"])
    return 0


def _cmd_validate(args) -> int:
    world, cfg = build(read_scenario(args.scenario))
    rp = cfg.reward_params
    print(f"ok: grid {world.grid_n}x{world.grid_n}, {len(world.obstacles)} obstacles, {len(world.users)} users, "
          f"{len(cfg.uav_starts)} UAVs, K={rp.k_risk} M={rp.m_demand} planner={cfg.planner_kind}")
    return 0


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "validate": _cmd_validate}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except (ScenarioError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
