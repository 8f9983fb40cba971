"""Scenario files, seeded scene generation, single runs and parameter sweeps.

A scenario is one YAML document. Obstacles and users are either listed
explicitly or described by a ``generate`` block that is expanded from a
seed; the top-level ``seed`` feeds every generator that does not pin its
own, and the training RNG.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from .env import DemandParams, Obstacle, Point2, TerminalUser, World, node_of, node_point
from .planner import RewardParams
from .sim import SimConfig, SimTrace, RunMetrics, run

METRICS_HEADER = [
    "seed", "planner", "demand_model", "K", "M", "eta", "beta",
    "qos", "avg_path_raw", "avg_path_norm", "avg_risk", "ticks", "deadlock",
]
SWEEP_EXTRA = ["path_mode", "max_ticks", "axis", "value", "rep", "status", "error"]

BUILTIN = ("paper_default", "ring_fence", "crossing")

_PLANNER_KEYS = {
    "K", "M", "kind", "demand_model", "path_mode", "step_length", "obs_radius", "max_ticks",
    "train_epochs", "samples_per_unit", "peer_sigma", "cycle_window",
}
_DEMAND_KEYS = {"eta", "beta", "tau", "epsilon", "linear_scale"}
_TOP_KEYS = {"name", "seed", "grid_n", "target", "obstacles", "users", "uavs", "demand", "planner"}


class ScenarioError(ValueError):
    """Malformed or invalid scenario; the message names the offending field."""


# --- parsing -----------------------------------------------------------------

def builtin_path(name: str) -> Path:
    return Path(str(resources.files("uavmec") / "scenarios" / f"{name}.yaml"))


def resolve_path(path: str | Path) -> Path:
    p = Path(path)
    if not p.exists() and str(path) in BUILTIN:
        return builtin_path(str(path))
    return p


def read_scenario(path: str | Path) -> dict:
    p = resolve_path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ScenarioError(f"{p}: cannot read scenario ({e.strerror})") from e
    return parse_scenario(text, source=str(p))


def parse_scenario(text: str, source: str = "<string>") -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        problem = getattr(e, "problem", None) or str(e)
        raise ScenarioError(f"{where}: parse error: {problem}") from e
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}: top level must be a mapping")
    _check_keys(doc, source)
    return doc


def _check_keys(doc: dict, source: str) -> None:
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ScenarioError(f"{source}: unknown field(s) {sorted(unknown)}")


def _point(value, where: str) -> Point2:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ScenarioError(f"{where}: expected [x, y], got {value!r}")
    try:
        p = Point2(float(value[0]), float(value[1]))
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"{where}: {e}") from e
    if not p.in_unit_square():
        raise ScenarioError(f"{where}: point {value} outside the unit square")
    return p


def _num(section: dict, key: str, where: str, default=None, cast=float):
    if key not in section or section[key] is None:
        return default
    try:
        return cast(section[key])
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"{where}.{key}: expected a number, got {section[key]!r}") from e


def _range(spec: dict, key: str, where: str, default) -> tuple[float, float]:
    lo, hi = spec.get(key, default)
    lo, hi = float(lo), float(hi)
    if lo > hi:
        raise ScenarioError(f"{where}.{key}: empty range [{lo}, {hi}]")
    return lo, hi


def _free_nodes(grid_n: int, keep_clear: Sequence[Point2], clearance: float, taken: set[int]) -> list[int]:
    out = []
    for k in range(grid_n * grid_n):
        if k in taken:
            continue
        p = node_point(grid_n, k)
        if all(p.dist(q) > clearance for q in keep_clear):
            out.append(k)
    return out


def _generate_obstacles(spec: dict, grid_n: int, seed: int, keep_clear, where: str) -> list[Obstacle]:
    count = int(spec.get("count", 10))
    lo, hi = _range(spec, "sigma", where, (5e-4, 2e-3))
    if lo <= 0:
        raise ScenarioError(f"{where}.sigma: obstacle sigma must be > 0")
    rng = np.random.default_rng([int(spec.get("seed", seed)), 1])
    nodes = _free_nodes(grid_n, keep_clear, float(spec.get("clearance", 0.15)), set())
    if count > len(nodes):
        raise ScenarioError(f"{where}.count: only {len(nodes)} free grid nodes for {count} obstacles")
    picked = rng.choice(len(nodes), size=count, replace=False)
    sig = rng.uniform(lo, hi, size=count)
    return [Obstacle(node_point(grid_n, nodes[i]), float(s)) for i, s in zip(picked, sig)]


def _generate_users(spec: dict, grid_n: int, seed: int, keep_clear, taken: set[int], where: str):
    count = int(spec.get("count", 6))
    lo, hi = _range(spec, "demand", where, (0.0, 10.0))
    if lo < 0:
        raise ScenarioError(f"{where}.demand: demands must be nonnegative")
    rng = np.random.default_rng([int(spec.get("seed", seed)), 2])
    nodes = _free_nodes(grid_n, keep_clear, float(spec.get("clearance", 0.1)), taken)
    if count > len(nodes):
        raise ScenarioError(f"{where}.count: only {len(nodes)} free grid nodes for {count} users")
    picked = rng.choice(len(nodes), size=count, replace=False)
    dem = rng.uniform(lo, hi, size=count)
    return [TerminalUser(node_point(grid_n, nodes[i]), float(d)) for i, d in zip(picked, dem)]


def build(doc: dict, overrides: dict | None = None) -> tuple[World, SimConfig]:
    """Resolve a parsed scenario (plus CLI-style overrides) into a World and SimConfig."""
    _check_keys(doc, "scenario")
    doc = apply_overrides(doc, overrides or {})
    seed = _num(doc, "seed", "seed", 0, int)
    if seed < 0:
        raise ScenarioError("seed: must be nonnegative")
    grid_n = _num(doc, "grid_n", "grid_n", None, int)
    if grid_n is None or grid_n < 2:
        raise ScenarioError("grid_n: required, must be >= 2")
    if "target" not in doc:
        raise ScenarioError("target: required")
    target = _point(doc["target"], "target")
    if "uavs" not in doc or not doc["uavs"]:
        raise ScenarioError("uavs: at least one UAV start is required")
    starts = [_point(p, f"uavs[{i}]") for i, p in enumerate(doc["uavs"])]

    dsec = doc.get("demand") or {}
    unknown = set(dsec) - _DEMAND_KEYS
    if unknown:
        raise ScenarioError(f"demand: unknown field(s) {sorted(unknown)}")
    try:
        dp = DemandParams(**{k: float(v) for k, v in dsec.items()})
    except ValueError as e:
        raise ScenarioError(f"demand: {e}") from e

    keep_clear = [target, *starts]
    osec = doc.get("obstacles") or []
    if isinstance(osec, dict) and "generate" in osec:
        obstacles = _generate_obstacles(osec["generate"], grid_n, seed, keep_clear, "obstacles.generate")
    elif isinstance(osec, list):
        obstacles = []
        for i, o in enumerate(osec):
            where = f"obstacles[{i}]"
            if not isinstance(o, dict) or "position" not in o or "sigma" not in o:
                raise ScenarioError(f"{where}: expected {{position: [x, y], sigma: s}}")
            try:
                obstacles.append(Obstacle(_point(o["position"], f"{where}.position"), float(o["sigma"])))
            except ValueError as e:
                raise ScenarioError(f"{where}: {e}") from e
    else:
        raise ScenarioError("obstacles: expected a list or a {generate: ...} block")

    usec = doc.get("users") or []
    if isinstance(usec, dict) and "generate" in usec:
        taken = {node_of(grid_n, o.position) for o in obstacles}
        users = _generate_users(usec["generate"], grid_n, seed, keep_clear, taken, "users.generate")
    elif isinstance(usec, list):
        users = []
        for i, u in enumerate(usec):
            where = f"users[{i}]"
            if not isinstance(u, dict) or "position" not in u or "demand" not in u:
                raise ScenarioError(f"{where}: expected {{position: [x, y], demand: d}}")
            try:
                users.append(TerminalUser(_point(u["position"], f"{where}.position"), float(u["demand"])))
            except ValueError as e:
                raise ScenarioError(f"{where}: {e}") from e
    else:
        raise ScenarioError("users: expected a list or a {generate: ...} block")

    try:
        world = World(grid_n, tuple(obstacles), tuple(users), target, dp)
    except ValueError as e:
        raise ScenarioError(f"scene: {e}") from e

    psec = doc.get("planner") or {}
    unknown = set(psec) - _PLANNER_KEYS
    if unknown:
        raise ScenarioError(f"planner: unknown field(s) {sorted(unknown)}")
    try:
        rp = RewardParams(_num(psec, "K", "planner", 20.0), _num(psec, "M", "planner", 1.0))
        cfg = SimConfig(
            world=world,
            uav_starts=starts,
            reward_params=rp,
            step_length=_num(psec, "step_length", "planner", 0.02),
            obs_radius=_num(psec, "obs_radius", "planner", 0.2),
            max_ticks=_num(psec, "max_ticks", "planner", None, int),
            planner_kind=str(psec.get("kind", "rl")),
            demand_model=str(psec.get("demand_model", "sigmoid")),
            path_mode=str(psec.get("path_mode", "descent")),
            seed=seed,
            train_epochs=_num(psec, "train_epochs", "planner", 3, int),
            samples_per_unit=_num(psec, "samples_per_unit", "planner", 64, int),
            peer_sigma=_num(psec, "peer_sigma", "planner", None),
            cycle_window=_num(psec, "cycle_window", "planner", 4, int),
        )
    except ValueError as e:
        raise ScenarioError(f"planner: {e}") from e
    return world, cfg


_OVERRIDE_MAP = {
    "K": ("planner", "K"),
    "M": ("planner", "M"),
    "planner": ("planner", "kind"),
    "demand": ("planner", "demand_model"),
    "path_mode": ("planner", "path_mode"),
    "max_ticks": ("planner", "max_ticks"),
    "eta": ("demand", "eta"),
    "beta": ("demand", "beta"),
}


def apply_overrides(doc: dict, overrides: dict) -> dict:
    doc = copy.deepcopy(doc)
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "seed":
            doc["seed"] = int(value)
            continue
        if key not in _OVERRIDE_MAP:
            raise ScenarioError(f"unknown override {key!r}")
        section, field_name = _OVERRIDE_MAP[key]
        doc.setdefault(section, {})
        if doc[section] is None:
            doc[section] = {}
        doc[section][field_name] = value
    return doc


def load_scenario(path: str | Path, overrides: dict | None = None) -> tuple[World, SimConfig]:
    return build(read_scenario(path), overrides)


def dump_scenario(world: World, config: SimConfig, name: str = "expanded") -> str:
    """Serialize a fully resolved scene; generators appear as explicit lists."""
    rp = config.reward_params
    dp = world.demand_params
    doc = {
        "name": name,
        "seed": config.seed,
        "grid_n": world.grid_n,
        "target": list(world.target.as_tuple()),
        "obstacles": [{"position": list(o.position.as_tuple()), "sigma": o.sigma} for o in world.obstacles],
        "users": [{"position": list(u.position.as_tuple()), "demand": u.initial_demand} for u in world.users],
        "uavs": [list(p.as_tuple()) for p in config.uav_starts],
        "demand": {"eta": dp.eta, "beta": dp.beta, "tau": dp.tau, "epsilon": dp.epsilon,
                   "linear_scale": dp.linear_scale},
        "planner": {
            "K": rp.k_risk, "M": rp.m_demand, "kind": config.planner_kind,
            "demand_model": config.demand_model, "path_mode": config.path_mode,
            "step_length": config.step_length, "obs_radius": config.obs_radius,
            "max_ticks": config.max_ticks, "train_epochs": config.train_epochs,
            "samples_per_unit": config.samples_per_unit, "peer_sigma": config.peer_sigma,
            "cycle_window": config.cycle_window,
        },
    }
    return yaml.safe_dump(doc, sort_keys=False)


# --- output ------------------------------------------------------------------

def metrics_row(config: SimConfig, metrics: RunMetrics) -> dict:
    dp = config.world.demand_params
    rp = config.reward_params
    return {
        "seed": config.seed,
        "planner": config.planner_kind,
        "demand_model": config.demand_model,
        "K": rp.k_risk,
        "M": rp.m_demand,
        "eta": dp.eta,
        "beta": dp.beta,
        "qos": metrics.qos,
        "avg_path_raw": metrics.avg_path_length_raw,
        "avg_path_norm": metrics.avg_path_length_normalized,
        "avg_risk": metrics.avg_risk,
        "ticks": metrics.ticks_used,
        "deadlock": str(metrics.deadlock).lower(),
    }


def write_csv(path: Path, header: Sequence[str], rows: Iterable[dict]) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k, "")) for k in header})
    path.write_text(buf.getvalue())


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


def trace_lines(trace: SimTrace) -> Iterable[str]:
    for ev in trace.events:
        yield json.dumps({"type": "event", **ev.to_record()})
    for t, snap in enumerate(trace.demand_snapshots, start=1):
        yield json.dumps({"type": "demand", "tick": t, "remaining": list(snap)})


def write_trace(path: Path, trace: SimTrace) -> None:
    path.write_text("".join(line + "\n" for line in trace_lines(trace)))


def read_trace(path: Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


@dataclass
class RunResult:
    config: SimConfig
    trace: SimTrace
    metrics: RunMetrics
    row: dict
    metrics_path: Path | None = None
    trace_path: Path | None = None


def run_config(config: SimConfig) -> RunResult:
    trace, metrics = run(config)
    return RunResult(config, trace, metrics, metrics_row(config, metrics))


def run_once(scenario: str | Path | dict, overrides: dict | None = None, out_dir: str | Path | None = None) -> RunResult:
    """Run one episode; with ``out_dir`` write ``metrics.csv`` and ``trace.jsonl`` there."""
    doc = scenario if isinstance(scenario, dict) else read_scenario(scenario)
    _, config = build(doc, overrides)
    res = run_config(config)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        res.metrics_path = out / "metrics.csv"
        res.trace_path = out / "trace.jsonl"
        write_csv(res.metrics_path, METRICS_HEADER, [res.row])
        write_trace(res.trace_path, res.trace)
    return res


# --- sweeps ------------------------------------------------------------------

@dataclass
class SweepSpec:
    axis: str
    values: list[float]
    reps: int = 1
    planners: list[str] = field(default_factory=lambda: ["rl"])
    demand_models: list[str] = field(default_factory=lambda: ["sigmoid"])
    fixed: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.axis not in ("K", "M"):
            raise ValueError(f"axis must be K or M, got {self.axis!r}")
        if not self.values:
            raise ValueError("sweep values must be non-empty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


def child_seed(parent: int, rep: int) -> int:
    """Seed of repetition ``rep``; repetition 0 reuses the parent seed."""
    if rep == 0:
        return parent
    digest = hashlib.sha256(f"{parent}:{rep}".encode()).digest()
    return int.from_bytes(digest[:4], "big") & 0x7FFFFFFF


def sweep_rows(spec: SweepSpec, doc: dict) -> list[tuple[dict, SimTrace | None]]:
    parent = int(apply_overrides(doc, spec.fixed).get("seed", 0) or 0)
    jobs = []
    for value in spec.values:
        for rep in range(spec.reps):
            for planner in spec.planners:
                for model in spec.demand_models:
                    jobs.append((value, rep, planner, model))
    jobs.sort()
    out = []
    for value, rep, planner, model in jobs:
        ov = {**spec.fixed, spec.axis: value, "seed": child_seed(parent, rep), "planner": planner, "demand": model}
        extra = {"axis": spec.axis, "value": value, "rep": rep}
        try:
            _, config = build(doc, ov)
            res = run_config(config)
            row = {**res.row, **extra, "path_mode": config.path_mode, "max_ticks": config.max_ticks,
                   "status": "ok", "error": ""}
            for j, t in enumerate(res.trace.completion_ticks()):
                row[f"done_u{j}"] = t
            out.append((row, res.trace))
        except Exception as e:  # noqa: BLE001 - a failed point is recorded and the sweep goes on
            row = {"seed": ov["seed"], "planner": planner, "demand_model": model, **extra,
                   "status": "error", "error": f"{type(e).__name__}: {e}"}
            out.append((row, None))
    return out


def run_sweep(spec: SweepSpec, scenario: str | Path | dict, out_dir: str | Path | None = None) -> list[dict]:
    """One metrics row per (value, rep, planner, demand model), sorted by that tuple."""
    doc = scenario if isinstance(scenario, dict) else read_scenario(scenario)
    results = sweep_rows(spec, doc)
    rows = [r for r, _ in results]
    if out_dir is not None:
        out = Path(out_dir)
        (out / "traces").mkdir(parents=True, exist_ok=True)
        n_users = max((sum(1 for k in r if k.startswith("done_u")) for r in rows), default=0)
        header = METRICS_HEADER + SWEEP_EXTRA + [f"done_u{j}" for j in range(n_users)]
        write_csv(out / "sweep.csv", header, rows)
        for row, trace in results:
            if trace is not None:
                name = f"{spec.axis}={row['value']!r}_rep{row['rep']}_{row['planner']}_{row['demand_model']}.jsonl"
                write_trace(out / "traces" / name, trace)
    return rows
