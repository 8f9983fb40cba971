"""Sequential multi-UAV episode: scan, replan on new obstacles, move, serve."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .astar import AStarConfig, astar_step
from .env import (
    DEFAULT_SAMPLES_PER_UNIT,
    DEMAND_MODELS,
    Obstacle,
    Point2,
    TerminalUser,
    World,
    as_point,
    node_point,
    segment_risk,
    serve,
)
from .planner import (
    PATH_MODES,
    CostMatrix,
    Knowledge,
    RewardParams,
    RiskCache,
    best_successor,
    extract_path_descent,
    extract_path_verbatim,
    init_cost_matrix,
    reward_columns,
    train,
)

PLANNER_KINDS = ("rl", "astar")


@dataclass
class SimConfig:
    world: World
    uav_starts: list[Point2]
    reward_params: RewardParams = field(default_factory=RewardParams)
    step_length: float = 0.02
    obs_radius: float = 0.2
    max_ticks: int | None = None
    planner_kind: str = "rl"
    demand_model: str = "sigmoid"
    path_mode: str = "descent"
    seed: int = 0
    train_epochs: int = 3
    samples_per_unit: int = DEFAULT_SAMPLES_PER_UNIT
    peer_sigma: float | None = None
    cycle_window: int = 4

    def __post_init__(self):
        self.uav_starts = [as_point(p) for p in self.uav_starts]
        if not self.uav_starts:
            raise ValueError("at least one UAV is required")
        for p in self.uav_starts:
            if not p.in_unit_square():
                raise ValueError(f"UAV start {p} outside the unit square")
        if self.max_ticks is None:
            self.max_ticks = 50 * self.world.grid_n
        if self.max_ticks < 1:
            raise ValueError("max_ticks must be >= 1")
        if not self.step_length > 0:
            raise ValueError("step_length must be > 0")
        if not self.obs_radius > 0:
            raise ValueError("obs_radius must be > 0")
        if self.planner_kind not in PLANNER_KINDS:
            raise ValueError(f"planner_kind must be one of {PLANNER_KINDS}")
        if self.demand_model not in DEMAND_MODELS:
            raise ValueError(f"demand_model must be one of {DEMAND_MODELS}")
        if self.path_mode not in PATH_MODES:
            raise ValueError(f"path_mode must be one of {PATH_MODES}")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.train_epochs < 1:
            raise ValueError("train_epochs must be >= 1")
        if self.peer_sigma is not None and not self.peer_sigma > 0:
            raise ValueError("peer_sigma must be > 0")

    @property
    def uav_sigma(self) -> float:
        if self.peer_sigma is not None:
            return self.peer_sigma
        sig = [o.sigma for o in self.world.obstacles]
        return 0.5 * float(np.mean(sig)) if sig else 5e-4

    def astar_config(self) -> AStarConfig:
        return AStarConfig(
            unit_step=self.step_length,
            reward_params=self.reward_params,
            demand_params=self.world.demand_params,
            cycle_window=self.cycle_window,
            demand_model=self.demand_model,
        )


@dataclass
class UavAgent:
    id: int
    pos: Point2
    step_length: float
    obs_radius: float
    memory: Knowledge = field(default_factory=Knowledge)
    cost: CostMatrix | None = None
    path: list[int] = field(default_factory=list)
    arrived: bool = False
    start: Point2 | None = None
    # positions of peers as of this agent's previous scan
    last_peers: dict[int, Point2] = field(default_factory=dict)
    plans: int = 0
    traveled: float = 0.0
    risk: float = 0.0
    risk_cache: RiskCache | None = field(default=None, repr=False)
    reward_cache: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.start is None:
            self.start = self.pos


@dataclass(frozen=True)
class TraceEvent:
    tick: int
    uav_id: int
    pos: Point2
    replanned: bool
    served_user_ids: tuple[int, ...]
    hovered: bool = False
    refreshed: bool = False

    def to_record(self) -> dict:
        return {
            "tick": self.tick,
            "uav": self.uav_id,
            "x": self.pos.x,
            "y": self.pos.y,
            "replanned": self.replanned,
            "refreshed": self.refreshed,
            "hovered": self.hovered,
            "served": list(self.served_user_ids),
        }


@dataclass
class SimTrace:
    events: list[TraceEvent] = field(default_factory=list)
    demand_snapshots: list[tuple[float, ...]] = field(default_factory=list)
    initial_demands: tuple[float, ...] = ()
    target: Point2 = Point2(0.0, 0.0)
    max_ticks: int = 0
    n_uavs: int = 0
    ticks_used: int = 0
    all_arrived: bool = False

    def events_for(self, uav_id: int) -> list[TraceEvent]:
        return [e for e in self.events if e.uav_id == uav_id]

    def qos_at(self, tick: int) -> float:
        """QoS after ``tick`` ticks; the final snapshot once the run has ended."""
        if tick <= 0 or not self.demand_snapshots:
            remaining = self.initial_demands
        else:
            remaining = self.demand_snapshots[min(tick, len(self.demand_snapshots)) - 1]
        return qos_from(self.initial_demands, remaining)

    def completion_ticks(self) -> list[int | None]:
        """First tick at which each user's demand reached zero (None if never)."""
        out: list[int | None] = []
        for j, d0 in enumerate(self.initial_demands):
            done = 0 if d0 == 0 else None
            if done is None:
                for t, snap in enumerate(self.demand_snapshots, start=1):
                    if snap[j] <= 0:
                        done = t
                        break
            out.append(done)
        return out


@dataclass(frozen=True)
class RunMetrics:
    qos: float
    avg_path_length_raw: float
    avg_path_length_normalized: float
    avg_risk: float
    ticks_used: int
    deadlock: bool


def qos_from(initial: Sequence[float], remaining: Sequence[float]) -> float:
    total = float(sum(initial))
    if total == 0:
        return 1.0
    return 1.0 - float(sum(remaining)) / total


def qos(users: Sequence[TerminalUser]) -> float:
    """Fraction of total initial demand already served; 1.0 when there was none."""
    return qos_from([u.initial_demand for u in users], [u.remaining_demand for u in users])


# --- per-agent operations ------------------------------------------------------

def scan_env(
    agent: UavAgent,
    world: World,
    peer_positions: dict[int, Point2] | Sequence[Point2],
    peer_sigma: float = 5e-4,
) -> tuple[bool, UavAgent]:
    """Record obstacles and peers inside the observation disk.

    Returns whether anything new was seen: an obstacle not yet in memory, or
    a peer at a position different from where this agent last saw it.
    """
    if not isinstance(peer_positions, dict):
        peer_positions = dict(enumerate(peer_positions))
    found = False
    for o in world.obstacles:
        if agent.pos.dist(o.position) <= agent.obs_radius and o not in agent.memory.obstacles:
            agent.memory.obstacles.append(o)
            found = True
    seen: dict[int, Point2] = {}
    for pid, p in peer_positions.items():
        if pid == agent.id or agent.pos.dist(p) > agent.obs_radius:
            continue
        seen[pid] = p
        agent.memory.peers.append(Obstacle(p, peer_sigma))
        if agent.last_peers.get(pid) != p:
            found = True
    agent.last_peers = seen
    return found, agent


def move_step(agent: UavAgent, waypoint: Point2) -> UavAgent:
    d = agent.pos.dist(waypoint)
    if d <= agent.step_length:
        agent.pos = waypoint
    else:
        f = agent.step_length / d
        agent.pos = Point2(agent.pos.x + f * (waypoint.x - agent.pos.x), agent.pos.y + f * (waypoint.y - agent.pos.y))
    return agent


def _train_seed(config: SimConfig, agent: UavAgent) -> list[int]:
    return [config.seed, agent.id, agent.plans]


def _start_node(agent: UavAgent, world: World) -> int:
    """Lattice node to extract from: the agent's own node, or else the corner of
    its cell that is cheapest to reach and continue from."""
    n = world.grid_n
    here = world.node_of(agent.pos, strict=True)
    if here is not None:
        return here
    h = world.spacing
    i0 = min(int(agent.pos.x / h), n - 2)
    j0 = min(int(agent.pos.y / h), n - 2)
    best, best_val = None, math.inf
    for i in (i0, i0 + 1):
        for j in (j0, j0 + 1):
            k = i * n + j
            v = agent.cost[k] + agent.pos.dist(node_point(n, k))
            if v < best_val:
                best, best_val = k, v
    return best if best is not None else world.node_of(agent.pos)


def _extract(agent: UavAgent, world: World, config: SimConfig) -> list[int]:
    n = world.grid_n
    here = _start_node(agent, world)
    if config.path_mode == "descent":
        path = list(extract_path_descent(agent.cost, here, n * n).waypoints)
    else:
        # global ascending-cost order, reversed so it ends at the target; only nodes cheaper than here
        order = extract_path_verbatim(agent.cost, n * n).waypoints
        g_here = agent.cost[here]
        path = [here] + [k for k in reversed(order) if agent.cost[k] < g_here]
    return path


def plan(agent: UavAgent, world: World, config: SimConfig, refresh_only: bool = False) -> UavAgent:
    """Retrain the agent's cost matrix from scratch and re-extract its path.

    ``refresh_only`` keeps the cached risk table (memory unchanged) and only
    picks up the current demands.
    """
    n = world.grid_n
    agent.memory.users = list(world.users)
    if agent.risk_cache is None:
        agent.risk_cache = RiskCache(n, config.samples_per_unit)
    dp = world.demand_params
    rp = config.reward_params
    if refresh_only and agent.reward_cache is not None:
        base = agent.reward_cache
    else:
        base = reward_columns(n, agent.memory, replace(rp, m_demand=0.0), dp,
                              config.samples_per_unit, config.demand_model, agent.risk_cache)
        agent.reward_cache = base
    agent.cost = train(
        init_cost_matrix(world), agent.memory, rp, dp, config.train_epochs, _train_seed(config, agent),
        samples_per_unit=config.samples_per_unit, demand_model=config.demand_model,
        base_columns=base,
    )
    agent.plans += 1
    agent.path = _extract(agent, world, config)
    return agent


def _fallback_hop(agent: UavAgent, world: World, config: SimConfig) -> int:
    here = _start_node(agent, world)
    return best_successor(agent.cost, here, agent.memory, config.reward_params, world.demand_params,
                          config.samples_per_unit, config.demand_model, base_columns=agent.reward_cache)


def _users_in_range(world: World, p: Point2) -> list[int]:
    eps = world.demand_params.epsilon
    return [j for j, u in enumerate(world.users) if p.dist(u.position) <= eps]


def _rl_turn(agent: UavAgent, world: World, config: SimConfig, found: bool) -> tuple[Point2, bool, bool]:
    """Decide where the agent moves this tick. Returns (waypoint, hovered, refreshed)."""
    if found:
        plan(agent, world, config)
    while agent.path and node_point(world.grid_n, agent.path[0]) == agent.pos:
        agent.path.pop(0)
    if agent.path:
        return node_point(world.grid_n, agent.path[0]), False, False

    # Path used up short of the target: G has a local minimum here. Refresh it
    # with the current demands; stay put while still serving, otherwise take
    # the hop the matrix prefers.
    plan(agent, world, config, refresh_only=True)
    while agent.path and node_point(world.grid_n, agent.path[0]) == agent.pos:
        agent.path.pop(0)
    if agent.path:
        return node_point(world.grid_n, agent.path[0]), False, True
    if any(world.users[j].remaining_demand > 0 for j in _users_in_range(world, agent.pos)):
        return agent.pos, True, True
    hop = _fallback_hop(agent, world, config)
    agent.path = [hop]
    return node_point(world.grid_n, hop), False, True


def tick(
    state: list[UavAgent],
    world: World,
    config: SimConfig,
    tick_index: int = 1,
) -> tuple[list[UavAgent], World, list[TraceEvent]]:
    events = []
    sigma = config.uav_sigma
    astar_cfg = config.astar_config() if config.planner_kind == "astar" else None
    truth = world.obstacles
    for agent in sorted(state, key=lambda a: a.id):
        if agent.arrived:
            continue
        agent.memory.peers = []
        peers = {a.id: a.pos for a in state if a.id != agent.id}
        found, _ = scan_env(agent, world, peers, sigma)
        prev = agent.pos
        hovered = refreshed = False
        if astar_cfg is not None:
            astar_step(agent, world, astar_cfg)
        else:
            waypoint, hovered, refreshed = _rl_turn(agent, world, config, found)
            move_step(agent, waypoint)
        if agent.pos != prev:
            agent.traveled += prev.dist(agent.pos)
            agent.risk += segment_risk(truth, prev, agent.pos, config.samples_per_unit)
        if agent.pos == world.target:
            agent.arrived = True
        served = tuple(j for j in _users_in_range(world, agent.pos) if world.users[j].remaining_demand > 0)
        world = world.with_users(serve(world.users, [agent.pos], world.demand_params))
        events.append(TraceEvent(tick_index, agent.id, agent.pos, found, served, hovered, refreshed))
    return state, world, events


def init_agents(config: SimConfig) -> list[UavAgent]:
    world = config.world
    agents = [
        UavAgent(i, p, config.step_length, config.obs_radius, Knowledge(users=list(world.users)))
        for i, p in enumerate(config.uav_starts)
    ]
    for a in agents:
        a.arrived = a.pos == world.target
        if config.planner_kind == "rl" and not a.arrived:
            plan(a, world, config)
    return agents


def run(config: SimConfig) -> tuple[SimTrace, RunMetrics]:
    """Play one episode until every UAV has arrived or the tick budget is spent."""
    world = config.world
    agents = init_agents(config)
    trace = SimTrace(
        initial_demands=tuple(u.initial_demand for u in world.users),
        target=world.target,
        max_ticks=config.max_ticks,
        n_uavs=len(agents),
    )
    t = 0
    while t < config.max_ticks and not all(a.arrived for a in agents):
        t += 1
        agents, world, events = tick(agents, world, config, t)
        trace.events.extend(events)
        trace.demand_snapshots.append(tuple(u.remaining_demand for u in world.users))
    trace.ticks_used = t
    trace.all_arrived = all(a.arrived for a in agents)

    # a run that finished inside the budget is never a deadlock, whatever loops it went through
    deadlock = not trace.all_arrived
    norm = []
    for a in agents:
        straight = a.start.dist(world.target)
        norm.append(a.traveled / straight if straight > 0 else 1.0)
    metrics = RunMetrics(
        qos=qos(world.users),
        avg_path_length_raw=float(np.mean([a.traveled for a in agents])),
        avg_path_length_normalized=float(np.mean(norm)),
        avg_risk=float(np.mean([a.risk for a in agents])),
        ticks_used=t,
        deadlock=deadlock,
    )
    return trace, metrics
