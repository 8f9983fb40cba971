"""Greedy eight-direction baseline.

Despite the name this is not a best-first search: each tick the UAV scores
the eight candidate points one ``unit_step`` away with

    F = dist(candidate, target) + K * R(candidate) + M / (1 + detected demand)

and moves to the cheapest. Direction 0 points along +x and indices grow
counter-clockwise in 45 degree increments; ties go to the lowest index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .env import DemandParams, Point2, detected_demand, point_risk
from .planner import Knowledge, RewardParams

if TYPE_CHECKING:
    from .sim import SimTrace

_BOUND_TOL = 1e-12


@dataclass(frozen=True)
class AStarConfig:
    unit_step: float = 0.02
    reward_params: RewardParams = field(default_factory=RewardParams)
    demand_params: DemandParams = field(default_factory=DemandParams)
    cycle_window: int = 4
    demand_model: str = "sigmoid"
    directions: int = 8

    def __post_init__(self):
        if self.directions != 8:
            raise ValueError("the baseline only supports 8 directions")
        if not self.unit_step > 0:
            raise ValueError("unit_step must be > 0")
        if self.cycle_window < 1:
            raise ValueError("cycle_window must be >= 1")


def astar_weight(
    p_i: Point2,
    target: Point2,
    knowledge: Knowledge,
    params: RewardParams,
    demand_params: DemandParams,
    demand_model: str = "sigmoid",
) -> float:
    w = p_i.dist(target)
    if params.k_risk:
        w += params.k_risk * point_risk(knowledge.known_obstacles, p_i)
    if params.m_demand:
        w += params.m_demand / (1.0 + detected_demand(knowledge.users, p_i, demand_params, demand_model))
    return w


def candidates(pos: Point2, unit_step: float) -> list[tuple[int, Point2]]:
    """In-bounds points one step away, tagged with their direction index."""
    out = []
    for k in range(8):
        a = k * math.pi / 4
        x = pos.x + unit_step * math.cos(a)
        y = pos.y + unit_step * math.sin(a)
        if -_BOUND_TOL <= x <= 1 + _BOUND_TOL and -_BOUND_TOL <= y <= 1 + _BOUND_TOL:
            out.append((k, Point2(min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0))))
    return out


def greedy_step(pos: Point2, target: Point2, knowledge: Knowledge, config: AStarConfig) -> Point2:
    if pos.dist(target) <= config.unit_step:
        return target
    best, best_w = pos, math.inf
    for _, c in candidates(pos, config.unit_step):
        w = astar_weight(c, target, knowledge, config.reward_params, config.demand_params, config.demand_model)
        if w < best_w:
            best, best_w = c, w
    return best


def astar_step(agent, world, config: AStarConfig):
    """Move ``agent`` one greedy step toward the world target; returns the agent."""
    if agent.arrived:
        return agent
    agent.memory.users = list(world.users)
    agent.pos = greedy_step(agent.pos, world.target, agent.memory, config)
    return agent


def detect_deadlock(trace: SimTrace, config: AStarConfig) -> bool:
    """True if the run ran out of ticks, or some UAV keeps revisiting spots without getting closer."""
    if not trace.all_arrived and trace.ticks_used >= trace.max_ticks:
        return True
    tol = config.unit_step / 2
    target = trace.target
    for uav_id in range(trace.n_uavs):
        best = math.inf
        history: list[tuple[float, float]] = []
        for ev in trace.events_for(uav_id):
            p = ev.pos
            d = p.dist(target)
            if d < best - 1e-12:
                best = d
                history = [p.as_tuple()]
                continue
            if history:
                h = np.asarray(history)
                revisits = int(np.count_nonzero(np.hypot(h[:, 0] - p.x, h[:, 1] - p.y) <= tol))
                if revisits > config.cycle_window:
                    return True
            history.append(p.as_tuple())
    return False
