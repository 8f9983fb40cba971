"""Cost-matrix planner: pairwise reward, stochastic min-update training, path extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .env import (
    DEFAULT_SAMPLES_PER_UNIT,
    RISK_SIGMA_POWER,
    DemandParams,
    Obstacle,
    Point2,
    TerminalUser,
    _risk_kernel,
    demand_field,
    detected_demand,
    grid_coords,
    node_point,
    segment_risk,
    segment_samples,
)

INF = math.inf
PATH_MODES = ("descent", "verbatim")

# Kernel values below this are dropped from segment integrals (error <= 1e-12 per unit length).
_NEGLIGIBLE_RISK = 1e-12

_NEIGHBOR_STEPS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class RewardParams:
    k_risk: float = 20.0
    m_demand: float = 1.0

    def __post_init__(self):
        if self.k_risk < 0:
            raise ValueError(f"k_risk must be >= 0, got {self.k_risk}")
        if self.m_demand < 0:
            raise ValueError(f"m_demand must be >= 0, got {self.m_demand}")


@dataclass
class Knowledge:
    """What a UAV believes: obstacles it has seen, peers seen this tick, current demands."""

    obstacles: list[Obstacle] = field(default_factory=list)
    peers: list[Obstacle] = field(default_factory=list)
    users: list[TerminalUser] = field(default_factory=list)

    @property
    def known_obstacles(self) -> list[Obstacle]:
        return [*self.obstacles, *self.peers]


@dataclass(frozen=True)
class CostMatrix:
    values: np.ndarray
    target_index: int
    epochs_trained: int = 0

    @property
    def grid_n(self) -> int:
        return self.values.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __getitem__(self, node: int) -> float:
        return float(self.flat[node])


@dataclass(frozen=True)
class Path:
    waypoints: tuple[int, ...]
    stalled: bool = False

    def __len__(self) -> int:
        return len(self.waypoints)

    def __iter__(self):
        return iter(self.waypoints)

    def __getitem__(self, i):
        return self.waypoints[i]


def reward(
    p_i: Point2,
    p_r: Point2,
    knowledge: Knowledge,
    params: RewardParams,
    demand_params: DemandParams,
    samples_per_unit: int = DEFAULT_SAMPLES_PER_UNIT,
    demand_model: str = "sigmoid",
) -> float:
    """Cost of hopping from ``p_i`` to ``p_r``: distance + K * path risk + M / (1 + demand at p_i)."""
    cost = p_i.dist(p_r)
    if params.k_risk:
        cost += params.k_risk * segment_risk(knowledge.known_obstacles, p_i, p_r, samples_per_unit)
    if params.m_demand:
        cost += params.m_demand / (1.0 + detected_demand(knowledge.users, p_i, demand_params, demand_model))
    return cost


# --- pairwise segment risk over the lattice ----------------------------------

class SegmentGeometry:
    """Trapezoid sample points for every unordered pair of lattice nodes.

    Built once per (grid_n, samples_per_unit) and shared by all agents.
    """

    def __init__(self, grid_n: int, samples_per_unit: int = DEFAULT_SAMPLES_PER_UNIT):
        self.grid_n = grid_n
        self.samples_per_unit = samples_per_unit
        coords = grid_coords(grid_n)
        n = len(coords)
        iu, ju = np.triu_indices(n, k=1)
        self.pair_i = iu
        self.pair_j = ju
        dx = coords[ju, 0] - coords[iu, 0]
        dy = coords[ju, 1] - coords[iu, 1]
        length = np.hypot(dx, dy)
        counts = segment_samples(length, samples_per_unit)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        total = int(counts.sum())

        seg = np.repeat(np.arange(len(iu), dtype=np.int32), counts)
        k = np.arange(total) - np.repeat(starts, counts)
        denom = np.repeat(counts - 1, counts).astype(float)
        t = k / denom
        xs = coords[iu, 0][seg] + t * dx[seg]
        ys = coords[iu, 1][seg] + t * dy[seg]
        h = (length / (counts - 1))[seg]
        weights = np.where((k == 0) | (k == denom), 0.5 * h, h)
        del t, k, denom, h

        # Bucket samples into square cells so an obstacle's support is a few contiguous slices.
        b = self._BUCKETS
        cx = np.minimum((xs * b).astype(np.int32), b - 1)
        cy = np.minimum((ys * b).astype(np.int32), b - 1)
        cell = cx * b + cy
        order = np.argsort(cell, kind="stable")
        self.xs = xs[order]
        self.ys = ys[order]
        self.weights = weights[order]
        self.seg = seg[order]
        self.cell_start = np.searchsorted(cell[order], np.arange(b * b + 1))
        self.n_pairs = len(iu)
        self.n_nodes = n

    _BUCKETS = 32

    def support(self, obstacle: Obstacle) -> np.ndarray:
        """Indices of sample points where ``obstacle`` contributes a non-negligible risk."""
        s = obstacle.sigma
        peak = 1.0 / (math.sqrt(2.0 * math.pi) * s)
        if peak <= _NEGLIGIBLE_RISK:
            return np.empty(0, dtype=np.int64)
        reach2 = 2.0 * s**RISK_SIGMA_POWER * math.log(peak / _NEGLIGIBLE_RISK)
        reach = math.sqrt(reach2)
        ox, oy = obstacle.position.x, obstacle.position.y
        b = self._BUCKETS
        lo_x, hi_x = max(int((ox - reach) * b), 0), min(int((ox + reach) * b), b - 1)
        lo_y, hi_y = max(int((oy - reach) * b), 0), min(int((oy + reach) * b), b - 1)
        if lo_x > hi_x or lo_y > hi_y:
            return np.empty(0, dtype=np.int64)
        parts = [
            np.arange(self.cell_start[i * b + lo_y], self.cell_start[i * b + hi_y + 1])
            for i in range(lo_x, hi_x + 1)
        ]
        idx = np.concatenate(parts)
        d2 = (self.xs[idx] - ox) ** 2 + (self.ys[idx] - oy) ** 2
        return idx[d2 <= reach2]

    def to_matrix(self, pair_values: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n_nodes, self.n_nodes))
        out[self.pair_i, self.pair_j] = pair_values
        out[self.pair_j, self.pair_i] = pair_values
        return out


@lru_cache(maxsize=4)
def segment_geometry(grid_n: int, samples_per_unit: int = DEFAULT_SAMPLES_PER_UNIT) -> SegmentGeometry:
    return SegmentGeometry(grid_n, samples_per_unit)


@lru_cache(maxsize=8)
def _distance_matrix(grid_n: int) -> np.ndarray:
    c = grid_coords(grid_n)
    return np.hypot(c[:, None, 0] - c[None, :, 0], c[:, None, 1] - c[None, :, 1])


class RiskCache:
    """Incremental pairwise segment risk for one agent's growing obstacle memory.

    Static obstacles are folded in once; peers are layered on per call and
    never stored.
    """

    def __init__(self, grid_n: int, samples_per_unit: int = DEFAULT_SAMPLES_PER_UNIT):
        self.geom = segment_geometry(grid_n, samples_per_unit)
        self._survival: np.ndarray | None = None
        self._pair_risk = np.zeros(self.geom.n_pairs)
        self._included: list[Obstacle] = []

    def _add_static(self, obstacle: Obstacle) -> None:
        g = self.geom
        if self._survival is None:
            self._survival = np.ones(len(g.xs))
        idx = g.support(obstacle)
        if len(idx):
            r = _risk_kernel((g.xs[idx] - obstacle.position.x) ** 2 + (g.ys[idx] - obstacle.position.y) ** 2,
                             obstacle.sigma)
            surv = self._survival[idx]
            self._pair_risk += np.bincount(g.seg[idx], weights=g.weights[idx] * surv * r,
                                           minlength=g.n_pairs)
            self._survival[idx] = surv * (1.0 - r)
        self._included.append(obstacle)

    def pair_risk(self, obstacles: Sequence[Obstacle], peers: Sequence[Obstacle] = ()) -> np.ndarray:
        """Segment risk of every unordered node pair, as a flat pair vector."""
        if any(o not in obstacles for o in self._included):
            self.__init__(self.geom.grid_n, self.geom.samples_per_unit)
        for o in obstacles:
            if o not in self._included:
                self._add_static(o)
        if not peers:
            return self._pair_risk
        g = self.geom
        scratch = self._survival.copy() if self._survival is not None else np.ones(len(g.xs))
        extra = None
        for o in peers:
            idx = g.support(o)
            if not len(idx):
                continue
            r = _risk_kernel((g.xs[idx] - o.position.x) ** 2 + (g.ys[idx] - o.position.y) ** 2, o.sigma)
            surv = scratch[idx]
            add = np.bincount(g.seg[idx], weights=g.weights[idx] * surv * r, minlength=g.n_pairs)
            extra = add if extra is None else extra + add
            scratch[idx] = surv * (1.0 - r)
        if extra is None:
            return self._pair_risk
        return self._pair_risk + extra

    def risk_matrix(self, knowledge: Knowledge) -> np.ndarray:
        return self.geom.to_matrix(self.pair_risk(knowledge.obstacles, knowledge.peers))


def reward_columns(
    grid_n: int,
    knowledge: Knowledge,
    params: RewardParams,
    demand_params: DemandParams,
    samples_per_unit: int = DEFAULT_SAMPLES_PER_UNIT,
    demand_model: str = "sigmoid",
    risk_cache: RiskCache | None = None,
    base_columns: np.ndarray | None = None,
) -> np.ndarray:
    """Transposed reward table: row ``r`` holds A(p_i, p_r) for every p_i.

    ``base_columns`` short-circuits the distance and risk part (a table built
    earlier with ``m_demand=0``), leaving only the demand term to add.
    """
    if base_columns is not None:
        out = base_columns.copy()
    else:
        out = _distance_matrix(grid_n).copy()
    if base_columns is None and params.k_risk and knowledge.known_obstacles:
        cache = risk_cache if risk_cache is not None else RiskCache(grid_n, samples_per_unit)
        out += params.k_risk * cache.risk_matrix(knowledge)
    if params.m_demand:
        dem = demand_field(knowledge.users, grid_coords(grid_n), demand_params, demand_model)
        out += (params.m_demand / (1.0 + dem))[None, :]
    return out


# --- training ----------------------------------------------------------------

def init_cost_matrix(world) -> CostMatrix:
    n = world.grid_n
    values = np.full(n * n, INF)
    t = world.target_index
    values[t] = 0.0
    return CostMatrix(values.reshape(n, n), t, 0)


def train(
    cost: CostMatrix,
    knowledge: Knowledge,
    params: RewardParams,
    demand_params: DemandParams,
    epochs: int = 3,
    rng_seed=0,
    *,
    samples_per_unit: int = DEFAULT_SAMPLES_PER_UNIT,
    demand_model: str = "sigmoid",
    risk_cache: RiskCache | None = None,
    base_columns: np.ndarray | None = None,
    tol: float | None = 1e-9,
    observer: Callable[[int, np.ndarray], None] | None = None,
) -> CostMatrix:
    """Relax G[p_i] <- min(G[p_i], A(p_i, p_r) + G[p_r]) over shuffled sweeps of p_r.

    Each epoch visits every node once as p_r in a seeded random order. Stops
    early once a sweep moves no entry by more than ``tol``; pass ``tol=None``
    to always run all epochs. ``observer(r, G)`` sees the vector after each
    update.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    n = cost.grid_n
    cols = reward_columns(n, knowledge, params, demand_params, samples_per_unit, demand_model, risk_cache,
                          base_columns)
    rng = np.random.default_rng(rng_seed)
    g = cost.flat.copy()
    t = cost.target_index
    done = 0
    for _ in range(epochs):
        before = g.copy()
        for r in rng.permutation(n * n):
            gr = g[r]
            if gr == INF:
                continue
            np.minimum(g, cols[r] + gr, out=g)
            if observer is not None:
                observer(int(r), g)
        done += 1
        g[t] = 0.0
        if tol is not None:
            finite = np.isfinite(before)
            if finite.all() and np.max(before - g) < tol:
                break
    return CostMatrix(g.reshape(n, n), t, cost.epochs_trained + done)


# --- path extraction ---------------------------------------------------------

def extract_path_verbatim(cost: CostMatrix, max_length: int) -> Path:
    """Pop the global minimum of G repeatedly; yields nodes in ascending cost."""
    work = cost.flat.copy()
    out = []
    while len(out) < max_length:
        k = int(np.argmin(work))
        if work[k] == INF:
            break
        out.append(k)
        work[k] = INF
    return Path(tuple(out))


def neighbors(grid_n: int, node: int) -> list[int]:
    i, j = divmod(node, grid_n)
    out = []
    for di, dj in _NEIGHBOR_STEPS:
        a, b = i + di, j + dj
        if 0 <= a < grid_n and 0 <= b < grid_n:
            out.append(a * grid_n + b)
    return sorted(out)


def extract_path_descent(cost: CostMatrix, start: int, max_length: int) -> Path:
    """Walk the 8-neighbourhood downhill on G from ``start``.

    Stops at the target, at ``max_length`` waypoints, or at a local minimum,
    in which case ``stalled`` is set.
    """
    g = cost.flat
    n = cost.grid_n
    path = [int(start)]
    cur = int(start)
    while cur != cost.target_index and len(path) < max_length:
        best, best_val = None, g[cur]
        for nb in neighbors(n, cur):
            if g[nb] < best_val:
                best, best_val = nb, g[nb]
        if best is None:
            return Path(tuple(path), stalled=True)
        path.append(best)
        cur = best
    return Path(tuple(path))


def best_successor(
    cost: CostMatrix,
    node: int,
    knowledge: Knowledge,
    params: RewardParams,
    demand_params: DemandParams,
    samples_per_unit: int = DEFAULT_SAMPLES_PER_UNIT,
    demand_model: str = "sigmoid",
    risk_cache: RiskCache | None = None,
    base_columns: np.ndarray | None = None,
) -> int:
    """Node r != ``node`` minimizing A(node, r) + G[r]; the hop the trained matrix prefers."""
    n = cost.grid_n
    cols = reward_columns(n, knowledge, params, demand_params, samples_per_unit, demand_model, risk_cache,
                          base_columns)
    cand = cols[:, node] + cost.flat
    cand[node] = INF
    return int(np.argmin(cand))


__all__ = [
    "RewardParams", "Knowledge", "CostMatrix", "Path", "RiskCache", "reward", "reward_columns",
    "init_cost_matrix", "train", "extract_path_verbatim", "extract_path_descent", "best_successor",
    "neighbors", "node_point", "PATH_MODES",
]
