"""Scene model and closed-form field math: obstacle risk, demand detection, service."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

# Exponent denominator of the obstacle kernel is 2*sigma (not 2*sigma**2).
# Flip to 2 to get the textbook Gaussian shape.
RISK_SIGMA_POWER = 1

DEFAULT_SAMPLES_PER_UNIT = 64

DEMAND_MODELS = ("sigmoid", "linear")


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def dist(self, other: Point2) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)

    def in_unit_square(self) -> bool:
        return 0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0


def as_point(p) -> Point2:
    if isinstance(p, Point2):
        return p
    x, y = p
    return Point2(float(x), float(y))


@dataclass(frozen=True)
class Obstacle:
    position: Point2
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"obstacle sigma must be > 0, got {self.sigma}")


@dataclass(frozen=True)
class TerminalUser:
    position: Point2
    initial_demand: float
    remaining_demand: float | None = None

    def __post_init__(self):
        if self.remaining_demand is None:
            object.__setattr__(self, "remaining_demand", float(self.initial_demand))
        if self.initial_demand < 0:
            raise ValueError("initial_demand must be nonnegative")
        if not 0.0 <= self.remaining_demand <= self.initial_demand:
            raise ValueError(
                f"remaining_demand {self.remaining_demand} outside [0, {self.initial_demand}]"
            )


@dataclass(frozen=True)
class DemandParams:
    """Shape of the demand detector plus service rate and radius.

    ``linear_scale`` only matters for the linear detector, which maps a raw
    demand onto [0, 1] by dividing by it.
    """

    eta: float = 2.0
    beta: float = 8.0
    tau: float = 0.5
    epsilon: float = 0.2
    linear_scale: float = 10.0

    def __post_init__(self):
        if not self.eta > 1:
            raise ValueError(f"eta must be > 1 for a valid demand sigmoid (Property 1), got {self.eta}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0 for a valid demand sigmoid (Property 1), got {self.beta}")
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.linear_scale > 0:
            raise ValueError(f"linear_scale must be > 0, got {self.linear_scale}")


@dataclass(frozen=True)
class World:
    grid_n: int
    obstacles: tuple[Obstacle, ...]
    users: tuple[TerminalUser, ...]
    target: Point2
    demand_params: DemandParams = field(default_factory=DemandParams)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "users", tuple(self.users))
        if self.grid_n < 2:
            raise ValueError(f"grid_n must be >= 2, got {self.grid_n}")
        for o in self.obstacles:
            if not o.position.in_unit_square():
                raise ValueError(f"obstacle at {o.position} outside the unit square")
        for u in self.users:
            if not u.position.in_unit_square():
                raise ValueError(f"user at {u.position} outside the unit square")
        if not self.target.in_unit_square():
            raise ValueError(f"target {self.target} outside the unit square")
        k = self.node_of(self.target, strict=True)
        if k is None:
            raise ValueError(f"target {self.target} is not a grid node of a {self.grid_n}x{self.grid_n} lattice")
        # snap so that arrival can be tested by exact equality against lattice waypoints
        object.__setattr__(self, "target", node_point(self.grid_n, k))

    @property
    def spacing(self) -> float:
        return 1.0 / (self.grid_n - 1)

    def node_point(self, index: int) -> Point2:
        return node_point(self.grid_n, index)

    def node_of(self, p: Point2, strict: bool = False, tol: float = 1e-9) -> int | None:
        return node_of(self.grid_n, p, strict=strict, tol=tol)

    @property
    def target_index(self) -> int:
        return self.node_of(self.target, strict=True)

    def with_users(self, users: Iterable[TerminalUser]) -> World:
        return replace(self, users=tuple(users))


# Grid nodes are numbered i * N + j where i indexes x and j indexes y.
def node_point(grid_n: int, index: int) -> Point2:
    i, j = divmod(int(index), grid_n)
    # divide rather than multiply by the spacing so coordinates match grid_coords bit for bit
    return Point2(i / (grid_n - 1), j / (grid_n - 1))


def node_of(grid_n: int, p: Point2, strict: bool = False, tol: float = 1e-9) -> int | None:
    """Index of the grid node nearest ``p``; with ``strict`` return None unless it coincides."""
    h = 1.0 / (grid_n - 1)
    i = min(max(int(round(p.x / h)), 0), grid_n - 1)
    j = min(max(int(round(p.y / h)), 0), grid_n - 1)
    if strict and (abs(i * h - p.x) > tol or abs(j * h - p.y) > tol):
        return None
    return i * grid_n + j


def grid_coords(grid_n: int) -> np.ndarray:
    """(N*N, 2) array of node coordinates in node-index order."""
    ax = np.arange(grid_n) / (grid_n - 1)
    xs, ys = np.meshgrid(ax, ax, indexing="ij")
    return np.column_stack([xs.ravel(), ys.ravel()])


# --- risk ------------------------------------------------------------------

def _risk_kernel(d2, sigma):
    raw = np.exp(-d2 / (2.0 * sigma**RISK_SIGMA_POWER)) / (math.sqrt(2.0 * math.pi) * sigma)
    return np.minimum(raw, 1.0)


def single_risk(obstacle: Obstacle, p: Point2) -> float:
    d2 = (p.x - obstacle.position.x) ** 2 + (p.y - obstacle.position.y) ** 2
    return float(_risk_kernel(d2, obstacle.sigma))


def risk_field(obstacles: Sequence[Obstacle], xs, ys) -> np.ndarray:
    """Combined risk 1 - prod(1 - r_i) evaluated at arrays of coordinates."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    survive = np.ones(np.broadcast(xs, ys).shape)
    for o in obstacles:
        d2 = (xs - o.position.x) ** 2 + (ys - o.position.y) ** 2
        survive *= 1.0 - _risk_kernel(d2, o.sigma)
    return 1.0 - survive


def point_risk(obstacles: Sequence[Obstacle], p: Point2) -> float:
    return float(risk_field(obstacles, p.x, p.y))


def segment_samples(length, samples_per_unit: int):
    """Number of trapezoid nodes used for a segment of the given length."""
    return np.maximum(2, np.ceil(np.asarray(length) * samples_per_unit).astype(np.int64) + 1)


def segment_risk(
    obstacles: Sequence[Obstacle],
    p: Point2,
    q: Point2,
    samples_per_unit: int = DEFAULT_SAMPLES_PER_UNIT,
    field_fn=None,
) -> float:
    """Line integral of the combined risk along the straight segment p -> q.

    Composite trapezoid rule. ``field_fn(xs, ys)`` replaces the obstacle
    field when given (used to check the quadrature on synthetic fields).
    """
    if samples_per_unit < 1:
        raise ValueError("samples_per_unit must be >= 1")
    length = math.hypot(q.x - p.x, q.y - p.y)
    if length == 0.0:
        return 0.0
    if field_fn is None and not obstacles:
        return 0.0
    n = int(segment_samples(length, samples_per_unit))
    t = np.linspace(0.0, 1.0, n)
    xs = p.x + t * (q.x - p.x)
    ys = p.y + t * (q.y - p.y)
    f = field_fn(xs, ys) if field_fn is not None else risk_field(obstacles, xs, ys)
    f = np.broadcast_to(np.asarray(f, dtype=float), xs.shape)
    h = length / (n - 1)
    return float(h * (f.sum() - 0.5 * (f[0] + f[-1])))


# --- demand ----------------------------------------------------------------

def demand_signal(d, params: DemandParams):
    """Sigmoid-like detection 1 - exp(-d**eta / (d + beta)); 0 at d = 0."""
    d = np.asarray(d, dtype=float)
    out = -np.expm1(-np.power(d, params.eta) / (d + params.beta))
    return float(out) if out.ndim == 0 else out


def linear_signal(d, params: DemandParams):
    d = np.asarray(d, dtype=float)
    out = np.clip(d / params.linear_scale, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def detector(model: str):
    if model == "sigmoid":
        return demand_signal
    if model == "linear":
        return linear_signal
    raise ValueError(f"unknown demand model {model!r}; expected one of {DEMAND_MODELS}")


def detected_demand(
    users: Sequence[TerminalUser],
    p: Point2,
    params: DemandParams,
    model: str = "sigmoid",
) -> float:
    signal = detector(model)
    total = 0.0
    for u in users:
        if p.dist(u.position) <= params.epsilon:
            total += signal(u.remaining_demand, params)
    return float(total)


def demand_field(
    users: Sequence[TerminalUser],
    coords: np.ndarray,
    params: DemandParams,
    model: str = "sigmoid",
) -> np.ndarray:
    """Vectorized ``detected_demand`` at each row of ``coords``."""
    signal = detector(model)
    out = np.zeros(len(coords))
    for u in users:
        if u.remaining_demand <= 0:
            continue
        d = np.hypot(coords[:, 0] - u.position.x, coords[:, 1] - u.position.y)
        out[d <= params.epsilon] += signal(u.remaining_demand, params)
    return out


def serve(
    users: Sequence[TerminalUser],
    uav_positions: Sequence[Point2],
    params: DemandParams,
) -> list[TerminalUser]:
    """Drain tau per in-range UAV from each user, floored at zero."""
    out = []
    for u in users:
        n_in = sum(1 for p in uav_positions if p.dist(u.position) <= params.epsilon)
        if n_in and u.remaining_demand > 0:
            left = max(0.0, u.remaining_demand - params.tau * n_in)
            u = replace(u, remaining_demand=left)
        out.append(u)
    return out
