import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavmec.env import (
    DemandParams,
    Obstacle,
    Point2,
    TerminalUser,
    World,
    demand_signal,
    detected_demand,
    linear_signal,
    point_risk,
    segment_risk,
    serve,
    single_risk,
)

SQRT_2PI = math.sqrt(2 * math.pi)


def kernel_by_hand(sigma, d):
    return min(1.0, math.exp(-d * d / (2 * sigma)) / (SQRT_2PI * sigma))


# --- single / combined risk ---------------------------------------------------

def test_single_risk_at_center_unit_sigma():
    o = Obstacle(Point2(0.5, 0.5), 1.0)
    assert single_risk(o, Point2(0.5, 0.5)) == pytest.approx(0.398942, abs=1e-6)
    assert single_risk(o, Point2(0.5, 0.5)) == pytest.approx(1 / SQRT_2PI, rel=1e-15)


def test_single_risk_decays_to_zero():
    o = Obstacle(Point2(0.0, 0.0), 0.01)
    assert single_risk(o, Point2(1e3, 1e3)) == 0.0


def test_single_risk_clamped_for_small_sigma():
    o = Obstacle(Point2(0.3, 0.3), 0.01)
    raw = 1 / (SQRT_2PI * 0.01)
    assert raw == pytest.approx(39.894, abs=1e-3)
    assert single_risk(o, Point2(0.3, 0.3)) == 1.0


def test_single_risk_uses_sigma_not_sigma_squared():
    o = Obstacle(Point2(0.0, 0.0), 0.5)
    d = 0.7
    assert single_risk(o, Point2(d, 0.0)) == pytest.approx(kernel_by_hand(0.5, d), rel=1e-14)


def test_obstacle_rejects_nonpositive_sigma():
    with pytest.raises(ValueError):
        Obstacle(Point2(0, 0), 0.0)


def test_point_risk_empty_and_single():
    p = Point2(0.2, 0.4)
    assert point_risk([], p) == 0.0
    o = Obstacle(Point2(0.25, 0.4), 0.3)
    assert point_risk([o], p) == pytest.approx(single_risk(o, p), abs=1e-15)


def test_point_risk_two_colocated():
    o = Obstacle(Point2(0.5, 0.5), 1.0)
    # 1 - (1 - 1/sqrt(2 pi))**2 = 0.638730; the often-quoted 0.638652 is an arithmetic slip
    r = point_risk([o, o], Point2(0.5, 0.5))
    assert r == pytest.approx(0.638730, abs=1e-6)
    assert r == pytest.approx(1 - (1 - 1 / SQRT_2PI) ** 2, rel=1e-15)


coord = st.floats(0.0, 1.0, allow_nan=False)
sigma = st.floats(1e-4, 2.0, allow_nan=False)
obstacle = st.builds(lambda x, y, s: Obstacle(Point2(x, y), s), coord, coord, sigma)


@given(st.lists(obstacle, max_size=6), obstacle, coord, coord)
def test_point_risk_bounded_and_monotone_in_obstacles(obs, extra, x, y):
    p = Point2(x, y)
    r = point_risk(obs, p)
    assert 0.0 <= r <= 1.0
    assert point_risk([*obs, extra], p) >= r - 1e-15


# --- segment risk -------------------------------------------------------------

def test_segment_risk_degenerate_and_empty():
    o = Obstacle(Point2(0.5, 0.5), 0.01)
    p = Point2(0.5, 0.5)
    assert segment_risk([o], p, p) == 0.0
    assert segment_risk([], Point2(0, 0), Point2(1, 1)) == 0.0


@pytest.mark.parametrize("c", [0.0, 0.25, 1.0])
@pytest.mark.parametrize("q", [(1.0, 0.0), (0.3, 0.4), (1.0, 1.0)])
def test_segment_risk_constant_field_is_exact(c, q):
    p, q = Point2(0.0, 0.0), Point2(*q)
    length = math.hypot(q.x, q.y)
    got = segment_risk([], p, q, 7, field_fn=lambda xs, ys: np.full_like(xs, c))
    assert got == pytest.approx(c * length, abs=1e-9)


def test_segment_risk_linear_field_is_exact():
    # the trapezoid rule integrates linear integrands exactly
    p, q = Point2(0.1, 0.2), Point2(0.9, 0.5)
    length = p.dist(q)
    got = segment_risk([], p, q, 5, field_fn=lambda xs, ys: xs)
    assert got == pytest.approx(length * (p.x + q.x) / 2, abs=1e-12)


def test_segment_risk_matches_quadrature():
    from scipy.integrate import quad

    obs = [Obstacle(Point2(0.4, 0.5), 0.002), Obstacle(Point2(0.6, 0.45), 0.001)]
    p, q = Point2(0.1, 0.5), Point2(0.9, 0.4)
    length = p.dist(q)
    ref, _ = quad(lambda t: point_risk(obs, Point2(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))) * length,
                  0, 1, points=[0.375, 0.6], limit=200)
    assert segment_risk(obs, p, q, 1024) == pytest.approx(ref, rel=1e-4)


def test_segment_risk_rejects_zero_density():
    with pytest.raises(ValueError):
        segment_risk([], Point2(0, 0), Point2(1, 0), 0)


@given(st.lists(obstacle, max_size=4), coord, coord, coord, coord)
def test_segment_risk_symmetric(obs, x0, y0, x1, y1):
    p, q = Point2(x0, y0), Point2(x1, y1)
    assert segment_risk(obs, p, q) == pytest.approx(segment_risk(obs, q, p), abs=1e-12)


smooth_obstacle = st.builds(
    lambda x, y, s: Obstacle(Point2(x, y), s), coord, coord, st.floats(0.05, 1.0)
)


@settings(max_examples=50)
@given(st.lists(smooth_obstacle, min_size=1, max_size=4), coord, coord, coord, coord)
def test_segment_risk_converges_under_refinement(obs, x0, y0, x1, y1):
    p, q = Point2(x0, y0), Point2(x1, y1)
    coarse = segment_risk(obs, p, q, 64)
    fine = segment_risk(obs, p, q, 128)
    assert abs(fine - coarse) <= 0.01 * max(abs(fine), 1e-12) + 1e-15


# --- demand -------------------------------------------------------------------

P28 = DemandParams(eta=2.0, beta=8.0, tau=0.5, epsilon=0.2)


def test_demand_signal_values():
    assert demand_signal(0.0, P28) == 0.0
    assert demand_signal(1.0, P28) == pytest.approx(0.105161, abs=1e-6)
    assert demand_signal(1.0, P28) == pytest.approx(1 - math.exp(-1 / 9), rel=1e-14)
    assert demand_signal(1000.0, P28) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kw", [{"eta": 1.0}, {"eta": 0.5}, {"beta": 0.0}, {"beta": -1.0}])
def test_demand_params_property_bounds(kw):
    with pytest.raises(ValueError, match="Property 1"):
        DemandParams(**kw)


def test_linear_signal_scales_into_unit_interval():
    assert linear_signal(5.0, P28) == 0.5
    assert linear_signal(12.0, P28) == 1.0


eta_s = st.floats(1.01, 10.0)
beta_s = st.floats(0.01, 20.0)


@given(eta_s, beta_s, st.floats(0.0, 50.0), st.floats(1e-3, 50.0))
def test_demand_signal_increasing_in_demand(eta, beta, d1, gap):
    p = DemandParams(eta=eta, beta=beta)
    d2 = d1 + gap
    lo, hi = demand_signal(d1, p), demand_signal(d2, p)
    # both saturate to 1.0 in float64 for large arguments
    assert hi > lo or hi == 1.0


@given(eta_s, eta_s, beta_s)
def test_demand_signal_pivot_at_one(e1, e2, beta):
    ref = 1 - math.exp(-1 / (1 + beta))
    assert demand_signal(1.0, DemandParams(eta=e1, beta=beta)) == pytest.approx(ref, abs=1e-12)
    assert demand_signal(1.0, DemandParams(eta=e2, beta=beta)) == pytest.approx(ref, abs=1e-12)


@given(st.floats(1.1, 8.0), st.floats(0.1, 10.0), st.floats(0.05, 3.0).filter(lambda d: abs(d - 1) > 0.05))
def test_demand_signal_eta_derivative_sign(eta, beta, d):
    h = 1e-6
    du = (demand_signal(d, DemandParams(eta=eta + h, beta=beta))
          - demand_signal(d, DemandParams(eta=eta - h, beta=beta))) / (2 * h)
    # analytic derivative: U' = exp(-x) * x * ln(d), x = d**eta / (d + beta)
    x = d**eta / (d + beta)
    exact = math.exp(-x) * x * math.log(d)
    assert du == pytest.approx(exact, abs=1e-4)
    if abs(exact) > 1e-4:
        assert math.copysign(1, du) == math.copysign(1, d - 1)


@given(st.floats(1.1, 8.0), st.floats(0.1, 10.0), st.floats(0.05, 5.0))
def test_demand_signal_decreasing_in_beta(eta, beta, d):
    p1, p2 = DemandParams(eta=eta, beta=beta), DemandParams(eta=eta, beta=beta * 1.5)
    hi, lo = demand_signal(d, p1), demand_signal(d, p2)
    assert lo < hi or hi == lo == 1.0


def test_detected_demand_cases():
    near = [TerminalUser(Point2(0.5, 0.5), 1.0), TerminalUser(Point2(0.6, 0.5), 1.0)]
    far = [TerminalUser(Point2(0.0, 0.0), 5.0)]
    p = Point2(0.5, 0.5)
    assert detected_demand(far, p, P28) == 0.0
    assert detected_demand(near, p, P28) == pytest.approx(0.210321, abs=1e-6)
    assert detected_demand([TerminalUser(Point2(0.5, 0.5), 3.0, 0.0)], p, P28) == 0.0


def test_detected_demand_boundary_inclusive():
    u = [TerminalUser(Point2(0.5, 0.5), 1.0)]
    params = DemandParams(epsilon=0.25)
    assert detected_demand(u, Point2(0.75, 0.5), params) > 0
    assert detected_demand(u, Point2(0.7500001, 0.5), params) == 0.0


# --- service ------------------------------------------------------------------

def test_serve_examples():
    params = DemandParams(tau=0.5, epsilon=0.2)
    at = Point2(0.5, 0.5)
    assert serve([TerminalUser(at, 5.0)], [at], params)[0].remaining_demand == 4.5
    assert serve([TerminalUser(at, 0.3)], [at], params)[0].remaining_demand == 0.0
    assert serve([TerminalUser(at, 5.0)], [at, Point2(0.55, 0.5)], params)[0].remaining_demand == 4.0
    assert serve([TerminalUser(at, 5.0)], [Point2(0.0, 0.0)], params)[0].remaining_demand == 5.0


@given(
    st.lists(st.tuples(coord, coord, st.floats(0, 10)), max_size=5),
    st.lists(st.tuples(coord, coord), max_size=4),
    st.floats(0.01, 3.0),
)
def test_serve_never_negative_and_bounded(users, uavs, tau):
    params = DemandParams(tau=tau, epsilon=0.2)
    us = [TerminalUser(Point2(x, y), d) for x, y, d in users]
    ps = [Point2(x, y) for x, y in uavs]
    out = serve(us, ps, params)
    assert all(u.remaining_demand >= 0 for u in out)
    served = sum(a.remaining_demand - b.remaining_demand for a, b in zip(us, out))
    assert served <= tau * len(ps) * len(us) + 1e-12


def test_terminal_user_invariant():
    with pytest.raises(ValueError):
        TerminalUser(Point2(0, 0), 1.0, 2.0)


def test_world_requires_target_on_grid():
    with pytest.raises(ValueError, match="grid node"):
        World(5, (), (), Point2(0.3, 0.3))
    w = World(5, (), (), Point2(0.25, 0.75))
    assert w.node_point(w.target_index) == Point2(0.25, 0.75)
    with pytest.raises(ValueError):
        World(1, (), (), Point2(0, 0))
