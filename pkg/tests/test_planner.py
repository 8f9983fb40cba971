import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import shortest_path

from uavmec.env import DemandParams, Obstacle, Point2, TerminalUser, World, node_point, segment_risk
from uavmec.planner import (
    CostMatrix,
    Knowledge,
    RewardParams,
    RiskCache,
    best_successor,
    extract_path_descent,
    extract_path_verbatim,
    init_cost_matrix,
    neighbors,
    reward,
    reward_columns,
    train,
)

DP = DemandParams()


def random_scene(seed: int, n: int = 5, k: float = 5.0, m: float = 0.5):
    rng = np.random.default_rng(seed)
    obs = [Obstacle(Point2(*rng.uniform(0, 1, 2)), float(rng.uniform(0.002, 0.05))) for _ in range(3)]
    users = [TerminalUser(Point2(*rng.uniform(0, 1, 2)), float(rng.uniform(0, 10))) for _ in range(3)]
    t = int(rng.integers(n * n))
    world = World(n, tuple(obs), tuple(users), node_point(n, t))
    return world, Knowledge(list(obs), [], list(users)), RewardParams(k, m)


def oracle_cost(world, knowledge, params, spu=64):
    """Scalar reward table fed to scipy's Bellman-Ford on the reversed graph."""
    n = world.grid_n
    pts = [node_point(n, i) for i in range(n * n)]
    a = np.array([[reward(p, q, knowledge, params, DP, spu) for q in pts] for p in pts])
    np.fill_diagonal(a, 0.0)
    dist = shortest_path(a.T, method="BF", directed=True, indices=world.target_index)
    return dist


# --- reward -------------------------------------------------------------------

def test_reward_examples():
    p, q = Point2(0.0, 0.0), Point2(0.3, 0.4)
    empty = Knowledge()
    assert reward(p, q, empty, RewardParams(0, 0), DP) == pytest.approx(0.5, abs=1e-15)
    assert reward(p, p, empty, RewardParams(0, 1), DP) == 1.0


def test_reward_demand_term_halves_at_unit_detection():
    # detected demand of exactly 1 needs U(d) = 1; linear model with d = scale gives it
    dp = DemandParams(linear_scale=10.0)
    users = [TerminalUser(Point2(0.0, 0.0), 10.0)]
    got = reward(Point2(0, 0), Point2(0.3, 0.4), Knowledge(users=users), RewardParams(0, 1), dp,
                 demand_model="linear")
    assert got == pytest.approx(0.5 + 0.5, abs=1e-15)


def test_reward_ignores_unobserved_obstacles():
    world, kn, params = random_scene(3)
    p, q = node_point(5, 0), node_point(5, 24)
    blind = Knowledge([], [], kn.users)
    base = reward(p, q, blind, RewardParams(0, params.m_demand), DP)
    assert reward(p, q, blind, params, DP) == pytest.approx(base, abs=1e-15)


def test_reward_params_reject_negative():
    with pytest.raises(ValueError):
        RewardParams(-1, 0)
    with pytest.raises(ValueError):
        RewardParams(0, -0.1)


@pytest.mark.parametrize("seed", range(4))
def test_reward_columns_match_scalar_reward(seed):
    world, kn, params = random_scene(seed, n=4)
    kn.peers = [Obstacle(Point2(0.5, 0.5), 0.01)]
    cols = reward_columns(4, kn, params, DP)
    for i in range(16):
        for r in range(16):
            ref = reward(node_point(4, i), node_point(4, r), kn, params, DP)
            assert cols[r, i] == pytest.approx(ref, rel=1e-12, abs=1e-13)


def test_risk_cache_matches_direct_integral():
    obs = [Obstacle(Point2(0.4, 0.6), 0.003), Obstacle(Point2(0.55, 0.2), 0.01)]
    peer = [Obstacle(Point2(0.7, 0.7), 0.004)]
    cache = RiskCache(6)
    for _ in range(2):  # second call exercises the incremental path
        mat = cache.risk_matrix(Knowledge(obs, peer, []))
    for i, r in [(0, 35), (3, 20), (7, 29), (12, 12)]:
        ref = segment_risk(obs + peer, node_point(6, i), node_point(6, r))
        assert mat[i, r] == pytest.approx(ref, abs=1e-10)
    # peers never leak into the static cache
    alone = cache.risk_matrix(Knowledge(obs, [], []))
    assert alone[0, 35] == pytest.approx(segment_risk(obs, node_point(6, 0), node_point(6, 35)), abs=1e-10)


# --- init / train -------------------------------------------------------------

def test_init_cost_matrix_2x2():
    w = World(2, (), (), Point2(1.0, 0.0))
    c = init_cost_matrix(w)
    assert c.target_index == 2
    assert c[2] == 0.0
    assert all(math.isinf(c[i]) for i in (0, 1, 3))


def test_train_rejects_zero_epochs():
    w = World(3, (), (), Point2(0, 0))
    with pytest.raises(ValueError):
        train(init_cost_matrix(w), Knowledge(), RewardParams(0, 0), DP, epochs=0)


@pytest.mark.parametrize("n", [5, 21])
def test_degenerate_weights_give_euclidean_distance(n):
    w = World(n, (), (), node_point(n, n * n - 3))
    g = train(init_cost_matrix(w), Knowledge(), RewardParams(0, 0), DP, epochs=3, rng_seed=1)
    t = w.target
    for i in range(n * n):
        assert g[i] == pytest.approx(node_point(n, i).dist(t), abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_converged_cost_matches_bellman_ford(seed):
    world, kn, params = random_scene(seed)
    g = train(init_cost_matrix(world), kn, params, DP, epochs=50, rng_seed=seed)
    ref = oracle_cost(world, kn, params)
    np.testing.assert_allclose(g.flat, ref, rtol=0, atol=1e-9)


def test_one_epoch_bounded_by_direct_hop():
    world, kn, params = random_scene(11)
    g = train(init_cost_matrix(world), kn, params, DP, epochs=1, rng_seed=0, tol=None)
    cols = reward_columns(5, kn, params, DP)
    assert np.all(g.flat <= cols[world.target_index] + 1e-15)
    assert g.epochs_trained == 1


def test_training_is_deterministic_per_seed():
    world, kn, params = random_scene(5)
    a = train(init_cost_matrix(world), kn, params, DP, epochs=2, rng_seed=9, tol=None)
    b = train(init_cost_matrix(world), kn, params, DP, epochs=2, rng_seed=9, tol=None)
    assert np.array_equal(a.values, b.values)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 20), st.floats(0, 2))
def test_training_never_raises_an_entry(seed, k, m):
    world, kn, _ = random_scene(seed)
    params = RewardParams(k, m)
    t = world.target_index
    prev = init_cost_matrix(world).flat.copy()
    bad = []

    def watch(r, g):
        if np.any(g > prev) or g[t] != 0.0:
            bad.append(r)
        prev[:] = g

    train(init_cost_matrix(world), kn, params, DP, epochs=3, rng_seed=seed, observer=watch, tol=None)
    assert not bad


# --- extraction ---------------------------------------------------------------

def test_verbatim_examples():
    # 2x2 grid: t = node 0, b = node 3, c = node 1, node 2 untrained
    g = CostMatrix(np.array([[0.0, 0.7], [math.inf, 0.3]]), 0)
    assert extract_path_verbatim(g, 2).waypoints == (0, 3)
    assert extract_path_verbatim(g, 1).waypoints == (0,)
    assert extract_path_verbatim(g, 10).waypoints == (0, 3, 1)
    bare = CostMatrix(np.array([[math.inf, 0.0], [math.inf, math.inf]]), 1)
    assert extract_path_verbatim(bare, 5).waypoints == (1,)


def test_verbatim_ties_go_to_lowest_index():
    g = CostMatrix(np.array([[0.5, 0.5], [0.0, 0.5]]), 2)
    assert extract_path_verbatim(g, 4).waypoints == (2, 0, 1, 3)


def test_neighbors_corner_and_interior():
    assert neighbors(3, 0) == [1, 3, 4]
    assert neighbors(3, 4) == [0, 1, 2, 3, 5, 6, 7, 8]


def test_descent_start_at_target():
    w = World(5, (), (), Point2(0.5, 0.5))
    g = train(init_cost_matrix(w), Knowledge(), RewardParams(0, 0), DP)
    assert extract_path_descent(g, w.target_index, 10).waypoints == (w.target_index,)


@pytest.mark.parametrize("n,start,target", [(7, 0, 48), (9, 8, 40), (21, 5, 400)])
def test_descent_on_euclidean_field_strictly_decreases(n, start, target):
    w = World(n, (), (), node_point(n, target))
    g = train(init_cost_matrix(w), Knowledge(), RewardParams(0, 0), DP)
    path = extract_path_descent(g, start, 10 * n)
    vals = [g[i] for i in path]
    assert path[0] == start and path[-1] == target and not path.stalled
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 0.0


def test_descent_plateau_stalls():
    g = CostMatrix(np.array([[0.0, 1, 1], [1, 1, 1], [1, 1, 1]]), 0)
    p = extract_path_descent(g, 8, 10)
    assert p.waypoints == (8,) and p.stalled


def test_descent_respects_max_length():
    w = World(9, (), (), node_point(9, 80))
    g = train(init_cost_matrix(w), Knowledge(), RewardParams(0, 0), DP)
    assert len(extract_path_descent(g, 0, 3)) == 3


def test_best_successor_stays_on_straight_line():
    w = World(5, (), (), node_point(5, 12))
    g = train(init_cost_matrix(w), Knowledge(), RewardParams(0, 0), DP)
    r = best_successor(g, 0, Knowledge(), RewardParams(0, 0), DP)
    assert r != 0
    assert node_point(5, 0).dist(node_point(5, r)) + g[r] == pytest.approx(g[0], abs=1e-12)
