import itertools
import math

import numpy as np
import pytest

from errors import GraphError
from planning.astar import astar_otsp
from planning.benchmark import PLANNERS, benchmark, clustered_graphs, run_planner, summarize
from planning.christofides import christofides_otsp, closed_tour
from planning.genetic import ga_otsp, order_crossover, swap_mutation
from planning.graph import (
    build_graph,
    graph_from_points,
    make_tour,
    read_tour_csv,
    tour_length,
    write_tour_csv,
)
from planning.greedy import PlannerConfig, greedy_dijkstra, greedy_order, noisy_dijkstra, untangle
from poses.optimizer import PoseSet
from robot.calibration import FrameCalibration
from robot.kinematics import EffectorGeometry, effector_target
from shapes.footprint import Pose

COLLINEAR = [(0.0, 0.0), (10.0, 0.0), (20.0, 0.0)]


def random_graph(rng, n):
    return graph_from_points(rng.uniform(0, 100, size=(n, 2)))


def exhaustive_open(graph):
    others = [i for i in range(graph.size) if i != graph.start]
    return min(tour_length(graph, (graph.start, *p)) for p in itertools.permutations(others))


def exhaustive_closed(graph):
    others = [i for i in range(graph.size) if i != graph.start]
    best = math.inf
    for p in itertools.permutations(others):
        order = (graph.start, *p)
        best = min(best, tour_length(graph, order) + graph.dist[order[-1], order[0]])
    return best


def assert_permutation(graph, tour):
    assert tour.order[0] == graph.start
    assert sorted(tour.order) == list(range(graph.size))
    assert tour.length_mm == pytest.approx(tour_length(graph, tour.order), abs=1e-9)


# ============================================================================
# GRAPHS
# ============================================================================


def test_collinear_distances():
    graph = graph_from_points(COLLINEAR)
    np.testing.assert_allclose(graph.dist[0], [0.0, 10.0, 20.0])
    np.testing.assert_allclose(graph.dist, graph.dist.T)


def pose_set(segment_id, poses, valid, origin=(10.0, 20.0)):
    return PoseSet(
        poses=poses,
        segment_id=segment_id,
        final_loss=None,
        valid=all(valid),
        pose_valid=list(valid),
        scale_mm_per_px=0.1,
        origin_mm=origin,
    )


def test_build_graph_keeps_valid_poses_only():
    sets = [
        pose_set("a", [Pose(10, 10, 0), Pose(30, 10, 1)], [True, False]),
        pose_set("b", [Pose(5, 5, 0)], [True]),
        PoseSet(poses=[], segment_id="c", final_loss=None, valid=False, error="boom"),
    ]
    graph = build_graph(sets)
    assert graph.size == 3
    assert graph.nodes[0].is_home
    assert [(n.segment_id, n.pose_index) for n in graph.nodes[1:]] == [("a", 0), ("b", 0)]
    assert graph.nodes[1].contact_mm == pytest.approx((11.0, 21.0))


def test_build_graph_single_pose():
    graph = build_graph([pose_set("a", [Pose(10, 10, 0)], [True])])
    assert graph.size == 2


def test_build_graph_film_array_size():
    sets = [pose_set(f"f{i}", [Pose(10, 10, 0), Pose(20, 10, 1), Pose(15, 20, 2)], [True] * 3) for i in range(35)]
    assert build_graph(sets).size == 106


def test_build_graph_without_valid_poses():
    with pytest.raises(GraphError):
        build_graph([pose_set("a", [Pose(10, 10, 0)], [False])])


def test_build_graph_with_geometry_uses_effector_targets():
    geom = EffectorGeometry(30.0)
    graph = build_graph([pose_set("a", [Pose(100, 50, math.pi / 6)], [True], origin=(40.0, 40.0))], geometry=geom)
    node = graph.nodes[1]
    x, y, _ = effector_target(node.contact_mm[0], node.contact_mm[1], node.theta_deg, geom)
    assert (node.x_mm, node.y_mm) == (x, y)
    assert node.theta_deg == pytest.approx(30.0)


def test_build_graph_with_calibration_matches_plain_scaling():
    sets = [pose_set("a", [Pose(10, 10, 0.5), Pose(40, 25, 2.0)], [True, True], origin=(0.0, 0.0))]
    plain = build_graph(sets)
    calibrated = build_graph(sets, calib=FrameCalibration.scaled(0.1))
    for a, b in zip(plain.nodes, calibrated.nodes):
        assert a.contact_mm == pytest.approx(b.contact_mm, abs=1e-9)
        assert a.theta_deg == pytest.approx(b.theta_deg, abs=1e-9)


def test_make_tour_rejects_bad_orders():
    graph = graph_from_points(COLLINEAR)
    with pytest.raises(GraphError):
        make_tour(graph, [0, 1, 1], "x")
    with pytest.raises(GraphError):
        make_tour(graph, [1, 0, 2], "x")


def test_tour_csv(tmp_path):
    graph = graph_from_points(COLLINEAR)
    tour = greedy_dijkstra(graph)
    waypoints = read_tour_csv(write_tour_csv(graph, tour, tmp_path / "tour.csv"))
    assert [(w.x_mm, w.y_mm) for w in waypoints] == COLLINEAR
    assert waypoints[0].is_home and waypoints[2].segment_id == "p2"


# ============================================================================
# GREEDY AND NOISY DIJKSTRA
# ============================================================================


def test_greedy_collinear():
    tour = greedy_dijkstra(graph_from_points(COLLINEAR))
    assert tour.order == (0, 1, 2)
    assert tour.length_mm == 20.0


def test_greedy_ties_go_to_lowest_index():
    tour = greedy_dijkstra(graph_from_points([(0, 0), (1, 0), (0, 1), (-1, 0)]))
    assert tour.order == (0, 1, 2, 3)


def test_greedy_never_beats_exhaustive(rng):
    for _ in range(10):
        graph = random_graph(rng, 8)
        assert greedy_dijkstra(graph).length_mm >= exhaustive_open(graph) - 1e-9


def test_noisy_dijkstra_dominates_greedy(rng):
    cfg = PlannerConfig(alpha=0.02, generations=200, seed=3)
    for n in (5, 20, 60):
        graph = random_graph(rng, n)
        tour = noisy_dijkstra(graph, cfg)
        assert_permutation(graph, tour)
        assert tour.length_mm <= greedy_dijkstra(graph).length_mm


def test_noisy_dijkstra_without_noise_is_greedy(rng):
    graph = random_graph(rng, 25)
    greedy = greedy_dijkstra(graph)
    tour = noisy_dijkstra(graph, PlannerConfig(alpha=0.0, generations=50, polish=False), keep_history=True)
    assert tour.order == greedy.order
    assert tour.history == [greedy.length_mm] * 50


def test_noisy_dijkstra_is_seeded(rng):
    graph = random_graph(rng, 30)
    cfg = PlannerConfig(alpha=0.05, generations=100, seed=11)
    assert noisy_dijkstra(graph, cfg).order == noisy_dijkstra(graph, cfg).order


def test_untangle_removes_a_crossing():
    graph = graph_from_points([(0.0, 0.0), (2.0, 0.0), (1.0, 0.0), (3.0, 0.0)])
    assert tour_length(graph, (0, 1, 2, 3)) == 5.0
    assert untangle(graph.dist, [0, 1, 2, 3]).tolist() == [0, 2, 1, 3]


def test_untangle_leaves_no_improving_reversal(rng):
    for n in (3, 12, 40):
        graph = random_graph(rng, n)
        start = greedy_order(graph.dist, graph.start)
        order = untangle(graph.dist, start)
        assert order[0] == graph.start and sorted(order) == list(range(n))
        assert tour_length(graph, order) <= tour_length(graph, start) + 1e-9
        length = tour_length(graph, order)
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                flipped = np.concatenate([order[:i], order[i : j + 1][::-1], order[j + 1 :]])
                assert tour_length(graph, flipped) >= length - 1e-6


def test_polished_noisy_tour_never_longer_than_unpolished(rng):
    graph = random_graph(rng, 40)
    cfg = PlannerConfig(alpha=0.02, generations=30, seed=5, polish=True)
    plain = noisy_dijkstra(graph, cfg.model_copy(update={"polish": False}))
    polished = noisy_dijkstra(graph, cfg)
    assert_permutation(graph, polished)
    assert polished.length_mm <= plain.length_mm



# ============================================================================
# CHRISTOFIDES, A*, GENETIC
# ============================================================================


def test_christofides_two_nodes():
    graph = graph_from_points([(0, 0), (3, 4)])
    tour = christofides_otsp(graph)
    assert tour.order == (0, 1) and tour.length_mm == 5.0


def test_christofides_unit_square():
    tour = christofides_otsp(graph_from_points([(0, 0), (1, 0), (1, 1), (0, 1)]))
    assert tour.length_mm == pytest.approx(3.0)
    assert tour.closed_length_mm == pytest.approx(4.0)


def test_christofides_closed_bound():
    rng = np.random.default_rng(99)
    for n in range(3, 11):
        for _ in range(3 if n < 10 else 1):
            graph = random_graph(rng, n)
            cycle = closed_tour(graph)
            assert sorted(cycle) == list(range(n))
            tour = christofides_otsp(graph)
            assert_permutation(graph, tour)
            assert tour.closed_length_mm <= 1.5 * exhaustive_closed(graph) + 1e-9


def test_astar_collinear_and_trivial():
    assert astar_otsp(graph_from_points(COLLINEAR)).length_mm == 20.0
    assert astar_otsp(graph_from_points([(1.0, 1.0)])).order == (0,)


def test_astar_matches_exhaustive_oracle():
    rng = np.random.default_rng(7)
    for i in range(100):
        graph = random_graph(rng, 3 + i % 7)
        assert astar_otsp(graph).length_mm == pytest.approx(exhaustive_open(graph), abs=1e-9)


def test_astar_beam_on_large_graph(rng):
    graph = random_graph(rng, 106)
    tour = astar_otsp(graph, beam_width=50)
    assert_permutation(graph, tour)


def test_astar_unknown_heuristic():
    with pytest.raises(GraphError):
        astar_otsp(graph_from_points(COLLINEAR), h="euclid")


def test_genetic_small_and_deterministic(rng):
    assert ga_otsp(graph_from_points([(0, 0), (5, 5)])).order == (0, 1)
    graph = random_graph(rng, 12)
    cfg = PlannerConfig(generations=200, seed=4)
    a, b = ga_otsp(graph, cfg), ga_otsp(graph, cfg)
    assert a.order == b.order
    assert_permutation(graph, a)


@pytest.mark.slow
def test_genetic_near_optimal_on_small_graphs():
    rng = np.random.default_rng(8)
    hits = 0
    for seed in range(50):
        graph = random_graph(rng, 8)
        tour = ga_otsp(graph, PlannerConfig(seed=seed))
        hits += tour.length_mm <= 1.1 * exhaustive_open(graph)
    assert hits >= 40


def test_genetic_operators_keep_permutations(rng):
    p1, p2 = rng.permutation(10), rng.permutation(10)
    child = order_crossover(p1, p2, rng)
    assert sorted(child) == list(range(10))
    assert sorted(swap_mutation(child, rng)) == list(range(10))


# ============================================================================
# BENCHMARK TABLE
# ============================================================================


def test_benchmark_one_graph_five_rows(rng):
    table = benchmark([random_graph(rng, 9)], PlannerConfig(generations=50))
    assert len(table) == 5
    assert list(table.columns) == ["graph_id", "algorithm", "length_mm", "wall_ms", "seed"]
    lengths = table.set_index("algorithm")["length_mm"]
    assert all(lengths["astar"] <= lengths[name] + 1e-9 for name in PLANNERS)


def test_unknown_planner():
    with pytest.raises(GraphError):
        run_planner("dijkstra", graph_from_points(COLLINEAR), PlannerConfig())


def test_benchmark_graphs_share_one_film_layout():
    a, b = clustered_graphs(2, seed=4)
    assert a.size == b.size == 106
    pa, pb = a.points[1:].reshape(35, 3, 2), b.points[1:].reshape(35, 3, 2)
    # same films, different contact points inside each
    assert np.abs(pa.mean(axis=1) - pb.mean(axis=1)).max() < 5.0
    assert not np.allclose(pa, pb)


@pytest.mark.slow
def test_noisy_dijkstra_beats_baselines_on_film_array_graphs():
    graphs = clustered_graphs(115, seed=0)
    assert all(g.size == 106 for g in graphs)
    table = benchmark(graphs, PlannerConfig(), algorithms=["greedy_dijkstra", "noisy_dijkstra", "christofides"], workers=4)
    assert len(table) == 3 * 115
    summary = summarize(table)
    assert summary.loc["noisy_dijkstra", "improvement_vs_greedy_pct"] >= 2.0
    assert summary.loc["noisy_dijkstra", "variance_mm2"] < summary.loc["christofides", "variance_mm2"]
