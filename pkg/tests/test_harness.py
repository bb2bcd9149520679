import math

import numpy as np
import pytest

from oracles import dijkstra_all
from termspan.harness import (KINDS, WORKERS_ENV, audit_stretch, exact_graph_distances, floyd_warshall,
                              gen_instance, lower_bound_audit, lower_bound_instance, sphere_net)
from termspan.metric import FiniteMetric, TerminalInstance
from termspan.terminal import build_k_doubling_spanner

pytestmark = pytest.mark.filterwarnings("ignore:eps=.*exceeds")

REPORT_KEYS = {"instance", "structure", "max_stretch", "min_stretch", "mean_stretch", "percentiles",
               "worst", "certified", "lower_bound", "passed", "pairs", "violation", "extra"}


class EdgeSet:
    def __init__(self, n, edges):
        self.n, self.edges = n, tuple(edges)


def complete_edges(D):
    n = len(D)
    return [(i, j, float(D[i, j])) for i in range(n) for j in range(i + 1, n)]


def test_line_generator():
    inst = gen_instance("line", 4, 2, 0.1, seed=0)
    np.testing.assert_array_equal(inst.metric.coords[:, 0], [0, 1, 2, 3])
    inst = gen_instance("line", 4, 2, 0.1, seed=0, spacing=2.5)
    assert inst.metric.dist(0, 3) == 7.5


@pytest.mark.parametrize("kind", [k for k in KINDS if k != "lower-bound"])
def test_generators_deterministic_and_metric(kind):
    a = gen_instance(kind, 120, 8, 0.1, seed=9)
    b = gen_instance(kind, 120, 8, 0.1, seed=9)
    np.testing.assert_array_equal(a.metric.matrix(), b.metric.matrix())
    assert a.terminals == b.terminals and a.k == 8
    a.metric.check()
    c = gen_instance(kind, 120, 8, 0.1, seed=10)
    if kind not in ("grid", "line", "completion"):
        assert not np.array_equal(a.metric.matrix(), c.metric.matrix())


def test_large_instance_sampled_triangle_check():
    inst = gen_instance("completion", 260, 20, 0.1, seed=1)
    assert inst.metric.triangle_violations() == []


def test_bad_generator_params():
    with pytest.raises(ValueError):
        gen_instance("torus", 10, 2, 0.1)
    with pytest.raises(ValueError):
        gen_instance("uniform-square", 10, 11, 0.1)


def test_lower_bound_instance_shape():
    lb = lower_bound_instance(4, 0.3, 50, seed=0)
    inst = lb.instance
    assert lb.t == 2
    assert 15 <= inst.k <= 25
    assert inst.n == 50 and inst.terminals == tuple(range(inst.k))
    inst.metric.check()
    D = inst.metric.matrix()
    K = inst.k
    assert D[:K, :K][~np.eye(K, dtype=bool)].min() > 0.3
    assert np.all(D[:K, K:] == 1.0)
    off = D[K:, K:][~np.eye(50 - K, dtype=bool)]
    assert np.all(off == 2.0)


def test_sphere_net_is_separated():
    net, sample = sphere_net(3, 0.5, seed=2)
    assert len(sample) == 30000
    d = np.linalg.norm(net[:, None] - net[None], axis=2)
    assert d[~np.eye(len(net), dtype=bool)].min() > 0.5
    np.testing.assert_allclose(np.linalg.norm(net, axis=1), 1.0)


def test_exact_distances_star_and_triangle():
    star = [(0, 1, 2.0), (0, 2, 3.0), (0, 3, 0.5)]
    np.testing.assert_array_equal(exact_graph_distances(star, 4, [0])[0], [0, 2, 3, 0.5])
    tri = [(0, 1, 3.0), (1, 2, 4.0), (0, 2, 5.0)]
    assert exact_graph_distances(tri, 3, [0])[0, 2] == 5.0
    tri = [(0, 1, 3.0), (1, 2, 4.0), (0, 2, 9.0), (0, 2, 8.0)]
    assert exact_graph_distances(tri, 3, [0])[0, 2] == 7.0
    assert math.isinf(exact_graph_distances([(0, 1, 1.0)], 3, [0])[0, 2])
    assert exact_graph_distances([], 2, [1])[0].tolist() == [math.inf, 0.0]


def test_exact_distances_match_two_oracles(monkeypatch):
    rng = np.random.default_rng(3)
    n = 150
    edges = [(i, int(rng.integers(0, i)), float(rng.uniform(0.1, 5))) for i in range(1, n)]
    edges += [(int(a), int(b), float(rng.uniform(0.1, 5))) for a, b in rng.integers(0, n, (300, 2)) if a != b]
    W = np.full((n, n), np.inf)
    np.fill_diagonal(W, 0.0)
    for i, j, w in edges:
        W[i, j] = W[j, i] = min(W[i, j], w)
    got = exact_graph_distances(edges, n, range(n))
    np.testing.assert_allclose(got, floyd_warshall(W), rtol=1e-9)
    for s in (0, 17, 149):
        np.testing.assert_allclose(got[s], dijkstra_all(n, edges, s), rtol=1e-9)
    monkeypatch.setenv(WORKERS_ENV, "3")
    np.testing.assert_array_equal(exact_graph_distances(edges, n, range(n)), got)


def test_complete_graph_has_unit_stretch():
    inst = gen_instance("uniform-square", 60, 6, 0.1, seed=0)
    rep = audit_stretch(EdgeSet(60, complete_edges(inst.metric.matrix())), inst, certified=1.0)
    assert rep.max_stretch == pytest.approx(1.0) and rep.passed
    d = rep.to_dict()
    assert set(d) == REPORT_KEYS
    assert len(d["worst"]) == 10 and d["pairs"] == 360
    assert d["violation"] is None


def test_lower_bound_audit_passes():
    lb = lower_bound_instance(4, 0.3, 50, seed=0)
    rep = lower_bound_audit(lb)
    assert rep["passed"] and rep["pairs_without_detour"] == 0
    assert rep["required_cross_edges"] == lb.instance.k * (50 - lb.instance.k)
    assert rep["min_detour_ratio"] > 1.3
    with pytest.raises(TypeError):
        lower_bound_audit(lb.instance)


def test_deleted_cross_edge_is_flagged():
    lb = lower_bound_instance(4, 0.3, 50, seed=0)
    inst = lb.instance
    sp = build_k_doubling_spanner(inst)
    assert audit_stretch(sp, inst).passed
    x, v = inst.k + 3, 5
    edges = [e for e in sp.edges if (e[0], e[1]) != (v, x)]
    assert len(edges) == len(sp.edges) - 1
    rep = audit_stretch(EdgeSet(inst.n, edges), inst, certified=1 + inst.eps)
    assert not rep.passed
    assert (rep.violation["x"], rep.violation["v"]) == (x, v)
    assert rep.violation["stretch"] > 1 + inst.eps


def test_coincident_pair_counts_as_unit_stretch():
    D = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]], dtype=float)
    inst = TerminalInstance(FiniteMetric(matrix=D), (0, 2), 0.1)
    rep = audit_stretch(EdgeSet(3, complete_edges(D)), inst, certified=1.0)
    assert rep.min_stretch == 1.0 and rep.passed
