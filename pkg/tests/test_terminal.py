import math

import numpy as np
import pytest

from oracles import dijkstra_all
from termspan.base import build_base_labeling, build_base_spanner
from termspan.harness import audit_stretch, extension_violations, gen_instance, lower_bound_instance
from termspan.metric import FiniteMetric, TerminalInstance
from termspan.terminal import (FINAL_MARKED, NEAREST_TERMINAL, HangMap, build_k_doubling_labeling,
                               build_k_doubling_oracle, build_k_doubling_spanner, build_terminal_labeling,
                               build_terminal_oracle, build_terminal_spanner, certified_bound,
                               extend_embedding, extend_labeling, k_doubling_query, lp_distance,
                               neighbour_nets)

pytestmark = pytest.mark.filterwarnings("ignore:eps=.*exceeds")


def collinear(coords, K, eps):
    return TerminalInstance(FiniteMetric(coords=np.asarray(coords, dtype=float)[:, None]), K, eps)


@pytest.fixture(scope="module")
def uniform500():
    return gen_instance("uniform-square", 500, 25, 0.1, seed=0)


def test_extension_arithmetic_by_hand():
    # Y = {0, 100}, point 1 hung on 0: 1 + 100 = 101 against a true distance of 99
    inst = collinear([0, 1, 100], (0, 2), 0.05)
    hm = HangMap({1: 0}, {1: 1.0}, {1: NEAREST_TERMINAL})
    base = build_base_spanner([0, 2], inst.metric, 0.05)
    assert base.edges == ((0, 2, 100.0),)
    edges = base.edges + ((0, 1, 1.0),)
    assert dijkstra_all(3, edges, 1)[2] == 101.0
    assert dijkstra_all(3, edges, 1)[2] / inst.metric.dist(1, 2) == 101 / 99
    lab = extend_labeling(build_base_labeling([0, 2], inst.metric, 0.05), hm, inst)
    assert lab.query(1, 2) == 101.0
    assert lab.query(1, 0) == 1.0


def test_collinear_near_terminal_pipeline():
    inst = collinear([0, 0.2, 100], (0, 2), 0.05)
    sp = build_terminal_spanner(inst)
    assert sp.edges == ((0, 1, 0.2), (0, 2, 100.0))
    assert sp.query(1, 2) == pytest.approx(100.2)
    rep = audit_stretch(sp, inst)
    assert rep.max_stretch == pytest.approx(100.2 / 99.8)
    assert rep.passed and rep.certified == pytest.approx(1.6)
    lab = build_terminal_labeling(inst)
    assert lab.query(1, 2) == pytest.approx(100.2)
    assert lab.query(2, 1) == lab.query(1, 2)


def test_collinear_unit_point_in_base():
    inst = collinear([0, 1, 100], (0, 2), 0.05)
    sp = build_terminal_spanner(inst)
    assert sp.Y == (0, 1, 2) and len(sp.hang) == 0
    assert audit_stretch(sp, inst).max_stretch == 1.0


def test_all_terminals_is_pure_base():
    rng = np.random.default_rng(1)
    inst = TerminalInstance(FiniteMetric(coords=rng.uniform(size=(40, 2))), tuple(range(40)), 0.1)
    sp = build_terminal_spanner(inst)
    assert sp.edges == sp.base.edges
    assert audit_stretch(sp, inst, certified=1.1).passed


def test_edge_count_identity(uniform500):
    sp = build_terminal_spanner(uniform500)
    assert sp.num_edges == sp.base.num_edges + uniform500.n - len(sp.Y)
    rep = audit_stretch(sp, uniform500)
    assert rep.passed and rep.min_stretch >= 1 - 1e-12
    assert rep.certified == pytest.approx(2.2)


def test_labeling_and_oracle_agree(uniform500):
    lab = build_terminal_labeling(uniform500)
    orc = build_terminal_oracle(uniform500)
    assert orc.centralized and not lab.centralized
    rng = np.random.default_rng(0)
    for x, v in zip(rng.integers(0, 500, 50), rng.choice(uniform500.terminals, 50)):
        assert lab.query(int(x), int(v)) == orc.query(int(x), int(v))
    assert sum(orc.storage().values()) <= sum(lab.storage().values())
    assert audit_stretch(lab, uniform500).passed


def test_hang_reasons_cover_outside_points(uniform500):
    sp = build_terminal_spanner(uniform500)
    assert set(sp.hang.points()) == set(range(500)) - set(sp.Y)
    assert set(sp.hang.reason.values()) <= {FINAL_MARKED, NEAREST_TERMINAL}


def test_extension_contract_all_structures(uniform500):
    for st in (build_terminal_spanner(uniform500), build_terminal_labeling(uniform500)):
        assert extension_violations(st, uniform500) == []


def test_query_needs_base_vertex():
    inst = collinear([0, 0.2, 100, 100.1], (0, 2), 0.05)
    lab = build_terminal_labeling(inst)
    assert set(lab.hang.points()) == {1, 3}
    with pytest.raises(KeyError):
        lab.query(1, 3)


def test_extend_embedding_rules():
    hm = HangMap({2: 0}, {2: 4.0}, {2: NEAREST_TERMINAL})
    F = extend_embedding({0: np.array([0.0]), 1: np.array([3.0])}, hm, 3)
    assert F.shape == (3, 2)
    assert lp_distance(F[2], F[1], 2) == 5.0
    assert lp_distance(F[2], F[0], 2) == 4.0
    hm = HangMap({2: 0}, {2: 1.0}, {2: NEAREST_TERMINAL})
    F = extend_embedding({0: np.array([0.0]), 1: np.array([3.0])}, hm, 3)
    assert lp_distance(F[2], F[1], math.inf) == 3.0
    assert F[0, -1] == 0.0 and F[1, -1] == 0.0


def test_single_terminal_star():
    inst = collinear([0, 1, 3, 7], (2,), 0.1)
    sp = build_terminal_spanner(inst)
    assert sp.edges == ((0, 2, 3.0), (1, 2, 2.0), (2, 3, 4.0))
    assert audit_stretch(sp, inst).max_stretch == 1.0
    kd = build_k_doubling_spanner(inst)
    assert sorted(kd.edges) == sorted(sp.edges)
    assert audit_stretch(build_terminal_labeling(inst), inst).max_stretch == 1.0


def test_certified_bounds():
    assert certified_bound(0.05, "X-doubling") == pytest.approx(1.6)
    assert certified_bound(0.1, "K-doubling") == pytest.approx(1.3)


def test_k_doubling_collinear():
    inst = collinear([0, 1, 100], (0, 2), 0.1)
    assert neighbour_nets(inst) == {1: (0,)}
    sp = build_k_doubling_spanner(inst)
    assert sp.num_edges == sp.base.num_edges + 1
    assert (0, 1, 1.0) in sp.edges


def test_k_doubling_lower_bound_links_everything():
    lb = lower_bound_instance(4, 0.3, 50, seed=0)
    inst = lb.instance
    nets = neighbour_nets(inst)
    for x, ws in nets.items():
        assert set(ws) == set(inst.terminals)
        assert ws[0] == min(inst.terminals)


def test_k_doubling_labeling_queries():
    inst = gen_instance("completion", 120, 16, 0.2, seed=3)
    lab = build_k_doubling_labeling(inst, centralized=False)
    orc = build_k_doubling_oracle(inst)
    sp = build_k_doubling_spanner(inst)
    for st in (lab, orc, sp):
        rep = audit_stretch(st, inst)
        assert rep.passed, rep.violation
        assert rep.certified == pytest.approx(1.6)
    x = next(p for p in range(inst.n) if p not in inst.terminals)
    v = inst.terminals[3]
    assert k_doubling_query(lab, x, v) == lab.query(x, v)
    with pytest.raises(KeyError):
        k_doubling_query(lab, v, x)
    with pytest.raises(ValueError):
        k_doubling_query(build_terminal_labeling(inst), x, v)
