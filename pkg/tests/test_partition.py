import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import reference_hang, reference_marking, reference_partition
from termspan.harness import gen_instance
from termspan.metric import FiniteMetric, TerminalInstance, estimate_doubling_constant
from termspan.partition import (build_partial_partitions, enriched_size_audit, lemma2_violations,
                                mark_clusters, top_level_index, validate_partition)
from termspan.terminal import FINAL_MARKED, NEAREST_TERMINAL, hang_points

pytestmark = pytest.mark.filterwarnings("ignore:eps=.*exceeds")


def collinear(coords, K, eps):
    return TerminalInstance(FiniteMetric(coords=np.asarray(coords, dtype=float)[:, None]), K, eps)


def pipeline(inst):
    pp = build_partial_partitions(inst)
    es = mark_clusters(pp, inst)
    return pp, es, hang_points(pp, es, inst)


GOLDEN_NEAR_TERMINAL = """\
level 9 r=128
  centers 0
  final   0
level 8 r=64
  centers 0 2
  final   0 0
level 7 r=32
  centers 0 2
  final   0 0
level 6 r=16
  centers 0 2
  final   0 0
level 5 r=8
  centers 0 2
  final   0 0
level 4 r=4
  centers 0 2
  final   0 0
level 3 r=2
  centers 0 2
  final   0 0
level 2 r=1
  centers 0 2
  final   0 0
level 1 r=0.5
  centers 0 2
  final   0 0
level 0 r=0.25
  centers 0 2
  final   0 0
"""


def test_collinear_levels():
    inst = collinear([0, 1, 100], (0, 2), 0.05)
    pp = build_partial_partitions(inst)
    assert inst.delta == 100 and inst.Delta == 100
    assert pp.s == 9 == math.ceil(math.log2(400))
    assert math.isclose(pp.r(0), 0.25)
    validate_partition(pp, inst)
    assert 1 not in pp.final_cluster_of()


def test_collinear_unit_point_is_marked_center():
    # r_1 = 0.5 < d(0, 1), so point 1 becomes a level-1 center and terminal 0 marks it
    inst = collinear([0, 1, 100], (0, 2), 0.05)
    pp, es, hm = pipeline(inst)
    assert pp.levels[1].net.members == (0, 2, 1)
    assert es.Y == (0, 1, 2)
    assert len(hm) == 0
    assert es.Y == tuple(reference_marking(inst.metric.matrix().tolist(), (0, 2), 0.05)[3])


def test_point_inside_terminal_ball_hangs_on_terminal():
    inst = collinear([0, 0.2, 100], (0, 2), 0.05)
    pp, es, hm = pipeline(inst)
    assert es.Y == (0, 2)
    assert hm.target == {1: 0}
    assert hm.reason == {1: NEAREST_TERMINAL}
    assert math.isclose(hm.distance[1], 0.2)
    assert pp.dump() == GOLDEN_NEAR_TERMINAL


def test_terminal_set_only_has_no_final_clusters():
    rng = np.random.default_rng(0)
    inst = TerminalInstance(FiniteMetric(coords=rng.uniform(size=(30, 2))), tuple(range(30)), 0.1)
    pp, es, hm = pipeline(inst)
    assert not any(c.final for lvl in pp.levels for c in lvl.clusters)
    assert es.Y == inst.terminals
    audit = enriched_size_audit(es, estimate_doubling_constant(inst.metric), inst.k)
    assert audit["per_terminal_pass"] and audit["pass"]


def test_level_zero_terminal_clusters_hold_their_terminal():
    inst = gen_instance("uniform-square", 150, 12, 0.05, seed=4)
    pp = build_partial_partitions(inst)
    for c in pp.levels[0].clusters:
        if c.center in inst.terminals:
            assert c.center in c.members
    assert set(inst.terminals) <= set(pp.levels[0].net.members)


def test_far_center_marked_by_top_level_terminal():
    # 512 = r_9 / eps^2 for delta = 1, eps = 0.05
    inst = collinear([0, 1, -512], (0, 1), 0.05)
    pp, es, hm = pipeline(inst)
    assert pp.top_level(0) == pp.s == 9
    assert math.isclose(inst.metric.dist(0, 2), pp.r(9) / 0.05 ** 2)
    assert 2 in es.Y
    assert es.witness[2] == (0, 9, 1)


def test_hang_on_marked_final_center():
    inst = collinear([519.0, 528.0, 1312.0, 1528.0], (2, 3), 0.05)
    pp, es, hm = pipeline(inst)
    assert es.Y == (0, 2, 3)
    assert hm.target == {1: 0}
    assert hm.reason[1] == FINAL_MARKED
    assert inst.metric.nearest([1], inst.terminals)[0][0] == 2


def test_single_terminal_rejected():
    with pytest.raises(ValueError, match="at least two terminals"):
        build_partial_partitions(collinear([0, 1, 2], (0,), 0.05))


def test_large_eps_warns():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        build_partial_partitions(collinear([0, 1, 2], (0, 2), 0.2))
    assert any("not certified" in str(x.message) for x in w)


def test_top_level_covers_terminal_diameter():
    for eps, delta, Delta in [(0.05, 1.0, 1.0), (0.1, 0.3, 7.0), (0.2, 1e-3, 10.0)]:
        s = top_level_index(eps, delta, Delta)
        assert math.ldexp(eps * eps * delta, s) >= Delta


@pytest.mark.parametrize("kind", ["uniform-square", "gaussian-clusters", "grid", "line"])
@pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
def test_generated_instances_valid(kind, eps):
    inst = gen_instance(kind, 250, 10, eps, seed=7)
    pp, es, hm = pipeline(inst)
    validate_partition(pp, inst)
    assert set(inst.terminals) <= set(es.Y)
    assert lemma2_violations(pp, es, inst) == []
    assert set(hm.points()) == set(range(inst.n)) - set(es.Y)
    for x in hm.points():
        assert math.isclose(hm.distance[x], inst.metric.dist(x, hm.target[x]))


def test_enriched_size_regression():
    inst = gen_instance("uniform-square", 500, 25, 0.1, seed=0)
    pp, es, hm = pipeline(inst)
    lam = estimate_doubling_constant(inst.metric, mode="exhaustive")
    audit = enriched_size_audit(es, lam, inst.k)
    assert audit["pass"] and audit["per_terminal_pass"]
    assert audit["Y"] == len(es.Y) <= inst.n


@st.composite
def small_instances(draw):
    n = draw(st.integers(3, 14))
    dim = draw(st.sampled_from([1, 2]))
    pts = draw(st.lists(st.tuples(*[st.integers(0, 300)] * dim), min_size=n, max_size=n, unique=True))
    k = draw(st.integers(2, min(5, n)))
    K = draw(st.lists(st.integers(0, n - 1), min_size=k, max_size=k, unique=True))
    eps = draw(st.sampled_from([0.05, 0.1, 0.25]))
    return TerminalInstance(FiniteMetric(coords=np.array(pts, dtype=float)), tuple(K), eps)


@settings(max_examples=80, deadline=None)
@given(small_instances())
def test_matches_reference_implementation(inst):
    pp, es, hm = pipeline(inst)
    validate_partition(pp, inst)
    D = inst.metric.matrix().tolist()
    s, levels, _ = reference_partition(D, inst.terminals, inst.eps)
    assert s == pp.s
    for lvl in pp.levels:
        net, clusters = levels[lvl.i]
        assert list(lvl.net.members) == net
        assert [(c.center, list(c.members), c.final) for c in lvl.clusters] == clusters
    Y, hang = reference_hang(D, inst.terminals, inst.eps)
    assert list(es.Y) == Y
    assert hm.target == hang
