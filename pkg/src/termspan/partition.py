"""Multi-scale partial partitions, cluster marking and the enriched terminal set."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .metric import Net, TerminalInstance, greedy_net, refine_net, within

EPS_CERTIFIED = 1 / 20


@dataclass(frozen=True)
class Cluster:
    level: int
    index: int
    center: int
    members: tuple[int, ...]
    final: bool


@dataclass(frozen=True)
class Level:
    i: int
    r: float
    residual: tuple[int, ...]
    net: Net
    clusters: tuple[Cluster, ...]


@dataclass(frozen=True)
class PartialPartition:
    """Per-level ball carvings of the shrinking residual sets.

    ``levels[i]`` holds level ``i`` (radius ``2**i * eps**2 * delta``); the
    top level ``s`` partitions the whole space.
    """

    eps: float
    delta: float
    Delta: float
    s: int
    levels: tuple[Level, ...]
    n: int

    def r(self, i: int) -> float:
        return radius(i, self.eps, self.delta)

    def top_level(self, u: int) -> int:
        """Largest level whose net contains ``u`` (-1 if none)."""
        for lvl in reversed(self.levels):
            if u in lvl.net:
                return lvl.i
        return -1

    def final_cluster_of(self) -> dict[int, Cluster]:
        out = {}
        for lvl in self.levels:
            for c in lvl.clusters:
                if c.final:
                    for x in c.members:
                        out[x] = c
        return out

    def dump(self) -> str:
        lines = []
        for lvl in reversed(self.levels):
            lines.append(f"level {lvl.i} r={lvl.r:.12g}")
            lines.append("  centers " + " ".join(str(c.center) for c in lvl.clusters))
            lines.append("  final   " + " ".join("1" if c.final else "0" for c in lvl.clusters))
        return "\n".join(lines) + "\n"


def radius(i: int, eps: float, delta: float) -> float:
    return math.ldexp(eps * eps * delta, i)


def top_level_index(eps: float, delta: float, Delta: float) -> int:
    s = max(0, math.ceil(math.log2(Delta / (eps * eps * delta))))
    while radius(s, eps, delta) < Delta:
        s += 1
    return s


def build_partial_partitions(inst: TerminalInstance) -> PartialPartition:
    """Carve the space level by level, from the coarsest scale down to ``eps**2 * delta``.

    At level ``i`` a terminal net of the residual set ``R_i`` is built (keeping
    the terminals of the level above), and balls of radius ``r_i`` around the
    net points are cut off in net order.  A cluster whose center is at least
    ``r_i / eps`` away from every terminal is final; only non-final clusters
    are passed down to level ``i - 1``.
    """
    if inst.k < 2:
        raise ValueError("need at least two terminals")
    eps = inst.eps
    if eps > EPS_CERTIFIED:
        warnings.warn(f"eps={eps} exceeds 1/20; stretch bounds are not certified", stacklevel=2)
    metric, K = inst.metric, inst.terminals
    s = top_level_index(eps, inst.delta, inst.Delta)
    dK = inst.distance_to_terminals()

    residual = np.arange(inst.n, dtype=np.intp)
    net = None
    levels: list[Level] = []
    for i in range(s, -1, -1):
        r = radius(i, eps, inst.delta)
        if net is None:
            net = greedy_net(residual, metric, r, priority=K)
        else:
            net = refine_net(net, residual, metric, r, priority=K)
        left = np.ones(len(residual), dtype=bool)
        clusters = []
        rows = metric.block(net.members, residual)
        for j, c in enumerate(net.members):
            take = left & within(rows[j], r)
            left &= ~take
            final = bool(dK[c] >= r / eps)
            clusters.append(Cluster(i, j, c, tuple(residual[take].tolist()), final))
        assert not left.any(), "net failed to cover the residual set"
        levels.append(Level(i, r, tuple(residual.tolist()), net, tuple(clusters)))
        keep = [x for c in clusters if not c.final for x in c.members]
        residual = np.asarray(sorted(keep), dtype=np.intp)
    levels.reverse()
    return PartialPartition(eps, inst.delta, inst.Delta, s, tuple(levels), inst.n)


def validate_partition(pp: PartialPartition, inst: TerminalInstance) -> None:
    """Raise AssertionError if any structural invariant of the partition fails."""
    metric, K = inst.metric, set(inst.terminals)
    dK = inst.distance_to_terminals()
    eps = pp.eps
    assert math.isclose(pp.r(0), eps * eps * pp.delta)
    assert pp.r(pp.s) >= pp.Delta
    assert tuple(pp.levels[pp.s].residual) == tuple(range(inst.n))
    final_seen = np.zeros(inst.n, dtype=int)
    for lvl in pp.levels:
        lvl.net.check(metric, lvl.residual, K)
        members = [x for c in lvl.clusters for x in c.members]
        assert len(members) == len(set(members)), f"overlapping clusters at level {lvl.i}"
        assert sorted(members) == list(lvl.residual), f"clusters do not cover R_{lvl.i}"
        for c in lvl.clusters:
            d = metric.block([c.center], c.members)[0]
            assert np.all(within(d, lvl.r)), f"cluster radius exceeded at level {lvl.i}"
            assert c.final == bool(dK[c.center] >= lvl.r / eps)
            if K.intersection(c.members):
                assert not c.final and c.center in K
            if c.final:
                final_seen[list(c.members)] += 1
        if lvl.i > 0:
            below = sorted(x for c in lvl.clusters if not c.final for x in c.members)
            assert below == list(pp.levels[lvl.i - 1].residual)
        if lvl.i < pp.s:
            upper = pp.levels[lvl.i + 1].net
            for u in upper.terminal_members:
                assert u in lvl.net, f"terminal {u} dropped from net {lvl.i}"
    for c in pp.levels[0].clusters:
        if c.center in K:
            assert c.center in c.members
    assert all(u in pp.levels[0].net for u in K)
    assert final_seen.max(initial=0) <= 1


@dataclass(frozen=True)
class EnrichedSet:
    """Centers of marked clusters: the vertex set handed to the base structure."""

    Y: tuple[int, ...]
    b: int
    top_level: dict[int, int]
    marked: frozenset[tuple[int, int]]
    witness: dict[int, tuple[int, int, int]]
    marks_per_terminal: dict[int, int] = field(default_factory=dict)

    def __contains__(self, y):
        return y in self.witness


def mark_clusters(pp: PartialPartition, inst: TerminalInstance) -> EnrichedSet:
    """Each terminal ``u`` marks the clusters of levels ``i_u - 2b .. i_u`` whose
    centers lie within ``2 r_{i_u} / eps**2`` of ``u``."""
    eps = pp.eps
    b = math.ceil(math.log2(1 / eps))
    centers = [np.array([c.center for c in lvl.clusters], dtype=np.intp) for lvl in pp.levels]
    top = {}
    marked = set()
    witness: dict[int, tuple[int, int, int]] = {}
    counts = {}
    for u in inst.terminals:
        iu = pp.top_level(u)
        top[u] = iu
        reach = 2 * pp.r(iu) / (eps * eps)
        count = 0
        for i in range(max(0, iu - 2 * b), iu + 1):
            d = inst.metric.block([u], centers[i])[0]
            for j in np.flatnonzero(within(d, reach)):
                count += 1
                marked.add((i, int(j)))
                witness.setdefault(int(centers[i][j]), (u, i, int(j)))
        counts[u] = count
    Y = tuple(sorted(witness))
    return EnrichedSet(Y, b, top, frozenset(marked), witness, counts)


def enriched_size_audit(es: EnrichedSet, lam: int, k: int, b: int | None = None) -> dict:
    """Compare |Y| against ``k * lam**(5b)`` and per-terminal marks against
    ``(2b+1) * lam**(4b+2)``.  Reports, never raises."""
    b = es.b if b is None else b
    bound = k * lam ** (5 * b)
    per_bound = (2 * b + 1) * lam ** (4 * b + 2)
    per = dict(es.marks_per_terminal)
    return {
        "Y": len(es.Y),
        "k": k,
        "b": b,
        "lambda_hat": lam,
        "bound": bound,
        "log2_bound": math.log2(bound) if bound > 0 else float("-inf"),
        "per_terminal_marks": per,
        "max_marks": max(per.values(), default=0),
        "per_terminal_bound": per_bound,
        "per_terminal_pass": all(c <= per_bound for c in per.values()),
        "pass": len(es.Y) <= bound,
    }


def lemma2_violations(pp: PartialPartition, es: EnrichedSet, inst: TerminalInstance) -> list[tuple[int, int]]:
    """Points of final non-marked clusters below the top level that lack a witness terminal.

    A witness ``u'`` has ``d(x, u')`` in ``[r_i/(2 eps), 3 r_i/eps]`` and every
    other terminal at distance ``<= r_i`` or ``>= r_i/eps**2`` from it.
    Returns ``(x, level)`` pairs; empty when the property holds everywhere.
    """
    eps = pp.eps
    K = np.asarray(inst.terminals, dtype=np.intp)
    DK = inst.metric.block(K, K)
    bad = []
    for lvl in pp.levels[: pp.s]:
        r = lvl.r
        offdiag = ~np.eye(len(K), dtype=bool)
        gap = ~(within(DK, r) | (DK >= r / (eps * eps) * (1 - 1e-9)))
        isolated = ~np.any(gap & offdiag, axis=1)
        for c in lvl.clusters:
            if not c.final or (lvl.i, c.index) in es.marked:
                continue
            d = inst.metric.block(c.members, K)
            ok = (d >= r / (2 * eps) * (1 - 1e-9)) & within(d, 3 * r / eps) & isolated
            for x, good in zip(c.members, ok.any(axis=1)):
                if not good:
                    bad.append((x, lvl.i))
    return bad
