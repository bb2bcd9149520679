"""(1+eps) spanner, distance labeling and oracle on a point subset.

All three share one nested net hierarchy: level 0 holds every point (nominal
radius half the minimum distance), and level ``i`` is a greedy net of level
``i-1`` with radius ``2**i`` times that, until a single point remains.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numba
import numpy as np

from .metric import FiniteMetric, greedy_net, within


@dataclass(frozen=True)
class NetHierarchy:
    points: tuple[int, ...]
    radii: tuple[float, ...]
    levels: tuple[tuple[int, ...], ...]
    # parents[i][p] = covering point of p in level i+1
    parents: tuple[dict, ...]

    @property
    def depth(self) -> int:
        return len(self.levels)


def build_hierarchy(points, metric: FiniteMetric) -> NetHierarchy:
    pts = tuple(sorted(set(int(p) for p in points)))
    if not pts:
        raise ValueError("empty point list")
    if len(pts) == 1:
        return NetHierarchy(pts, (1.0,), (pts,), ())
    sub = metric.block(pts, pts)
    r0 = float(sub[~np.eye(len(pts), dtype=bool)].min()) / 2
    levels = [pts]
    radii = [r0]
    parents = []
    while len(levels[-1]) > 1:
        r = r0 * 2 ** len(levels)
        net = greedy_net(levels[-1], metric, r)
        d = metric.block(levels[-1], net.members)
        pos = np.argmin(d, axis=1)
        parents.append({p: net.members[q] for p, q in zip(levels[-1], pos)})
        levels.append(net.members)
        radii.append(r)
    return NetHierarchy(pts, tuple(radii), tuple(levels), tuple(parents))


def cross_edge_factor(eps: float) -> float:
    return 4 + 16 / eps


@dataclass(frozen=True)
class BaseSpanner:
    vertices: tuple[int, ...]
    edges: tuple[tuple[int, int, float], ...]
    eps: float
    c: float
    hierarchy: NetHierarchy

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> dict[int, list[tuple[int, float]]]:
        adj = {v: [] for v in self.vertices}
        for i, j, w in self.edges:
            adj[i].append((j, w))
            adj[j].append((i, w))
        return adj


@numba.njit(cache=True)
def _greedy_keep(D, ai, bi, t):
    # Scan pairs by increasing length; keep an edge only when the current
    # spanner distance exceeds t times its length.  G is the spanner's APSP.
    m = D.shape[0]
    G = np.full((m, m), np.inf)
    for x in range(m):
        G[x, x] = 0.0
    keep = np.zeros(len(ai), dtype=np.bool_)
    for e in range(len(ai)):
        a = ai[e]
        b = bi[e]
        w = D[a, b]
        if G[a, b] <= t * w:
            continue
        keep[e] = True
        for x in range(m):
            ga = G[x, a] + w
            gb = G[x, b] + w
            for y in range(m):
                c = ga + G[b, y]
                if c < G[x, y]:
                    G[x, y] = c
                c = gb + G[a, y]
                if c < G[x, y]:
                    G[x, y] = c
    return keep


def greedy_spanner_edges(points, metric: FiniteMetric, t: float) -> list[tuple[int, int, float]]:
    pts = np.asarray(points, dtype=np.intp)
    if len(pts) < 2:
        return []
    D = np.ascontiguousarray(metric.block(pts, pts))
    ai, bi = np.triu_indices(len(pts), 1)
    order = np.lexsort((bi, ai, D[ai, bi]))
    ai, bi = ai[order], bi[order]
    keep = _greedy_keep(D, ai, bi, t)
    return [(int(pts[a]), int(pts[b]), float(D[a, b])) for a, b in zip(ai[keep], bi[keep])]


def build_base_spanner(points, metric: FiniteMetric, eps: float, c: float | None = None,
                       method: str = "net-tree") -> BaseSpanner:
    """(1+eps)-spanner on ``points``.

    ``"net-tree"``: at every level join net points closer than ``c * r_i``, and
    join each point to its parent on the next level.  ``"greedy"``: the classic
    path-greedy spanner (much sparser, quadratic memory in the point count).
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    c = cross_edge_factor(eps) if c is None else c
    h = build_hierarchy(points, metric)
    if method == "greedy":
        edges = greedy_spanner_edges(h.points, metric, 1 + eps)
        return BaseSpanner(h.points, tuple(sorted(edges)), eps, c, h)
    if method != "net-tree":
        raise ValueError(f"unknown spanner method {method!r}")
    edges = {}
    for lvl, r in zip(h.levels, h.radii):
        if len(lvl) < 2:
            continue
        d = metric.block(lvl, lvl)
        ii, jj = np.nonzero(np.triu(within(d, c * r), 1))
        for a, b in zip(ii, jj):
            edges[(lvl[a], lvl[b])] = float(d[a, b])
    for par in h.parents:
        for p, q in par.items():
            if p != q:
                key = (min(p, q), max(p, q))
                if key not in edges:
                    edges[key] = metric.dist(p, q)
    return BaseSpanner(h.points, tuple((i, j, w) for (i, j), w in sorted(edges.items())), eps, c, h)


def label_reach(eps: float) -> float:
    return 2 + 8 / eps


@dataclass(frozen=True)
class Label:
    """Sorted keys ``level * stride + point`` with the distance to each point."""

    keys: np.ndarray
    dists: np.ndarray

    def __len__(self):
        return len(self.keys)

    def entries(self, stride: int) -> list[tuple[int, int, float]]:
        return [(int(k // stride), int(k % stride), float(d)) for k, d in zip(self.keys, self.dists)]


def decode(a: Label, b: Label) -> float:
    """min over shared (level, net point) entries of the two stored distances."""
    _, ia, ib = np.intersect1d(a.keys, b.keys, assume_unique=True, return_indices=True)
    if len(ia) == 0:
        return math.inf
    return float(np.min(a.dists[ia] + b.dists[ib]))


@dataclass(frozen=True)
class BaseLabeling:
    vertices: tuple[int, ...]
    labels: dict[int, Label]
    radii: tuple[float, ...]
    stride: int
    eps: float
    reach: float

    def label(self, u: int) -> Label:
        try:
            return self.labels[u]
        except KeyError:
            raise KeyError(f"unknown index {u}") from None

    def query(self, u: int, v: int) -> float:
        return decode(self.label(u), self.label(v))

    def label_sizes(self) -> dict[int, int]:
        return {u: len(l) for u, l in self.labels.items()}


def build_base_labeling(points, metric: FiniteMetric, eps: float,
                        reach: float | None = None) -> BaseLabeling:
    """Each point stores, per level, the net points within ``reach * r_i`` together
    with their exact distances."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    reach = label_reach(eps) if reach is None else reach
    h = build_hierarchy(points, metric)
    stride = metric.n
    pts = list(h.points)
    keys = {p: [] for p in pts}
    dists = {p: [] for p in pts}
    for li, (lvl, r) in enumerate(zip(h.levels, h.radii)):
        d = metric.block(pts, lvl)
        ok = within(d, reach * r)
        for a, p in enumerate(pts):
            cols = np.flatnonzero(ok[a])
            keys[p].extend(li * stride + lvl[q] for q in cols)
            dists[p].extend(d[a, cols].tolist())
    labels = {}
    for p in pts:
        k = np.asarray(keys[p], dtype=np.int64)
        order = np.argsort(k)
        labels[p] = Label(k[order], np.asarray(dists[p], dtype=float)[order])
    return BaseLabeling(h.points, labels, h.radii, stride, eps, reach)


def spanner_distance(spanner: BaseSpanner, u: int, v: int) -> float:
    """Shortest-path distance inside the spanner (heap Dijkstra, early exit)."""
    adj = spanner.adjacency()
    if u not in adj or v not in adj:
        raise KeyError(f"unknown index {u if u not in adj else v}")
    seen = set()
    heap = [(0.0, u)]
    while heap:
        d, x = heapq.heappop(heap)
        if x == v:
            return d
        if x in seen:
            continue
        seen.add(x)
        for y, w in adj[x]:
            if y not in seen:
                heapq.heappush(heap, (d + w, y))
    return math.inf


def base_oracle_query(structure, u: int, v: int) -> tuple[float, int]:
    """Approximate distance and the number of stored entries touched."""
    if isinstance(structure, BaseLabeling):
        a, b = structure.label(u), structure.label(v)
        return decode(a, b), len(a) + len(b)
    if isinstance(structure, BaseSpanner):
        return spanner_distance(structure, u, v), structure.num_edges
    raise TypeError(f"unsupported structure {type(structure).__name__}")
