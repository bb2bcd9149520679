"""Terminal spanners, oracles, labelings and embeddings built by hanging points
off a structure on the enriched set (or on the terminals alone)."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .base import (BaseLabeling, BaseSpanner, Label, build_base_labeling,
                   build_base_spanner, decode)
from .metric import TerminalInstance, greedy_net
from .partition import (EnrichedSet, PartialPartition, build_partial_partitions,
                        mark_clusters)

FINAL_MARKED = "final-marked-center"
NEAREST_TERMINAL = "nearest-terminal"


@dataclass(frozen=True)
class HangMap:
    """Hang target, distance and reason for every point outside Y."""

    target: dict[int, int]
    distance: dict[int, float]
    reason: dict[int, str]

    def __contains__(self, x):
        return x in self.target

    def __len__(self):
        return len(self.target)

    def points(self) -> list[int]:
        return sorted(self.target)


def hang_points(pp: PartialPartition, es: EnrichedSet, inst: TerminalInstance) -> HangMap:
    """Points in a final marked cluster hang on its center; all others hang on
    their nearest terminal (smallest index on ties)."""
    metric = inst.metric
    Yset = set(es.Y)
    rest = [x for x in range(inst.n) if x not in Yset]
    target, dist, reason = {}, {}, {}
    if not rest:
        return HangMap(target, dist, reason)
    final_of = pp.final_cluster_of()
    near, near_d = metric.nearest(rest, inst.terminals)
    for x, u, d in zip(rest, near.tolist(), near_d.tolist()):
        c = final_of.get(x)
        if c is not None and (c.level, c.index) in es.marked:
            target[x] = c.center
            dist[x] = metric.dist(x, c.center)
            reason[x] = FINAL_MARKED
        else:
            target[x] = u
            dist[x] = d
            reason[x] = NEAREST_TERMINAL
    return HangMap(target, dist, reason)


def certified_bound(eps: float, mode: str) -> float:
    return 1 + (12 if mode == "X-doubling" else 3) * eps


@dataclass(frozen=True)
class TerminalSpanner:
    n: int
    terminals: tuple[int, ...]
    eps: float
    mode: str
    base: BaseSpanner
    edges: tuple[tuple[int, int, float], ...]
    Y: tuple[int, ...]
    hang: HangMap | None = None
    links: dict[int, tuple[int, ...]] | None = None
    partition: PartialPartition | None = field(default=None, repr=False)
    enriched: EnrichedSet | None = field(default=None, repr=False)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def certified(self) -> float:
        return certified_bound(self.eps, self.mode)

    def query(self, x: int, v: int) -> float:
        """Shortest-path distance in the spanner."""
        adj = self.__dict__.get("_adj")
        if adj is None:
            adj = [[] for _ in range(self.n)]
            for i, j, w in self.edges:
                adj[i].append((j, w))
                adj[j].append((i, w))
            object.__setattr__(self, "_adj", adj)
        dist = {x: 0.0}
        heap = [(0.0, x)]
        done = set()
        while heap:
            d, a = heapq.heappop(heap)
            if a == v:
                return d
            if a in done:
                continue
            done.add(a)
            for b, w in adj[a]:
                nd = d + w
                if nd < dist.get(b, math.inf):
                    dist[b] = nd
                    heapq.heappush(heap, (nd, b))
        return math.inf


def _enrich(inst: TerminalInstance):
    pp = build_partial_partitions(inst)
    es = mark_clusters(pp, inst)
    hm = hang_points(pp, es, inst)
    return pp, es, hm


def _single_terminal_hang(inst: TerminalInstance) -> HangMap:
    u = inst.terminals[0]
    rest = [x for x in range(inst.n) if x != u]
    d = inst.metric.block([u], rest)[0] if rest else []
    return HangMap({x: u for x in rest}, dict(zip(rest, map(float, d))),
                   {x: NEAREST_TERMINAL for x in rest})


def build_terminal_spanner(inst: TerminalInstance, base_eps: float | None = None,
                           base_method: str = "net-tree") -> TerminalSpanner:
    """Base spanner on the enriched set plus one hang edge per remaining point.

    With a single terminal every point simply hangs on it (a star).
    """
    base_eps = inst.eps if base_eps is None else base_eps
    if inst.k == 1:
        pp = es = None
        hm = _single_terminal_hang(inst)
        Y = inst.terminals
    else:
        pp, es, hm = _enrich(inst)
        Y = es.Y
    base = build_base_spanner(Y, inst.metric, base_eps, method=base_method)
    hang_edges = [(min(x, u), max(x, u), hm.distance[x]) for x, u in sorted(hm.target.items())]
    edges = tuple(sorted(base.edges + tuple(hang_edges)))
    return TerminalSpanner(inst.n, inst.terminals, inst.eps, "X-doubling", base, edges, Y,
                           hang=hm, partition=pp, enriched=es)


@dataclass(frozen=True)
class TerminalLabeling:
    """Labels for every point; queries are answered for terminal-side pairs.

    In hang mode a point outside Y stores its hang target's label and the hang
    distance.  In links mode (only K doubling) a point outside K stores the
    labels of its net neighbours N(x) with their distances.
    """

    n: int
    terminals: tuple[int, ...]
    eps: float
    mode: str
    base: BaseLabeling
    hang: HangMap | None = None
    links: dict[int, tuple[tuple[int, float], ...]] | None = None
    centralized: bool = False

    @property
    def certified(self) -> float:
        return certified_bound(self.eps, self.mode)

    @property
    def vertices(self) -> tuple[int, ...]:
        return self.base.vertices

    def query(self, x: int, v: int) -> float:
        return self.query_counted(x, v)[0]

    def query_counted(self, x: int, v: int) -> tuple[float, int]:
        """Distance estimate and number of label entries touched."""
        if v not in self.base.labels:
            if x not in self.base.labels:
                raise KeyError(f"{v} is not a base vertex")
            x, v = v, x
        lv = self.base.labels[v]
        if x in self.base.labels:
            lx = self.base.labels[x]
            return decode(lx, lv), len(lx) + len(lv)
        if self.hang is not None:
            if x not in self.hang:
                raise KeyError(f"unknown index {x}")
            lu = self.base.labels[self.hang.target[x]]
            return self.hang.distance[x] + decode(lu, lv), len(lu) + len(lv)
        best, touched = math.inf, 0
        for w, dw in self.links[x]:
            lw = self.base.labels[w]
            best = min(best, dw + decode(lw, lv))
            touched += len(lw) + len(lv)
        return best, touched

    def record(self, x: int) -> dict:
        """Self-contained per-point record, as stored at ``x``."""
        stride = self.base.stride
        if x in self.base.labels:
            return {"point": x, "label": self.base.labels[x].entries(stride)}
        if self.hang is not None:
            u = self.hang.target[x]
            return {"point": x, "hang": u, "hang_dist": self.hang.distance[x],
                    "label": self.base.labels[u].entries(stride)}
        return {"point": x, "links": [
            {"via": w, "dist": dw, "label": self.base.labels[w].entries(stride)}
            for w, dw in self.links[x]]}

    def storage(self) -> dict[int, int]:
        """Stored words per point (label entries plus link/hang records)."""
        out = {}
        for x in range(self.n):
            if x in self.base.labels:
                out[x] = len(self.base.labels[x])
            elif self.hang is not None:
                out[x] = 1 if self.centralized else 1 + len(self.base.labels[self.hang.target[x]])
            else:
                ws = self.links[x]
                out[x] = len(ws) + (0 if self.centralized else sum(len(self.base.labels[w]) for w, _ in ws))
        return out


def extend_labeling(base: BaseLabeling, hm: HangMap, inst: TerminalInstance,
                    centralized: bool = False) -> TerminalLabeling:
    missing = [x for x in hm.target.values() if x not in base.labels]
    if missing:
        raise ValueError(f"hang target {missing[0]} has no base label")
    return TerminalLabeling(inst.n, inst.terminals, inst.eps, "X-doubling", base, hang=hm,
                            centralized=centralized)


def build_terminal_labeling(inst: TerminalInstance, base_eps: float | None = None,
                            centralized: bool = False) -> TerminalLabeling:
    base_eps = inst.eps if base_eps is None else base_eps
    if inst.k == 1:
        hm = _single_terminal_hang(inst)
        Y = inst.terminals
    else:
        _, es, hm = _enrich(inst)
        Y = es.Y
    base = build_base_labeling(Y, inst.metric, base_eps)
    return extend_labeling(base, hm, inst, centralized=centralized)


def build_terminal_oracle(inst: TerminalInstance, base_eps: float | None = None) -> TerminalLabeling:
    """Same scheme as the labeling with the labels kept in one table."""
    return build_terminal_labeling(inst, base_eps, centralized=True)


def extend_embedding(base: dict[int, np.ndarray], hm: HangMap, n: int) -> np.ndarray:
    """Append one coordinate: Y points get 0, a hanged point copies its target's
    image and stores the hang distance."""
    dim = len(next(iter(base.values())))
    out = np.zeros((n, dim + 1))
    for y, f in base.items():
        out[y, :dim] = f
    for x, u in hm.target.items():
        out[x, :dim] = base[u]
        out[x, dim] = hm.distance[x]
    return out


def lp_distance(a: np.ndarray, b: np.ndarray, p: float) -> float:
    diff = np.abs(np.asarray(a) - np.asarray(b))
    if math.isinf(p):
        return float(diff.max(initial=0.0))
    return float(np.sum(diff ** p) ** (1 / p))


def neighbour_nets(inst: TerminalInstance) -> dict[int, tuple[int, ...]]:
    """N(x) for every non-terminal: a greedy (eps R)-net of B(x, 2R/eps) ∩ K,
    seeded with the nearest terminal u, where R = d(x, u)."""
    metric, K, eps = inst.metric, np.asarray(inst.terminals), inst.eps
    Kset = set(inst.terminals)
    rest = [x for x in range(inst.n) if x not in Kset]
    if not rest:
        return {}
    near, R = metric.nearest(rest, K)
    dxK = metric.block(rest, K)
    out = {}
    for a, x in enumerate(rest):
        u, r = int(near[a]), float(R[a])
        ball = K[dxK[a] <= 2 * r / eps * (1 + 1e-9)]
        net = greedy_net(ball, metric, eps * r, priority=[u])
        out[x] = net.members
    return out


def build_k_doubling_spanner(inst: TerminalInstance, base_eps: float | None = None,
                             base_method: str = "net-tree") -> TerminalSpanner:
    """Base spanner on K plus edges from each non-terminal to its net neighbours."""
    base_eps = inst.eps if base_eps is None else base_eps
    base = build_base_spanner(inst.terminals, inst.metric, base_eps, method=base_method)
    links = neighbour_nets(inst)
    extra = []
    for x, ws in sorted(links.items()):
        d = inst.metric.block([x], ws)[0]
        extra.extend((min(x, w), max(x, w), float(dw)) for w, dw in zip(ws, d))
    edges = tuple(sorted(base.edges + tuple(extra)))
    return TerminalSpanner(inst.n, inst.terminals, inst.eps, "K-doubling", base, edges,
                           inst.terminals, links=links)


def build_k_doubling_labeling(inst: TerminalInstance, base_eps: float | None = None,
                              centralized: bool = False) -> TerminalLabeling:
    base_eps = inst.eps if base_eps is None else base_eps
    base = build_base_labeling(inst.terminals, inst.metric, base_eps)
    links = {}
    for x, ws in neighbour_nets(inst).items():
        d = inst.metric.block([x], ws)[0]
        links[x] = tuple((int(w), float(dw)) for w, dw in zip(ws, d))
    return TerminalLabeling(inst.n, inst.terminals, inst.eps, "K-doubling", base,
                            links=links, centralized=centralized)


def build_k_doubling_oracle(inst: TerminalInstance, base_eps: float | None = None) -> TerminalLabeling:
    return build_k_doubling_labeling(inst, base_eps, centralized=True)


def k_doubling_query(struct: TerminalLabeling, x: int, v: int) -> float:
    """min over w in N(x) of d(x, w) + estimate(w, v); terminals query the base directly."""
    if struct.mode != "K-doubling":
        raise ValueError("not a K-doubling structure")
    if v not in struct.base.labels:
        raise KeyError(f"{v} is not a terminal")
    return struct.query(x, v)
