"""Terminal embeddings: the direct l-infinity embedding for doubling terminal sets,
and the random-projection Euclidean embedding extended by hanging."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.sparse import coo_matrix

from .metric import FiniteMetric, TerminalInstance, greedy_net
from .partition import build_partial_partitions, mark_clusters
from .terminal import HangMap, extend_embedding, hang_points


def effective_k(k: int) -> int:
    return max(k, 4)


@dataclass
class ContractedMetricFamily:
    """Shortest-path metrics ``d_i`` after zeroing short terminal edges.

    Distances are in rescaled units (minimum pairwise distance 1); ``scale``
    multiplies original distances into those units.  Levels are computed on
    demand and cached.
    """

    D: np.ndarray
    terminals: tuple[int, ...]
    eps: float
    k_eff: int
    scale: float
    top: int
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def levels(self) -> range:
        return range(self.top + 1)

    def threshold(self, i: int) -> float:
        return math.ldexp(self.eps / self.k_eff, i - 1)

    def level(self, i: int) -> np.ndarray:
        if i not in self._cache:
            self._cache[i] = contracted_metric(self.D, self.terminals, self.threshold(i))
        return self._cache[i]

    def drop(self, i: int) -> None:
        self._cache.pop(i, None)


def contracted_metric(D: np.ndarray, terminals, threshold: float) -> np.ndarray:
    """Shortest paths in the complete graph on ``D`` with every terminal edge
    shorter than ``threshold`` set to zero.

    Zero edges are contracted first (union of their components), the
    contracted graph keeps the lightest edge between components, and
    shortest paths are taken there.
    """
    n = D.shape[0]
    K = np.asarray(terminals, dtype=np.intp)
    zx, zk = np.nonzero(D[:, K] < threshold)
    zk = K[zk]
    keep = zx != zk
    zx, zk = zx[keep], zk[keep]
    if len(zx) == 0:
        return D.copy()
    g = coo_matrix((np.ones(len(zx)), (zx, zk)), shape=(n, n))
    m, comp = connected_components(g, directed=False)
    order = np.argsort(comp, kind="stable")
    starts = np.flatnonzero(np.r_[True, np.diff(comp[order]) != 0])
    W = np.minimum.reduceat(D[order], starts, axis=0)
    W = np.minimum.reduceat(W[:, order], starts, axis=1)
    np.fill_diagonal(W, 0.0)
    # off-diagonal entries are >= 1, so no legitimate edge reads as "missing"
    S = shortest_path(W, method="D", directed=False)
    return S[np.ix_(comp, comp)]


def build_contracted_metrics(inst: TerminalInstance) -> ContractedMetricFamily:
    D = np.array(inst.metric.matrix(), dtype=float)
    if inst.n < 2:
        return ContractedMetricFamily(D, inst.terminals, inst.eps, effective_k(inst.k), 1.0, 0)
    dmin = inst.metric.min_distance()
    if dmin <= 0:
        raise ValueError("coincident points")
    scale = 1.0 / dmin
    D *= scale
    top = max(0, math.ceil(math.log2(D.max())))
    return ContractedMetricFamily(D, inst.terminals, inst.eps, effective_k(inst.k), scale, top)


def build_separated_families(net: tuple[int, ...] | list[int], di: np.ndarray, i: int) -> list[list[int]]:
    """Split net points into families whose members are pairwise ``>= 5 * 2**i`` apart.

    Families are filled one after another, each greedily from the points not
    yet assigned, in net order.
    """
    sep = 5.0 * 2.0 ** i
    left = list(net)
    families = []
    while left:
        fam, rest = [], []
        for p in left:
            if all(di[p, q] >= sep * (1 - 1e-12) for q in fam):
                fam.append(p)
            else:
                rest.append(p)
        families.append(fam)
        left = rest
    return families


@dataclass(frozen=True)
class LinfEmbedding:
    coords: np.ndarray
    scale: float
    eps: float
    k: int
    k_eff: int
    t: int
    D: int
    nets: tuple[tuple[int, ...], ...]
    families: tuple[tuple[tuple[int, ...], ...], ...]
    g: tuple[np.ndarray, ...] = field(repr=False)
    p: float = math.inf

    @property
    def bounds(self) -> tuple[float, float]:
        return 1 - 3 * self.eps, 1 + self.eps

    def distance(self, x: int, y: int) -> float:
        """l-infinity distance in original units."""
        return float(np.abs(self.coords[x] - self.coords[y]).max(initial=0.0)) / self.scale

    def coordinate(self, i: int, j: int) -> int:
        return (i * self.t + j) % self.D


def embedding_dimension(t: int, k: int, eps: float) -> int:
    return math.ceil(2 * t * math.log2(2 * effective_k(k) / eps))


def embed_linf(inst: TerminalInstance, family: ContractedMetricFamily | None = None) -> LinfEmbedding:
    """Embed X into l-infinity so that pairs with a terminal keep their distance
    within ``[1 - 3 eps, 1 + eps]``.

    Coordinate ``(i t + j) mod D`` accumulates ``min(2**(i+1), d_i(x, N_ij))``
    where ``N_ij`` is the j-th separated family of the level-i terminal net.
    """
    if inst.k == 0:
        raise ValueError("need at least one terminal")
    if inst.k < 4:
        warnings.warn("fewer than 4 terminals; using k=4 in the dimension bound", stacklevel=2)
    fam = build_contracted_metrics(inst) if family is None else family
    eps = inst.eps
    nets, families, gs = [], [], []
    for i in fam.levels:
        di = fam.level(i)
        r = eps * 2.0 ** (i - 2)
        net = greedy_net(inst.terminals, _MatrixView(di), r).members
        parts = build_separated_families(net, di, i)
        g = np.empty((inst.n, len(parts)))
        cap = 2.0 ** (i + 1)
        for j, part in enumerate(parts):
            g[:, j] = np.minimum(cap, di[:, part].min(axis=1))
        nets.append(tuple(net))
        families.append(tuple(tuple(p) for p in parts))
        gs.append(g)
        if family is None:
            fam.drop(i)
    t = max(len(f) for f in families)
    dim = embedding_dimension(t, inst.k, eps)
    coords = np.zeros((inst.n, dim))
    for i, g in enumerate(gs):
        for j in range(g.shape[1]):
            coords[:, (i * t + j) % dim] += g[:, j]
    return LinfEmbedding(coords, fam.scale, eps, inst.k, fam.k_eff, t, dim, tuple(nets),
                         tuple(families), tuple(gs))


class _MatrixView:
    """Minimal metric interface over a (pseudo-)distance matrix for net building."""

    def __init__(self, m: np.ndarray):
        self.m = m
        self.n = m.shape[0]

    def block(self, rows, cols):
        return self.m[np.ix_(np.asarray(rows, dtype=np.intp), np.asarray(cols, dtype=np.intp))]


@dataclass(frozen=True)
class L2TerminalEmbedding:
    coords: np.ndarray
    projection: np.ndarray
    Y: tuple[int, ...]
    hang: HangMap
    target_dim: int
    seed: int
    method: str
    p: float = 2.0

    def distance(self, x: int, y: int) -> float:
        return float(np.linalg.norm(self.coords[x] - self.coords[y]))


def jl_dimension(k: int, eps: float, c: float = 8.0) -> int:
    return math.ceil(c * math.log(k) / eps ** 2)


def random_projection(ambient: int, target_dim: int, rng: np.random.Generator,
                      method: str = "gaussian") -> np.ndarray:
    """``target_dim x ambient`` projection.

    ``"gaussian"``: i.i.d. N(0, 1/target) entries (the classic JL map).
    ``"orthogonal"``: a uniformly random subspace, scaled by sqrt(ambient/target)
    when it is lower-dimensional and an exact isometry otherwise.
    """
    G = rng.standard_normal((target_dim, ambient))
    if method == "gaussian":
        return G / math.sqrt(target_dim)
    if method != "orthogonal":
        raise ValueError(f"unknown projection {method!r}")
    if target_dim >= ambient:
        Q, R = np.linalg.qr(G)
        return Q * np.sign(np.diag(R))
    Q, R = np.linalg.qr(G.T)
    Q = Q * np.sign(np.diag(R))
    return Q.T * math.sqrt(ambient / target_dim)


def embed_l2_terminal(inst: TerminalInstance, target_dim: int | None = None, seed: int = 0,
                      method: str = "gaussian") -> L2TerminalEmbedding:
    """Project the enriched set, then hang every other point on one extra coordinate."""
    if inst.metric.kind != "euclidean":
        raise ValueError("Euclidean input required")
    target_dim = jl_dimension(inst.k, inst.eps) if target_dim is None else target_dim
    pp = build_partial_partitions(inst)
    es = mark_clusters(pp, inst)
    hm = hang_points(pp, es, inst)
    rng = np.random.default_rng(seed)
    P = random_projection(inst.metric.dim, target_dim, rng, method)
    X = inst.metric.coords
    base = {y: P @ X[y] for y in es.Y}
    coords = extend_embedding(base, hm, inst.n)
    return L2TerminalEmbedding(coords, P, es.Y, hm, target_dim, seed, method)
