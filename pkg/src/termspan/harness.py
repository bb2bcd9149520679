"""Instance generators, brute-force ground truth and stretch/size audits."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra, shortest_path

from .metric import FiniteMetric, TerminalInstance, estimate_doubling_constant, greedy_net

WORKERS_ENV = "TERMSPAN_AUDIT_WORKERS"
KINDS = ("uniform-square", "uniform", "gaussian-clusters", "grid", "line", "completion", "lower-bound")


def audit_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------- generators

@dataclass(frozen=True)
class LowerBoundInstance:
    instance: TerminalInstance
    lam: int
    t: int
    sphere: np.ndarray
    net_size: int
    truncated: bool


def _pick_terminals(rng, n, k):
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    return tuple(sorted(rng.choice(n, size=k, replace=False).tolist()))


def sphere_net(t: int, eps: float, seed: int = 0, samples_per_dim: int = 10_000) -> tuple[np.ndarray, np.ndarray]:
    """Greedy eps-net of a dense uniform sample of the unit sphere in R^t.

    Returns the net points (in greedy order) and the sample.
    """
    rng = np.random.default_rng(seed)
    m = samples_per_dim * t
    if t == 1:
        sample = np.array([[-1.0], [1.0]])
    elif t == 2:
        theta = np.sort(rng.uniform(0, 2 * np.pi, m))
        sample = np.c_[np.cos(theta), np.sin(theta)]
    else:
        g = rng.standard_normal((m, t))
        sample = g / np.linalg.norm(g, axis=1, keepdims=True)
    net = greedy_net(range(len(sample)), FiniteMetric(coords=sample), eps)
    return sample[list(net.members)], sample


def lower_bound_instance(lam: int, eps: float, n: int, seed: int = 0) -> LowerBoundInstance:
    """Terminals form an eps-separated set on the unit sphere of R^t, t = ceil(log2 lam).

    Terminal pairs are at Euclidean distance, terminal/non-terminal pairs at 1
    and non-terminal pairs at 2.  When the sphere net has more than n/2 points
    only its first n/2 points (still eps-separated) are kept.
    """
    if lam < 2:
        raise ValueError("lam must be at least 2")
    t = max(1, math.ceil(math.log2(lam)))
    net, _ = sphere_net(t, eps, seed)
    size = len(net)
    cap = n // 2
    truncated = size > cap
    K = net[:cap] if truncated else net
    k = len(K)
    if k < 1 or n <= k:
        raise ValueError("n too small for the sphere net")
    D = np.full((n, n), 2.0)
    D[:k, :] = 1.0
    D[:, :k] = 1.0
    D[:k, :k] = np.linalg.norm(K[:, None, :] - K[None, :, :], axis=2)
    np.fill_diagonal(D, 0.0)
    inst = TerminalInstance(FiniteMetric(matrix=D), tuple(range(k)), eps)
    return LowerBoundInstance(inst, lam, t, K, size, truncated)


def _grid_coords(count, spacing=1.0):
    rows = max(1, int(math.floor(math.sqrt(count))))
    cols = math.ceil(count / rows)
    pts = [(c * spacing, r * spacing) for r in range(rows) for c in range(cols)]
    return np.array(pts[:count], dtype=float)


def completion_metric(K_coords: np.ndarray, m: int, rng: np.random.Generator,
                      term_links: int = 3, links: int = 3) -> np.ndarray:
    """Shortest-path closure of a random graph that keeps the terminal distances.

    Each non-terminal gets a hidden planar position; all its edge weights are at
    least the planar distance (inflated by random factors), so no path can
    shortcut two terminals.
    """
    k = len(K_coords)
    lo, hi = K_coords.min(axis=0) - 0.5, K_coords.max(axis=0) + 0.5
    P = rng.uniform(lo, hi, size=(m, 2))
    allp = np.vstack([K_coords, P])
    n = k + m
    base = np.linalg.norm(allp[:, None, :] - allp[None, :, :], axis=2)
    rows, cols, w = [], [], []
    iu = np.triu_indices(k, 1)
    rows += list(iu[0]); cols += list(iu[1]); w += list(base[iu])
    for a in range(m):
        x = k + a
        near = np.argsort(base[x, :k], kind="stable")[: 2 * term_links]
        for v in rng.choice(near, size=min(term_links, len(near)), replace=False):
            rows.append(x); cols.append(int(v))
            w.append(base[x, v] * rng.uniform(1.0, 1.5) + rng.uniform(0.0, 0.3))
        for b in rng.choice(m, size=min(links, m), replace=False):
            if b == a:
                continue
            rows.append(x); cols.append(k + int(b))
            w.append(base[x, k + b] * rng.uniform(1.0, 2.0) + rng.uniform(0.2, 1.0))
    # keep the lightest copy of every edge
    key = {}
    for i, j, ww in zip(rows, cols, w):
        e = (min(i, j), max(i, j))
        if ww < key.get(e, math.inf):
            key[e] = ww
    ij = np.array(list(key.keys()))
    g = csr_matrix((list(key.values()), (ij[:, 0], ij[:, 1])), shape=(n, n))
    D = shortest_path(g, method="D", directed=False)
    return np.minimum(D, D.T)


def gen_instance(kind: str, n: int, k: int, eps: float, seed: int = 0, **params) -> TerminalInstance:
    """Reproducible instance of the given kind; all randomness comes from ``seed``."""
    rng = np.random.default_rng(seed)
    if n < 1:
        raise ValueError("n must be positive")
    if kind in ("uniform-square", "uniform"):
        dim = int(params.get("dim", 2))
        metric = FiniteMetric(coords=rng.uniform(0, 1, size=(n, dim)))
        K = _pick_terminals(rng, n, k)
    elif kind == "gaussian-clusters":
        c = int(params.get("clusters", 5))
        spread = float(params.get("spread", 0.05))
        dim = int(params.get("dim", 2))
        centers = rng.uniform(0, 1, size=(c, dim))
        lab = rng.integers(0, c, size=n)
        metric = FiniteMetric(coords=centers[lab] + spread * rng.standard_normal((n, dim)))
        K = _pick_terminals(rng, n, k)
    elif kind == "grid":
        metric = FiniteMetric(coords=_grid_coords(n, float(params.get("spacing", 1.0))))
        K = _pick_terminals(rng, n, k)
    elif kind == "line":
        spacing = float(params.get("spacing", 1.0))
        metric = FiniteMetric(coords=np.arange(n, dtype=float)[:, None] * spacing)
        K = _pick_terminals(rng, n, k)
    elif kind == "completion":
        if k > n:
            raise ValueError("k > n")
        D = completion_metric(_grid_coords(k, float(params.get("spacing", 1.0))), n - k, rng)
        metric = FiniteMetric(matrix=D)
        K = tuple(range(k))
    elif kind == "lower-bound":
        return lower_bound_instance(int(params.get("lam", 4)), eps, n, seed).instance
    else:
        raise ValueError(f"unknown instance kind {kind!r}")
    return TerminalInstance(metric, K, eps)


# ---------------------------------------------------------------- ground truth

def exact_graph_distances(edges, n: int, sources) -> np.ndarray:
    """Exact shortest-path distances from each source (rows) to every vertex.

    Unreachable vertices get +inf.  Parallel edges keep their lightest weight.
    """
    sources = np.asarray(list(sources), dtype=np.intp)
    if len(edges) == 0:
        out = np.full((len(sources), n), np.inf)
        out[np.arange(len(sources)), sources] = 0.0
        return out
    e = np.asarray([(i, j, w) for i, j, w in edges], dtype=float)
    i, j, w = e[:, 0].astype(np.intp), e[:, 1].astype(np.intp), e[:, 2]
    a, b = np.minimum(i, j), np.maximum(i, j)
    order = np.lexsort((w, b, a))
    a, b, w = a[order], b[order], w[order]
    first = np.r_[True, (np.diff(a) != 0) | (np.diff(b) != 0)]
    g = csr_matrix((w[first], (a[first], b[first])), shape=(n, n))
    workers = audit_workers()
    if workers == 1 or len(sources) < 2 * workers:
        return dijkstra(g, directed=False, indices=sources)
    chunks = np.array_split(sources, workers)
    with ThreadPoolExecutor(workers) as ex:
        parts = list(ex.map(lambda s: dijkstra(g, directed=False, indices=s), chunks))
    return np.vstack(parts)


def floyd_warshall(W: np.ndarray) -> np.ndarray:
    """Plain O(n^3) all-pairs shortest paths on a dense weight matrix (inf = no edge)."""
    D = np.array(W, dtype=float)
    for m in range(D.shape[0]):
        D = np.minimum(D, D[:, [m]] + D[[m], :])
    return D


# ---------------------------------------------------------------- audits

@dataclass
class StretchReport:
    instance: dict
    structure: dict
    max_stretch: float
    min_stretch: float
    mean_stretch: float
    percentiles: dict
    worst: list
    certified: float
    lower_bound: float
    passed: bool
    pairs: int
    violation: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def instance_summary(inst: TerminalInstance, with_lambda: bool = True, Y=None) -> dict:
    out = {"n": inst.n, "k": inst.k, "eps": inst.eps, "delta": inst.delta,
           "Delta": inst.Delta, "Delta_K": inst.aspect_ratio}
    if with_lambda:
        out["lambda_X"] = estimate_doubling_constant(inst.metric)
        out["lambda_K"] = estimate_doubling_constant(inst.metric.submetric(inst.terminals))
    if Y is not None and len(Y) >= 2:
        sub = inst.metric.block(Y, Y)
        off = sub[~np.eye(len(Y), dtype=bool)]
        out["Delta_Y"] = float(off.max() / off.min())
    return out


def structure_distances(structure, inst: TerminalInstance) -> np.ndarray:
    """Structure-reported distances, rows = terminals, columns = all points."""
    K = list(inst.terminals)
    if hasattr(structure, "edges") and hasattr(structure, "n"):
        return exact_graph_distances(structure.edges, inst.n, K)
    if hasattr(structure, "coords"):
        F = structure.coords
        p = getattr(structure, "p", 2.0)
        scale = getattr(structure, "scale", 1.0)
        diff = np.abs(F[K][:, None, :] - F[None, :, :])
        if math.isinf(p):
            return diff.max(axis=2) / scale
        return (diff ** p).sum(axis=2) ** (1 / p) / scale
    if hasattr(structure, "query"):
        def row(v):
            return [structure.query(x, v) for x in range(inst.n)]
        workers = audit_workers()
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                rows = list(ex.map(row, K))
        else:
            rows = [row(v) for v in K]
        return np.asarray(rows, dtype=float)
    raise TypeError(f"cannot audit {type(structure).__name__}")


def audit_stretch(structure, inst: TerminalInstance, certified: float | None = None,
                  lower: float | None = None, with_lambda: bool = False, top: int = 10,
                  summary: dict | None = None) -> StretchReport:
    """Compare structure distances against the metric on all terminal pairs K x X.

    Pairs with d = 0 (x = v) count as stretch 1.  ``certified`` defaults to the
    structure's own guarantee; ``lower`` to 1 (no contraction) or to the
    embedding's contraction bound.
    """
    K = np.asarray(inst.terminals, dtype=np.intp)
    true = inst.metric.block(K, np.arange(inst.n))
    got = structure_distances(structure, inst)
    zero = true == 0
    ratio = np.where(zero, 1.0, got / np.where(zero, 1.0, true))
    zero_bad = zero & (got > 1e-12)
    if np.any(zero_bad):
        ratio[zero_bad] = np.inf
    if certified is None:
        certified = getattr(structure, "certified", None)
        if certified is None and hasattr(structure, "bounds"):
            certified = structure.bounds[1]
        if certified is None:
            certified = math.inf
    if lower is None:
        lower = structure.bounds[0] if hasattr(structure, "bounds") else 1.0
    tol = 1e-9
    flat = ratio.ravel()
    order = np.argsort(-flat, kind="stable")[:top]
    worst = []
    for f in order:
        a, x = divmod(int(f), inst.n)
        worst.append({"x": x, "v": int(K[a]), "d": float(true[a, x]),
                      "estimate": float(got[a, x]), "stretch": float(flat[f])})
    mx, mn = float(flat.max()), float(flat.min())
    passed = mx <= certified * (1 + tol) and mn >= lower * (1 - tol)
    violation = None
    if not passed:
        f = int(np.argmax(flat)) if mx > certified * (1 + tol) else int(np.argmin(flat))
        a, x = divmod(f, inst.n)
        violation = {"x": x, "v": int(K[a]), "d": float(true[a, x]),
                     "estimate": float(got[a, x]), "stretch": float(flat[f])}
    finite = flat[np.isfinite(flat)]
    pct = {str(q): float(np.percentile(finite, q)) for q in (50, 90, 99)} if len(finite) else {}
    inst_info = instance_summary(inst, with_lambda, getattr(structure, "Y", None))
    return StretchReport(
        instance=inst_info, structure=summary if summary is not None else describe(structure),
        max_stretch=mx, min_stretch=mn, mean_stretch=float(finite.mean()) if len(finite) else math.inf,
        percentiles=pct, worst=worst, certified=float(certified), lower_bound=float(lower),
        passed=bool(passed), pairs=int(flat.size), violation=violation)


def describe(structure) -> dict:
    """Size counters of a built structure."""
    out = {"type": type(structure).__name__}
    for name in ("mode", "eps", "t", "D", "target_dim", "method"):
        if hasattr(structure, name):
            out[name] = getattr(structure, name)
    if hasattr(structure, "edges"):
        out["edges"] = len(structure.edges)
    base = getattr(structure, "base", None)
    if base is not None:
        out["base_vertices"] = len(base.vertices)
        if hasattr(base, "edges"):
            out["base_edges"] = len(base.edges)
        if hasattr(base, "labels"):
            sizes = [len(l) for l in base.labels.values()]
            out["max_base_label"] = max(sizes)
    if getattr(structure, "Y", None) is not None:
        out["Y"] = len(structure.Y)
    enr = getattr(structure, "enriched", None)
    if enr is not None:
        out["b"] = enr.b
    pp = getattr(structure, "partition", None)
    if pp is not None:
        out["s"] = pp.s
    links = getattr(structure, "links", None)
    if links:
        sizes = [len(v) for v in links.values()]
        out["max_links"] = max(sizes)
        out["total_links"] = sum(sizes)
    if hasattr(structure, "storage"):
        st = structure.storage()
        out["storage_total"] = sum(st.values())
        out["storage_max"] = max(st.values())
    return out


def extension_violations(structure, inst: TerminalInstance, tol: float = 1e-9) -> list[tuple]:
    """Check the hanging contract for every hanged x and every v in Y.

    d^(x, u) = d(x, u) and max(d(x,u), d^(u,v)) <= d^(x,v) <= d(x,u) + d^(u,v).
    ``structure`` needs ``hang``, ``Y`` (or ``vertices``) and per-pair
    estimates (graph distances, queries or embedded distances).
    """
    hm = structure.hang
    Y = list(getattr(structure, "Y", None) or structure.vertices)
    n = inst.n
    if hasattr(structure, "edges"):
        G = exact_graph_distances(structure.edges, n, Y)
        est = lambda a, yi: G[yi, a]
    elif hasattr(structure, "coords"):
        F = structure.coords
        p = getattr(structure, "p", 2.0)
        norm = (lambda z: np.abs(z).max()) if math.isinf(p) else (lambda z: float(np.sum(np.abs(z) ** p) ** (1 / p)))
        est = lambda a, yi: norm(F[a] - F[Y[yi]])
    else:
        est = lambda a, yi: structure.query(a, Y[yi])
    pos = {y: i for i, y in enumerate(Y)}
    bad = []
    for x in hm.points():
        u, dxu = hm.target[x], hm.distance[x]
        if abs(est(x, pos[u]) - dxu) > tol * max(1.0, dxu):
            bad.append((x, u, "hang distance"))
            continue
        for v in Y:
            duv = est(u, pos[v])
            dxv = est(x, pos[v])
            lo = max(dxu, duv)
            if dxv < lo * (1 - tol) - 1e-12 or dxv > (dxu + duv) * (1 + tol) + 1e-12:
                bad.append((x, v, "sandwich"))
    return bad


def lower_bound_audit(lb: LowerBoundInstance) -> dict:
    """Every detour avoiding a cross edge (x, v) must be longer than (1+eps) d(x,v)."""
    if not isinstance(lb, LowerBoundInstance):
        raise TypeError("lower-bound instance required")
    inst = lb.instance
    D = inst.metric.matrix()
    K = np.asarray(inst.terminals)
    k, n, eps = inst.k, inst.n, inst.eps
    X = np.setdiff1d(np.arange(n), K)
    worst = math.inf
    failing = 0
    DK = D[:, K]
    for x in X:
        # paths avoiding the edge (x, v) take a first hop to some w other than v
        cand = D[x][:, None] + DK
        cand[x, :] = np.inf
        cand[K, np.arange(k)] = np.inf
        detour = cand.min(axis=0)
        ratio = detour / D[x, K]
        worst = min(worst, float(ratio.min()))
        failing += int(np.sum(ratio <= 1 + eps))
    sep = D[np.ix_(K, K)][~np.eye(k, dtype=bool)].min() if k > 1 else math.inf
    implied_c = eps * 2 ** (math.log2(k) / math.log2(lb.lam)) if k > 1 else None
    return {
        "n": n, "k": k, "eps": eps, "lam": lb.lam, "t": lb.t,
        "sphere_net_size": lb.net_size, "truncated": lb.truncated,
        "min_terminal_separation": float(sep),
        "min_detour_ratio": worst,
        "cross_pairs": int(len(X) * k),
        "required_cross_edges": int(k * (n - k)),
        "pairs_without_detour": failing,
        "implied_c": implied_c,
        "passed": failing == 0 and sep > eps,
    }
