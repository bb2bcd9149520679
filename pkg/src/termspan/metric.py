"""Finite metric spaces, terminal nets and doubling-constant estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba
import numpy as np
from scipy.spatial.distance import cdist

# Distances within this relative slack are treated as equal.
REL_TOL = 1e-9
# Euclidean metrics above this size never materialise the full n x n matrix.
MATRIX_CACHE_LIMIT = 5000
EXHAUSTIVE_LIMIT = 500


def within(d, r):
    """``d <= r`` up to the relative tolerance (works on arrays)."""
    return d <= r * (1.0 + REL_TOL)


class FiniteMetric:
    """A finite metric on points ``0..n-1``.

    Either an explicit distance matrix or a Euclidean point list.  Euclidean
    distances are materialised as a matrix on first use when
    ``n <= MATRIX_CACHE_LIMIT`` and computed blockwise otherwise.
    """

    def __init__(self, matrix: np.ndarray | None = None, coords: np.ndarray | None = None):
        if (matrix is None) == (coords is None):
            raise ValueError("give exactly one of matrix or coords")
        if matrix is not None:
            matrix = np.array(matrix, dtype=float)
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise ValueError("distance matrix must be square")
            if np.any(matrix < 0):
                raise ValueError("distances must be nonnegative")
            matrix.setflags(write=False)
            self.kind = "explicit-matrix"
            self.coords = None
            self._matrix = matrix
            self.n = matrix.shape[0]
        else:
            coords = np.array(coords, dtype=float)
            if coords.ndim == 1:
                coords = coords[:, None]
            coords.setflags(write=False)
            self.kind = "euclidean"
            self.coords = coords
            self._matrix = None
            self.n = coords.shape[0]
        if self.n == 0:
            raise ValueError("empty metric")

    @classmethod
    def from_points(cls, coords) -> FiniteMetric:
        return cls(coords=coords)

    @classmethod
    def from_matrix(cls, matrix) -> FiniteMetric:
        return cls(matrix=matrix)

    @property
    def dim(self) -> int | None:
        return None if self.coords is None else self.coords.shape[1]

    def has_matrix(self) -> bool:
        return self._matrix is not None or self.n <= MATRIX_CACHE_LIMIT

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            if self.n > MATRIX_CACHE_LIMIT:
                raise MemoryError(f"refusing to build a {self.n}x{self.n} matrix")
            m = cdist(self.coords, self.coords)
            m.setflags(write=False)
            self._matrix = m
        return self._matrix

    def dist(self, i: int, j: int) -> float:
        if self.has_matrix():
            return float(self.matrix()[i, j])
        return float(cdist(self.coords[[i]], self.coords[[j]])[0, 0])

    def row(self, i: int) -> np.ndarray:
        if self.has_matrix():
            return self.matrix()[i]
        return cdist(self.coords[[i]], self.coords)[0]

    def block(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        if self.has_matrix():
            return self.matrix()[np.ix_(rows, cols)]
        return cdist(self.coords[rows], self.coords[cols])

    def submetric(self, idx) -> FiniteMetric:
        idx = np.asarray(idx, dtype=np.intp)
        if self.kind == "euclidean":
            return FiniteMetric(coords=self.coords[idx])
        return FiniteMetric(matrix=self.block(idx, idx))

    def nearest(self, sources, targets) -> tuple[np.ndarray, np.ndarray]:
        """For each source, the nearest target (smallest index on ties) and its distance."""
        targets = np.asarray(sorted(targets), dtype=np.intp)
        sub = self.block(sources, targets)
        pos = np.argmin(sub, axis=1)
        return targets[pos], sub[np.arange(len(pos)), pos]

    def diameter(self) -> float:
        if self.has_matrix():
            return float(self.matrix().max())
        return max(float(self.row(i).max()) for i in range(self.n))

    def min_distance(self) -> float:
        """Smallest distance between distinct points."""
        if self.n < 2:
            return math.inf
        m = self.matrix()
        return float(m[~np.eye(self.n, dtype=bool)].min())

    def triangle_violations(self, exhaustive_limit: int = 200, samples: int = 100_000,
                            seed: int = 0, limit: int = 10) -> list[tuple[int, int, int]]:
        """Triples (i, l, j) with d(i,j) > d(i,l) + d(l,j) beyond tolerance."""
        m = self.matrix()
        bad = []
        if self.n <= exhaustive_limit:
            for l in range(self.n):
                via = m[:, [l]] + m[[l], :]
                hit = np.argwhere(m > via * (1 + REL_TOL) + 1e-12)
                for i, j in hit[:limit - len(bad)]:
                    bad.append((int(i), l, int(j)))
                if len(bad) >= limit:
                    break
            return bad
        rng = np.random.default_rng(seed)
        t = rng.integers(0, self.n, size=(samples, 3))
        i, l, j = t.T
        viol = m[i, j] > (m[i, l] + m[l, j]) * (1 + REL_TOL) + 1e-12
        return [tuple(map(int, r)) for r in t[viol][:limit]]

    def check(self) -> None:
        """Raise ValueError if the metric axioms fail (symmetry, zero diagonal, triangle)."""
        m = self.matrix()
        if np.any(np.diag(m) != 0):
            raise ValueError("nonzero diagonal")
        if not np.allclose(m, m.T, rtol=REL_TOL, atol=0):
            raise ValueError("asymmetric distances")
        bad = self.triangle_violations()
        if bad:
            raise ValueError(f"triangle inequality fails on {bad[0]}")


@dataclass(frozen=True)
class TerminalInstance:
    """A metric together with its terminal set and accuracy parameter."""

    metric: FiniteMetric
    terminals: tuple[int, ...]
    eps: float
    delta: float = field(init=False)
    Delta: float = field(init=False)

    def __post_init__(self):
        K = tuple(int(t) for t in self.terminals)
        if len(set(K)) != len(K):
            raise ValueError("duplicate terminals")
        K = tuple(sorted(K))
        if not K:
            raise ValueError("need at least one terminal")
        if K[0] < 0 or K[-1] >= self.metric.n:
            raise ValueError("terminal index out of range")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        object.__setattr__(self, "terminals", K)
        if len(K) >= 2:
            sub = self.metric.block(K, K)
            off = sub[~np.eye(len(K), dtype=bool)]
            delta, Delta = float(off.min()), float(off.max())
            if delta <= 0:
                raise ValueError("terminals must be at positive distance")
        else:
            delta = Delta = 0.0
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "Delta", Delta)

    @property
    def n(self) -> int:
        return self.metric.n

    @property
    def k(self) -> int:
        return len(self.terminals)

    @property
    def aspect_ratio(self) -> float:
        return self.Delta / self.delta if self.k >= 2 else 1.0

    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[list(self.terminals)] = True
        return mask

    def distance_to_terminals(self) -> np.ndarray:
        return self.metric.block(np.arange(self.n), self.terminals).min(axis=1)


@dataclass(frozen=True)
class Net:
    r: float
    members: tuple[int, ...]
    terminal_prefix_len: int = 0

    def __len__(self):
        return len(self.members)

    def __contains__(self, x):
        return x in self._set

    @property
    def _set(self) -> frozenset:
        s = self.__dict__.get("_members_set")
        if s is None:
            s = frozenset(self.members)
            object.__setattr__(self, "_members_set", s)
        return s

    @property
    def terminal_members(self) -> tuple[int, ...]:
        return self.members[: self.terminal_prefix_len]

    def check_separation(self, metric: FiniteMetric) -> None:
        if len(set(self.members)) != len(self.members):
            raise ValueError("net separation violated: duplicate member")
        if len(self.members) < 2:
            return
        sub = metric.block(self.members, self.members)
        np.fill_diagonal(sub, np.inf)
        if np.any(within(sub, self.r)):
            i, j = np.argwhere(within(sub, self.r))[0]
            raise ValueError(
                f"net separation violated: d({self.members[i]},{self.members[j]}) <= {self.r}")

    def check(self, metric: FiniteMetric, ground_set: Iterable[int],
              terminals: Iterable[int] = ()) -> None:
        """Raise ValueError unless separation, covering and terminal-first hold."""
        self.check_separation(metric)
        ground = np.asarray(sorted(ground_set), dtype=np.intp)
        if len(ground):
            cover = metric.block(ground, self.members).min(axis=1)
            if np.any(~within(cover, self.r)):
                x = ground[np.argmax(cover)]
                raise ValueError(f"net covering violated at point {x}")
        tset = set(terminals)
        flags = [m in tset for m in self.members]
        if any(flags[i] and not flags[i - 1] for i in range(1, len(flags))):
            raise ValueError("terminal-first order violated")
        if sum(flags) != self.terminal_prefix_len:
            raise ValueError("terminal prefix length mismatch")


def _greedy(order: Sequence[int], ground: np.ndarray, metric: FiniteMetric, r: float) -> list[int]:
    pos = {int(p): i for i, p in enumerate(ground)}
    covered = np.zeros(len(ground), dtype=bool)
    members = []
    for p in order:
        if covered[pos[p]]:
            continue
        members.append(int(p))
        covered |= within(metric.block([p], ground)[0], r)
    return members


def greedy_net(ground_set: Iterable[int], metric: FiniteMetric, r: float,
               priority: Iterable[int] = ()) -> Net:
    """Greedy terminal ``r``-net of ``ground_set``.

    Points of ``priority`` are scanned first, then the rest; ascending index
    within each class.
    """
    if r <= 0:
        raise ValueError("net radius must be positive")
    ground = np.asarray(sorted(set(int(g) for g in ground_set)), dtype=np.intp)
    if len(ground) == 0:
        raise ValueError("empty ground set")
    gset = set(ground.tolist())
    prio = sorted(set(int(p) for p in priority) & gset)
    pset = set(prio)
    order = prio + [int(g) for g in ground if int(g) not in pset]
    members = _greedy(order, ground, metric, r)
    return Net(r, tuple(members), sum(m in pset for m in members))


def refine_net(coarse: Net, ground_set: Iterable[int], metric: FiniteMetric, r: float,
               priority: Iterable[int] = ()) -> Net:
    """Terminal ``r``-net of ``ground_set`` that keeps every terminal member of ``coarse``.

    The terminal members of ``coarse`` are scanned first (in their net order),
    then the remaining ``priority`` points, then everything else.
    """
    if r <= 0:
        raise ValueError("net radius must be positive")
    if r >= coarse.r:
        raise ValueError("refinement radius must be below the coarse radius")
    ground = np.asarray(sorted(set(int(g) for g in ground_set)), dtype=np.intp)
    if len(ground) == 0:
        raise ValueError("empty ground set")
    gset = set(ground.tolist())
    seeds = [m for m in coarse.terminal_members if m in gset]
    pset = set(int(p) for p in priority) & gset
    pset.update(seeds)
    seen = set(seeds)
    order = seeds + sorted(pset - seen)
    order += [int(g) for g in ground if int(g) not in pset]
    members = _greedy(order, ground, metric, r)
    return Net(r, tuple(members), sum(m in pset for m in members))


@numba.njit(cache=True)
def _max_ball_net(D, x, radii, tol):
    # Largest greedy (R/2)-net of B(x, R) over the given R values.
    n = D.shape[0]
    best = 1
    ball = np.empty(n, dtype=np.int64)
    covered = np.empty(n, dtype=np.bool_)
    for R in radii:
        r = 0.5 * R
        m = 0
        for q in range(n):
            if D[x, q] <= R * (1.0 + tol):
                ball[m] = q
                m += 1
        for a in range(m):
            covered[a] = False
        count = 0
        for a in range(m):
            if covered[a]:
                continue
            count += 1
            c = ball[a]
            for b in range(a, m):
                if not covered[b] and D[c, ball[b]] <= r * (1.0 + tol):
                    covered[b] = True
        if count > best:
            best = count
    return best


def estimate_doubling_constant(metric: FiniteMetric, mode: str = "auto", centers: int = 200,
                               radii: int = 24, seed: int = 0) -> int:
    """Empirical doubling constant: the largest greedy r-net found inside some B(x, 2r).

    A greedy r-net of a ball covers it with r-balls, so the exhaustive value
    never undercounts the covering number of any ball; a packing can exceed it
    (the unit line gives 4, its covering constant is 3).  ``mode="exhaustive"`` tries every
    point x and every radius at which B(x, 2r) changes; ``"sampled"`` uses a
    seeded subset of centers and quantile radii.  ``"auto"`` is exhaustive
    for n <= 500.
    """
    n = metric.n
    if n == 1:
        return 1
    if mode == "auto":
        mode = "exhaustive" if n <= EXHAUSTIVE_LIMIT else "sampled"
    if mode not in ("exhaustive", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    D = np.ascontiguousarray(metric.matrix(), dtype=np.float64)
    if mode == "exhaustive":
        xs = range(n)
    else:
        rng = np.random.default_rng(seed)
        xs = np.sort(rng.choice(n, size=min(centers, n), replace=False))
    best = 1
    for x in xs:
        rs = np.unique(D[x])
        rs = rs[rs > 0]
        if mode == "sampled" and len(rs) > radii:
            rs = rs[np.unique(np.linspace(0, len(rs) - 1, radii).round().astype(int))]
        best = max(best, int(_max_ball_net(D, int(x), rs, REL_TOL)))
    return best


def packing_bound(lam: int, q: float, r: float) -> int:
    """lam ** ceil(log2 ceil(2q/r))."""
    ratio = math.ceil(2 * q / r * (1 - REL_TOL))
    return lam ** math.ceil(math.log2(max(ratio, 1)))


def packing_audit(net: Net, metric: FiniteMetric, q: float, lam: int) -> bool:
    """Check |B(x, q) ∩ net| against the packing bound for every point x."""
    if q <= 0:
        raise ValueError("q must be positive")
    net.check_separation(metric)
    counts = within(metric.block(np.arange(metric.n), net.members), q).sum(axis=1)
    return bool(counts.max() <= packing_bound(lam, q, net.r))
