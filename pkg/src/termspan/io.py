"""Text/JSON file formats for instances, structures and reports."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metric import FiniteMetric, TerminalInstance
from .terminal import TerminalLabeling, TerminalSpanner, certified_bound


def _fmt(x: float) -> str:
    return repr(float(x))


def write_points(path, coords) -> None:
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    with open(path, "w") as f:
        for row in coords:
            f.write(" ".join(_fmt(v) for v in row) + "\n")


def read_points(path) -> np.ndarray:
    rows = [list(map(float, line.split())) for line in Path(path).read_text().splitlines() if line.strip()]
    if not rows:
        raise ValueError(f"{path}: no points")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: ragged point rows")
    return np.array(rows)


def write_matrix(path, D) -> None:
    D = np.asarray(D, dtype=float)
    with open(path, "w") as f:
        f.write(f"{D.shape[0]}\n")
        for row in D:
            f.write(" ".join(_fmt(v) for v in row) + "\n")


def read_matrix(path) -> np.ndarray:
    lines = [l for l in Path(path).read_text().splitlines() if l.strip()]
    n = int(lines[0])
    D = np.array([list(map(float, l.split())) for l in lines[1:n + 1]])
    if D.shape != (n, n):
        raise ValueError(f"{path}: expected {n}x{n} matrix, got {D.shape}")
    return D


def write_terminals(path, K) -> None:
    Path(path).write_text(" ".join(str(int(k)) for k in K) + "\n")


def read_terminals(path) -> tuple[int, ...]:
    return tuple(int(t) for t in Path(path).read_text().split())


def write_metric(path, metric: FiniteMetric) -> None:
    if metric.kind == "euclidean":
        write_points(path, metric.coords)
    else:
        write_matrix(path, metric.matrix())


def read_metric(path, fmt: str | None = None) -> FiniteMetric:
    """``fmt`` is "points" or "matrix"; by default ``.dist`` files are matrices."""
    if fmt is None:
        fmt = "matrix" if str(path).endswith(".dist") else "points"
    if fmt == "matrix":
        return FiniteMetric(matrix=read_matrix(path))
    if fmt == "points":
        return FiniteMetric(coords=read_points(path))
    raise ValueError(f"unknown format {fmt!r}")


def load_instance(instance_path, terminals_path, eps: float, fmt: str | None = None) -> TerminalInstance:
    return TerminalInstance(read_metric(instance_path, fmt), read_terminals(terminals_path), eps)


# ---------------------------------------------------------------- structures

@dataclass(frozen=True)
class EdgeList:
    """A spanner read back from disk."""

    n: int
    edges: tuple[tuple[int, int, float], ...]
    meta: dict

    @property
    def certified(self) -> float:
        return certified_bound(self.meta["eps"], self.meta["mode"])


def write_spanner(path, sp: TerminalSpanner) -> None:
    meta = {"type": "spanner", "mode": sp.mode, "eps": sp.eps, "n": sp.n,
            "k": len(sp.terminals), "Y": len(sp.Y), "base_edges": sp.base.num_edges}
    with open(path, "w") as f:
        f.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        for i, j, w in sp.edges:
            f.write(f"{i} {j} {_fmt(w)}\n")


def read_spanner(path) -> EdgeList:
    meta, edges = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            meta = json.loads(line[1:])
        elif line.strip():
            i, j, w = line.split()
            edges.append((int(i), int(j), float(w)))
    return EdgeList(int(meta.get("n", 1 + max(max(i, j) for i, j, _ in edges))), tuple(edges), meta)


class RecordLabeling:
    """Answers queries from the stored per-point records alone."""

    def __init__(self, meta: dict, records: dict[int, dict]):
        self.meta = meta
        self.records = records
        self.n = meta["n"]
        self._labels = {p: {(int(l), int(q)): float(d) for l, q, d in r["label"]}
                        for p, r in records.items() if "label" in r and "hang" not in r}

    @property
    def certified(self) -> float:
        return certified_bound(self.meta["eps"], self.meta["mode"])

    @staticmethod
    def _decode(a: dict, b: dict) -> float:
        if len(a) > len(b):
            a, b = b, a
        return min((d + b[key] for key, d in a.items() if key in b), default=math.inf)

    def _as_dict(self, entries) -> dict:
        return {(int(l), int(q)): float(d) for l, q, d in entries}

    def query(self, x: int, v: int) -> float:
        if v not in self._labels:
            x, v = v, x
        lv = self._labels[v]
        r = self.records[x]
        if "hang" in r:
            return r["hang_dist"] + self._decode(self._as_dict(r["label"]), lv)
        if "links" in r:
            return min(l["dist"] + self._decode(self._as_dict(l["label"]), lv) for l in r["links"])
        return self._decode(self._labels[x], lv)


def write_labeling(path, lab: TerminalLabeling, kind: str = "labeling") -> None:
    meta = {"type": kind, "mode": lab.mode, "eps": lab.eps, "n": lab.n,
            "terminals": list(lab.terminals), "base_vertices": len(lab.base.vertices)}
    with open(path, "w") as f:
        f.write(json.dumps(meta, sort_keys=True) + "\n")
        for x in range(lab.n):
            f.write(json.dumps(lab.record(x), sort_keys=True) + "\n")


def read_labeling(path) -> RecordLabeling:
    lines = Path(path).read_text().splitlines()
    meta = json.loads(lines[0])
    records = {}
    for line in lines[1:]:
        if line.strip():
            r = json.loads(line)
            records[r["point"]] = r
    return RecordLabeling(meta, records)


@dataclass(frozen=True)
class EmbeddingFile:
    coords: np.ndarray
    meta: dict

    @property
    def p(self) -> float:
        return math.inf if self.meta["p"] == "inf" else float(self.meta["p"])

    @property
    def scale(self) -> float:
        return float(self.meta.get("scale", 1.0))

    @property
    def bounds(self) -> tuple[float, float]:
        return tuple(self.meta["bounds"])


def write_embedding(path, coords, meta: dict) -> None:
    with open(path, "w") as f:
        f.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        for row in np.asarray(coords):
            f.write(" ".join(_fmt(v) for v in row) + "\n")


def read_embedding(path) -> EmbeddingFile:
    lines = Path(path).read_text().splitlines()
    meta = json.loads(lines[0][1:])
    coords = np.array([list(map(float, l.split())) for l in lines[1:] if l.strip()])
    return EmbeddingFile(coords, meta)


def read_structure(path):
    """Sniff a structure file: JSON-lines labeling, embedding or edge list."""
    first = Path(path).read_text().split("\n", 1)[0]
    if first.startswith("{"):
        return read_labeling(path)
    if first.startswith("#"):
        meta = json.loads(first[1:])
        if meta.get("type", "").startswith("embed"):
            return read_embedding(path)
    return read_spanner(path)


def report_digest(report: dict) -> str:
    """SHA-256 of the report without its timestamp."""
    body = {k: v for k, v in report.items() if k != "timestamp"}
    return hashlib.sha256(json.dumps(body, sort_keys=True, default=float).encode()).hexdigest()
