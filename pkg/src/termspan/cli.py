"""Command-line entry point: ``termspan {gen,build,audit,lower-bound}``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import io
from .harness import (KINDS, audit_stretch, describe, gen_instance, lower_bound_audit,
                      lower_bound_instance)
from .linf import embed_l2_terminal, embed_linf
from .metric import estimate_doubling_constant
from .terminal import (build_k_doubling_labeling, build_k_doubling_spanner,
                       build_terminal_labeling, build_terminal_spanner)

STRUCTURES = ("spanner", "spanner-k", "oracle", "labeling", "embed-linf", "embed-l2")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_report(path, report: dict) -> str:
    report = _jsonable(report)
    digest = io.report_digest(report)
    report["digest"] = digest
    report["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return digest


def _table(rows: list[tuple[str, object]]) -> str:
    w = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{w}}  {v}" for k, v in rows)


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    params = dict(kv.split("=", 1) for kv in args.param)
    inst = gen_instance(args.kind, args.n, args.k, args.eps, args.seed, **params)
    out = Path(args.out)
    ext = ".pts" if inst.metric.kind == "euclidean" else ".dist"
    io.write_metric(out.with_suffix(ext), inst.metric)
    io.write_terminals(out.with_suffix(".term"), inst.terminals)
    print(out.with_suffix(ext))
    print(out.with_suffix(".term"))
    return 0


def cmd_build(args) -> int:
    inst = io.load_instance(args.instance, args.terminals, args.eps, args.format)
    s = args.structure
    if s == "spanner":
        st = build_terminal_spanner(inst, args.base_eps, base_method=args.base_method)
        io.write_spanner(args.out, st)
    elif s == "spanner-k":
        st = build_k_doubling_spanner(inst, args.base_eps, base_method=args.base_method)
        io.write_spanner(args.out, st)
    elif s in ("oracle", "labeling"):
        build = build_k_doubling_labeling if args.mode == "K-doubling" else build_terminal_labeling
        st = build(inst, args.base_eps, centralized=(s == "oracle"))
        io.write_labeling(args.out, st, kind=s)
    elif s == "embed-linf":
        st = embed_linf(inst)
        meta = {"type": s, "n": inst.n, "eps": inst.eps, "k": inst.k, "t": st.t, "D": st.D,
                "scale": st.scale, "p": "inf", "bounds": list(st.bounds)}
        io.write_embedding(args.out, st.coords, meta)
    else:
        st = embed_l2_terminal(inst, args.target_dim, seed=args.seed, method=args.projection)
        meta = {"type": s, "n": inst.n, "eps": inst.eps, "k": inst.k, "target_dim": st.target_dim,
                "Y": len(st.Y), "seed": st.seed, "method": st.method, "scale": 1.0, "p": 2,
                "max_distortion": args.max_distortion}
        io.write_embedding(args.out, st.coords, meta)
    print(_table(sorted(describe(st).items())))
    return 0


def cmd_audit(args) -> int:
    st = io.read_structure(args.structure)
    inst = io.load_instance(args.instance, args.terminals, st.meta["eps"], args.format)
    summary = dict(st.meta)
    if isinstance(st, io.EdgeList):
        summary["edges"] = len(st.edges)
    elif isinstance(st, io.RecordLabeling):
        sizes = [len(r.get("label", ())) + sum(len(l["label"]) for l in r.get("links", ()))
                 for r in st.records.values()]
        summary["max_record_entries"] = max(sizes)
        summary["total_record_entries"] = sum(sizes)
    else:
        summary["coordinates"] = int(st.coords.shape[1])
    jl = st.meta.get("type") == "embed-l2"
    rep = audit_stretch(st, inst, certified=math.inf if jl else None,
                        lower=0.0 if jl else None, with_lambda=not args.no_lambda,
                        summary=summary)
    out = rep.to_dict()
    checks = {"stretch": rep.passed}
    if jl:
        distortion = rep.max_stretch / rep.min_stretch
        out["distortion"] = distortion
        checks["stretch"] = distortion <= st.meta["max_distortion"] * (1 + 1e-9)
    if isinstance(st, io.EdgeList) and st.meta.get("mode") == "X-doubling":
        expected = st.meta["base_edges"] + inst.n - st.meta["Y"]
        checks["edge_count"] = len(st.edges) == expected
        out["expected_edges"] = expected
    if isinstance(st, io.EmbeddingFile) and "D" in st.meta:
        checks["dimension"] = st.coords.shape[1] == st.meta["D"]
    out["checks"] = checks
    out["passed"] = all(checks.values())
    _write_report(args.out, out)
    rows = [("structure", st.meta.get("type")), ("n", inst.n), ("k", inst.k), ("eps", inst.eps),
            ("max stretch", f"{rep.max_stretch:.6f}"), ("min stretch", f"{rep.min_stretch:.6f}"),
            ("mean stretch", f"{rep.mean_stretch:.6f}"), ("certified", rep.certified)]
    rows += [(f"check {k}", "pass" if v else "FAIL") for k, v in sorted(checks.items())]
    print(_table(rows), file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return 0 if out["passed"] else 1


def cmd_lower_bound(args) -> int:
    lb = lower_bound_instance(args.lam, args.eps, args.n, args.seed)
    rep = lower_bound_audit(lb)
    inst = lb.instance
    sp = build_k_doubling_spanner(inst)
    K = set(inst.terminals)
    cross = {(min(i, j), max(i, j)) for i, j, _ in sp.edges if (i in K) != (j in K)}
    required = {(v, x) for v in K for x in range(inst.n) if x not in K}
    st = audit_stretch(sp, inst)
    rep["lambda_K"] = estimate_doubling_constant(inst.metric.submetric(inst.terminals))
    rep["spanner"] = {"edges": sp.num_edges, "base_edges": sp.base.num_edges,
                      "cross_edges": len(cross), "has_all_cross_edges": cross == required,
                      "edges_match": sp.num_edges == sp.base.num_edges + len(required) and cross == required,
                      "max_stretch": st.max_stretch, "certified": st.certified, "passed": st.passed}
    ok = rep["passed"] and rep["spanner"]["edges_match"] and st.passed
    rep["passed"] = ok
    _write_report(args.out, rep)
    rows = [("k", rep["k"]), ("n", rep["n"]), ("min detour ratio", f"{rep['min_detour_ratio']:.6f}"),
            ("required cross edges", rep["required_cross_edges"]),
            ("spanner cross edges", len(cross)), ("spanner stretch", f"{st.max_stretch:.6f}"),
            ("result", "pass" if ok else "FAIL")]
    print(_table(rows), file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="termspan", description="Terminal spanners, labelings and embeddings with audits.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance")
    g.add_argument("--kind", choices=KINDS, required=True)
    g.add_argument("-n", type=int, required=True)
    g.add_argument("-k", type=int, required=True)
    g.add_argument("--eps", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="kind-specific parameter (dim, clusters, spread, spacing, lam)")
    g.add_argument("--out", required=True, help="output prefix; writes .pts or .dist plus .term")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("build", help="build a structure")
    b.add_argument("structure", choices=STRUCTURES)
    b.add_argument("--instance", required=True)
    b.add_argument("--terminals", required=True)
    b.add_argument("--format", choices=("points", "matrix"))
    b.add_argument("--eps", type=float, required=True)
    b.add_argument("--base-eps", type=float)
    b.add_argument("--base-method", choices=("net-tree", "greedy"), default="net-tree")
    b.add_argument("--mode", choices=("X-doubling", "K-doubling"), default="X-doubling",
                   help="scheme for oracle/labeling")
    b.add_argument("--target-dim", type=int, help="embed-l2 projection dimension")
    b.add_argument("--projection", choices=("gaussian", "orthogonal"), default="gaussian")
    b.add_argument("--max-distortion", type=float, default=1.25,
                   help="embed-l2 audit threshold on max/min ratio")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build)

    a = sub.add_parser("audit", help="audit a structure file against exact distances")
    a.add_argument("structure")
    a.add_argument("--instance", required=True)
    a.add_argument("--terminals", required=True)
    a.add_argument("--format", choices=("points", "matrix"))
    a.add_argument("--no-lambda", action="store_true", help="skip doubling-constant estimation")
    a.add_argument("--out", default="-")
    a.set_defaults(func=cmd_audit)

    lbp = sub.add_parser("lower-bound", help="generate and audit a lower-bound instance")
    lbp.add_argument("--lam", type=int, required=True)
    lbp.add_argument("--eps", type=float, required=True)
    lbp.add_argument("-n", type=int, required=True)
    lbp.add_argument("--seed", type=int, default=0)
    lbp.add_argument("--out", default="-")
    lbp.set_defaults(func=cmd_lower_bound)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as e:
        print(f"termspan: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
