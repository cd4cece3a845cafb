"""Command line front end.

Exit codes: 0 when the requested run passes, 2 when a measured property
is violated, 3 on input errors (bad arguments, unreadable files,
malformed CSV or JSON).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .complexes import load_complex, save_complex, validate_complex, \
    whitney_decompose
from .driver import config_from_json, minimize
from .dyadic import open_box
from .ffproj import CenterExhausted, ff_project
from .grassmann import (
    apply_isomorphism,
    graph_norm_distance,
    haar_sample,
    isomorphism_condition,
    orthocomplement,
    plane_distance,
    plane_to_graph,
)
from .measure import (
    Integrand,
    QuasiminParams,
    hausdorff_estimate,
    load_csv,
    quasimin_audit,
    save_csv,
    zeta_gauge,
)
from .rng import stream


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; route it to the input path
    def error(self, message):
        raise ValueError(message)


def _emit(args, payload: dict, final=None, graph=None) -> None:
    if args.format == "json" or final is None:
        print(json.dumps(payload, indent=2, default=_plain))
    elif args.format == "csv":
        sys.stdout.write(_csv_text(final))
    else:
        sys.stdout.write(_off_text(graph))
    if args.out_dir is None:
        return
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2, default=_plain)
    if final is not None:
        save_csv(final, out / "final.csv")
    if graph is not None:
        with open(out / "skeleton.off", "w") as fh:
            fh.write(_off_text(graph))


def _plain(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)  # cells and violation tuples are diagnostics


def _csv_text(S) -> str:
    lines = [",".join([f"x{i+1}" for i in range(S.n)] + ["weight"])]
    for p, w in zip(S.points, S.weights):
        lines.append(",".join([repr(float(c)) for c in p]
                              + [repr(float(w))]))
    return "\n".join(lines) + "\n"


def _off_text(graph) -> str:
    """Vertices plus edges written as degenerate two-vertex faces."""
    if graph is None:
        return "OFF\n0 0 0\n"
    lines = ["OFF", f"{len(graph.nodes)} {len(graph.edges)} 0"]
    for p in graph.nodes:
        coords = list(p[:3]) + [0.0] * max(0, 3 - len(p))
        lines.append(" ".join(repr(float(c)) for c in coords))
    for i, j in graph.edges:
        lines.append(f"2 {i} {j}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------- subcommands

def _cmd_validate(args) -> int:
    K = load_complex(args.file)
    rep = validate_complex(K)
    _emit(args, {"n_cells": rep.n_cells, "ok": rep.ok,
                 "max_containment": rep.max_containment,
                 "violations": rep.violations[:20]})
    return 0 if rep.ok else 2


def _cmd_whitney(args) -> int:
    vals = [float(v) for v in args.box]
    if len(vals) % 2:
        raise ValueError("--box needs an even number of coordinates")
    n = len(vals) // 2
    W = whitney_decompose(open_box(vals[:n], vals[n:]), args.depth)
    rep = validate_complex(W)
    if args.out_dir is not None:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_complex(W, out / "whitney.json")
    _emit(args, {"n_cells": len(W), "ok": rep.ok,
                 "dims": W.dims(), "violations": rep.violations[:20]})
    return 0 if rep.ok else 2


def _cmd_grass_selftest(args) -> int:
    rng = stream(args.seed, "cli-grass-selftest")
    failures = []
    for d, n in ((1, 2), (1, 3), (2, 3), (2, 4)):
        for i in range(args.samples):
            V = haar_sample(d, n, rng)
            W = haar_sample(d, n, rng)
            dist = plane_distance(V, W)
            if not 0.0 <= dist <= 1.0 + 1e-12:
                failures.append(f"distance out of range at (d={d}, n={n})")
                break
            ortho = plane_distance(orthocomplement(V), orthocomplement(W))
            if abs(ortho - dist) > 1e-9:
                failures.append(f"orthocomplement breaks isometry at "
                                f"(d={d}, n={n})")
                break
            if dist < 1.0 - 1e-9:
                g = plane_to_graph(V, W)
                if abs(graph_norm_distance(g) - dist) > 1e-9:
                    failures.append(f"graph norm mismatch at (d={d}, n={n})")
                    break
            u = np.eye(n) + 0.1 * rng.standard_normal((n, n))
            cond = isomorphism_condition(u)
            if cond["condition"] < 1e6:
                lhs = plane_distance(apply_isomorphism(u, V),
                                     apply_isomorphism(u, W))
                rhs = cond["norm"] * cond["inverse_norm"] * dist
                if lhs > rhs * (1.0 + 1e-9):
                    failures.append(f"isomorphism bound violated at "
                                    f"(d={d}, n={n})")
                    break
    _emit(args, {"samples": args.samples, "failures": failures,
                 "ok": not failures})
    return 0 if not failures else 2


def _cmd_gauge(args) -> int:
    S = load_csv(args.input, args.d, args.delta)
    est = zeta_gauge(S, args.planes, args.delta,
                     stream(args.seed, "cli-gauge"))
    _emit(args, {"zeta": est.value, "std_error": est.std_error,
                 "planes": est.count,
                 "hausdorff": hausdorff_estimate(S)})
    return 0


def _cmd_ffproject(args) -> int:
    K = load_complex(args.complex)
    E = load_csv(args.input, args.d, args.delta)
    res = ff_project(K, args.d, E, lam=getattr(args, "lambda"),
                     rng=stream(args.seed, "cli-ffproject"))
    checks = res.diagnostics["checks"]
    payload = {"checks": checks,
               "stages": [{"m": s["m"], "cells": len(s["cells"])}
                          for s in res.diagnostics["stages"]]}
    _emit(args, payload, final=res.mapped)
    return 0 if all(c["ok"] for c in checks.values()) else 2


def _cmd_minimize(args) -> int:
    with open(args.config) as fh:
        cfg = config_from_json(json.load(fh))
    res = minimize(cfg)
    accepted = [r.energy_after for r in res.reports if r.accepted]
    payload = res.to_json()
    payload["final_energy"] = min(accepted) if accepted \
        else res.reports[0].energy_before if res.reports else None
    _emit(args, payload, final=res.final, graph=res.graph)
    ok = res.audits["ok"] and all(
        r.energy_after <= r.energy_before for r in res.reports if r.accepted)
    return 0 if ok else 2


def _cmd_audit(args) -> int:
    S = load_csv(args.input, args.d, args.delta)
    images = load_csv(args.deform, args.d, args.delta).points
    if images.shape != S.points.shape:
        raise ValueError("deformation must list one image per sample")
    parts = [float(v) for v in args.ball.split(",")]
    if len(parts) != S.n + 1:
        raise ValueError("--ball needs n center coordinates and a radius")
    rep = quasimin_audit(S, images, (np.array(parts[:-1]), parts[-1]),
                         QuasiminParams(kappa=args.kappa, h=getattr(args, "h")),
                         Integrand.hausdorff())
    _emit(args, rep)
    return 0 if rep["satisfied"] else 2


# ----------------------------------------------------------------- main

def _build_parser() -> _Parser:
    p = _Parser(prog="plateau",
                description="dyadic grids, projections and the "
                            "grid minimization driver")
    p.add_argument("--out-dir", default=None,
                   help="write report.json/final.csv/skeleton.off here")
    p.add_argument("--format", choices=("json", "csv", "off"),
                   default="json", help="stdout payload format")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("validate-complex")
    q.add_argument("file")
    q.set_defaults(func=_cmd_validate)

    q = sub.add_parser("whitney")
    q.add_argument("--box", nargs="+", required=True,
                   help="lo coordinates then hi coordinates")
    q.add_argument("--depth", type=int, required=True)
    q.set_defaults(func=_cmd_whitney)

    q = sub.add_parser("grass-selftest")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--samples", type=int, default=500)
    q.set_defaults(func=_cmd_grass_selftest)

    q = sub.add_parser("gauge")
    q.add_argument("--input", required=True)
    q.add_argument("--d", type=int, required=True)
    q.add_argument("--planes", type=int, default=200)
    q.add_argument("--delta", type=float, default=0.02)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=_cmd_gauge)

    q = sub.add_parser("ffproject")
    q.add_argument("--complex", required=True)
    q.add_argument("--input", required=True)
    q.add_argument("--d", type=int, required=True)
    q.add_argument("--lambda", type=float, default=20.0)
    q.add_argument("--delta", type=float, default=0.02)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=_cmd_ffproject)

    q = sub.add_parser("minimize")
    q.add_argument("--config", required=True)
    q.set_defaults(func=_cmd_minimize)

    q = sub.add_parser("audit")
    q.add_argument("--input", required=True)
    q.add_argument("--deform", required=True)
    q.add_argument("--ball", required=True, help="cx,...,cn,r")
    q.add_argument("--kappa", type=float, default=1.0)
    q.add_argument("--h", type=float, default=0.0)
    q.add_argument("--d", type=int, default=1)
    q.add_argument("--delta", type=float, default=0.02)
    q.set_defaults(func=_cmd_audit)

    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CenterExhausted as exc:
        print(f"violation: {exc} (try a finer sampling delta)",
              file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
