"""Command-line driver: ``cutiga <subcommand> [options]``.

Results go to ``--out`` (or stdout) as CSV; removal reports are JSON.  On
failure a single JSON line ``{"error": ..., "message": ...}`` is written to
stderr and the exit code is nonzero.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .exceptions import CutIGAError
from .studies import (
    DEFAULT_LADDER,
    StudyConfig,
    convergence_rate,
    criteria_map_csv,
    prepare_case,
    records_to_csv,
    run_case,
    run_condition_sweep,
    run_convergence,
    run_criteria_map,
    run_neumann_demo,
    run_tol_sweep,
)


def _angle(text: str) -> float:
    """Angle in radians; accepts plain numbers and ``pi`` fractions such as ``pi/7``."""
    t = text.strip().lower().replace(" ", "")
    if "pi" not in t:
        return float(t)
    num, _, den = t.partition("/")
    coef = num.replace("*", "").replace("pi", "")
    coef = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else float(coef)
    return coef * math.pi / (float(den) if den else 1.0)


def _common(p: argparse.ArgumentParser, h_many: bool = True, c_many: bool = False):
    p.add_argument("--problem", choices=("poisson", "elasticity"), default="poisson")
    p.add_argument("--p", type=int, default=2, help="spline order")
    if h_many:
        p.add_argument("--h", type=float, nargs="+", default=None, help="mesh sizes (decreasing)")
    else:
        p.add_argument("--h", type=float, default=0.1, help="mesh size")
    if c_many:
        p.add_argument("--c", type=float, nargs="+", default=[0.0, 1e-3, 1e-2, 1e-1, 1.0],
                       help="removal constants")
    else:
        p.add_argument("--c", type=float, default=0.0, help="removal constant, tol = c h^p scale")
    p.add_argument("--beta", type=float, default=None, help="Nitsche penalty (default 10 p^2)")
    p.add_argument("--tau", type=float, default=0.0, help="least-squares weight")
    p.add_argument("--gamma", type=float, default=0.1, help="ghost-penalty weight")
    p.add_argument("--ls-operator", choices=("strain", "stress"), default="strain")
    p.add_argument("--theta", type=_angle, default=math.pi / 7, help="grid rotation (e.g. pi/7)")
    p.add_argument("--method", choices=("nonsym", "sym"), default="nonsym")
    p.add_argument("--measure", choices=("diagonal", "star"), default="diagonal")
    p.add_argument("--geometry", default="rotated-unit-square")
    p.add_argument("--quad-order", type=int, default=None)
    p.add_argument("--subdiv-depth", type=int, default=4)
    p.add_argument("--offset", type=float, nargs=2, default=(0.0, 0.0), help="grid origin")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="output file (default stdout)")


def _config(args, ladder=None, c=None) -> StudyConfig:
    if ladder is None:
        if args.h is None:
            ladder = DEFAULT_LADDER
        else:
            ladder = args.h if isinstance(args.h, (list, tuple)) else (args.h,)
    return StudyConfig(
        problem=args.problem, geometry=args.geometry, theta=args.theta, p=args.p,
        h_ladder=tuple(ladder), c=args.c if c is None else c, beta=args.beta, tau=args.tau,
        gamma=args.gamma, ls_operator=args.ls_operator, method=args.method,
        measure_kind=args.measure, quad_order=args.quad_order, subdiv_depth=args.subdiv_depth,
        offset=tuple(args.offset), seed=args.seed, out=str(args.out) if args.out else None)


def _emit(text: str, out: Optional[Path]):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


def _rows_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def write_gnuplot(records, path: Path) -> None:
    """Whitespace-separated ``h energy_error l2_error`` table for gnuplot."""
    lines = ["# h energy_error l2_error"]
    lines += [f"{r.h!r} {r.energy_error!r} {r.l2_error!r}" for r in sorted(records, key=lambda r: r.h)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_convergence(args) -> int:
    cfg = _config(args)
    if args.condest:
        from dataclasses import replace
        cfg = replace(cfg, condest=True)
    recs = run_convergence(cfg)
    _emit(records_to_csv(recs, timing=args.timing), args.out)
    if args.gnuplot:
        write_gnuplot(recs, args.gnuplot)
    if len(recs) > 1:
        print(json.dumps({"rate_energy": convergence_rate(recs),
                          "rate_l2": convergence_rate(recs, "l2_error")}), file=sys.stderr)
    return 0


def cmd_sweep_tol(args) -> int:
    cfg = _config(args, ladder=(args.h,), c=0.0)
    rows = run_tol_sweep(cfg, args.c, h=args.h)
    _emit(_rows_csv(["c", "removed", "energy_error", "condest", "status"],
                    [(r.c, r.removed, r.energy_error, r.condest, r.status) for r in rows]), args.out)
    return 0


def cmd_criteria(args) -> int:
    maps = [run_criteria_map(p, h, args.resolution, args.C) for p in args.p for h in args.h]
    _emit(criteria_map_csv(maps), args.out)
    return 0


def cmd_condest(args) -> int:
    cfg = _config(args, ladder=(args.h,))
    rows = run_condition_sweep(cfg, args.h, args.c, args.offsets)
    _emit(_rows_csv(["offset_x", "offset_y", "kappa_full", "kappa_removed", "removed", "dofs"],
                    [(r.offset[0], r.offset[1], r.kappa_full, r.kappa_removed, r.removed, r.dofs)
                     for r in rows]), args.out)
    return 0


def cmd_neumann(args) -> int:
    cfg = _config(args, ladder=(args.h,), c=0.0)
    demo = run_neumann_demo(cfg, c_values=args.c, h=args.h, resolution=args.resolution)
    _emit(records_to_csv(demo.records, timing=args.timing), args.out)
    if args.samples:
        stem = args.samples
        for c, tab in demo.samples.items():
            path = stem.with_name(f"{stem.stem}_c{c:g}{stem.suffix or '.csv'}")
            path.write_text(_rows_csv(["x", "y", "ux", "uy", "vm"], tab.tolist()), encoding="utf-8")
    print(json.dumps({"net_force": demo.net_force.tolist(),
                      "rigid_residual": {f"{c:g}": v.tolist()
                                         for c, v in demo.constraint_residual.items()}}),
          file=sys.stderr)
    return 0


def cmd_solve(args) -> int:
    cfg = _config(args, ladder=(args.h,))
    case = prepare_case(cfg, args.h)
    res = run_case(case, args.c, condest=args.condest)
    if args.report:
        args.report.write_text(res.report.to_json(indent=1), encoding="utf-8")
    if args.matrix_market:
        res.system.to_matrix_market(args.matrix_market)
    _emit(records_to_csv([res.record], timing=args.timing), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cutiga", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convergence", help="energy/L2 errors over an h ladder")
    _common(p)
    p.add_argument("--condest", action="store_true", help="also estimate condition numbers")
    p.add_argument("--timing", action="store_true", help="write wall times")
    p.add_argument("--gnuplot", type=Path, default=None, help="also write a gnuplot table")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("sweep-tol", help="removed count / error / kappa over c at fixed h")
    _common(p, h_many=False, c_many=True)
    p.set_defaults(func=cmd_sweep_tol)

    p = sub.add_parser("criteria", help="admissible (d1/h, d2/h) tables")
    p.add_argument("--p", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--h", type=float, nargs="+", default=[0.1, 0.05])
    p.add_argument("--resolution", type=int, default=51)
    p.add_argument("--C", type=float, default=1.0, help="constant in the criteria")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_criteria)

    p = sub.add_parser("condest", help="condition numbers over grid translations")
    _common(p, h_many=False)
    p.add_argument("--offsets", type=int, default=20)
    p.set_defaults(func=cmd_condest, geometry="disk", theta=0.0, tau=0.1, c=0.01, h=0.05)

    p = sub.add_parser("neumann", help="pure-traction plate with holes")
    _common(p, h_many=False, c_many=True)
    p.add_argument("--resolution", type=int, default=81)
    p.add_argument("--samples", type=Path, default=None,
                   help="write x,y,ux,uy,vm samples (one file per c)")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_neumann, problem="elasticity", geometry="plate-with-holes",
                   c=[0.0, 0.01], h=0.1)

    p = sub.add_parser("solve", help="single discretisation")
    _common(p, h_many=False)
    p.add_argument("--condest", action="store_true")
    p.add_argument("--timing", action="store_true")
    p.add_argument("--report", type=Path, default=None, help="JSON removal report")
    p.add_argument("--matrix-market", type=Path, default=None, help="dump the stiffness matrix")
    p.set_defaults(func=cmd_solve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except CutIGAError as exc:
        rec = exc.to_record()
        print(json.dumps({"error": rec.pop("type"), **rec}), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
