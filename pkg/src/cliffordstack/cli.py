"""Command-line front end.

Subcommands map one-to-one onto the library layers: ``balance`` solves the
neck-radius system, ``mesh`` triangulates and exports a surface, ``analyze``
reports curvature summaries, ``forces`` the Killing fluxes and response
matrices, ``solve`` runs the linearized inversion on a named source,
``relax`` the outer parameter loop, and ``validate-square`` checks the
square-lattice parameter constraints.  Exit codes: 0 on success, 1 on a
reported numerical failure, 2 on usage errors.
"""

import argparse
import json
import sys
import numpy as np

from . import __version__
from .balancing import StackConfig, stack_layout, NonConvergenceError
from .surface import SurfaceAtlas
from .meshing import build_mesh, export_mesh
from .extrinsic import jet_eval, extrinsic
from .forces import (region_fluxes, dislocations, build_matrices, fd_residuals)
from .linearized import (build_grids, global_solve, mc_source, weighted_sup,
                         SolverDivergence)
from .relax import (relax_loop, RelaxOptions, measure_weighted_H,
                    square_constraint_violations)


def _common(parser):
    parser.add_argument("--N", type=int, required=True)
    parser.add_argument("--k", type=int, default=1)
    parser.add_argument("--l", type=int, default=1)
    parser.add_argument("--m", type=int, required=True)
    parser.add_argument("--zeta", type=float, nargs="*", default=None)
    parser.add_argument("--xi", type=float, nargs="*", default=None)
    parser.add_argument("--c-bound", type=float, default=1.0)
    parser.add_argument("--b-underline", type=float, default=5.0)
    parser.add_argument("--config", type=str, default=None,
                        help="JSON file with the same keys; flags win")
    parser.add_argument("--out", type=str, default=None)
    parser.add_argument("--format", choices=["json", "csv", "obj", "ply"],
                        default=None)
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker threads (results are identical "
                        "for any value)")
    parser.add_argument("--seed", type=int, default=0)


def _config_from(args):
    base = {}
    if args.config:
        with open(args.config) as f:
            base = json.load(f)
    merged = dict(base)
    for key in ("N", "k", "l", "m", "zeta", "xi"):
        val = getattr(args, key)
        if val is not None:
            merged[key] = val
    merged.setdefault("c_bound", args.c_bound)
    zeta = merged.get("zeta")
    xi = merged.get("xi")
    return StackConfig(N=merged["N"], k=merged["k"], l=merged["l"],
                       m=merged["m"],
                       zeta=np.array(zeta, float) if zeta else None,
                       xi=np.array(xi, float) if xi else None,
                       c_bound=merged.get("c_bound", 1.0))


def _emit(payload, args, default_name):
    text = json.dumps(payload, sort_keys=True, indent=1) \
        if (args.format or "json") == "json" else _to_csv(payload)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def _to_csv(payload, prefix=""):
    rows = []

    def walk(obj, key):
        if isinstance(obj, dict):
            for k, v in sorted(obj.items()):
                walk(v, f"{key}.{k}" if key else k)
        elif isinstance(obj, (list, tuple)):
            if all(not isinstance(v, (dict, list, tuple)) for v in obj):
                rows.append((key, ";".join(repr(v) for v in obj)))
            else:
                for idx, v in enumerate(obj):
                    walk(v, f"{key}[{idx}]")
        else:
            rows.append((key, repr(obj)))

    walk(payload, prefix)
    return "\n".join(f"{k},{v}" for k, v in rows)


def cmd_balance(args):
    cfg = _config_from(args)
    layout = stack_layout(cfg, b_underline=args.b_underline)
    _emit(layout.to_dict(), args, "balance")
    return 0


def cmd_mesh(args):
    cfg = _config_from(args)
    atlas = SurfaceAtlas(cfg, b_underline=args.b_underline)
    mesh = build_mesh(atlas, resolution=args.resolution)
    fmt = args.format if args.format in ("obj", "ply") else "obj"
    out = args.out or f"stack_N{cfg.N}k{cfg.k}l{cfg.l}m{cfg.m}.{fmt}"
    sidecar = export_mesh(mesh, out, fmt=fmt)
    print(json.dumps({"out": out, "sidecar": sidecar,
                      "vertices": mesh.n_vertices, "faces": mesh.n_faces,
                      "euler_characteristic": mesh.euler_characteristic(),
                      "genus": mesh.genus()}, sort_keys=True))
    return 0


def cmd_analyze(args):
    cfg = _config_from(args)
    atlas = SurfaceAtlas(cfg, b_underline=args.b_underline)
    cats, tors = build_grids(atlas)
    report = {"schema": "clifford-stack/1", "version": __version__,
              "config": {"N": cfg.N, "k": cfg.k, "l": cfg.l, "m": cfg.m},
              "regions": {}}
    from .forces import dislocations as disl
    D = disl(cfg, atlas.layout)
    f_cat, f_tor = mc_source(atlas, cats, tors)
    report["mc_deficit_gamma_half"] = weighted_sup(atlas, cats, tors, f_cat,
                                                   f_tor, 0.5)
    report["mc_deficit_over_tau1"] = report["mc_deficit_gamma_half"] \
        / atlas.layout.tau[0]
    for j, g in cats.items():
        T, TH = np.meshgrid(g.t[::4], g.th[::4], indexing="ij")
        data = extrinsic(jet_eval(atlas, ("K", j), T, TH),
                         atlas.orientation_ref(("K", j), T, TH))
        rho = 1.0 / (atlas.layout.tau[j - 1] * np.cosh(T))
        report["regions"][f"K{j}"] = {
            "sup_H": float(np.max(np.abs(data.H))),
            "sup_H_rescaled": float(np.max(np.abs(data.H) / rho**2)),
            "sup_A": float(np.max(np.sqrt(data.normA2))),
        }
    for i, g in tors.items():
        sel = g.zone[::2, ::2]
        xs, ys = g.XX[::2, ::2][sel], g.YY[::2, ::2][sel]
        data = extrinsic(jet_eval(atlas, ("T", i), xs, ys),
                         atlas.orientation_ref(("T", i), xs, ys))
        pts = atlas.coord_point(("T", i), xs, ys)
        rho = atlas.rho_hat(pts)
        report["regions"][f"T{i}"] = {
            "sup_H": float(np.max(np.abs(data.H))),
            "sup_H_rescaled": float(np.max(np.abs(data.H) / rho**2)),
            "sup_A": float(np.max(np.sqrt(data.normA2))),
        }
    _emit(report, args, "analyze")
    return 0


def cmd_forces(args):
    cfg = _config_from(args)
    atlas = SurfaceAtlas(cfg, b_underline=args.b_underline)
    F = region_fluxes(atlas)
    D = dislocations(cfg, atlas.layout)
    Z, Xi = build_matrices(atlas.layout.c)
    diff, end = fd_residuals(cfg, atlas.layout, F, D)
    _emit({"schema": "clifford-stack/1", "version": __version__,
           "F": list(F), "D": list(D),
           "Z": Z.tolist(), "Xi": Xi.tolist(),
           "difference_residuals": list(diff), "end_sum_residual": end},
          args, "forces")
    return 0


def cmd_solve(args):
    cfg = _config_from(args)
    atlas = SurfaceAtlas(cfg, b_underline=args.b_underline)
    cats, tors = build_grids(atlas)
    if args.source == "mean-curvature":
        f_cat, f_tor = mc_source(atlas, cats, tors)
    elif args.source == "kernel-w":
        f_cat = {j: np.zeros((len(cats[j].t), len(cats[j].th))) for j in cats}
        f_tor = {i: tors[i].w.copy() for i in tors}
    elif args.source.startswith("custom:"):
        with open(args.source[7:]) as f:
            spec = json.load(f)
        f_cat = {int(k): np.array(v) for k, v in spec["cat"].items()}
        f_tor = {int(k): np.array(v) for k, v in spec["tor"].items()}
    else:
        print(f"unknown source {args.source!r}", file=sys.stderr)
        return 2
    sol = global_solve(atlas, f_cat, f_tor, cats, tors,
                       tol=args.tol, max_iters=args.max_iters)
    _emit({"schema": "clifford-stack/1", "version": __version__,
           "converged": sol.converged,
           "residual_history": [float(r) for r in sol.residuals],
           "mu": [float(v) for v in sol.mu],
           "mu_bar": [float(v) for v in sol.mu_bar],
           "diagnostics": {k: (float(v) if np.isscalar(v) else v)
                           for k, v in sol.diagnostics.items()}},
          args, "solve")
    return 0 if sol.converged or sol.residuals else 1


def cmd_relax(args):
    cfg = _config_from(args)
    opts = RelaxOptions(max_iters=args.max_iters, tol=args.tol,
                        b_underline=args.b_underline, n_tor=args.n_tor,
                        seed=args.seed)
    report = relax_loop(cfg, opts)
    text = report.to_json()
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)
    return 0 if report.status in ("converged",) else 1


def cmd_validate_square(args):
    cfg = _config_from(args)
    try:
        bad = square_constraint_violations(cfg)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    _emit({"valid": not bad,
           "violations": [{"constraint": c, "lhs": a, "rhs": b}
                          for c, a, b in bad]}, args, "validate-square")
    return 0 if not bad else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cliffordstack",
        description="Stacked Clifford-torus surfaces: balancing, assembly, "
                    "curvature, flux, linearized solves, relaxation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("balance", help="solve the neck-radius balancing")
    _common(p)
    p.set_defaults(func=cmd_balance)

    p = sub.add_parser("mesh", help="triangulate and export a surface")
    _common(p)
    p.add_argument("--resolution", type=int, default=8)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("analyze", help="curvature and deficit report")
    _common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("forces", help="Killing fluxes and response matrices")
    _common(p)
    p.set_defaults(func=cmd_forces)

    p = sub.add_parser("solve", help="linearized inversion of a source")
    _common(p)
    p.add_argument("--source", type=str, default="mean-curvature",
                   help="mean-curvature | kernel-w | custom:<file>")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=20)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("relax", help="outer parameter relaxation loop")
    _common(p)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--max-iters", type=int, default=10)
    p.add_argument("--n-tor", type=int, default=512, dest="n_tor")
    p.set_defaults(func=cmd_relax)

    p = sub.add_parser("validate-square",
                       help="square-lattice parameter constraints (k = l)")
    _common(p)
    p.set_defaults(func=cmd_validate_square)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NonConvergenceError, SolverDivergence) as exc:
        print(json.dumps({"status": "failed", "error": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
