"""Command-line driver: ``membrane-opt mesh | solve | diagnose``.

Exit codes: 0 success, 2 usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, fields
from .errors import MembraneError, MeshError, SolverError
from .fem import assemble, element_gradients
from .mesh import DomainSpec, generate, load_mesh, save_mesh
from .solver_minimax import BarrierConfig, solve_constrained, weighted_residual
from .solver_p import PConfig, continuation
from .vtk import write_vtk

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
SUMMARY_REQUIRED = ("energy_Ef", "energy_F1", "kappa_hat", "theta_mass", "converged")

log = logging.getLogger("membrane_opt")


class UsageError(Exception):
    pass


def _add_domain_flags(p):
    p.add_argument("--domain", choices=["disk", "square", "ellipse", "treffle"], default="disk")
    p.add_argument("--subdiv", type=int, help="cells per side (square) or rings (polar domains)")
    p.add_argument("--target-triangles", type=int)
    p.add_argument("--h", type=float, help="target edge length")
    p.add_argument("--semi-axes", type=float, nargs=2, default=(1.0, 0.6), metavar=("A", "B"))
    p.add_argument("--lobes", type=float, default=0.3, help="treffle lobe amplitude in [0, 1)")
    p.add_argument("--side", type=float, default=1.0, help="square side length")


def _domain_spec(args) -> DomainSpec:
    return DomainSpec(
        kind=args.domain,
        subdiv=args.subdiv,
        target_triangles=args.target_triangles,
        h=args.h,
        semi_axes=tuple(args.semi_axes),
        lobes=args.lobes,
        side=args.side,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="membrane-opt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="generate a mesh file")
    _add_domain_flags(p)
    p.add_argument("--out", help="output mesh file (mesh2d format)")

    p = sub.add_parser("solve", help="solve the reinforcement problem")
    _add_domain_flags(p)
    p.add_argument("--mesh", help="mesh file; overrides the domain flags")
    p.add_argument("--f", default="1", help="constant load or a named field: " + ", ".join(fields.NAMED_FIELDS))
    p.add_argument("--m", type=float, required=True, help="reinforcement mass")
    p.add_argument("--method", choices=["p", "constrained", "both"], default="constrained")
    p.add_argument("--q-schedule", type=float, nargs="+", default=list(PConfig().q_schedule))
    p.add_argument("--grad-tol", type=float, default=PConfig().grad_tol)
    p.add_argument("--gap-tol", type=float, default=BarrierConfig().gap_tol)
    p.add_argument("--max-iters", type=int, default=PConfig().max_iters)
    p.add_argument("--vtk", action="store_true", help="also write solution.vtk")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("diagnose", help="free boundary and consistency checks for a solve")
    p.add_argument("--run", required=True, help="directory written by 'solve' (one method)")
    p.add_argument("--eps-fb", type=float, default=0.05)
    p.add_argument("--out", help="output directory (default: the run directory)")
    return parser


def cmd_mesh(args) -> int:
    mesh = generate(_domain_spec(args))
    if args.out:
        save_mesh(mesh, args.out)
    print(f"n_v={mesh.n_vertices} n_t={mesh.n_triangles} area={mesh.area!r}")
    return EXIT_OK


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_solution(outdir: Path, system, lam, theta, summary, want_vtk):
    outdir.mkdir(parents=True, exist_ok=True)
    mesh = system.mesh
    u = system.extend(lam)
    _write_csv(
        outdir / "u.csv", ["vertex", "x", "y", "u"],
        ([i, repr(x), repr(y), repr(v)] for i, ((x, y), v) in enumerate(zip(mesh.vertices.tolist(), u.tolist()))),
    )
    cen = mesh.centroids
    _write_csv(
        outdir / "theta.csv", ["triangle", "cx", "cy", "theta"],
        ([i, repr(x), repr(y), repr(v)] for i, ((x, y), v) in enumerate(zip(cen.tolist(), np.asarray(theta).tolist()))),
    )
    save_mesh(mesh, outdir / "mesh.m2d")
    if want_vtk:
        gx, gy = element_gradients(system, lam)
        write_vtk(outdir / "solution.vtk", mesh, {"u": u},
                  {"theta": theta, "grad_norm": np.sqrt(gx * gx + gy * gy)})
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _summary(system, lam, theta, m, method, extra):
    energies = analysis.energy_report(system, lam, theta, m)
    gx, gy = element_gradients(system, lam)
    summary = {
        "method": method,
        "m": m,
        "unconstrained": m == 0,
        "energy_Ef": energies["E_f"],
        "energy_J": energies["J_value"],
        "energy_F1": energies["F1_value"],
        "kappa_hat": float(np.sqrt((gx * gx + gy * gy).max())) if len(gx) else 0.0,
        "theta_mass": float(system.areas @ theta),
        "n_vertices": system.mesh.n_vertices,
        "n_triangles": system.mesh.n_triangles,
    }
    summary.update(extra)
    return summary


def run_p(system, m, args):
    config = PConfig(q_schedule=tuple(args.q_schedule), grad_tol=args.grad_tol, max_iters=args.max_iters)
    t0 = time.perf_counter()
    res = continuation(system, m, config)
    final = res.final
    extra = {
        "converged": res.converged,
        "objective": final.objective,
        "q": final.q,
        "p": final.p,
        "theta_p_norm": float((system.areas @ final.theta ** final.p) ** (1 / final.p)),
        "iterations": int(sum(s.iterations for s in res.stages)),
        "stage_iterations": [s.iterations for s in res.stages],
        "norms_2q": res.norms_2q,
        "wall_time": time.perf_counter() - t0,
    }
    return final.lam, final.theta, extra


def run_constrained(system, m, args):
    config = BarrierConfig(gap_tol=args.gap_tol)
    t0 = time.perf_counter()
    sol = solve_constrained(system, m, config)
    extra = {
        "converged": sol.converged,
        "objective": sol.objective,
        "t": sol.t,
        "duality_gap": sol.gap,
        "weighted_residual": weighted_residual(system, sol.lam, sol.theta),
        "iterations": sol.iterations,
        "wall_time": time.perf_counter() - t0,
    }
    return sol.lam, sol.theta, extra


def cmd_solve(args) -> int:
    if args.m < 0:
        raise UsageError("--m must be nonnegative")
    try:
        fields.parse_field(args.f)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.mesh:
        mesh = load_mesh(args.mesh)
        domain = {"kind": "file", "path": str(args.mesh)}
    else:
        spec = _domain_spec(args)
        mesh = generate(spec)
        domain = {"kind": spec.kind, "semi_axes": list(spec.semi_axes), "lobes": spec.lobes, "side": spec.side}
    system = assemble(mesh, fields.sample(args.f, mesh.vertices))
    out = Path(args.out)
    methods = ["p", "constrained"] if args.method == "both" else [args.method]
    ok = True
    results = {}
    for method in methods:
        runner = run_p if method == "p" else run_constrained
        lam, theta, extra = runner(system, args.m, args)
        extra.update({"f": args.f, "domain": domain})
        summary = _summary(system, lam, theta, args.m, method, extra)
        target = out / method if len(methods) > 1 else out
        _write_solution(target, system, lam, theta, summary, args.vtk)
        results[method] = summary
        ok &= bool(summary["converged"])
        print(f"[{method}] E_f={summary['energy_Ef']!r} kappa_hat={summary['kappa_hat']!r} "
              f"theta_mass={summary['theta_mass']!r} converged={summary['converged']}")
    if len(methods) > 1:
        a, b = results["p"], results["constrained"]
        cmp = {
            "objective_rel_diff": abs(a["objective"] - b["objective"]) / max(abs(b["objective"]), 1e-300),
            "energy_Ef_rel_diff": abs(a["energy_Ef"] - b["energy_Ef"]) / max(abs(b["energy_Ef"]), 1e-300),
        }
        (out / "comparison.json").write_text(json.dumps(cmp, indent=2, sort_keys=True) + "\n")
        print(f"objective relative difference {cmp['objective_rel_diff']:.3e}")
    return EXIT_OK if ok else EXIT_NUMERIC


def _read_column(path, column):
    with open(path, newline="") as fh:
        return np.array([float(row[column]) for row in csv.DictReader(fh)])


def cmd_diagnose(args) -> int:
    run = Path(args.run)
    needed = [run / n for n in ("summary.json", "u.csv", "theta.csv", "mesh.m2d")]
    missing = [str(p) for p in needed if not p.exists()]
    if missing:
        raise UsageError("missing inputs: " + ", ".join(missing))
    summary = json.loads((run / "summary.json").read_text())
    mesh = load_mesh(run / "mesh.m2d")
    system = assemble(mesh, fields.sample(summary["f"], mesh.vertices))
    lam = _read_column(run / "u.csv", "u")[system.interior]
    theta = _read_column(run / "theta.csv", "theta")
    m = float(summary["m"])
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)

    fb = analysis.extract_free_boundary(system, lam, args.eps_fb)
    rows = []
    for pid, line in enumerate(fb.polylines):
        for seq, v in enumerate(line.tolist()):
            x, y = mesh.vertices[v]
            rows.append([pid, seq, v, repr(float(x)), repr(float(y))])
    _write_csv(out / "freeboundary.csv", ["polyline", "seq", "vertex", "x", "y"], rows)

    energies = analysis.energy_report(system, lam, theta, m)
    _, const = fields.parse_field(summary["f"])
    checks = {
        "n_triangles": mesh.n_triangles,
        "n_plastic": fb.n_plastic,
        "n_elastic": fb.n_elastic,
        "plastic_area_fraction": fb.plastic_area_fraction,
        "kappa_hat": fb.kappa_hat,
        "n_polylines": len(fb.polylines),
        "optimality_theta_mass_below": analysis.theta_mass_below(system, lam, theta),
        "minmax_residual": abs(energies["F1_value"] - energies["E_f"]) / max(abs(energies["E_f"]), 1e-300),
        "energies": energies,
        "obstacle_applicable": const is not None,
    }
    if const is not None:
        violation = analysis.obstacle_check(system, lam)
        checks["obstacle_violation"] = violation
        checks["obstacle_tolerance"] = 1e-3 * fb.kappa_hat * mesh.diameter()
    domain = summary.get("domain", {})
    if domain.get("kind") == "disk" and const is not None and const > 0:
        # f = c scales the unit-load state by c and leaves theta unchanged
        errs = analysis.radial_errors(system, lam / const, theta, m)
        checks["oracle"] = {
            "a_m": errs["a_m"],
            "kappa": errs["kappa"] * const,
            "u_rel_l2": errs["u_rel_l2"],
            "theta_rel_l1": errs["theta_rel_l1"],
            "theta_rel_l1_triangle": errs["theta_rel_l1_triangle"],
            "a_m_estimate": _estimate_core_radius(system, fb),
        }
    (out / "checks.json").write_text(json.dumps(checks, indent=2, sort_keys=True) + "\n")
    print(f"plastic={fb.n_plastic} elastic={fb.n_elastic} polylines={len(fb.polylines)}")
    return EXIT_OK


def _estimate_core_radius(system, fb) -> float | None:
    """Mean centroid radius of the innermost ring of plastic triangles."""
    if not fb.plastic.any() or fb.plastic.all():
        return None
    r = np.hypot(*system.mesh.centroids.T)
    rp = r[fb.plastic]
    h = system.mesh.mesh_size()
    inner = rp[rp <= rp.min() + h]
    return float(inner.mean())


COMMANDS = {"mesh": cmd_mesh, "solve": cmd_solve, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, MeshError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (SolverError, MembraneError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
