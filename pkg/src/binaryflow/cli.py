"""Command-line interface.

Subcommands:
  run <config> [--out DIR]   time-march (or steady-solve) a configured scenario
  mesh-info <config>         build the trimmed mesh and report its statistics
  check-quadrature           convergence check of the cut-cell quadrature
  verify-jacobian <config>   finite-difference check of the assembled Jacobian

All subcommands exit with status 1 on any contract failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__, cutcell, diagnostics, snapshots, solver
from .config import ConfigError, build_scenario, load_config, serialize


log = logging.getLogger(__name__)


def _build(path):
    cfg = load_config(path)
    return cfg, build_scenario(cfg)


def cmd_run(args):
    cfg, sc = _build(args.config)
    out_dir = args.out if args.out is not None else cfg.output["directory"]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.toml"), "w") as fh:
        fh.write(serialize(cfg))
    print(f"scenario: {sc.name} ({sc.description})")
    print(sc.disc.mesh.summary())
    print(f"degrees of freedom: {sc.disc.n_dofs}")

    nx, ny = cfg.output["sample_nx"], cfg.output["sample_ny"]
    interval = cfg.output["interval"]

    def dump(U, t, label):
        snap = snapshots.sample(sc.disc, U, nx=nx, ny=ny, time=t)
        base = os.path.join(out_dir, label)
        snapshots.write_snapshot(snap, base)
        return snap

    dump(sc.U0, 0.0, "snapshot_000000")
    if sc.dt is None:
        U, info = solver.newton_solve(sc.disc, sc.U0, sc.bc, 0.0)
        if not info.converged:
            print(f"steady solve failed: residual {info.residual_norm:.3e} "
                  f"after {info.iterations} iterations", file=sys.stderr)
            return 1
        t, steady = 0.0, True
        print(f"steady solve converged in {info.iterations} iterations")
    else:
        def monitor(step, t, U, info):
            if step % interval == 0:
                dump(U, t, f"snapshot_{step:06d}")
                print(f"step {step:6d}  t = {t:.6g}  "
                      f"newton {info.iterations}  "
                      f"|u|max = {solver.max_speed(sc.disc, U):.4g}")

        try:
            U, t, steady = solver.run(
                sc.disc, sc.bc, sc.U0, sc.dt, t_end=sc.t_end,
                max_steps=cfg.max_steps, steady_rtol=sc.steady_rtol,
                history_path=os.path.join(out_dir, "history.csv"),
                monitor=monitor, max_halvings=cfg.max_halvings,
                restore_after=cfg.restore_after)
        except solver.NonlinearSolveError as exc:
            print(f"time integration failed: {exc}", file=sys.stderr)
            return 1
        print(f"finished at t = {t:.6g} ({'steady' if steady else 't_end reached'})")

    snap = dump(U, t, "snapshot_final")
    np.save(os.path.join(out_dir, "state_final.npy"), U)
    if sc.name == "taylor-couette":
        try:
            rot = diagnostics.interface_rotation(snap)
            print(f"maximum interface rotation: {rot:.4f} rad")
        except ValueError as exc:
            print(f"interface diagnostic unavailable: {exc}", file=sys.stderr)
    print(f"output written to {out_dir}/")
    return 0


def cmd_mesh_info(args):
    cfg, sc = _build(args.config)
    print(sc.disc.mesh.summary())
    print(f"spline order: {sc.disc.k}")
    print(f"scalar basis functions: {sc.disc.n_scalar}")
    print(f"degrees of freedom: {sc.disc.n_dofs}")
    return 0


def cmd_check_quadrature(args):
    """Area/perimeter convergence for a circle cut out of a coarse grid."""
    r = 0.3
    exact_area = np.pi * r**2
    exact_perim = 2.0 * np.pi * r
    ls = cutcell.circle((0.5, 0.5), r)
    h = 0.25
    print(f"immersed circle r={r} in the unit square, h={h}")
    print(f"{'depth':>5} {'area error':>12} {'perimeter error':>16}")
    failed = False
    for depth in range(1, args.depth + 1):
        area = perim = 0.0
        for i in range(4):
            for j in range(4):
                lo = np.array([i * h, j * h])
                q = cutcell.element_quadrature(lo, lo + h, ls, depth=depth)
                area += q.volume
                perim += q.surface_measure
        ea = abs(area - exact_area) / exact_area
        ep = abs(perim - exact_perim) / exact_perim
        print(f"{depth:5d} {ea:12.3e} {ep:16.3e}")
        if depth == 3 and max(ea, ep) > 1e-3:
            failed = True
    if failed:
        print("depth-3 quadrature misses the 1e-3 accuracy target", file=sys.stderr)
        return 1
    return 0


def cmd_verify_jacobian(args):
    cfg, sc = _build(args.config)
    disc = sc.disc
    rng = np.random.default_rng(args.seed)
    # smooth random state of moderate amplitude around the scenario start
    U = sc.U0 + 0.01 * rng.standard_normal(disc.n_dofs)
    r, J = disc.assemble(U, U, 1.0, sc.bc, 0.5)
    worst = 0.0
    for _ in range(args.directions):
        v = rng.standard_normal(disc.n_dofs)
        v /= np.linalg.norm(v)
        eps = 1e-6 * max(np.linalg.norm(U), 1.0)
        rp, _ = disc.assemble(U + eps * v, U, 1.0, sc.bc, 0.5, want_jacobian=False)
        rm, _ = disc.assemble(U - eps * v, U, 1.0, sc.bc, 0.5, want_jacobian=False)
        fd = (rp - rm) / (2.0 * eps)
        Jv = J @ v
        rel = np.linalg.norm(Jv - fd) / max(np.linalg.norm(fd), 1e-30)
        worst = max(worst, rel)
    print(f"worst relative Jacobian error over {args.directions} "
          f"random directions: {worst:.3e}")
    if worst > 1e-5:
        print("Jacobian disagrees with finite differences", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="binaryflow",
        description="immersed isogeometric binary-fluid flow solver")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="enable info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a configured scenario")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("mesh-info", help="report trimmed-mesh statistics")
    p.add_argument("config")
    p.set_defaults(func=cmd_mesh_info)

    p = sub.add_parser("check-quadrature",
                       help="cut-cell quadrature convergence check")
    p.add_argument("--depth", type=int, default=5)
    p.set_defaults(func=cmd_check_quadrature)

    p = sub.add_parser("verify-jacobian",
                       help="finite-difference check of the Jacobian")
    p.add_argument("config")
    p.add_argument("--directions", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_jacobian)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
