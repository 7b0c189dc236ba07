"""
cli.py — Command-line driver.

    pbmix mesh        --nx 2 --out m.txt [--case ex1-smooth]
    pbmix solve       --case constant [--level 2 | --mesh m.txt] [--out fields.csv]
    pbmix convergence --case ex1-smooth [--levels 7] [--no-q] [--out report.csv]
    pbmix selftest    [--seed 0]

Common flags: --config FILE (JSON object of RunConfig fields; flags win),
--threads N (also PBMIX_THREADS), --quiet.

Exit codes: 0 success, 1 runtime/solver failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

from src.config import CASE_NAMES, RunConfig, load_config
from src.errors import ConfigError, PbmixError

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbmix",
        description="Mixed RT0/P_k solver for the linearised Poisson-Boltzmann equation",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--threads", type=int, help="numeric worker threads (default: PBMIX_THREADS or all cores)")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    case = argparse.ArgumentParser(add_help=False)
    case.add_argument("--case", choices=CASE_NAMES)
    case.add_argument("--u0", type=float, help="ex3-line velocity intensity")

    numeric = argparse.ArgumentParser(add_help=False)
    numeric.add_argument("--k", type=int, help="polynomial degree of the scalar space")
    numeric.add_argument("--no-q", dest="use_q", action="store_const", const=False,
                         help="use the L² load directly instead of Qg")
    numeric.add_argument("--mesh", dest="mesh_path", help="start from a mesh file")
    numeric.add_argument("--assembly-degree", type=int)
    numeric.add_argument("--error-degree", type=int)
    numeric.add_argument("--load-degree", type=int)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", parents=[common, case], help="write a structured or refined mesh")
    p.add_argument("--nx", type=int, help="cells per side (structured cases)")
    p.add_argument("--level", type=int, help="refinement level (fixture-mesh cases)")
    p.add_argument("--out", help="output mesh file")

    p = sub.add_parser("solve", parents=[common, case, numeric], help="single solve with field dump")
    p.add_argument("--level", type=int, help="uniform refinement level of the case mesh")
    p.add_argument("--out", help="field dump CSV (default: stdout)")

    p = sub.add_parser("convergence", parents=[common, case, numeric], help="convergence study")
    p.add_argument("--levels", type=int, help="number of refinement levels")
    p.add_argument("--out", help="report CSV")

    p = sub.add_parser("selftest", parents=[common], help="run the invariant suite")
    p.add_argument("--seed", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < JSON file < flags."""
    cfg = load_config(args.config)
    skip = {"config", "quiet"}
    overrides = {k: v for k, v in vars(args).items() if k not in skip}
    return cfg.merged(overrides).validate()


def set_threads(threads: int) -> None:
    for name in THREAD_VARS:
        os.environ[name] = str(threads)


# ── Commands ──────────────────────────────────────────────────────────────────

def _case_mesh(case, level: int):
    from src.mesh import uniform_refine

    mesh = case.initial_mesh()
    for _ in range(level - 1):
        mesh = uniform_refine(mesh)
    return mesh


def cmd_mesh(cfg: RunConfig, verbose: bool = True) -> int:
    from src.analysis import builtin_case
    from src.mesh import generate_structured, write_mesh

    if not cfg.out:
        raise ConfigError("mesh needs --out")
    case = builtin_case(cfg.case, cfg.u0)
    if case.mesh_path is not None:
        mesh = _case_mesh(case, cfg.level)
    else:
        mesh = generate_structured(cfg.nx, case.domain, case.diagonal, case.marker)
    write_mesh(mesh, cfg.out)
    if verbose:
        print(f"💾 {mesh.n_vertices} vertices, {mesh.n_cells} cells, "
              f"h = {mesh.h_max:.4f} → {cfg.out}")
    return 0


def cmd_solve(cfg: RunConfig, verbose: bool = True) -> int:
    import numpy as np
    import pandas as pd

    from src.analysis import builtin_case, solve_level
    from src.mesh import read_mesh
    from src.system import advection_smallness_report

    case = builtin_case(cfg.case, cfg.u0)
    mesh = read_mesh(cfg.mesh_path) if cfg.mesh_path else _case_mesh(case, cfg.level)
    if verbose:
        print(f"📐 {case.name}: {mesh.n_cells} cells, h = {mesh.h_max:.4f}", file=sys.stderr)
    sol = solve_level(case, mesh, cfg.k, cfg.use_q, cfg.assembly_degree, cfg.load_degree)

    X = mesh.centroids[:, None, :]
    cells = np.arange(mesh.n_cells)
    zeta = sol.zeta.evaluate(X, cells)[:, 0]
    df = pd.DataFrame({
        "cell": cells,
        "cx": mesh.centroids[:, 0],
        "cy": mesh.centroids[:, 1],
        "psi_h": sol.psi.evaluate(X, cells)[:, 0],
        "psi_sharp": sol.post.evaluate(X, cells)[:, 0],
        "zeta_x": zeta[:, 0],
        "zeta_y": zeta[:, 1],
    })
    u4 = advection_smallness_report(sol.coeffs, cfg.error_degree)
    print(f"u_h_L4 {u4:.17g}")
    if cfg.out:
        folder = os.path.dirname(cfg.out)
        if folder:
            os.makedirs(folder, exist_ok=True)
        df.to_csv(cfg.out, index=False, float_format="%.17g")
        if verbose:
            print(f"💾 {len(df)} cells → {cfg.out}", file=sys.stderr)
    else:
        df.to_csv(sys.stdout, index=False, float_format="%.17g")
    return 0


def cmd_convergence(cfg: RunConfig, verbose: bool = True) -> int:
    from src.analysis import builtin_case, run_convergence
    from src.mesh import read_mesh

    case = builtin_case(cfg.case, cfg.u0)
    mesh = read_mesh(cfg.mesh_path) if cfg.mesh_path else None
    report = run_convergence(case, cfg.levels, cfg.k, cfg.use_q, mesh,
                             cfg.assembly_degree, cfg.error_degree, cfg.load_degree,
                             verbose=verbose)
    report.print()
    if cfg.out:
        report.to_csv(cfg.out)
        print(f"💾 {len(report.records)} levels → {cfg.out}")
    return 0


def cmd_selftest(cfg: RunConfig, verbose: bool = True) -> int:
    from src.selftest import run_selftest

    results = run_selftest(seed=cfg.seed, verbose=True)
    return 0 if all(r.passed for r in results) else 1


COMMAND_TABLE = {
    "mesh":        cmd_mesh,
    "solve":       cmd_solve,
    "convergence": cmd_convergence,
    "selftest":    cmd_selftest,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = resolve_config(args)
    except ConfigError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 2
    set_threads(cfg.threads)
    try:
        return COMMAND_TABLE[cfg.command](cfg, verbose=not args.quiet)
    except ConfigError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 2
    except (PbmixError, OSError) as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
