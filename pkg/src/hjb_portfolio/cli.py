"""Command-line entry point: ``hjb-portfolio {alpha,solve,policy,check}``.

Exit codes: 0 ok, 1 check found violated hypotheses, 2 config/validation
error, 3 numerical failure, 4 missing inputs.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, load_config
from .csvio import (ensure_dir, read_snapshots_csv, write_alpha_csv, write_diagnostics_csv,
                    write_diversification_csv, write_policy_csv, write_snapshots_csv)
from .errors import MissingInputError, SolverError, ValidationError
from .market_data import AssetStats, check_assumptions, read_asset_file
from .pde_solver import solve
from .policy import diversification_report, reconstruct_policy
from .riccati import initial_condition
from .value_function import build_alpha_table, evaluate_alpha, make_alpha_evaluator

log = logging.getLogger("hjb_portfolio")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_MISSING = 0, 1, 2, 3, 4


def _load_stats(cfg: RunConfig) -> AssetStats:
    if not cfg.assets.is_file():
        raise MissingInputError(f"asset file not found: {cfg.assets}")
    return read_asset_file(cfg.assets, allow_singular=cfg.allow_singular)


def _phi_grid(cfg: RunConfig) -> np.ndarray:
    spec = cfg.alpha
    if spec.phi_values is not None:
        return np.array(spec.phi_values, dtype=float)
    if not 0 < spec.phi_min < spec.phi_max or spec.knots < 2:
        raise ValidationError("[alpha] requires 0 < phi_min < phi_max and knots >= 2")
    if spec.spacing == "linear":
        return np.linspace(spec.phi_min, spec.phi_max, spec.knots)
    return np.geomspace(spec.phi_min, spec.phi_max, spec.knots)


def cmd_alpha(cfg: RunConfig, out: Path) -> int:
    stats = _load_stats(cfg)
    dset = cfg.decision_set(stats.n)
    phis = _phi_grid(cfg)
    evals = [evaluate_alpha(stats, dset, float(p)) for p in phis]
    ensure_dir(out)
    write_alpha_csv(out / "alpha.csv", phis, evals)
    log.info("wrote %d rows to %s", len(phis), out / "alpha.csv")
    return EXIT_OK


def _versions() -> dict:
    return {"hjb_portfolio": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    stats = _load_stats(cfg)
    dset = cfg.decision_set(stats.n)
    table = build_alpha_table(stats, dset, cfg.alpha.phi_min, cfg.alpha.phi_max, cfg.alpha.knots)
    alpha = make_alpha_evaluator(table, cfg.drift)
    phi0 = initial_condition(cfg.utility, cfg.grid)
    traj = solve(phi0, cfg.grid, cfg.solver, alpha, cfg.snapshot_times)
    ensure_dir(out)
    write_snapshots_csv(out / "snapshots.csv", cfg.grid.centers, traj.snapshots)
    write_diagnostics_csv(out / "diagnostics.csv", traj.diagnostics)
    final_mass = traj.diagnostics[-1]["mass"]
    drift = abs(final_mass - traj.initial_mass) / abs(traj.initial_mass) if traj.initial_mass else abs(final_mass)
    manifest = {
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "config_path": str(cfg.path) if cfg.path else None,
        "config": cfg.raw,
        "versions": _versions(),
        "conservation": {
            "boundary": cfg.solver.boundary,
            "initial_mass": traj.initial_mass,
            "final_mass": final_mass,
            "relative_mass_drift": drift,
            "steps": len(traj.diagnostics) - 1,
            "max_picard_iters": traj.max_picard_iters,
        },
        "snapshots": traj.snapshot_summary(),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("solved to tau = %g in %d steps; relative mass drift %.3e",
             cfg.solver.T, len(traj.diagnostics) - 1, drift)
    return EXIT_OK


def cmd_policy(cfg: RunConfig, out: Path, run_dir: Path) -> int:
    snap_file = run_dir / "snapshots.csv"
    if not snap_file.is_file():
        raise MissingInputError(f"no snapshots found in run directory {run_dir}")
    stats = _load_stats(cfg)
    dset = cfg.decision_set(stats.n)
    x, states = read_snapshots_csv(snap_file)
    field = reconstruct_policy(states, x, stats, dset, cfg.drift, cfg.support_threshold)
    ensure_dir(out)
    write_policy_csv(out / "policy.csv", field)
    write_diversification_csv(out / "diversification.csv", diversification_report(field))
    log.info("policy for %d snapshots x %d cells written to %s", len(states), len(x), out)
    return EXIT_OK


def cmd_check(cfg: RunConfig, out: Path | None, quiet: bool = False) -> int:
    stats = _load_stats(cfg)
    report = check_assumptions(stats, cfg.drift, cfg.grid)
    reasons = list(report.reasons)
    phi0_bounds = None
    try:
        phi0 = initial_condition(cfg.utility, cfg.grid)
        phi0_bounds = [float(phi0.values.min()), float(phi0.values.max())]
        if phi0_bounds[0] < 0:
            reasons.append(f"phi0 takes negative values (min {phi0_bounds[0]:.6g})")
    except ValidationError as exc:
        reasons.append(str(exc))
    summary = report.summary()
    summary["reasons"] = reasons
    summary["passed"] = not reasons
    summary["phi0_range"] = phi0_bounds
    if out is not None:
        ensure_dir(out)
        with open(out / "assumptions.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    lines = [f"||p||_L2   = {summary['p_l2']:.6g}", f"||p||_Linf = {summary['p_linf']:.6g}",
             f"||h||_Linf = {summary['h_linf']:.6g}", f"||h_xx||_L2 = {summary['h_xx_l2']:.6g}"]
    if phi0_bounds is not None:
        lines.append(f"phi0 range = [{phi0_bounds[0]:.6g}, {phi0_bounds[1]:.6g}]")
    lines.append("hypotheses: " + ("PLAUSIBLE" if not reasons else "VIOLATED"))
    lines.extend(f"  - {r}" for r in reasons)
    if not quiet:
        print("\n".join(lines))
    return EXIT_OK if not reasons else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hjb-portfolio", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("alpha", "tabulate alpha, alpha' and the minimizer over phi"),
                            ("solve", "solve the transformed PDE for phi(x, tau)"),
                            ("policy", "reconstruct allocations from a solved run"),
                            ("check", "evaluate the existence hypotheses numerically")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", help="output directory (overrides [output] dir)")
        p.add_argument("--quiet", action="store_true", help="only report errors")
        if name == "policy":
            p.add_argument("--run", help="solved run directory (default: the output directory)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        cfg = load_config(args.config)
        out = Path(args.out).resolve() if args.out else cfg.out_dir
        if args.command == "alpha":
            return cmd_alpha(cfg, out)
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "policy":
            run_dir = Path(args.run).resolve() if args.run else out
            return cmd_policy(cfg, out, run_dir)
        return cmd_check(cfg, Path(args.out).resolve() if args.out else None, args.quiet)
    except MissingInputError as exc:
        log.error("error: %s", exc)
        return EXIT_MISSING
    except ValidationError as exc:
        log.error("error: %s", exc)
        return EXIT_VALIDATION
    except SolverError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
