"""Command line entry points: simulate | stats | budget | verify | ou-bench.

Exit codes: 0 success, 1 usage, 2 validation, 3 numerical failure.
KHM_THREADS caps transform/worker parallelism and is recorded in the run
manifest.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import io as khmio
from .checkpoint import read_checkpoint, write_checkpoint
from .config import Config, ConfigError, parse_config
from .forcing import covariance_profiles
from .integrator import (
    BlowUpError,
    CFLViolationError,
    energy_report,
    ou_benchmark,
    simulate_stationary,
)
from .khm import (
    default_plateau_window,
    ibp_gamma_residual,
    khm_budget,
    necessary_condition_report,
    prop_triv_bounds,
    verify_monin_identity,
    verify_pressure_cancellation,
)
from .manifest import build_manifest, utc_now, write_manifest
from .profiles import standard_eta_library
from .quadrature import (
    build_quadrature,
    fourth_moment,
    fourth_moment_exact,
    second_moment,
    third_moment,
)
from .spectral import Grid, random_solenoidal_field
from .stats import (
    average_spectrum,
    correlation_set_from_data,
    flatness,
    isotropy_deviation_from_data,
    measure_increments,
    structure_table_from_data,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="khm-lab",
                     description="Stochastic Navier-Stokes simulator with "
                                 "Karman-Howarth-Monin budget diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("simulate", "integrate to a stationary state, write snapshots"),
        ("stats", "estimate structure functions and correlations from snapshots"),
        ("budget", "assemble the 4/3 and 4/5 budgets from the stats CSVs"),
        ("verify", "run the exact-identity suite"),
        ("ou-bench", "heat-equation benchmark against the closed form"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out", default="out", help="output directory")
    return parser


def _snapshot_dir(out: Path) -> Path:
    return out / "snapshots"


def _iter_snapshot_files(out: Path):
    d = _snapshot_dir(out)
    if not d.is_dir():
        raise FileNotFoundError(f"no snapshot directory at {d}")
    files = sorted(d.glob("*.khm"))
    if not files:
        raise FileNotFoundError(f"no snapshots in {d}")
    return files


class SnapshotSet:
    """Re-iterable snapshot stream backed by checkpoint files."""

    def __init__(self, files):
        self.files = list(files)

    def __len__(self):
        return len(self.files)

    def __iter__(self):
        for f in self.files:
            yield read_checkpoint(f)[0]

    def check_common_grid(self) -> int:
        import struct

        sizes = set()
        for f in self.files:
            with open(f, "rb") as fh:
                head = fh.read(12)
            if len(head) == 12:
                sizes.add(struct.unpack("<4sII", head)[2])
        if len(sizes) != 1:
            raise ValueError(f"snapshots use mixed grids {sorted(sizes)}")
        return sizes.pop()


def cmd_simulate(cfg: Config, config_path: Path, out: Path) -> int:
    started = utc_now()
    out.mkdir(parents=True, exist_ok=True)
    snapdir = _snapshot_dir(out)
    snapdir.mkdir(exist_ok=True)
    run_cfg = cfg.run_config()

    written = []

    def sink(member, step, time, field):
        path = snapdir / f"member{member:03d}_step{step:08d}.khm"
        write_checkpoint(path, field, cfg.nu, time, step, cfg.seed)
        written.append(path)
        return path

    stats = simulate_stationary(run_cfg, snapshot_sink=sink)
    for w in stats.warnings:
        print(f"warning: {w}", file=sys.stderr)

    energy_path = out / "energy.csv"
    khmio.write_energy_csv(energy_path, stats.times, stats.energy, stats.nu_enstrophy)
    final = read_checkpoint(written[-1])[0] if written else None
    ckpt_path = out / "checkpoint.khm"
    if final is not None:
        write_checkpoint(ckpt_path, final, cfg.nu, stats.times[-1],
                         stats.step_count, cfg.seed)
    files = [energy_path, ckpt_path, *written]
    manifest = build_manifest(config_path, cfg.seed, files, started)
    write_manifest(out / "manifest.json", manifest)
    print(f"simulate: {stats.step_count} steps, max CFL {stats.max_cfl:.3f}, "
          f"{len(written)} snapshots -> {out}")
    return 0


def cmd_stats(cfg: Config, config_path: Path, out: Path) -> int:
    started = utc_now()
    snaps = SnapshotSet(_iter_snapshot_files(out))
    snaps.check_common_grid()
    quad = build_quadrature(cfg.stats.quad_order)
    ells = cfg.ell_grid()
    data = measure_increments(snaps, quad, ells)
    spectrum = average_spectrum(snaps)
    table = structure_table_from_data(data)
    corr = correlation_set_from_data(data, spectrum)
    eps = cfg.forcing.epsilon

    files = []
    p_structure = out / "structure_functions.csv"
    khmio.write_structure_csv(p_structure, table)
    files.append(p_structure)
    p_corr = out / "correlations.csv"
    khmio.write_correlations_csv(p_corr, corr)
    files.append(p_corr)
    p_flat = out / "flatness.csv"
    entries = []
    for p in cfg.stats.flatness_p:
        entries.extend(flatness(snaps, p, cfg.stats.shells))
    khmio.write_flatness_csv(p_flat, entries)
    files.append(p_flat)
    p_iso = out / "isotropy.csv"
    khmio.write_isotropy_csv(p_iso, isotropy_deviation_from_data(data, eps))
    files.append(p_iso)

    manifest = build_manifest(config_path, cfg.seed, files, started)
    write_manifest(out / "stats_manifest.json", manifest)
    print(f"stats: {len(snaps)} snapshots, {len(ells)} separations -> {out}")
    return 0


def cmd_budget(cfg: Config, config_path: Path, out: Path) -> int:
    started = utc_now()
    table = khmio.read_structure_csv(out / "structure_functions.csv")
    corr = khmio.read_correlations_csv(out / "correlations.csv")
    eps = cfg.forcing.epsilon
    cov = covariance_profiles(cfg.forcing, table.ell)

    times, energy, nu_enst = khmio.read_energy_csv(out / "energy.csv")
    from .integrator import TrajectoryStats

    stats = TrajectoryStats(times=times, energy=energy, nu_enstrophy=nu_enst,
                            frac_norm=np.zeros_like(energy), snapshot_handles=[],
                            averaging_start_index=0, step_count=len(times),
                            wall_seconds=0.0, max_cfl=0.0, stationary=True)
    ereport = energy_report(stats, eps, cfg.nu, cfg.khm.s)
    # the energy CSV carries no fractional norm; recover it from snapshots
    snaps = SnapshotSet(_iter_snapshot_files(out))
    fracs = [cfg.nu * s.frac_grad_norm_sq(cfg.khm.s) for s in snaps]
    ereport.regularity_norm = float(np.mean(fracs))

    ell_d, ell_i = default_plateau_window(cfg.n, cfg.forcing.max_abs_k(),
                                          ereport.wad, eps)
    if cfg.khm.ell_d is not None:
        ell_d = cfg.khm.ell_d
    if cfg.khm.ell_i is not None:
        ell_i = cfg.khm.ell_i

    budget = khm_budget(table, corr, cov, cfg.nu, eps, ell_window=(ell_d, ell_i))
    khmio.write_budget_csv(out / "khm_budget.csv", budget)

    bounds = prop_triv_bounds(table, eps, cov)
    nreport = necessary_condition_report(table, ereport, eps, cfg.nu, ell_d, ell_i)

    report_path = out / "report.txt"
    with open(report_path, "w") as fh:
        fh.write(_format_report(cfg, budget, bounds, nreport, ereport))
    manifest = build_manifest(config_path, cfg.seed,
                              [out / "khm_budget.csv", report_path], started)
    write_manifest(out / "budget_manifest.json", manifest)
    print(f"budget: plateau sup |S0/(eps l) + 4/3| = {budget.plateau_43:.4f}, "
          f"|Spar/(eps l) + 4/5| = {budget.plateau_45:.4f} on "
          f"[{ell_d:.3f}, {ell_i:.3f}] -> {out}")
    return 0


def _format_report(cfg, budget, bounds, nreport, ereport) -> str:
    lines = []
    w = lines.append
    w("KHM budget and necessary-condition report")
    w("=" * 41)
    w(f"nu = {cfg.nu}, eps = {cfg.forcing.epsilon}, n = {cfg.n}")
    w("")
    w("Energy balance")
    w(f"  nu <|grad u|^2>          = {ereport.mean_grad_sq_times_nu:.6g}"
      f" +- {ereport.mean_grad_sq_times_nu_stderr:.2g}")
    w(f"  (nu <|grad u|^2> - eps)/eps = {ereport.balance_residual:+.4g}"
      f" +- {ereport.balance_residual_stderr:.2g}  (tolerance: 3 SE)")
    w(f"  WAD metric nu <|u|^2>    = {ereport.wad:.6g}")
    w(f"  nu <||grad|^{ereport.regularity_s} u|^2>   = {ereport.regularity_norm:.6g}")
    w(f"  dissipation marker l_D   = {ereport.dissipation_scale:.4g}")
    w("")
    if np.isnan(budget.plateau_43):
        w("Plateau scan: no resolved inertial range at this nu "
          "(dissipation marker >= forcing scale); override ell_d/ell_i to force a window")
    else:
        w(f"Plateau scan on [{budget.plateau_window[0]:.4g}, {budget.plateau_window[1]:.4g}]")
        w(f"  sup |S0/(eps l) + 4/3|   = {budget.plateau_43:.4g}")
        w(f"  sup |Spar/(eps l) + 4/5| = {budget.plateau_45:.4g}")
    w("")
    w("Small-separation band  -(8/3) eps <= S0/l <= 0")
    w(f"  window separations: {np.array2string(bounds.ell, precision=4)}")
    w(f"  tolerance (3 SE + continuity correction): "
      f"{np.array2string(bounds.tolerance, precision=3)}")
    w(f"  PASS: {bounds.passed}")
    w("")
    w("Necessary-condition plateaus (3 SE agreement)")
    w(f"  energy balance holds: {nreport.balance_holds}")
    w(f"  S0/l -> {nreport.measured_s0_plateau:+.4g} +- {nreport.measured_s0_plateau_stderr:.2g}"
      f"  vs (4/3)(nu D - eps) = {nreport.predicted_s0_plateau:+.4g}"
      f" +- {nreport.predicted_s0_plateau_stderr:.2g}"
      f"  consistent: {nreport.s0_consistent}")
    w(f"  Spar/l -> {nreport.measured_spar_plateau:+.4g} +- {nreport.measured_spar_plateau_stderr:.2g}"
      f"  vs (4/15)(nu D - eps) = {nreport.predicted_spar_plateau:+.4g}"
      f" +- {nreport.predicted_spar_plateau_stderr:.2g}"
      f"  consistent: {nreport.spar_consistent}")
    w(f"  scaling law excluded at this nu: {nreport.scaling_law_excluded}")
    w("")
    w(f"inertial-range markers: l_D = {nreport.ell_d:.4g}, l_I = {nreport.ell_i:.4g}")
    w("")
    return "\n".join(lines)


def cmd_verify(cfg: Config, config_path: Path, out: Path) -> int:
    failures = 0

    def check(name, ok, detail=""):
        nonlocal failures
        status = "PASS" if ok else "FAIL"
        if not ok:
            failures += 1
        print(f"[{status}] {name}{': ' + detail if detail else ''}")

    quad = build_quadrature(cfg.stats.quad_order)
    m2 = np.abs(second_moment(quad) - np.eye(3) / 3).max()
    m3 = np.abs(third_moment(quad)).max()
    m4 = np.abs(fourth_moment(quad) - fourth_moment_exact()).max()
    check("sphere second moment = I/3", m2 < 1e-13, f"max err {m2:.2e}")
    check("sphere third moment = 0", m3 < 1e-13, f"max err {m3:.2e}")
    check("sphere fourth moment identity", m4 < 1e-13, f"max err {m4:.2e}")

    grid = Grid(16)
    worst = 0.0
    for seed in range(5):
        f = random_solenoidal_field(grid, seed=seed, decay=0.9)
        worst = max(worst, verify_monin_identity(f))
    check("flux-divergence identity (5 seeds)", worst < 1e-8, f"max resid {worst:.2e}")

    etas = standard_eta_library(cfg.khm.eta_scale)
    worst = 0.0
    for seed in range(3):
        f = random_solenoidal_field(grid, seed=10 + seed, decay=0.8)
        for eta in etas:
            worst = max(worst, verify_pressure_cancellation(f, eta))
    check("pressure cancellation (3 fields x 3 tensors)", worst < 1e-8,
          f"max resid {worst:.2e}")

    gp = lambda t: -3.4 * np.asarray(t)
    gpp = lambda t: -3.4 * np.ones_like(np.asarray(t, dtype=float))
    r_poly = ibp_gamma_residual(gp, gpp, [0.3, 1.0, 2.0])
    gp2 = lambda t: np.cos(1.5 * np.asarray(t)) * 1.5
    gpp2 = lambda t: -np.sin(1.5 * np.asarray(t)) * 2.25
    r_trig = ibp_gamma_residual(gp2, gpp2, [0.4, 1.2])
    check("integration-by-parts identity", max(r_poly, r_trig) < 1e-12,
          f"max resid {max(r_poly, r_trig):.2e}")

    bench_cfg = cfg.run_config()
    bench_cfg = type(bench_cfg)(**{**bench_cfg.__dict__, "nu": max(cfg.nu, 0.5),
                                   "dt": 0.02, "burn_in_time": 5.0,
                                   "averaging_time": 400.0, "nonlinear": False})
    report = ou_benchmark(bench_cfg, record_stride=2)
    zmax = max(abs(m.z_score) for m in report.modes)
    check("OU benchmark: energy balance within 3 SE",
          abs(report.energy.balance_residual) <= 3 * report.energy.balance_residual_stderr,
          f"residual {report.energy.balance_residual:+.3g} "
          f"+- {report.energy.balance_residual_stderr:.2g}")
    check("OU benchmark: per-mode variances within 3 SE", zmax <= 3.0,
          f"max |z| = {zmax:.2f}")

    return 0 if failures == 0 else 3


def cmd_ou_bench(cfg: Config, config_path: Path, out: Path) -> int:
    report = ou_benchmark(cfg.run_config())
    e = report.energy
    print(f"heat-equation benchmark: eps = {e.epsilon}")
    print(f"  nu <|grad v|^2> = {e.mean_grad_sq_times_nu:.6g} "
          f"+- {e.mean_grad_sq_times_nu_stderr:.3g}")
    print(f"  balance residual = {e.balance_residual:+.4g} "
          f"+- {e.balance_residual_stderr:.2g}")
    print(f"  <|v|^2> = {e.mean_energy:.6g} +- {e.mean_energy_stderr:.3g}")
    print("  per-mode stationary variance (measured / expected / z):")
    for m in report.modes:
        print(f"    k={m.k}: {m.measured_var:.4g} / {m.expected_var:.4g} / "
              f"{m.z_score:+.2f}")
    ok = report.passes()
    print(f"  3-SE check: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 3


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    config_path = Path(args.config)
    out = Path(args.out)
    try:
        cfg = parse_config(config_path)
    except FileNotFoundError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return 2
    except ConfigError as err:
        print(f"validation error in {config_path}: {err}", file=sys.stderr)
        return 2
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg, config_path, out)
        if args.command == "stats":
            return cmd_stats(cfg, config_path, out)
        if args.command == "budget":
            return cmd_budget(cfg, config_path, out)
        if args.command == "verify":
            return cmd_verify(cfg, config_path, out)
        if args.command == "ou-bench":
            return cmd_ou_bench(cfg, config_path, out)
        raise UsageError(f"unknown command {args.command}")
    except (FileNotFoundError, ValueError) as err:
        print(f"validation error: {err}", file=sys.stderr)
        return 2
    except (BlowUpError, CFLViolationError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
