"""Command-line driver: ``mini-sns <subcommand> [--config F] [--seed S] [--out DIR] [--threads N]``."""

from __future__ import annotations

import argparse
import csv
import logging
import subprocess
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config

log = logging.getLogger("mini_sns")


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def write_manifest(out: Path, command: str, cfg: RunConfig, extra: dict | None = None) -> Path:
    noise = cfg.noise_model()
    kappa = noise.kappa_estimate
    lines = [
        f"command = {command}",
        f"version = {__version__}",
        f"git_describe = {git_describe()}",
        f"config_source = {cfg.source or '<defaults>'}",
        f"config_hash = {cfg.hash()}",
        f"noise_modes = {noise.N}",
        f"C_zeta = {float(noise.C_zeta)!r}",
        f"kappa_estimate = {'n/a' if kappa is None else repr(float(kappa))}",
        f"kappa_level = {noise.kappa_level}",
    ]
    lines += [f"{k} = {v}" for k, v in (extra or {}).items()]
    lines += ["", "# effective configuration", cfg.canonical()]
    path = out / "manifest.txt"
    path.write_text("\n".join(lines))
    return path


# ---------------------------------------------------------------------------
# subcommands


def cmd_mesh_info(cfg: RunConfig, args) -> int:
    from .mesh import unit_square_level
    from .spaces import build_dofmap

    top = args.max_level if args.max_level is not None else cfg.reference_level
    print(f"{'level':>5} {'vertices':>9} {'triangles':>10} {'h':>10} {'velocity':>9} {'pressure':>9} {'solenoidal':>10} {'shape':>7}")
    for lev in range(0, top + 1):
        m = unit_square_level(lev)
        d = build_dofmap(m)
        print(
            f"{lev:>5} {m.n_vertices:>9} {m.n_triangles:>10} {m.diameters().max():>10.5f} {d.n_velocity:>9} "
            f"{d.n_pressure:>9} {d.n_velocity - d.n_pressure + 1:>10} {m.shape_ratio():>7.3f}"
        )
    return 0


def cmd_check(cfg: RunConfig, args) -> int:
    from .checks import run_identity_suite

    results, elapsed = run_identity_suite(levels=tuple(args.levels), noise=cfg.noise_model(), count=args.count, seed=cfg.seed)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} identities hold ({elapsed:.1f} s)")
    return 1 if failed else 0


def cmd_simulate(cfg: RunConfig, args) -> int:
    from .integrator import energy_report, simulate, write_snapshots, write_trajectory_csv

    traj = simulate(cfg.sim_config())
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(traj, out / "trajectory.csv")
    if args.snapshots:
        write_snapshots(traj, out / "snapshots")
    rep = energy_report(traj)
    write_manifest(out, "simulate", cfg, {"energy_max_abs_residual": repr(float(rep.max_abs)), "dissipation_rule": rep.dissipation_rule})
    print(f"level {traj.level}, {traj.steps} steps: final L2 {traj.l2[-1]:.6e}, max |energy residual| {rep.max_abs:.3e}")
    return 0


def cmd_study(cfg: RunConfig, args) -> int:
    from .experiments import run_convergence_study, write_report_csv, write_sample_csv

    study = cfg.study_config()
    t0 = time.perf_counter()

    def progress(s):
        print(f"sample {s} done ({time.perf_counter() - t0:.0f} s)", file=sys.stderr)

    rep = run_convergence_study(study, progress if args.progress else None)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(rep, out / "study.csv")
    write_sample_csv(rep, out / "study_samples.csv")
    write_manifest(
        out,
        "study",
        cfg,
        {
            "reference": f"level {study.reference_level} stands in for the exact solution",
            "fitted_slope": repr(float(rep.slope)),
            "fit_note": rep.fit_note or "-",
            "strictly_decreasing": rep.strictly_decreasing,
            "se_below_half_drop": rep.se_below_half_drop(),
            "aborted_samples": rep.aborted,
            "warnings": "; ".join(rep.warnings) or "-",
        },
    )
    for lev, c, s in zip(rep.levels, rep.combined, rep.se_combined):
        print(f"level {lev}: combined error {c:.6e} (se {s:.2e})")
    print(f"fitted rate {rep.slope:.3f}")
    return 0


def cmd_operator_lab(cfg: RunConfig, args) -> int:
    from .lab import run_operator_lab, write_lab_csv

    estimates = run_operator_lab(quick=cfg.lab_quick or args.quick, alpha=cfg.lab_alpha)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_lab_csv(estimates, out / "operator_lab.csv")
    write_manifest(out, "operator-lab", cfg, {"quick": cfg.lab_quick or args.quick})
    for e in estimates:
        print(f"{e.operator:<26} beta={e.beta!s:<6} gap={e.gap!s:<5} slope {e.slope:.3f}")
    return 0


def cmd_energy(cfg: RunConfig, args) -> int:
    from .integrator import DISSIPATION_RULE, deterministic_energy_defect, energy_refinement

    sim = cfg.sim_config()
    ref = energy_refinement(sim, cfg.energy_steps)
    defect = deterministic_energy_defect(sim)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "energy.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["steps", "dt[time]", "max_abs_residual[L2^2]", "fitted_order[log-log]"])
        for n, dt, r in zip(ref.steps, ref.dts, ref.max_residual):
            w.writerow([n, repr(float(dt)), repr(float(r)), repr(float(ref.slope))])
    write_manifest(
        out,
        "energy",
        cfg,
        {"dissipation_rule": DISSIPATION_RULE, "deterministic_identity_defect": repr(float(defect)), "residual_decreasing": ref.decreasing},
    )
    for n, r in zip(ref.steps, ref.max_residual):
        print(f"steps {n:>5}: max |r_m| {r:.6e}")
    print(f"fitted temporal order {ref.slope:.3f}; deterministic identity defect {defect:.2e}")
    return 0


COMMANDS = {
    "mesh-info": cmd_mesh_info,
    "check": cmd_check,
    "simulate": cmd_simulate,
    "study": cmd_study,
    "operator-lab": cmd_operator_lab,
    "energy": cmd_energy,
}


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="flat key = value config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the base seed")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory (default: out)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads for the study")
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="mini-sns", description="MINI-element stochastic Navier-Stokes experiments", parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="subcommand")
    sub.required = True

    s = sub.add_parser("mesh-info", parents=[common], help="print mesh and dof statistics")
    s.add_argument("--max-level", type=int, default=None)
    s = sub.add_parser("check", parents=[common], help="run the algebraic identity suite")
    s.add_argument("--levels", type=int, nargs="+", default=[1, 2, 3, 4])
    s.add_argument("--count", type=int, default=20, help="random vectors per level")
    s = sub.add_parser("simulate", parents=[common], help="one trajectory, written as CSV")
    s.add_argument("--snapshots", action="store_true", help="also write coefficient files")
    s = sub.add_parser("study", parents=[common], help="Monte Carlo convergence study")
    s.add_argument("--progress", action="store_true", help="report finished samples on stderr")
    s = sub.add_parser("operator-lab", parents=[common], help="operator norm measurements")
    s.add_argument("--quick", action="store_true", help="cheap levels only")
    sub.add_parser("energy", parents=[common], help="dt refinement of the energy residual")
    return p


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    verbose = getattr(args, "verbose", 0) or 0
    logging.basicConfig(level=logging.DEBUG if verbose > 1 else logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args.out = getattr(args, "out", Path("out"))
    try:
        cfg = load_config(args.config) if hasattr(args, "config") else RunConfig()
        if hasattr(args, "seed"):
            cfg = cfg.with_(seed=args.seed)
        if hasattr(args, "threads"):
            cfg = cfg.with_(threads=args.threads)
    except ConfigError as exc:
        print(f"mini-sns: invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg, args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"mini-sns {args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())
