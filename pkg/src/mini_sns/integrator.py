"""Drift-implicit Euler-Maruyama time stepping for the semidiscrete stochastic
Navier-Stokes system with transport noise, and its pathwise energy ledger.

One step solves, for every discretely divergence-free w,

    <u+, w> + dt <grad u+, grad w> = <u, w> + dt <(1/2) sum_n L_n^2 u, w>
                                     - dt <G(u), w> + sum_n dW_n <(zeta_n . grad) u, w>

as a single saddle solve with the matrix [[M + dt K, B^T], [B, 0]].  The
Ito correction needs L_n u = P_h((zeta_n . grad) u) (one projection per
mode); the outer projection is supplied by the step solve itself.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .noise import BrownianDriver, NoiseModel, build_noise_family, sample_path
from .operators import OperatorSet, SolverError, assemble_level, eval_nonlinear, project_function

log = logging.getLogger(__name__)

KAPPA_WARN = 0.75
KAPPA_LEVEL = 3
DIVERGENCE_TOL = 1e-9
DISSIPATION_RULE = "implicit-point"  # dissipation sum uses u^{m+1} on each step


class NonFiniteError(RuntimeError):
    def __init__(self, step: int, what: str = "velocity"):
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step


# ---------------------------------------------------------------------------
# initial data


def _vortex(x, y):
    # curl of sin^2(pi x) sin^2(pi y): smooth, solenoidal, zero on the boundary
    s = np.pi
    return np.stack(
        [
            2 * s * np.sin(s * x) ** 2 * np.sin(s * y) * np.cos(s * y),
            -2 * s * np.sin(s * x) * np.cos(s * x) * np.sin(s * y) ** 2,
        ]
    )


def _taylor_green(x, y):
    # solenoidal but tangentially nonzero on the boundary; P_h removes the trace
    return np.stack([np.sin(np.pi * x) * np.cos(np.pi * y), -np.cos(np.pi * x) * np.sin(np.pi * y)])


def _shear(x, y):
    return np.stack([np.sin(np.pi * y) ** 2 * np.sin(np.pi * x), np.zeros_like(x)])


def _zero(x, y):
    return np.zeros((2,) + np.shape(x))


INITIAL_FIELDS: dict[str, Callable] = {
    "vortex": _vortex,
    "taylor_green": _taylor_green,
    "shear": _shear,
    "zero": _zero,
}


def write_coefficients(path, u: np.ndarray, level: int, t: float = 0.0) -> None:
    """Plain-text coefficient file: one header line, then one value per line."""
    with open(path, "w") as fh:
        fh.write(f"# level={level} n={len(u)} t={float(t)!r}\n")
        fh.writelines(f"{float(v)!r}\n" for v in u)


def read_coefficients(path) -> tuple[np.ndarray, int]:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing coefficient header")
        meta = dict(item.split("=", 1) for item in header[1:].split())
        values = np.array([float(line) for line in fh if line.strip()])
    level, n = int(meta["level"]), int(meta["n"])
    if len(values) != n:
        raise ValueError(f"{path}: header announces {n} values, found {len(values)}")
    return values, level


def initial_velocity(ops: OperatorSet, spec: str, amplitude: float = 1.0) -> np.ndarray:
    """P_h u0 for a builtin field name, or the stored coefficients of a file."""
    if spec in INITIAL_FIELDS:
        if spec == "zero":
            return np.zeros(ops.n_velocity)
        return amplitude * project_function(ops, INITIAL_FIELDS[spec])
    path = Path(spec)
    if not path.is_file():
        raise ValueError(f"unknown initial field {spec!r}; builtins are {sorted(INITIAL_FIELDS)}")
    u, level = read_coefficients(path)
    if level != ops.mesh.level or len(u) != ops.n_velocity:
        raise ValueError(f"{spec}: coefficients for level {level} do not fit mesh level {ops.mesh.level}")
    return amplitude * ops.mass_solver.solve(ops.M @ u)[0]


# ---------------------------------------------------------------------------
# configuration and state

_NAMED_NOISE: dict[str, NoiseModel] = {}


def resolve_noise(noise) -> NoiseModel:
    """NoiseModel from a family name or a model.

    Named families are built once, with their kappa estimate, and cached so
    that assembly caches keyed on the model stay valid.
    """
    if isinstance(noise, NoiseModel):
        return noise
    if noise not in _NAMED_NOISE:
        _NAMED_NOISE[noise] = build_noise_family(noise).with_kappa(KAPPA_LEVEL)
    return _NAMED_NOISE[noise]


@dataclass(frozen=True)
class SimConfig:
    T: float = 0.1
    steps: int = 64
    level: int = 3
    noise: object = "default"
    u0: str = "vortex"
    u0_amplitude: float = 1.0
    seed: int = 0
    sample: int = 0
    nonlinearity: bool = True
    ito_correction: bool = True
    noise_on: bool = True
    snapshot_stride: int = 1
    pressure_gauge: str = "mean"
    forcing: Callable | None = field(default=None, compare=False)  # manufactured solutions only

    def __post_init__(self):
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ValueError("final time T must be positive")
        if self.steps < 1:
            raise ValueError("need at least one time step")
        if self.level < 0:
            raise ValueError("mesh level must be nonnegative")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot stride must be >= 1")
        if self.pressure_gauge not in ("mean", "pin"):
            raise ValueError(f"unknown pressure gauge {self.pressure_gauge!r}; use 'mean' or 'pin'")

    @property
    def dt(self) -> float:
        return self.T / self.steps

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)


@dataclass
class TrajectoryState:
    u: np.ndarray
    q: np.ndarray
    t: float
    step: int
    dissipation: float = 0.0  # running sum of dt * u^T K u (implicit point)


@dataclass
class Trajectory:
    config: SimConfig
    level: int
    times: np.ndarray
    l2: np.ndarray
    h1: np.ndarray
    dissipation: np.ndarray
    snapshot_steps: np.ndarray
    snapshots: np.ndarray  # (n_snapshots, n_velocity)
    final: TrajectoryState
    initial_energy: float
    kappa_estimate: float | None = None

    @property
    def steps(self) -> int:
        return len(self.times) - 1


# ---------------------------------------------------------------------------
# stepping


def step_rhs(ops: OperatorSet, u: np.ndarray, dt: float, dW, *, nonlinearity=True, ito_correction=True, noise=True, forcing=None) -> np.ndarray:
    rhs = ops.M @ u
    if noise and ops.T:
        if ito_correction:
            mass = ops.mass_solver
            for T in ops.T:
                rhs += 0.5 * dt * (T @ mass.solve(T @ u)[0])
        for n, T in enumerate(ops.T):
            rhs += dW[n] * (T @ u)
    if nonlinearity:
        rhs -= dt * eval_nonlinear(ops, u)
    if forcing is not None:
        rhs += dt * forcing
    return rhs


def step(state: TrajectoryState, ops: OperatorSet, dt: float, dW, **flags) -> TrajectoryState:
    """One drift-implicit Euler-Maruyama step; raises NonFiniteError on blow-up."""
    dW = np.asarray(dW, dtype=float)
    if flags.get("noise", True) and len(dW) != len(ops.T):
        raise ValueError(f"increment row has {len(dW)} entries for {len(ops.T)} noise modes")
    rhs = step_rhs(ops, state.u, dt, dW, **flags)
    if not np.all(np.isfinite(rhs)):
        raise NonFiniteError(state.step + 1, "right-hand side")
    try:
        u, q = ops.step_solver(dt).solve(rhs)
    except SolverError as exc:
        if "non-finite" in str(exc):
            raise NonFiniteError(state.step + 1) from exc
        raise
    div = ops.divergence_residual(u)
    if div > DIVERGENCE_TOL:
        raise SolverError(f"divergence constraint violated at step {state.step + 1}: {div:.2e}")
    diss = state.dissipation + dt * float(u @ (ops.K @ u))
    return TrajectoryState(u, q, state.t + dt, state.step + 1, diss)


def simulate(config: SimConfig, path: BrownianDriver | None = None, ops: OperatorSet | None = None, u_init: np.ndarray | None = None) -> Trajectory:
    """Run one trajectory; a deterministic function of (config, path)."""
    noise = resolve_noise(config.noise)
    ops = ops or assemble_level(config.level, noise, config.pressure_gauge)
    N = noise.N if config.noise_on else 0
    if path is None:
        path = sample_path(config.seed, config.sample, config.steps, config.dt, noise.N)
    if path.steps != config.steps or (config.noise_on and path.N != noise.N):
        raise ValueError(f"Brownian path has shape {path.increments.shape}, expected ({config.steps}, {noise.N})")
    if not np.isclose(path.dt, config.dt, rtol=1e-12):
        raise ValueError(f"Brownian path step {path.dt} does not match dt {config.dt}")
    if N and noise.kappa_estimate is not None and noise.kappa_estimate >= KAPPA_WARN:
        log.warning("kappa_estimate %.3f >= %.2f: explicit Ito correction may be unstable", noise.kappa_estimate, KAPPA_WARN)
    u0 = u_init if u_init is not None else initial_velocity(ops, config.u0, config.u0_amplitude)
    forcing = ops.load_vector(config.forcing) if config.forcing is not None else None
    flags = dict(nonlinearity=config.nonlinearity, ito_correction=config.ito_correction, noise=bool(N), forcing=forcing)

    dt = config.dt
    state = TrajectoryState(u0.copy(), np.zeros(ops.B.shape[0]), 0.0, 0)
    n = config.steps
    times = np.empty(n + 1)
    l2 = np.empty(n + 1)
    h1 = np.empty(n + 1)
    diss = np.empty(n + 1)
    snap_steps = list(range(0, n + 1, config.snapshot_stride))
    if snap_steps[-1] != n:
        snap_steps.append(n)
    snaps = np.empty((len(snap_steps), ops.n_velocity))
    times[0], l2[0], h1[0], diss[0] = 0.0, ops.l2_norm(u0), ops.h1_seminorm(u0), 0.0
    snaps[0] = u0
    k = 1
    for m in range(n):
        state = step(state, ops, dt, path.increments[m], **flags)
        times[m + 1] = (m + 1) * dt
        l2[m + 1] = ops.l2_norm(state.u)
        h1[m + 1] = ops.h1_seminorm(state.u)
        diss[m + 1] = state.dissipation
        if k < len(snap_steps) and snap_steps[k] == m + 1:
            snaps[k] = state.u
            k += 1
    return Trajectory(
        config, ops.mesh.level, times, l2, h1, diss, np.array(snap_steps), snaps, state, l2[0] ** 2, noise.kappa_estimate
    )


def solve_navier_stokes(config: SimConfig, ops: OperatorSet | None = None) -> np.ndarray:
    """Deterministic backward-Euler Navier-Stokes solver (no noise machinery); final velocity."""
    ops = ops or assemble_level(config.level, gauge=config.pressure_gauge)
    u = initial_velocity(ops, config.u0, config.u0_amplitude)
    dt = config.dt
    solver = ops.step_solver(dt)
    for _ in range(config.steps):
        rhs = ops.M @ u
        if config.nonlinearity:
            rhs = rhs - dt * eval_nonlinear(ops, u)
        u = solver.solve(rhs)[0]
    return u


# ---------------------------------------------------------------------------
# energy ledger


@dataclass(frozen=True)
class EnergyReport:
    residual: np.ndarray
    max_abs: float
    dissipation_rule: str = DISSIPATION_RULE


def energy_report(traj: Trajectory) -> EnergyReport:
    """r_m = ||u^m||^2 + 2 sum_{j=1..m} dt ||grad u^j||^2 - ||P_h u0||^2."""
    r = traj.l2**2 + 2.0 * traj.dissipation - traj.initial_energy
    r[0] = 0.0
    return EnergyReport(r, float(np.max(np.abs(r))))


def step_energy_defect(ops: OperatorSet, u_old: np.ndarray, u_new: np.ndarray, dt: float) -> float:
    """||u+||^2 - ||u||^2 + 2 dt ||grad u+||^2 + ||u+ - u||^2, zero for the pure Stokes step."""
    d = u_new - u_old
    return float(u_new @ (ops.M @ u_new) - u_old @ (ops.M @ u_old) + 2 * dt * (u_new @ (ops.K @ u_new)) + d @ (ops.M @ d))


@dataclass
class EnergyRefinement:
    """Max energy residual per step count, all driven by one nested Brownian path."""

    steps: list
    dts: list
    max_residual: list
    slope: float
    pairwise: tuple

    @property
    def decreasing(self) -> bool:
        return all(a > b for a, b in zip(self.max_residual, self.max_residual[1:]))


def energy_refinement(config: SimConfig, step_counts=(64, 128, 256, 512)) -> EnergyRefinement:
    """Refine dt at fixed level and fixed path; the path is drawn on the finest grid."""
    from .rates import fit_eoc

    counts = sorted(int(c) for c in step_counts)
    finest = counts[-1]
    noise = resolve_noise(config.noise)
    base = sample_path(config.seed, config.sample, finest, config.T / finest, noise.N)
    residuals, dts = [], []
    for n in counts:
        cfg = config.with_(steps=n)
        traj = simulate(cfg, base.coarsen(finest // n))
        residuals.append(energy_report(traj).max_abs)
        dts.append(cfg.dt)
    if len(counts) >= 2 and all(r > 0 for r in residuals):
        e = fit_eoc(residuals, dts)
        slope, pairwise = e.slope, e.pairwise
    else:
        slope, pairwise = float("nan"), ()
    return EnergyRefinement(counts, dts, residuals, slope, pairwise)


def deterministic_energy_defect(config: SimConfig) -> float:
    """Max relative defect of the exact implicit-Euler energy identity (noise and nonlinearity off)."""
    cfg = config.with_(noise_on=False, nonlinearity=False, snapshot_stride=1)
    ops = assemble_level(cfg.level, resolve_noise(cfg.noise), cfg.pressure_gauge)
    traj = simulate(cfg, ops=ops)
    worst = 0.0
    for a, b in zip(traj.snapshots[:-1], traj.snapshots[1:]):
        scale = a @ (ops.M @ a)
        if scale > 0:
            worst = max(worst, abs(step_energy_defect(ops, a, b, cfg.dt)) / scale)
    return worst


TRAJECTORY_HEADER = ["step", "t[time]", "l2_norm[L2]", "h1_seminorm[H1]", "energy_residual[L2^2]"]


def write_trajectory_csv(traj: Trajectory, path) -> None:
    import csv

    r = energy_report(traj).residual
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for m in range(len(traj.times)):
            w.writerow([m, repr(float(traj.times[m])), repr(float(traj.l2[m])), repr(float(traj.h1[m])), repr(float(r[m]))])


def write_snapshots(traj: Trajectory, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for s, u in zip(traj.snapshot_steps, traj.snapshots):
        p = directory / f"u_{int(s):06d}.txt"
        write_coefficients(p, u, traj.level, traj.times[s])
        out.append(p)
    return out
