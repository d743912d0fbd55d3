"""Monte Carlo strong-convergence studies with common random numbers.

Every sample draws one Brownian path on the shared time grid and drives the
reference level and every coarse level with it.  Errors are exact
L2 / Hdot^1 distances between nested MINI fields (mixed coarse/reference
matrices from :mod:`mini_sns.transfer`).
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .integrator import NonFiniteError, SimConfig, resolve_noise, simulate
from .noise import sample_path
from .operators import assemble_level
from .rates import EOC, fit_eoc
from .transfer import transfer_between

log = logging.getLogger(__name__)

MAX_ABORT_FRACTION = 0.10

__all__ = ["StudyConfig", "ErrorReport", "SampleErrors", "run_sample", "run_convergence_study", "fit_eoc", "EOC"]


class StudyError(RuntimeError):
    pass


@dataclass(frozen=True)
class StudyConfig:
    levels: tuple = (2, 3, 4, 5)
    reference_level: int = 6
    T: float = 0.1
    steps: int = 64
    samples: int = 16
    base_seed: int = 0
    noise: object = "default"
    u0: str = "vortex"
    u0_amplitude: float = 1.0
    nonlinearity: bool = True
    ito_correction: bool = True
    noise_on: bool = True
    snapshot_stride: int = 1
    pressure_gauge: str = "mean"
    threads: int = 1

    def __post_init__(self):
        levels = tuple(int(v) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("need at least one coarse level")
        if any(v < 1 for v in levels) or len(set(levels)) != len(levels):
            raise ValueError("coarse levels must be distinct and >= 1")
        if self.reference_level < max(levels):
            raise ValueError("reference level must be at least as fine as every coarse level")
        if self.samples < 1 or self.steps < 1 or not self.T > 0:
            raise ValueError("samples, steps and T must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def sim_config(self, level: int, sample: int = 0) -> SimConfig:
        return SimConfig(
            T=self.T,
            steps=self.steps,
            level=level,
            noise=self.noise,
            u0=self.u0,
            u0_amplitude=self.u0_amplitude,
            seed=self.base_seed,
            sample=sample,
            nonlinearity=self.nonlinearity,
            ito_correction=self.ito_correction,
            noise_on=self.noise_on,
            snapshot_stride=self.snapshot_stride,
            pressure_gauge=self.pressure_gauge,
        )


@dataclass(frozen=True)
class SampleErrors:
    """Per-sample squared errors: max over snapshots (L2) and time integral (Hdot^1)."""

    sample: int
    sup_l2_sq: dict
    int_h1_sq: dict
    aborted: bool = False
    reason: str = ""


def _squared_errors(cfg: StudyConfig, level: int, ref_traj, traj) -> tuple[float, float]:
    ref_ops = assemble_level(cfg.reference_level, resolve_noise(cfg.noise), cfg.pressure_gauge)
    U = ref_traj.snapshots.T
    if level == cfg.reference_level:
        D = U - traj.snapshots.T
        l2 = np.einsum("ij,ij->j", D, ref_ops.M @ D)
        h1 = np.einsum("ij,ij->j", D, ref_ops.K @ D)
    else:
        tr = transfer_between(assemble_level(level, resolve_noise(cfg.noise), cfg.pressure_gauge), ref_ops)
        C = traj.snapshots.T
        l2 = tr.l2_distance_sq(U, C)
        h1 = tr.h1_distance_sq(U, C)
    l2 = np.maximum(l2, 0.0)
    h1 = np.maximum(h1, 0.0)
    dt_snap = cfg.T / cfg.steps * cfg.snapshot_stride
    # right-point rule on the snapshot grid (snapshot 0 excluded)
    return float(l2.max()), math.fsum(dt_snap * h1[1:])


def run_sample(cfg: StudyConfig, sample: int) -> SampleErrors:
    """Simulate one sample on the reference and every coarse level with one shared path."""
    noise = resolve_noise(cfg.noise)
    dt = cfg.T / cfg.steps
    path = sample_path(cfg.base_seed, sample, cfg.steps, dt, noise.N)
    try:
        ref = simulate(cfg.sim_config(cfg.reference_level, sample), path)
        sup, integ = {}, {}
        for level in cfg.levels:
            traj = simulate(cfg.sim_config(level, sample), path)
            sup[level], integ[level] = _squared_errors(cfg, level, ref, traj)
    except NonFiniteError as exc:
        log.warning("sample %d aborted: %s", sample, exc)
        return SampleErrors(sample, {}, {}, aborted=True, reason=str(exc))
    return SampleErrors(sample, sup, integ)


def _sqrt_mean_with_se(values: np.ndarray) -> tuple[float, float]:
    """sqrt(mean X) and its delta-method standard error."""
    m = math.fsum(values) / len(values)
    if len(values) < 2:
        return math.sqrt(m), float("nan")
    var = math.fsum((values - m) ** 2) / (len(values) - 1)
    se_mean = math.sqrt(var / len(values))
    root = math.sqrt(m)
    return root, (se_mean / (2.0 * root) if root > 0 else 0.0)


@dataclass
class ErrorReport:
    config: StudyConfig
    levels: list
    hs: list
    E_C: list
    E_H1: list
    combined: list
    se_C: list
    se_H1: list
    se_combined: list
    samples_used: int
    aborted: int
    slope: float = float("nan")  # fitted rho-hat; NaN means the fit was skipped
    slope_C: float = float("nan")
    slope_H1: float = float("nan")
    pairwise: tuple = ()
    fit_note: str = ""
    per_sample: list = field(default_factory=list, repr=False)
    warnings: list = field(default_factory=list)

    @property
    def strictly_decreasing(self) -> bool:
        return all(a > b for a, b in zip(self.combined, self.combined[1:]))

    def se_below_half_drop(self) -> bool:
        """Each level-to-level drop of the combined error exceeds twice both standard errors."""
        for i in range(len(self.combined) - 1):
            drop = self.combined[i] - self.combined[i + 1]
            if not max(self.se_combined[i], self.se_combined[i + 1]) < 0.5 * drop:
                return False
        return True


def _aggregate(cfg: StudyConfig, results: list[SampleErrors]) -> ErrorReport:
    good = [r for r in sorted(results, key=lambda r: r.sample) if not r.aborted]
    aborted = len(results) - len(good)
    if aborted > MAX_ABORT_FRACTION * len(results):
        raise StudyError(f"{aborted} of {len(results)} samples aborted (limit {MAX_ABORT_FRACTION:.0%})")
    levels = list(cfg.levels)
    hs = [math.sqrt(2.0) / 2**lev for lev in levels]
    E_C, E_H1, comb, se_C, se_H1, se_comb = [], [], [], [], [], []
    for lev in levels:
        X = np.array([r.sup_l2_sq[lev] for r in good])
        Y = np.array([r.int_h1_sq[lev] for r in good])
        c, sc = _sqrt_mean_with_se(X)
        g, sg = _sqrt_mean_with_se(Y)
        E_C.append(c)
        E_H1.append(g)
        comb.append(c + g)
        se_C.append(sc)
        se_H1.append(sg)
        if len(good) > 1 and c > 0 and g > 0:
            # delta method for sqrt(mean X) + sqrt(mean Y), including the X-Y covariance
            n = len(good)
            cov = math.fsum((X - X.mean()) * (Y - Y.mean())) / (n - 1) / n
            var = sc**2 + sg**2 + 2.0 * cov / (4.0 * c * g)
            se_comb.append(math.sqrt(max(var, 0.0)))
        else:
            se_comb.append(sc + sg if len(good) > 1 else float("nan"))
    rep = ErrorReport(cfg, levels, hs, E_C, E_H1, comb, se_C, se_H1, se_comb, len(good), aborted, per_sample=good)
    if cfg.snapshot_stride > 1:
        rep.warnings.append(f"snapshot stride {cfg.snapshot_stride} > 1: sup-in-time and time-integral norms are undersampled")
    if len(levels) < 2 or any(v <= 0.0 for v in comb):
        rep.fit_note = "fit skipped: fewer than two levels or a zero error"
    else:
        e = fit_eoc(comb, hs)
        rep.slope, rep.pairwise = e.slope, e.pairwise
        if all(v > 0 for v in E_C) and all(v > 0 for v in E_H1):
            rep.slope_C = fit_eoc(E_C, hs).slope
            rep.slope_H1 = fit_eoc(E_H1, hs).slope
    for w in rep.warnings:
        log.warning(w)
    return rep


def run_convergence_study(cfg: StudyConfig, progress=None) -> ErrorReport:
    """Run all samples (in parallel when ``cfg.threads > 1``) and aggregate."""
    noise = resolve_noise(cfg.noise)
    if cfg.noise_on and noise.N:
        if noise.kappa_estimate is None:
            log.info("noise family has no kappa estimate; the study proceeds without the smallness check")
        elif noise.kappa_estimate >= 1.0:
            raise StudyError(f"kappa_estimate {noise.kappa_estimate:.3f} >= 1: noise smallness violated")
    # assemble and factorize up front so worker threads only read shared operators
    for lev in set(cfg.levels) | {cfg.reference_level}:
        ops = assemble_level(lev, noise, cfg.pressure_gauge)
        ops.step_solver(cfg.T / cfg.steps)
        ops.mass_solver
        if lev != cfg.reference_level:
            transfer_between(ops, assemble_level(cfg.reference_level, noise, cfg.pressure_gauge))

    def task(s):
        r = run_sample(cfg, s)
        if progress is not None:
            progress(s)
        return r

    if cfg.threads == 1:
        results = [task(s) for s in range(cfg.samples)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(task, range(cfg.samples)))
    return _aggregate(cfg, results)


REPORT_HEADER = [
    "level",
    "h[length]",
    "E_C[L2]",
    "E_H1[H1*time^0.5]",
    "combined[mixed]",
    "se_E_C[L2]",
    "se_E_H1[H1*time^0.5]",
    "se_combined[mixed]",
    "samples",
    "aborted",
    "fitted_slope[log-log]",
]


def write_report_csv(rep: ErrorReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for i, lev in enumerate(rep.levels):
            w.writerow(
                [lev]
                + [repr(float(v)) for v in (rep.hs[i], rep.E_C[i], rep.E_H1[i], rep.combined[i], rep.se_C[i], rep.se_H1[i], rep.se_combined[i])]
                + [rep.samples_used, rep.aborted, repr(float(rep.slope))]
            )


def write_sample_csv(rep: ErrorReport, path) -> None:
    """Per-sample squared errors (one row per sample and level)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "level", "sup_l2_sq[L2^2]", "int_h1_sq[H1^2*time]"])
        for r in rep.per_sample:
            for lev in rep.levels:
                w.writerow([r.sample, lev, repr(float(r.sup_l2_sq[lev])), repr(float(r.int_h1_sq[lev]))])
