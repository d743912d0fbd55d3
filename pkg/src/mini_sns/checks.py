"""Algebraic identity suite on random discretely divergence-free vectors.

Every identity is exact for the discrete operators, so each check reports a
relative defect that should sit at round-off level.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .noise import NoiseModel
from .operators import (
    OperatorSet,
    apply_discrete_stokes,
    apply_transport,
    assemble_level,
    eval_nonlinear,
    helmholtz_project,
    hs_norm_sq,
    ito_correction,
    project_nonlinear,
    random_solenoidal,
)

IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class CheckResult:
    name: str
    level: int
    defect: float  # max relative defect over the sampled vectors
    tol: float = IDENTITY_TOL

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.defect) and self.defect <= self.tol)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} level={self.level} {self.name}: defect {self.defect:.2e} (tol {self.tol:.0e})"


def _rel(value: float, scale: float) -> float:
    return abs(value) / scale if scale > 0 else abs(value)


def check_level(ops: OperatorSet, count: int = 20, seed: int = 0, tol: float = IDENTITY_TOL) -> list[CheckResult]:
    rng = np.random.default_rng([seed, ops.mesh.level])
    M, K = ops.M, ops.K
    V = random_solenoidal(ops, rng, count)
    defects: dict[str, list[float]] = {
        "transport skew-symmetry": [],
        "nonlinearity neutrality": [],
        "coercivity relation": [],
        "ito quadratic form": [],
        "ito Hilbert-Schmidt sum": [],
        "projection idempotency": [],
        "projection Pythagoras": [],
    }
    raw = rng.standard_normal((ops.n_velocity, count))
    P_raw = helmholtz_project(ops, raw)[0]
    PP_raw = helmholtz_project(ops, P_raw)[0]
    for j in range(count):
        v = V[:, j]
        Mv = M @ v
        vv = v @ Mv
        # skew-symmetry of every transport operator and the per-mode Ito identity
        for n in range(len(ops.T)):
            Lv = apply_transport(ops, n, v)
            LLv = apply_transport(ops, n, Lv)
            norm_Lv_sq = Lv @ (M @ Lv)
            defects["transport skew-symmetry"].append(_rel(Lv @ Mv, np.sqrt(norm_Lv_sq * vv)))
            defects["ito quadratic form"].append(_rel(LLv @ Mv + norm_Lv_sq, norm_Lv_sq))
        g = eval_nonlinear(ops, v)
        defects["nonlinearity neutrality"].append(_rel(g @ v, np.abs(g) @ np.abs(v)))
        ito = ito_correction(ops, v)
        hs = hs_norm_sq(ops, v)
        defects["ito Hilbert-Schmidt sum"].append(_rel(hs + 2.0 * (ito @ Mv), hs))
        # every bracket is an L2 pairing of projected fields; |v|_1^2 is v^T K v
        Av = apply_discrete_stokes(ops, v)
        PGv = project_nonlinear(ops, v)
        terms = np.array([-2.0 * (Av @ Mv), 2.0 * (ito @ Mv), -2.0 * (PGv @ Mv), hs, 2.0 * (v @ (K @ v))])
        defects["coercivity relation"].append(_rel(terms.sum(), np.abs(terms).sum()))
        p, pp = P_raw[:, j], PP_raw[:, j]
        f = raw[:, j]
        defects["projection idempotency"].append(np.sqrt(_rel((pp - p) @ (M @ (pp - p)), p @ (M @ p))))
        ff, p2, r2 = f @ (M @ f), p @ (M @ p), (f - p) @ (M @ (f - p))
        defects["projection Pythagoras"].append(_rel(ff - p2 - r2, ff))
    out = []
    for name, vals in defects.items():
        if not vals:  # no noise modes: transport identities are vacuous
            continue
        out.append(CheckResult(name, ops.mesh.level, float(max(vals)), tol))
    return out


def run_identity_suite(levels=(1, 2, 3, 4), noise: NoiseModel | None = None, count: int = 20, seed: int = 0, tol: float = IDENTITY_TOL) -> tuple[list[CheckResult], float]:
    """All identities on every level; returns the results and the wall time in seconds."""
    if noise is None:
        from .integrator import resolve_noise

        noise = resolve_noise("default")
    t0 = time.perf_counter()
    results = []
    for lev in levels:
        results.extend(check_level(assemble_level(lev, noise), count, seed, tol))
    return results, time.perf_counter() - t0
