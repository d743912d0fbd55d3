"""Spectral laboratory for the discrete Stokes operator.

Continuous operators (A, P and the Hdot^beta scale) are replaced by their
discrete counterparts on a finer nested mesh, the *surrogate*, ``gap``
levels above the mesh under test.  Norms between smoothness scales are
largest singular values of operators written in M-orthonormal Stokes
eigenbases and rescaled by powers of the eigenvalues.  Where only integer
powers are involved the same norms are computed matrix-free by Lanczos,
which reaches finer surrogates than dense linear algebra.
"""

from __future__ import annotations

import csv
import logging
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from .operators import OperatorSet, assemble_level, project_nonlinear, random_solenoidal
from .rates import fit_eoc
from .transfer import Transfer, transfer_between

log = logging.getLogger(__name__)

DENSE_GUARD = 6500  # constrained velocity dofs; level 5 (6018) is the largest dense level
FINE_MODE_RATIO = 2  # truncated fine spectra keep this many modes per coarse mode
SCALING_LIMIT = 1e12


class DimensionGuardError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Smallest eigenpairs of K x = lambda M x on {B x = 0}, eigenvectors M-orthonormal."""

    level: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    complete: bool

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def coordinates(self, v: np.ndarray, ops: OperatorSet) -> np.ndarray:
        return self.eigenvectors.T @ (ops.M @ v)


_DEC_CACHE: dict = {}
_LAPLACE_CACHE: dict = {}
_DEC_LOCK = threading.Lock()


def clear_caches() -> None:
    with _DEC_LOCK:
        _DEC_CACHE.clear()
        _LAPLACE_CACHE.clear()


def solenoidal_basis(ops: OperatorSet) -> np.ndarray:
    """Euclidean-orthonormal basis of ker B (dense)."""
    Bt = ops.B[1:].toarray().T  # one row dropped: constants are in the left kernel of B
    r = Bt.shape[1]
    Q, _ = sla.qr(Bt, mode="full", overwrite_a=True, check_finite=False)
    return np.ascontiguousarray(Q[:, r:])


def stokes_eigendecomposition(level: int, count: int | None = None, dense_guard: int = DENSE_GUARD) -> SpectralDecomposition:
    """Eigenpairs of the discrete Stokes operator at ``level``.

    Dense (all pairs, optionally truncated to ``count``) when the number of
    constrained dofs is within ``dense_guard``.  Beyond the guard only a
    partial spectrum is available: the ``count`` smallest pairs by
    shift-invert Lanczos with Stokes saddle solves.
    """
    ops = assemble_level(level)
    n = ops.n_velocity
    if count is None and n > dense_guard:
        raise DimensionGuardError(
            f"level {level} has {n} constrained dofs > dense guard {dense_guard}; request a partial spectrum"
        )
    with _DEC_LOCK:
        full = _DEC_CACHE.get((level, None))
        if full is not None:
            return full if count is None else _truncate(full, count)
        if count is not None and (level, count) in _DEC_CACHE:
            return _DEC_CACHE[(level, count)]
    if n <= dense_guard:
        Z = solenoidal_basis(ops)
        Kz = Z.T @ (ops.K @ Z)
        Mz = Z.T @ (ops.M @ Z)
        lam, Y = sla.eigh(Kz, Mz, overwrite_a=True, overwrite_b=True, check_finite=False)
        del Kz, Mz
        dec = SpectralDecomposition(level, lam, Z @ Y, complete=True)
        with _DEC_LOCK:
            _DEC_CACHE[(level, None)] = dec
        return dec if count is None else _truncate(dec, count)
    dec = _lanczos_eigendecomposition(ops, level, count)
    with _DEC_LOCK:
        _DEC_CACHE[(level, count)] = dec
    return dec


def _truncate(dec: SpectralDecomposition, count: int) -> SpectralDecomposition:
    if count >= dec.count:
        return dec
    return SpectralDecomposition(dec.level, dec.eigenvalues[:count], dec.eigenvectors[:, :count], complete=False)


def _lanczos_eigendecomposition(ops: OperatorSet, level: int, count: int) -> SpectralDecomposition:
    solver = ops.stokes_solver
    n = ops.n_velocity
    if count >= n // 2:
        raise DimensionGuardError(f"partial spectrum of {count} modes at level {level} is not partial")
    opinv = LinearOperator((n, n), matvec=lambda x: solver.solve(x)[0], dtype=float)
    log.info("shift-invert Lanczos for %d Stokes modes at level %d (%d dofs)", count, level, n)
    try:
        lam, X = eigsh(ops.K, k=count, M=ops.M, sigma=0.0, OPinv=opinv, tol=1e-9)
    except Exception as exc:  # ARPACK raises its own error types
        raise RuntimeError(f"eigensolver did not converge at level {level}: {exc}") from exc
    order = np.argsort(lam)
    lam, X = lam[order], X[:, order]
    # restore exact M-orthonormality lost to the Lanczos tolerance
    L = np.linalg.cholesky(X.T @ (ops.M @ X))
    X = sla.solve_triangular(L, X.T, lower=True).T
    return SpectralDecomposition(level, lam, np.ascontiguousarray(X), complete=False)


def fractional_apply(dec: SpectralDecomposition, alpha: float, v: np.ndarray, ops: OperatorSet | None = None, tol: float = 1e-8) -> np.ndarray:
    """A_h^alpha v on the span of the computed eigenvectors.

    The part of v outside that span is discarded; a warning is logged when its
    relative M-norm exceeds ``tol``.
    """
    if not -1.0 <= alpha <= 1.0:
        raise ValueError("fractional exponent must lie in [-1, 1]")
    ops = ops or assemble_level(dec.level)
    Mv = ops.M @ v
    c = dec.eigenvectors.T @ Mv
    nv2 = float(np.sum(v * Mv))
    if nv2 > 0:
        resid = np.sqrt(max(nv2 - float(np.sum(c * c)), 0.0) / nv2)
        if resid > tol:
            log.warning("fractional_apply: truncation residual %.2e exceeds %.1e (imprecise)", resid, tol)
    return dec.eigenvectors @ ((dec.eigenvalues**alpha)[:, None] * c if c.ndim == 2 else dec.eigenvalues**alpha * c)


# ---------------------------------------------------------------------------
# surrogate pairs and the smoothing operator


@dataclass(frozen=True, eq=False)
class SurrogatePair:
    """A coarse decomposition (complete) and a fine surrogate decomposition.

    ``proj[j, k] = <x_k^fine, x_j^coarse>`` represents the coarse Helmholtz
    projection in the two eigenbases; ``stiff_proj`` is the same with
    gradients.
    """

    coarse: SpectralDecomposition
    fine: SpectralDecomposition
    transfer: Transfer
    proj: np.ndarray = field(repr=False)
    stiff_proj: np.ndarray = field(repr=False)

    @property
    def gap(self) -> int:
        return self.fine.level - self.coarse.level


def surrogate_pair(level: int, gap: int = 2, fine_modes: int | None = None) -> SurrogatePair:
    """Pair (level, level + gap).

    The fine spectrum is complete when dense computation is possible;
    otherwise (or when ``fine_modes`` is given) it is truncated to
    ``fine_modes`` modes, by default FINE_MODE_RATIO per coarse mode.
    """
    if gap < 1:
        raise ValueError("surrogate level gap must be >= 1")
    coarse = stokes_eigendecomposition(level)
    fine_ops = assemble_level(level + gap)
    if fine_modes is None and fine_ops.n_velocity > DENSE_GUARD:
        fine_modes = FINE_MODE_RATIO * coarse.count
    fine = stokes_eigendecomposition(level + gap, count=fine_modes)
    tr = transfer_between(assemble_level(level), fine_ops)
    Xc = coarse.eigenvectors
    proj = Xc.T @ (tr.mass @ fine.eigenvectors)
    stiff = Xc.T @ (tr.stiffness @ fine.eigenvectors)
    return SurrogatePair(coarse, fine, tr, proj, stiff)


@dataclass(frozen=True, eq=False)
class SmoothingOperator:
    """J_{h,alpha} = A_h^alpha P_h A_fine^{-alpha}, mapping fine fields to coarse ones."""

    pair: SurrogatePair
    alpha: float
    eig: np.ndarray  # eigen-coordinates, (coarse count, fine count)

    def matrix(self) -> np.ndarray:
        """Dense matrix from fine free coefficients to coarse free coefficients."""
        p = self.pair
        return p.coarse.eigenvectors @ self.eig @ (p.transfer.fine.M @ p.fine.eigenvectors).T

    def apply(self, v_fine: np.ndarray) -> np.ndarray:
        p = self.pair
        c = p.fine.eigenvectors.T @ (p.transfer.fine.M @ v_fine)
        return p.coarse.eigenvectors @ (self.eig @ c)


def build_smoothing_operator(pair: SurrogatePair, alpha: float) -> SmoothingOperator:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    eig = (pair.coarse.eigenvalues[:, None] ** alpha) * pair.proj * (pair.fine.eigenvalues[None, :] ** (-alpha))
    return SmoothingOperator(pair, float(alpha), eig)


def _check_scaling(lam: np.ndarray) -> None:
    if lam[0] <= 0.0:
        raise ValueError("spectral scaling needs positive eigenvalues")
    ratio = lam[-1] / lam[0]
    if ratio > SCALING_LIMIT:
        log.warning("spectral scaling ill-conditioned: lambda_max / lambda_min = %.2e", ratio)


def measure_operator_norm(op: np.ndarray, source: SpectralDecomposition, target: SpectralDecomposition | None, beta: float, gamma: float = 0.0) -> float:
    """Norm of ``op`` from the source Hdot^beta scale to the target Hdot^gamma scale.

    ``op`` is written in eigen-coordinates (target count x source count).
    With ``target=None`` the target norm is the Euclidean norm of the given
    coordinates (an L2 norm for M-orthonormal bases).
    """
    _check_scaling(source.eigenvalues)
    scaled = op * source.eigenvalues[None, :] ** (-beta / 2.0)
    if target is not None:
        _check_scaling(target.eigenvalues)
        scaled = target.eigenvalues[:, None] ** (gamma / 2.0) * scaled
    return float(np.linalg.norm(scaled, 2))


def _top_of_scaled_gram(gram: np.ndarray, lam: np.ndarray, beta: float) -> float:
    _check_scaling(lam)
    s = lam ** (-beta / 2.0)
    G = s[:, None] * gram * s[None, :]
    n = len(G)
    try:
        top = sla.eigh(G, eigvals_only=True, subset_by_index=[n - 1, n - 1], check_finite=False)[0]
    except np.linalg.LinAlgError:
        # the MRRR driver occasionally fails on clustered spectra (e.g. projections)
        top = np.linalg.eigvalsh(G)[-1]
    return float(np.sqrt(max(top, 0.0)))


def identity_minus_norm(pair: SurrogatePair, op: np.ndarray | None, beta: float, target: str = "l2") -> float:
    """Norm of I - X from fine Hdot^beta to L2 (or to Hdot^1 with ``target='h1'``).

    X maps fine fields to coarse solenoidal fields and is given in
    eigen-coordinates; ``op=None`` means X = P_h.  In L2 the identity
    ||(I - X) v||^2 = ||v||^2 - ||P_h v||^2 + ||(P_h - X) v||^2 is used,
    valid since v - P_h v is orthogonal to every coarse solenoidal field.
    """
    P = pair.proj
    X = P if op is None else op
    if target == "l2":
        gram = np.eye(pair.fine.count) - P.T @ P
        if op is not None:
            D = P - op
            gram += D.T @ D
    elif target == "h1":
        S = pair.stiff_proj
        cross = X.T @ S
        gram = np.diag(pair.fine.eigenvalues) - cross - cross.T + X.T @ (pair.coarse.eigenvalues[:, None] * X)
    else:
        raise ValueError(f"unknown target norm {target!r}")
    return _top_of_scaled_gram(0.5 * (gram + gram.T), pair.fine.eigenvalues, beta)


def smoothing_commutator(pair: SurrogatePair, alpha: float) -> np.ndarray:
    """J A_fine - A_h J in eigen-coordinates."""
    J = build_smoothing_operator(pair, alpha).eig
    return J * pair.fine.eigenvalues[None, :] - pair.coarse.eigenvalues[:, None] * J


# ---------------------------------------------------------------------------
# matrix-free norms (Lanczos)


def _largest_generalized(apply_h, M: sp.spmatrix, tol: float = 1e-10) -> float:
    """Largest eigenvalue of H w = mu M w for a symmetric positive semidefinite H."""
    n = M.shape[0]
    lu = splu(sp.csc_matrix(M))
    H = LinearOperator((n, n), matvec=apply_h, dtype=float)
    Minv = LinearOperator((n, n), matvec=lu.solve, dtype=float)
    v0 = np.random.default_rng(12345).standard_normal(n)
    mu = eigsh(H, k=1, M=M, Minv=Minv, which="LA", tol=tol, v0=v0, return_eigenvectors=False)
    return float(mu[0])


def projection_error_norm(level: int, gap: int = 2) -> float:
    """||I - P_h|| from the fine Hdot^2 scale to L2, computed matrix-free.

    With w = A_fine v the squared norm is the largest value of
    ||(I - P_h) A_fine^{-1} w||^2 / ||w||^2 over fine solenoidal w.
    """
    coarse = assemble_level(level)
    fine = assemble_level(level + gap)
    tr = transfer_between(coarse, fine)
    stokes = fine.stokes_solver

    def apply_h(w):
        u = stokes.solve(fine.M @ w)[0]
        y = fine.M @ u - tr.mass.T @ coarse.mass_solver.solve(tr.mass @ u)[0]
        return fine.M @ stokes.solve(y)[0]

    return float(np.sqrt(max(_largest_generalized(apply_h, fine.M), 0.0)))


def inverse_inequality_ratio(level: int) -> float:
    """sup ||v||_{Hdot^1} / ||v||_{L2} over the discrete solenoidal space (sqrt of lambda_max)."""
    ops = assemble_level(level)
    mass = ops.mass_solver

    def apply_h(w):
        u = mass.solve(ops.M @ w)[0]
        return ops.M @ mass.solve(ops.K @ u)[0]

    return float(np.sqrt(_largest_generalized(apply_h, ops.M)))


# ---------------------------------------------------------------------------
# solve-based and dense Helmholtz measurements


def _curl_of_sine_stream(a: int, b: int):
    """Unit-square solenoidal field curl(sin(a pi x) sin(b pi y))."""

    def field_(x, y):
        return np.stack(
            [
                b * np.pi * np.sin(a * np.pi * x) * np.cos(b * np.pi * y),
                -a * np.pi * np.cos(a * np.pi * x) * np.sin(b * np.pi * y),
            ]
        )

    return field_


SMOOTH_TEST_FIELDS = {f"curl_sin_{a}{b}": _curl_of_sine_stream(a, b) for a, b in [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3)]}


def stokes_approximation_errors(level: int, gap: int = 2, fields=None) -> dict:
    """Per-field L2 and Hdot^1 distances between fine and coarse Stokes solutions.

    Both discrete solutions solve the Stokes problem with the same smooth
    load, loaded by quadrature on their own mesh; distances are normalised
    by the L2 norm of the load.
    """
    fields = fields or SMOOTH_TEST_FIELDS
    coarse = assemble_level(level)
    fine = assemble_level(level + gap)
    tr = transfer_between(coarse, fine)
    out = {}
    for name, func in fields.items():
        uf = fine.stokes_solver.solve(fine.load_vector(func))[0]
        uc = coarse.stokes_solver.solve(coarse.load_vector(func))[0]
        xy = fine.geometry.physical_points(fine.quadrature.points)
        fval = func(xy[..., 0], xy[..., 1])
        wdet = 2.0 * fine.geometry.area[:, None] * fine.quadrature.weights[None, :]
        fnorm = np.sqrt(np.sum(wdet * (fval**2).sum(axis=0)))
        l2 = np.sqrt(max(float(tr.l2_distance_sq(uf, uc)), 0.0)) / fnorm
        h1 = np.sqrt(max(float(tr.h1_distance_sq(uf, uc)), 0.0)) / fnorm
        out[name] = (l2, h1)
    return out


def vector_laplacian_spectrum(level: int, count: int | None = None, dense_guard: int = DENSE_GUARD):
    """Eigenpairs of K y = mu M y on the (unconstrained) free velocity space.

    The two velocity components decouple, so the scalar problem is solved
    once.  ``count`` (scalar modes) truncates; beyond the dense guard a
    truncated spectrum is computed by shift-invert Lanczos.
    """
    key = (level, count)
    with _DEC_LOCK:
        if key in _LAPLACE_CACHE:
            return _LAPLACE_CACHE[key]
    ops = assemble_level(level)
    nf = ops.dofmap.n_free_scalar
    Ks = ops.K[:nf, :nf]
    Ms = ops.M[:nf, :nf]
    if ops.n_velocity <= dense_guard:
        mu, Ys = sla.eigh(Ks.toarray(), Ms.toarray(), check_finite=False)
        if count is not None:
            mu, Ys = mu[:count], Ys[:, :count]
    elif count is None:
        raise DimensionGuardError(f"level {level}: {ops.n_velocity} dofs exceed the dense guard {dense_guard}")
    else:
        log.info("shift-invert Lanczos for %d Laplace modes at level %d", count, level)
        mu, Ys = eigsh(sp.csc_matrix(Ks), k=count, M=sp.csc_matrix(Ms), sigma=0.0, tol=1e-9)
        order = np.argsort(mu)
        mu, Ys = mu[order], Ys[:, order]
    Y = sla.block_diag(Ys, Ys)
    mu = np.concatenate([mu, mu])
    order = np.argsort(mu, kind="stable")
    res = (mu[order], np.ascontiguousarray(Y[:, order]))
    with _DEC_LOCK:
        _LAPLACE_CACHE[key] = res
    return res


def helmholtz_difference_norms(level: int, theta: float, gap: int = 2) -> tuple[float, float]:
    """Norms on H^theta of P - P_h (into L2) and of P_h (I - P) (into the discrete Hdot^{-1}).

    P is the fine Helmholtz projection and H^theta is measured with the fine
    vector Laplacian, over all (not only solenoidal) fine fields.  Past the
    dense guard the fine Laplace spectrum is truncated to FINE_MODE_RATIO
    modes per coarse velocity dof.
    """
    coarse = assemble_level(level)
    fine = assemble_level(level + gap)
    tr = transfer_between(coarse, fine)
    count = None
    if fine.n_velocity > DENSE_GUARD:
        count = FINE_MODE_RATIO * coarse.dofmap.n_free_scalar
    mu, Y = vector_laplacian_spectrum(level + gap, count)
    W = fine.mass_solver.solve(fine.M @ Y)[0]  # P Y on the fine mesh
    Zc = coarse.mass_solver.solve(tr.mass @ Y)[0]  # P_h Y on the coarse mesh
    CW = tr.mass @ W
    gram = W.T @ (fine.M @ W) - Zc.T @ CW - CW.T @ Zc + Zc.T @ (coarse.M @ Zc)
    diff = _top_of_scaled_gram(0.5 * (gram + gram.T), mu, theta)
    D = coarse.M @ (Zc - coarse.mass_solver.solve(CW)[0])
    gram = D.T @ coarse.stokes_solver.solve(D)[0]  # squared discrete Hdot^{-1} norms
    grad_part = _top_of_scaled_gram(0.5 * (gram + gram.T), mu, theta)
    return diff, grad_part


def nonlinear_growth_ratio(level: int, samples: int = 20, seed: int = 0) -> float:
    """max over random unit solenoidal v of ||P_h G(v)|| / ||v||^2."""
    ops = assemble_level(level)
    rng = np.random.default_rng([seed, level])
    V = random_solenoidal(ops, rng, samples)
    best = 0.0
    for k in range(samples):
        best = max(best, ops.l2_norm(project_nonlinear(ops, V[:, k])))
    return best


def inf_sup_constant(level: int, dense_guard: int = 30000, return_spectrum: bool = False):
    """sqrt of the smallest nonzero eigenvalue of B K^{-1} B^T q = mu M_p q.

    The constant-pressure gauge mode (eigenvalue ~ 0) is excluded.
    """
    ops = assemble_level(level)
    if ops.n_velocity > dense_guard:
        raise DimensionGuardError(f"level {level}: {ops.n_velocity} dofs exceed guard {dense_guard}")
    lu = splu(sp.csc_matrix(ops.K))
    S = ops.B @ lu.solve(ops.B.T.toarray())
    S = 0.5 * (S + S.T)
    mu = sla.eigh(S, ops.pressure_mass.toarray(), eigvals_only=True)
    beta = float(np.sqrt(mu[1]))
    return (beta, mu) if return_spectrum else beta


# ---------------------------------------------------------------------------
# norm estimates and the lab driver


@dataclass
class NormEstimate:
    operator: str
    alpha: float | None
    beta: float | None
    gamma: float | None
    levels: list
    hs: list
    norms: list
    gap: int | None = None
    note: str = ""
    slope: float = float("nan")
    pairwise: tuple = ()

    def __post_init__(self):
        if any(not np.isfinite(v) or v <= 0.0 for v in self.norms):
            raise ValueError(f"{self.operator}: measured norms must be positive, got {self.norms}")
        if len(self.norms) >= 3:
            eoc = fit_eoc(self.norms, self.hs)
            self.slope, self.pairwise = eoc.slope, eoc.pairwise

    def rows(self):
        for lev, h, v in zip(self.levels, self.hs, self.norms):
            yield [self.operator, self.alpha, self.beta, self.gamma, lev, self.gap, h, v, self.slope, self.note]


def _hs(levels):
    return [float(np.sqrt(2.0) / 2**lev) for lev in levels]


def measure_projection_rate(levels=(1, 2, 3, 4), gap: int = 2) -> NormEstimate:
    norms = [projection_error_norm(lev, gap) for lev in levels]
    return NormEstimate("projection_error", None, 2.0, 0.0, list(levels), _hs(levels), norms, gap)


def measure_stokes_approximation(levels=(2, 3, 4, 5), gap: int = 2) -> tuple[NormEstimate, NormEstimate]:
    per_level = [stokes_approximation_errors(lev, gap) for lev in levels]
    l2 = [max(v[0] for v in d.values()) for d in per_level]
    h1 = [max(v[1] for v in d.values()) for d in per_level]
    note = f"max over {len(per_level[0])} smooth solenoidal loads"
    return (
        NormEstimate("stokes_solution_l2", None, 0.0, 0.0, list(levels), _hs(levels), l2, gap, note),
        NormEstimate("stokes_solution_h1", None, 0.0, 1.0, list(levels), _hs(levels), h1, gap, note),
    )


def measure_smoothing(alpha: float, beta: float, levels=(1, 2, 3), gap: int = 2, target: str = "l2") -> NormEstimate:
    norms = []
    truncated = False
    for lev in levels:
        pair = surrogate_pair(lev, gap)
        truncated |= not pair.fine.complete
        J = build_smoothing_operator(pair, alpha)
        norms.append(identity_minus_norm(pair, J.eig, beta, target))
    gamma = 0.0 if target == "l2" else 1.0
    note = f"fine spectrum truncated to {FINE_MODE_RATIO}x coarse modes where not dense" if truncated else ""
    name = "smoothing_identity_l2" if target == "l2" else "smoothing_identity_h1"
    return NormEstimate(name, alpha, beta, gamma, list(levels), _hs(levels), norms, gap, note)


def measure_smoothing_commutator(alpha: float, levels=(1, 2, 3), gap: int = 2) -> NormEstimate:
    norms = []
    for lev in levels:
        pair = surrogate_pair(lev, gap)
        norms.append(measure_operator_norm(smoothing_commutator(pair, alpha), pair.fine, pair.coarse, 2.0 - 2.0 * alpha, -1.0))
    return NormEstimate(
        "smoothing_commutator", alpha, 2.0 - 2.0 * alpha, -1.0, list(levels), _hs(levels), norms, gap,
        "target scale Hdot^-1 stands in for Hdot^-2",
    )


def measure_helmholtz_difference(theta: float = 0.4, levels=(2, 3, 4), gap: int = 2) -> tuple[NormEstimate, NormEstimate]:
    pairs = [helmholtz_difference_norms(lev, theta, gap) for lev in levels]
    return (
        NormEstimate("helmholtz_difference", None, theta, 0.0, list(levels), _hs(levels), [p[0] for p in pairs], gap),
        NormEstimate("projected_gradient_part", None, theta, -1.0, list(levels), _hs(levels), [p[1] for p in pairs], gap),
    )


def measure_inverse_inequality(levels=(2, 3, 4, 5)) -> NormEstimate:
    norms = [inverse_inequality_ratio(lev) for lev in levels]
    return NormEstimate("inverse_inequality", None, 0.0, 1.0, list(levels), _hs(levels), norms)


def measure_nonlinear_growth(levels=(2, 3, 4, 5), samples: int = 20) -> NormEstimate:
    norms = [nonlinear_growth_ratio(lev, samples) for lev in levels]
    return NormEstimate("nonlinear_growth", None, 0.0, 0.0, list(levels), _hs(levels), norms, note=f"max over {samples} random unit fields")


def measure_inf_sup(levels=(1, 2, 3, 4, 5)) -> NormEstimate:
    norms = [inf_sup_constant(lev) for lev in levels]
    return NormEstimate("inf_sup", None, None, None, list(levels), _hs(levels), norms)


LAB_HEADER = [
    "operator",
    "alpha",
    "beta",
    "gamma",
    "level",
    "surrogate_gap",
    "h[length]",
    "norm[dimensionless]",
    "fitted_slope[log-log]",
    "note",
]


def run_operator_lab(quick: bool = False, alpha: float = 0.25) -> list[NormEstimate]:
    """All norm measurements; ``quick`` restricts to dense-cheap levels (for smoke tests)."""
    if quick:
        lv, lv4, lvi = (1, 2, 3), (1, 2, 3), (1, 2, 3, 4)
        gaps = (2,)
    else:
        lv, lv4, lvi = (1, 2, 3), (1, 2, 3, 4), (2, 3, 4, 5)
        gaps = (2, 3)
    lv_fields = (1, 2, 3) if quick else (2, 3, 4, 5)
    out = [measure_projection_rate(lv4)]
    out.extend(measure_stokes_approximation(lv_fields))
    for gap in gaps:
        for beta in (0.5, 1.0):
            out.append(measure_smoothing(alpha, beta, lv, gap))
    out.append(measure_smoothing(alpha, 2.0 - 2.0 * alpha, lv, 2, target="h1"))
    out.append(measure_smoothing_commutator(alpha, lv))
    out.extend(measure_helmholtz_difference(0.4, (1, 2, 3) if quick else (2, 3, 4)))
    out.append(measure_inverse_inequality(lvi))
    out.append(measure_nonlinear_growth(lvi))
    out.append(measure_inf_sup(lvi if quick else (1, 2, 3, 4, 5)))
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_lab_csv(estimates, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LAB_HEADER)
        for est in estimates:
            for row in est.rows():
                w.writerow([_fmt(v) for v in row])
