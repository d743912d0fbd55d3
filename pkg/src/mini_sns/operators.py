"""Assembly of the MINI-element operators and the saddle-point projection primitives.

All velocity vectors are constrained (boundary vertex dofs eliminated) and
ordered component-major, see :class:`mini_sns.spaces.DofMap`.  The
discretely divergence-free space is never given a basis: membership is
imposed by a pressure Lagrange multiplier in every solve.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import Mesh, unit_square_level
from .noise import NoiseModel, build_noise_family
from .spaces import (
    DEFAULT_QUADRATURE_DEGREE,
    DofMap,
    Geometry,
    QuadratureRule,
    build_dofmap,
    element_geometry,
    evaluate_local_basis,
    make_quadrature,
)


class SolverError(RuntimeError):
    pass


class SaddleSolver:
    """Factorization of [[A, B^T], [B, 0]] with a pressure gauge.

    ``gauge='mean'`` appends one multiplier enforcing zero pressure mean
    (weighted by ``pressure_weights``); ``gauge='pin'`` removes pressure dof 0.
    """

    def __init__(self, A, B, pressure_weights, gauge: str = "mean", rtol: float = 1e-10):
        self.n_v = A.shape[0]
        self.n_p = B.shape[0]
        self.gauge = gauge
        self.rtol = rtol
        A = sp.csr_matrix(A)
        B = sp.csr_matrix(B)
        if gauge == "mean":
            m = sp.csr_matrix(np.asarray(pressure_weights).reshape(-1, 1))
            S = sp.bmat([[A, B.T, None], [B, None, m], [None, m.T, None]], format="csc")
        elif gauge == "pin":
            Bp = B[1:]
            S = sp.bmat([[A, Bp.T], [Bp, None]], format="csc")
        else:
            raise ValueError(f"unknown gauge {gauge!r}")
        self.matrix = S
        self._refactor_lock = threading.Lock()
        # Minimum-degree ordering on A^T + A with diagonal pivots keeps fill ~5x below
        # the COLAMD default; a residual failure triggers a partial-pivoting refactorization.
        try:
            self._lu = splu(S, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0)
            self._robust = False
        except RuntimeError:
            self._lu = splu(S)
            self._robust = True

    def solve(self, rhs_v: np.ndarray, rhs_p: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Return (velocity, pressure) for right-hand sides (rhs_v, rhs_p); rhs_p defaults to 0."""
        rhs_v = np.asarray(rhs_v, dtype=float)
        batch = rhs_v.shape[1:]
        if rhs_p is None:
            rhs_p = np.zeros((self.n_p,) + batch)
        if self.gauge == "mean":
            b = np.concatenate([rhs_v, rhs_p, np.zeros((1,) + batch)])
        else:
            b = np.concatenate([rhs_v, rhs_p[1:]])
        x = self._lu.solve(b)
        scale = max(np.linalg.norm(b), np.finfo(float).tiny)
        res = np.linalg.norm(self.matrix @ x - b) if np.all(np.isfinite(x)) else np.inf
        if res > self.rtol * scale and not self._robust:
            with self._refactor_lock:
                if not self._robust:
                    self._lu = splu(self.matrix)
                    self._robust = True
            x = self._lu.solve(b)
            res = np.linalg.norm(self.matrix @ x - b) if np.all(np.isfinite(x)) else np.inf
        if not np.isfinite(res):
            raise SolverError("saddle solve produced non-finite values")
        if res > self.rtol * scale:
            raise SolverError(f"saddle solve residual {res / scale:.3e} exceeds {self.rtol:.1e}")
        v = x[: self.n_v]
        if self.gauge == "mean":
            q = x[self.n_v : self.n_v + self.n_p]
        else:
            q = np.concatenate([np.zeros((1,) + batch), x[self.n_v :]])
        return v, q


def _scatter_matrix(rows, cols, vals, row_map, col_map, shape) -> sp.csr_matrix:
    r = row_map[rows].ravel() if row_map is not None else rows.ravel()
    c = col_map[cols].ravel() if col_map is not None else cols.ravel()
    v = vals.ravel()
    keep = (r >= 0) & (c >= 0)
    return sp.csr_matrix((v[keep], (r[keep], c[keep])), shape=shape)


@dataclass(eq=False)
class OperatorSet:
    """Assembled operators on one mesh, plus cached saddle factorizations."""

    dofmap: DofMap
    geometry: Geometry
    quadrature: QuadratureRule
    noise: NoiseModel
    M: sp.csr_matrix
    K: sp.csr_matrix
    B: sp.csr_matrix
    T: list
    pressure_weights: np.ndarray
    pressure_mass: sp.csr_matrix
    _solvers: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def mesh(self) -> Mesh:
        return self.dofmap.mesh

    @property
    def n_velocity(self) -> int:
        return self.dofmap.n_velocity

    def _solver(self, key, A) -> SaddleSolver:
        with self._lock:
            if key not in self._solvers:
                self._solvers[key] = SaddleSolver(A, self.B, self.pressure_weights, self.dofmap.pressure_gauge)
            return self._solvers[key]

    @property
    def mass_solver(self) -> SaddleSolver:
        return self._solver("mass", self.M)

    @property
    def stokes_solver(self) -> SaddleSolver:
        return self._solver("stokes", self.K)

    def step_solver(self, dt: float) -> SaddleSolver:
        return self._solver(("step", float(dt)), self.M + dt * self.K)

    def divergence_residual(self, v: np.ndarray) -> float:
        """||B v|| relative to || |B| |v| ||, a scale-free measure of discrete divergence."""
        num = np.linalg.norm(self.B @ v)
        den = np.linalg.norm(abs(self.B) @ np.abs(v))
        return float(num / den) if den > 0 else 0.0

    # field evaluation -------------------------------------------------

    def element_coefficients(self, v: np.ndarray) -> np.ndarray:
        """(2, T, 4) local coefficients of a free velocity vector."""
        full = self.dofmap.to_full(v)
        return full[:, self.dofmap.element_dofs]

    def values_at(self, v: np.ndarray, rule: QuadratureRule | None = None) -> np.ndarray:
        rule = rule or self.quadrature
        vals, _ = evaluate_local_basis(rule.points)
        return np.einsum("cei,qi->ceq", self.element_coefficients(v), vals)

    def gradients_at(self, v: np.ndarray, rule: QuadratureRule | None = None) -> np.ndarray:
        """(2, T, Q, 2) array: [c, e, q, k] = d v_c / d x_k."""
        rule = rule or self.quadrature
        grads = self.geometry.basis_gradients(rule.points)
        return np.einsum("cei,eqik->ceqk", self.element_coefficients(v), grads)

    def assemble_vector(self, local: np.ndarray) -> np.ndarray:
        """Sum (2, T, 4) element contributions into a free velocity dual vector."""
        nf = self.dofmap.n_free_scalar
        pos = self.dofmap.element_free().ravel()
        keep = pos >= 0
        out = np.empty(2 * nf)
        for c in range(2):
            out[c * nf : (c + 1) * nf] = np.bincount(pos[keep], weights=local[c].ravel()[keep], minlength=nf)
        return out

    def load_vector(self, func) -> np.ndarray:
        """Dual vector <f, w_i> of a callable f(x, y) -> (2, ...) by element quadrature."""
        rule = self.quadrature
        vals, _ = evaluate_local_basis(rule.points)
        xy = self.geometry.physical_points(rule.points)
        f = np.asarray(func(xy[..., 0], xy[..., 1]), dtype=float)
        wdet = 2.0 * self.geometry.area[:, None] * rule.weights[None, :]
        local = np.einsum("ceq,eq,qi->cei", f, wdet, vals)
        return self.assemble_vector(local)

    def l2_norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(max(v @ (self.M @ v), 0.0)))

    def h1_seminorm(self, v: np.ndarray) -> float:
        return float(np.sqrt(max(v @ (self.K @ v), 0.0)))


def assemble(mesh: Mesh, dofmap: DofMap | None = None, quadrature: QuadratureRule | None = None, noise: NoiseModel | None = None) -> OperatorSet:
    """Assemble M, K, B and the transport matrices T_n on ``mesh``.

    The quadrature degree is raised to deg(zeta) + 5 when needed so that the
    transport matrices are integrated exactly.
    """
    dofmap = dofmap or build_dofmap(mesh)
    noise = noise if noise is not None else build_noise_family("none")
    if quadrature is None:
        quadrature = make_quadrature(max(DEFAULT_QUADRATURE_DEGREE, noise.max_degree + 5))
    geo = element_geometry(mesh)
    w = quadrature.weights
    vals, _ = evaluate_local_basis(quadrature.points)  # (Q, 4)
    grads = geo.basis_gradients(quadrature.points)  # (T, Q, 4, 2)
    wdet = 2.0 * geo.area[:, None] * w[None, :]  # (T, Q)

    edofs = dofmap.element_dofs
    rows = np.broadcast_to(edofs[:, :, None], (len(edofs), 4, 4))
    cols = np.broadcast_to(edofs[:, None, :], (len(edofs), 4, 4))
    fp = dofmap.free_position
    nf = dofmap.n_free_scalar

    Ml = np.einsum("q,qi,qj->ij", w, vals, vals)[None] * (2.0 * geo.area)[:, None, None]
    Kl = np.einsum("eq,eqik,eqjk->eij", wdet, grads, grads)
    Ms = _scatter_matrix(rows, cols, Ml, fp, fp, (nf, nf))
    Ks = _scatter_matrix(rows, cols, Kl, fp, fp, (nf, nf))
    M = sp.block_diag([Ms, Ms], format="csr")
    K = sp.block_diag([Ks, Ks], format="csr")

    V = mesh.n_vertices
    prow = np.broadcast_to(mesh.triangles[:, :, None], (len(edofs), 3, 4))
    pcol = np.broadcast_to(edofs[:, None, :], (len(edofs), 3, 4))
    Bx = np.einsum("eq,qi,eqj->eij", wdet, vals[:, :3], grads[..., 0])
    By = np.einsum("eq,qi,eqj->eij", wdet, vals[:, :3], grads[..., 1])
    B = sp.hstack(
        [_scatter_matrix(prow, pcol, Bx, None, fp, (V, nf)), _scatter_matrix(prow, pcol, By, None, fp, (V, nf))],
        format="csr",
    )

    xy = geo.physical_points(quadrature.points)
    T_list = []
    for mode in noise.modes:
        z = mode(xy[..., 0], xy[..., 1])  # (2, T, Q)
        adv = np.einsum("keq,eqjk->eqj", z, grads)  # zeta . grad phi_j
        Tl = np.einsum("eq,qi,eqj->eij", wdet, vals, adv)
        Ts = _scatter_matrix(rows, cols, Tl, fp, fp, (nf, nf))
        T_list.append(sp.block_diag([Ts, Ts], format="csr"))

    pl = np.einsum("q,qi->i", w, vals[:, :3])[None, :] * (2.0 * geo.area)[:, None]
    pressure_weights = np.bincount(mesh.triangles.ravel(), weights=pl.ravel(), minlength=V)
    Mpl = np.einsum("q,qi,qj->ij", w, vals[:, :3], vals[:, :3])[None] * (2.0 * geo.area)[:, None, None]
    tri3 = mesh.triangles
    Mp = sp.csr_matrix(
        (Mpl.ravel(), (np.repeat(tri3, 3, axis=1).ravel(), np.tile(tri3, (1, 3)).ravel())), shape=(V, V)
    )
    return OperatorSet(dofmap, geo, quadrature, noise, M, K, B, T_list, pressure_weights, Mp)


def assemble_scalar_full(mesh: Mesh, kind: str = "stiffness", quadrature: QuadratureRule | None = None) -> sp.csr_matrix:
    """Scalar mass or stiffness matrix on all V + T scalar dofs, before boundary elimination."""
    dofmap = build_dofmap(mesh)
    quadrature = quadrature or make_quadrature()
    geo = element_geometry(mesh)
    vals, _ = evaluate_local_basis(quadrature.points)
    edofs = dofmap.element_dofs
    rows = np.broadcast_to(edofs[:, :, None], (len(edofs), 4, 4))
    cols = np.broadcast_to(edofs[:, None, :], (len(edofs), 4, 4))
    if kind == "stiffness":
        grads = geo.basis_gradients(quadrature.points)
        wdet = 2.0 * geo.area[:, None] * quadrature.weights[None, :]
        local = np.einsum("eq,eqik,eqjk->eij", wdet, grads, grads)
    elif kind == "mass":
        local = np.einsum("q,qi,qj->ij", quadrature.weights, vals, vals)[None] * (2.0 * geo.area)[:, None, None]
    else:
        raise ValueError(f"unknown matrix kind {kind!r}")
    n = dofmap.n_scalar
    return _scatter_matrix(rows, cols, local, None, None, (n, n))


_OPS_CACHE: dict = {}
_OPS_LOCK = threading.Lock()


def assemble_level(level: int, noise: NoiseModel | None = None, gauge: str = "mean") -> OperatorSet:
    """Cached assembly on the unit-square mesh of the given level."""
    key = (level, id(noise) if noise is not None else None, gauge)
    with _OPS_LOCK:
        if key in _OPS_CACHE and _OPS_CACHE[key][1] is noise:
            return _OPS_CACHE[key][0]
    mesh = unit_square_level(level)
    ops = assemble(mesh, build_dofmap(mesh, gauge), noise=noise)
    with _OPS_LOCK:
        _OPS_CACHE[key] = (ops, noise)
    return ops


# projection primitives ------------------------------------------------


def helmholtz_project(ops: OperatorSet, f: np.ndarray, dual: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Discrete Helmholtz projection.

    ``f`` is a free velocity coefficient vector (L2 datum), or, with
    ``dual=True``, an assembled dual vector <f, w_h> (e.g. an H^{-1} load).
    Returns the projected velocity and the pressure multiplier.
    """
    rhs = np.asarray(f, dtype=float) if dual else ops.M @ f
    return ops.mass_solver.solve(rhs)


def _require_solenoidal(ops: OperatorSet, v: np.ndarray, tol: float = 1e-8) -> None:
    r = ops.divergence_residual(v)
    if r > tol:
        raise ValueError(f"input is not discretely divergence-free (relative |Bv| = {r:.2e})")


def apply_discrete_stokes(ops: OperatorSet, v: np.ndarray) -> np.ndarray:
    """A_h v for v in the discretely divergence-free space."""
    _require_solenoidal(ops, v)
    return ops.mass_solver.solve(ops.K @ v)[0]


def solve_discrete_stokes(ops: OperatorSet, f: np.ndarray, dual: bool = False) -> np.ndarray:
    """A_h^{-1} P_h f: the discrete Stokes velocity for data f (coefficients, or a dual vector)."""
    rhs = np.asarray(f, dtype=float) if dual else ops.M @ f
    return ops.stokes_solver.solve(rhs)[0]


def apply_transport(ops: OperatorSet, n: int, v: np.ndarray) -> np.ndarray:
    """L_{zeta_n, h} v = P_h((zeta_n . grad) v)."""
    if not 0 <= n < len(ops.T):
        raise IndexError(f"noise mode {n} out of range (N = {len(ops.T)})")
    return ops.mass_solver.solve(ops.T[n] @ v)[0]


def ito_correction(ops: OperatorSet, v: np.ndarray) -> np.ndarray:
    """(1/2) sum_n L_{zeta_n,h}^2 v by nested projections."""
    _require_solenoidal(ops, v)
    out = np.zeros_like(v, dtype=float)
    for n in range(len(ops.T)):
        out += apply_transport(ops, n, apply_transport(ops, n, v))
    return 0.5 * out


def hs_norm_sq(ops: OperatorSet, v: np.ndarray) -> float:
    """||F_h(v)||_HS^2 = sum_n ||L_{zeta_n,h} v||^2."""
    total = 0.0
    for n in range(len(ops.T)):
        z = apply_transport(ops, n, v)
        total += z @ (ops.M @ z)
    return float(total)


def eval_nonlinear(ops: OperatorSet, v: np.ndarray) -> np.ndarray:
    """Dual vector <(v.grad)v + (1/2)(div v) v, w_i> for every free test function."""
    rule = ops.quadrature
    vals, _ = evaluate_local_basis(rule.points)
    u = ops.values_at(v)  # (2, T, Q)
    du = ops.gradients_at(v)  # (2, T, Q, 2)
    conv = np.einsum("keq,ceqk->ceq", u, du)
    div = du[0, ..., 0] + du[1, ..., 1]
    integrand = conv + 0.5 * div[None] * u
    wdet = 2.0 * ops.geometry.area[:, None] * rule.weights[None, :]
    local = np.einsum("ceq,eq,qi->cei", integrand, wdet, vals)
    return ops.assemble_vector(local)


def project_nonlinear(ops: OperatorSet, v: np.ndarray) -> np.ndarray:
    """P_h G(v) as a coefficient vector."""
    return ops.mass_solver.solve(eval_nonlinear(ops, v))[0]


def project_function(ops: OperatorSet, func) -> np.ndarray:
    """P_h u for a callable u(x, y) -> (2, ...)."""
    return ops.mass_solver.solve(ops.load_vector(func))[0]


def random_solenoidal(ops: OperatorSet, rng: np.random.Generator, count: int | None = None) -> np.ndarray:
    """P_h of i.i.d. Gaussian coefficient vectors, normalized in L2."""
    shape = (ops.n_velocity,) if count is None else (ops.n_velocity, count)
    v = ops.mass_solver.solve(ops.M @ rng.standard_normal(shape))[0]
    norms = np.sqrt(np.einsum("i...,i...->...", v, ops.M @ v))
    return v / norms


def write_coo(matrix, path) -> None:
    """Coordinate text dump: one ``row col value`` line per stored entry."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")
