"""MINI element (P1 + cubic bubble velocity, P1 pressure): dofs, local basis, quadrature.

Reference triangle has vertices (0,0), (1,0), (0,1) and area 1/2; barycentric
coordinates are (1 - x - y, x, y).  Local scalar shape functions are ordered
(lambda_1, lambda_2, lambda_3, lambda_1 lambda_2 lambda_3).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .mesh import Mesh

REFERENCE_AREA = 0.5
MAX_QUADRATURE_DEGREE = 41
DEFAULT_QUADRATURE_DEGREE = 10

_REF_GRAD_BARY = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray  # (Q, 3) barycentric
    weights: np.ndarray  # (Q,), sum = REFERENCE_AREA
    exact_degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def make_quadrature(degree: int = DEFAULT_QUADRATURE_DEGREE) -> QuadratureRule:
    """Collapsed (Duffy) Gauss rule on the reference triangle, exact to ``degree``.

    Uses Gauss-Jacobi(1, 0) in the collapsed direction and Gauss-Legendre in
    the other, so n points per direction integrate total degree 2n - 1.
    """
    if int(degree) != degree or degree < 1 or degree > MAX_QUADRATURE_DEGREE:
        raise ValueError(
            f"unsupported quadrature degree {degree!r}; expected an integer in [1, {MAX_QUADRATURE_DEGREE}]"
        )
    n = (int(degree) + 2) // 2
    t, wt = roots_jacobi(n, 1.0, 0.0)
    s, ws = roots_legendre(n)
    u = 0.5 * (1.0 + t)
    v = 0.5 * (1.0 + s)
    U, Vv = np.meshgrid(u, v, indexing="ij")
    W = np.outer(0.25 * wt, 0.5 * ws)
    x = U.ravel()
    y = (Vv * (1.0 - U)).ravel()
    points = np.column_stack([1.0 - x - y, x, y])
    rule = QuadratureRule(points, W.ravel(), exact_degree=2 * n - 1)
    rule.points.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule


def barycentric_moment(a: int, b: int, c: int, area: float = REFERENCE_AREA) -> float:
    """Exact integral of l1^a l2^b l3^c over a triangle of the given area."""
    return 2.0 * area * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)


def evaluate_local_basis(bary) -> tuple[np.ndarray, np.ndarray]:
    """Values (..., 4) and reference gradients (..., 4, 2) at barycentric points (..., 3)."""
    lam = np.asarray(bary, dtype=float)
    if lam.shape[-1] != 3:
        raise ValueError("barycentric points must have 3 components")
    tol = 1e-12
    if np.any(lam < -tol) or np.any(np.abs(lam.sum(axis=-1) - 1.0) > tol):
        raise ValueError("point outside the reference simplex")
    l1, l2, l3 = lam[..., 0], lam[..., 1], lam[..., 2]
    values = np.stack([l1, l2, l3, l1 * l2 * l3], axis=-1)
    dbubble = np.stack([l2 * l3, l1 * l3, l1 * l2], axis=-1)  # d(bubble)/d(lambda_i)
    grads = np.empty(lam.shape[:-1] + (4, 2))
    grads[..., :3, :] = _REF_GRAD_BARY
    grads[..., 3, :] = dbubble @ _REF_GRAD_BARY
    return values, grads


def bubble_barycentric_derivatives(bary: np.ndarray) -> np.ndarray:
    lam = np.asarray(bary, dtype=float)
    return np.stack([lam[..., 1] * lam[..., 2], lam[..., 0] * lam[..., 2], lam[..., 0] * lam[..., 1]], axis=-1)


@dataclass(frozen=True, eq=False)
class Geometry:
    """Affine element maps: areas (T,) and physical barycentric gradients (T, 3, 2)."""

    area: np.ndarray
    grad_lambda: np.ndarray
    origin: np.ndarray  # (T, 2) first vertex
    jac: np.ndarray  # (T, 2, 2) columns p2 - p1, p3 - p1

    def physical_points(self, bary: np.ndarray) -> np.ndarray:
        """(T, Q, 2) physical coordinates of reference barycentric points."""
        xy = bary[:, 1:]
        return self.origin[:, None, :] + np.einsum("eij,qj->eqi", self.jac, xy)

    def basis_gradients(self, bary: np.ndarray) -> np.ndarray:
        """(T, Q, 4, 2) physical gradients of the four local shape functions."""
        T = len(self.area)
        Q = len(bary)
        out = np.empty((T, Q, 4, 2))
        out[:, :, :3, :] = self.grad_lambda[:, None, :, :]
        db = bubble_barycentric_derivatives(bary)  # (Q, 3)
        out[:, :, 3, :] = np.einsum("qi,eik->eqk", db, self.grad_lambda)
        return out


def element_geometry(mesh: Mesh) -> Geometry:
    p = mesh.vertices[mesh.triangles]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(det <= 0.0):
        bad = int(np.flatnonzero(det <= 0.0)[0])
        raise ValueError(f"degenerate or inverted element {bad} (Jacobian determinant {det[bad]:.3e})")
    inv_t = np.empty_like(jac)  # J^{-T}
    inv_t[:, 0, 0] = jac[:, 1, 1] / det
    inv_t[:, 0, 1] = -jac[:, 1, 0] / det
    inv_t[:, 1, 0] = -jac[:, 0, 1] / det
    inv_t[:, 1, 1] = jac[:, 0, 0] / det
    grad_lambda = np.einsum("eij,kj->eki", inv_t, _REF_GRAD_BARY)
    return Geometry(area=0.5 * det, grad_lambda=grad_lambda, origin=p[:, 0].copy(), jac=jac)


def barycentric_coordinates(mesh: Mesh, elements: np.ndarray, xy: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of points xy (..., 2) with respect to the given elements (...)."""
    p = mesh.vertices[mesh.triangles[elements]]
    e1 = p[..., 1, :] - p[..., 0, :]
    e2 = p[..., 2, :] - p[..., 0, :]
    d = xy - p[..., 0, :]
    det = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
    l2 = (d[..., 0] * e2[..., 1] - d[..., 1] * e2[..., 0]) / det
    l3 = (e1[..., 0] * d[..., 1] - e1[..., 1] * d[..., 0]) / det
    return np.stack([1.0 - l2 - l3, l2, l3], axis=-1)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Velocity and pressure numbering on a mesh.

    Scalar velocity dofs: vertices 0..V-1, then one bubble per triangle.
    Constrained ("free") velocity vectors are ordered component-major:
    ``[x-component free dofs, y-component free dofs]``.
    """

    mesh: Mesh
    element_dofs: np.ndarray  # (T, 4) scalar dof indices
    free_scalar: np.ndarray  # scalar dofs not on the boundary
    free_position: np.ndarray  # scalar dof -> position in free_scalar, -1 if fixed
    pressure_gauge: str = "mean"

    @property
    def n_scalar(self) -> int:
        return self.mesh.n_vertices + self.mesh.n_triangles

    @property
    def n_free_scalar(self) -> int:
        return len(self.free_scalar)

    @property
    def n_velocity(self) -> int:
        return 2 * len(self.free_scalar)

    @property
    def n_pressure(self) -> int:
        return self.mesh.n_vertices

    @property
    def interior_mask(self) -> np.ndarray:
        """Per full vector velocity dof (2 * n_scalar): True unless on a boundary vertex."""
        m = self.free_position >= 0
        return np.concatenate([m, m])

    def element_free(self) -> np.ndarray:
        """(T, 4) free positions of the element dofs, -1 for boundary dofs."""
        return self.free_position[self.element_dofs]

    def to_full(self, v: np.ndarray) -> np.ndarray:
        """Free velocity vector -> (2, n_scalar) nodal array with zero boundary values."""
        v = np.asarray(v)
        nf = self.n_free_scalar
        out = np.zeros((2, self.n_scalar) + v.shape[1:], dtype=v.dtype)
        out[0, self.free_scalar] = v[:nf]
        out[1, self.free_scalar] = v[nf:]
        return out

    def from_full(self, full: np.ndarray) -> np.ndarray:
        return np.concatenate([full[0, self.free_scalar], full[1, self.free_scalar]])


def build_dofmap(mesh: Mesh, pressure_gauge: str = "mean") -> DofMap:
    if pressure_gauge not in ("mean", "pin"):
        raise ValueError(f"unknown pressure gauge {pressure_gauge!r}; use 'mean' or 'pin'")
    V, T = mesh.n_vertices, mesh.n_triangles
    element_dofs = np.column_stack([mesh.triangles, V + np.arange(T)])
    free_scalar = np.concatenate([np.flatnonzero(~mesh.boundary_vertex), V + np.arange(T)])
    free_position = np.full(V + T, -1, dtype=np.int64)
    free_position[free_scalar] = np.arange(len(free_scalar))
    return DofMap(mesh, element_dofs, free_scalar, free_position, pressure_gauge)


def interpolate_vertex_values(dofmap: DofMap, func) -> np.ndarray:
    """Nodal P1 interpolation of a scalar function; bubble coefficients are zero."""
    out = np.zeros(dofmap.n_scalar)
    verts = dofmap.mesh.vertices
    out[: len(verts)] = func(verts[:, 0], verts[:, 1])
    return out
