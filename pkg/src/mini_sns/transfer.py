"""Exact coupling between nested MINI spaces.

Coarse MINI functions are not members of the fine MINI space (a coarse
bubble is a cubic on each fine triangle), so fine/coarse inner products are
computed on the fine mesh with the coarse basis evaluated at fine quadrature
points.  A degree-6 rule integrates cubic x cubic products exactly.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import ancestor_map
from .operators import OperatorSet
from .spaces import barycentric_coordinates, bubble_barycentric_derivatives, evaluate_local_basis, make_quadrature


@dataclass(frozen=True, eq=False)
class Transfer:
    """Mixed matrices with rows on the coarse and columns on the fine free velocity dofs.

    mass[i, j] = <phi_i^coarse, phi_j^fine>, stiffness[i, j] = <grad phi_i^coarse, grad phi_j^fine>.
    """

    coarse: OperatorSet
    fine: OperatorSet
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix

    def l2_distance_sq(self, u_fine: np.ndarray, u_coarse: np.ndarray) -> np.ndarray:
        """||u_fine - u_coarse||^2 (vectorized over trailing axes)."""
        f = self.fine
        c = self.coarse
        return (
            np.einsum("i...,i...->...", u_fine, f.M @ u_fine)
            - 2.0 * np.einsum("i...,i...->...", u_coarse, self.mass @ u_fine)
            + np.einsum("i...,i...->...", u_coarse, c.M @ u_coarse)
        )

    def h1_distance_sq(self, u_fine: np.ndarray, u_coarse: np.ndarray) -> np.ndarray:
        f = self.fine
        c = self.coarse
        return (
            np.einsum("i...,i...->...", u_fine, f.K @ u_fine)
            - 2.0 * np.einsum("i...,i...->...", u_coarse, self.stiffness @ u_fine)
            + np.einsum("i...,i...->...", u_coarse, c.K @ u_coarse)
        )

    def project_to_coarse(self, u_fine: np.ndarray) -> np.ndarray:
        """Coarse discrete Helmholtz projection of a fine FE field."""
        return self.coarse.mass_solver.solve(self.mass @ u_fine)[0]

    def lift_to_fine(self, u_coarse: np.ndarray) -> np.ndarray:
        """Fine discrete Helmholtz projection of a coarse FE field."""
        return self.fine.mass_solver.solve(self.mass.T @ u_coarse)[0]


def build_transfer(coarse: OperatorSet, fine: OperatorSet) -> Transfer:
    cm, fm = coarse.mesh, fine.mesh
    if fm.level <= cm.level:
        raise ValueError("fine mesh must be strictly finer than the coarse mesh")
    rule = make_quadrature(6)
    anc = ancestor_map(fm, cm.level)
    xy = fine.geometry.physical_points(rule.points)  # (Tf, Q, 2)
    bary_c = barycentric_coordinates(cm, anc[:, None], xy)  # (Tf, Q, 3)
    bary_c = np.clip(bary_c, 0.0, 1.0)
    phi_c = np.concatenate([bary_c, np.prod(bary_c, axis=-1, keepdims=True)], axis=-1)
    gl = coarse.geometry.grad_lambda[anc]  # (Tf, 3, 2)
    grad_c = np.empty(phi_c.shape + (2,))
    grad_c[..., :3, :] = gl[:, None, :, :]
    grad_c[..., 3, :] = np.einsum("eqi,eik->eqk", bubble_barycentric_derivatives(bary_c), gl)

    phi_f, _ = evaluate_local_basis(rule.points)
    grad_f = fine.geometry.basis_gradients(rule.points)
    wdet = 2.0 * fine.geometry.area[:, None] * rule.weights[None, :]

    mass_l = np.einsum("eq,eqi,qj->eij", wdet, phi_c, phi_f)
    stiff_l = np.einsum("eq,eqik,eqjk->eij", wdet, grad_c, grad_f)

    rpos = coarse.dofmap.free_position[coarse.dofmap.element_dofs[anc]]  # (Tf, 4)
    cpos = fine.dofmap.free_position[fine.dofmap.element_dofs]
    R = np.broadcast_to(rpos[:, :, None], mass_l.shape).ravel()
    C = np.broadcast_to(cpos[:, None, :], mass_l.shape).ravel()
    keep = (R >= 0) & (C >= 0)
    shape = (coarse.dofmap.n_free_scalar, fine.dofmap.n_free_scalar)
    ms = sp.csr_matrix((mass_l.ravel()[keep], (R[keep], C[keep])), shape=shape)
    ks = sp.csr_matrix((stiff_l.ravel()[keep], (R[keep], C[keep])), shape=shape)
    return Transfer(coarse, fine, sp.block_diag([ms, ms], format="csr"), sp.block_diag([ks, ks], format="csr"))


_CACHE: dict = {}
_LOCK = threading.Lock()


def transfer_between(coarse: OperatorSet, fine: OperatorSet) -> Transfer:
    key = (id(coarse), id(fine))
    with _LOCK:
        hit = _CACHE.get(key)
    if hit is not None and hit.coarse is coarse and hit.fine is fine:
        return hit
    t = build_transfer(coarse, fine)
    with _LOCK:
        _CACHE[key] = t
    return t
