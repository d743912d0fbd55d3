import numpy as np
import pytest

from mini_sns.operators import assemble_level, helmholtz_project
from mini_sns.transfer import build_transfer, transfer_between


def _p1_on_finer(coarse_ops, fine_ops, v):
    """Exact fine representation of a coarse field with zero bubble coefficients."""
    cd, fd = coarse_ops.dofmap, fine_ops.dofmap
    full = cd.to_full(v)[:, : coarse_ops.mesh.n_vertices]
    mesh = coarse_ops.mesh
    while mesh.level < fine_ops.mesh.level:
        edges, _ = mesh.edges()  # refine_uniform numbers midpoints in this order
        full = np.concatenate([full, 0.5 * (full[:, edges[:, 0]] + full[:, edges[:, 1]])], axis=1)
        mesh = assemble_level(mesh.level + 1).mesh
    out = np.zeros((2, fd.n_scalar))
    out[:, : fine_ops.mesh.n_vertices] = full
    return fd.from_full(out)


def _coarse_p1_field(ops, rng):
    v = rng.standard_normal(ops.n_velocity)
    bubble = ops.dofmap.free_scalar >= ops.mesh.n_vertices
    v[np.concatenate([bubble, bubble])] = 0.0
    return v


@pytest.mark.parametrize("gap", [1, 2])
def test_nested_p1_fields_have_zero_distance(gap, rng):
    c, f = assemble_level(2), assemble_level(2 + gap)
    tr = transfer_between(c, f)
    v = _coarse_p1_field(c, rng)
    u = _p1_on_finer(c, f, v)
    scale_l2 = v @ c.M @ v
    scale_h1 = v @ c.K @ v
    assert abs(tr.l2_distance_sq(u, v)) <= 1e-12 * scale_l2
    assert abs(tr.h1_distance_sq(u, v)) <= 1e-12 * scale_h1


def test_distance_is_vectorized(rng):
    c, f = assemble_level(1), assemble_level(3)
    tr = transfer_between(c, f)
    U = rng.standard_normal((f.n_velocity, 3))
    V = rng.standard_normal((c.n_velocity, 3))
    batch = tr.l2_distance_sq(U, V)
    single = [tr.l2_distance_sq(U[:, k], V[:, k]) for k in range(3)]
    np.testing.assert_allclose(batch, single, rtol=1e-13)
    assert np.all(batch > 0)


def test_bubble_fields_are_not_fine_functions(rng):
    # a coarse bubble is cubic on fine triangles, so its distance to the fine space is positive
    c, f = assemble_level(1), assemble_level(2)
    tr = transfer_between(c, f)
    v = np.zeros(c.n_velocity)
    v[c.dofmap.n_free_scalar - 1] = 1.0
    u = f.mass_solver.solve(tr.mass.T @ v)[0]
    assert tr.l2_distance_sq(u, v) > 1e-12 * (v @ c.M @ v)


def test_projection_roundtrip(rng):
    c, f = assemble_level(2), assemble_level(3)
    tr = transfer_between(c, f)
    v = _coarse_p1_field(c, rng)
    u = _p1_on_finer(c, f, v)
    # projecting the exact fine copy gives P_h of the coarse field
    np.testing.assert_allclose(tr.project_to_coarse(u), helmholtz_project(c, v)[0], atol=1e-10 * np.abs(v).max())
    w = tr.lift_to_fine(helmholtz_project(c, v)[0])
    assert f.divergence_residual(w) < 1e-10


def test_requires_finer_mesh():
    with pytest.raises(ValueError):
        build_transfer(assemble_level(2), assemble_level(2))


def test_cache_returns_same_object():
    c, f = assemble_level(1), assemble_level(2)
    assert transfer_between(c, f) is transfer_between(c, f)
