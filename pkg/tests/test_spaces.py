import numpy as np
import pytest

from mini_sns.mesh import unit_square_level
from mini_sns.spaces import (
    DEFAULT_QUADRATURE_DEGREE,
    barycentric_moment,
    build_dofmap,
    element_geometry,
    evaluate_local_basis,
    interpolate_vertex_values,
    make_quadrature,
)


def test_bubble_at_centroid():
    vals, _ = evaluate_local_basis(np.array([1 / 3, 1 / 3, 1 / 3]))
    assert vals[3] == pytest.approx(1 / 27)


def test_bubble_vanishes_on_edges():
    t = np.linspace(0, 1, 11)
    pts = np.stack([t, 1 - t, np.zeros_like(t)], axis=-1)
    vals, _ = evaluate_local_basis(pts)
    np.testing.assert_allclose(vals[:, 3], 0.0, atol=0)


def test_partition_of_unity():
    rng = np.random.default_rng(0)
    b = rng.dirichlet(np.ones(3), size=50)
    vals, grads = evaluate_local_basis(b)
    np.testing.assert_allclose(vals[:, :3].sum(axis=1), 1.0, rtol=1e-15)
    np.testing.assert_allclose(grads[:, :3].sum(axis=1), 0.0, atol=1e-15)


def test_point_outside_simplex_rejected():
    with pytest.raises(ValueError):
        evaluate_local_basis(np.array([1.2, -0.1, -0.1]))


def test_default_rule_degree():
    assert make_quadrature().exact_degree >= DEFAULT_QUADRATURE_DEGREE >= 10


@pytest.mark.parametrize("degree", [1, 4, 10, 17])
def test_quadrature_is_exact_for_monomials(degree):
    rule = make_quadrature(degree)
    assert rule.exact_degree >= degree
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(0.5, rel=1e-14)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                approx = np.sum(rule.weights * np.prod(rule.points ** [a, b, c], axis=1))
                assert approx == pytest.approx(barycentric_moment(a, b, c), rel=1e-12)


def test_known_moments():
    # 2A a!b!c!/(a+b+c+2)! on the reference triangle of area 1/2
    assert barycentric_moment(1, 1, 1) == pytest.approx(0.5 / 60)
    assert barycentric_moment(2, 0, 0) == pytest.approx(0.5 / 6)


@pytest.mark.parametrize("bad", [0, 100, 2.5])
def test_unsupported_degree_rejected(bad):
    with pytest.raises(ValueError, match="quadrature degree"):
        make_quadrature(bad)


def test_dof_counts():
    for lev, expected in [(1, 18), (2, 82), (3, 354), (4, 1474)]:
        m = unit_square_level(lev)
        d = build_dofmap(m)
        interior = int((~m.boundary_vertex).sum())
        assert d.n_velocity == 2 * interior + 2 * m.n_triangles == expected
        assert d.n_pressure == m.n_vertices
        # bubble dofs are never masked
        assert d.interior_mask[: d.n_scalar][m.n_vertices :].all()


def test_bad_gauge_rejected():
    with pytest.raises(ValueError):
        build_dofmap(unit_square_level(1), pressure_gauge="median")


def test_bubble_gradient_integrates_to_zero():
    m = unit_square_level(2)
    g = element_geometry(m)
    rule = make_quadrature(4)
    grads = g.basis_gradients(rule.points)  # (T, Q, 4, 2)
    integral = np.einsum("q,tqk->tk", rule.weights, grads[:, :, 3, :])
    np.testing.assert_allclose(integral, 0.0, atol=1e-14)


def test_linear_function_reproduced():
    m = unit_square_level(2)
    d = build_dofmap(m)
    f = lambda x, y: 0.3 + 2.0 * x - 1.5 * y
    nodal = interpolate_vertex_values(d, f)
    rule = make_quadrature(3)
    vals, _ = evaluate_local_basis(rule.points)
    g = element_geometry(m)
    xy = g.physical_points(rule.points)
    interp = np.einsum("qi,ti->tq", vals, nodal[d.element_dofs])
    np.testing.assert_allclose(interp, f(xy[..., 0], xy[..., 1]), atol=1e-14)
