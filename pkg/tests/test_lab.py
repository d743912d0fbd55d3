import logging

import numpy as np
import pytest

from mini_sns.integrator import INITIAL_FIELDS
from mini_sns.lab import (
    LAB_HEADER,
    DimensionGuardError,
    NormEstimate,
    build_smoothing_operator,
    fractional_apply,
    identity_minus_norm,
    inf_sup_constant,
    measure_operator_norm,
    measure_smoothing,
    stokes_eigendecomposition,
    surrogate_pair,
    write_lab_csv,
)
from mini_sns.operators import apply_discrete_stokes, assemble_level, project_function, random_solenoidal


@pytest.fixture(scope="module")
def dec3():
    return stokes_eigendecomposition(3)


def test_eigenpairs_are_consistent(dec3):
    ops = assemble_level(3)
    X, lam = dec3.eigenvectors, dec3.eigenvalues
    assert dec3.complete and dec3.count == 274
    rayleigh = np.einsum("ik,ik->k", X, ops.K @ X) / np.einsum("ik,ik->k", X, ops.M @ X)
    np.testing.assert_allclose(rayleigh, lam, rtol=1e-10)
    assert lam[0] > 0 and np.all(np.diff(lam) >= 0)
    assert np.abs(ops.B @ X).max() <= 1e-9 * np.abs(X).max()
    np.testing.assert_allclose(X.T @ (ops.M @ X), np.eye(dec3.count), atol=1e-9)


def test_first_eigenvalue_converges_from_above():
    lam1 = [stokes_eigendecomposition(lev).eigenvalues[0] for lev in (1, 2, 3, 4)]
    d = -np.diff(lam1)
    assert np.all(d > 0)
    assert np.all(d[:-1] / d[1:] >= 3.0)


def test_truncated_and_guarded_spectra():
    dec = stokes_eigendecomposition(2, count=10)
    assert dec.count == 10 and not dec.complete
    with pytest.raises(DimensionGuardError):
        stokes_eigendecomposition(3, dense_guard=100)


def test_fractional_powers(dec3, rng):
    ops = assemble_level(3)
    v = random_solenoidal(ops, rng)
    np.testing.assert_allclose(fractional_apply(dec3, 0.0, v, ops), v, atol=1e-10)
    A1 = fractional_apply(dec3, 1.0, v, ops)
    ref = apply_discrete_stokes(ops, v)
    assert np.abs(A1 - ref).max() <= 1e-8 * np.abs(ref).max()
    a, b = 0.3, -0.55
    two = fractional_apply(dec3, a, fractional_apply(dec3, b, v, ops), ops)
    one = fractional_apply(dec3, a + b, v, ops)
    assert np.abs(two - one).max() <= 1e-9 * np.abs(one).max()
    with pytest.raises(ValueError):
        fractional_apply(dec3, 1.5, v, ops)


def test_truncation_residual_is_reported(rng, caplog):
    ops = assemble_level(2)
    dec = stokes_eigendecomposition(2, count=10)
    v = random_solenoidal(ops, rng)
    with caplog.at_level(logging.WARNING):
        fractional_apply(dec, 0.5, v, ops)
    assert any("truncation residual" in r.message for r in caplog.records)


def test_smoothing_operator_small_alpha_is_projection(rng):
    pair = surrogate_pair(1, 2)
    J = build_smoothing_operator(pair, 1e-6)
    fine = pair.transfer.fine
    V = random_solenoidal(fine, rng, 10)
    for k in range(10):
        v = V[:, k]
        diff = J.apply(v) - pair.transfer.project_to_coarse(v)
        assert pair.transfer.coarse.l2_norm(diff) <= 1e-4 * fine.l2_norm(v)
    np.testing.assert_allclose(J.matrix() @ V[:, 0], J.apply(V[:, 0]), atol=1e-12)


@pytest.mark.parametrize("alpha", [0.25, 0.375, 0.45])
def test_smoothing_operator_is_finite(alpha):
    J = build_smoothing_operator(surrogate_pair(1, 2), alpha)
    assert np.all(np.isfinite(J.matrix()))


def test_smoothing_of_lifted_fields_shrinks():
    ratios = []
    for lev in (1, 2, 3):
        pair = surrogate_pair(lev, 1)
        J = build_smoothing_operator(pair, 0.25)
        u = project_function(pair.transfer.coarse, INITIAL_FIELDS["vortex"])
        v = pair.transfer.lift_to_fine(u)
        d = J.apply(v) - pair.transfer.project_to_coarse(v)
        ratios.append(pair.transfer.coarse.l2_norm(d) / pair.transfer.fine.l2_norm(v))
    assert ratios[0] < 0.3 and np.all(np.diff(ratios) < 0)


def test_lift_then_project_is_contraction():
    pair = surrogate_pair(1, 2)
    # coarse -> fine (eigen-coordinates proj^T) -> coarse (proj)
    op = pair.proj @ pair.proj.T
    assert measure_operator_norm(op, pair.coarse, pair.coarse, 0.0, 0.0) <= 1 + 1e-9


def test_identity_minus_projection_bounds():
    pair = surrogate_pair(1, 2)
    # I - P_h is an orthogonal projection in L2: norm one from L2
    assert identity_minus_norm(pair, None, 0.0) == pytest.approx(1.0, abs=1e-9)
    # and it is smaller on smoother sources
    assert identity_minus_norm(pair, None, 1.0) < identity_minus_norm(pair, None, 0.5) < 1.0
    with pytest.raises(ValueError):
        identity_minus_norm(pair, None, 1.0, target="h2")


def test_smoothing_rate_quick():
    est = measure_smoothing(0.25, 1.0, levels=(1, 2, 3), gap=1)
    assert len(est.norms) == 3 and est.slope > 0.5


def test_inf_sup_and_gauge_mode():
    beta, mu = inf_sup_constant(2, return_spectrum=True)
    assert beta > 0.05
    assert abs(mu[0]) < 1e-10 * mu[-1]
    assert mu[1] > 1e-3 * mu[-1]  # exactly one near-zero eigenvalue
    with pytest.raises(DimensionGuardError):
        inf_sup_constant(3, dense_guard=100)


def test_norm_estimate_validation(tmp_path):
    with pytest.raises(ValueError):
        NormEstimate("x", None, 1.0, 0.0, [1, 2, 3], [1, 0.5, 0.25], [1.0, 0.0, 0.1])
    est = NormEstimate("x", 0.25, 1.0, 0.0, [1, 2, 3], [1, 0.5, 0.25], [1.0, 0.5, 0.25], gap=2)
    assert est.slope == pytest.approx(1.0)
    two = NormEstimate("x", None, 1.0, 0.0, [1, 2], [1, 0.5], [1.0, 0.5])
    assert np.isnan(two.slope)  # fitted only over three or more levels
    write_lab_csv([est], tmp_path / "lab.csv")
    lines = (tmp_path / "lab.csv").read_text().splitlines()
    assert lines[0].split(",") == LAB_HEADER and len(lines) == 4
