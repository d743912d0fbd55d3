import logging

import numpy as np
import pytest

from mini_sns.integrator import (
    DISSIPATION_RULE,
    TRAJECTORY_HEADER,
    NonFiniteError,
    SimConfig,
    TrajectoryState,
    deterministic_energy_defect,
    energy_refinement,
    energy_report,
    initial_velocity,
    read_coefficients,
    resolve_noise,
    simulate,
    solve_navier_stokes,
    step,
    write_coefficients,
    write_snapshots,
    write_trajectory_csv,
)
from mini_sns.noise import build_noise_family, sample_path
from mini_sns.operators import assemble_level

SHORT = SimConfig(T=0.02, steps=8, level=2)


def test_zero_initial_data_stays_zero():
    traj = simulate(SHORT.with_(u0="zero"))
    assert np.all(traj.snapshots == 0.0)
    assert np.all(energy_report(traj).residual == 0.0)


def test_stokes_step_is_contraction():
    traj = simulate(SimConfig(T=0.05, steps=16, level=3, noise_on=False, nonlinearity=False))
    assert np.all(np.diff(traj.l2) < 0)


def test_exact_discrete_energy_identity():
    assert deterministic_energy_defect(SimConfig(T=0.05, steps=16, level=3)) < 1e-10


def test_deterministic_energy_drift_shrinks():
    cfg = SimConfig(T=0.05, level=2, noise_on=False)
    ref = energy_refinement(cfg, (16, 32, 64))
    assert ref.decreasing
    assert ref.slope > 0.4


def test_simulate_is_deterministic():
    a, b = simulate(SHORT), simulate(SHORT)
    np.testing.assert_array_equal(a.l2, b.l2)
    np.testing.assert_array_equal(a.h1, b.h1)
    np.testing.assert_array_equal(a.snapshots, b.snapshots)


def test_snapshot_stride_only_thins_storage():
    a = simulate(SHORT)
    b = simulate(SHORT.with_(snapshot_stride=3))
    np.testing.assert_array_equal(a.l2, b.l2)
    np.testing.assert_array_equal(b.snapshot_steps, [0, 3, 6, 8])
    np.testing.assert_array_equal(b.snapshots, a.snapshots[[0, 3, 6, 8]])


def test_zero_amplitude_noise_is_noise_off():
    silent = build_noise_family([(s, 0.0) for s in ("uniform_x", "uniform_y", "strain", "rotation")])
    a = simulate(SHORT.with_(noise=silent))
    b = simulate(SHORT.with_(noise_on=False))
    np.testing.assert_allclose(a.snapshots, b.snapshots, atol=1e-14)


def test_term_dropout_matches_deterministic_solver():
    cfg = SHORT.with_(noise_on=False, ito_correction=False)
    np.testing.assert_allclose(simulate(cfg).final.u, solve_navier_stokes(cfg), atol=1e-12)


def test_divergence_preserved_every_step():
    traj = simulate(SHORT)
    ops = assemble_level(2, resolve_noise("default"))
    for u in traj.snapshots[1:]:
        assert np.linalg.norm(ops.B @ u) <= 1e-9 * np.linalg.norm(u)


def test_blow_up_is_reported():
    with np.errstate(all="ignore"), pytest.raises(NonFiniteError) as err:
        simulate(SHORT.with_(u0_amplitude=1e160))
    assert err.value.step >= 1


def test_path_shape_is_checked():
    with pytest.raises(ValueError):
        simulate(SHORT, sample_path(0, 0, 4, SHORT.dt, 4))
    with pytest.raises(ValueError):
        simulate(SHORT, sample_path(0, 0, 8, SHORT.dt, 3))


def test_increment_row_length_checked():
    ops = assemble_level(2, resolve_noise("default"))
    state = TrajectoryState(np.zeros(ops.n_velocity), np.zeros(ops.B.shape[0]), 0.0, 0)
    with pytest.raises(ValueError, match="increment row"):
        step(state, ops, 0.01, [0.1, 0.2])


@pytest.mark.parametrize("kw", [dict(T=0.0), dict(steps=0), dict(snapshot_stride=0), dict(level=-1), dict(pressure_gauge="x")])
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


def test_large_kappa_warns(caplog):
    loud = build_noise_family("default").scaled(5.0).with_kappa(2)
    assert loud.kappa_estimate >= 0.75
    with caplog.at_level(logging.WARNING):
        simulate(SimConfig(T=0.01, steps=2, level=2, noise=loud))
    assert any("kappa_estimate" in r.message for r in caplog.records)


def test_coefficient_files(tmp_path):
    traj = simulate(SHORT)
    paths = write_snapshots(traj, tmp_path / "snaps")
    assert len(paths) == SHORT.steps + 1
    u, level = read_coefficients(paths[-1])
    assert level == 2
    np.testing.assert_array_equal(u, traj.final.u)
    # a stored field as initial data: already solenoidal, so projection returns it
    again = simulate(SHORT.with_(u0=str(paths[-1])))
    np.testing.assert_allclose(again.snapshots[0], traj.final.u, atol=1e-12 * np.abs(traj.final.u).max())
    with pytest.raises(ValueError, match="level"):
        simulate(SHORT.with_(level=3, u0=str(paths[-1])))


def test_coefficient_file_count_checked(tmp_path):
    p = tmp_path / "bad.txt"
    write_coefficients(p, np.ones(5), level=2)
    p.write_text(p.read_text() + "1.0\n")
    with pytest.raises(ValueError, match="announces"):
        read_coefficients(p)


def test_unknown_initial_field():
    ops = assemble_level(2)
    with pytest.raises(ValueError, match="unknown initial field"):
        initial_velocity(ops, "hurricane")


def test_trajectory_csv(tmp_path):
    traj = simulate(SHORT)
    write_trajectory_csv(traj, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].split(",") == TRAJECTORY_HEADER
    assert len(lines) == SHORT.steps + 2
    assert energy_report(traj).dissipation_rule == DISSIPATION_RULE == "implicit-point"
