import csv
import math

import numpy as np
import pytest

from mini_sns import experiments
from mini_sns.experiments import (
    REPORT_HEADER,
    StudyConfig,
    StudyError,
    run_convergence_study,
    run_sample,
    write_report_csv,
    write_sample_csv,
)
from mini_sns.integrator import NonFiniteError
from mini_sns.noise import build_noise_family

TINY = StudyConfig(levels=(1, 2), reference_level=3, T=0.02, steps=8, samples=3)


@pytest.fixture(scope="module")
def tiny_report():
    return run_convergence_study(TINY)


def test_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(levels=())
    with pytest.raises(ValueError):
        StudyConfig(levels=(2, 2))
    with pytest.raises(ValueError):
        StudyConfig(levels=(0, 1))
    with pytest.raises(ValueError):
        StudyConfig(levels=(2, 5), reference_level=4)
    with pytest.raises(ValueError):
        StudyConfig(samples=0)
    with pytest.raises(ValueError):
        StudyConfig(T=0.0)
    with pytest.raises(ValueError):
        StudyConfig(threads=0)
    # equal reference is allowed; its own error is then zero
    assert StudyConfig(levels=(2, 3), reference_level=3).levels == (2, 3)


def test_report_shape(tiny_report):
    rep = tiny_report
    assert rep.levels == [1, 2]
    assert rep.samples_used == 3 and rep.aborted == 0
    assert np.allclose(rep.hs, [math.sqrt(2) / 2, math.sqrt(2) / 4])
    for c, g, s in zip(rep.E_C, rep.E_H1, rep.combined):
        assert c > 0 and g > 0 and s == pytest.approx(c + g)
    assert all(np.isfinite(rep.se_combined))
    assert np.isfinite(rep.slope) and rep.fit_note == ""


def test_error_at_reference_level_is_zero():
    cfg = StudyConfig(levels=(1, 2), reference_level=2, T=0.02, steps=4, samples=1)
    r = run_sample(cfg, 0)
    assert r.sup_l2_sq[2] == 0.0 and r.int_h1_sq[2] == 0.0
    assert r.sup_l2_sq[1] > 0.0


def test_sample_rerun_in_isolation_matches(tiny_report):
    again = run_sample(TINY, 2)
    stored = tiny_report.per_sample[2]
    assert again.sup_l2_sq == stored.sup_l2_sq
    assert again.int_h1_sq == stored.int_h1_sq


def test_samples_use_distinct_paths(tiny_report):
    # the sup error can sit at t = 0 where all samples agree; the time integral cannot
    a, b = tiny_report.per_sample[0], tiny_report.per_sample[1]
    assert a.int_h1_sq[1] != b.int_h1_sq[1]


def test_thread_count_does_not_change_results(tiny_report):
    par = run_convergence_study(StudyConfig(**{**TINY.__dict__, "threads": 3}))
    assert par.combined == tiny_report.combined
    assert par.se_combined == tiny_report.se_combined
    assert [r.sup_l2_sq for r in par.per_sample] == [r.sup_l2_sq for r in tiny_report.per_sample]


def test_zero_data_gives_zero_errors_and_skipped_fit():
    cfg = StudyConfig(levels=(1, 2), reference_level=3, T=0.02, steps=4, samples=2, u0="zero", noise_on=False)
    rep = run_convergence_study(cfg)
    assert rep.combined == [0.0, 0.0]
    assert math.isnan(rep.slope)
    assert "fit skipped" in rep.fit_note


def test_single_level_skips_fit():
    rep = run_convergence_study(StudyConfig(levels=(1,), reference_level=2, T=0.02, steps=4, samples=2))
    assert math.isnan(rep.slope) and rep.fit_note


def test_stride_warning():
    rep = run_convergence_study(StudyConfig(levels=(1, 2), reference_level=2, T=0.02, steps=4, samples=2, snapshot_stride=2))
    assert any("stride" in w for w in rep.warnings)


def test_aborted_samples(monkeypatch):
    real = experiments.simulate

    def flaky(config, path=None, *a, **kw):
        if config.sample in bad:
            raise NonFiniteError("synthetic blow-up")
        return real(config, path, *a, **kw)

    monkeypatch.setattr(experiments, "simulate", flaky)
    cfg = StudyConfig(levels=(1,), reference_level=2, T=0.02, steps=4, samples=10)
    bad = {4}
    rep = run_convergence_study(cfg)
    assert rep.aborted == 1 and rep.samples_used == 9
    assert 4 not in [r.sample for r in rep.per_sample]
    bad = {1, 4}
    with pytest.raises(StudyError, match="aborted"):
        run_convergence_study(cfg)


def test_large_kappa_refused():
    loud = build_noise_family("default").scaled(20.0).with_kappa(2)
    with pytest.raises(StudyError, match="kappa"):
        run_convergence_study(StudyConfig(levels=(1,), reference_level=2, steps=2, samples=1, noise=loud))


def test_csv_outputs(tiny_report, tmp_path):
    write_report_csv(tiny_report, tmp_path / "study.csv")
    write_sample_csv(tiny_report, tmp_path / "samples.csv")
    rows = list(csv.reader(open(tmp_path / "study.csv")))
    assert rows[0] == REPORT_HEADER
    assert len(rows) == 3
    assert float(rows[1][4]) == tiny_report.combined[0]
    rows = list(csv.reader(open(tmp_path / "samples.csv")))
    assert rows[0][:2] == ["sample", "level"] and len(rows) == 1 + 3 * 2
