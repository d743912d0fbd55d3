import csv
import subprocess
import sys
import time

import pytest

from mini_sns import lab
from mini_sns.cli import build_parser, cli_main

SMALL = """
level = 2
steps = 8
T = 0.02
levels = 1 2
reference_level = 3
samples = 2
energy_steps = 8 16 32
"""


@pytest.fixture
def small_cfg(tmp_path):
    f = tmp_path / "small.cfg"
    f.write_text(SMALL)
    return f


def _manifest(out):
    text = (out / "manifest.txt").read_text()
    head = text.split("\n\n", 1)[0]
    return dict(line.split(" = ", 1) for line in head.splitlines())


def test_mesh_info(capsys):
    assert cli_main(["mesh-info", "--max-level", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[:3] == ["level", "vertices", "triangles"]
    assert len(lines) == 5
    # level 1: 9 vertices, 8 triangles, 18 free velocity dofs
    assert lines[2].split()[:3] == ["1", "9", "8"] and lines[2].split()[4] == "18"


def test_check_passes_fast(capsys):
    t0 = time.perf_counter()
    assert cli_main(["check"]) == 0
    assert time.perf_counter() - t0 < 60
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS level=") == 28


def test_simulate_is_deterministic(small_cfg, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli_main(["simulate", "--config", str(small_cfg), "--out", str(a)]) == 0
    assert cli_main(["--config", str(small_cfg), "--out", str(b), "simulate"]) == 0
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    rows = list(csv.reader(open(a / "trajectory.csv")))
    assert rows[0][0] == "step" and len(rows) == 1 + 9
    m = _manifest(a)
    assert m["command"] == "simulate" and m["config_source"] == str(small_cfg)
    assert m["noise_modes"] == "4" and float(m["kappa_estimate"]) < 0.5
    assert {"version", "git_describe", "config_hash", "C_zeta", "dissipation_rule"} <= m.keys()


def test_seed_override_changes_output_and_hash(small_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli_main(["simulate", "--config", str(small_cfg), "--out", str(a)])
    cli_main(["simulate", "--config", str(small_cfg), "--out", str(b), "--seed", "5"])
    assert (a / "trajectory.csv").read_bytes() != (b / "trajectory.csv").read_bytes()
    assert _manifest(a)["config_hash"] != _manifest(b)["config_hash"]
    assert "seed = 5" in (b / "manifest.txt").read_text()


def test_snapshots_flag(small_cfg, tmp_path):
    out = tmp_path / "s"
    assert cli_main(["simulate", "--config", str(small_cfg), "--out", str(out), "--snapshots"]) == 0
    assert len(list((out / "snapshots").iterdir())) == 9


def test_study_and_thread_override(small_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli_main(["study", "--config", str(small_cfg), "--out", str(a)]) == 0
    assert cli_main(["study", "--config", str(small_cfg), "--out", str(b), "--threads", "2"]) == 0
    for name in ("study.csv", "study_samples.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert "fitted_slope" in _manifest(a)


def test_energy(small_cfg, tmp_path):
    out = tmp_path / "e"
    assert cli_main(["energy", "--config", str(small_cfg), "--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "energy.csv")))
    assert rows[0][0] == "steps" and [r[0] for r in rows[1:]] == ["8", "16", "32"]
    assert float(_manifest(out)["deterministic_identity_defect"]) < 1e-10


def test_operator_lab_wiring(monkeypatch, tmp_path):
    est = lab.NormEstimate("stub", None, 0.0, 0.0, [1, 2, 3], [0.7, 0.35, 0.18], [1.0, 0.5, 0.25])
    monkeypatch.setattr(lab, "run_operator_lab", lambda quick=False, alpha=0.25: [est])
    out = tmp_path / "lab"
    assert cli_main(["operator-lab", "--quick", "--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "operator_lab.csv")))
    assert rows[0] == lab.LAB_HEADER and len(rows) == 4
    assert _manifest(out)["quick"] == "True"


def test_missing_config_writes_nothing(tmp_path, capsys):
    out = tmp_path / "never"
    assert cli_main(["simulate", "--config", str(tmp_path / "nope.cfg"), "--out", str(out)]) == 2
    assert "not found" in capsys.readouterr().err
    assert not out.exists()


def test_invalid_config_value(tmp_path, capsys):
    f = tmp_path / "bad.cfg"
    f.write_text("steps = -1\n")
    out = tmp_path / "never"
    assert cli_main(["simulate", "--config", str(f), "--out", str(out)]) == 2
    assert not out.exists()


def test_bad_subcommand_and_help(capsys):
    assert cli_main(["frobnicate"]) == 2
    assert cli_main([]) == 2
    assert cli_main(["--help"]) == 0
    assert "subcommand" in capsys.readouterr().out


def test_parser_lists_all_subcommands():
    text = build_parser().format_help()
    for name in ("mesh-info", "check", "simulate", "study", "operator-lab", "energy"):
        assert name in text


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mini_sns", "mesh-info", "--max-level", "1"], capture_output=True, text=True, cwd=tmp_path)
    assert r.returncode == 0 and "vertices" in r.stdout
