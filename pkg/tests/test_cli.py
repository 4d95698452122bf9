import numpy as np
import pytest

from peakdescent import cli
from peakdescent.config import RunConfig
from peakdescent.errors import ConfigError
from peakdescent.fem import assemble_stiffness, assemble_weighted_mass
from peakdescent.mesh import build_structured_mesh
from peakdescent.spectral import lowest_eigenpairs


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


BASE_INDEFINITE = """
[problem]
kind = indefinite
V = 0.0
p = 4.0

[mesh]
n = 8

[mpa]
eps_stop = 1e-4

[run]
u0 = poly_bump_signed
output = {out}
figures = {figures}
"""

BASE_SYSTEM = """
[problem]
kind = system
mu = 1.0, 4.0
beta = -1.0

[mesh]
n = 8

[run]
u0 = poly_bump
output = {out}
figures = off
"""


def test_solve_writes_outputs(tmp_path, capsys):
    out = tmp_path / "runs"
    cfg = _write(tmp_path, BASE_INDEFINITE.format(out=out, figures="on"))
    assert cli.main(["solve", cfg]) == 0
    captured = capsys.readouterr().out
    assert "status=converged" in captured
    rundir = next(out.iterdir())
    for name in ("solution.csv", "trace.csv", "summary.txt", "effective.cfg",
                 "eigs.csv", "solution.png", "trace.png"):
        assert (rundir / name).exists(), name
    summary = (rundir / "summary.txt").read_text().splitlines()[0]
    fields = dict(kv.split("=") for kv in summary.split())
    assert fields["status"] == "converged"
    assert float(fields["grad_norm"]) <= 1e-4
    assert int(fields["dim_neg"]) == 0


def test_solve_system_summary(tmp_path, capsys):
    out = tmp_path / "runs"
    cfg = _write(tmp_path, BASE_SYSTEM.format(out=out))
    assert cli.main(["solve", cfg]) == 0
    summary = capsys.readouterr().out.splitlines()[0]
    fields = dict(kv.split("=") for kv in summary.split())
    assert "max_u1" in fields and "max_u2" in fields
    assert float(fields["max_u1"]) > 0
    rundir = next(out.iterdir())
    assert not (rundir / "solution.png").exists()  # figures off


def test_solve_is_deterministic(tmp_path):
    out = tmp_path / "runs"
    cfg = _write(tmp_path, BASE_INDEFINITE.format(out=out, figures="off"))
    assert cli.main(["solve", cfg]) == 0
    rundir = next(out.iterdir())
    first = (rundir / "trace.csv").read_bytes()
    assert cli.main(["solve", cfg]) == 0
    assert (rundir / "trace.csv").read_bytes() == first


def test_solve_max_iters_exit_code(tmp_path):
    text = BASE_INDEFINITE.format(out=tmp_path / "runs", figures="off")
    text = text.replace("eps_stop = 1e-4", "eps_stop = 1e-13\nmax_iters = 1")
    cfg = _write(tmp_path, text)
    assert cli.main(["solve", cfg]) == 2


def test_malformed_config_makes_no_outputs(tmp_path, capsys):
    out = tmp_path / "runs"
    bad = BASE_INDEFINITE.format(out=out, figures="on") + "\nbogus_key = 1\n"
    cfg = _write(tmp_path, bad)
    assert cli.main(["solve", cfg]) == 64
    assert "config error" in capsys.readouterr().err
    assert not out.exists()


def test_missing_config_file(tmp_path):
    assert cli.main(["solve", str(tmp_path / "none.cfg")]) == 64


@pytest.mark.parametrize("mutation", [
    ("kind = indefinite", "kind = elliptic"),
    ("n = 8", "n = 1"),
    ("V = 0.0", "V = not-a-number"),
    ("eps_stop = 1e-4", "eps_stop = -1"),
])
def test_invalid_config_values(tmp_path, mutation):
    text = BASE_INDEFINITE.format(out=tmp_path / "runs", figures="off")
    text = text.replace(*mutation)
    assert cli.main(["solve", _write(tmp_path, text)]) == 64


def test_config_roundtrip(tmp_path):
    out = tmp_path / "runs"
    cfg = _write(tmp_path, BASE_SYSTEM.format(out=out))
    config = RunConfig.from_file(cfg)
    config.write_effective(tmp_path / "effective.cfg")
    back = RunConfig.from_file(tmp_path / "effective.cfg")
    assert back == config
    assert back.config_hash() == config.config_hash()


def test_config_rejects_bad_system_inputs(tmp_path):
    text = BASE_SYSTEM.format(out=tmp_path / "runs")
    with pytest.raises(ConfigError):
        RunConfig.from_text(text.replace("mu = 1.0, 4.0", "mu = 1.0, -4.0"))
    with pytest.raises(ConfigError):
        RunConfig.from_text(text.replace("beta = -1.0", "beta = 1, 2, 3"))
    with pytest.raises(ConfigError):
        RunConfig.from_text(text.replace("[problem]\nkind = system", "[problem]"))


def test_solve_from_field_file(tmp_path):
    out = tmp_path / "runs"
    cfg = _write(tmp_path, BASE_INDEFINITE.format(out=out, figures="off"))
    assert cli.main(["solve", cfg]) == 0
    rundir = next(out.iterdir())
    text = BASE_INDEFINITE.format(out=tmp_path / "runs2", figures="off")
    text = text.replace("u0 = poly_bump_signed",
                        f"u0 = {rundir / 'solution.csv'}")
    cfg2 = _write(tmp_path, text, name="warm.cfg")
    assert cli.main(["solve", cfg2]) == 0


def test_eig_command(tmp_path, capsys):
    text = """
[problem]
kind = indefinite
V = -50.0

[mesh]
n = 32

[run]
output = {out}
"""
    cfg = _write(tmp_path, text.format(out=tmp_path / "runs"))
    assert cli.main(["eig", cfg]) == 0
    out = capsys.readouterr().out
    assert "dim_neg=3" in out
    rundir = next((tmp_path / "runs").iterdir())
    lines = (rundir / "eigs.csv").read_text().strip().splitlines()
    assert lines[0] == "index,lambda,residual"
    assert len(lines) >= 9


def test_eig_requires_indefinite(tmp_path):
    cfg = _write(tmp_path, BASE_SYSTEM.format(out=tmp_path / "runs"))
    assert cli.main(["eig", cfg]) == 64


def test_eig_gap_violation_exit_code(tmp_path, capsys):
    mesh = build_structured_mesh(16)
    A = assemble_stiffness(mesh)
    B = assemble_weighted_mass(mesh, 0.0)
    M = assemble_weighted_mass(mesh, 1.0)
    lam1 = float(lowest_eigenpairs(A, B, M, 1)[0][0])
    text = f"""
[problem]
kind = indefinite
V = {-lam1!r}

[mesh]
n = 16

[run]
output = {tmp_path / "runs"}
"""
    assert cli.main(["eig", _write(tmp_path, text)]) == 1
    assert "spectral-gap" in capsys.readouterr().err


def test_reproduce_unknown_table(tmp_path, capsys):
    assert cli.main(["reproduce", "table9",
                     "--output", str(tmp_path / "runs")]) == 64


def test_reproduce_table1_small_mesh(tmp_path, capsys, monkeypatch):
    # command machinery on a one-row slice; the full table runs in the
    # acceptance suite at the reference resolution
    monkeypatch.setattr(cli, "_REFERENCE_N", 16)
    monkeypatch.setattr(cli, "REFERENCE_INDEFINITE",
                        cli.REFERENCE_INDEFINITE[:1])
    assert cli.main(["reproduce", "table1",
                     "--output", str(tmp_path / "runs")]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 1


def test_reproduce_reports_mismatch(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(cli, "_REFERENCE_N", 16)
    monkeypatch.setattr(cli, "REFERENCE_INDEFINITE",
                        ((0.0, 99.0, 0.01, 0),))
    assert cli.main(["reproduce", "table1",
                     "--output", str(tmp_path / "runs")]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_reproduce_table2_small_mesh(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(cli, "_REFERENCE_N", 16)
    assert cli.main(["reproduce", "table2",
                     "--output", str(tmp_path / "runs")]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3


def test_usage_errors():
    assert cli.main([]) == 64
    assert cli.main(["unknown-command"]) == 64
