import csv

import pytest

from tviss import cli, experiments
from tviss.errors import SolverError


def run(args, tmp_path):
    return cli.main(args + ["--out", str(tmp_path)])


def test_classify_appendix(tmp_path, capsys):
    assert run(["classify", "--system", "appendix"], tmp_path) == 0
    text = (tmp_path / "stability_report.txt").read_text()
    assert "UA: yes" in text and "US: no" in text and "UBRS: no" in text
    assert "UES => UAS => UA and UBRS" in text
    rows = list(csv.reader(open(tmp_path / "norm_table.csv")))
    assert rows[0] == ["t0", "lag", "norm_W"]


def test_classify_scalar_decay(tmp_path, capsys):
    assert run(["classify", "--system", "scalar-decay"], tmp_path) == 0
    assert "UES: yes k=1 w=1" in capsys.readouterr().out


def test_classify_heat_beyond_threshold(tmp_path, capsys):
    assert run(["classify", "--system", "heat", "--r-plus-omega", "12"], tmp_path) == 0
    assert "UES: no" in capsys.readouterr().out


def test_simulate_heat_ensemble(tmp_path):
    assert run(["simulate", "--system", "heat", "--jobs", "2"], tmp_path) == 0
    files = sorted(tmp_path.glob("trajectory_*.csv"))
    assert len(files) == 4
    summary = (tmp_path / "summary.txt").read_text()
    assert "PCG64 seed=20240601" in summary and "escaped: 0" in summary


def test_simulate_blowup_fail_on_escape(tmp_path):
    assert run(["simulate", "--system", "blowup", "--fail-on-escape"], tmp_path) == 2
    assert run(["simulate", "--system", "blowup"], tmp_path) == 0


def test_simulate_empty_ensemble(tmp_path):
    cfg = tmp_path / "empty.ini"
    cfg.write_text("[system]\nkind = matrix-constant\nmatrix = -1\n[ensemble]\nsize = 0\n")
    assert run(["simulate", "--config", str(cfg)], tmp_path) == 0
    assert "members: 0" in (tmp_path / "summary.txt").read_text()


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--system", "tv2", "--seed", "5"], a) == 0
    assert run(["simulate", "--system", "tv2", "--seed", "5", "--jobs", "3"], b) == 0
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_config_error_exit(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[solver]\ndt = -1\n")
    assert run(["simulate", "--config", str(cfg)], tmp_path) == 3
    assert run(["simulate", "--system", "nonexistent"], tmp_path) == 3
    assert run(["simulate"], tmp_path) == 3


def test_solver_error_exit(tmp_path, monkeypatch):
    def boom(cfg, jobs=1):
        raise SolverError("step rejected")

    monkeypatch.setattr(experiments, "simulate", boom)
    assert run(["simulate", "--system", "scalar-decay"], tmp_path) == 4


def test_certify_not_applicable(tmp_path, capsys):
    assert run(["certify", "--system", "ks", "--rho", "45"], tmp_path) == 5
    assert "sigma" in capsys.readouterr().err
    assert run(["certify", "--system", "appendix"], tmp_path) == 5


def test_certify_heat_writes_outputs(tmp_path):
    assert run(["certify", "--system", "heat", "--r-plus-omega", "5"], tmp_path) == 0
    text = (tmp_path / "certification.txt").read_text()
    assert "fitted slope" in text and "FAIL" not in text
    header = next(csv.reader(open(tmp_path / "dissipation.csv")))
    assert header == ["t", "norm_x", "norm_u", "V", "Vdot", "rhs", "violation"]
    assert (tmp_path / "envelope.svg").read_text().startswith("<svg")
    assert (tmp_path / "vdot_scatter.svg").exists()


def test_certify_ks(tmp_path):
    assert run(["certify", "--system", "ks"], tmp_path) == 0
    assert "worst margin" in (tmp_path / "certification.txt").read_text()


def test_reproduce_appendix(tmp_path):
    assert run(["reproduce", "appendix"], tmp_path) == 0
    rows = list(csv.reader(open(tmp_path / "reproduce_appendix.csv")))
    assert rows[0][0] == "k" and len(rows) == 11
    assert "FAIL" not in (tmp_path / "acceptance_appendix.txt").read_text()


def test_unknown_command_exits_via_argparse():
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])
