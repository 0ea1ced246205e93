import json

import pytest

from bianchi_qe import config
from bianchi_qe.main import run
from bianchi_qe.utils.db import get_reports


@pytest.fixture
def db_path(tmp_path, monkeypatch):
    path = str(tmp_path / "cli.db")
    monkeypatch.setattr(config, "DB_PATH", path)
    return path


def test_field(capsys):
    assert run(["field", "--d", "-5"]) == 0
    out = capsys.readouterr().out
    assert "d_F = -20, w_F = 2" in out
    assert "ramified" in out and "inert" in out and "split" in out
    assert "above 11: inert" in out


def test_classgroup(capsys):
    assert run(["classgroup", "--d", "-5"]) == 0
    assert "h_F = 2, Cl_F ≅ Z/2" in capsys.readouterr().out


def test_lfun(capsys):
    assert run(["lfun", "--d", "-5", "--chi", "1", "--s", "2"]) == 0
    assert capsys.readouterr().out.startswith("L(")


def test_bad_input_exits_with_two(tmp_path):
    assert run(["lfun", "--d", "-5", "--chi", "5", "--s", "2"]) == 2
    assert run(["eisenstein", "--d", "-1", "--point", "0,0,1", "--s", "3"]) == 2
    assert run(["qe", "scan", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"d": -5, "boxes": []}))
    assert run(["qe", "scan", "--config", str(bad)]) == 2
    with pytest.raises(SystemExit):
        run(["eisenstein", "--d", "-5", "--point", "0,0,-1", "--s", "3"])


def test_verify_json_and_record(capsys, db_path):
    assert run(["verify", "orthogonality", "--d", "-5", "--json", "--record"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["name"] == "orthogonality" and report["passed"]
    assert "runtime" not in report
    (stored,) = get_reports("orthogonality", db_path)
    assert stored[4] is True


def test_verify_exact_r_series(capsys):
    assert run(["verify", "r-series", "--exact"]) == 0
    assert capsys.readouterr().out.startswith("PASS r-series")


def test_bounds_scan(capsys):
    argv = ["bounds", "scan", "--kind", "inv_L", "--d", "-5", "--t-min", "5"]
    assert run([*argv, "--t-max", "10", "--t-step", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,abs_inv_L_one,bound_shape"
    assert len(lines) == 3


def test_eisenstein_value(capsys):
    argv = ["eisenstein", "--d", "-5", "--j", "1", "--point", "0.1,0.2,1.1"]
    assert run([*argv, "--s", "3"]) == 0
    assert "terms" in capsys.readouterr().out


@pytest.mark.slow
def test_qe_scan_writes_csv(tmp_path, db_path):
    out = tmp_path / "scan.csv"
    scan = {
        "d": -5,
        "t_grid": {"min": 10, "max": 10, "step": 1},
        "boxes": [{"x": [0, 0.3], "y": [0, 0.3], "r": [3, 3.5], "label": "A"}],
        "quad_order": 16,
        "out": str(out),
    }
    path = tmp_path / "scan.json"
    path.write_text(json.dumps(scan))
    assert run(["qe", "scan", "--config", str(path), "--record"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("t,box_label,mu")
    assert lines[1].startswith("10,A,")


@pytest.mark.slow
def test_verify_adelic_sample_count(capsys):
    assert run(["verify", "adelic", "--samples", "4", "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["params"]["samples"] == 4
