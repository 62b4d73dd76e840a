import json
from pathlib import Path

import pytest

from spongedim.cli import run
from spongedim.io import dump_spec, read_csv_rows
from spongedim.model import BaseTriple, make_sierpinski


@pytest.fixture
def files(tmp_path, cube, asym):
    (tmp_path / "cube.json").write_text(dump_spec(cube))
    (tmp_path / "asym.json").write_text(dump_spec(asym))
    (tmp_path / "bad.json").write_text('{"d": 3, "tree": [{"ratio": 1.5, "children": []}]}')
    (tmp_path / "broken.json").write_text('{"d": 3,')
    return tmp_path


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_validate_ok(files, capsys):
    assert run(["validate", str(files / "cube.json")]) == 0
    assert _json(capsys) == {"ok": True}


def test_validate_failure(files, capsys):
    assert run(["validate", str(files / "bad.json")]) == 1
    out = _json(capsys)
    assert out["ok"] is False and out["violations"]


def test_malformed_spec_error_object(files, capsys):
    assert run(["dim", str(files / "broken.json")]) == 1
    out = _json(capsys)
    assert {"path", "constraint", "values"} <= set(out)


def test_invalid_spec_in_command(files, capsys):
    assert run(["vp", str(files / "bad.json")]) == 1
    assert _json(capsys)["constraint"] == "ratio_range"


def test_bad_arguments(files, capsys):
    assert run(["vp", str(files / "asym.json"), "--starts", "many"]) == 1


def test_vp_shape(files, capsys):
    assert run(["vp", str(files / "asym.json"), "--starts", "4", "--seed", "7"]) == 0
    out = _json(capsys)
    assert {"value", "argmax", "spread"} <= set(out)
    assert set(out["argmax"]) == {"1.1", "1.2", "2.1"}


def test_dim_and_weights(files, capsys):
    (files / "p.json").write_text('{"1.1": 0.2, "1.2": 0.3, "2.1": 0.5}')
    assert run(["dim", str(files / "asym.json"), "--weights", str(files / "p.json")]) == 0
    out = _json(capsys)
    assert len(out["lambdas"]) == 2


def test_family_solver_failure(files, capsys):
    assert run(["family", str(files / "asym.json"), "--t", "0.9", "--rho", "0.5"]) == 2
    assert _json(capsys)["error"] == "CascadeError"


def test_family_ok(files, capsys):
    assert run(["family", str(files / "asym.json"), "--t", "0.3", "--rho", "0.5"]) == 0
    assert "residuals" in _json(capsys)


def test_sample_estimate(files, capsys):
    assert run(["sample", str(files / "asym.json"), "--n", "5", "--seed", "3"]) == 0
    assert len(_json(capsys)["word"]) == 5
    assert run(["estimate", str(files / "asym.json"), "--n", "200", "--trials", "5", "--seed", "1"]) == 0
    assert _json(capsys)["trials"] == 5


def test_approx_csv(files, capsys):
    out = files / "boxes.csv"
    assert run(["approx", str(files / "cube.json"), "--n", "1", "--out", str(out)]) == 0
    assert len(read_csv_rows(out.read_text())) == 8


def test_approx_cap(files, capsys):
    assert run(["approx", str(files / "cube.json"), "--n", "3", "--cap", "10"]) == 2


def test_boxcount(files, capsys):
    assert run(["boxcount", str(files / "cube.json"), "--n", "3"]) == 0
    assert abs(_json(capsys)["slope"] - 3.0) < 1e-9


def test_render(files, capsys):
    out = files / "cube.svg"
    assert run(["render", str(files / "cube.json"), "--n", "1", "--plane", "yz", "--out", str(out)]) == 0
    assert out.read_text().count("<rect ") == 5  # background + 4 tiles


def test_sweep_row_count(files, capsys):
    out = files / "sweep.csv"
    argv = ["sweep", str(files / "asym.json"), "--eps", "0.005,0.01,0.02", "--k", "8", "--seed", "1"]
    assert run(argv + ["--starts", "1", "--out", str(out)]) == 0
    rows = read_csv_rows(out.read_text())
    assert len(rows) == 25
    assert rows[0]["epsilon"] == "0.0"


def test_bounds(files, capsys):
    assert run(["bounds", str(files / "asym.json")]) == 0
    assert _json(capsys)["hip"]["holds"] is True
