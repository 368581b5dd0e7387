import json

import numpy as np
import pytest

from rps.cli import main
from rps.config import load_config, parse_override, schema
from rps.errors import ConfigurationError

SMALL = {
    "name": "small",
    "dimension": 2,
    "coarse_divisions": 4,
    "refinements": 2,
    "coeff": {"kind": "trig_multiscale_2d"},
    "layers": [1, 2],
    "rhs": "sin_sin",
    "problem": {"type": "elliptic"},
    "outputs": {"dumps": ["mesh", "field", "matrices", "solution"]},
}


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    data = json.loads(json.dumps(data))
    data.setdefault("outputs", {})["dir"] = str(tmp_path / "out")
    p.write_text(json.dumps(data))
    return p


def manifest(tmp_path):
    return json.loads((tmp_path / "out" / "manifest.json").read_text())


def test_shipped_configs_validate(configs_dir):
    paths = sorted(configs_dir.glob("*.json")) + sorted(configs_dir.glob("fullscale/*.json"))
    assert paths
    for p in paths:
        load_config(p)


def test_schema_is_shipped():
    assert schema()["type"] == "object"


def test_parse_override():
    assert parse_override("layers=1..3") == (["layers"], [1, 2, 3])
    assert parse_override("solver.tol=1e-8") == (["solver", "tol"], 1e-8)
    assert parse_override("rhs=one") == (["rhs"], "one")
    with pytest.raises(ConfigurationError):
        parse_override("novalue")


def test_bad_divisions_named(tmp_path, capsys):
    p = write(tmp_path, dict(SMALL, coarse_divisions=1))
    assert main(["run", str(p)]) == 1
    assert "coarse_divisions" in capsys.readouterr().err


@pytest.mark.parametrize("patch,field", [
    ({"dimension": 3}, "dimension"),
    ({"coeff": {"kind": "random_fourier_1d", "seed": 1}}, "coeff.kind"),
    ({"problem": {"type": "wave"}}, "problem.T"),
    ({"layers": 0}, "layers"),
    ({"bogus": 1}, "bogus"),
])
def test_config_errors(tmp_path, capsys, patch, field):
    p = write(tmp_path, dict(SMALL, **patch))
    assert main(["run", str(p)]) == 1
    err = capsys.readouterr().err
    assert "configuration error" in err
    assert field.split(".")[0] in err or "Additional properties" in err


def test_unknown_subcommand(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1


def test_solver_error_exit_code(tmp_path):
    p = write(tmp_path, dict(SMALL, solver={"method": "pcg", "max_iter": 1}))
    assert main(["basis", "--config", str(p)]) == 2


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    p = write(tmp_path, SMALL)
    assert main(["run", str(p), "--override", f"outputs.dir={blocker}/x"]) == 3


def test_run_solve_and_manifest(tmp_path):
    p = write(tmp_path, SMALL)
    assert main(["run", str(p)]) == 0
    m = manifest(tmp_path)
    names = {e["path"] for e in m["files"]}
    assert {"errors.csv", "run.log", "mesh_fine.txt", "field.csv", "stiffness.coo"} <= names
    assert m["command"] == "solve"


def test_determinism_across_reruns_and_workers(tmp_path):
    p = write(tmp_path, SMALL)
    assert main(["run", str(p), "--workers", "1"]) == 0
    first = manifest(tmp_path)
    assert main(["run", str(p), "--workers", "3"]) == 0
    assert manifest(tmp_path) == first


@pytest.mark.parametrize("command,expected", [
    ("mesh-info", "mesh_info.json"),
    ("basis", "basis_report_l1.csv"),
    ("decay", "decay.csv"),
    ("gram", "gram_report.json"),
])
def test_subcommands(tmp_path, command, expected):
    p = write(tmp_path, SMALL)
    assert main([command, "--config", str(p)]) == 0
    assert (tmp_path / "out" / expected).exists()


def test_mesh_info_counts(tmp_path):
    p = write(tmp_path, SMALL)
    assert main(["mesh-info", "--config", str(p)]) == 0
    info = json.loads((tmp_path / "out" / "mesh_info.json").read_text())
    assert info["coarse"] == {"vertices": 25, "cells": 32, "coarse_nodes": 9}
    assert info["fine"]["cells"] == 32 * 16


def test_override_layers(tmp_path):
    p = write(tmp_path, SMALL)
    assert main(["run", str(p), "--override", "layers=1..3"]) == 0
    assert manifest(tmp_path)["config"]["layers"] == [1, 2, 3]


def test_time_dependent_runs(tmp_path):
    cfg = dict(SMALL, layers=[1, 2], problem={"type": "wave", "T": 0.1, "steps": 10})
    assert main(["run", str(write(tmp_path, cfg))]) == 0
    assert (tmp_path / "out" / "wave_errors.csv").exists()
    cfg["problem"]["type"] = "parabolic"
    assert main(["run", str(write(tmp_path, cfg))]) == 0
    assert (tmp_path / "out" / "parabolic_errors.csv").exists()


def test_recover_and_missing_measurements(tmp_path):
    meas = tmp_path / "m.csv"
    meas.write_text("node,value\n" + "".join(f"{i},{np.sin(i)}\n" for i in range(9)))
    cfg = dict(SMALL, problem={"type": "recover", "measurements": "m.csv", "M": 1.0})
    assert main(["run", str(write(tmp_path, cfg))]) == 0
    rep = json.loads((tmp_path / "out" / "recovery_report.json").read_text())
    assert "C * H * M" in rep["bound"]
    meas.write_text("node,value\n0,1.0\n")
    assert main(["run", str(write(tmp_path, cfg))]) == 1
