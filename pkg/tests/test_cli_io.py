import csv
import json

import numpy as np
import pytest

from wkgsim.cli_io import (CHECKS, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, apply_overrides,
                           expand_grid, load_config, main, run_sweep, to_json, validate_config)
from wkgsim.errors import ConfigurationError

SMALL = {
    "grid": {"r_max": 10.0, "dr": 0.04},
    "time": {"t_final": 7.0, "cfl": 0.4, "store_dt": 0.05},
    "coeffs": {"B": -1.0, "c": 1.0},
    "data": {"epsilon": 0.01, "profile": "polynomial"},
    "checks": ["frame", "box", "decomposition"],
    "diagnostics": {"ds": 1.0, "slices": [3.0, 5.0]},
}


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def test_malformed_json_exit_2(tmp_path):
    assert main(["run", "--config", _write(tmp_path, "{ not json")]) == EXIT_CONFIG


@pytest.mark.parametrize("patch", [
    {"grid": {"r_max": 8.0}},              # outer boundary inside the domain of dependence
    {"time": {"cfl": 1.5}},
    {"coeffs": {"c": 0.0}},
    {"coeffs": {"typo": 1.0}},
    {"surprise": {}},
    {"checks": ["nonsense"]},
    {"data": {"profile": "square"}},
    {"bootstrap": {"delta": 0.5}},
    {"grid": {"n": 100, "dr": 0.1}},
])
def test_invalid_configs(tmp_path, patch):
    raw = json.loads(json.dumps(SMALL))
    for sec, val in patch.items():
        if isinstance(val, dict) and isinstance(raw.get(sec), dict):
            raw[sec].update(val)
        else:
            raw[sec] = val
    with pytest.raises(ConfigurationError):
        validate_config(raw)
    assert main(["run", "--config", _write(tmp_path, raw), "--output", str(tmp_path)]) \
        == EXIT_CONFIG


def test_unknown_check_flag(tmp_path):
    assert main(["run", "--config", _write(tmp_path, SMALL), "--checks", "nope"]) == EXIT_CONFIG


def test_defaults_and_grid_by_points(tmp_path):
    cfg = load_config(_write(tmp_path, {"grid": {"r_max": 28.0, "n": 2801}}))
    assert cfg["grid"]["dr"] is None
    assert cfg["coeffs"]["B"] == -1.0
    assert set(cfg["checks"]) <= set(CHECKS)


def test_json_seventeen_digits():
    x = 0.1 + 0.2
    out = to_json({"a": x, "b": [1.0, np.float64(np.pi)], "c": np.nan, "d": True, "e": None})
    back = json.loads(out)
    assert back["a"] == x and back["b"][1] == np.pi
    assert back["c"] is None and back["d"] is True
    assert "0.30000000000000004" in out


def test_small_run_end_to_end(tmp_path):
    out = tmp_path / "run"
    code = main(["run", "--config", _write(tmp_path, SMALL), "--output", str(out)])
    assert code == EXIT_OK
    cert = json.loads((out / "certification.json").read_text())
    assert cert["all_pass"] is True
    assert set(cert["checks"]) == {"frame", "box", "decomposition"}
    for res in cert["checks"].values():
        assert res["reference"] and not any(ch.isdigit() for ch in res["reference"])
    for name in ("energies.csv", "decomposition.csv"):
        assert (out / name).stat().st_size > 0
    assert sorted(p.name for p in (out / "slices").iterdir()) == ["slice_s0003.000.csv",
                                                                   "slice_s0005.000.csv"]


def test_single_thread_runs_are_bit_identical(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}"
        main(["run", "--config", _write(tmp_path, SMALL), "--output", str(out), "--seed", "3",
              "--checks", "frame,ode"])
        outs.append(out)
    for name in ("energies.csv", "slices/slice_s0005.000.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_numeric_blowup_exit_3(tmp_path):
    raw = dict(SMALL, coeffs={"B": 5.0, "c": 1.0}, data={"epsilon": 40.0, "profile": "polynomial"})
    assert main(["run", "--config", _write(tmp_path, raw), "--output", str(tmp_path / "b")]) \
        == EXIT_NUMERIC


def test_failed_check_exit_1(tmp_path):
    raw = dict(SMALL, checks=["rays"])   # default rays leave the short run
    out = tmp_path / "f"
    assert main(["run", "--config", _write(tmp_path, raw), "--output", str(out)]) == 1
    cert = json.loads((out / "certification.json").read_text())
    assert "RangeError" in cert["checks"]["rays"]["error"]


def test_sweep_grid_expansion():
    assert expand_grid({}) == []
    combos = expand_grid({"data.epsilon": [1, 2], "coeffs.B": [-1, -2, -3]})
    assert len(combos) == 6
    raw = apply_overrides({"grid": {"n": 10}}, {"grid.dr": 0.1, "coeffs.B": -2})
    assert raw == {"grid": {"dr": 0.1}, "coeffs": {"B": -2}}
    with pytest.raises(ConfigurationError):
        expand_grid({"data.epsilon": []})


def test_empty_sweep_gives_empty_table(tmp_path):
    rows = run_sweep(SMALL, {}, tmp_path)
    assert rows == []
    assert (tmp_path / "sweep.csv").read_text().strip() == ""


def test_sweep_records_failures_and_continues(tmp_path):
    grid = {"data.epsilon": [0.01, -1.0], "coeffs.B": [-1.0]}
    gpath = _write(tmp_path, grid, "grid.json")
    code = main(["sweep", "--config", _write(tmp_path, dict(SMALL, checks=["frame"])),
                 "--grid", gpath, "--output", str(tmp_path / "sw"), "--threads", "2"])
    assert code == EXIT_OK
    with open(tmp_path / "sw" / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["exit_code"] for r in rows] == ["0", "2"]
    assert "epsilon" in rows[1]["error"]
