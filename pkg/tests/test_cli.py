import copy
import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from chaintransport import __version__
from chaintransport.cli import emit_csv, main, run_scenario
from chaintransport.config import ConfigError, load_config, parse_config
from chaintransport.dynamics import Trajectory
from chaintransport.environment import (
    QuadratureModel,
    quadrature_rate_set,
    save_rate_table,
)
from chaintransport.transport import ScanResult, efficiency_trace
from chaintransport.operators import ChainSpec, basis_state

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

POPULATIONS = {
    "schema": 1,
    "scenario": "populations",
    "chain": {"n_atoms": 3, "step": 0.9},
    "environment": {"model": "spp_chain", "mode": "uni"},
    "initial_state": "egg",
    "drive": {"gamma_in": 0.0, "gamma_out": 0.0},
    "time": {"t_end": 2.0, "samples": 5},
}
EFFICIENCY = {
    "schema": 1,
    "scenario": "efficiency_dynamics",
    "chain": {"n_atoms": 2},
    "environment": {"model": "quadrature", "mode": "uni", "X": 1.0},
    "initial_state": "gg",
    "time": {"t_end": 4.0, "samples": 9},
}
SCAN = {
    "schema": 1,
    "scenario": "gamma12_scan",
    "chain": {"n_atoms": 2},
    "environment": {"model": "quadrature", "mode": "uni", "X": 1.0},
    "scan": {"values": [0.5, 1.0, 2.0]},
}


def write_config(tmp_path, raw, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw), encoding="utf-8")
    return path


def run(tmp_path, raw, *extra, out="out"):
    path = write_config(tmp_path, raw)
    code = main(["simulate", str(path), "--output-dir", str(tmp_path / out), "--quiet", *extra])
    return code, tmp_path / out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestEmitCsv:
    def test_populations_schema(self, tmp_path):
        states = np.stack([basis_state("eg"), basis_state("ge")])
        traj = Trajectory(np.array([0.0, 1.0]), states)
        rows = read_csv(emit_csv(traj, "populations", tmp_path / "p.csv"))
        assert rows == [["time", "p1", "p2"], ["0", "1", "0"], ["1", "0", "1"]]

    def test_efficiency_schema(self, tmp_path):
        rates = quadrature_rate_set(QuadratureModel(X=1.0), "uni", 1.5, 1.5)
        tr = efficiency_trace(ChainSpec(2), rates, basis_state("gg"), [0.0, 1.0])
        rows = read_csv(emit_csv(tr, "efficiency", tmp_path / "e.csv"))
        assert rows[0] == ["time", "P", "E_pumped", "E_unpumped", "chi"]
        assert rows[1] == ["0", "1.5", "0", "0", "0"]
        assert len(rows) == 3

    def test_scan_schema_and_nan(self, tmp_path):
        res = ScanResult("phi", np.array([0.0, 1.0]), np.array([0.25, math.nan]),
                         ((), ("direction: x", "positivity: y")))
        rows = read_csv(emit_csv(res, "scan", tmp_path / "s.csv"))
        assert rows == [["param", "chi_stationary", "warnings"],
                        ["0", "0.25", ""], ["1", "nan", "direction;positivity"]]

    def test_significant_digits(self, tmp_path):
        res = ScanResult("phi", np.array([1 / 3]), np.array([2 / 3]), ((),))
        rows = read_csv(emit_csv(res, "scan", tmp_path / "s.csv"))
        assert rows[1][:2] == ["0.333333333333", "0.666666666667"]

    def test_schema_errors(self, tmp_path):
        res = ScanResult("phi", np.array([0.0]), np.array([0.1]), ((),))
        with pytest.raises(ValueError):
            emit_csv(res, "spectrum", tmp_path / "x.csv")
        with pytest.raises(TypeError):
            emit_csv(res, "populations", tmp_path / "x.csv")


class TestScenarios:
    def test_populations(self, tmp_path):
        code, out = run(tmp_path, POPULATIONS)
        assert code == 0
        rows = read_csv(out / "populations.csv")
        assert rows[0] == ["time", "p1", "p2", "p3"]
        assert len(rows) == 6
        assert rows[1] == ["0", "1", "0", "0"]
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["outputs"] == ["populations.csv"]
        assert manifest["version"] == __version__
        assert manifest["config"]["chain"]["n_atoms"] == 3
        assert manifest["rates"]["main"]["mode"] == "uni"

    def test_efficiency(self, tmp_path):
        code, out = run(tmp_path, EFFICIENCY)
        assert code == 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["results"]["main"]["chi_stationary"] == pytest.approx(0.11450381679389318, abs=1e-12)
        assert read_csv(out / "efficiency.csv")[0] == ["time", "P", "E_pumped", "E_unpumped", "chi"]

    def test_bias_compare(self, tmp_path):
        raw = copy.deepcopy(POPULATIONS) | {"scenario": "bias_compare", "initial_state": "ggg"}
        raw["drive"] = {"gamma_in": 1.5, "gamma_out": 1.5}
        code, out = run(tmp_path, raw)
        assert code == 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["outputs"] == ["efficiency_forward.csv", "efficiency_reversed.csv"]
        assert manifest["results"]["forward"]["chi_stationary"] > 1e-3
        assert abs(manifest["results"]["reversed"]["chi_stationary"]) <= 1e-6
        assert manifest["rates"]["reversed"]["mode"] == "uni_up"

    def test_scan(self, tmp_path):
        path = write_config(tmp_path, SCAN)
        assert main(["scan", str(path), "--output-dir", str(tmp_path / "s"), "--quiet"]) == 0
        rows = read_csv(tmp_path / "s" / "scan.csv")
        assert [r[0] for r in rows[1:]] == ["0.5", "1", "2"]
        assert rows[1][2] == "" and "chi_out_of_range" in rows[3][2]

    def test_scan_command_rejects_dynamic_scenario(self, tmp_path, capsys):
        path = write_config(tmp_path, POPULATIONS)
        assert main(["scan", str(path), "--quiet"]) == 2
        assert "scenario" in capsys.readouterr().err

    def test_default_output_is_relative_to_config(self, tmp_path):
        sub = tmp_path / "cfg"
        sub.mkdir()
        path = write_config(sub, POPULATIONS)
        assert main(["simulate", str(path), "--quiet"]) == 0
        assert (sub / "output" / "populations.csv").exists()

    def test_rate_table_config(self, tmp_path):
        rates = quadrature_rate_set(QuadratureModel(X=1.0), "uni", 1.5, 1.5)
        save_rate_table(rates, tmp_path / "rates.csv")
        raw = copy.deepcopy(EFFICIENCY)
        raw["environment"] = {"rate_table": "rates.csv"}
        code, out = run(tmp_path, raw)
        assert code == 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["results"]["main"]["chi_stationary"] == pytest.approx(0.11450381679389318, abs=1e-12)

    def test_progress_messages(self, tmp_path, capsys):
        path = write_config(tmp_path, EFFICIENCY)
        assert main(["simulate", str(path), "--output-dir", str(tmp_path / "o")]) == 0
        assert "chi(inf)" in capsys.readouterr().out

    def test_numerical_failure_exit_code(self, tmp_path, capsys):
        raw = copy.deepcopy(EFFICIENCY)
        raw["drive"] = {"gamma_in": 0.0}
        code, _ = run(tmp_path, raw)
        assert code == 1
        assert "numerical failure" in capsys.readouterr().err

    def test_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        path = write_config(tmp_path, EFFICIENCY)
        assert main(["simulate", str(path), "--output-dir", str(blocker / "x"), "--quiet"]) == 1

    @pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
    def test_shipped_configs_validate(self, name):
        assert main(["validate", str(CONFIGS / name), "--quiet"]) == 0


class TestDeterminism:
    @pytest.mark.parametrize("raw, files", [
        (POPULATIONS, ["populations.csv"]),
        (EFFICIENCY, ["efficiency.csv"]),
        (SCAN, ["scan.csv"]),
    ])
    def test_byte_identical(self, tmp_path, raw, files):
        assert run(tmp_path, raw, out="a")[0] == 0
        assert run(tmp_path, raw, out="b")[0] == 0
        for name in files + ["run_manifest.json"]:
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes().replace(b"/b", b"/a")
            assert a == b, name


def _mutate(base, path, value):
    raw = copy.deepcopy(base)
    node = raw
    keys = path.split(".")
    for k in keys[:-1]:
        node = node[k]
    if value is _DELETE:
        del node[keys[-1]]
    else:
        node[keys[-1]] = value
    return raw


_DELETE = object()

CONFIG_ERRORS = [
    (POPULATIONS, "schema", 2, "schema"),
    (POPULATIONS, "scenario", "spectrum", "scenario"),
    (POPULATIONS, "chain.n_atoms", 0, "chain.n_atoms"),
    (POPULATIONS, "chain.n_atoms", 13, "chain.n_atoms"),
    (POPULATIONS, "chain.n_atoms", _DELETE, "chain.n_atoms"),
    (POPULATIONS, "chain.step", -1.0, "chain.step"),
    (POPULATIONS, "chain.colour", "red", "chain.colour"),
    (POPULATIONS, "environment.mode", "sideways", "environment.mode"),
    (POPULATIONS, "environment.model", "free_space", "environment.model"),
    (POPULATIONS, "environment.X", 1.0, "environment.X"),
    (POPULATIONS, "environment.rate_table", "r.csv", "environment"),
    (POPULATIONS, "initial_state", "gxg", "initial_state"),
    (POPULATIONS, "initial_state", "eg", "initial_state"),
    (POPULATIONS, "initial_state", _DELETE, "initial_state"),
    (POPULATIONS, "time", _DELETE, "time"),
    (POPULATIONS, "time.t_end", -1.0, "time.t_end"),
    (POPULATIONS, "time.samples", 1, "time.samples"),
    (POPULATIONS, "drive.gamma_in", -0.5, "drive.gamma_in"),
    (EFFICIENCY, "environment.X", _DELETE, "environment.X"),
    (EFFICIENCY, "chain.n_atoms", 3, "chain.n_atoms"),
    (EFFICIENCY, "environment.transform", "flip", "environment.transform"),
    (SCAN, "scan", _DELETE, "scan"),
    (SCAN, "scan.values", [], "scan.values"),
    (SCAN, "scan.start", 0.0, "scan"),
    (SCAN, "environment.model", "spp_chain", "environment.X"),
    (SCAN, "environment.transform", "reverse_bias", "environment.transform"),
]


class TestConfigErrors:
    @pytest.mark.parametrize("base, path, value, field", CONFIG_ERRORS,
                             ids=[f"{c[1]}={c[2] if c[2] is not _DELETE else 'missing'}" for c in CONFIG_ERRORS])
    def test_exit_code_and_field(self, tmp_path, capsys, base, path, value, field):
        code, out = run(tmp_path, _mutate(base, path, value))
        assert code == 2
        err = capsys.readouterr().err
        assert f"config error: {field}" in err
        assert not out.exists()

    def test_parse_config_raises_with_field(self):
        with pytest.raises(ConfigError) as info:
            parse_config(_mutate(POPULATIONS, "chain.n_atoms", 0))
        assert info.value.field == "chain.n_atoms"

    def test_bias_compare_needs_uni(self, tmp_path, capsys):
        raw = _mutate(POPULATIONS, "scenario", "bias_compare")
        raw["environment"]["mode"] = "rec"
        assert run(tmp_path, raw)[0] == 2
        assert "environment.mode" in capsys.readouterr().err

    def test_length_scan_grid(self, tmp_path, capsys):
        raw = copy.deepcopy(SCAN) | {"scenario": "length_scan"}
        raw["environment"] = {"model": "spp_chain"}
        raw["scan"] = {"values": [1, 2.5]}
        assert run(tmp_path, raw)[0] == 2
        assert "config error: scan" in capsys.readouterr().err

    def test_missing_and_invalid_files(self, tmp_path, capsys):
        assert main(["simulate", str(tmp_path / "nope.json")]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["simulate", str(bad)]) == 2
        assert main(["validate", str(bad)]) == 2

    def test_bad_rate_table(self, tmp_path, capsys):
        (tmp_path / "rates.csv").write_text("# N=2 mode=uni gamma_in=1.5 gamma_out=1.5\n1,1,1.0,0.0\n")
        raw = copy.deepcopy(EFFICIENCY)
        raw["environment"] = {"rate_table": "rates.csv"}
        assert run(tmp_path, raw)[0] == 2
        assert "missing diagonal" in capsys.readouterr().err

    def test_rate_table_size_mismatch(self, tmp_path, capsys):
        rates = quadrature_rate_set(QuadratureModel(X=1.0), "uni", 1.5, 1.5)
        save_rate_table(rates, tmp_path / "rates.csv")
        raw = _mutate(POPULATIONS, "environment", {"rate_table": "rates.csv"})
        assert run(tmp_path, raw)[0] == 2
        assert "environment.rate_table" in capsys.readouterr().err


class TestValidateCommand:
    def test_reports_diagnostics(self, tmp_path, capsys):
        raw = _mutate(SCAN, "environment.mode", "rec")
        raw["scan"] = {"values": [0.5, 1.2]}
        assert main(["validate", str(write_config(tmp_path, raw))]) == 0
        out = capsys.readouterr().out
        assert "config ok (gamma12_scan); 1 rate diagnostic(s)" in out
        assert "gamma12_ratio=1.2" in out and "gamma12_ratio=0.5" not in out

    def test_writes_nothing(self, tmp_path):
        path = write_config(tmp_path, POPULATIONS)
        assert main(["validate", str(path), "--quiet"]) == 0
        assert not (tmp_path / "output").exists()


def test_load_config_resolves_defaults(tmp_path):
    cfg = load_config(write_config(tmp_path, EFFICIENCY))
    assert cfg.gamma_in == cfg.gamma_out == 1.5
    assert cfg.samples == 9
    assert cfg.output_dir == tmp_path / "output"
    assert cfg.quadrature_model().phi == pytest.approx(math.pi / 2)


def test_run_scenario_api(tmp_path):
    path = write_config(tmp_path, POPULATIONS)
    assert run_scenario(path, tmp_path / "api", quiet=True) == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "chaintransport", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert __version__ in proc.stdout
