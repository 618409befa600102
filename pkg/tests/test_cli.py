from __future__ import annotations

import csv
import io
import json

import pytest
from click.testing import CliRunner

from qalandscape.cli import main

FIG_M = "0.048,0.416,0.123,0.013"


def run(args, out):
    return CliRunner().invoke(main, ["--out", str(out), *args])


def manifest(path):
    return json.loads(open(str(path) + ".manifest.json").read())


def test_thresholds_csv_and_manifest(tmp_path):
    r = run(["thresholds", "--k", "3", "--n-eps", "40"], tmp_path)
    assert r.exit_code == 0, r.output
    path = tmp_path / "thresholds_one-in-k_K3_full.csv"
    rows = list(csv.DictReader(io.StringIO(path.read_text())))
    assert rows[0]["K"] == "3" and rows[0]["gamma_d"] == ""
    assert float(rows[0]["gamma_c"]) == pytest.approx(0.805, abs=0.005)
    man = manifest(path)
    assert man["command"] == "thresholds" and man["config"]["n_eps"] == 40
    assert {"version", "backend", "wall_time_s", "seeds", "artifact"} <= set(man)


def test_out_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("QALANDSCAPE_OUT", str(tmp_path / "env"))
    r = CliRunner().invoke(main, ["trim", "--n", "500", "--gamma", "0.7"])
    assert r.exit_code == 0, r.output
    assert (tmp_path / "env" / "trim_one-in-k_K3_N500_g0.7_s0.json").exists()


def test_trim_rerun_byte_identical(tmp_path):
    args = ["trim", "--problem", "k-nae", "--n", "5000", "--gamma", "1.0", "--seed", "4",
            "--save-core"]
    assert run(args, tmp_path / "a").exit_code == 0
    assert run(args, tmp_path / "b").exit_code == 0
    for name in ("trim_k-nae_K3_N5000_g1_s4.json", "trim_k-nae_K3_N5000_g1_s4.core.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    d = json.loads((tmp_path / "a" / "trim_k-nae_K3_N5000_g1_s4.json").read_text())
    assert d["empirical"]["n_frac"] == pytest.approx(d["analytic"]["n_frac"], abs=0.03)
    assert manifest(tmp_path / "a" / "trim_k-nae_K3_N5000_g1_s4.json")["seeds"] == [4]


def test_potential_scan(tmp_path):
    r = run(["potential-scan", "--k", "3", "--gamma", "0.6", "--n-tau", "5", "--n-eps", "30",
             "--format", "json"], tmp_path)
    assert r.exit_code == 0, r.output
    rows = json.loads((tmp_path / "potential_one-in-k_K3_g0.6_full.json").read_text())
    assert len(rows) == 5 and set(rows[0]) >= {"tau", "Gamma", "g", "q", "M0", "M3"}


def test_simulate_small(tmp_path):
    args = ["simulate", "--k", "3", "--gamma", "0.6", "--q", "0.422", "--m", FIG_M,
            "--sizes", "500", "--instances", "1", "--strings", "2", "--n-y", "5",
            "--workers", "1"]
    assert run(args, tmp_path / "a").exit_code == 0
    assert run(args, tmp_path / "b").exit_code == 0
    rel = "simulate_K3_g0.6_s0"
    a = (tmp_path / "a" / rel / "curve_N500_i0_s1.csv").read_bytes()
    assert a == (tmp_path / "b" / rel / "curve_N500_i0_s1.csv").read_bytes()
    assert len(manifest(tmp_path / "a" / rel / "summary.json")["seeds"]) == 2


@pytest.mark.parametrize("args", [
    ["thresholds", "--k", "1"],
    ["thresholds", "--k", "x"],
    ["potential-scan", "--gamma", "-1"],
    ["potential-scan", "--gamma", "0.6", "--tau-min", "0.9", "--tau-max", "0.1"],
    ["simulate", "--gamma", "0.6", "--q", "0.4", "--m", "0.1,0.5"],
    ["simulate", "--gamma", "0.6", "--q", "0.422", "--m", FIG_M, "--sizes", "200000"],
    ["trim", "--problem", "one-in-k", "--k", "3", "--n", "2", "--gamma", "1.0"],
])
def test_bad_configuration_exit_2(tmp_path, args):
    assert run(args, tmp_path).exit_code == 2


def test_numerical_failure_exit_3(tmp_path):
    r = run(["simulate", "--k", "3", "--gamma", "0.6", "--q", "0.422", "--m", FIG_M,
             "--sizes", "300", "--instances", "1", "--strings", "1", "--tol", "1e-9",
             "--workers", "1"], tmp_path)
    assert r.exit_code == 3
    diag = json.loads((tmp_path / "simulate.diagnostics.json").read_text())
    cell = diag["diagnostics"]["cells"][0]
    assert cell["diagnostics"]["closest_max_deviation"] > 0


def test_io_failure_exit_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    r = run(["trim", "--n", "100", "--gamma", "0.7"], blocker / "sub")
    assert r.exit_code == 4
