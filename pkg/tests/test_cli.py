import json

import pytest
from click.testing import CliRunner

from pinchbeam.cli import main
from pinchbeam.gnn import default_weights
from pinchbeam.scenario import (ScenarioConfig, sample_placement,
                                scenario_to_dict)
from pinchbeam.weights_io import save_weights


@pytest.fixture(scope="module")
def paths(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = ScenarioConfig(N_t=4, N_r=2, K_c=2, K_s=2, S=2, M=2)
    scen = d / "scenario.json"
    scen.write_text(json.dumps(scenario_to_dict(cfg, sample_placement(cfg, 1))))
    w = d / "weights.json"
    w.write_text(json.dumps(save_weights(default_weights(cfg, n_layers=1,
                                                         seed=0))))
    return d, str(scen), str(w)


def run_cli(*args):
    return CliRunner().invoke(main, list(args))


def test_optimize_csv_to_file(paths):
    d, scen, _ = paths
    out = d / "trace.csv"
    res = run_cli("optimize", "--scenario", scen, "--iterations", "1",
                  "--format", "csv", "--out", str(out))
    assert res.exit_code == 0, res.output
    assert out.read_text().startswith("iteration,objective,sr")


def test_optimize_json_stdout(paths):
    _, scen, _ = paths
    res = run_cli("optimize", "--scenario", scen, "--iterations", "1")
    assert res.exit_code == 0, res.output
    body = json.loads(res.output)
    assert "sr" in body and "trace_csv" not in body


def test_infer(paths):
    _, scen, w = paths
    res = run_cli("infer", "--scenario", scen, "--weights", w)
    assert res.exit_code == 0, res.output
    body = json.loads(res.output)
    assert body["sr"] > 0


def test_bench_csv(paths):
    d, scen, _ = paths
    out = d / "report.csv"
    res = run_cli("bench", "--scenario", scen, "--samples", "2",
                  "--methods", "zf,random", "--format", "csv",
                  "--out", str(out))
    assert res.exit_code == 0, res.output
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 1 + 2 * 2


def test_check_passes(paths):
    _, scen, w = paths
    res = run_cli("check", "--scenario", scen, "--weights", w)
    assert res.exit_code == 0, res.output
    assert json.loads(res.output)["ok"] is True


def test_missing_scenario_file_fails():
    res = run_cli("optimize", "--scenario", "/no/such/file.json")
    assert res.exit_code != 0


def test_bad_method_rejected(paths):
    _, scen, _ = paths
    res = run_cli("bench", "--scenario", scen, "--samples", "1",
                  "--methods", "nonsense")
    assert res.exit_code != 0
