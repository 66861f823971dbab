import csv
import json

import pytest

from tmirs import cli
from tmirs.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from tmirs.errors import ConfigError, NumericalAbort
from tmirs.experiment import MODE_PARAMS, parse_experiment


def write(tmp_path, doc, name="exp.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_parse_defaults_and_overrides():
    spec = parse_experiment({"mode": "baseline", "params": {"budget": 10}, "rng_seed": 4})
    assert spec.mode == "baseline" and spec.params["budget"] == 10 and spec.params["decay"] == 0.95
    assert spec.system.n_elements == 9 and spec.rng_seed == 4
    full = parse_experiment({"mode": "eval-ser", "system": {"preset": "full"}})
    assert full.system.n_elements == 36
    assert full.params["n_symbols"] == MODE_PARAMS["eval-ser"]["n_symbols"]


def test_parse_positions_scenario():
    doc = {"mode": "eval-ser", "scenario": {"positions": {"bs": [0, 0, 2.5], "irs": [20, 0, 2.5],
                                                          "users": [[20, 10, 2.5]], "target": [20, 10, 2.5]}}}
    spec = parse_experiment(doc)
    assert spec.scenario.user_angles == ((0.0, 0.0),) and spec.scenario.target_angles == (0.0, 0.0)


def test_parse_angle_scenario_with_override():
    spec = parse_experiment({"mode": "train", "scenario": {"user_angles": [[40, 30], [-40, 30]],
                                                           "xi": [0.3, 0.3], "theta_v": [63.4, 63.4]}})
    assert spec.scenario.n_users == 2 and spec.scenario.xi == (0.3, 0.3)


@pytest.mark.parametrize("doc", [
    {"mode": "train", "bogus": 1},
    {"mode": "train", "params": {"episode": 3}},
    {"mode": "train", "system": {"irs_colls": 2}},
    {"mode": "train", "scenario": {"user_angle": [[0, 0]]}},
    {"mode": "train", "system": {"preset": "huge"}},
    {"mode": "fly"},
    {"mode": "eval-rate-vs-snr", "params": {"snr_list": []}},
    {"mode": "eval-heatmap", "params": {"theta_grid": [0, 10, 0]}},
    {"mode": "eval-ser", "params": {"switching_period": 0}},
    {"mode": "train", "rng_seed": "x"},
    {"mode": "train", "system": {"modulation_order": 6}},
])
def test_parse_rejects(doc):
    with pytest.raises(ConfigError):
        parse_experiment(doc)


def test_mode_mismatch_rejected():
    with pytest.raises(ConfigError):
        parse_experiment({"mode": "train"}, "baseline")


def test_cli_config_errors_exit_2(tmp_path, capsys):
    assert main(["baseline", "--config", str(write(tmp_path, {"mode": "baseline", "oops": 0}))]) == EXIT_CONFIG
    assert main(["baseline", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["train", "--config", str(bad)]) == EXIT_CONFIG
    doc = {"mode": "sample", "params": {"checkpoint": str(tmp_path / "nope.json")}}
    assert main(["sample", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_cli_baseline_run(tmp_path):
    cfgp = write(tmp_path, {"mode": "baseline", "params": {"method": "random", "budget": 25}})
    out = tmp_path / "out"
    assert main(["baseline", "--config", str(cfgp), "--seed", "3", "--out", str(out)]) == EXIT_OK
    best = json.loads((out / "baseline.json").read_text())
    trace = list(csv.reader((out / "baseline_trace.csv").open()))
    assert trace[0] == ["evaluation", "best_reward"] and len(trace) == 26
    assert float(trace[-1][1]) == pytest.approx(best[0]["reward"], rel=1e-8)
    first = (out / "baseline_trace.csv").read_bytes()
    assert main(["baseline", "--config", str(cfgp), "--seed", "3", "--out", str(out)]) == EXIT_OK
    assert (out / "baseline_trace.csv").read_bytes() == first


def test_cli_train_sample_and_eval(tmp_path):
    out = tmp_path / "run"
    train_doc = {"mode": "train", "params": {"episodes": 6, "hidden": [8], "log_every": 2, "n_samples": 32,
                                             "n_keep": 3}}
    assert main(["train", "--config", str(write(tmp_path, train_doc, "t.json")), "--out", str(out)]) == EXIT_OK
    assert (out / "checkpoint.json").exists() and (out / "training_log.csv").exists()
    top = json.loads((out / "top_configs.json").read_text())
    assert 1 <= len(top) <= 3

    samp = {"mode": "sample", "params": {"checkpoint": str(out / "checkpoint.json"), "n_samples": 16,
                                         "n_keep": 2}}
    assert main(["sample", "--config", str(write(tmp_path, samp, "s.json")), "--out", str(tmp_path / "s")]) == 0

    ser_doc = {"mode": "eval-ser", "params": {"configs_file": str(out / "top_configs.json"), "n_configs": 2,
                                              "n_symbols": 32, "switching_period": 8,
                                              "directions": [[40, 30], [0, 0]]}}
    assert main(["eval-ser", "--config", str(write(tmp_path, ser_doc, "e.json")), "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "ser.csv").open()))
    assert len(rows) == 2 and all(0 <= float(r["ser"]) <= 1 for r in rows)

    hm = {"mode": "eval-heatmap", "params": {"configs": "all_on", "metric": "rate",
                                             "theta_grid": [-10, 10, 10], "phi_grid": [30, 30, 1]}}
    assert main(["eval-heatmap", "--config", str(write(tmp_path, hm, "h.json")), "--out", str(out)]) == 0
    assert len((out / "heatmap.csv").read_text().splitlines()) == 4


def test_cli_rate_vs_snr(tmp_path):
    doc = {"mode": "eval-rate-vs-snr", "params": {"methods": ["sa", "random"], "snr_list": [0, 10],
                                                  "budget": 20, "n_seeds": 2}}
    out = tmp_path / "r"
    assert main(["eval-rate-vs-snr", "--config", str(write(tmp_path, doc)), "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "rate_vs_snr.csv").open()))
    assert [(r["method"], float(r["snr_db"])) for r in rows] == [("sa", 0), ("sa", 10), ("random", 0),
                                                                 ("random", 10)]


def test_cli_numerical_abort_exit_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NumericalAbort("non-finite loss")

    monkeypatch.setattr(cli, "train", boom)
    doc = {"mode": "train", "params": {"episodes": 2, "hidden": [4]}}
    assert main(["train", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL
