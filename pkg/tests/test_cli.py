from __future__ import annotations

import json

import numpy as np
import pytest

from robustflow import persist
from robustflow.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from robustflow.detector import WindowVerdict
from robustflow.features import fit_features
from robustflow.flow_model import Flow
from robustflow.pipeline import RunConfig, evaluate
from robustflow.traffic_gen import GroundTruth

from conftest import clock_hour

STATIONARY = {"seed": 3, "horizon_s": 86400, "profile": {"samples": [[0.0, 1.0]]}}
WHOLE_DAY_PRIOR = {"priors": [[86400, 86400]]}


def write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture(scope="module")
def stationary(tmp_path_factory):
    d = tmp_path_factory.mktemp("stationary")
    gen = write(d / "gen.json", STATIONARY)
    run = write(d / "run.json", WHOLE_DAY_PRIOR)
    assert main(["generate", "--config", gen, "--out", str(d / "flows.csv"), "--truth", str(d / "truth.json")]) == 0
    rc = main(["estimate", str(d / "flows.csv"), "--config", run, "--model", str(d / "model.json"),
               "--families", str(d / "fam.json"), "--report", str(d / "report.json")])
    assert rc == EXIT_OK
    return d


class TestGenerate:
    def test_writes_flows_and_truth(self, tmp_path, capsys):
        gen = write(tmp_path / "g.json", {"horizon_s": 3600, "anomalies": [{"ip": "10.0.0.1", "start_s": 60,
                                                                             "duration_s": 600}]})
        rc = main(["generate", "--config", gen, "--out", str(tmp_path / "f.csv"), "--truth", str(tmp_path / "t.json")])
        assert rc == EXIT_OK
        assert len(persist.read_flows(tmp_path / "f.csv")) > 100
        truth = GroundTruth.from_json(persist.read_json(tmp_path / "t.json"))
        assert truth.intervals() == [(60.0, 660.0)]
        assert "anomaly 0" in capsys.readouterr().out

    def test_bad_config_exit_2(self, tmp_path):
        gen = write(tmp_path / "g.json", {"horizon_s": 3600, "nodes": [{"ip": "a", "peak_rate_fps": -1}]})
        assert main(["generate", "--config", gen, "--out", str(tmp_path / "f.csv"),
                     "--truth", str(tmp_path / "t.json")]) == EXIT_USAGE

    def test_missing_config_exit_2(self, tmp_path):
        assert main(["generate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "f.csv"),
                     "--truth", str(tmp_path / "t.json")]) == EXIT_USAGE

    def test_paths_must_differ(self, tmp_path):
        gen = write(tmp_path / "g.json", {"horizon_s": 3600})
        out = str(tmp_path / "x")
        assert main(["generate", "--config", gen, "--out", out, "--truth", out]) == EXIT_USAGE


class TestEstimate:
    def test_stationary_one_pl_per_family(self, stationary):
        free, based = persist.read_families(stationary / "fam.json")
        assert len(free) == 1 and len(based) == 1

    def test_report_contents(self, stationary):
        report = persist.read_json(stationary / "report.json")
        assert report["free"]["primary_cost"] == 1 and report["flows"] > 70_000
        assert report["config"]["priors"] == [[86400.0, 86400.0]]

    def test_empty_csv_exit_2(self, tmp_path):
        (tmp_path / "e.csv").write_text("start_time,ip,size_bytes,duration_s\n")
        assert main(["estimate", str(tmp_path / "e.csv"), "--model", str(tmp_path / "m.json"),
                     "--families", str(tmp_path / "f.json")]) == EXIT_USAGE

    def test_malformed_csv_exit_2(self, tmp_path):
        (tmp_path / "e.csv").write_text("start_time,ip,size_bytes,duration_s\nx,1.2.3.4,1,1\n")
        assert main(["estimate", str(tmp_path / "e.csv"), "--model", str(tmp_path / "m.json"),
                     "--families", str(tmp_path / "f.json")]) == EXIT_USAGE

    def test_unknown_config_key_exit_2(self, stationary, tmp_path):
        run = write(tmp_path / "r.json", {"lambda": 1})
        assert main(["estimate", str(stationary / "flows.csv"), "--config", run, "--model", str(tmp_path / "m.json"),
                     "--families", str(tmp_path / "f.json")]) == EXIT_USAGE

    def test_infeasible_exit_3_with_hint(self, stationary, tmp_path, capsys):
        run = str(stationary / "run.json")
        rc = main(["estimate", str(stationary / "flows.csv"), "--config", run, "--method", "free",
                   "--lambda-free", "1e-6", "--model", str(tmp_path / "m.json"), "--families", str(tmp_path / "f.json")])
        assert rc == EXIT_DATA
        assert "raise the threshold" in capsys.readouterr().err
        assert not (tmp_path / "f.json").exists()

    def test_method_free_leaves_based_empty(self, stationary, tmp_path):
        rc = main(["estimate", str(stationary / "flows.csv"), "--config", str(stationary / "run.json"),
                   "--method", "free", "--model", str(tmp_path / "m.json"), "--families", str(tmp_path / "f.json")])
        assert rc == EXIT_OK
        free, based = persist.read_families(tmp_path / "f.json")
        assert len(free) == 1 and based is None
        rc = main(["detect", str(stationary / "flows.csv"), "--model", str(tmp_path / "m.json"),
                   "--families", str(tmp_path / "f.json"), "--method", "based", "--out", str(tmp_path / "t.csv")])
        assert rc == EXIT_DATA


class TestDetect:
    def test_round_trip_zero_alarms(self, stationary, tmp_path):
        rc = main(["detect", str(stationary / "flows.csv"), "--config", str(stationary / "run.json"),
                   "--model", str(stationary / "model.json"), "--families", str(stationary / "fam.json"),
                   "--out", str(tmp_path / "t.csv")])
        assert rc == EXIT_OK
        verdicts = persist.read_timeline(tmp_path / "t.csv")
        assert len(verdicts) == 43
        assert not any(v.alarm_free or v.alarm_based for v in verdicts)

    def test_vanilla_flag(self, stationary, tmp_path, capsys):
        rc = main(["detect", str(stationary / "flows.csv"), "--model", str(stationary / "model.json"),
                   "--families", str(stationary / "fam.json"), "--vanilla", "--out", str(tmp_path / "t.csv")])
        assert rc == EXIT_OK and "vanilla detection" in capsys.readouterr().out

    def test_alphabet_mismatch_exit_3(self, stationary, tmp_path, capsys):
        run = write(tmp_path / "r.json", {**WHOLE_DAY_PRIOR, "levels": [2, 2, 4]})
        assert main(["estimate", str(stationary / "flows.csv"), "--config", run, "--method", "free",
                     "--model", str(tmp_path / "m.json"), "--families", str(tmp_path / "f.json")]) == EXIT_OK
        rc = main(["detect", str(stationary / "flows.csv"), "--model", str(stationary / "model.json"),
                   "--families", str(tmp_path / "f.json"), "--out", str(tmp_path / "t.csv")])
        assert rc == EXIT_DATA
        assert "alphabet" in capsys.readouterr().err

    def test_lambda_override_raises_alarms(self, stationary, tmp_path):
        rc = main(["detect", str(stationary / "flows.csv"), "--model", str(stationary / "model.json"),
                   "--families", str(stationary / "fam.json"), "--lambda-free", "1e-6", "--method", "free",
                   "--out", str(tmp_path / "t.csv")])
        assert rc == EXIT_OK
        verdicts = persist.read_timeline(tmp_path / "t.csv")
        assert all(v.alarm_free for v in verdicts) and all(v.div_based is None for v in verdicts)


def verdict(i, alarm, w=2000.0):
    return WindowVerdict(i, i * w, 50, div_free=1.0 if alarm else 0.1, argmin_free=0, alarm_free=alarm)


class TestEvaluate:
    truth = GroundTruth((0.0, 20_000.0), [{"id": 0, "start": 4000.0, "end": 8000.0}])

    def test_alarms_inside_interval(self):
        m = evaluate([verdict(i, i in (2, 3)) for i in range(10)], self.truth, 2000.0)["free"]
        assert (m["detected"], m["fp"], m["tp"], m["fn"], m["tn"]) == (1, 0, 2, 0, 8)

    def test_no_alarms(self):
        m = evaluate([verdict(i, False) for i in range(10)], self.truth, 2000.0)["free"]
        assert m["detected"] == 0 and m["fn"] == 2 and m["false_alarm_rate"] == 0.0

    def test_false_alarm_rate(self):
        m = evaluate([verdict(i, i in (0, 9)) for i in range(10)], self.truth, 2000.0)["free"]
        assert m["false_alarm_rate"] == pytest.approx(2 / 8) and m["false_alarm_windows"] == [0, 9]

    def test_sparse_windows_not_scored(self):
        vs = [WindowVerdict(0, 0.0, 0)] + [verdict(i, False) for i in range(1, 10)]
        assert evaluate(vs, self.truth, 2000.0)["free"]["scored_windows"] == 9

    def test_cli_evaluate(self, tmp_path):
        persist.write_timeline(tmp_path / "t.csv", [verdict(i, i == 2) for i in range(10)])
        persist.write_json(tmp_path / "g.json", self.truth.to_json())
        assert main(["evaluate", str(tmp_path / "t.csv"), str(tmp_path / "g.json"),
                     "--out", str(tmp_path / "m.json")]) == EXIT_OK
        assert persist.read_json(tmp_path / "m.json")["free"]["detected"] == 1

    def test_cli_evaluate_parse_failure(self, tmp_path):
        (tmp_path / "t.csv").write_text("nonsense\n1\n")
        persist.write_json(tmp_path / "g.json", self.truth.to_json())
        assert main(["evaluate", str(tmp_path / "t.csv"), str(tmp_path / "g.json"),
                     "--out", str(tmp_path / "m.json")]) == EXIT_USAGE

    def test_vanilla_false_alarms_at_night(self, week_run):
        m = week_run.vanilla_metrics["free"]
        hours = [clock_hour(v.start_time) for v in week_run.vanilla_test if v.index in m["false_alarm_windows"]]
        night = sum(h < 12.0 for h in hours)
        assert m["false_alarm_rate"] > 0.2
        assert night / len(hours) >= 0.9


class TestPersist:
    def test_flow_round_trip(self, tmp_path):
        flows = [Flow("10.0.0.1", 123.5, 0.25, 1.0), Flow("10.0.0.2", 1e6, 3.0, 2.5)]
        persist.write_flows(tmp_path / "f.csv", flows)
        assert persist.read_flows(tmp_path / "f.csv") == flows

    def test_feature_model_round_trip(self, tmp_path):
        flows = [Flow(f"10.0.{i}.1", 100.0 * i + 1, 0.5 * i, float(i)) for i in range(20)]
        model = fit_features(flows, 2, (2, 2, 8))
        persist.write_json(tmp_path / "m.json", persist.feature_model_to_json(model))
        back = persist.feature_model_from_json(persist.read_json(tmp_path / "m.json"))
        assert np.array_equal(back.clusters.centers, model.clusters.centers)
        assert back.alphabet.sizes == model.alphabet.sizes

    def test_timeline_round_trip(self, tmp_path):
        vs = [WindowVerdict(0, 0.0, 3), verdict(1, True)]
        persist.write_timeline(tmp_path / "t.csv", vs)
        assert persist.read_timeline(tmp_path / "t.csv") == vs

    def test_family_round_trip(self, stationary):
        data = persist.read_json(stationary / "fam.json")
        free = persist.family_from_json(data["free"])
        assert persist.family_to_json(free) == data["free"]

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        persist.write_json(tmp_path / "a.json", {"x": 1})
        assert [p.name for p in tmp_path.iterdir()] == ["a.json"]

    def test_missing_family_key(self, tmp_path):
        persist.write_json(tmp_path / "f.json", {"free": None})
        with pytest.raises(persist.FormatError):
            persist.read_families(tmp_path / "f.json")


def test_run_config_json_round_trip():
    cfg = RunConfig(priors=[(3600.0, 86400.0)], horizon_end=5.0)
    assert RunConfig.from_json(cfg.to_json()).to_json() == cfg.to_json()
