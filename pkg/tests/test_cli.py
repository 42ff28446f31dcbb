import hashlib
import json
import re
import subprocess
import sys

import pytest

from causal_energy import __version__, cli

SPLIT = "2024-03-01T06:00:00Z"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def sim_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert cli.main(["simulate", "--out", str(out), "--seed", "11", "--hours", "8760"]) == 0
    return out / "simulate" / "simulated.csv"


def test_simulate_twice_identical(tmp_path, monkeypatch):
    outputs = []
    for label in ("a", "b"):
        (tmp_path / label).mkdir()
        monkeypatch.chdir(tmp_path / label)
        assert cli.main(["simulate", "--seed", "7", "--hours", "8760"]) == 0
        outputs.append((tmp_path / label / "out" / "simulate" / "simulated.csv").read_bytes())
    assert outputs[0] == outputs[1]
    assert outputs[0].count(b"\n") == 8761


def test_manifest_records_hashes(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--out", str(tmp_path), "--hours", "24", "--seed", "2")
    assert code == 0
    man = json.loads((tmp_path / "simulate" / "manifest.json").read_text())
    data = (tmp_path / "simulate" / "simulated.csv").read_bytes()
    assert man["outputs"]["simulated.csv"] == hashlib.sha256(data).hexdigest()
    assert man["seed"] == 2 and man["command"] == "simulate"
    assert man["config"]["hours"] == 24
    # no wall-clock fields, so reruns reproduce the manifest byte for byte
    assert set(man) == {"command", "config", "config_sha256", "seed", "inputs", "outputs", "versions"}


def test_train_predict_matches_evaluate(sim_csv, tmp_path, capsys):
    common = ["--out", str(tmp_path), "--data", str(sim_csv), "--seed", "4", "--steps", "200"]
    code, out, _ = run(capsys, "train", *common, "--split", SPLIT)
    assert code == 0 and "trained on" in out
    code, out, _ = run(capsys, "predict", *common, "--end", SPLIT)
    assert code == 0
    predicted = re.search(r"MAPE ([0-9.]+)%", out).group(1)
    code, out, _ = run(capsys, "evaluate", *common, "--split", SPLIT)
    assert code == 0
    train_side = re.search(r"train MAPE ([0-9.]+)%", out).group(1)
    assert predicted == train_side
    rows = (tmp_path / "predict" / "predictions.csv").read_text().splitlines()
    assert rows[0] == "timestamp,actual_mw,predicted_mw,predicted_sd"
    assert (tmp_path / "evaluate" / "series.csv").exists()


def test_analyze_backdoor(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze", "backdoor", "--out", str(tmp_path), "--n", "100000", "--seed", "1")
    assert code == 0
    doc = json.loads((tmp_path / "analyze" / "backdoor" / "summary.json").read_text())
    assert doc["abs_diff"] <= 2 * doc["regression_se"]
    assert "regression_coef" in out and "do_coef 2.000000" in out


@pytest.mark.parametrize("which", ["humidity", "temperature", "radiation", "wind", "variance"])
def test_analyses_run(which, sim_csv, tmp_path, capsys):
    code, out, err = run(capsys, "analyze", which, "--out", str(tmp_path), "--data", str(sim_csv))
    assert code == 0, err
    files = sorted(p.name for p in (tmp_path / "analyze" / which).iterdir())
    assert "summary.json" in files and "manifest.json" in files and len(files) >= 3


def test_report_collects(sim_csv, tmp_path, capsys):
    assert run(capsys, "analyze", "variance", "--out", str(tmp_path), "--data", str(sim_csv))[0] == 0
    assert run(capsys, "analyze", "backdoor", "--out", str(tmp_path), "--n", "1000")[0] == 0
    code, out, _ = run(capsys, "report", "--out", str(tmp_path))
    assert code == 0
    combined = json.loads((tmp_path / "report" / "report.json").read_text())
    assert set(combined) == {"analyze/backdoor/summary.json", "analyze/variance/summary.json"}
    assert (tmp_path / "report" / "analyze__variance__monthly_variance.csv").exists()


def test_crossval(sim_csv, tmp_path, capsys):
    code, out, _ = run(capsys, "crossval", "--out", str(tmp_path), "--data", str(sim_csv), "--folds", "3",
                       "--steps", "50", "--batch-size", "256")
    assert code == 0 and out.startswith("fold MAPEs [")
    doc = json.loads((tmp_path / "crossval" / "crossval.json").read_text())
    assert len(doc["fold_mapes"]) == 3


def test_ingest(tmp_path, capsys):
    load = tmp_path / "load.csv"
    wx = tmp_path / "wx.csv"
    load.write_text("timestamp,MW\n" + "".join(f"2024-07-01T{h:02d}:00:00Z,{3000 + h}\n" for h in range(24)))
    wx.write_text("time,temperature_2m,relative_humidity_2m,wind_speed_10m,shortwave_radiation\n"
                  + "".join(f"2024-07-01T{h:02d}:00,25,60,10,{max(0, 500 - 40 * abs(h - 18))}\n" for h in range(1, 24)))
    code, out, _ = run(capsys, "ingest", "--out", str(tmp_path), "--load-csv", str(load), "--weather-csv", str(wx))
    assert code == 0 and "joined 23" in out
    summary = json.loads((tmp_path / "ingest" / "ingest.json").read_text())
    assert summary["records"] == 23 and summary["dropped_load"] == 1
    man = json.loads((tmp_path / "ingest" / "manifest.json").read_text())
    assert set(man["inputs"]) == {str(load), str(wx)}


class TestErrors:
    def test_config_problems_listed_together(self, tmp_path, capsys):
        code, _, err = run(capsys, "train", "--out", str(tmp_path), "--lr", "-1", "--steps", "-5",
                           "--data", str(tmp_path / "missing.csv"))
        assert code == 2
        assert "lr must be > 0" in err and "steps must be" in err and "does not exist" in err

    def test_config_file_and_override(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"hours": 12, "seed": 3, "out": str(tmp_path / "o")}))
        code, out, _ = run(capsys, "simulate", "--config", str(cfg), "--hours", "5")
        assert code == 0 and "simulated 5 records" in out
        cfg.write_text(json.dumps({"hourz": 12}))
        code, _, err = run(capsys, "simulate", "--config", str(cfg))
        assert code == 2 and "hourz" in err
        cfg.write_text("{not json")
        assert run(capsys, "simulate", "--config", str(cfg))[0] == 2

    def test_data_error_exit_code(self, tmp_path, capsys):
        assert run(capsys, "simulate", "--out", str(tmp_path), "--hours", "100")[0] == 0
        data = tmp_path / "simulate" / "simulated.csv"
        code, _, err = run(capsys, "analyze", "variance", "--out", str(tmp_path), "--data", str(data))
        assert code == 3 and "month" in err

    def test_missing_snapshot(self, sim_csv, tmp_path, capsys):
        code, _, err = run(capsys, "predict", "--out", str(tmp_path), "--data", str(sim_csv))
        assert code == 2 and "run train first" in err

    def test_required_inputs(self, tmp_path, capsys):
        assert run(capsys, "ingest", "--out", str(tmp_path))[0] == 2
        assert run(capsys, "train", "--out", str(tmp_path))[0] == 2
        assert run(capsys, "evaluate", "--out", str(tmp_path), "--data", str(tmp_path))[0] == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "causal_energy", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
