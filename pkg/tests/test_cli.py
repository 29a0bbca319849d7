import json
import subprocess
import sys

import numpy as np
import pytest

from hetcal import cli, metrics, pipeline
from hetcal.score_model import load_csv, write_csv
from hetcal.synth import gen_heterogeneous


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name, seed, n in (("train", 1, 6000), ("calib", 2, 3000), ("test", 3, 3000)):
        paths[name] = tmp_path / f"{name}.csv"
        write_csv(gen_heterogeneous(n, 1.8, -0.9, seed=seed), paths[name])
    paths["model"] = tmp_path / "model.json"
    paths["dir"] = tmp_path
    return paths


def run(*args):
    return cli.main([str(a) for a in args])


class TestFit:
    def test_writes_model(self, files, capsys):
        assert run("fit", "--train", files["train"], "--calib", files["calib"], "--out", files["model"]) == 0
        err = capsys.readouterr().err
        assert "calib rows" in err and "fallback" in err
        hc = pipeline.load_model(files["model"])
        assert pipeline.HeterogeneousCalibrator.from_dict(hc.to_dict()).to_dict() == hc.to_dict()

    def test_missing_score_column(self, files, capsys):
        bad = files["dir"] / "bad.csv"
        text = files["calib"].read_text().replace("label,score,", "label,scr,", 1)
        bad.write_text(text)
        assert run("fit", "--train", files["train"], "--calib", bad, "--out", files["model"]) == 2
        assert "'score'" in capsys.readouterr().err

    def test_criterion_echoed(self, files):
        assert run("fit", "--train", files["train"], "--calib", files["calib"], "--out", files["model"],
                   "--criterion", "auc_gaussian", "--max-depth", 2) == 0
        assert json.loads(files["model"].read_text())["config"]["tree"]["criterion"] == "auc_gaussian"

    def test_bad_config_exit_two(self, files):
        assert run("fit", "--train", files["train"], "--calib", files["calib"], "--out", files["model"],
                   "--min-calib-samples", 1) == 2

    def test_missing_file(self, files):
        assert run("fit", "--train", files["dir"] / "nope.csv", "--calib", files["calib"], "--out", files["model"]) == 2


class TestApplyReport:
    def _fit(self, files):
        assert run("fit", "--train", files["train"], "--calib", files["calib"], "--out", files["model"]) == 0

    def test_matches_in_process_evaluate(self, files):
        self._fit(files)
        out, rep = files["dir"] / "out.csv", files["dir"] / "rep.json"
        assert run("apply", "--model", files["model"], "--data", files["test"], "--out", out) == 0
        assert run("report", "--data", out, "--out", rep) == 0
        report = json.loads(rep.read_text())
        direct = pipeline.evaluate(pipeline.load_model(files["model"]), load_csv(files["test"]))
        for key in ("auc", "pr_auc", "log_loss", "ece"):
            assert report[key] == pytest.approx(direct["calibrated"][key], abs=1e-12)
        assert report["auc_lift_pct"] == pytest.approx(direct["auc_lift_pct"], abs=1e-12)
        assert set(report) >= {"auc", "pr_auc", "log_loss", "ece", "roc"}

    def test_row_order_and_column(self, files):
        self._fit(files)
        out = files["dir"] / "out.csv"
        run("apply", "--model", files["model"], "--data", files["test"], "--out", out)
        src, dst = files["test"].read_text().splitlines(), out.read_text().splitlines()
        assert dst[0] == src[0] + ",calibrated_prob"
        assert [l.rsplit(",", 1)[0] for l in dst[1:]] == src[1:]

    def test_empty_data(self, files):
        self._fit(files)
        empty, out = files["dir"] / "empty.csv", files["dir"] / "eo.csv"
        empty.write_text(files["test"].read_text().splitlines()[0] + "\n")
        assert run("apply", "--model", files["model"], "--data", empty, "--out", out) == 0
        assert out.read_text().strip().endswith("calibrated_prob")

    def test_arity_mismatch(self, files):
        self._fit(files)
        narrow = files["dir"] / "narrow.csv"
        narrow.write_text("label,score,f0\n1,0.5,1\n")
        assert run("apply", "--model", files["model"], "--data", narrow, "--out", files["dir"] / "o.csv") == 2

    def test_sigmoid_column_zero_lift(self, files, capsys):
        d = load_csv(files["test"])
        path = files["dir"] / "sig.csv"
        write_csv(d, path, extra_columns={"calibrated_prob": 1 / (1 + np.exp(-d.scores))})
        assert run("report", "--data", path) == 0
        assert json.loads(capsys.readouterr().out)["auc_lift_pct"] == 0.0

    def test_perfect_column(self, files, capsys):
        d = load_csv(files["test"])
        path = files["dir"] / "perfect.csv"
        write_csv(d, path, extra_columns={"calibrated_prob": d.labels.astype(float)})
        assert run("report", "--data", path, "--no-baseline") == 0
        r = json.loads(capsys.readouterr().out)
        assert r["auc"] == 1.0 and "baseline" not in r

    def test_single_label_exit_two(self, files):
        path = files["dir"] / "one.csv"
        path.write_text("label,score,calibrated_prob\n1,0.1,0.5\n1,0.3,0.6\n")
        assert run("report", "--data", path) == 2


class TestSynth:
    def test_sweep(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert run("synth", "sweep", "--out", out) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "w,auc" and len(lines) == 32

    def test_datasets_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run("synth", "heterogeneous", "--n", 200, "--seed", 4, "--out", a)
        run("synth", "heterogeneous", "--n", 200, "--seed", 4, "--out", b)
        assert a.read_bytes() == b.read_bytes()

    def test_overconfident(self, tmp_path):
        assert run("synth", "overconfident", "--n", 100, "--out-train", tmp_path / "tr.csv",
                   "--out-test", tmp_path / "te.csv") == 0
        assert len(load_csv(tmp_path / "tr.csv")) == 100

    def test_missing_out(self):
        with pytest.raises(SystemExit) as e:
            run("synth", "overconfident", "--n", 100)
        assert e.value.code == 2


class TestVerify:
    def test_pass_and_deterministic(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run("verify", "--trials", 15, "--seed", 3, "--out", a) == 0
        assert run("verify", "--trials", 15, "--seed", 3, "--out", b) == 0
        assert a.read_bytes() == b.read_bytes()
        assert json.loads(a.read_text())["passed"]

    def test_injected_tie_bug(self, tmp_path, monkeypatch):
        monkeypatch.setattr(metrics, "TIE_WEIGHT", 1.0)
        out = tmp_path / "v.json"
        assert run("verify", "--trials", 30, "--out", out) == 1
        report = json.loads(out.read_text())
        failed = [r for r in report["properties"].values() if not r["passed"]]
        assert failed and all(r["counterexample"]["distribution"]["prob"] for r in failed)


def test_console_script(tmp_path):
    out = tmp_path / "sweep.csv"
    r = subprocess.run([sys.executable, "-m", "hetcal.cli", "synth", "sweep", "--w-max", "1", "--out", str(out)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert len(out.read_text().splitlines()) == 7
