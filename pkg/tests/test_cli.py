import json
import os

import numpy as np
import pandas as pd
import pytest

from cli import RunConfig, build_parser, main, parse_config
from data_ingestion import load_csv, write_csv
from services.evaluation import read_table
from services.stats_engine import scores_frame


@pytest.fixture
def toy_csv(tmp_path, toy):
    path = str(tmp_path / "toy.csv")
    write_csv(toy, path)
    return path


def test_parse_config_threads_globals():
    cfg, level = parse_config(["--seed", "7", "--threads", "2", "cv", "--data", "d.csv", "--k", "3"])
    assert isinstance(cfg, RunConfig)
    assert (cfg.command, cfg.seed, cfg.threads, level) == ("cv", 7, 2, "INFO")
    assert cfg.opt("k") == 3
    assert cfg.opt("variant") == "eps_baen"


def test_explicit_seed_overrides_protocol_seed(tmp_path, monkeypatch):
    protocol = tmp_path / "protocol.json"
    protocol.write_text(json.dumps({"format": "baen-bench/1", "synthetic": {"count": 2, "n": 20}, "seed": 7}))
    seen = []
    monkeypatch.setattr("cli.run_bench", lambda p, out_dir, threads=None: seen.append(p.seed) or
                        {"cv": [], "scores": [], "reports": []})
    bench = ["bench", "--protocol", str(protocol), "--out-dir", str(tmp_path)]
    assert main(bench) == 0
    assert main(["--seed", "42"] + bench) == 0
    assert seen == [7, 42]
    assert parse_config(bench)[0].seed_given is False


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--help"])
    assert exc.value.code == 0
    out = " ".join(capsys.readouterr().out.split())
    assert "(default: eps_baen)" in out
    assert "(default: model.json)" in out
    assert "(default: 42)" in " ".join(build_parser().format_help().split())


def test_train_then_predict(tmp_path, toy_csv, capsys):
    model = str(tmp_path / "m.json")
    assert main(["train", "--data", toy_csv, "--variant", "hinge", "--kernel", "linear", "--C", "10",
                 "--out", model]) == 0
    assert "✅ model written to" in capsys.readouterr().out
    out = str(tmp_path / "pred.csv")
    assert main(["predict", "--model", model, "--data", toy_csv, "--label-column", "-1", "--out", out]) == 0
    assert "acc=1.0000" in capsys.readouterr().out
    pred = read_table(out)
    assert list(pred.columns) == ["row", "score", "label", "true_label"]
    assert (pred["label"] == pred["true_label"]).all()


def test_predict_unlabeled_and_dimension_mismatch(tmp_path, toy_csv, capsys):
    model = str(tmp_path / "m.json")
    assert main(["train", "--data", toy_csv, "--variant", "en", "--kernel", "linear", "--out", model]) == 0
    features = tmp_path / "x.csv"
    pd.DataFrame({"a": [2.5, -2.5], "b": [2.0, -2.0]}).to_csv(features, index=False)
    out = str(tmp_path / "p.csv")
    assert main(["predict", "--model", model, "--data", str(features), "--out", out]) == 0
    assert read_table(out)["label"].tolist() == [1, -1]

    wide = tmp_path / "wide.csv"
    pd.DataFrame({"a": [1.0], "b": [2.0], "c": [3.0]}).to_csv(wide, index=False)
    capsys.readouterr()
    assert main(["predict", "--model", model, "--data", str(wide), "--out", out]) == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error=dimension ")
    assert len(err.splitlines()) == 1


def test_errors_exit_with_category(tmp_path, toy_csv, capsys):
    assert main(["train", "--data", str(tmp_path / "missing.csv")]) == 2
    assert capsys.readouterr().err.startswith("error=data ")
    assert main(["train", "--data", toy_csv, "--p", "1.5"]) == 2
    assert capsys.readouterr().err.startswith("error=config ")
    assert main(["predict", "--model", str(tmp_path / "none.json"), "--data", toy_csv]) == 2
    assert capsys.readouterr().err.startswith("error=format ")


def test_cv_and_grid_commands(tmp_path, toy_csv):
    out = str(tmp_path / "cv.csv")
    assert main(["cv", "--data", toy_csv, "--variant", "hinge", "--kernel", "linear", "--k", "3", "--out", out]) == 0
    table = read_table(out)
    assert table.loc[0, "acc_mean"] == 1.0
    assert os.path.exists(str(tmp_path / "cv.jsonl"))

    out = str(tmp_path / "grid.csv")
    assert main(["--threads", "1", "grid", "--data", toy_csv, "--variant", "pinball", "--kernel", "linear",
                 "--k", "3", "--out", out]) == 0
    assert len(read_table(out)) == 6


def test_stats_command(tmp_path, capsys):
    scores = np.tile(np.arange(7, 0, -1, dtype=float)[:, None], (1, 15))
    path = tmp_path / "scores.csv"
    scores_frame(scores, [f"m{j}" for j in range(7)], [f"d{i}" for i in range(15)]).to_csv(path, index=False)
    out = tmp_path / "report.json"
    assert main(["stats", "--scores", str(path), "--alpha", "0.1", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["chi2_f"] == pytest.approx(90.0)
    assert report["f_f"] is None and report["f_p"] is None
    assert report["cd"] == pytest.approx(2.12, abs=0.005)
    assert "F_F=undefined" in capsys.readouterr().out


def test_synth_command(tmp_path):
    out_dir = tmp_path / "synth"
    assert main(["synth", "--out-dir", str(out_dir), "--resolution", "10"]) == 0
    assert load_csv(str(out_dir / "gaussian.csv"), "label").n_samples == 150
    assert load_csv(str(out_dir / "case1.csv"), "label").n_samples == 153
    assert load_csv(str(out_dir / "case2.csv"), "label").n_samples == 156
    assert len(read_table(str(out_dir / "boundary_case1_eps_baen.csv"))) == 100
    summary = read_table(str(out_dir / "boundary_summary.csv"))
    assert len(summary) == 8
    assert set(summary["variant"]) == {"hinge", "pinball", "en", "eps_baen"}
    assert (summary["angle_deg"].between(0.0, 90.0)).all()
    assert set(read_table(str(out_dir / "loss_curves.csv"))["panel"]) >= {"compare", "eta"}


def test_bench_command(tmp_path, capsys):
    protocol = tmp_path / "protocol.json"
    protocol.write_text(json.dumps({
        "format": "baen-bench/1",
        "synthetic": {"count": 2, "n": 20, "separation": 1.5},
        "noise": ["none"],
        "variants": ["hinge", "en"],
        "kernels": ["linear"],
        "k": 2,
    }))
    out_dir = tmp_path / "bench"
    assert main(["--threads", "1", "bench", "--protocol", str(protocol), "--out-dir", str(out_dir)]) == 0
    assert "2 score matrices, 2 report(s)" in capsys.readouterr().out
    report = json.loads((out_dir / "friedman__none__linear__acc.json").read_text())
    assert report["k"] == 2 and report["N"] == 2
