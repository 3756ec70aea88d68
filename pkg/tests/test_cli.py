import json

import pytest

from aeshap.cli import cli_main
from aeshap.pipeline import OPTIMIZED, read_report

SMALL = {
    "synth": {"n_train_benign": 500, "n_test_benign": 200, "n_attack": 50,
              "n_features": 10, "n_informative": 3, "shift": 6.0},
    "autoencoder": {"epochs": 10, "batch_size": 128},
    "explainer": {"kmeans_k": 4},
    "background_size": 20, "top_k": 4, "seed": 1,
}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return p


def test_help_lists_subcommands(capsys):
    assert cli_main(["--help"]) == 0
    out = capsys.readouterr().out
    for cmd in ("synth", "train", "explain", "select", "evaluate", "compare"):
        assert cmd in out


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["compare", "--config", "x", "--bogus"],
                                  ["train"]])
def test_usage_errors_exit_2(argv, capsys):
    assert cli_main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_data_file_names_path(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"train_csv": str(tmp_path / "nope.csv"),
                               "test_csv": str(tmp_path / "t.csv")}))
    assert cli_main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "nope.csv" in err and "[ingest]" in err


def test_missing_config_file(tmp_path, capsys):
    assert cli_main(["compare", "--config", str(tmp_path / "none.json")]) != 0
    assert "none.json" in capsys.readouterr().err


def test_compare_writes_report_and_three_svgs(tmp_path, config, capsys):
    out = tmp_path / "run"
    assert cli_main(["compare", "--config", str(config), "--out", str(out)]) == 0
    assert "OPT_Model" in capsys.readouterr().out
    assert (out / "report.json").exists() and (out / "report.txt").exists()
    assert len(list(out.glob("*.svg"))) == 3
    meta = json.loads((out / "run.json").read_text())
    assert meta["seed"] == 1 and "config_hash" in meta


def test_stages_compose_to_compare(tmp_path, config):
    c = str(config)
    ref = tmp_path / "ref"
    assert cli_main(["compare", "--config", c, "--out", str(ref)]) == 0
    st = tmp_path / "stages"
    assert cli_main(["train", "--config", c, "--out", str(st), "--name", "base"]) == 0
    assert cli_main(["explain", "--config", c, "--out", str(st),
                     "--model", str(st / "base.npz"), "--jobs", "2"]) == 0
    assert (st / "explanations.tsv").read_bytes() == (ref / "explanations.tsv").read_bytes()
    assert cli_main(["select", "--explanations", str(st / "explanations.tsv"),
                     "--top-k", "4", "--out", str(st)]) == 0
    assert (st / "ranking.tsv").read_bytes() == (ref / "ranking.tsv").read_bytes()
    assert cli_main(["train", "--config", c, "--out", str(st), "--name", "opt",
                     "--ranking", str(st / "ranking.tsv")]) == 0
    assert cli_main(["evaluate", "--config", c, "--out", str(st),
                     "--model", str(st / "opt.npz")]) == 0
    ev = json.loads((st / "evaluation.json").read_text())
    report = read_report(ref / "report.json")
    assert ev["features"] == list(report.selected)
    assert ev["metrics"] == report.models[OPTIMIZED]["metrics"]
    assert (st / "roc.tsv").read_bytes() == (ref / "roc_opt_model.tsv").read_bytes()


def test_synth_then_csv_pipeline(tmp_path, capsys):
    data = tmp_path / "data"
    assert cli_main(["synth", "--out", str(data), "--seed", "2"]) == 0
    for name in ("train.csv", "test.csv"):
        assert (data / name).exists()
    cfg = tmp_path / "csv.json"
    cfg.write_text(json.dumps({"train_csv": str(data / "train.csv"),
                               "test_csv": str(data / "test.csv"),
                               "benign_label": "0",
                               "autoencoder": {"epochs": 3, "batch_size": 1024},
                               "explainer": {"kmeans_k": 3, "mode": "sampled",
                                             "sample_budget": 300},
                               "background_size": 10, "top_k": 5}))
    assert cli_main(["compare", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    report = read_report(tmp_path / "r" / "report.json")
    assert len(report.selected) == 5
