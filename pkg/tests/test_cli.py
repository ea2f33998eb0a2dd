import json

import pytest

from lgi.cli import main


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "corpus"
    code = main(["generate-data", "--out", str(path),
                 "--n-train", "40", "--n-val", "12", "--seed", "5",
                 "--n-prototypes", "4", "--d-v", "5",
                 "--t-raw-min", "8", "--t-raw-max", "14"])
    assert code == 0
    return path


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    code = main(["train", "--data", str(corpus), "--out", str(out),
                 "--d", "16", "--t", "8", "--n-phrases", "2",
                 "--local-kernel", "3", "--local-window", "3",
                 "--epochs", "2", "--batch-size", "8"])
    assert code == 0
    return out


def test_generate_data_writes_corpus(corpus):
    assert (corpus / "manifest.json").exists()
    assert (corpus / "vocab.json").exists()
    assert (corpus / "train.jsonl").exists()
    manifest = json.loads((corpus / "manifest.json").read_text())
    assert manifest["splits"] == {"train": 40, "val": 12}


def test_train_writes_outputs(trained):
    for name in ("checkpoint_best.ckpt", "checkpoint_last.ckpt",
                 "metrics.jsonl", "metrics.csv", "config.json",
                 "loss_curves.png"):
        assert (trained / name).exists(), name
    assert (trained / "loss_curves.png").stat().st_size > 0


def test_eval_prints_report_and_writes_figures(corpus, trained, tmp_path, capsys):
    out_dir = tmp_path / "eval"
    code = main(["eval", "--checkpoint", str(trained / "checkpoint_best.ckpt"),
                 "--data", str(corpus), "--split", "val",
                 "--out-dir", str(out_dir), "--examples", "2"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n_samples"] == 12
    assert set(report["recall_at"]) == {"0.3", "0.5", "0.7"}
    assert (out_dir / "report.json").exists()
    csv = (out_dir / "report.csv").read_text().splitlines()
    assert csv[0].startswith("n_samples,recall_0.3")
    assert (out_dir / "tiou_hist.png").stat().st_size > 0
    examples = list(out_dir.glob("attention_*.png"))
    assert len(examples) == 2


def test_baseline_subcommand(corpus, capsys):
    code = main(["baseline", "--kind", "random", "--data", str(corpus),
                 "--seed", "1"])
    assert code == 0
    first = capsys.readouterr().out
    code = main(["baseline", "--kind", "random", "--data", str(corpus),
                 "--seed", "1"])
    assert code == 0
    assert capsys.readouterr().out == first  # deterministic for a fixed seed
    code = main(["baseline", "--kind", "center_prior", "--data", str(corpus)])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n_samples"] == 12


def test_gradcheck_quick(capsys):
    code = main(["gradcheck", "--d", "8", "--t", "6", "--l", "4", "--n", "2",
                 "--quick", "--points", "2"])
    out = capsys.readouterr().out
    assert code == 0
    assert "max relative error" in out


def test_gradcheck_impossible_tolerance_is_numeric_failure(capsys):
    code = main(["gradcheck", "--d", "8", "--t", "6", "--l", "4", "--n", "2",
                 "--quick", "--points", "1", "--tol", "1e-18"])
    capsys.readouterr()
    assert code == 3


def test_usage_error_exit_code():
    assert main(["no-such-command"]) == 1
    assert main(["train", "--data"]) == 1


def test_data_error_exit_code(tmp_path):
    assert main(["baseline", "--kind", "random",
                 "--data", str(tmp_path / "missing")]) == 2


def test_config_file_plus_overrides(corpus, tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"d": 16, "t": 8, "epochs": 1,
                                    "local_kernel": 3, "local_window": 3,
                                    "n_phrases": 2, "batch_size": 8}))
    out = tmp_path / "run"
    code = main(["train", "--data", str(corpus), "--out", str(out),
                 "--config", str(cfg_file), "--variant", "lgi_sqan",
                 "--no-plots"])
    assert code == 0
    stored = json.loads((out / "config.json").read_text())
    assert stored["variant"] == "lgi_sqan"
    assert stored["d"] == 16 and stored["epochs"] == 1


def test_invalid_config_is_usage_error(corpus, tmp_path):
    code = main(["train", "--data", str(corpus), "--out", str(tmp_path / "x"),
                 "--d", "15"])
    assert code == 1
