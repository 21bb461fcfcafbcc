import json

import numpy as np

from homnet.cli import main
from homnet.data import Dataset, save_csv
from homnet.net import Network

TRAIN_FLAGS = ["--train-max-epochs", "5", "--train-patience", "2", "--train-batch-size", "64"]


def _csv(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 4))
    save_csv(Dataset(X, X[:, 0] * X[:, 1] + 0.1 * rng.normal(size=80)), tmp_path / "d.csv")
    return str(tmp_path / "d.csv")


def test_synth_structure_train(tmp_path, capsys):
    assert main(["synth-gen", "--p", "8", "--n", "120", "--seeds", "0", "--out", str(tmp_path / "tasks")]) == 0
    task = str(tmp_path / "tasks" / "synth-p8-n120-s0")
    assert main(["structure", "--task", task, "--method", "ms", "--out", str(tmp_path / "st")]) == 0
    assert {"dependency_low.csv", "dependency_high.csv", "forest_low.json", "hierarchy.json"} <= {
        p.name for p in (tmp_path / "st").iterdir()}
    assert main(["train", "--task", task, "--model", "hnn-oracle", "--out", str(tmp_path / "run"),
                 "--test-min", "100", *TRAIN_FLAGS]) == 0
    rec = json.loads((tmp_path / "run" / "record.json").read_text())
    assert rec["status"] == "ok" and rec["stopped_epoch"] <= 5
    assert Network.load(tmp_path / "run" / "model.bin").size == rec["n_params"]


def test_train_on_csv(tmp_path):
    path = _csv(tmp_path)
    assert main(["train", "--csv", path, "--target", "y", "--model", "mlp:4x2", "--fold", "1",
                 "--k-folds", "3", "--out", str(tmp_path / "r"), *TRAIN_FLAGS]) == 0


def test_config_errors_exit_1(tmp_path, capsys):
    path = _csv(tmp_path)
    assert main(["train", "--csv", path, "--target", "y", "--model", "hnn-oracle", "--out", str(tmp_path)]) == 1
    assert main(["train", "--csv", path, "--target", "nope", "--model", "mlp:4x1", "--out", str(tmp_path)]) == 1
    assert main(["sweep", "--roster", "hnn-ms"]) == 1
    assert main(["sweep", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["train", "--csv", path, "--target", "y", "--model", "mlp:4x1", "--out", str(tmp_path),
                 "--train-patience", "9", "--train-max-epochs", "3"]) == 1
    assert "error" in capsys.readouterr().err


def test_runtime_failure_exit_2(tmp_path):
    (tmp_path / "task").mkdir()
    (tmp_path / "task" / "manifest.json").write_text("{}")
    assert main(["structure", "--task", str(tmp_path / "task"), "--out", str(tmp_path / "o")]) == 2


def test_sweep_and_report(tmp_path):
    cfg = {"roster": ["hnn-marginal", "mlp:8x1"], "synthetic": {"grid": [[6, 80]], "seeds": [0, 1]},
           "train": {"max_epochs": 4, "patience": 2}, "test_min": 100, "output": str(tmp_path / "sw")}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert main(["sweep", "--config", str(tmp_path / "c.json")]) == 0
    first = (tmp_path / "sw" / "report" / "rank_table.json").read_bytes()
    assert main(["report", "--runs", str(tmp_path / "sw"), "--out", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "rank_table.json").read_bytes() == first
    assert main(["report", "--runs", str(tmp_path / "empty")]) == 1
