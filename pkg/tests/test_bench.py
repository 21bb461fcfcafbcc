import json
import math
import shutil

import numpy as np
import pytest

from homnet import bench as B
from homnet.data import Dataset, save_csv
from homnet.mfcf import MfcfConfig

QUICK = {"max_epochs": 6, "patience": 3, "batch_size": 64}


def _csv_task(tmp_path, n=120, p=5, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    X[:, 1] += X[:, 0]
    y = X[:, 0] * X[:, 1] + np.sin(X[:, 2]) + 0.1 * rng.normal(size=n)
    path = tmp_path / "toy.csv"
    save_csv(Dataset(X, y), path)
    return path


def _rec(task, model, r2, seed=0, fold=0, status="ok", **kw):
    return B.RunRecord(task, model, seed, fold, r2=r2, status=status,
                       test_mse=None if r2 is None else 1 - r2, **kw)


def test_r_squared_examples():
    y = np.array([0.0, 1.0, 2.0])
    assert B.r_squared(y, y) == 1.0
    assert B.r_squared(y, np.full(3, y.mean())) == 0.0
    assert B.r_squared(y, np.zeros(3)) == pytest.approx(-1.5)
    with pytest.raises(ValueError):
        B.r_squared(np.ones(4), np.zeros(4))
    with pytest.raises(ValueError):
        B.r_squared([1.0], [1.0])


def test_model_spec_parsing():
    assert B.ModelSpec.parse("mlp:128x2").widths == (128, 128)
    assert B.ModelSpec.parse("mlp:512x1").widths == (512,)
    assert B.ModelSpec.parse("pm-mlp").structure == "marginal"
    assert B.ModelSpec.parse("pm-mlp:2200").target == 2200
    assert B.ModelSpec.parse("pm-mlp:oracle").needs_oracle
    assert B.ModelSpec.parse("hnn-rand-oracle").needs_oracle
    assert B.ModelSpec.parse("mlp-hnn").structure == "marginal"
    ext = B.ModelSpec.parse("external:rf=preds_{fold}.csv")
    assert ext.id == "external:rf" and ext.pattern == "preds_{fold}.csv"
    assert B.ModelSpec.parse("external:xgb_{fold}.csv").id == "external:xgb_"
    for bad in ("cnn", "mlp:0x2", "mlp:12", "pm-mlp:big", "mlp-hnn:foo"):
        with pytest.raises(B.ConfigError):
            B.ModelSpec.parse(bad)


def test_config_validation(tmp_path):
    path = _csv_task(tmp_path)
    with pytest.raises(B.ConfigError):
        B.ExperimentConfig.from_dict({"roster": [], "synthetic": {"grid": [[5, 50]]}})
    with pytest.raises(B.ConfigError, match="oracle"):
        B.ExperimentConfig.from_dict({"roster": ["hnn-oracle"], "csv": {"path": str(path), "target": "y"}})
    with pytest.raises(B.ConfigError):
        B.ExperimentConfig.from_dict({"roster": ["hnn-ms"]})
    with pytest.raises(B.ConfigError):
        B.ExperimentConfig.from_dict({"roster": ["hnn-ms"], "synthetic": {"grid": [[5, 50]]}, "bogus": 1})
    with pytest.raises(B.ConfigError):
        B.ExperimentConfig.from_dict({"roster": ["hnn-ms"], "synthetic": {"grid": [[5, 50]]},
                                      "train": {"patience": 10, "max_epochs": 2}})
    csv_cfg = B.ExperimentConfig.from_dict({"roster": ["hnn-ms"], "csv": {"path": str(path), "target": "y"}})
    assert csv_cfg.train.batch_size == 512
    cfg = B.ExperimentConfig.from_dict({"roster": ["hnn-ms"], "preset": "data-rich"})
    assert cfg.train.batch_size == 1024
    assert (200, 4000) in cfg.grid() and all(p / n <= 0.05 for p, n in cfg.grid())
    full = B.ExperimentConfig.from_dict({"roster": ["hnn-ms"], "preset": "full-sweep"})
    ratios = {p / n for p, n in full.grid()}
    assert min(ratios) == pytest.approx(0.01) and max(ratios) == pytest.approx(3.0, rel=0.05)  # n is rounded


def test_oracle_on_csv_fails_before_training(tmp_path, monkeypatch):
    path = _csv_task(tmp_path)
    monkeypatch.setattr(B, "fit", lambda *a, **k: pytest.fail("trained"))
    cfg = B.ExperimentConfig(["hnn-rand-oracle"], csv={"path": str(path), "target": "y"})
    with pytest.raises(B.ConfigError):
        B.run_experiment(cfg, str(tmp_path / "out"))


def test_seed_isolation(tmp_path):
    cfg = B.ExperimentConfig.from_dict({
        "roster": ["hnn-marginal"], "synthetic": {"grid": [[8, 150]], "task_seeds": [0], "seeds": [0, 1]},
        "train": QUICK, "test_min": 200, "output": str(tmp_path)})
    recs = B.run_experiment(cfg)
    assert len(recs) == 2 and all(r.status == "ok" for r in recs)
    assert recs[0].n_params == recs[1].n_params
    assert recs[0].val_mse != recs[1].val_mse
    # same data split and structure for both seeds
    prep = B.prepare(B.synthetic_split(8, 150, 0, 0.2, 200))
    h = B.structure_hierarchy("marginal", prep, MfcfConfig())
    assert h == B.structure_hierarchy("marginal", prep, MfcfConfig())


def test_resume_skips_finished_runs(tmp_path, monkeypatch):
    cfg = B.ExperimentConfig.from_dict({
        "roster": ["hnn-ms", "mlp:8x1"], "synthetic": {"grid": [[6, 100]], "seeds": [0, 1]},
        "train": QUICK, "test_min": 100, "output": str(tmp_path)})
    first = B.run_experiment(cfg)
    table = B.aggregate_ranks(first).to_json()
    monkeypatch.setattr(B, "fit", lambda *a, **k: pytest.fail("retrained a finished run"))
    again = B.run_experiment(cfg)
    assert [r.key for r in again] == [r.key for r in first]
    assert B.aggregate_ranks(again).to_json() == table


def test_shared_store_returns_only_own_records(tmp_path):
    base = {"synthetic": {"grid": [[6, 100]], "seeds": [0]}, "train": QUICK, "test_min": 100,
            "output": str(tmp_path)}
    wide = B.run_experiment(B.ExperimentConfig.from_dict({**base, "roster": ["hnn-marginal", "mlp:8x1"]}))
    narrow = B.ExperimentConfig.from_dict({**base, "roster": ["mlp:8x1"],
                                           "synthetic": {"grid": [[6, 100], [6, 60]], "seeds": [0]}})
    recs = B.run_experiment(narrow)
    assert len(wide) == 2 and {r.model for r in recs} == {"mlp:8x1"}
    assert {r.task for r in recs} == {"synth-p6-n100", "synth-p6-n60"}
    assert len(B.RecordStore(tmp_path).load_all()) == 3
    B.aggregate_ranks(recs)


def test_interrupted_sweep_gives_identical_table(tmp_path):
    cfg = B.ExperimentConfig.from_dict({
        "roster": ["hnn-marginal", "pm-mlp", "mlp:8x1"], "synthetic": {"grid": [[6, 100], [8, 80]], "seeds": [0, 1]},
        "train": QUICK, "test_min": 100})
    full = B.run_experiment(cfg, str(tmp_path / "a"))
    full_table = B.aggregate_ranks(full)
    B.report(full_table, full, tmp_path / "a" / "report")
    # simulate an interruption: keep only some records, then resume
    shutil.copytree(tmp_path / "a" / "records", tmp_path / "b" / "records")
    for path in sorted((tmp_path / "b" / "records").glob("*.json"))[::2]:
        path.unlink()
    resumed = B.run_experiment(cfg, str(tmp_path / "b"))
    B.report(B.aggregate_ranks(resumed), resumed, tmp_path / "b" / "report")
    for name in ("rank_table.json", "rank_table.csv", "curve.csv"):
        assert (tmp_path / "a" / "report" / name).read_bytes() == (tmp_path / "b" / "report" / name).read_bytes()


def test_parallel_workers_match_serial(tmp_path):
    spec = {"roster": ["hnn-marginal", "mlp:8x1"], "synthetic": {"grid": [[6, 100]], "seeds": [0, 1, 2]},
            "train": QUICK, "test_min": 100}
    serial = B.run_experiment(B.ExperimentConfig.from_dict({**spec, "workers": 1}), str(tmp_path / "s"))
    par = B.run_experiment(B.ExperimentConfig.from_dict({**spec, "workers": 2}), str(tmp_path / "p"))
    assert [(r.key, r.r2) for r in serial] == [(r.key, r.r2) for r in par]


def test_fail_soft_records(tmp_path):
    path = _csv_task(tmp_path)
    cfg = B.ExperimentConfig.from_dict({
        "roster": ["mlp:8x1", "external:missing=nowhere_{fold}.csv"],
        "csv": {"path": str(path), "target": "y", "k_folds": 2}, "train": QUICK})
    recs = B.run_experiment(cfg, str(tmp_path / "out"))
    bad = [r for r in recs if r.model == "external:missing"]
    assert len(bad) == 2 and all(r.status == "failed" and r.r2 is None and r.error for r in bad)
    assert all(r.status == "ok" for r in recs if r.model == "mlp:8x1")
    table = B.aggregate_ranks(recs)
    assert table.mean_rank == {"mlp:8x1": 1.0, "external:missing": 2.0}
    assert table.failed == [["toy", "external:missing"]]


def test_external_predictions(tmp_path):
    path = _csv_task(tmp_path)
    cfg = B.ExperimentConfig.from_dict({"roster": ["external:truth=" + str(tmp_path / "pred_{fold}.csv")],
                                        "csv": {"path": str(path), "target": "y", "k_folds": 3}})
    ds, plan = B.csv_source(cfg)
    for f in range(3):
        rows = plan.test_rows(f)
        lines = ["row_index,prediction"] + [f"{i},{float(ds.target[i])!r}" for i in rows]
        (tmp_path / f"pred_{f}.csv").write_text("\n".join(lines) + "\n")
    recs = B.run_experiment(cfg, str(tmp_path / "out"))
    assert len(recs) == 3 and all(r.r2 == 1.0 for r in recs)


def test_structure_and_scaler_ignore_test_rows(tmp_path):
    path = _csv_task(tmp_path)
    cfg = B.ExperimentConfig.from_dict({"roster": ["hnn-ms"], "csv": {"path": str(path), "target": "y"}})
    ds, plan = B.csv_source(cfg)
    test = plan.test_rows(0)
    X, y = ds.features.copy(), ds.target.copy()
    X[test] = np.random.default_rng(9).normal(size=X[test].shape) * 100
    y[test] = -y[test] * 7
    mutated = Dataset(X, y, ds.feature_names)
    a = B.prepare(B.csv_split(ds, plan, 0, "toy"))
    b = B.prepare(B.csv_split(mutated, plan, 0, "toy"))
    for field in ("mean", "std", "target_mean", "target_std"):
        assert np.array_equal(np.asarray(getattr(a.scaler, field)), np.asarray(getattr(b.scaler, field)))
    for kind in ("marginal", "ms"):
        assert B.structure_hierarchy(kind, a, MfcfConfig()) == B.structure_hierarchy(kind, b, MfcfConfig())


def test_rank_examples():
    recs = [_rec("t1", "A", 0.9), _rec("t1", "B", 0.5), _rec("t2", "A", 0.8), _rec("t2", "B", 0.1)]
    assert B.aggregate_ranks(recs).mean_rank == {"A": 1.0, "B": 2.0}
    sym = [_rec("t1", "A", 0.9), _rec("t1", "B", 0.5), _rec("t1", "C", 0.1),
           _rec("t2", "A", 0.1), _rec("t2", "B", 0.5), _rec("t2", "C", 0.9)]
    table = B.aggregate_ranks(sym)
    assert table.mean_rank == {"A": 2.0, "B": 2.0, "C": 2.0}
    assert table.models == ["A", "B", "C"]


def test_ties_failures_and_seed_means():
    recs = [_rec("t", "A", 0.5), _rec("t", "B", 0.5), _rec("t", "C", None, status="failed"),
            _rec("t", "D", 0.9, seed=0), _rec("t", "D", 0.0, seed=1)]
    table = B.aggregate_ranks(recs)
    # D averages 0.45 over its seeds, A and B tie above it, C failed
    assert table.task_ranks["t"] == {"A": 1.5, "B": 1.5, "D": 3.0, "C": 4.0}
    assert table.task_scores["t"]["D"] == pytest.approx(0.45)
    assert table.failed == [["t", "C"]]


@pytest.mark.parametrize("seed", range(20))
def test_rank_table_invariants(seed):
    rng = np.random.default_rng(seed)
    models = [f"m{i}" for i in range(int(rng.integers(2, 7)))]
    tasks = [f"t{i}" for i in range(int(rng.integers(1, 6)))]
    recs = []
    for t in tasks:
        for m in models:
            for s in range(int(rng.integers(1, 4))):
                failed = rng.random() < 0.1
                recs.append(_rec(t, m, None if failed else float(np.round(rng.uniform(-1, 1), 1)), seed=s,
                                 status="failed" if failed else "ok"))
    table = B.aggregate_ranks(recs)
    for t in tasks:
        ranks = sorted(table.task_ranks[t].values())
        assert sum(ranks) == pytest.approx(len(models) * (len(models) + 1) / 2)
        assert 1 <= ranks[0] and ranks[-1] <= len(models)
    assert all(1 <= v <= len(models) for v in table.mean_rank.values())


def test_rank_by_r2_matches_rank_by_mse():
    rng = np.random.default_rng(0)
    y = rng.normal(size=50)
    preds = {m: y + rng.normal(size=50) * s for m, s in zip("ABCD", (0.1, 0.5, 0.3, 2.0))}
    by_r2 = sorted(preds, key=lambda m: -B.r_squared(y, preds[m]))
    by_mse = sorted(preds, key=lambda m: np.mean((y - preds[m]) ** 2))
    assert by_r2 == by_mse


def test_aggregate_errors():
    with pytest.raises(ValueError):
        B.aggregate_ranks([])
    with pytest.raises(ValueError, match="without records"):
        B.aggregate_ranks([_rec("t1", "A", 0.1), _rec("t2", "B", 0.2)])


def test_report_degenerate_and_sem(tmp_path):
    one = [_rec("t", "A", 0.3, p=10, n=100)]
    B.report(B.aggregate_ranks(one), one, tmp_path / "one")
    rows = json.loads((tmp_path / "one" / "curve.json").read_text())
    assert rows == [{"model": "A", "p": 10, "n": 100, "p_over_n": 0.1, "mean_r2": 0.3, "sem": None, "count": 1}]
    assert (tmp_path / "one" / "rank_table.csv").read_text().splitlines()[1].startswith("A,1.0")

    vals = np.random.default_rng(1).uniform(size=30)
    many = [_rec("t", "A", float(v), seed=s, p=10, n=100) for s, v in enumerate(vals)]
    row = B.curve_rows(many)[0]
    assert row["sem"] == pytest.approx(vals.std(ddof=1) / math.sqrt(30), rel=1e-12)


def test_report_round_trip_and_determinism(tmp_path):
    rng = np.random.default_rng(2)
    recs = [B.RunRecord(f"t{t}", m, s, 0, r2=float(rng.uniform(-1, 1)), test_mse=float(rng.uniform()),
                        train_mse=float(rng.uniform()), val_mse=float(rng.uniform()), n_params=int(rng.integers(9, 999)),
                        wall_time=float(rng.uniform()), stopped_epoch=int(rng.integers(1, 99)), p=5, n=50 * (t + 1))
            for t in range(2) for m in ("A", "B") for s in range(3)]
    table = B.aggregate_ranks(recs)
    paths = B.report(table, recs, tmp_path / "r1")
    B.report(table, list(reversed(recs)), tmp_path / "r2")
    for name in ("rank_table.json", "rank_table.csv", "runs.csv", "curve.csv", "curve.json"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    back = {r.key: r for r in B.read_runs_csv(paths["runs_csv"])}
    for r in recs:
        b = back[r.key]
        for f in ("r2", "test_mse", "train_mse", "val_mse", "wall_time"):
            assert abs(getattr(b, f) - getattr(r, f)) <= 1e-12
        assert (b.n_params, b.stopped_epoch, b.seed) == (r.n_params, r.stopped_epoch, r.seed)
    loaded = json.loads(paths["rank_json"].read_text())
    assert loaded["mean_rank"] == table.mean_rank


def test_record_store_is_atomic(tmp_path):
    store = B.RecordStore(tmp_path)
    rec = _rec("task/with spaces", "mlp:8x1", 0.25)
    store.put(rec)
    assert store.has(rec.key)
    assert not list(store.dir.glob("*.tmp"))
    assert store.load_all() == [rec]
