"""Experiment harness: model roster, sweeps with resumable records, rank tables.

A sweep is a set of jobs, one per (task, data seed, run seed, fold). Each job
builds every roster model on the same split, trains it, scores test R^2 on the
original target scale and writes one JSON record per model. Records already on
disk are skipped, so interrupted sweeps resume where they stopped.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import re
import tempfile
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import depgraph, hierarchy, net as netlib, synth
from .data import Dataset, Scaler, apply_scaler, fit_scaler, holdout_split, load_csv, load_folds, make_splits, plan_from_folds
from .mfcf import MfcfConfig, build_mfcf
from .train import TrainConfig, fit

log = logging.getLogger(__name__)


CSV_BATCH_SIZE = 512  # benchmark tables; synthetic tasks keep the TrainConfig default


class ConfigError(ValueError):
    pass


def r_squared(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.size < 2:
        raise ValueError("r_squared needs two equal-length vectors with at least 2 entries")
    total = np.sum((y_true - y_true.mean()) ** 2)
    if total <= 0:
        raise ValueError("r_squared is undefined for a constant target")
    return float(1.0 - np.sum((y_true - y_pred) ** 2) / total)


# --------------------------------------------------------------------------- roster

STRUCTURES = ("marginal", "ms", "oracle")
_MLP_RE = re.compile(r"^mlp:(\d+)x(\d+)$")


@dataclass(frozen=True)
class ModelSpec:
    """Parsed roster entry.

    ``hnn-marginal``, ``hnn-ms``, ``hnn-oracle``, ``hnn-rand-oracle``,
    ``mlp-hnn[:structure]``, ``mlp:WIDTHxDEPTH``, ``pm-mlp[:structure|:N]``,
    ``external:NAME=PATTERN`` (PATTERN may contain ``{fold}``).
    """

    id: str
    family: str
    structure: str | None = None
    widths: tuple[int, ...] = ()
    target: int | None = None
    pattern: str | None = None

    @property
    def needs_oracle(self) -> bool:
        return self.structure == "oracle"

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        t = text.strip()
        if t in ("hnn-marginal", "hnn-ms", "hnn-oracle"):
            return cls(t, "hnn", t.split("-", 1)[1])
        if t == "hnn-rand-oracle":
            return cls(t, "hnn-rand", "oracle")
        if t.startswith("mlp-hnn"):
            s = t.partition(":")[2] or "marginal"
            if s not in STRUCTURES:
                raise ConfigError(f"unknown structure {s!r} in {text!r}")
            return cls(t, "mlp-hnn", s)
        if m := _MLP_RE.match(t):
            width, depth = int(m.group(1)), int(m.group(2))
            if width < 1 or depth < 1:
                raise ConfigError(f"bad MLP shape in {text!r}")
            return cls(t, "mlp", widths=(width,) * depth)
        if t.startswith("pm-mlp"):
            arg = t.partition(":")[2] or "marginal"
            if arg.isdigit():
                return cls(t, "pm-mlp", target=int(arg))
            if arg not in STRUCTURES:
                raise ConfigError(f"pm-mlp target must be a structure or integer, got {arg!r}")
            return cls(t, "pm-mlp", arg)
        if t.startswith("external:"):
            body = t.partition(":")[2]
            name, sep, pattern = body.partition("=")
            if not sep:
                name, pattern = Path(body).stem.replace("{fold}", ""), body
            return cls(f"external:{name}", "external", pattern=pattern)
        raise ConfigError(f"unknown model {text!r}")


# --------------------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    roster: list[str]
    synthetic: dict | None = None  # {"grid": [[p, n], ...]} or {"p": [...], "p_over_n": [...]}, "seeds", "task_seeds"
    csv: dict | None = None        # {"path", "target", "folds" | "k_folds", "seeds", "name"}
    train: TrainConfig = field(default_factory=TrainConfig)
    mfcf: MfcfConfig = field(default_factory=MfcfConfig)
    val_frac: float = 0.2
    test_min: int = 2000
    output: str = "runs"
    workers: int | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known - {"preset"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "preset" in d:
            base = dict(PRESETS[d.pop("preset")]) if d.get("preset") in PRESETS else None
            if base is None:
                raise ConfigError(f"unknown preset; choose from {sorted(PRESETS)}")
            base.update(d)
            d = base
        train = dict(d.get("train", {}))
        if d.get("csv") is not None:
            train.setdefault("batch_size", CSV_BATCH_SIZE)
        try:
            d["train"] = TrainConfig(**train)
            d["mfcf"] = MfcfConfig(**d.get("mfcf", {}))
            cfg = cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def models(self) -> list[ModelSpec]:
        return [ModelSpec.parse(m) for m in self.roster]

    def validate(self) -> None:
        if not self.roster:
            raise ConfigError("model roster is empty")
        models = self.models()
        if len({m.id for m in models}) != len(models):
            raise ConfigError("duplicate model ids in roster")
        if (self.synthetic is None) == (self.csv is None):
            raise ConfigError("exactly one of 'synthetic' or 'csv' task sources is required")
        if self.csv is not None:
            bad = [m.id for m in models if m.needs_oracle]
            if bad:
                raise ConfigError(f"oracle models {bad} need a synthetic task with known structure")
            if "path" not in self.csv or "target" not in self.csv:
                raise ConfigError("csv task source needs 'path' and 'target'")
        else:
            if any(m.family == "external" for m in models):
                raise ConfigError("external predictions are only supported for CSV tasks")
            self.grid()
        if not 0 < self.val_frac < 1:
            raise ConfigError("val_frac must lie in (0, 1)")

    def grid(self) -> list[tuple[int, int]]:
        s = self.synthetic or {}
        if "grid" in s:
            cells = [(int(p), int(n)) for p, n in s["grid"]]
        elif "p" in s and "p_over_n" in s:
            cells = [(int(p), int(round(p / r))) for p in s["p"] for r in s["p_over_n"]]
        else:
            raise ConfigError("synthetic source needs 'grid' or both 'p' and 'p_over_n'")
        if any(p < 2 or n < 5 for p, n in cells):
            raise ConfigError(f"grid cells need p >= 2 and n >= 5: {cells}")
        return cells


# p/n presets at desk scale; the data-rich regime is p/n <= 0.05
PRESETS = {
    "data-rich": {"synthetic": {"p": [50, 200], "p_over_n": [0.025, 0.05], "seeds": [0, 1, 2, 3, 4]}},
    "full-sweep": {"synthetic": {"p": [50, 200], "p_over_n": [0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 3.0],
                                 "seeds": [0, 1, 2, 3, 4]}},
}


# --------------------------------------------------------------------------- records

@dataclass
class RunRecord:
    task: str
    model: str
    seed: int
    fold: int
    data_seed: int = 0
    status: str = "ok"
    r2: float | None = None
    test_mse: float | None = None
    train_mse: float | None = None
    val_mse: float | None = None
    n_params: int | None = None
    stopped_epoch: int | None = None
    wall_time: float | None = None
    p: int | None = None
    n: int | None = None
    error: str | None = None

    @property
    def key(self) -> str:
        return run_key(self.task, self.model, self.seed, self.fold, self.data_seed)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def run_key(task, model, seed, fold, data_seed) -> str:
    raw = f"{task}__{model}__d{data_seed}__s{seed}__f{fold}"
    safe = re.sub(r"[^A-Za-z0-9_.=-]+", "_", raw)
    if len(safe) > 150:
        safe = safe[:120] + "_" + hashlib.sha1(raw.encode()).hexdigest()[:12]
    return safe


class RecordStore:
    """One JSON file per run under ``root/records``; writes are atomic renames."""

    def __init__(self, root):
        self.dir = Path(root) / "records"
        self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, key: str) -> Path:
        return self.dir / f"{key}.json"

    def has(self, key: str) -> bool:
        return self.path(key).exists()

    def put(self, rec: RunRecord) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.dir, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(asdict(rec), fh, sort_keys=True)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path(rec.key))

    def load_all(self) -> list[RunRecord]:
        recs = [RunRecord.from_dict(json.loads(p.read_text())) for p in sorted(self.dir.glob("*.json"))]
        return sorted(recs, key=lambda r: r.key)


# --------------------------------------------------------------------------- splits and models

@dataclass
class Split:
    task: str
    train: Dataset
    val: Dataset
    test: Dataset
    test_rows: np.ndarray | None = None  # dataset row ids (CSV tasks)
    synthetic: synth.SyntheticTask | None = None


@dataclass
class Prepared:
    split: Split
    scaler: Scaler
    train: Dataset
    val: Dataset
    test_X: np.ndarray


def prepare(split: Split) -> Prepared:
    scaler = fit_scaler(split.train)
    return Prepared(split, scaler, apply_scaler(scaler, split.train), apply_scaler(scaler, split.val),
                    scaler.transform_features(split.test.features))


def synthetic_split(p: int, n: int, data_seed: int, val_frac: float = 0.2, test_min: int = 2000) -> Split:
    return task_split(synth.gen_task(p, n, data_seed), data_seed, val_frac, test_min)


def task_split(task: synth.SyntheticTask, data_seed: int, val_frac: float = 0.2, test_min: int = 2000) -> Split:
    """Train/validation split of the task's rows plus a fresh test sample of max(n, test_min)."""
    p, n = task.p, task.n
    tr, va = holdout_split(np.arange(n), val_frac, np.random.SeedSequence([data_seed, 0xA11]))
    full = Dataset(task.X, task.y)
    Xt, yt = task.sample(max(n, test_min))
    return Split(f"synth-p{p}-n{n}", full.subset(tr), full.subset(va), Dataset(Xt, yt), None, task)


def structure_hierarchy(kind: str, prep: Prepared, cfg: MfcfConfig, seed: int = 0) -> hierarchy.InteractionHierarchy:
    """Interaction hierarchy from training rows only (or the synthetic ground truth)."""
    p = prep.train.p
    if kind == "oracle":
        if prep.split.synthetic is None:
            raise ConfigError("oracle structure needs a synthetic task")
        return hierarchy.oracle_hierarchy(prep.split.synthetic.interaction_sets, p)
    X = prep.train.features
    if kind == "marginal":
        return hierarchy.from_cliques(build_mfcf(depgraph.marginal_dependency(X), cfg, seed).cliques, p)
    if kind == "ms":
        lo, hi = depgraph.median_split_dependency(X, prep.train.target)
        return hierarchy.union(hierarchy.from_cliques(build_mfcf(lo, cfg, seed).cliques, p),
                               hierarchy.from_cliques(build_mfcf(hi, cfg, seed).cliques, p))
    raise ConfigError(f"unknown structure {kind!r}")


def build_model(spec: ModelSpec, prep: Prepared, cfg: MfcfConfig, seed: int, cache: dict) -> netlib.Network:
    def hier(kind):
        if kind not in cache:
            cache[kind] = structure_hierarchy(kind, prep, cfg)
        return cache[kind]

    p = prep.train.p
    if spec.family == "hnn":
        net = netlib.build_hnn(hier(spec.structure))
    elif spec.family == "hnn-rand":
        net = netlib.build_hnn(hierarchy.randomize(hier("oracle"), _derive(seed, "rand-wiring")))
        net.kind = "hnn-rand"
    elif spec.family == "mlp-hnn":
        net = netlib.build_mlp_hnn(hier(spec.structure))
    elif spec.family == "mlp":
        net = netlib.build_mlp(p, spec.widths)
    elif spec.family == "pm-mlp":
        target = spec.target if spec.target is not None else hierarchy.param_count(hier(spec.structure))
        net = netlib.build_pm_mlp(p, target)
    else:
        raise ConfigError(f"{spec.id} is not a trainable model")
    return netlib.init_params(net, _derive(seed, "init", spec.id))


def _derive(seed: int, *tags) -> int:
    h = hashlib.sha256(repr((int(seed),) + tags).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def train_model(spec: ModelSpec, prep: Prepared, seed: int, fold: int, cache: dict, data_seed: int = 0,
                train_cfg: TrainConfig = TrainConfig(), mfcf_cfg: MfcfConfig = MfcfConfig()):
    """Build, train and score one model; returns ``(record, TrainResult | None)``.

    Failures are caught and recorded (status "failed") rather than raised.
    """
    split = prep.split
    rec = RunRecord(split.task, spec.id, seed, fold, data_seed, p=split.train.p,
                    n=split.train.n + split.val.n)
    res = None
    t0 = time.perf_counter()
    try:
        if spec.family == "external":
            pred = read_external(spec.pattern, fold, split.test_rows)
        else:
            net = build_model(spec, prep, mfcf_cfg, seed, cache)
            tcfg = TrainConfig(**{**asdict(train_cfg), "seed": _derive(seed, "shuffle", spec.id, fold)})
            res = fit(net, prep.train, prep.val, tcfg)
            pred = prep.scaler.inverse_target(res.net.predict(prep.test_X))
            rec.n_params = res.net.size
            rec.stopped_epoch = res.stopped_epoch
            _, tr_mse, _ = res.history[res.best_epoch - 1]
            rec.train_mse, rec.val_mse = float(tr_mse), res.best_val
        y = split.test.target
        rec.r2 = r_squared(y, pred)
        rec.test_mse = float(np.mean((y - pred) ** 2))
    except Exception as exc:  # fail-soft: the sweep records the failure and continues
        rec.status = "failed"
        rec.error = f"{type(exc).__name__}: {exc}"
        res = None
        log.warning("run %s failed: %s", rec.key, rec.error)
        log.debug("%s", traceback.format_exc())
    rec.wall_time = time.perf_counter() - t0
    return rec, res


def train_and_score(spec: ModelSpec, prep: Prepared, cfg: ExperimentConfig, seed: int, fold: int,
                    cache: dict, data_seed: int = 0) -> RunRecord:
    return train_model(spec, prep, seed, fold, cache, data_seed, cfg.train, cfg.mfcf)[0]


def read_external(pattern: str, fold: int, test_rows: np.ndarray) -> np.ndarray:
    path = Path(pattern.format(fold=fold))
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"row_index", "prediction"} <= set(rows[0]):
        raise ValueError(f"{path}: expected columns row_index,prediction")
    preds = {int(r["row_index"]): float(r["prediction"]) for r in rows}
    missing = [int(i) for i in test_rows if int(i) not in preds]
    if missing:
        raise ValueError(f"{path}: no predictions for test rows {missing[:5]}")
    return np.array([preds[int(i)] for i in test_rows])


# --------------------------------------------------------------------------- sweep

@dataclass(frozen=True)
class Job:
    kind: str  # "synthetic" | "csv"
    p: int
    n: int
    data_seed: int
    seed: int
    fold: int


def plan_jobs(cfg: ExperimentConfig) -> list[Job]:
    if cfg.synthetic is not None:
        seeds = [int(s) for s in cfg.synthetic.get("seeds", [0])]
        task_seeds = cfg.synthetic.get("task_seeds")
        pairs = ([(s, s) for s in seeds] if task_seeds is None
                 else [(int(d), s) for d in task_seeds for s in seeds])
        return [Job("synthetic", p, n, d, s, 0) for p, n in cfg.grid() for d, s in pairs]
    ds, plan = csv_source(cfg)
    seeds = [int(s) for s in cfg.csv.get("seeds", [0])]
    return [Job("csv", ds.p, ds.n, 0, s, f) for f in range(plan.k_folds) for s in seeds]


def csv_source(cfg: ExperimentConfig):
    c = cfg.csv
    ds = load_csv(c["path"], c["target"])
    if c.get("folds"):
        plan = plan_from_folds(load_folds(c["folds"], ds.n), cfg.val_frac, int(c.get("split_seed", 0)))
    else:
        plan = make_splits(ds.n, int(c.get("k_folds", 5)), cfg.val_frac, int(c.get("split_seed", 0)))
    return ds, plan


def csv_task_name(cfg: ExperimentConfig) -> str:
    return cfg.csv.get("name") or Path(cfg.csv["path"]).stem


def csv_split(ds: Dataset, plan, fold: int, name: str) -> Split:
    test = plan.test_rows(fold)
    tr, va = plan.train_val_rows(fold)
    return Split(name, ds.subset(tr), ds.subset(va), ds.subset(test), test)


def _job_split(cfg: ExperimentConfig, job: Job) -> Split:
    if job.kind == "synthetic":
        return synthetic_split(job.p, job.n, job.data_seed, cfg.val_frac, cfg.test_min)
    ds, plan = csv_source(cfg)
    return csv_split(ds, plan, job.fold, csv_task_name(cfg))


def _job_task_id(cfg: ExperimentConfig, job: Job) -> str:
    return f"synth-p{job.p}-n{job.n}" if job.kind == "synthetic" else csv_task_name(cfg)


def run_job(cfg: ExperimentConfig, job: Job, out: str) -> list[RunRecord]:
    store = RecordStore(out)
    task = _job_task_id(cfg, job)
    todo = [m for m in cfg.models()
            if not store.has(run_key(task, m.id, job.seed, job.fold, job.data_seed))]
    if not todo:
        return []
    prep = prepare(_job_split(cfg, job))
    cache: dict = {}
    done = []
    for spec in todo:
        rec = train_and_score(spec, prep, cfg, job.seed, job.fold, cache, job.data_seed)
        store.put(rec)
        done.append(rec)
        log.info("%s %s seed=%d fold=%d r2=%s (%.1fs)", rec.task, rec.model, rec.seed, rec.fold,
                 "failed" if rec.r2 is None else f"{rec.r2:.4f}", rec.wall_time)
    return done


def _worker_init():
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(1)
    except ImportError:
        pass


def _run_job_star(args):
    return run_job(*args)


def worker_count(cfg: ExperimentConfig) -> int:
    if cfg.workers:
        return int(cfg.workers)
    env = os.environ.get("HOMNET_WORKERS")
    return max(1, int(env)) if env else 1


def run_experiment(cfg: ExperimentConfig, out: str | None = None) -> list[RunRecord]:
    """Run every pending job and return the records this config covers, both
    resumed and new. Other experiments may share the store."""
    cfg.validate()
    out = out or cfg.output
    Path(out).mkdir(parents=True, exist_ok=True)
    (Path(out) / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True, default=str))
    jobs = plan_jobs(cfg)
    workers = worker_count(cfg)
    if workers <= 1:
        for job in jobs:
            run_job(cfg, job, out)
    else:
        with ProcessPoolExecutor(workers, initializer=_worker_init) as pool:
            list(pool.map(_run_job_star, [(cfg, job, out) for job in jobs]))
    keys = {run_key(_job_task_id(cfg, job), m.id, job.seed, job.fold, job.data_seed)
            for job in jobs for m in cfg.models()}
    return [r for r in RecordStore(out).load_all() if r.key in keys]


# --------------------------------------------------------------------------- ranks and reports

@dataclass
class RankTable:
    models: list[str]  # ordered by mean rank, then id
    mean_rank: dict[str, float]
    task_ranks: dict[str, dict[str, float]]
    task_scores: dict[str, dict[str, float | None]]
    param_range: dict[str, list[int] | None]
    failed: list[list[str]]  # [task, model] cells with at least one failed run

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    def to_csv(self) -> str:
        lines = ["model,mean_rank,params_min,params_max"]
        for m in self.models:
            pr = self.param_range.get(m)
            lines.append(f"{m},{self.mean_rank[m]!r},{'' if pr is None else pr[0]},{'' if pr is None else pr[1]}")
        return "\n".join(lines) + "\n"


def aggregate_ranks(records: list[RunRecord]) -> RankTable:
    """Rank models within each task by mean test R^2 (higher is better,
    fractional ranks on ties, failed cells last) and average across tasks."""
    if not records:
        raise ValueError("no records to aggregate")
    models = sorted({r.model for r in records})
    tasks = sorted({r.task for r in records})
    by_cell: dict[tuple[str, str], list[RunRecord]] = {}
    for r in records:
        by_cell.setdefault((r.task, r.model), []).append(r)

    missing = [(t, m) for t in tasks for m in models if (t, m) not in by_cell]
    if missing:
        raise ValueError(f"models without records for some tasks (mark them failed): {missing[:5]}")

    task_ranks, task_scores, failed = {}, {}, []
    for t in tasks:
        scores = {}
        for m in models:
            runs = by_cell[(t, m)]
            if any(r.status != "ok" or r.r2 is None for r in runs):
                scores[m] = None
                failed.append([t, m])
            else:
                scores[m] = float(np.mean([r.r2 for r in sorted(runs, key=lambda r: r.key)]))
        ok = [m for m in models if scores[m] is not None]
        bad = [m for m in models if scores[m] is None]
        ranks = {}
        if ok:
            for m, rk in zip(ok, rankdata([-scores[m] for m in ok], method="average")):
                ranks[m] = float(rk)
        if bad:
            last = float(np.mean(np.arange(len(ok) + 1, len(models) + 1)))
            ranks.update({m: last for m in bad})
        task_ranks[t] = ranks
        task_scores[t] = scores

    mean_rank = {m: float(np.mean([task_ranks[t][m] for t in tasks])) for m in models}
    prange = {}
    for m in models:
        counts = [r.n_params for r in records if r.model == m and r.n_params is not None]
        prange[m] = [int(min(counts)), int(max(counts))] if counts else None
    order = sorted(models, key=lambda m: (mean_rank[m], m))
    return RankTable(order, mean_rank, task_ranks, task_scores, prange, failed)


RECORD_FIELDS = [f.name for f in fields(RunRecord)]


def curve_rows(records: list[RunRecord]) -> list[dict]:
    """Mean test R^2 +- SEM per (model, p, n) cell; SEM is null with a single run."""
    cells: dict[tuple, list[float]] = {}
    for r in sorted(records, key=lambda r: r.key):
        if r.status == "ok" and r.r2 is not None and r.p and r.n:
            cells.setdefault((r.model, r.p, r.n), []).append(r.r2)
    rows = []
    for (model, p, n), vals in sorted(cells.items()):
        v = np.array(vals)
        sem = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else None
        rows.append({"model": model, "p": p, "n": n, "p_over_n": p / n, "mean_r2": float(v.mean()),
                     "sem": sem, "count": int(v.size)})
    return rows


def report(table: RankTable, records: list[RunRecord], out) -> dict[str, Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"rank_json": out / "rank_table.json", "rank_csv": out / "rank_table.csv",
             "runs_csv": out / "runs.csv", "curve_csv": out / "curve.csv", "curve_json": out / "curve.json"}
    paths["rank_json"].write_text(table.to_json())
    paths["rank_csv"].write_text(table.to_csv())
    with paths["runs_csv"].open("w", newline="") as fh:
        w = csv.DictWriter(fh, RECORD_FIELDS)
        w.writeheader()
        for r in sorted(records, key=lambda r: r.key):
            w.writerow({k: ("" if v is None else repr(float(v)) if isinstance(v, float) else v)
                        for k, v in asdict(r).items()})
    rows = curve_rows(records)
    with paths["curve_csv"].open("w", newline="") as fh:
        w = csv.DictWriter(fh, ["model", "p", "n", "p_over_n", "mean_r2", "sem", "count"])
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if v is None else repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
    paths["curve_json"].write_text(json.dumps(rows, indent=1, sort_keys=True))
    return paths


def read_runs_csv(path) -> list[RunRecord]:
    ints = {"seed", "fold", "data_seed", "n_params", "stopped_epoch", "p", "n"}
    floats = {"r2", "test_mse", "train_mse", "val_mse", "wall_time"}
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            d = {}
            for k, v in row.items():
                if v == "":
                    d[k] = None
                elif k in ints:
                    d[k] = int(v)
                elif k in floats:
                    d[k] = float(v)
                else:
                    d[k] = v
            out.append(RunRecord.from_dict(d))
    return out
