"""Command line entry point: ``homnet {synth-gen,structure,train,sweep,report}``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import bench, depgraph, hierarchy, synth
from .data import DataError, Dataset, load_csv, load_folds, make_splits, plan_from_folds
from .mfcf import MfcfConfig, build_mfcf, validate_forest
from .train import TrainConfig

log = logging.getLogger("homnet")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise bench.ConfigError(f"{self.prog}: {message}")


def _add_dataclass_flags(parser, cls, prefix=""):
    group = parser.add_argument_group(cls.__name__)
    for f in fields(cls):
        flag = "--" + (prefix + f.name).replace("_", "-")
        kind = type(f.default)
        if kind is bool:
            group.add_argument(flag, dest=prefix + f.name, type=lambda s: s.lower() in ("1", "true", "yes"),
                               default=None, metavar="BOOL")
        else:
            group.add_argument(flag, dest=prefix + f.name, type=kind, default=None)


def _dataclass_overrides(args, cls, prefix="") -> dict:
    out = {}
    for f in fields(cls):
        v = getattr(args, prefix + f.name, None)
        if v is not None:
            out[f.name] = v
    return out


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise bench.ConfigError(f"cannot read config {path}: {exc}") from None


def _mfcf_cfg(args, base: dict) -> MfcfConfig:
    return MfcfConfig(**{**base.get("mfcf", {}), **_dataclass_overrides(args, MfcfConfig)})


def _train_cfg(args, base: dict) -> TrainConfig:
    return TrainConfig(**{**base.get("train", {}), **_dataclass_overrides(args, TrainConfig, "train_")})


# --------------------------------------------------------------------------- subcommands

def cmd_synth_gen(args) -> int:
    out = Path(args.out)
    for seed in args.seeds:
        task = synth.gen_task(args.p, args.n, seed, cap=args.cap, noise_std=args.noise_std)
        path = task.save(out / f"synth-p{args.p}-n{args.n}-s{seed}")
        print(f"{path}: {len(task.interactions)} interactions, {len(task.graph)} edges")
    return EXIT_OK


def _input_dataset(args) -> tuple[Dataset, synth.SyntheticTask | None]:
    if args.task:
        task = synth.SyntheticTask.load(args.task)
        return Dataset(task.X, task.y), task
    if args.csv:
        if args.target is None:
            raise bench.ConfigError("--csv needs --target")
        return load_csv(args.csv, args.target), None
    raise bench.ConfigError("give --task DIR or --csv FILE")


def cmd_structure(args) -> int:
    cfg = _mfcf_cfg(args, _load_config(args.config))
    ds, _ = _input_dataset(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    X = ds.features
    if args.method == "marginal":
        mats = {"marginal": depgraph.marginal_dependency(X)}
    else:
        lo, hi = depgraph.median_split_dependency(X, ds.target)
        mats = {"low": lo, "high": hi}
    parts = []
    for name, M in mats.items():
        depgraph.save_matrix(M, out / f"dependency_{name}.csv")
        forest = build_mfcf(M, cfg, args.seed)
        forest.save(out / f"forest_{name}.json")
        report = validate_forest(forest, ds.p, cfg.max_clique_size)
        if not report.ok:
            raise RuntimeError(f"invalid clique forest: {report.problems}")
        parts.append(hierarchy.from_cliques(forest.cliques, ds.p))
    h = parts[0] if len(parts) == 1 else hierarchy.union(*parts)
    h.save(out / "hierarchy.json")
    print(f"widths {list(h.widths)}; parameters {hierarchy.param_count(h)}")
    return EXIT_OK


def cmd_train(args) -> int:
    base = _load_config(args.config)
    ds, task = _input_dataset(args)
    if task is None and args.train_batch_size is None:
        base.setdefault("train", {}).setdefault("batch_size", bench.CSV_BATCH_SIZE)
    tcfg, mcfg = _train_cfg(args, base), _mfcf_cfg(args, base)
    spec = bench.ModelSpec.parse(args.model)
    val_frac = args.val_frac
    if task is not None:
        split = bench.task_split(task, task.seed, val_frac, args.test_min)
    else:
        if spec.needs_oracle:
            raise bench.ConfigError(f"{spec.id} needs a synthetic task bundle")
        if args.folds:
            plan = plan_from_folds(load_folds(args.folds, ds.n), val_frac, args.split_seed)
        else:
            plan = make_splits(ds.n, args.k_folds, val_frac, args.split_seed)
        if not 0 <= args.fold < plan.k_folds:
            raise bench.ConfigError(f"--fold must lie in [0, {plan.k_folds})")
        split = bench.csv_split(ds, plan, args.fold, Path(args.csv).stem)
    prep = bench.prepare(split)
    rec, res = bench.train_model(spec, prep, args.seed, args.fold, {}, task.seed if task else 0, tcfg, mcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "record.json").write_text(json.dumps(asdict(rec), indent=1, sort_keys=True))
    if res is not None:
        res.net.save(out / "model.bin")
        res.save_history(out / "history.csv")
    if rec.status != "ok":
        print(f"run failed: {rec.error}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{rec.model}: test R2 {rec.r2:.4f}, {rec.n_params} parameters, stopped at epoch {rec.stopped_epoch}")
    return EXIT_OK


def _experiment_config(args) -> bench.ExperimentConfig:
    d = _load_config(args.config)
    if args.preset:
        d["preset"] = args.preset
    if args.roster:
        d["roster"] = args.roster
    if args.output:
        d["output"] = args.output
    if args.workers:
        d["workers"] = args.workers
    if args.val_frac is not None:
        d["val_frac"] = args.val_frac
    d["train"] = {**d.get("train", {}), **_dataclass_overrides(args, TrainConfig, "train_")}
    d["mfcf"] = {**d.get("mfcf", {}), **_dataclass_overrides(args, MfcfConfig)}
    if "roster" not in d:
        raise bench.ConfigError("no model roster given (--roster or config 'roster')")
    return bench.ExperimentConfig.from_dict(d)


def cmd_sweep(args) -> int:
    cfg = _experiment_config(args)
    records = bench.run_experiment(cfg)
    failed = [r for r in records if r.status != "ok"]
    table = bench.aggregate_ranks(records)
    paths = bench.report(table, records, Path(cfg.output) / "report")
    print(table.to_csv(), end="")
    print(f"{len(records)} records ({len(failed)} failed); reports in {paths['rank_json'].parent}")
    return EXIT_OK


def cmd_report(args) -> int:
    records = bench.RecordStore(args.runs).load_all()
    if not records:
        raise bench.ConfigError(f"no records under {args.runs}")
    table = bench.aggregate_ranks(records)
    out = Path(args.out) if args.out else Path(args.runs) / "report"
    bench.report(table, records, out)
    print(table.to_csv(), end="")
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="homnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("synth-gen", help="write synthetic task bundles")
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seeds", type=int, nargs="+", default=[0])
    g.add_argument("--cap", type=int, default=synth.DEFAULT_CAP)
    g.add_argument("--noise-std", type=float, default=synth.NOISE_STD)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_synth_gen)

    def add_input(p):
        p.add_argument("--task", help="synthetic task bundle directory")
        p.add_argument("--csv", help="numeric CSV with a header row")
        p.add_argument("--target", help="target column name or index (with --csv)")
        p.add_argument("--config", help="JSON file with 'train' and 'mfcf' sections")

    s = sub.add_parser("structure", help="dependency matrix, clique forest and hierarchy")
    add_input(s)
    s.add_argument("--method", choices=["marginal", "ms"], default="marginal")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    _add_dataclass_flags(s, MfcfConfig)
    s.set_defaults(func=cmd_structure)

    t = sub.add_parser("train", help="train and score a single model")
    add_input(t)
    t.add_argument("--model", required=True, help="roster entry, e.g. hnn-marginal or mlp:128x2")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--fold", type=int, default=0)
    t.add_argument("--folds", help="fold-assignment file (CSV input)")
    t.add_argument("--k-folds", type=int, default=5)
    t.add_argument("--split-seed", type=int, default=0)
    t.add_argument("--val-frac", type=float, default=0.2)
    t.add_argument("--test-min", type=int, default=2000)
    t.add_argument("--out", required=True)
    _add_dataclass_flags(t, TrainConfig, "train_")
    _add_dataclass_flags(t, MfcfConfig)
    t.set_defaults(func=cmd_train)

    w = sub.add_parser("sweep", help="run a full experiment (resumable)")
    w.add_argument("--config", help="ExperimentConfig JSON")
    w.add_argument("--preset", choices=sorted(bench.PRESETS))
    w.add_argument("--roster", nargs="+")
    w.add_argument("--output")
    w.add_argument("--workers", type=int)
    w.add_argument("--val-frac", type=float)
    _add_dataclass_flags(w, TrainConfig, "train_")
    _add_dataclass_flags(w, MfcfConfig)
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="aggregate records into rank tables and curve data")
    r.add_argument("--runs", required=True, help="sweep output directory")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except bench.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (bench.ConfigError, DataError, hierarchy.EmptyHierarchyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TypeError, ValueError) as exc:
        # malformed config values surface here (e.g. TrainConfig validation)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
