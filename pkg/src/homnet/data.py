"""Tabular dataset ingestion, standardization and split bookkeeping."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    target: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.target, dtype=np.float64).reshape(-1)
        if X.ndim != 2:
            raise DataError(f"features must be 2-d, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains missing or non-finite values")
        names = list(self.feature_names) or [f"x{j}" for j in range(X.shape[1])]
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} feature names for {X.shape[1]} columns")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.target[rows], self.feature_names)


def _check_shape(ds: Dataset) -> Dataset:
    if ds.n < 2 or ds.p < 2:
        raise DataError(f"need n >= 2 and p >= 2, got n={ds.n}, p={ds.p}")
    return ds


def load_csv(path, target_column: str | int) -> Dataset:
    """Read a headed, comma-separated numeric table.

    ``target_column`` is a header name or a 0-based column index. Empty or
    non-numeric cells raise :class:`DataError` naming the 1-based data row
    and the column header.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such CSV file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [r for r in reader if r]

    if isinstance(target_column, int) or (isinstance(target_column, str) and target_column.isdigit()
                                          and target_column not in header):
        t = int(target_column)
        if not 0 <= t < len(header):
            raise DataError(f"target column index {t} out of range for {len(header)} columns")
    else:
        if target_column not in header:
            raise DataError(f"target column {target_column!r} not found in header {header}")
        t = header.index(target_column)

    values = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"row {i}: expected {len(header)} cells, found {len(row)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            try:
                if not cell:
                    raise ValueError
                values[i - 1, j] = float(cell)
            except ValueError:
                raise DataError(f"row {i}, column {header[j]!r}: "
                                f"{'empty cell' if not cell else f'non-numeric value {cell!r}'}") from None
            if not np.isfinite(values[i - 1, j]):
                raise DataError(f"row {i}, column {header[j]!r}: non-finite value {cell!r}")

    keep = [j for j in range(len(header)) if j != t]
    return _check_shape(Dataset(values[:, keep], values[:, t], [header[j] for j in keep]))


def save_csv(ds: Dataset, path, target_name: str = "y") -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*ds.feature_names, target_name])
        for x, y in zip(ds.features, ds.target):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def load_folds(path, n: int | None = None) -> np.ndarray:
    """One integer fold id per line, no header."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        folds = np.array([int(ln) for ln in lines], dtype=np.int64)
    except ValueError as exc:
        raise DataError(f"{path}: fold ids must be integers ({exc})") from None
    if n is not None and folds.size != n:
        raise DataError(f"{path}: {folds.size} fold ids for {n} rows")
    return folds


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray
    target_mean: float = 0.0
    target_std: float = 1.0

    @property
    def p(self) -> int:
        return self.mean.shape[0]

    def transform_features(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.p:
            raise DataError(f"scaler fitted on {self.p} columns, got shape {X.shape}")
        return (X - self.mean) / self.std

    def transform_target(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.target_mean) / self.target_std

    def inverse_features(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z) * self.std + self.mean

    def inverse_target(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) * self.target_std + self.target_mean


def _moments(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = A.mean(axis=0)
    std = A.std(axis=0)  # population convention (ddof=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def fit_scaler(train: Dataset) -> Scaler:
    if train.n == 0:
        raise DataError("cannot fit a scaler on an empty dataset")
    mean, std = _moments(train.features)
    tmean, tstd = _moments(train.target[:, None])
    for a in (mean, std):
        a.setflags(write=False)
    return Scaler(mean, std, float(tmean[0]), float(tstd[0]))


def apply_scaler(scaler: Scaler, data: Dataset) -> Dataset:
    return Dataset(scaler.transform_features(data.features),
                   scaler.transform_target(data.target), data.feature_names)


@dataclass(frozen=True)
class SplitPlan:
    folds: np.ndarray
    val_frac: float
    seed: int
    k_folds: int

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.folds == fold)

    def train_val_rows(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        return holdout_split(np.flatnonzero(self.folds != fold), self.val_frac,
                             np.random.SeedSequence([self.seed, 1, fold]))


def holdout_split(rows: np.ndarray, val_frac: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Randomly hold out ``val_frac`` of ``rows``; both parts come back sorted."""
    rows = np.asarray(rows)
    if not 0 < val_frac < 1:
        raise DataError(f"val_frac must lie in (0, 1), got {val_frac}")
    n_val = int(round(val_frac * rows.size))
    n_val = min(max(n_val, 1), rows.size - 1)
    perm = np.random.default_rng(seed).permutation(rows.size)
    return np.sort(rows[perm[n_val:]]), np.sort(rows[perm[:n_val]])


def make_splits(n: int, k_folds: int, val_frac: float, seed: int) -> SplitPlan:
    if k_folds < 2:
        raise DataError(f"k_folds must be >= 2, got {k_folds}")
    if not 0 < val_frac < 1:
        raise DataError(f"val_frac must lie in (0, 1), got {val_frac}")
    if n < k_folds:
        raise DataError(f"cannot split {n} rows into {k_folds} folds")
    perm = np.random.default_rng(np.random.SeedSequence([seed, 0])).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % k_folds
    folds.setflags(write=False)
    return SplitPlan(folds, float(val_frac), int(seed), int(k_folds))


def plan_from_folds(folds: np.ndarray, val_frac: float = 0.2, seed: int = 0) -> SplitPlan:
    folds = np.asarray(folds, dtype=np.int64)
    ids = np.unique(folds)
    remap = np.searchsorted(ids, folds)
    remap.setflags(write=False)
    return SplitPlan(remap, float(val_frac), int(seed), int(ids.size))
