"""Adam with shuffled minibatches and patience-based early stopping."""

from __future__ import annotations

import csv
import ctypes
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .net import Network, forward, mse_loss

log = logging.getLogger(__name__)

_heap_tuned = False


def _keep_freed_memory() -> None:
    """Stop glibc from unmapping large freed blocks.

    Training allocates and frees the same few MB-sized temporaries every step;
    returning them to the OS makes each step pay fresh page faults.
    """
    global _heap_tuned
    if _heap_tuned:
        return
    _heap_tuned = True
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
    except (OSError, AttributeError):
        pass


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, what: str):
        super().__init__(f"training diverged at epoch {epoch}: {what}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 1024
    max_epochs: int = 30_000
    patience: int = 200
    min_delta: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("learning_rate, batch_size, max_epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise ValueError(f"patience {self.patience} exceeds max_epochs {self.max_epochs}")
        if self.min_delta < 0:
            raise ValueError("min_delta must be non-negative")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, cfg: TrainConfig,
              epoch: int = 0) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update, applied in place and returned."""
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("params, grads and optimizer state are misaligned")
    if not np.all(np.isfinite(grads)):
        raise TrainingDiverged(epoch, f"non-finite gradient at coordinates {np.flatnonzero(~np.isfinite(grads))[:5]}")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    params -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return params, state


@dataclass
class TrainResult:
    net: Network  # carries the restored best-on-validation parameters
    history: list[tuple[int, float, float]] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    best_val: float = float("inf")
    restored: bool = True

    def save_history(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_mse", "val_mse"])
            for e, tr, va in self.history:
                w.writerow([e, repr(tr), repr(va)])


def val_mse(net: Network, data: Dataset, theta: np.ndarray | None = None) -> float:
    resid = forward(net, data.features, theta)[0] - data.target
    return float(np.mean(resid * resid))


def fit(net: Network, train: Dataset, val: Dataset, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Train on standardized data; stop once validation MSE has not improved by
    more than ``min_delta`` for ``patience`` epochs, then restore the best weights."""
    if val.n == 0:
        raise ValueError("validation set is empty")
    _keep_freed_memory()
    X, y = train.features, train.target
    n = X.shape[0]
    theta = net.params.copy()
    state = AdamState.zeros(theta.size)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5EED]))

    best_val, best_theta, best_epoch, wait = None, theta.copy(), 0, 0
    history = []
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, grad = mse_loss(net, X[idx], y[idx], theta)
            total += loss * idx.size
            adam_step(theta, grad, state, cfg, epoch)
        tr = total / n
        va = val_mse(net, val, theta)
        if not (np.isfinite(tr) and np.isfinite(va)):
            raise TrainingDiverged(epoch, f"train mse {tr}, val mse {va}")
        history.append((epoch, tr, va))
        if best_val is None or best_val - va > cfg.min_delta:
            best_val, best_epoch, wait = va, epoch, 0
            best_theta[:] = theta
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    log.debug("stopped at epoch %d (best %d, val %.5g)", epoch, best_epoch, best_val)
    return TrainResult(net.with_params(best_theta), history, epoch, best_epoch, float(best_val))
