"""Pairwise dependency matrices fed to the clique-forest builder."""

from __future__ import annotations

from pathlib import Path

import numpy as np


# symmetric p x p, entries in [0, 1], unit diagonal, read-only
DependencyMatrix = np.ndarray


def _freeze(M: np.ndarray) -> DependencyMatrix:
    M.setflags(write=False)
    return M


def as_dependency(values) -> DependencyMatrix:
    M = np.array(values, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"dependency matrix must be square, got {M.shape}")
    if not np.allclose(M, M.T, atol=1e-12, rtol=0):
        raise ValueError("dependency matrix is not symmetric")
    off = M[~np.eye(M.shape[0], dtype=bool)]
    if off.size and (off.min() < 0 or off.max() > 1 + 1e-12):
        raise ValueError("dependency entries must lie in [0, 1]")
    M = 0.5 * (M + M.T)
    np.fill_diagonal(M, 1.0)
    return _freeze(M)


def marginal_dependency(X: np.ndarray) -> DependencyMatrix:
    """Squared Pearson correlations; pairs touching a constant column get 0."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError(f"need an n x p matrix with n >= 2, got {X.shape}")
    Z = X - X.mean(axis=0)
    norm = np.sqrt(np.einsum("ij,ij->j", Z, Z))
    live = np.ptp(X, axis=0) > 0
    Z[:, live] /= norm[live]
    Z[:, ~live] = 0.0
    R = Z.T @ Z
    M = np.clip(R * R, 0.0, 1.0)
    M = 0.5 * (M + M.T)
    np.fill_diagonal(M, 1.0)
    return _freeze(M)


def median_split_rows(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    low = y <= np.median(y)  # ties at the median go low
    return np.flatnonzero(low), np.flatnonzero(~low)


def median_split_dependency(X: np.ndarray, y: np.ndarray) -> tuple[DependencyMatrix, DependencyMatrix]:
    """Marginal dependency computed separately below and above the target median."""
    X = np.asarray(X, dtype=np.float64)
    lo, hi = median_split_rows(y)
    if lo.size < 2 or hi.size < 2:
        raise ValueError(f"median split leaves halves of size {lo.size}/{hi.size}; need >= 2 each")
    return marginal_dependency(X[lo]), marginal_dependency(X[hi])


def save_matrix(M: np.ndarray, path) -> None:
    np.savetxt(Path(path), np.asarray(M), delimiter=",", fmt="%.17g")


def load_matrix(path) -> DependencyMatrix:
    return as_dependency(np.loadtxt(Path(path), delimiter=",", ndmin=2))
