"""Synthetic regression tasks with a known sparse interaction hierarchy.

Features are Gaussian with an Erdos-Renyi sparse precision matrix; the target
sums one random nonlinearity per clique of the graph (every clique of size
>= 2, so the set of interactions is downward closed) plus Gaussian noise.

Random streams are PCG64 generators keyed by ``SeedSequence([seed, stream])``
so each generation stage is reproducible on its own.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

EDGE_DEGREE = 8.0            # pi_edge = EDGE_DEGREE / p
OFFDIAG_RANGE = (0.2, 0.6)   # |Theta_ij| ~ Unif
DIAG_MARGIN = 0.1            # Theta_ii = 1 + sum_j |Theta_ij| + margin
BUMP_WIDTH_RANGE = (0.5, 2.0)
NOISE_STD = 0.5
DEFAULT_CAP = 200_000
RETRY_OFFSET = 1_000_003
MAX_RETRIES = 50

_STREAMS = {"graph": 1, "precision": 2, "features": 3, "targets": 4, "noise": 5, "test": 6}

NONLINEARITIES = ("sin", "cos", "tanh", "sigmoid2", "sqsoft", "cubsoft", "relu", "bump")


class InteractionCapExceeded(RuntimeError):
    pass


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAMS[name], *extra]))


def apply_nonlinearity(name: str, z: np.ndarray, width: float | None = None) -> np.ndarray:
    if name == "sin":
        return np.sin(z)
    if name == "cos":
        return np.cos(z)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid2":
        return 2.0 / (1.0 + np.exp(-z)) - 1.0
    if name == "sqsoft":
        return z * z / (1.0 + np.abs(z))
    if name == "cubsoft":
        return z ** 3 / (1.0 + z * z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "bump":
        return np.exp(-0.5 * (z / width) ** 2)
    raise ValueError(f"unknown nonlinearity {name!r}")


@dataclass(frozen=True)
class Interaction:
    members: tuple[int, ...]
    coef: float
    fn: str
    width: float | None = None  # only for the Gaussian bump

    def to_dict(self) -> dict:
        return {"members": list(self.members), "coef": self.coef, "fn": self.fn, "width": self.width}

    @classmethod
    def from_dict(cls, d: dict) -> "Interaction":
        return cls(tuple(d["members"]), float(d["coef"]), d["fn"], d.get("width"))


def gen_graph(p: int, seed: int) -> list[tuple[int, int]]:
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    prob = min(EDGE_DEGREE / p, 1.0)
    pairs = list(itertools.combinations(range(p), 2))
    u = stream(seed, "graph").random(len(pairs))
    return [e for e, x in zip(pairs, u) if x < prob]


def gen_precision(edges, p: int, seed: int) -> np.ndarray:
    rng = stream(seed, "precision")
    theta = np.zeros((p, p))
    for i, j in sorted(tuple(sorted(e)) for e in edges):
        sign = 1.0 if rng.random() < 0.5 else -1.0
        theta[i, j] = theta[j, i] = sign * rng.uniform(*OFFDIAG_RANGE)
    theta[np.diag_indices(p)] = 1.0 + np.abs(theta).sum(axis=1) + DIAG_MARGIN
    return theta


def sample_features(theta: np.ndarray, n: int, seed: int | np.random.Generator) -> np.ndarray:
    """Draw n rows from N(0, inv(theta)) through the Cholesky factor of theta."""
    try:
        L = linalg.cholesky(theta, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError(f"precision matrix is not positive definite: {exc}") from None
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "features")
    z = rng.standard_normal((theta.shape[0], n))
    # theta = L L^T, so x = L^{-T} z has covariance theta^{-1}
    return linalg.solve_triangular(L.T, z, lower=False).T.copy()


def maximal_cliques(adj: list[set[int]]) -> list[tuple[int, ...]]:
    """Bron-Kerbosch with Tomita pivoting, iterative."""
    out = []
    stack = [(frozenset(), frozenset(range(len(adj))), frozenset())]
    while stack:
        R, P, X = stack.pop()
        if not P and not X:
            out.append(tuple(sorted(R)))
            continue
        pivot = max(P | X, key=lambda u: (len(P & adj[u]), -u))
        for v in sorted(P - adj[pivot], reverse=True):
            stack.append((R | {v}, P & adj[v], X & adj[v]))
            P = P - {v}
            X = X | {v}
    return sorted(out)


def enumerate_interactions(edges, p: int, cap: int = DEFAULT_CAP) -> list[tuple[int, ...]]:
    """Every clique of size >= 2, ordered by size then lexicographically."""
    adj = [set() for _ in range(p)]
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    found: set[tuple[int, ...]] = set()
    for c in maximal_cliques(adj):
        if len(c) < 2:
            continue
        if 2 ** len(c) - len(c) - 1 > cap:
            raise InteractionCapExceeded(f"maximal clique of size {len(c)} alone exceeds cap {cap}")
        for k in range(2, len(c) + 1):
            found.update(itertools.combinations(c, k))
        if len(found) > cap:
            raise InteractionCapExceeded(f"more than {cap} interaction sets")
    return sorted(found, key=lambda s: (len(s), s))


def draw_interactions(sets, seed: int) -> list[Interaction]:
    rng = stream(seed, "targets")
    out = []
    for s in sets:
        coef = rng.uniform(-1.0, 1.0)
        fn = NONLINEARITIES[rng.integers(len(NONLINEARITIES))]
        width = rng.uniform(*BUMP_WIDTH_RANGE)  # drawn for every set to keep the stream aligned
        out.append(Interaction(tuple(int(v) for v in s), float(coef), fn,
                               float(width) if fn == "bump" else None))
    return out


def target_signal(X: np.ndarray, interactions) -> np.ndarray:
    y = np.zeros(X.shape[0])
    for it in interactions:
        y += it.coef * apply_nonlinearity(it.fn, X[:, list(it.members)].sum(axis=1), it.width)
    return y


def gen_targets(X: np.ndarray, interactions, seed: int, noise_std: float = NOISE_STD,
                noise_rng: np.random.Generator | None = None):
    """Return ``(y, annotated interactions)``.

    ``interactions`` may be plain variable sets (coefficients and nonlinearities
    are then drawn from ``seed``) or already annotated :class:`Interaction`s.
    """
    items = list(interactions)
    if items and not isinstance(items[0], Interaction):
        if any(len(s) < 2 for s in items):
            raise ValueError("interaction sets must have at least two members")
        items = draw_interactions(items, seed)
    y = target_signal(X, items)
    if noise_std > 0:
        rng = noise_rng if noise_rng is not None else stream(seed, "noise")
        y = y + rng.normal(0.0, noise_std, X.shape[0])
    return y, items


@dataclass
class SyntheticTask:
    p: int
    seed: int
    graph: list[tuple[int, int]]
    precision: np.ndarray
    interactions: list[Interaction]
    X: np.ndarray
    y: np.ndarray
    noise_std: float = NOISE_STD
    effective_seed: int | None = None
    retries: int = 0
    constants: dict = field(default_factory=lambda: {
        "edge_degree": EDGE_DEGREE, "offdiag_range": list(OFFDIAG_RANGE),
        "diag_margin": DIAG_MARGIN, "bump_width_range": list(BUMP_WIDTH_RANGE)})

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return linalg.cho_solve(linalg.cho_factor(self.precision), np.eye(self.p))

    @property
    def interaction_sets(self) -> list[tuple[int, ...]]:
        return [it.members for it in self.interactions]

    def sample(self, n: int, stream_id: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Fresh draws from the same task on an independent stream (e.g. a test set)."""
        s = self.effective_seed if self.effective_seed is not None else self.seed
        X = sample_features(self.precision, n, stream(s, "test", stream_id, 0))
        y, _ = gen_targets(X, self.interactions, s, self.noise_std, stream(s, "test", stream_id, 1))
        return X, y

    def manifest(self) -> dict:
        return {
            "p": self.p, "n": self.n, "seed": self.seed, "effective_seed": self.effective_seed,
            "retries": self.retries, "noise_std": self.noise_std, "constants": self.constants,
            "graph": [list(e) for e in self.graph],
            "precision_diag": np.diag(self.precision).tolist(),
            "precision_offdiag": [[i, j, float(self.precision[i, j])] for i, j in self.graph],
            "interactions": [it.to_dict() for it in self.interactions],
        }

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        header = ",".join([f"x{j}" for j in range(self.p)] + ["y"])
        np.savetxt(d / "data.csv", np.column_stack([self.X, self.y]), delimiter=",",
                   header=header, comments="", fmt="%.17g")
        (d / "manifest.json").write_text(json.dumps(self.manifest(), indent=1))
        return d

    @classmethod
    def load(cls, directory) -> "SyntheticTask":
        d = Path(directory)
        m = json.loads((d / "manifest.json").read_text())
        table = np.loadtxt(d / "data.csv", delimiter=",", skiprows=1, ndmin=2)
        p = m["p"]
        theta = np.diag(m["precision_diag"])
        for i, j, v in m["precision_offdiag"]:
            theta[i, j] = theta[j, i] = v
        return cls(p, m["seed"], [tuple(e) for e in m["graph"]], theta,
                   [Interaction.from_dict(it) for it in m["interactions"]],
                   table[:, :p], table[:, p], m["noise_std"], m["effective_seed"], m["retries"],
                   m["constants"])


def gen_task(p: int, n: int, seed: int, cap: int = DEFAULT_CAP, noise_std: float = NOISE_STD) -> SyntheticTask:
    if p < 2 or n < 2:
        raise ValueError(f"need p >= 2 and n >= 2, got p={p}, n={n}")
    for attempt in range(MAX_RETRIES + 1):
        s = seed + attempt * RETRY_OFFSET
        graph = gen_graph(p, s)
        sets = enumerate_interactions(graph, p, cap)
        if sets:
            break
    else:
        raise RuntimeError(f"no interactions after {MAX_RETRIES} retries for p={p}, seed={seed}")
    theta = gen_precision(graph, p, s)
    X = sample_features(theta, n, s)
    y, items = gen_targets(X, sets, s, noise_std)
    return SyntheticTask(p, seed, graph, theta, items, X, y, noise_std, s, attempt)
