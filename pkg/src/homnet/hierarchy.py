"""Interaction hierarchies: downward-closed variable subsets wired by inclusion."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class EmptyHierarchyError(ValueError):
    """Raised when a hierarchy has no order-2 units, so no trainable layer exists."""


@dataclass(frozen=True)
class Wiring:
    """Layer widths and incidence edges without subset semantics.

    ``widths[k - 1]`` is the number of order-k units; ``edges[k - 2]`` is an
    ``(E, 2)`` int array of ``(child, parent)`` pairs between orders k and k-1,
    sorted by child then parent.
    """

    p: int
    widths: tuple[int, ...]
    edges: tuple[np.ndarray, ...]

    @property
    def k_max(self) -> int:
        return len(self.widths)


@dataclass(frozen=True)
class InteractionHierarchy:
    p: int
    orders: tuple[tuple[tuple[int, ...], ...], ...]  # orders[k - 1] lists H^(k)

    def __post_init__(self):
        object.__setattr__(self, "_edges", _inclusion_edges(self.orders))

    @property
    def k_max(self) -> int:
        return len(self.orders)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(len(o) for o in self.orders)

    @property
    def edges(self) -> tuple[np.ndarray, ...]:
        return self._edges

    def units(self, k: int) -> tuple[tuple[int, ...], ...]:
        return self.orders[k - 1] if 1 <= k <= self.k_max else ()

    def wiring(self) -> Wiring:
        return Wiring(self.p, self.widths, self.edges)

    def __eq__(self, other):
        if not isinstance(other, InteractionHierarchy):
            return NotImplemented
        return self.p == other.p and self.orders == other.orders

    def __hash__(self):
        return hash((self.p, self.orders))

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "orders": [[list(u) for u in units] for units in self.orders],
            "edges": [e.tolist() for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InteractionHierarchy":
        return _from_sets((tuple(u) for units in d["orders"] for u in units), d["p"], close=False)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "InteractionHierarchy":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _inclusion_edges(orders) -> tuple[np.ndarray, ...]:
    out = []
    for k in range(2, len(orders) + 1):
        index = {u: i for i, u in enumerate(orders[k - 2])}
        pairs = []
        for ci, unit in enumerate(orders[k - 1]):
            parents = sorted(index[sub] for sub in itertools.combinations(unit, k - 1))
            pairs.extend((ci, pi) for pi in parents)
        out.append(np.array(pairs, dtype=np.int64).reshape(-1, 2))
    return tuple(out)


def _from_sets(sets, p: int, close: bool) -> InteractionHierarchy:
    by_order: dict[int, set[tuple[int, ...]]] = {1: {(i,) for i in range(p)}}
    for s in sets:
        s = tuple(sorted(set(int(v) for v in s)))
        if not s:
            continue
        if s[0] < 0 or s[-1] >= p:
            raise ValueError(f"set {s} has ids outside [0, {p})")
        if close:
            for k in range(2, len(s) + 1):
                by_order.setdefault(k, set()).update(itertools.combinations(s, k))
        else:
            by_order.setdefault(len(s), set()).add(s)
    k_max = max(by_order)
    orders = tuple(tuple(sorted(by_order.get(k, ()))) for k in range(1, k_max + 1))
    return InteractionHierarchy(p, orders)


def from_cliques(cliques, p: int) -> InteractionHierarchy:
    """All distinct subsets of the given cliques, plus every singleton."""
    return _from_sets(cliques, p, close=True)


def oracle_hierarchy(interaction_sets, p: int) -> InteractionHierarchy:
    # closure is enforced even though generated sets are already closed
    return _from_sets(interaction_sets, p, close=True)


def union(a: InteractionHierarchy, b: InteractionHierarchy) -> InteractionHierarchy:
    if a.p != b.p:
        raise ValueError(f"cannot merge hierarchies over {a.p} and {b.p} variables")
    return _from_sets(itertools.chain(itertools.chain.from_iterable(a.orders),
                                      itertools.chain.from_iterable(b.orders)), a.p, close=False)


def randomize(h: InteractionHierarchy | Wiring, seed: int) -> Wiring:
    """Keep widths and per-unit fan-in, redraw each unit's parents uniformly
    without replacement from the whole previous layer."""
    rng = np.random.default_rng(seed)
    edges = []
    for k in range(2, h.k_max + 1):
        n_prev = h.widths[k - 2]
        fan_in = np.bincount(h.edges[k - 2][:, 0], minlength=h.widths[k - 1])
        pairs = []
        for child, d in enumerate(fan_in):
            for parent in np.sort(rng.choice(n_prev, size=int(d), replace=False)):
                pairs.append((child, int(parent)))
        edges.append(np.array(pairs, dtype=np.int64).reshape(-1, 2))
    return Wiring(h.p, tuple(h.widths), tuple(edges))


def param_count(h: InteractionHierarchy | Wiring) -> int:
    """Trainable scalars of the HNN built on ``h``: masked weights, biases,
    one linear readout per order >= 2, and the combiner."""
    if h.k_max < 2 or h.widths[1] == 0:
        raise EmptyHierarchyError("hierarchy has no order-2 units; MFCF produced only singletons")
    hidden = h.widths[1:]
    weights = sum(len(e) for e in h.edges)
    biases = sum(hidden)
    readouts = sum(w + 1 for w in hidden)
    combiner = len(hidden) + 1
    return weights + biases + readouts + combiner
