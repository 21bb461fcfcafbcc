"""Maximally Filtered Clique Forest construction and decomposability checks.

The forest is grown greedily one vertex at a time. A vertex ``v`` joins
through a separator ``S`` taken from an existing clique, creating the clique
``S | {v}``; the gain of that move is the dependency mass it adds,
``sum(M[v, u] for u in S)``. Moves whose best gain does not exceed the
threshold start a new tree holding ``v`` alone.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class MfcfConfig:
    max_clique_size: int = 4
    min_clique_size: int = 1
    gain_threshold: float = 0.0
    random_ties: bool = False

    def __post_init__(self):
        if self.max_clique_size < 2:
            raise ValueError(f"max_clique_size must be >= 2, got {self.max_clique_size}")
        if not 1 <= self.min_clique_size <= self.max_clique_size:
            raise ValueError(f"min_clique_size must lie in [1, {self.max_clique_size}], "
                             f"got {self.min_clique_size}")


@dataclass(frozen=True)
class Insertion:
    vertex: int
    separator: tuple[int, ...]
    clique: int
    gain: float | None  # None: no admissible gain, vertex opened a new tree


@dataclass
class CliqueForest:
    """Maximal cliques with, per clique, its parent index (-1 for tree roots)
    and the separator shared with that parent."""

    p: int
    cliques: list[tuple[int, ...]]
    separators: list[tuple[int, ...]]
    attachment: list[int]
    insertion_log: list[Insertion] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "cliques": [list(c) for c in self.cliques],
            "separators": [list(s) for s in self.separators],
            "attachment": list(self.attachment),
            "log": [{"v": r.vertex, "sep": list(r.separator), "clique": r.clique, "gain": r.gain}
                    for r in self.insertion_log],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CliqueForest":
        cliques = [tuple(c) for c in d["cliques"]]
        p = d.get("p", 1 + max((max(c) for c in cliques if c), default=-1))
        log = [Insertion(r["v"], tuple(r["sep"]), r.get("clique", -1), r["gain"]) for r in d.get("log", [])]
        return cls(p, cliques, [tuple(s) for s in d["separators"]], list(d["attachment"]), log)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "CliqueForest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_mfcf(M: np.ndarray, cfg: MfcfConfig = MfcfConfig(), seed: int = 0) -> CliqueForest:
    M = np.asarray(M, dtype=np.float64)
    p = M.shape[0]
    if p == 0:
        return CliqueForest(0, [], [], [])
    K = cfg.max_clique_size
    thr = cfg.gain_threshold
    min_sep = cfg.min_clique_size - 1
    # tie priority: lower wins; a seeded permutation only in random-tie mode
    prio = np.random.default_rng(seed).permutation(p) if cfg.random_ties else np.arange(p)

    W = M.copy()
    np.fill_diagonal(W, 0.0)
    rowsum = W.sum(axis=1)
    top = np.flatnonzero(rowsum == rowsum.max())
    root = int(top[np.argmin(prio[top])])

    cliques: list[tuple[int, ...]] = [(root,)]
    parent = [-1]
    seps: list[tuple[int, ...]] = [()]
    log = [Insertion(root, (), 0, None)]

    placed = np.zeros(p, dtype=bool)
    placed[root] = True
    best_gain = np.full(p, -np.inf)
    best_clique = np.full(p, -1, dtype=np.int64)
    best_sep: list[tuple[int, ...]] = [()] * p

    def refresh(c: int) -> None:
        Q = np.array(cliques[c])
        todo = np.flatnonzero(~placed)
        if todo.size == 0:
            return
        vals = W[np.ix_(todo, Q)]
        # descending by value, ties by member id (Q is sorted)
        order = np.argsort(-vals, axis=1, kind="stable")[:, : min(len(Q), K - 1)]
        picked = np.take_along_axis(vals, order, axis=1)
        keep = picked > thr if thr > 0 else np.ones_like(picked, dtype=bool)
        gains = np.where(keep, picked, 0.0).sum(axis=1)
        sizes = keep.sum(axis=1)
        gains[sizes < min_sep] = -np.inf
        bg, bc = best_gain[todo], best_clique[todo]
        better = (bc == c) | (gains > bg) | ((gains == bg) & ((bc < 0) | (c < bc)))
        for i in np.flatnonzero(better):
            v = todo[i]
            best_gain[v] = gains[i]
            best_clique[v] = c
            best_sep[v] = tuple(sorted(int(u) for u in Q[order[i][keep[i]]]))

    refresh(0)
    for _ in range(p - 1):
        todo = np.flatnonzero(~placed)
        g = best_gain[todo]
        cands = todo[g == g.max()]
        v = int(cands[np.argmin(prio[cands])])
        gain = best_gain[v]
        if gain > thr:
            q = int(best_clique[v])
            S = best_sep[v]
            C = tuple(sorted(S + (v,)))
            if len(S) == len(cliques[q]):
                # S is all of Q, so Q is no longer maximal: grow it in place
                cliques[q] = C
                idx = q
            else:
                cliques.append(C)
                parent.append(q)
                seps.append(S)
                idx = len(cliques) - 1
            log.append(Insertion(v, S, idx, float(gain)))
        else:
            cliques.append((v,))
            parent.append(-1)
            seps.append(())
            idx = len(cliques) - 1
            log.append(Insertion(v, (), idx, None))
        placed[v] = True
        refresh(idx)

    return CliqueForest(p, cliques, seps, parent, log)


def induced_edges(forest: CliqueForest | list) -> set[tuple[int, int]]:
    cliques = forest.cliques if isinstance(forest, CliqueForest) else forest
    edges = set()
    for c in cliques:
        edges.update(itertools.combinations(sorted(c), 2))
    return edges


def mcs_order(adj: list[set[int]]) -> list[int]:
    """Maximum cardinality search visit order (reverse is a PEO iff chordal)."""
    n = len(adj)
    weight = [0] * n
    done = [False] * n
    order = []
    for _ in range(n):
        v = max((u for u in range(n) if not done[u]), key=lambda u: (weight[u], -u))
        done[v] = True
        order.append(v)
        for u in adj[v]:
            if not done[u]:
                weight[u] += 1
    return order


def is_perfect_elimination(adj: list[set[int]], peo: list[int]) -> bool:
    pos = {v: i for i, v in enumerate(peo)}
    for v in peo:
        later = [u for u in adj[v] if pos[u] > pos[v]]
        if later:
            w = min(later, key=pos.__getitem__)
            if not set(later).difference([w]) <= adj[w]:
                return False
    return True


def is_chordal(edges, p: int) -> bool:
    adj = [set() for _ in range(p)]
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    return is_perfect_elimination(adj, mcs_order(adj)[::-1])


@dataclass
class ValidationReport:
    spanning: bool
    size_bound: bool
    separators: bool
    running_intersection: bool
    chordal: bool
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all((self.spanning, self.size_bound, self.separators,
                    self.running_intersection, self.chordal))


def validate_forest(forest: CliqueForest, p: int, K: int) -> ValidationReport:
    problems = []
    cliques = [frozenset(c) for c in forest.cliques]
    covered = frozenset().union(*cliques) if cliques else frozenset()

    spanning = covered == frozenset(range(p))
    if not spanning:
        problems.append(f"uncovered vertices {sorted(set(range(p)) - covered)}; "
                        f"out of range {sorted(covered - set(range(p)))}")

    size_bound = all(1 <= len(c) <= K for c in cliques)
    if not size_bound:
        problems.append(f"clique sizes {sorted({len(c) for c in cliques})} exceed bound {K}")

    n = len(cliques)
    parents = list(forest.attachment)
    separators = len(parents) == n and len(forest.separators) == n
    if not separators:
        problems.append("attachment/separator lists are not aligned with cliques")
        parents = (parents + [-1] * n)[:n]
    else:
        for i, (par, sep) in enumerate(zip(parents, forest.separators)):
            sep = frozenset(sep)
            if par == -1:
                if sep:
                    separators = False
                    problems.append(f"tree root clique {i} carries separator {sorted(sep)}")
                continue
            if not 0 <= par < n or par == i:
                separators = False
                problems.append(f"clique {i} has invalid parent {par}")
                continue
            if not sep < cliques[i]:
                separators = False
                problems.append(f"separator {sorted(sep)} is not a strict subset of clique {i}")
            if not sep <= cliques[par]:
                separators = False
                problems.append(f"separator {sorted(sep)} of clique {i} not contained in parent {par}")

    # the attachment graph must be a forest: follow parents without cycles
    tree_ok = True
    for i in range(n):
        seen, j = set(), i
        while j != -1 and 0 <= j < n and j not in seen:
            seen.add(j)
            j = parents[j]
        if j != -1:
            tree_ok = False
            problems.append(f"attachment chain from clique {i} does not reach a root")
            break

    running = tree_ok
    if tree_ok:
        for v in sorted(covered):
            holders = {i for i, c in enumerate(cliques) if v in c}
            # connected in the forest iff exactly one holder has its parent outside the set
            tops = [i for i in holders if parents[i] not in holders]
            if len(tops) != 1:
                running = False
                problems.append(f"cliques holding vertex {v} split into {len(tops)} subtrees")

    chordal = is_chordal(induced_edges(forest), max(p, 1 + max(covered, default=-1)))
    if not chordal:
        problems.append("induced graph is not chordal")

    return ValidationReport(spanning, size_bound, separators, running, chordal, problems)
