"""Reference implementations used by the tests.

Each one is written independently of the package code (brute force or a
textbook algorithm) so the tests compare two separate derivations.
"""

import itertools

import networkx as nx
import numpy as np


def kruskal_max_spanning_tree(M):
    """Edges of the maximum spanning tree of the complete graph weighted by M."""
    p = M.shape[0]
    parent = list(range(p))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    pairs = sorted(((M[i, j], i, j) for i in range(p) for j in range(i + 1, p)), reverse=True)
    tree = set()
    for _, i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            tree.add((i, j))
    return tree


def clique_edges(cliques):
    return {(a, b) for c in cliques for a, b in itertools.combinations(sorted(c), 2)}


def mcs_chordal(edges, p):
    """Maximum-cardinality search chordality test (networkx implementation)."""
    g = nx.Graph()
    g.add_nodes_from(range(p))
    g.add_edges_from(edges)
    return nx.is_chordal(g)


def running_intersection(cliques, attachment):
    """For every vertex, the cliques containing it induce a connected subgraph
    of the attachment forest."""
    adj = {i: set() for i in range(len(cliques))}
    for child, par in enumerate(attachment):
        if par >= 0:
            adj[child].add(par)
            adj[par].add(child)
    for v in set(itertools.chain.from_iterable(cliques)):
        holders = {i for i, c in enumerate(cliques) if v in c}
        start = next(iter(holders))
        seen, todo = {start}, [start]
        while todo:
            u = todo.pop()
            for w in adj[u] & holders:
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        if seen != holders:
            return False
    return True


def brute_force_cliques(edges, p):
    """Every vertex subset of size >= 2 that is complete, by checking all 2^p subsets."""
    es = {tuple(sorted(e)) for e in edges}
    out = []
    for mask in range(1, 1 << p):
        s = tuple(i for i in range(p) if mask >> i & 1)
        if len(s) >= 2 and all(pair in es for pair in itertools.combinations(s, 2)):
            out.append(s)
    return sorted(out, key=lambda s: (len(s), s))


def subset_closure(cliques, p):
    """Per-order sets of all subsets of the cliques, singletons always present."""
    orders = {1: {(i,) for i in range(p)}}
    for c in cliques:
        c = tuple(sorted(c))
        for k in range(2, len(c) + 1):
            orders.setdefault(k, set()).update(itertools.combinations(c, k))
    return orders


def hnn_param_count(cliques, p):
    """Mask nonzeros + biases + per-order readouts + combiner, enumerated directly."""
    orders = subset_closure(cliques, p)
    k_max = max(orders)
    weights = 0
    for k in range(2, k_max + 1):
        for unit in orders[k]:
            weights += sum(1 for sub in itertools.combinations(unit, k - 1) if sub in orders[k - 1])
    hidden = [len(orders[k]) for k in range(2, k_max + 1)]
    biases = sum(hidden)
    readouts = sum(h + 1 for h in hidden)
    combiner = len(hidden) + 1
    return weights + biases + readouts + combiner


def random_cliques(rng, p, count, k_max=4):
    out = []
    for _ in range(count):
        k = int(rng.integers(2, k_max + 1))
        out.append(tuple(sorted(int(v) for v in rng.choice(p, size=min(k, p), replace=False))))
    return out


def random_dependency(rng, p, distinct=True):
    A = rng.uniform(0.0, 1.0, size=(p, p))
    M = (A + A.T) / 2
    if not distinct:
        M = np.round(M, 1)
    np.fill_diagonal(M, 1.0)
    return M


def dense_mlp_count(p, widths):
    ins = [p, *widths[:-1]]
    return sum((i + 1) * o for i, o in zip(ins, widths)) + widths[-1] + 1
