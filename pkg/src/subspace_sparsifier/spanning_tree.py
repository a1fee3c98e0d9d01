"""Weighted uniform spanning trees.

``sample_ust`` runs Wilson's loop-erased random walk, which samples exactly
from the distribution Pr[T] proportional to the product of the weights of T.
Because it picks individual edges rather than neighbours, parallel edges are
handled naturally.
"""
from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import CapExceededError
from .graph import Contract, Delete, WeightedGraph

ENUM_MAX_N = 10
ENUM_MAX_M = 20


@dataclass(frozen=True)
class SpanningTree:
    graph: WeightedGraph
    mask: np.ndarray  # over storage order of ``graph``

    @property
    def edge_ids(self) -> np.ndarray:
        return self.graph.edge_ids[self.mask]

    def __contains__(self, e) -> bool:
        return bool(self.mask[self.graph.index_of(e)])

    def __len__(self):
        return int(self.mask.sum())

    @property
    def weight(self) -> float:
        return float(np.prod(self.graph.weights[self.mask]))


def _adjacency(G: WeightedGraph):
    """CSR-style incidence lists with per-vertex cumulative weights."""
    def build():
        m = G.m
        ends = np.concatenate([G.tails, G.heads])
        other = np.concatenate([G.heads, G.tails])
        eidx = np.concatenate([np.arange(m), np.arange(m)])
        order = np.argsort(ends, kind="stable")
        ends, other, eidx = ends[order], other[order], eidx[order]
        w = G.weights[eidx]
        start = np.searchsorted(ends, np.arange(G.n + 1))
        cum = np.empty_like(w)
        for v in range(G.n):
            a, b = start[v], start[v + 1]
            cum[a:b] = np.cumsum(w[a:b])
        return start, other, eidx, cum
    return G.cached("wilson_adjacency", build)


def sample_ust(G: WeightedGraph, seed=None, root=0) -> SpanningTree:
    """Exact weighted uniform spanning tree via Wilson's algorithm."""
    G.require_connected()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = G.n
    mask = np.zeros(G.m, dtype=bool)
    if n <= 1:
        return SpanningTree(G, mask)
    start, other, eidx, cum = _adjacency(G)
    start = start.tolist()
    other_l = other.tolist()
    eidx_l = eidx.tolist()
    cum_l = cum.tolist()
    in_tree = [False] * n
    in_tree[root] = True
    step = [-1] * n  # slot in the incidence lists used to leave each vertex
    buf = rng.random(4096).tolist()
    pos = 0
    for i in range(n):
        u = i
        while not in_tree[u]:
            if pos == len(buf):
                buf = rng.random(4096).tolist()
                pos = 0
            a, b = start[u], start[u + 1]
            # cumulative weights are ascending within the slice
            slot = bisect.bisect_right(cum_l, buf[pos] * cum_l[b - 1], a, b)
            pos += 1
            slot = min(slot, b - 1)
            step[u] = slot
            u = other_l[slot]
        u = i
        while not in_tree[u]:
            in_tree[u] = True
            mask[eidx_l[step[u]]] = True
            u = other_l[step[u]]
    return SpanningTree(G, mask)


def edge_decision(G: WeightedGraph, e, T: SpanningTree):
    """Contract ``e`` when it is a tree edge, delete it otherwise."""
    return Contract(int(e)) if e in T else Delete(int(e))


def _is_spanning_tree(n, tails, heads) -> bool:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in zip(tails, heads):
        ru, rv = find(u), find(v)
        if ru == rv:
            return False
        parent[ru] = rv
    return True


def enumerate_spanning_trees(G: WeightedGraph) -> list:
    """All spanning trees of a small multigraph (n <= 10, m <= 20)."""
    if G.n > ENUM_MAX_N or G.m > ENUM_MAX_M:
        raise CapExceededError(
            f"enumeration needs n <= {ENUM_MAX_N} and m <= {ENUM_MAX_M}, got n={G.n}, m={G.m}")
    tails, heads = G.tails.tolist(), G.heads.tolist()
    out = []
    if G.n == 1:
        return [SpanningTree(G, np.zeros(G.m, dtype=bool))]
    for combo in itertools.combinations(range(G.m), G.n - 1):
        if _is_spanning_tree(G.n, [tails[i] for i in combo], [heads[i] for i in combo]):
            mask = np.zeros(G.m, dtype=bool)
            mask[list(combo)] = True
            out.append(SpanningTree(G, mask))
    return out


def tree_inclusion_fractions(G: WeightedGraph) -> np.ndarray:
    """Weighted fraction of spanning trees containing each edge (storage order)."""
    trees = enumerate_spanning_trees(G)
    weights = np.array([t.weight for t in trees])
    masks = np.array([t.mask for t in trees], dtype=float).reshape(len(trees), G.m)
    return weights @ masks / weights.sum()
