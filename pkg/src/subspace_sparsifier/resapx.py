"""Batch effective resistances by divide and conquer over sparsified Schur complements.

The query pairs are halved at every node.  For each half, the current graph
is reduced to a small graph on the vertices that half mentions (a subspace
sparsifier onto those vertices, or an exact Schur complement in debugging
mode), and the half is answered recursively on the reduced graph.  The error
budget is split so that the per-level errors telescope to at most ``eps``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import GraphError
from .graph import WeightedGraph, graph_from_laplacian
from .linalg import DENSE_CAP, schur_complement_dense
from .resistance import effective_resistances
from .sparsify import OracleSpec, subspace_sparsifier


def split_budget(p, eps):
    """(eps for each child's reduction, eps passed down) at a node with p pairs."""
    lg = math.log2(p)
    return eps / (2 * lg), eps * (1 - 1 / lg)


def halves(p):
    return (p + 1) // 2, p // 2


def worst_path_factors(p, eps):
    """Largest product of (1 + e) and smallest product of (1 - e) along any
    root-to-leaf path of the recursion, leaf reductions included."""

    @lru_cache(maxsize=None)
    def walk(q, e_key):
        e = float(e_key)
        if q == 1:
            return (1 + e, 1 - e) if e > 0 else (1.0, 1.0)
        e1, e2 = split_budget(q, e)
        worst_hi, worst_lo = 0.0, math.inf
        for c in halves(q):
            if c == 0:
                continue
            h, l = walk(c, repr(e2))
            worst_hi = max(worst_hi, h)
            worst_lo = min(worst_lo, l)
        return (1 + e1) * worst_hi, (1 - e1) * worst_lo

    return walk(p, repr(float(eps)))


@dataclass
class ResApxResult:
    estimates: dict  # (u, v) as queried -> estimate
    nodes: list = field(default_factory=list)

    def __getitem__(self, pair):
        return self.estimates[tuple(pair)]

    def __len__(self):
        return len(self.estimates)


def _reduce(H: WeightedGraph, V, eps, mode, oracle, cterm, rng, dense_cap):
    """Graph on (images of) V equivalent to H within eps, and the vertex map."""
    V = sorted(V)
    if mode == "identity" or eps <= 0 or len(V) == H.n:
        return H, {v: v for v in V}, H.m
    if mode == "exact-sc":
        SC = schur_complement_dense(H, V, cap=dense_cap)
        R = graph_from_laplacian(SC)
        return R, {v: i for i, v in enumerate(V)}, R.m
    res = subspace_sparsifier(H, V, min(eps, 0.999), oracle, rng, cterm=cterm,
                              dense_cap=dense_cap)
    R = res.graph
    return R.as_root(), {v: int(R.phi[v]) for v in V}, R.m


def res_apx(G: WeightedGraph, pairs, eps, seed=None, oracle: OracleSpec | None = None,
            cterm=10.0, mode="sparsify", dense_cap=DENSE_CAP) -> ResApxResult:
    """(1 +- eps) effective resistances for every queried pair.

    ``mode`` is ``"sparsify"`` (subspace sparsifiers), ``"exact-sc"`` (dense
    Schur complements) or ``"identity"`` (no reduction, exact answers).
    Duplicate pairs and both orientations share one estimate; u == v gives 0.
    """
    if mode not in ("sparsify", "exact-sc", "identity"):
        raise ValueError(f"unknown mode {mode!r}")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    oracle = oracle or OracleSpec()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pairs = [(int(u), int(v)) for u, v in pairs]
    for u, v in pairs:
        if not (0 <= u < G.n and 0 <= v < G.n):
            raise GraphError(f"pair ({u}, {v}) has a vertex outside [0, {G.n})")
    canon = sorted({(min(u, v), max(u, v)) for u, v in pairs if u != v})
    nodes = []
    answers = {}
    if canon:
        G.require_connected()
        _solve(G.as_root(), [(p, p) for p in canon], eps, 0, mode, oracle, cterm, rng,
               dense_cap, answers, nodes)
    out = {}
    for u, v in pairs:
        out[(u, v)] = 0.0 if u == v else answers[(min(u, v), max(u, v))]
    return ResApxResult(out, nodes)


def _solve(H, tagged, eps, depth, mode, oracle, cterm, rng, dense_cap, answers, nodes):
    """``tagged`` holds (original pair, pair in H's labels)."""
    p = len(tagged)
    if p == 1:
        key, (u, v) = tagged[0]
        R, vmap, m = _reduce(H, {u, v}, eps, mode, oracle, cterm, rng, dense_cap)
        a, b = vmap[u], vmap[v]
        answers[key] = float(effective_resistances(R, [(a, b)])[0])
        nodes.append({"depth": depth, "pairs": 1, "eps": eps, "n": H.n, "m": H.m, "m_out": m})
        return
    e1, e2 = split_budget(p, eps)
    nodes.append({"depth": depth, "pairs": p, "eps": eps, "eps_reduce": e1, "eps_down": e2,
                  "n": H.n, "m": H.m})
    first, _ = halves(p)
    for part, child_rng in zip((tagged[:first], tagged[first:]), rng.spawn(2)):
        V = {x for _, uv in part for x in uv}
        R, vmap, _m = _reduce(H, V, e1, mode, oracle, cterm, child_rng, dense_cap)
        mapped = [(key, (vmap[u], vmap[v])) for key, (u, v) in part]
        _solve(R, mapped, e2, depth + 1, mode, oracle, cterm, child_rng, dense_cap,
               answers, nodes)
