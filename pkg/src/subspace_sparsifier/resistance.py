"""Effective resistances, leverage estimates and the identification-gap estimator.

Random projections use the classic +-1 Johnson-Lindenstrauss matrix with
``k = ceil(24 ln n / eps^2)`` rows, scaled by ``1/sqrt(k)`` so that squared
norms are preserved in expectation.  Projection matrices are generated in row
blocks so memory stays ``O(block * max(n, m))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphError
from .graph import WeightedGraph
from .linalg import DENSE_CAP, DIRECT_CAP, apply_schur, lapl_solve, pinv_dense

ROW_BLOCK = 256


@dataclass
class EdgeEstimates:
    """Per-edge scalars keyed by edge id, stored in the graph's storage order."""

    edge_ids: np.ndarray
    values: np.ndarray
    quantity: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self._pos = {int(e): i for i, e in enumerate(self.edge_ids)}

    def __getitem__(self, e) -> float:
        return float(self.values[self._pos[int(e)]])

    def __len__(self):
        return len(self.edge_ids)

    def as_dict(self) -> dict:
        return {int(e): float(v) for e, v in zip(self.edge_ids, self.values)}


@dataclass(frozen=True)
class JlConfig:
    eps: float
    n: int
    seed: object = None

    @property
    def k(self) -> int:
        return jl_rows(self.n, self.eps)


def jl_rows(n, eps) -> int:
    return math.ceil(24 * math.log(max(n, 2)) / eps**2)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _jl_blocks(rng, k, m):
    """Yield successive row blocks of a k x m random sign matrix / sqrt(k)."""
    scale = 1.0 / math.sqrt(k)
    done = 0
    while done < k:
        rows = min(ROW_BLOCK, k - done)
        yield (rng.integers(0, 2, size=(rows, m)) * 2 - 1) * scale
        done += rows


def _edge_sqnorms(G: WeightedGraph, X: np.ndarray) -> np.ndarray:
    """||X^T b_e||^2 for every edge, with X of shape n x rows."""
    D = X[G.heads] - X[G.tails]
    return np.einsum("ij,ij->i", D, D)


def leverage_apx(G: WeightedGraph, eps, seed=None, direct_cap=DIRECT_CAP) -> EdgeEstimates:
    """(1 +- eps) leverage estimates from k = ceil(24 ln n / eps^2) solves."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    G.require_connected()
    rng = _rng(seed)
    k = jl_rows(G.n, eps)
    sqrt_w = np.sqrt(G.weights)
    Bt = G.incidence.T.tocsr()  # n x m
    acc = np.zeros(G.m)
    for Q in _jl_blocks(rng, k, G.m):
        # rows of Q W^{1/2} B, transposed to n x rows
        R = Bt @ (Q * sqrt_w).T
        X, _ = lapl_solve(G, R, 1e-10, direct_cap)
        acc += _edge_sqnorms(G, X)
    return EdgeEstimates(G.edge_ids.copy(), G.weights * acc, "leverage",
                         {"eps": eps, "k": k})


def effective_resistance_exact(G: WeightedGraph, u, v, eps=1e-12) -> float:
    """b_uv^T L^+ b_uv by a high-accuracy solve; 0 when u == v."""
    return float(effective_resistances(G, [(u, v)], eps)[0])


def effective_resistances(G: WeightedGraph, pairs, eps=1e-12) -> np.ndarray:
    pairs = [(int(u), int(v)) for u, v in pairs]
    out = np.zeros(len(pairs))
    live = [i for i, (u, v) in enumerate(pairs) if u != v]
    for u, v in pairs:
        if not (0 <= u < G.n and 0 <= v < G.n):
            raise GraphError(f"pair ({u}, {v}) has a vertex outside [0, {G.n})")
    if not live:
        return out
    G.require_connected()
    Bq = np.zeros((G.n, len(live)))
    for j, i in enumerate(live):
        u, v = pairs[i]
        Bq[u, j] += 1.0
        Bq[v, j] -= 1.0
    X, _ = lapl_solve(G, Bq, eps)
    out[live] = np.einsum("ij,ij->j", Bq, X)
    return out


def _check_terminals(G: WeightedGraph, S):
    S = np.array(sorted({int(s) for s in S}), dtype=np.int64)
    if len(S) < 2:
        raise GraphError("terminal set needs at least two vertices")
    if S[0] < 0 or S[-1] >= G.n:
        raise GraphError(f"terminal set has vertices outside [0, {G.n})")
    if len(S) == G.n:
        raise GraphError("terminal set must leave at least one vertex uneliminated")
    return S


def symbolic_solver_eps(G: WeightedGraph, k, delta1) -> float:
    """Worst-case solver accuracy that makes the additive error at most delta1."""
    n = G.n
    return delta1 / (48 * math.sqrt(k) * n**8.5 * G.w_max**2.5 * G.w_min**-3)


def diff_apx(G: WeightedGraph, S, delta0, delta1, seed=None,
             direct_cap=DIRECT_CAP) -> EdgeEstimates:
    """Estimate how much each edge's leverage drops when S is identified.

    Returns nu_e ~ (b_e^T L_G^+ b_e - b_e^T L_{G/S}^+ b_e) / r_e, obtained as
    ||Y b_e||^2 / r_e for the sketched operator
    Y = Q W^{1/2} B L^+ C SC(L_G, S) C^T L^+, where C injects a vector on S into
    V after centering and C^T extracts the S-block and centers it.
    """
    if not (0 < delta0 < 1 and 0 < delta1 < 1):
        raise ValueError("delta0 and delta1 must lie in (0, 1)")
    G.require_connected()
    S = _check_terminals(G, S)
    rng = _rng(seed)
    k = jl_rows(G.n, delta0)
    solver_eps = symbolic_solver_eps(G, k, delta1)
    # the symbolic value can underflow to 0; anything tiny is clamped downstream
    eps_used = min(max(solver_eps, 1e-300), 0.5)
    sqrt_w = np.sqrt(G.weights)
    Bt = G.incidence.T.tocsr()
    acc = np.zeros(G.m)
    worst = 0.0
    clamped = False
    for Q in _jl_blocks(rng, k, G.m):
        R = Bt @ (Q * sqrt_w).T  # n x rows
        X, rep1 = lapl_solve(G, R, eps_used, direct_cap)
        Z = X[S] - X[S].mean(axis=0)  # C^T L^+ R
        Z, rep2 = apply_schur(G, S, Z, eps_used, direct_cap, with_report=True)
        Z = Z - Z.mean(axis=0)
        inj = np.zeros_like(X)
        inj[S] = Z  # C (SC C^T L^+ R)
        Y, rep3 = lapl_solve(G, inj, eps_used, direct_cap)
        acc += _edge_sqnorms(G, Y)
        for rep in (rep1, rep2, rep3):
            worst = max(worst, rep.residual)
            clamped = clamped or rep.clamped
    return EdgeEstimates(G.edge_ids.copy(), acc * G.weights, "nu",
                         {"delta0": delta0, "delta1": delta1, "k": k,
                          "solver_eps_symbolic": solver_eps, "solver_clamped": clamped,
                          "max_residual": worst})


def identified_graph(G: WeightedGraph, S) -> WeightedGraph:
    return G.as_root().identify_vertices(S)


def identification_gaps_exact(G: WeightedGraph, S, cap=DENSE_CAP) -> np.ndarray:
    """b_e^T L_G^+ b_e - b_e^T L_{G/S}^+ b_e for all edges, densely."""
    S = sorted({int(s) for s in S})
    if not S:
        raise GraphError("vertex set S is empty")
    Lp = pinv_dense(G, cap)
    u, v = G.tails, G.heads
    before = Lp[u, u] + Lp[v, v] - 2 * Lp[u, v]
    if len(S) == 1:
        return np.zeros(G.m)
    H = identified_graph(G, S)
    Hp = pinv_dense(H, cap)
    pu, pv = H.phi[u], H.phi[v]
    after = Hp[pu, pu] + Hp[pv, pv] - 2 * Hp[pu, pv]
    return before - after


def identification_gap_exact(G: WeightedGraph, S, e, cap=DENSE_CAP) -> float:
    return float(identification_gaps_exact(G, S, cap)[G.index_of(e)])
