"""l1 sketches, off-diagonal column-sum estimation and localized subsampling.

The l1 sketch is the Cauchy projection: for a matrix C with i.i.d. standard
Cauchy entries, each coordinate of Cv is Cauchy with scale ||v||_1, and the
median of |Cv| is a consistent estimator of ||v||_1.

The coupling between edges e and f of a graph is
|b_e^T L^+ b_f| / sqrt(r_e r_f).  ``column_apx`` estimates, for each edge of a
set W, the sum of its couplings to the other edges of W without ever forming
the m x m coupling matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import GraphError, SubsampleError
from .graph import WeightedGraph
from .linalg import DENSE_CAP, DIRECT_CAP, lapl_solve, pinv_dense
from .resistance import EdgeEstimates

SKETCH_CONST = 32.0
ROUNDS_FACTOR = 25.0
SUBSAMPLE_ATTEMPTS = 64


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@dataclass
class L1Sketch:
    matrix: np.ndarray  # l x d
    d: int
    delta: float
    eps: float

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.d:
            raise ValueError(f"vector has dimension {v.shape[0]}, sketch expects {self.d}")
        return self.matrix @ v


def sketch_rows(delta, eps, const=SKETCH_CONST) -> int:
    return math.ceil(const * math.log(1.0 / delta) / eps**2)


def sketch_matrix(d, delta, eps, seed=None, const=SKETCH_CONST) -> L1Sketch:
    if not (0 < delta < 1 and 0 < eps < 1):
        raise ValueError("delta and eps must lie in (0, 1)")
    rng = _rng(seed)
    l = sketch_rows(delta, eps, const)
    # inverse-CDF sampling of the standard Cauchy law
    C = np.tan(np.pi * (rng.random((l, int(d))) - 0.5))
    return L1Sketch(C, int(d), delta, eps)


def recover_norm(sketched, sketch: L1Sketch | None = None, axis=0):
    """Median-of-absolute-values estimate of ||v||_1 from ``C v``.

    Accepts a single sketched vector or a stack of them; ``axis`` indexes the
    sketch rows.
    """
    s = np.asarray(sketched, dtype=float)
    if sketch is not None and s.shape[axis] != sketch.rows:
        raise ValueError(f"sketch has {sketch.rows} rows, got {s.shape[axis]}")
    a = np.moveaxis(np.abs(s), axis, -1)
    l = a.shape[-1]
    k = l // 2
    # one partition finds the upper middle; the lower middle is the max below it
    a.partition(k, axis=-1)
    hi = a[..., k]
    if l % 2:
        return hi
    return (a[..., :k].max(axis=-1) + hi) / 2


def column_apx(I: WeightedGraph, W, seed=None, rounds=None, sketch_eps=0.25,
               sketch_delta=None, const=SKETCH_CONST, direct_cap=DIRECT_CAP) -> EdgeEstimates:
    """Estimate sum_{f in W, f != e} |b_e^T L^+ b_f| / sqrt(r_e r_f) for e in W.

    Each round splits W by fair coins into W0 and W1, sketches the columns
    of W1 and credits every edge of W0 with the recovered l1 norm of its
    couplings to W1.  Every ordered pair lands on opposite sides with
    probability 1/4, hence the final 4/K rescaling.
    """
    I.require_connected()
    rng = _rng(seed)
    W = np.array(sorted({int(e) for e in W}), dtype=np.int64)
    idx = np.array([I.index_of(e) for e in W], dtype=np.int64)
    n = I.n
    if rounds is None:
        rounds = max(1, math.ceil(ROUNDS_FACTOR * math.log(max(n, 2))))
    if sketch_delta is None:
        sketch_delta = float(max(n, 2)) ** -6
    kappa = np.zeros(len(W))
    sqrt_w = np.sqrt(I.weights[idx])
    tails, heads = I.tails[idx], I.heads[idx]
    Bt = I.incidence.T.tocsc()  # n x m
    for _ in range(rounds):
        side = rng.integers(0, 2, size=len(W)).astype(bool)  # True -> W1
        one = np.flatnonzero(side)
        zero = np.flatnonzero(~side)
        if len(one) == 0 or len(zero) == 0:
            continue
        C = sketch_matrix(len(one), sketch_delta, sketch_eps, rng, const)
        # D C^T with D's columns b_f / sqrt(r_f): an n x l matrix
        D = (Bt[:, idx[one]] @ sp.diags(sqrt_w[one])).toarray()
        DCt = D @ C.matrix.T
        U, _ = lapl_solve(I, DCt, 1e-10, direct_cap)
        proj = (U[heads[zero]] - U[tails[zero]]) * sqrt_w[zero][:, None]  # |W0| x l
        kappa[zero] += recover_norm(proj, axis=1)
    return EdgeEstimates(W, 4.0 * kappa / rounds, "column-sum",
                         {"rounds": rounds, "sketch_eps": sketch_eps,
                          "sketch_delta": sketch_delta})


@dataclass
class LocalizedSet:
    edge_ids: np.ndarray
    psi: float
    gamma: float
    estimates: EdgeEstimates  # a_e over the sampled superset W0
    attempts: int


def localization_threshold(n, gamma, c_local) -> float:
    return 100.0 * c_local * gamma * math.log(max(n, 2)) ** 2


def subsample(I: WeightedGraph, gamma, seed=None, c_local=1.0,
              max_attempts=SUBSAMPLE_ATTEMPTS, psi=None, **column_kw) -> LocalizedSet:
    """Sample a set W of at least gamma m / 4 edges with small couplings.

    Each attempt keeps every edge with probability min(1, 2 gamma), estimates
    the column sums within that sample and retains the edges whose estimate
    is at most psi / 2.  Raises :class:`SubsampleError` after ``max_attempts``
    failures.
    """
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    rng = _rng(seed)
    if psi is None:
        psi = localization_threshold(I.n, gamma, c_local)
    need = gamma * I.m / 4
    p = min(1.0, 2 * gamma)
    for attempt in range(1, max_attempts + 1):
        W0 = I.edge_ids[rng.random(I.m) < p]
        if len(W0) == 0:
            continue
        est = column_apx(I, W0, rng, **column_kw)
        W = est.edge_ids[est.values <= psi / 2]
        if len(W) >= need and len(W) > 0:
            return LocalizedSet(W, psi, gamma, est, attempt)
    raise SubsampleError(
        f"no localized set after {max_attempts} attempts (gamma={gamma:.3g}, psi={psi:.3g})")


# ----------------------------------------------------------- dense references


def coupling_matrix(G: WeightedGraph, cap=DENSE_CAP) -> np.ndarray:
    """|b_e^T L^+ b_f| / sqrt(r_e r_f) for all edge pairs (storage order)."""
    Lp = pinv_dense(G, cap)
    B = G.incidence.toarray()
    sw = np.sqrt(G.weights)
    M = (B * sw[:, None]) @ Lp @ (B * sw[:, None]).T
    return np.abs(M)


def offdiag_column_sums(G: WeightedGraph, W=None, cap=DENSE_CAP) -> np.ndarray:
    """Exact column sums over W excluding the diagonal, ordered by edge id."""
    M = coupling_matrix(G, cap)
    if W is None:
        idx = np.arange(G.m)
    else:
        idx = np.array([G.index_of(e) for e in sorted({int(e) for e in W})], dtype=np.int64)
    sub = M[np.ix_(idx, idx)]
    return sub.sum(axis=1) - np.diag(sub)


def localization_sums(G: WeightedGraph, cap=DENSE_CAP) -> np.ndarray:
    """Column sums of the coupling matrix, diagonal included."""
    return coupling_matrix(G, cap).sum(axis=1)


def calibrate_c_local(graphs, quantile=90.0, cap=DENSE_CAP) -> dict:
    """Fit c_local as a percentile of mean localization sum / ln^2 n."""
    ratios = []
    for G in graphs:
        if G.n < 2 or G.m == 0:
            continue
        G = G.as_root()
        if not G.is_connected:
            raise GraphError("calibration corpus contains a disconnected graph")
        ratios.append(float(localization_sums(G, cap).mean()) / math.log(G.n) ** 2)
    if not ratios:
        raise GraphError("calibration corpus is empty")
    return {"c_local": float(np.percentile(ratios, quantile)),
            "graphs": len(ratios), "ratios": ratios}
