"""Subspace sparsification by spanning-tree-guided edge elimination.

Each round of :func:`subspace_sparsifier` splits every edge of the current
graph H into a pair (two parallel copies or a two-edge path) so that all
leverage scores of the split graph I sit in [3/16, 13/16], asks an oracle for
edges whose conditioning barely moves the subspace quadratic form, samples a
uniform spanning tree of I, contracts the chosen tree edges and deletes the
other chosen edges.  The pairs are then merged back.  Because every split
pair maps to one edge of H, the whole round is recorded as delete, contract
and reweight operations on H, which keeps the output a certified minor of the
input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .errors import EmptyOracleError, GraphError
from .graph import Contract, Delete, Reweight, WeightedGraph
from .linalg import DENSE_CAP, DIRECT_CAP, lapl_solve, leverage_by_solves, leverage_exact, pinv_dense
from .resistance import diff_apx, jl_rows, leverage_apx
from .sketch import subsample
from .spanning_tree import sample_ust

LEV_LOW, LEV_HIGH = 3 / 16, 13 / 16
SPLIT_EPS = 1 / 16


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# --------------------------------------------------------------------- basis


@dataclass
class SubspaceBasis:
    """Columns y_i spanning the demand subspace, with y_i^T L^+ y_j = delta_ij."""

    graph: WeightedGraph
    Y: np.ndarray  # n x d
    terminals: tuple | None = None  # set when the subspace is a coordinate one

    @property
    def d(self) -> int:
        return self.Y.shape[1]

    def gram(self, eps=1e-12) -> np.ndarray:
        X, _ = lapl_solve(self.graph, self.Y, eps)
        return self.Y.T @ X

    def project(self, H: WeightedGraph) -> np.ndarray:
        """(y_i)_H = P y_i for a graph in the same lineage as ``graph``."""
        return H.project(self.Y)


def _whiten(G: WeightedGraph, X: np.ndarray) -> np.ndarray:
    """Re-express the column span of X as an L^+-orthonormal basis."""
    Z, _ = lapl_solve(G, X, 1e-12)
    gram = X.T @ Z
    gram = (gram + gram.T) / 2
    vals, vecs = np.linalg.eigh(gram)
    keep = vals > 1e-12 * max(vals.max(), 1e-300)
    return X @ (vecs[:, keep] / np.sqrt(vals[keep]))


def make_coordinate_subspace(G: WeightedGraph, S) -> SubspaceBasis:
    """Vectors supported on S and orthogonal to all-ones (dimension |S| - 1)."""
    S = sorted({int(s) for s in S})
    if len(S) < 2:
        raise GraphError("coordinate subspace needs |S| >= 2")
    if S[0] < 0 or S[-1] >= G.n:
        raise GraphError(f"terminal outside [0, {G.n})")
    G.require_connected()
    X = np.zeros((G.n, len(S) - 1))
    for j, s in enumerate(S[1:]):
        X[S[0], j] = 1.0
        X[s, j] = -1.0
    Y = _whiten(G, X)
    Y[np.abs(Y) < 1e-300] = 0.0
    mask = np.ones(G.n, dtype=bool)
    mask[S] = False
    Y[mask] = 0.0  # exact zeros off the support
    return SubspaceBasis(G, Y, tuple(S))


def make_basis(G: WeightedGraph, vectors) -> SubspaceBasis:
    """Basis for the span of arbitrary demand vectors (each summing to zero)."""
    X = np.asarray(vectors, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != G.n:
        raise GraphError("demand vectors must have one entry per vertex")
    if np.any(np.abs(X.sum(axis=0)) > 1e-9 * np.maximum(np.abs(X).sum(axis=0), 1)):
        raise GraphError("demand vectors must be orthogonal to all-ones")
    G.require_connected()
    Y = _whiten(G, X)
    if Y.shape[1] == 0:
        raise GraphError("demand vectors span only the zero subspace")
    return SubspaceBasis(G, Y)


# ------------------------------------------------------------- split/unsplit


@dataclass
class SplitPairing:
    """Split graph I plus the pairing of its edges back to the edges of H.

    Pair j consists of I-edges ``2j`` and ``2j + 1`` and stands for the H edge
    ``source[j]``.  Series pairs meet at the fresh vertex ``fresh[j]``
    (``-1`` for parallel pairs).  Vertices ``0..host_n-1`` of I are the
    vertices of H.
    """

    graph: WeightedGraph
    source: np.ndarray
    series: np.ndarray
    fresh: np.ndarray
    host_n: int
    leverage: np.ndarray  # estimates used to choose the split, per pair
    predicted: np.ndarray  # implied leverage of each I edge of the pair

    def pair_of(self, i_edge) -> int:
        return int(i_edge) // 2

    def __len__(self):
        return len(self.source)


def _leverage_for_split(H: WeightedGraph, mode, seed, dense_cap):
    if mode is not None and not isinstance(mode, str):
        values = np.asarray(getattr(mode, "values", mode), dtype=float)
        if len(values) != H.m:
            raise GraphError("leverage estimates do not match the edge count")
        return values
    mode = mode or "auto"
    if mode == "exact" or (mode == "auto" and H.n <= dense_cap):
        return leverage_exact(H, cap=max(dense_cap, H.n))
    if mode == "auto" and H.m <= jl_rows(H.n, SPLIT_EPS):
        # m exact solves are cheaper than the sketch here
        return leverage_by_solves(H)
    return leverage_apx(H, SPLIT_EPS, seed).values


def split(H: WeightedGraph, leverage="auto", seed=None, dense_cap=DENSE_CAP) -> SplitPairing:
    """Split each edge so that every leverage score of the result is moderate.

    Edges with estimated leverage at least 1/2 become two parallel edges of
    twice the resistance (leverage halves); the rest become a two-edge path of
    half resistances through a fresh vertex (leverage becomes 1/2 + lev/2).
    """
    H.require_connected()
    lev = _leverage_for_split(H, leverage, seed, dense_cap)
    m = H.m
    series = lev < 0.5
    fresh = np.full(m, -1, dtype=np.int64)
    fresh[series] = H.n + np.arange(int(series.sum()))
    u, v, w = H.tails, H.heads, H.weights
    # parallel: (u, v) twice at w/2;  series: (u, x) and (x, v) at 2w
    t0 = u.copy()
    h0 = np.where(series, fresh, v)
    t1 = np.where(series, fresh, u)
    h1 = v.copy()
    wp = np.where(series, 2.0 * w, w / 2.0)
    tails = np.column_stack([t0, t1]).ravel()
    heads = np.column_stack([h0, h1]).ravel()
    weights = np.repeat(wp, 2)
    I = WeightedGraph(H.n + int(series.sum()), np.arange(2 * m), tails, heads, weights)
    predicted = np.where(series, 0.5 + lev / 2, lev / 2)
    if np.any(predicted < LEV_LOW) or np.any(predicted > LEV_HIGH):
        raise GraphError("split produced leverage estimates outside [3/16, 13/16]")
    return SplitPairing(I, H.edge_ids.copy(), series, fresh, H.n, lev, predicted)


def unsplit(I2: WeightedGraph, pairing: SplitPairing) -> WeightedGraph:
    """Merge surviving pairs of a conditioned split graph back into single edges.

    ``I2`` must descend from ``pairing.graph``.  Parallel survivors merge by
    adding weights, series survivors meeting at an untouched fresh vertex by
    adding resistances; a lone survivor is kept as is unless it dangles from
    an otherwise isolated fresh vertex, in which case it carries no current
    and is dropped.  Returns a fresh root graph on the classes of H's
    vertices, with the H edge ids.
    """
    if I2.origin is not pairing.graph:
        raise GraphError("graph does not descend from this split")
    phi = I2.phi
    host = phi[: pairing.host_n]
    classes = np.unique(host)
    label = np.full(I2.n, -1, dtype=np.int64)
    # rank classes by smallest host vertex; np.unique on the first hit does that
    first = np.full(I2.n, pairing.host_n, dtype=np.int64)
    np.minimum.at(first, host, np.arange(pairing.host_n))
    order = classes[np.argsort(first[classes], kind="stable")]
    label[order] = np.arange(len(order))
    out = []
    for j, src in enumerate(pairing.source.tolist()):
        e0, e1 = 2 * j, 2 * j + 1
        a0, a1 = I2.has_edge(e0), I2.has_edge(e1)
        if not (a0 or a1):
            continue
        if pairing.series[j]:
            x = phi[pairing.fresh[j]]
            x_is_fresh = label[x] < 0
            if a0 and a1 and x_is_fresh:
                (p, q0), (q1, r) = I2.endpoints(e0), I2.endpoints(e1)
                ends = [y for y in (p, q0, q1, r) if y != x]
                if len(ends) != 2:
                    raise GraphError(f"pair {j} is not a path through its fresh vertex")
                res = 1.0 / I2.weight(e0) + 1.0 / I2.weight(e1)
                out.append((src, label[ends[0]], label[ends[1]], 1.0 / res))
                continue
            if x_is_fresh:
                continue  # dangling leaf edge(s)
            if a0 and a1:
                raise GraphError(f"series pair {j} survives without its fresh vertex")
        elif a0 and a1:
            p, q = I2.endpoints(e0)
            out.append((src, label[p], label[q], I2.weight(e0) + I2.weight(e1)))
            continue
        e = e0 if a0 else e1
        p, q = I2.endpoints(e)
        out.append((src, label[p], label[q], I2.weight(e)))
    out = [t for t in out if t[1] != t[2]]
    out.sort()
    if out:
        ids, tails, heads, weights = map(list, zip(*out))
    else:
        ids, tails, heads, weights = [], [], [], []
    return WeightedGraph(len(order), ids, tails, heads, weights, phi=label[phi[: pairing.host_n]])


def host_ops(H: WeightedGraph, pairing: SplitPairing, i_ops) -> list:
    """Translate conditioning decisions on I into delete/contract/reweight on H.

    Reweights and deletions come first: later contractions may turn other
    edges of H into self-loops, after which they can no longer be named.
    """
    fate = {}
    for op in i_ops:
        j = pairing.pair_of(op.edge)
        fate.setdefault(j, {})[op.edge % 2] = "C" if isinstance(op, Contract) else "D"
    early, late = [], []
    for j in sorted(fate):
        src = int(pairing.source[j])
        f = fate[j]
        if pairing.series[j]:
            if len(f) == 2:
                op = Contract(src) if set(f.values()) == {"C"} else Delete(src)
            elif "C" in f.values():
                w = H.weight(src)
                op = Reweight(src, w, 2.0 * w)
            else:
                op = Delete(src)
        else:
            if "C" in f.values():
                op = Contract(src)
            elif len(f) == 2:
                op = Delete(src)
            else:
                w = H.weight(src)
                op = Reweight(src, w, w / 2.0)
        (late if isinstance(op, Contract) else early).append(op)
    return early + late


# ------------------------------------------------------------------- oracles


@dataclass
class OracleSpec:
    """Which oracle to run and its steadiness parameters.

    ``rho`` is the steadiness factor entering the termination threshold;
    ``batch_size`` gives how many edges are conditioned per round.
    """

    kind: str = "slow"
    rho: float = 2.0
    beta: float = 1.0
    c_local: float = 1.0
    gamma: float | None = None  # overrides the formula for the fast oracle
    subsample_attempts: int = 64
    column_rounds: int | None = None  # ColumnApx rounds; None uses ceil(25 ln n)
    sketch_delta: float | None = None  # l1 sketch failure probability; None uses n^-6

    def __post_init__(self):
        if self.kind not in ("slow", "fast"):
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        if self.rho < 1:
            raise ValueError("rho must be at least 1")
        if self.beta <= 0 or self.c_local <= 0:
            raise ValueError("beta and c_local must be positive")
        if self.gamma is not None and not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")

    def batch_size(self, z, n) -> int:
        if self.kind == "slow":
            return 1
        return max(1, math.floor(z / (self.beta * math.log(max(n, 2)) ** 3)))

    def fast_gamma(self, n) -> float:
        if self.gamma is not None:
            return self.gamma
        return 1.0 / (1e8 * self.c_local * math.log(max(n, 2)) ** 3)


@dataclass
class OracleResult:
    Z: np.ndarray  # I edge ids
    kind: str  # oracle that actually ran
    scores: np.ndarray | None = None  # per-edge energies (slow) or nu (fast), I order
    info: dict = field(default_factory=dict)


def pad_basis(Y_H: np.ndarray, n_I: int) -> np.ndarray:
    out = np.zeros((n_I, Y_H.shape[1]))
    out[: Y_H.shape[0]] = Y_H
    return out


def energy_fractions(I: WeightedGraph, Y: np.ndarray, eps=1e-12) -> np.ndarray:
    """max_{x in span(Y)} (x^T L^+ b_e)^2 / (r_e x^T L^+ x) for every edge of I."""
    X, _ = lapl_solve(I, Y, eps)
    gram = Y.T @ X
    gram = (gram + gram.T) / 2
    vals, vecs = np.linalg.eigh(gram)
    keep = vals > 1e-12 * max(vals.max(), 1e-300)
    Xw = X @ (vecs[:, keep] / np.sqrt(vals[keep]))
    D = Xw[I.heads] - Xw[I.tails]
    return I.weights * np.einsum("ij,ij->i", D, D)


def slow_oracle(I: WeightedGraph, Y_I: np.ndarray) -> OracleResult:
    """All edges whose maximum energy fraction is at most 2d / |E(I)|."""
    energy = energy_fractions(I, Y_I)
    d = Y_I.shape[1]
    thresh = 2.0 * d / I.m
    Z = I.edge_ids[energy <= thresh]
    return OracleResult(Z, "slow", energy, {"threshold": thresh, "d": int(d)})


def fast_oracle(I: WeightedGraph, S, spec: OracleSpec, seed=None,
                Y_I: np.ndarray | None = None) -> OracleResult:
    """Localized subsample filtered by the estimated identification gap.

    Falls back to :func:`slow_oracle` (which then needs ``Y_I``) when
    gamma * m < 4, since no subsample of the required size can exist.
    """
    rng = _rng(seed)
    S = sorted({int(s) for s in S})
    gamma = spec.fast_gamma(I.n)
    if gamma * I.m < 4:
        if Y_I is None:
            raise GraphError("fast oracle fallback needs the basis on I")
        res = slow_oracle(I, Y_I)
        res.info["fallback"] = True
        res.info["gamma"] = gamma
        return res
    kw = {"rounds": spec.column_rounds, "sketch_delta": spec.sketch_delta}
    loc = subsample(I, gamma, rng, c_local=spec.c_local,
                    max_attempts=spec.subsample_attempts, **kw)
    if len(S) <= 1:
        nu = np.zeros(I.m)
    elif len(S) == I.n:
        # identifying every vertex removes all resistance: the gap is the leverage
        nu = leverage_exact(I, cap=max(I.n, DENSE_CAP)) if I.n <= DENSE_CAP else leverage_by_solves(I)
    else:
        nu = diff_apx(I, S, 0.25, min(0.5, float(I.m) ** -5), rng).values
    thresh = 4.0 * len(S) / len(loc.edge_ids)
    W_idx = np.array([I.index_of(e) for e in loc.edge_ids], dtype=np.int64)
    Z = loc.edge_ids[nu[W_idx] <= thresh]
    return OracleResult(Z, "fast", nu, {"threshold": thresh, "gamma": gamma, "psi": loc.psi,
                                        "W": int(len(loc.edge_ids)),
                                        "attempts": loc.attempts, "fallback": False})


# -------------------------------------------------------------------- driver


def termination_threshold(d, eps, rho, cterm) -> float:
    """cterm rho^2 d log2(max(d, 2)) / eps^2."""
    return cterm * rho**2 * d * math.log2(max(d, 2)) / eps**2


@dataclass
class SparsifierResult:
    graph: WeightedGraph
    basis: SubspaceBasis
    threshold: float
    trace: list
    audit: object = None

    @property
    def certificate(self):
        return self.graph.certificate

    @property
    def iterations(self) -> int:
        return len(self.trace)


def subspace_sparsifier(G: WeightedGraph, basis_or_S, eps, oracle: OracleSpec | None = None,
                        seed=None, cterm=10.0, max_iter=None, audit=None,
                        dense_cap=DENSE_CAP, leverage="auto",
                        direct_cap=DIRECT_CAP) -> SparsifierResult:
    """Eliminate edges until fewer than the termination threshold remain.

    ``basis_or_S`` is a :class:`SubspaceBasis` or a terminal vertex set.
    ``audit`` may be True or an audit-trace object with ``on_batch`` and
    ``on_iteration`` hooks (see :mod:`.testkit`).
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    oracle = oracle or OracleSpec()
    rng = _rng(seed)
    if not G.is_root:
        raise GraphError("pass a root graph (see WeightedGraph.as_root)")
    if isinstance(basis_or_S, SubspaceBasis):
        basis = basis_or_S
        if basis.graph is not G:
            raise GraphError("basis lives on a different graph")
    else:
        basis = make_coordinate_subspace(G, basis_or_S)
    G.require_connected()
    G0 = G
    if oracle.kind == "fast" and basis.terminals is None:
        raise GraphError("the fast oracle needs a coordinate subspace")
    if audit is True:
        from .testkit import AuditTrace
        audit = AuditTrace(dense_cap=max(dense_cap, 1))
    d = basis.d
    threshold = termination_threshold(d, eps, oracle.rho, cterm)
    H = G0
    trace = []
    k = 0
    while H.m >= threshold and H.m > 0:
        if max_iter is not None and k >= max_iter:
            break
        H.require_connected()
        pairing = split(H, leverage, rng, dense_cap)
        I = pairing.graph
        Y_I = pad_basis(basis.project(H), I.n)
        if oracle.kind == "fast":
            S_I = np.unique(H.phi[list(basis.terminals)])
            res = fast_oracle(I, S_I, oracle, rng, Y_I)
        else:
            res = slow_oracle(I, Y_I)
        if len(res.Z) == 0:
            raise EmptyOracleError(f"oracle returned no edges at iteration {k} (|E(H)|={H.m})")
        K = min(oracle.batch_size(I.m, I.n), len(res.Z))
        chosen = rng.permutation(res.Z)[:K]
        T = sample_ust(I, rng)
        i_ops = [Contract(int(e)) if e in T else Delete(int(e)) for e in chosen]
        ops = host_ops(H, pairing, i_ops)
        if audit is not None:
            audit.on_batch(k, I, Y_I, i_ops, oracle.rho, d)
        H_next = H.apply_ops(ops)
        rec = {"iteration": k, "n_H": H.n, "m_H": H.m, "m_I": I.m, "Z": int(len(res.Z)),
               "K": int(K), "contracted": sum(isinstance(o, Contract) for o in i_ops),
               "deleted": sum(isinstance(o, Delete) for o in i_ops), "oracle": res.kind,
               "m_next": H_next.m}
        if res.info.get("fallback"):
            rec["fallback"] = True
        if audit is not None:
            rec["distortion"] = audit.on_iteration(k, G0, H_next, basis)
        trace.append(rec)
        H = H_next
        k += 1
    return SparsifierResult(H, basis, threshold, trace, audit)


def audit_distortion(G: WeightedGraph, H, basis: SubspaceBasis, cap=DENSE_CAP) -> float:
    """max |lambda - 1| over generalized eigenvalues of (Y_H^T L_H^+ Y_H, Y^T L_G^+ Y)."""
    if isinstance(H, SparsifierResult):
        H = H.graph
    Y = basis.Y
    Y_H = H.project(Y)
    A = Y_H.T @ pinv_dense(H, cap) @ Y_H
    B = Y.T @ pinv_dense(G, cap) @ Y
    vals = eigh((A + A.T) / 2, (B + B.T) / 2, eigvals_only=True)
    return float(np.max(np.abs(vals - 1.0)))
