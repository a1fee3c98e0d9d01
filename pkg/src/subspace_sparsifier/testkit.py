"""Brute-force oracles, audit instrumentation and the random graph corpus.

Everything here is dense and meant for small graphs.  The pseudoinverse is
computed from a symmetric eigendecomposition, deliberately independent of the
pinned-vertex factorizations used by :mod:`.linalg`, so the two can check
each other.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapExceededError, DisconnectedGraphError, GraphError
from .graph import WeightedGraph, build_graph, format_graph
from .linalg import DENSE_CAP

# ---------------------------------------------------------------- the oracle


class DenseOracle:
    """Dense L and L^+ of a connected graph below the dense cap."""

    def __init__(self, G: WeightedGraph, cap=DENSE_CAP):
        if G.n > cap:
            raise CapExceededError(f"n = {G.n} exceeds dense cap {cap}")
        self.graph = G
        self.L = G.dense_laplacian()
        vals, vecs = np.linalg.eigh(self.L)
        scale = max(abs(vals).max(), 1.0) if len(vals) else 1.0
        null = vals < 1e-10 * scale
        if null.sum() > 1:
            raise DisconnectedGraphError(f"Laplacian has {int(null.sum())} null directions")
        inv = np.zeros_like(vals)
        inv[~null] = 1.0 / vals[~null]
        self.eigenvalues = vals
        self.Lp = (vecs * inv) @ vecs.T
        self.Lp = (self.Lp + self.Lp.T) / 2

    def quadform(self, x, y=None) -> float:
        x = np.asarray(x, dtype=float)
        y = x if y is None else np.asarray(y, dtype=float)
        return float(x @ self.Lp @ y)

    def resistance(self, u, v) -> float:
        if u == v:
            return 0.0
        Lp = self.Lp
        return float(Lp[u, u] + Lp[v, v] - 2 * Lp[u, v])

    def resistances(self) -> np.ndarray:
        u, v = self.graph.tails, self.graph.heads
        Lp = self.Lp
        return Lp[u, u] + Lp[v, v] - 2 * Lp[u, v]

    def leverage(self) -> np.ndarray:
        return self.graph.weights * self.resistances()

    def schur(self, S) -> np.ndarray:
        """SC(L, S) straight from the block formula (L itself when S = V)."""
        S = np.array(sorted({int(s) for s in S}), dtype=np.int64)
        mask = np.ones(self.graph.n, dtype=bool)
        mask[S] = False
        T = np.flatnonzero(mask)
        L = self.L
        if len(T) == 0:
            return L.copy()
        SC = L[np.ix_(S, S)] - L[np.ix_(S, T)] @ np.linalg.solve(L[np.ix_(T, T)], L[np.ix_(T, S)])
        return (SC + SC.T) / 2


def dense_pinv(G: WeightedGraph, cap=DENSE_CAP) -> DenseOracle:
    return DenseOracle(G, cap)


def edge_vector(n, u, v) -> np.ndarray:
    b = np.zeros(n)
    b[v] += 1.0
    b[u] -= 1.0
    return b


def star_matrix(n, S) -> np.ndarray:
    """Columns e_{s0} - e_{s} for s in S minus s0."""
    S = sorted(S)
    C = np.zeros((n, max(len(S) - 1, 0)))
    for j, s in enumerate(S[1:]):
        C[S[0], j] = 1.0
        C[s, j] = -1.0
    return C


def oracle_identification_gaps(G: WeightedGraph, S, cap=DENSE_CAP) -> np.ndarray:
    """Resistance drop of every edge when S is identified, from two dense pinvs."""
    S = sorted({int(s) for s in S})
    before = DenseOracle(G, cap).resistances()
    if len(S) <= 1:
        return np.zeros(G.m)
    H = G.as_root().identify_vertices(S)
    Hp = DenseOracle(H, cap).Lp
    pu, pv = H.phi[G.tails], H.phi[G.heads]
    return before - (Hp[pu, pu] + Hp[pv, pv] - 2 * Hp[pu, pv])


def woodbury_gaps(G: WeightedGraph, S, cap=DENSE_CAP) -> np.ndarray:
    """b_e^T L^+ C (C^T L^+ C)^+ C^T L^+ b_e for all edges."""
    O = DenseOracle(G, cap)
    C = star_matrix(G.n, S)
    if C.shape[1] == 0:
        return np.zeros(G.m)
    B = G.incidence.toarray()
    X = B @ O.Lp @ C  # m x (|S|-1)
    mid = np.linalg.pinv(C.T @ O.Lp @ C)
    return np.einsum("ij,jk,ik->i", X, mid, X)


def oracle_energies(G: WeightedGraph, Y, cap=DENSE_CAP) -> np.ndarray:
    """max_{x in span Y} (x^T L^+ b_e)^2 / (r_e x^T L^+ x), dense."""
    O = DenseOracle(G, cap)
    Y = np.asarray(Y, dtype=float)
    gram = Y.T @ O.Lp @ Y
    B = G.incidence.toarray()
    X = B @ O.Lp @ Y
    return G.weights * np.einsum("ij,jk,ik->i", X, np.linalg.pinv(gram), X)


def oracle_coupling_sums(G: WeightedGraph, W=None, cap=DENSE_CAP) -> np.ndarray:
    """sum_{f in W, f != e} |b_e^T L^+ b_f| / sqrt(r_e r_f), ordered by edge id."""
    O = DenseOracle(G, cap)
    B = G.incidence.toarray() * np.sqrt(G.weights)[:, None]
    M = np.abs(B @ O.Lp @ B.T)
    idx = np.arange(G.m) if W is None else np.array(
        [G.index_of(e) for e in sorted({int(e) for e in W})], dtype=np.int64)
    sub = M[np.ix_(idx, idx)]
    return sub.sum(axis=1) - np.diag(sub)


# ------------------------------------------------------------- identity suite


@dataclass
class IdentityReport:
    residuals: dict = field(default_factory=dict)
    tol: float = 1e-8

    def add(self, name, residual):
        self.residuals[name] = float(residual)

    @property
    def failures(self) -> list:
        return [k for k, v in self.residuals.items() if not v <= self.tol]

    @property
    def passed(self) -> bool:
        return not self.failures

    def lines(self) -> list:
        return [f"{'ok  ' if v <= self.tol else 'FAIL'} {k}: {v:.3e}"
                for k, v in self.residuals.items()]


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def verify_identities(G: WeightedGraph, S, basis=None, tol=1e-8, seed=0,
                      cap=DENSE_CAP) -> IdentityReport:
    """Check the pseudoinverse/Schur, Sherman-Morrison, Woodbury and trace identities.

    ``basis`` is an n x d matrix (or an object with a ``Y`` attribute); when
    omitted the coordinate subspace of S is used for the trace identity.
    """
    rng = np.random.default_rng(seed)
    G = G.as_root()
    O = DenseOracle(G, cap)
    S = sorted({int(s) for s in S})
    n = G.n
    rep = IdentityReport(tol=tol)

    # pseudoinverse of the Schur complement is the centered block of L^+
    k = len(S)
    Pi = np.eye(k) - 1.0 / k
    lhs = Pi @ O.Lp[np.ix_(S, S)] @ Pi
    rep.add("schur-pinv", _rel(lhs, np.linalg.pinv(O.schur(S), rcond=1e-12)))

    def demand():
        x = rng.standard_normal(n)
        return x - x.mean()

    lev = O.leverage()
    d1, d2 = demand(), demand()
    # deletion update on a non-bridge edge
    candidates = np.flatnonzero(lev < 1 - 1e-6)
    if len(candidates):
        i = int(rng.choice(candidates))
        f = int(G.edge_ids[i])
        bf = edge_vector(n, G.tails[i], G.heads[i])
        r = 1.0 / G.weights[i]
        Lb = O.Lp @ bf
        pred = d1 @ O.Lp @ d2 + (d1 @ Lb) * (Lb @ d2) / (r - bf @ Lb)
        direct = DenseOracle(G.delete_edge(f), cap).quadform(d1, d2)
        rep.add("sherman-morrison-delete", abs(pred - direct) / max(abs(direct), 1e-12))
    # contraction update on any edge
    i = int(rng.integers(G.m))
    f = int(G.edge_ids[i])
    bf = edge_vector(n, G.tails[i], G.heads[i])
    Lb = O.Lp @ bf
    pred = d1 @ O.Lp @ d2 - (d1 @ Lb) * (Lb @ d2) / (bf @ Lb)
    Hc = G.contract_edge(f)
    if Hc.n > 1:
        direct = DenseOracle(Hc, cap).quadform(Hc.project(d1), Hc.project(d2))
    else:
        direct = 0.0
    rep.add("sherman-morrison-contract", abs(pred - direct) / max(abs(direct), abs(pred), 1e-12))

    # identification gap equals the Woodbury form and the maximal energy fraction
    gaps = oracle_identification_gaps(G, S, cap)
    if len(S) >= 2:
        rep.add("woodbury", _rel(woodbury_gaps(G, S, cap), gaps))
        C = star_matrix(n, S)
        rep.add("gap-is-max-energy", _rel(oracle_energies(G, C, cap), gaps * G.weights))

    # energies sum to the dimension
    Y = getattr(basis, "Y", basis)
    if Y is None:
        Y = star_matrix(n, S)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 2 and Y.shape[1] > 0:
        d = np.linalg.matrix_rank(Y.T @ O.Lp @ Y)
        total = oracle_energies(G, Y, cap).sum()
        rep.add("energy-sum", abs(total - d) / d)
    return rep


# ---------------------------------------------------------------- audit trace


class AuditTrace:
    """Dense per-step and per-iteration measurements of a sparsifier run.

    Per conditioning step it records the exact leverage of the conditioned
    edge in the current split graph and its energy fraction measured against
    the subspace norm of the split graph at the start of the batch.  Per
    iteration it records the distortion of the current output.
    """

    def __init__(self, dense_cap=DENSE_CAP):
        self.cap = dense_cap
        self.steps = []
        self.iterations = []

    def on_batch(self, k, I: WeightedGraph, Y_I, i_ops, rho, d):
        O0 = DenseOracle(I, self.cap)
        gram0 = Y_I.T @ O0.Lp @ Y_I
        ginv = np.linalg.pinv((gram0 + gram0.T) / 2)
        limit = rho * d / I.m
        cur, oracle = I, O0
        for t, op in enumerate(i_ops):
            rec = {"iteration": k, "step": t, "edge": op.edge, "limit": limit,
                   "decision": type(op).__name__.lower()}
            if not cur.has_edge(op.edge):
                # the edge collapsed into a self-loop earlier in the batch
                rec.update(leverage=0.0, energy=0.0, vanished=True)
            else:
                if oracle is None:
                    oracle = DenseOracle(cur, self.cap)
                i = cur.index_of(op.edge)
                u, v, w = cur.tails[i], cur.heads[i], cur.weights[i]
                lev = w * oracle.resistance(u, v)
                Yt = cur.project(Y_I)
                x = oracle.Lp[v] - oracle.Lp[u]  # b_f^T L^+
                z = x @ Yt
                rec.update(leverage=float(lev), energy=float(w * z @ ginv @ z), vanished=False)
                cur = cur.apply_ops([op])
                oracle = None
            rec["ok"] = bool(1 / 8 <= rec["leverage"] <= 7 / 8 and rec["energy"] <= limit * (1 + 1e-9))
            self.steps.append(rec)

    def on_iteration(self, k, G, H, basis) -> float:
        from .sparsify import audit_distortion
        dist = audit_distortion(G, H, basis, self.cap)
        self.iterations.append({"iteration": k, "m": H.m, "distortion": dist})
        return dist

    def violation_rate(self) -> float:
        if not self.steps:
            return 0.0
        return sum(not s["ok"] for s in self.steps) / len(self.steps)


# --------------------------------------------------------------------- corpus


def random_weights(m, rng, weighted=True) -> np.ndarray:
    if not weighted:
        return np.ones(m)
    return 2.0 ** rng.uniform(-4, 4, size=m)


def _from_pairs(n, pairs, rng, weighted) -> WeightedGraph:
    w = random_weights(len(pairs), rng, weighted)
    return build_graph([(u, v, float(x)) for (u, v), x in zip(pairs, w)], n=n)


def erdos_renyi(n, rng, weighted=True, p=None, max_tries=1000) -> WeightedGraph:
    """G(n, p) conditioned on connectivity, default p = 3 ln n / n."""
    if p is None:
        p = min(1.0, 3 * math.log(max(n, 2)) / n)
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(max_tries):
        keep = rng.random(len(iu)) < p
        G = _from_pairs(n, list(zip(iu[keep].tolist(), ju[keep].tolist())), rng, weighted)
        if G.is_connected:
            return G
    raise GraphError(f"could not draw a connected G({n}, {p})")


def random_graph_nm(n, m, rng, weighted=True) -> WeightedGraph:
    """Random spanning tree plus uniformly random extra edges, m edges total."""
    if m < n - 1:
        raise GraphError("need m >= n - 1 for a connected graph")
    perm = rng.permutation(n)
    pairs = [(int(perm[i]), int(perm[rng.integers(i)])) for i in range(1, n)]
    seen = {tuple(sorted(p)) for p in pairs}
    while len(pairs) < m:
        u, v = (int(x) for x in rng.integers(n, size=2))
        if u != v and (min(u, v), max(u, v)) not in seen:
            seen.add((min(u, v), max(u, v)))
            pairs.append((u, v))
    return _from_pairs(n, pairs, rng, weighted)


def path_graph(n, rng=None, weighted=False) -> WeightedGraph:
    return _from_pairs(n, [(i, i + 1) for i in range(n - 1)], rng or np.random.default_rng(0), weighted)


def cycle_graph(n, rng=None, weighted=False) -> WeightedGraph:
    return _from_pairs(n, [(i, (i + 1) % n) for i in range(n)], rng or np.random.default_rng(0), weighted)


def star_graph(n, rng=None, weighted=False) -> WeightedGraph:
    """Centre 0 joined to leaves 1..n-1."""
    return _from_pairs(n, [(0, i) for i in range(1, n)], rng or np.random.default_rng(0), weighted)


def complete_graph(n, rng=None, weighted=False) -> WeightedGraph:
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return _from_pairs(n, pairs, rng or np.random.default_rng(0), weighted)


def dumbbell_graph(k, rng=None, weighted=False) -> WeightedGraph:
    """Two k-cliques joined by a single bridge."""
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    pairs += [(k + i, k + j) for i, j in pairs]
    pairs.append((k - 1, k))
    return _from_pairs(2 * k, pairs, rng or np.random.default_rng(0), weighted)


def grid_graph(rows, cols, rng=None, weighted=False) -> WeightedGraph:
    pairs = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                pairs.append((v, v + 1))
            if r + 1 < rows:
                pairs.append((v, v + cols))
    return _from_pairs(rows * cols, pairs, rng or np.random.default_rng(0), weighted)


def with_parallel_copies(G: WeightedGraph, rng, copies=2, weighted=True) -> WeightedGraph:
    """Add ``copies`` parallel duplicates of random edges."""
    edges = G.edge_list()
    for _ in range(copies):
        u, v, _w = edges[int(rng.integers(len(edges)))]
        edges.append((u, v, float(random_weights(1, rng, weighted)[0])))
    return build_graph(edges, n=G.n)


def small_corpus(seed=0, max_n=7) -> list:
    """Connected graphs with n <= max_n: structured families and random ones,
    each unit-weighted and log-uniformly weighted, plus multigraph variants."""
    rng = np.random.default_rng(seed)
    out = []
    for weighted in (False, True):
        for n in range(2, max_n + 1):
            out.append(path_graph(n, rng, weighted))
            out.append(star_graph(n, rng, weighted))
            if n >= 3:
                out.append(cycle_graph(n, rng, weighted))
            if n <= 6:
                out.append(complete_graph(n, rng, weighted))
        for k in (2, 3):
            out.append(dumbbell_graph(k, rng, weighted))
        for _ in range(40):
            n = int(rng.integers(3, max_n + 1))
            G = erdos_renyi(n, rng, weighted)
            if G.m > 20:
                continue
            out.append(G)
            if G.m <= 18:
                out.append(with_parallel_copies(G, rng, 2, weighted))
    return [G for G in out if G.is_connected and G.m <= 20]


def medium_corpus(count, rng, n_range=(10, 40), weighted=None) -> list:
    """Random connected graphs for the identity and split suites."""
    out = []
    kinds = ["er", "er", "nm", "dumbbell", "cycle", "grid"]
    for i in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        w = bool(i % 2) if weighted is None else weighted
        kind = kinds[i % len(kinds)]
        if kind == "er":
            G = erdos_renyi(n, rng, w)
        elif kind == "nm":
            G = random_graph_nm(n, min(3 * n, n * (n - 1) // 2), rng, w)
        elif kind == "dumbbell":
            G = dumbbell_graph(max(2, n // 2), rng, w)
        elif kind == "cycle":
            G = with_parallel_copies(cycle_graph(n, rng, w), rng, 3, w)
        else:
            r = max(2, int(math.sqrt(n)))
            G = grid_graph(r, max(2, n // r), rng, w)
        out.append(G)
    return out


# ------------------------------------------------------------------- fixtures


def graph_sha(G: WeightedGraph) -> str:
    return hashlib.sha256(format_graph(G).encode()).hexdigest()[:16]


def load_fixtures(path) -> dict:
    """Read ``sha quantity value`` records."""
    out = {}
    p = Path(path)
    if not p.exists():
        return out
    for line in p.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        sha, quantity, value = line.split()
        out[(sha, quantity)] = float(value)
    return out


def write_fixtures(path, records: dict, header=None):
    lines = [f"# {header}"] if header else []
    for (sha, quantity), value in sorted(records.items()):
        lines.append(f"{sha} {quantity} {float(value)!r}")
    Path(path).write_text("\n".join(lines) + "\n")
