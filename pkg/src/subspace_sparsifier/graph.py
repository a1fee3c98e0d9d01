"""Weighted multigraphs with stable edge ids and minor surgeries.

A :class:`WeightedGraph` is an immutable value.  Every surgery (deletion,
contraction, reweighting, identification of a vertex set) returns a new graph
that remembers its lineage: the contraction map ``phi`` from the vertices of
the lineage root to the current vertices, and the ordered log of operations
that produced it.  Replaying that log on the root reproduces the graph
exactly, which is what makes the log a minor certificate.

Vertices are always labelled ``0..n-1``.  After vertices are merged, a class
of root vertices is labelled by the rank of its smallest member, so labels
never depend on the order in which merges were performed.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DisconnectedGraphError, GraphError, ParseError, UnknownEdgeError


@dataclass(frozen=True)
class Delete:
    edge: int


@dataclass(frozen=True)
class Contract:
    edge: int


@dataclass(frozen=True)
class Reweight:
    edge: int
    old: float
    new: float


@dataclass(frozen=True)
class Identify:
    # labels of the graph the op was applied to
    vertices: tuple


Op = Delete | Contract | Reweight | Identify


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


class WeightedGraph:
    """Undirected weighted multigraph without self-loops.

    Edge ``i`` (in storage order) joins ``tails[i]`` and ``heads[i]`` with
    weight ``weights[i]`` and carries the stable id ``edge_ids[i]``.  Storage
    order is ascending edge id.  Orientation is arbitrary but fixed; it
    defines the rows of the incidence matrix.
    """

    def __init__(self, n, edge_ids, tails, heads, weights, phi=None,
                 op_log=(), origin=None):
        self._n = int(n)
        self._ids = _frozen(edge_ids, np.int64)
        self._tails = _frozen(tails, np.int64)
        self._heads = _frozen(heads, np.int64)
        self._weights = _frozen(weights, np.float64)
        m = len(self._ids)
        if not (len(self._tails) == len(self._heads) == len(self._weights) == m):
            raise GraphError("edge arrays have inconsistent lengths")
        if self._n < 0:
            raise GraphError("negative vertex count")
        if m:
            if self._tails.min() < 0 or self._heads.min() < 0 or \
                    max(self._tails.max(), self._heads.max()) >= self._n:
                raise GraphError("edge endpoint outside [0, n)")
            if np.any(self._tails == self._heads):
                raise GraphError("self-loops are never stored")
            if not np.all(np.isfinite(self._weights)) or np.any(self._weights <= 0):
                raise GraphError("edge weights must be positive and finite")
            if np.any(np.diff(self._ids) <= 0):
                raise GraphError("edge ids must be unique and ascending")
        self._phi = _frozen(np.arange(self._n) if phi is None else phi, np.int64)
        self._op_log = tuple(op_log)
        self._origin = origin
        self._cache_lock = threading.Lock()
        self._cache = {}

    # ------------------------------------------------------------------ basics

    @property
    def n(self) -> int:
        return self._n

    @property
    def m(self) -> int:
        return len(self._ids)

    @property
    def edge_ids(self) -> np.ndarray:
        return self._ids

    @property
    def tails(self) -> np.ndarray:
        return self._tails

    @property
    def heads(self) -> np.ndarray:
        return self._heads

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @cached_property
    def resistances(self) -> np.ndarray:
        r = 1.0 / self._weights
        r.setflags(write=False)
        return r

    @property
    def phi(self) -> np.ndarray:
        """Map from root vertices to vertices of this graph."""
        return self._phi

    @property
    def op_log(self) -> tuple:
        return self._op_log

    @property
    def origin(self) -> "WeightedGraph":
        """Root of the lineage (the graph itself for a root)."""
        return self if self._origin is None else self._origin

    @property
    def is_root(self) -> bool:
        return self._origin is None

    @cached_property
    def _index(self) -> dict:
        return {int(e): i for i, e in enumerate(self._ids)}

    def index_of(self, e) -> int:
        try:
            return self._index[int(e)]
        except KeyError:
            raise UnknownEdgeError(f"unknown edge id {e}") from None

    def has_edge(self, e) -> bool:
        return int(e) in self._index

    def endpoints(self, e) -> tuple:
        i = self.index_of(e)
        return int(self._tails[i]), int(self._heads[i])

    def weight(self, e) -> float:
        return float(self._weights[self.index_of(e)])

    def edges(self):
        """Iterate ``(edge_id, u, v, w)`` in ascending id order."""
        for e, u, v, w in zip(self._ids, self._tails, self._heads, self._weights):
            yield int(e), int(u), int(v), float(w)

    def edge_list(self) -> list:
        return [(u, v, w) for _, u, v, w in self.edges()]

    def __repr__(self):
        return f"WeightedGraph(n={self.n}, m={self.m})"

    # ------------------------------------------------------------ derived data

    def cached(self, key, build):
        """Build-once cache for derived objects such as factorizations.

        Concurrent first use may build twice; only one result is kept.
        """
        try:
            return self._cache[key]
        except KeyError:
            pass
        value = build()
        with self._cache_lock:
            return self._cache.setdefault(key, value)

    @cached_property
    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        adj = sp.coo_matrix((np.ones(self.m), (self._tails, self._heads)),
                            shape=(self.n, self.n))
        ncomp, _ = connected_components(adj, directed=False)
        return ncomp == 1

    def require_connected(self):
        if not self.is_connected:
            raise DisconnectedGraphError(
                f"graph with n={self.n}, m={self.m} is disconnected")

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Signed incidence matrix B (m x n): +1 at the head, -1 at the tail."""
        rows = np.repeat(np.arange(self.m), 2)
        cols = np.column_stack([self._heads, self._tails]).ravel()
        vals = np.tile([1.0, -1.0], self.m)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.m, self.n))

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        B = self.incidence
        L = (B.T @ sp.diags(self._weights) @ B).tocsr()
        L.sort_indices()
        return L

    def dense_laplacian(self) -> np.ndarray:
        return self.laplacian.toarray()

    @property
    def w_max(self) -> float:
        """max(1, max_e w_e), the normalisation used by the error bounds."""
        return max(1.0, float(self._weights.max())) if self.m else 1.0

    @property
    def w_min(self) -> float:
        return min(1.0, float(self._weights.min())) if self.m else 1.0

    def edge_vectors(self, ids) -> np.ndarray:
        """Columns b_e (n x len(ids)) for the given edge ids."""
        idx = np.array([self.index_of(e) for e in ids], dtype=np.int64)
        out = np.zeros((self.n, len(idx)))
        out[self._heads[idx], np.arange(len(idx))] += 1.0
        out[self._tails[idx], np.arange(len(idx))] -= 1.0
        return out

    def project(self, x) -> np.ndarray:
        """Push a root vector (or root x k matrix) through phi: x_H = P x."""
        x = np.asarray(x, dtype=float)
        root_n = len(self._phi)
        if x.shape[0] != root_n:
            raise GraphError(f"vector has {x.shape[0]} entries, root has {root_n}")
        out = np.zeros((self.n,) + x.shape[1:])
        np.add.at(out, self._phi, x)
        return out

    # ------------------------------------------------------------- surgeries

    def as_root(self) -> "WeightedGraph":
        """Same graph, starting a fresh lineage (identity phi, empty log)."""
        return WeightedGraph(self.n, self._ids, self._tails, self._heads, self._weights)

    def delete_edge(self, e) -> "WeightedGraph":
        return self.apply_ops([Delete(int(e))])

    def contract_edge(self, e) -> "WeightedGraph":
        return self.apply_ops([Contract(int(e))])

    def reweight_edge(self, e, weight) -> "WeightedGraph":
        return self.apply_ops([Reweight(int(e), self.weight(e), float(weight))])

    def identify_vertices(self, S) -> "WeightedGraph":
        S = tuple(sorted({int(s) for s in S}))
        if not S:
            raise GraphError("cannot identify an empty vertex set")
        if S[0] < 0 or S[-1] >= self.n:
            raise GraphError(f"vertex set contains vertices outside [0, {self.n})")
        return self.apply_ops([Identify(S)])

    def apply_ops(self, ops: Iterable) -> "WeightedGraph":
        """Apply a sequence of surgeries with sequential semantics.

        Equivalent to applying the ops one at a time, but relabels only once.
        An op naming an edge that no longer exists (deleted, or dropped as a
        self-loop by an earlier merge) raises :class:`UnknownEdgeError`.
        """
        ops = list(ops)
        n = self.n
        parent = np.arange(n)

        def find(x):
            root = x
            while parent[root] != root:
                root = parent[root]
            while parent[x] != root:
                parent[x], x = root, parent[x]
            return root

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                # keep the smaller label as representative
                if rb < ra:
                    ra, rb = rb, ra
                parent[rb] = ra

        alive = np.ones(self.m, dtype=bool)
        weights = self._weights.copy()

        def live_index(e):
            i = self.index_of(e)
            if not alive[i] or find(self._tails[i]) == find(self._heads[i]):
                raise UnknownEdgeError(f"edge {e} no longer exists")
            return i

        for op in ops:
            if isinstance(op, Delete):
                alive[live_index(op.edge)] = False
            elif isinstance(op, Contract):
                i = live_index(op.edge)
                union(self._tails[i], self._heads[i])
                alive[i] = False
            elif isinstance(op, Reweight):
                if not (np.isfinite(op.new) and op.new > 0):
                    raise GraphError("reweight needs a positive finite weight")
                weights[live_index(op.edge)] = op.new
            elif isinstance(op, Identify):
                reps = sorted({find(v) for v in range(n)})
                if not op.vertices:
                    raise GraphError("cannot identify an empty vertex set")
                if min(op.vertices) < 0 or max(op.vertices) >= len(reps):
                    raise GraphError("identify names a vertex that does not exist")
                first = reps[op.vertices[0]]
                for v in op.vertices[1:]:
                    union(first, reps[v])
            else:
                raise GraphError(f"unknown op {op!r}")

        roots = np.array([find(v) for v in range(n)], dtype=np.int64)
        uniq = np.unique(roots)
        relabel = np.full(n, -1, dtype=np.int64)
        relabel[uniq] = np.arange(len(uniq))
        new_label = relabel[roots]
        t = new_label[self._tails]
        h = new_label[self._heads]
        keep = alive & (t != h)
        origin = self.origin
        return WeightedGraph(len(uniq), self._ids[keep], t[keep], h[keep], weights[keep],
                             phi=new_label[self._phi], op_log=self._op_log + tuple(ops),
                             origin=origin)

    @property
    def certificate(self) -> "MinorCertificate":
        return MinorCertificate(self.origin, self._phi, self._op_log)

    def same_as(self, other: "WeightedGraph", rtol=0.0, check_phi=True) -> bool:
        """Equal vertex count and partition, edge ids, endpoints and weights."""
        if self.n != other.n or self.m != other.m:
            return False
        if check_phi and not np.array_equal(self._phi, other.phi):
            return False
        if not np.array_equal(self._ids, other.edge_ids):
            return False
        a = np.sort(np.column_stack([self._tails, self._heads]), axis=1)
        b = np.sort(np.column_stack([other.tails, other.heads]), axis=1)
        if not np.array_equal(a, b):
            return False
        if rtol == 0.0:
            return np.array_equal(self._weights, other.weights)
        return np.allclose(self._weights, other.weights, rtol=rtol, atol=0.0)


@dataclass(frozen=True)
class MinorCertificate:
    """Contraction map and op log proving a graph is a reweighted minor."""

    source: WeightedGraph
    phi: np.ndarray
    ops: tuple

    def replay(self) -> WeightedGraph:
        return self.source.apply_ops(self.ops)

    def verify(self, graph: WeightedGraph) -> bool:
        return self.replay().same_as(graph)

    def projection(self) -> sp.csr_matrix:
        """P with P[u, v] = 1 iff u = phi(v)."""
        n_src = len(self.phi)
        n_out = int(self.phi.max()) + 1 if n_src else 0
        return sp.csr_matrix((np.ones(n_src), (self.phi, np.arange(n_src))),
                             shape=(n_out, n_src))


# ---------------------------------------------------------------- construction


def build_graph(edge_list: Sequence, n=None, edge_ids=None) -> WeightedGraph:
    """Build a root graph from ``(u, v, w)`` triples.

    Edge ids default to positions in ``edge_list``; self-loops are dropped but
    still consume their id so ids line up with input lines.
    """
    edges = [tuple(e) for e in edge_list]
    if edge_ids is None:
        edge_ids = range(len(edges))
    edge_ids = list(edge_ids)
    if len(edge_ids) != len(edges):
        raise GraphError("edge_ids and edge_list differ in length")
    max_v = -1
    for e in edges:
        if len(e) != 3:
            raise GraphError(f"edge {e!r} is not a (u, v, w) triple")
        u, v, w = e
        if int(u) != u or int(v) != v or u < 0 or v < 0:
            raise GraphError(f"vertex ids must be non-negative integers: {e!r}")
        w = float(w)
        if not np.isfinite(w) or w <= 0:
            raise GraphError(f"edge {e!r} has nonpositive or non-finite weight")
        max_v = max(max_v, int(u), int(v))
    if n is None:
        n = max_v + 1
    elif max_v >= n:
        raise GraphError(f"vertex id {max_v} outside [0, {n})")
    kept = [(i, int(u), int(v), float(w)) for i, (u, v, w) in zip(edge_ids, edges) if u != v]
    kept.sort(key=lambda t: t[0])
    if kept:
        ids, tails, heads, weights = map(list, zip(*kept))
    else:
        ids, tails, heads, weights = [], [], [], []
    return WeightedGraph(n, ids, tails, heads, weights)


def graph_from_laplacian(L, tol=1e-12) -> WeightedGraph:
    """Graph whose Laplacian is the dense symmetric matrix ``L``.

    Off-diagonal entries with magnitude below ``tol * max|L|`` are dropped.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    w = -L[iu, ju]
    scale = np.abs(L).max() if L.size else 0.0
    keep = w > tol * scale
    return build_graph(list(zip(iu[keep], ju[keep], w[keep])), n=n)


# -------------------------------------------------------------------- text io


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def parse_graph(text: str, path=None) -> WeightedGraph:
    """Parse the ``n m`` / ``u v w`` text format (``#`` starts a comment)."""
    header = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        parts = line.split()
        if header is None:
            if len(parts) != 2:
                raise ParseError("header must be 'n m'", path, lineno)
            try:
                header = (int(parts[0]), int(parts[1]))
            except ValueError:
                raise ParseError(f"bad header {line!r}", path, lineno) from None
            if header[0] < 0 or header[1] < 0:
                raise ParseError("negative n or m", path, lineno)
            continue
        if len(parts) != 3:
            raise ParseError(f"edge line must be 'u v w', got {line!r}", path, lineno)
        try:
            u, v, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"cannot parse edge {line!r}", path, lineno) from None
        if u < 0 or v < 0 or u >= header[0] or v >= header[0]:
            raise ParseError(f"vertex outside [0, {header[0]})", path, lineno)
        if not np.isfinite(w) or w <= 0:
            raise ParseError(f"nonpositive or non-finite weight {parts[2]}", path, lineno)
        edges.append((u, v, w))
    if header is None:
        raise ParseError("empty graph file", path)
    if len(edges) != header[1]:
        raise ParseError(f"header announces {header[1]} edges, found {len(edges)}", path)
    return build_graph(edges, n=header[0])


def read_graph(path) -> WeightedGraph:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(str(exc), path) from None
    return parse_graph(text, path=path)


def format_graph(G: WeightedGraph) -> str:
    lines = [f"{G.n} {G.m}"]
    lines += [f"{u} {v} {w!r}" for _, u, v, w in G.edges()]
    return "\n".join(lines) + "\n"


def write_graph(G: WeightedGraph, path):
    Path(path).write_text(format_graph(G))


def format_certificate(G: WeightedGraph) -> str:
    """Text form of ``G.certificate``: vertex map, survivors, then the op log."""
    lines = ["# minor certificate", f"source {len(G.phi)} {G.origin.m}"]
    lines.append("phi " + " ".join(str(int(p)) for p in G.phi))
    lines.append("survivors " + " ".join(str(int(e)) for e in G.edge_ids))
    for op in G.op_log:
        if isinstance(op, Delete):
            lines.append(f"delete {op.edge}")
        elif isinstance(op, Contract):
            lines.append(f"contract {op.edge}")
        elif isinstance(op, Reweight):
            lines.append(f"reweight {op.edge} {op.old!r} {op.new!r}")
        else:
            lines.append("identify " + " ".join(str(v) for v in op.vertices))
    return "\n".join(lines) + "\n"


def parse_certificate(text: str, path=None) -> dict:
    """Parse :func:`format_certificate` output into ``phi``, ``survivors``, ``ops``."""
    out = {"phi": None, "survivors": None, "ops": [], "source": None}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        key, *rest = line.split()
        try:
            if key == "source":
                out["source"] = (int(rest[0]), int(rest[1]))
            elif key == "phi":
                out["phi"] = np.array([int(x) for x in rest], dtype=np.int64)
            elif key == "survivors":
                out["survivors"] = [int(x) for x in rest]
            elif key == "delete":
                out["ops"].append(Delete(int(rest[0])))
            elif key == "contract":
                out["ops"].append(Contract(int(rest[0])))
            elif key == "reweight":
                out["ops"].append(Reweight(int(rest[0]), float(rest[1]), float(rest[2])))
            elif key == "identify":
                out["ops"].append(Identify(tuple(int(x) for x in rest)))
            else:
                raise ParseError(f"unknown certificate record {key!r}", path, lineno)
        except (ValueError, IndexError):
            raise ParseError(f"malformed certificate record {line!r}", path, lineno) from None
    if out["phi"] is None or out["survivors"] is None:
        raise ParseError("certificate lacks phi or survivors", path)
    return out


def replay_certificate(source: WeightedGraph, cert: dict) -> WeightedGraph:
    return source.as_root().apply_ops(cert["ops"])


def read_vertex_set(path) -> list:
    """Whitespace-separated vertex ids, ``#`` comments allowed."""
    path = Path(path)
    out = []
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(str(exc), path) from None
    for lineno, raw in enumerate(lines, start=1):
        for tok in _strip(raw).split():
            try:
                out.append(int(tok))
            except ValueError:
                raise ParseError(f"bad vertex id {tok!r}", path, lineno) from None
    return out


def read_pairs(path) -> list:
    path = Path(path)
    pairs = []
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(str(exc), path) from None
    for lineno, raw in enumerate(lines, start=1):
        line = _strip(raw)
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"pair line must be 'u v', got {line!r}", path, lineno)
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParseError(f"cannot parse pair {line!r}", path, lineno) from None
    return pairs
