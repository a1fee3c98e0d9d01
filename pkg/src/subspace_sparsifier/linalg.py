"""Laplacian and SDDM solvers, pseudoinverse forms and Schur complements.

Laplacian systems are solved by pinning vertex 0: the reduced matrix
``L[1:, 1:]`` is positive definite on a connected graph, and for ``b`` summing
to zero the pinned solution differs from ``L^+ b`` only by a multiple of the
all-ones vector, which is removed by centering.

Small systems use a sparse LU factorization that is cached on the graph.
Large ones use conjugate gradients with a Jacobi preconditioner.  Either way
the caller asks for a relative accuracy ``eps`` in the matrix norm and gets a
:class:`SolveReport` describing what was achieved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CapExceededError, GraphError, SolverError
from .graph import WeightedGraph

DIRECT_CAP = 5000
DENSE_CAP = 500
RESIDUAL_FLOOR = 1e-12
CG_MAXITER = 20000
# below this size, wide right-hand sides are served by an explicit inverse
DENSE_INVERSE_CAP = 1500


@dataclass(frozen=True)
class SolveReport:
    requested: float
    residual: float  # achieved ||Mx - b|| / ||b||
    mnorm_bound: float  # bound on ||x - x*||_M / ||x*||_M implied by residual
    iterations: int
    method: str  # "direct" or "iterative"
    clamped: bool = False  # requested accuracy below the residual floor


def condition_bound(G: WeightedGraph) -> float:
    """Crude upper bound n^3 w_max / w_min on the condition number of L_G."""
    n = max(G.n, 2)
    return float(n) ** 3 * G.w_max / G.w_min


class _PinnedSystem:
    """SPD matrix with a direct or CG back end, solving many right-hand sides."""

    def __init__(self, A: sp.csc_matrix, kappa: float, direct_cap=DIRECT_CAP):
        self.A = A.tocsc()
        self.kappa = kappa
        self.size = A.shape[0]
        self.direct = self.size <= direct_cap
        self._lu = None
        self._inv = None
        if self.direct and self.size:
            try:
                self._lu = spla.splu(self.A, permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise SolverError(f"factorization failed: {exc}") from None
        diag = self.A.diagonal()
        if np.any(diag <= 0):
            raise SolverError("nonpositive diagonal in SPD system")
        self._jacobi = spla.LinearOperator(self.A.shape, matvec=lambda x: x / diag,
                                           dtype=float)

    def solve(self, b: np.ndarray, eps: float):
        b = np.asarray(b, dtype=float)
        if self.size == 0:
            return np.zeros_like(b), SolveReport(eps, 0.0, 0.0, 0, "direct")
        target = eps / math.sqrt(self.kappa)
        clamped = target < RESIDUAL_FLOOR
        target = max(target, RESIDUAL_FLOOR)
        if self.direct:
            wide = b.ndim == 2 and b.shape[1] > self.size
            if wide and self.size <= DENSE_INVERSE_CAP:
                if self._inv is None:
                    inv = self._lu.solve(np.eye(self.size))
                    self._inv = (inv + inv.T) / 2
                x = self._inv @ b
            else:
                x = self._lu.solve(b)
            iters = 1
        else:
            cols = b.reshape(self.size, -1)
            x = np.empty_like(cols)
            iters = 0
            for j in range(cols.shape[1]):
                count = [0]

                def cb(_xk):
                    count[0] += 1

                xj, info = spla.cg(self.A, cols[:, j], rtol=target, atol=0.0,
                                   maxiter=CG_MAXITER, M=self._jacobi, callback=cb)
                if info > 0:
                    raise SolverError(f"CG did not converge in {CG_MAXITER} iterations")
                x[:, j] = xj
                iters = max(iters, count[0])
            x = x.reshape(b.shape)
        r = self.A @ x - b
        bnorm = np.linalg.norm(b)
        residual = float(np.linalg.norm(r) / bnorm) if bnorm > 0 else 0.0
        report = SolveReport(eps, residual, residual * math.sqrt(self.kappa), iters,
                             "direct" if self.direct else "iterative", clamped)
        return x, report


class LaplacianSolver:
    """Applies L_G^+ to vectors (or column stacks) orthogonal to all-ones."""

    def __init__(self, G: WeightedGraph, direct_cap=DIRECT_CAP):
        G.require_connected()
        self.graph = G
        L = G.laplacian
        self._system = _PinnedSystem(L[1:, 1:], condition_bound(G), direct_cap)

    @classmethod
    def for_graph(cls, G: WeightedGraph, direct_cap=DIRECT_CAP) -> "LaplacianSolver":
        return G.cached(("lapl_solver", direct_cap), lambda: cls(G, direct_cap))

    def solve(self, b, eps=1e-10):
        b = np.asarray(b, dtype=float)
        n = self.graph.n
        if b.shape[0] != n:
            raise GraphError(f"right-hand side has {b.shape[0]} rows, graph has {n}")
        scale = np.abs(b).sum(axis=0)
        if np.any(np.abs(b.sum(axis=0)) > 1e-9 * np.maximum(scale, 1.0)):
            raise GraphError("right-hand side is not orthogonal to all-ones")
        x = np.zeros_like(b)
        x[1:], report = self._system.solve(b[1:], eps)
        x -= x.mean(axis=0)
        return x, report


class SddmSolver:
    """Solver for the principal submatrix (L_G)_{T,T} with T = V minus S."""

    def __init__(self, G: WeightedGraph, T, direct_cap=DIRECT_CAP):
        G.require_connected()
        T = np.asarray(T, dtype=np.int64)
        if len(T) == 0:
            raise GraphError("empty eliminated set")
        if len(T) == G.n:
            raise GraphError("principal submatrix of the full Laplacian is singular")
        self.graph = G
        self.T = T
        L = G.laplacian
        self._system = _PinnedSystem(L[T][:, T], condition_bound(G), direct_cap)

    def solve(self, b, eps=1e-10):
        return self._system.solve(b, eps)


def lapl_solve(M, b, eps=1e-10, direct_cap=DIRECT_CAP):
    """Solve ``M x = b`` to relative M-norm accuracy ``eps``.

    ``M`` is either a :class:`WeightedGraph` (Laplacian mode, returns the
    centered pseudoinverse solution) or a sparse symmetric diagonally dominant
    matrix with positive definite structure (SDDM mode).
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    b = np.asarray(b, dtype=float)
    if isinstance(M, WeightedGraph):
        return LaplacianSolver.for_graph(M, direct_cap).solve(b, eps)
    M = sp.csc_matrix(M)
    kappa = float(M.shape[0]) ** 3 * max(1.0, abs(M).max()) / max(1e-300, min(1.0, M.diagonal().min()))
    return _PinnedSystem(M, kappa, direct_cap).solve(b, eps)


def pinv_quadform(G: WeightedGraph, x, y=None, eps=1e-10) -> float:
    """x^T L^+ y (y defaults to x)."""
    x = np.asarray(x, dtype=float)
    y = x if y is None else np.asarray(y, dtype=float)
    if not np.any(y):
        return 0.0
    z, _ = lapl_solve(G, y, eps)
    return float(x @ z)


def _vertex_split(G: WeightedGraph, S):
    S = np.array(sorted({int(s) for s in S}), dtype=np.int64)
    if len(S) == 0:
        raise GraphError("vertex set S is empty")
    if S[0] < 0 or S[-1] >= G.n:
        raise GraphError(f"vertex set has vertices outside [0, {G.n})")
    mask = np.ones(G.n, dtype=bool)
    mask[S] = False
    return S, np.flatnonzero(mask)


def schur_complement_dense(G: WeightedGraph, S, cap=DENSE_CAP) -> np.ndarray:
    """Dense SC(L_G, S) with rows and columns in ascending vertex order."""
    S, T = _vertex_split(G, S)
    if len(S) > cap:
        raise CapExceededError(f"|S| = {len(S)} exceeds dense cap {cap}")
    if len(T) == 0:
        raise GraphError("Schur complement onto all of V eliminates nothing")
    G.require_connected()
    L = G.laplacian
    L_ST = L[S][:, T]
    LTT = L[T][:, T].tocsc()
    X = spla.splu(LTT).solve(L_ST.T.toarray())
    SC = L[S][:, S].toarray() - L_ST @ X
    return (SC + SC.T) / 2


def apply_schur(G: WeightedGraph, S, b, eps=1e-10, direct_cap=DIRECT_CAP,
                with_report=False):
    """SC(L_G, S) b using one SDDM solve on (L_G)_{T,T}; columns allowed."""
    S, T = _vertex_split(G, S)
    if len(T) == 0:
        raise GraphError("Schur complement onto all of V eliminates nothing")
    b = np.asarray(b, dtype=float)
    L = G.laplacian
    key = ("sddm", tuple(T.tolist()), direct_cap)
    solver = G.cached(key, lambda: SddmSolver(G, T, direct_cap))
    L_ST = L[S][:, T]
    y, report = solver.solve(L_ST.T @ b, eps)
    out = L[S][:, S] @ b - L_ST @ y
    return (out, report) if with_report else out


class EigenBounds(NamedTuple):
    lambda2_lower: float
    lambda_max_upper: float
    trace_upper: float


def eigen_diagnostics(G: WeightedGraph) -> EigenBounds:
    """Coarse spectral bounds: lambda_2 >= w_min/n^2, lambda_max <= n w_max,
    trace(L^+) <= n^2 / w_min."""
    G.require_connected()
    n = G.n
    return EigenBounds(G.w_min / n**2, n * G.w_max, n**2 / G.w_min)


def pinv_dense(G: WeightedGraph, cap=DENSE_CAP) -> np.ndarray:
    """L_G^+ formed densely from the pinned inverse and a centering projection."""
    if G.n > cap:
        raise CapExceededError(f"n = {G.n} exceeds dense cap {cap}")
    G.require_connected()
    n = G.n
    X = np.zeros((n, n))
    if n > 1:
        X[1:, 1:] = np.linalg.inv(G.dense_laplacian()[1:, 1:])
    P = np.eye(n) - 1.0 / n
    out = P @ X @ P
    return (out + out.T) / 2


def leverage_exact(G: WeightedGraph, cap=DENSE_CAP) -> np.ndarray:
    """lev(e) = w_e b_e^T L^+ b_e for every edge, in storage order."""
    Lp = pinv_dense(G, cap)
    u, v = G.tails, G.heads
    reff = Lp[u, u] + Lp[v, v] - 2 * Lp[u, v]
    return G.weights * reff


def leverage_by_solves(G: WeightedGraph, eps=1e-10) -> np.ndarray:
    """Exact leverages through sparse solves, for graphs above the dense cap."""
    B = G.incidence
    X, _ = lapl_solve(G, B.T.toarray(), eps)
    reff = np.einsum("ij,ji->i", B.toarray(), X)
    return G.weights * reff
