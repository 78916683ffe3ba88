"""
QP Engine – box-constrained convex quadratic programs

    min ½ uᵀHu − qᵀu   s.t.  lo ≤ u ≤ hi

solved by clipping dual coordinate descent (clipDCD) with greedy
maximal-decrease coordinate selection, plus a projected-gradient oracle used
by the test-suite and the ``verify`` command.

H is either a dense matrix or a ``BlockOperator`` (H = S ⊗ G + diag(extra))
assembled from a Gram matrix; both go through the same compiled kernel and
produce bit-identical iterates.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from errors import SolverError

logger = logging.getLogger(__name__)


# ── Problem / solution types ────────────────────────────────────────────────

@dataclass(frozen=True)
class BlockOperator:
    """H = kron(S, G) + diag(extra) without materialising the (m·n)×(m·n) matrix."""

    S: np.ndarray
    G: np.ndarray
    extra: np.ndarray

    def __post_init__(self):
        S = np.ascontiguousarray(self.S, dtype=np.float64)
        G = np.ascontiguousarray(self.G, dtype=np.float64)
        extra = np.ascontiguousarray(self.extra, dtype=np.float64).ravel()
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise SolverError(f"block pattern must be square, got {S.shape}")
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise SolverError(f"Gram block must be square, got {G.shape}")
        if extra.size != S.shape[0] * G.shape[0]:
            raise SolverError(f"diagonal correction has {extra.size} entries, expected {S.shape[0] * G.shape[0]}")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "extra", extra)

    @property
    def dim(self) -> int:
        return self.S.shape[0] * self.G.shape[0]

    def diagonal(self) -> np.ndarray:
        return _block_diagonal_nb(self.S, self.G, self.extra)

    def dense(self) -> np.ndarray:
        H = np.kron(self.S, self.G)
        H[np.diag_indices_from(H)] += self.extra
        return H

    def matvec(self, u: np.ndarray) -> np.ndarray:
        m, n = self.S.shape[0], self.G.shape[0]
        U = np.asarray(u, dtype=np.float64).reshape(m, n)
        return (self.S @ (U @ self.G.T)).ravel() + self.extra * u


@dataclass(frozen=True)
class QpProblem:
    H: np.ndarray | BlockOperator
    q: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        q = np.ascontiguousarray(self.q, dtype=np.float64).ravel()
        d = q.size
        lo = np.ascontiguousarray(np.broadcast_to(np.asarray(self.lo, dtype=np.float64), (d,)))
        hi = np.ascontiguousarray(np.broadcast_to(np.asarray(self.hi, dtype=np.float64), (d,)))
        H = self.H
        if not isinstance(H, BlockOperator):
            H = np.ascontiguousarray(H, dtype=np.float64)
            if H.shape != (d, d):
                raise SolverError(f"H has shape {H.shape}, expected {(d, d)}")
        elif H.dim != d:
            raise SolverError(f"operator dimension {H.dim} does not match q length {d}")
        if np.any(lo > hi):
            raise SolverError("box lower bound exceeds upper bound")
        if not np.all(np.isfinite(q)):
            raise SolverError("non-finite entries in q")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.q.size

    def diagonal(self) -> np.ndarray:
        if isinstance(self.H, BlockOperator):
            return self.H.diagonal()
        return np.ascontiguousarray(np.diag(self.H))

    def dense(self) -> np.ndarray:
        return self.H.dense() if isinstance(self.H, BlockOperator) else self.H

    def matvec(self, u: np.ndarray) -> np.ndarray:
        return self.H.matvec(u) if isinstance(self.H, BlockOperator) else self.H @ u

    def objective(self, u: np.ndarray) -> float:
        return float(0.5 * u @ self.matvec(u) - self.q @ u)

    def kkt_residual(self, u: np.ndarray) -> float:
        """Infinity norm of the projected gradient step clip(u − ∇, lo, hi) − u."""
        g = self.matvec(u) - self.q
        return float(np.max(np.abs(np.clip(u - g, self.lo, self.hi) - u), initial=0.0))


@dataclass(frozen=True)
class QpSolution:
    u: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    seconds: float = 0.0


# ── Compiled kernels ────────────────────────────────────────────────────────

@njit(cache=True, nogil=True)
def _block_diagonal_nb(S, G, extra):
    m = S.shape[0]
    n = G.shape[0]
    out = np.empty(m * n)
    for b in range(m):
        for r in range(n):
            out[b * n + r] = S[b, b] * G[r, r] + extra[b * n + r]
    return out


@njit(cache=True, nogil=True)
def _column_nb(j, dense, H, S, G, extra, col):
    """Fill ``col`` with column j of H."""
    d = col.shape[0]
    if dense:
        for i in range(d):
            col[i] = H[i, j]
        return
    n = G.shape[0]
    bj = j // n
    jj = j - bj * n
    for bi in range(S.shape[0]):
        s = S[bi, bj]
        for r in range(n):
            col[bi * n + r] = s * G[r, jj]
    col[j] = col[j] + extra[j]


@njit(cache=True, nogil=True)
def _clipdcd_nb(dense, H, S, G, extra, q, lo, hi, u, diag, tol, max_iter):
    d = q.shape[0]
    col = np.empty(d)
    grad = np.empty(d)
    for i in range(d):
        grad[i] = -q[i]
    for j in range(d):
        if u[j] != 0.0:
            _column_nb(j, dense, H, S, G, extra, col)
            uj = u[j]
            for i in range(d):
                grad[i] += uj * col[i]

    it = 0
    pg_max = 0.0
    while True:
        best = -1
        best_gain = 0.0
        best_value = 0.0
        pg_max = 0.0
        for i in range(d):
            g = grad[i]
            t = u[i] - g
            if t < lo[i]:
                t = lo[i]
            elif t > hi[i]:
                t = hi[i]
            pg = abs(t - u[i])
            if pg > pg_max:
                pg_max = pg
            v = u[i] - g / diag[i]
            if v < lo[i]:
                v = lo[i]
            elif v > hi[i]:
                v = hi[i]
            step = v - u[i]
            if step != 0.0:
                gain = -step * g - 0.5 * diag[i] * step * step
                if gain > best_gain:
                    best_gain = gain
                    best = i
                    best_value = v
        if pg_max <= tol or best < 0 or it >= max_iter:
            break
        step = best_value - u[best]
        u[best] = best_value
        _column_nb(best, dense, H, S, G, extra, col)
        for i in range(d):
            grad[i] += step * col[i]
        it += 1
    return it, pg_max, grad


@njit(cache=True, nogil=True)
def _projected_gradient_nb(H, q, lo, hi, u, step, tol, max_iter):
    d = q.shape[0]
    it = 0
    res = 0.0
    while True:
        g = H @ u - q
        res = 0.0
        for i in range(d):
            t = u[i] - g[i]
            if t < lo[i]:
                t = lo[i]
            elif t > hi[i]:
                t = hi[i]
            r = abs(t - u[i])
            if r > res:
                res = r
        if res <= tol or it >= max_iter:
            break
        for i in range(d):
            v = u[i] - step * g[i]
            if v < lo[i]:
                v = lo[i]
            elif v > hi[i]:
                v = hi[i]
            u[i] = v
        it += 1
    return it, res


# ── Public API ──────────────────────────────────────────────────────────────

_EMPTY2 = np.zeros((1, 1))
_EMPTY1 = np.zeros(1)


def clipdcd_solve(prob: QpProblem, tol: float = 1e-6, max_iter: int | None = None,
                  u0: np.ndarray | None = None) -> QpSolution:
    """Greedy clipped coordinate descent; ``u0`` (clipped into the box) warm-starts the iterate."""
    d = prob.dim
    diag = prob.diagonal()
    bad = np.flatnonzero(~(np.isfinite(diag) & (diag > 0)))
    if bad.size:
        raise SolverError(f"H diagonal must be finite and strictly positive (entry {int(bad[0])} = {diag[bad[0]]})")
    if max_iter is None:
        max_iter = 50 * d

    u = np.zeros(d) if u0 is None else np.array(u0, dtype=np.float64).ravel()
    if u.size != d:
        raise SolverError(f"warm start has {u.size} entries, expected {d}")
    u = np.ascontiguousarray(np.clip(u, prob.lo, prob.hi))

    if isinstance(prob.H, BlockOperator):
        args = (False, _EMPTY2, prob.H.S, prob.H.G, prob.H.extra)
    else:
        args = (True, prob.H, _EMPTY2, _EMPTY2, _EMPTY1)

    t0 = time.perf_counter()
    iterations, residual, grad = _clipdcd_nb(*args, prob.q, prob.lo, prob.hi, u, diag, float(tol), int(max_iter))
    elapsed = time.perf_counter() - t0

    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(grad))):
        raise SolverError("non-finite arithmetic in clipDCD iterate")
    converged = residual <= tol
    if not converged:
        logger.warning("[CLIPDCD] stopped at max_iter=%d with KKT residual %.3e (tol %.1e)",
                       max_iter, residual, tol)
    objective = float(0.5 * u @ grad - 0.5 * prob.q @ u)
    return QpSolution(u, objective, float(residual), int(iterations), bool(converged), elapsed)


def qp_oracle(prob: QpProblem, tol: float = 1e-9, max_iter: int = 200_000) -> QpSolution:
    """Projected gradient descent with step 1/L (L = largest eigenvalue of H); for verification only."""
    H = np.ascontiguousarray(prob.dense())
    if not np.all(np.isfinite(H)):
        raise SolverError("non-finite entries in H")
    L = float(np.linalg.eigvalsh(H)[-1])
    if L <= 0:
        raise SolverError("H has no positive eigenvalue")
    u = np.ascontiguousarray(np.clip(np.zeros(prob.dim), prob.lo, prob.hi))
    t0 = time.perf_counter()
    iterations, residual = _projected_gradient_nb(H, prob.q, prob.lo, prob.hi, u, 1.0 / L, float(tol), int(max_iter))
    elapsed = time.perf_counter() - t0
    if not np.all(np.isfinite(u)):
        raise SolverError("non-finite arithmetic in projected-gradient iterate")
    converged = residual <= tol
    if not converged:
        logger.warning("[ORACLE] stopped at max_iter=%d with residual %.3e", max_iter, residual)
    return QpSolution(u, prob.objective(u), float(residual), int(iterations), bool(converged), elapsed)
