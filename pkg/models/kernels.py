"""
Kernel evaluation and Gram-matrix construction.

The intercept is absorbed by adding ``bias_offset`` (default 1) to every kernel
entry, which is the kernel of inputs augmented with a constant unit feature.
"""

from typing import Literal

import numpy as np
from numba import njit
from pydantic import BaseModel, ConfigDict, Field

from errors import DimensionError

_KINDS = {"linear": 0, "rbf": 1}


class KernelSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["linear", "rbf"] = "rbf"
    sigma: float = Field(1.0, gt=0)
    bias_offset: float = 1.0

    def label(self) -> str:
        if self.kind == "linear":
            return "linear"
        return f"rbf(sigma={self.sigma:g})"


@njit(cache=True, nogil=True)
def _entry_nb(x, y, kind, sigma, offset):
    acc = 0.0
    if kind == 0:
        for t in range(x.shape[0]):
            acc += x[t] * y[t]
        return acc + offset
    for t in range(x.shape[0]):
        d = x[t] - y[t]
        acc += d * d
    return np.exp(-sigma * acc) + offset


@njit(cache=True, nogil=True)
def _gram_sym_nb(X, kind, sigma, offset):
    """Symmetric Gram: each unordered pair evaluated once and mirrored."""
    n = X.shape[0]
    K = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            v = _entry_nb(X[i], X[j], kind, sigma, offset)
            K[i, j] = v
            K[j, i] = v
    return K


@njit(cache=True, nogil=True)
def _gram_rect_nb(X, Y, kind, sigma, offset):
    n = X.shape[0]
    m = Y.shape[0]
    K = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            K[i, j] = _entry_nb(X[i], Y[j], kind, sigma, offset)
    return K


def _as_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    return X.reshape(1, -1) if X.ndim == 1 else X


def kernel_value(x, x2, spec: KernelSpec) -> float:
    x = np.ascontiguousarray(x, dtype=np.float64).ravel()
    x2 = np.ascontiguousarray(x2, dtype=np.float64).ravel()
    if x.shape != x2.shape:
        raise DimensionError(f"kernel arguments differ in dimension: {x.size} vs {x2.size}")
    return float(_entry_nb(x, x2, _KINDS[spec.kind], spec.sigma, spec.bias_offset))


def gram(X, X2, spec: KernelSpec) -> np.ndarray:
    """n×m matrix of kernel values; exactly symmetric when ``X2 is X`` (or ``X2`` is None)."""
    X = _as_matrix(X)
    kind = _KINDS[spec.kind]
    if X2 is None or X2 is X:
        return _gram_sym_nb(X, kind, spec.sigma, spec.bias_offset)
    X2 = _as_matrix(X2)
    if X.shape[1] != X2.shape[1]:
        raise DimensionError(f"Gram operands differ in feature count: {X.shape[1]} vs {X2.shape[1]}")
    return _gram_rect_nb(X, X2, kind, spec.sigma, spec.bias_offset)


def signed_gram(K: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """G = D K D with D = diag(labels)."""
    y = np.asarray(labels, dtype=np.float64)
    return K * np.outer(y, y)
