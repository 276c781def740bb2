"""SVM kernels for embeddings and the inverse-mean-distance gamma rule.

LK   linear                       <x, y>
RK   RBF                          exp(-g ||x - y||^2)
ECK  exponential chi-square       exp(-g sum (x-y)^2 / (x+y))
CK   chi-square                   sum 2xy / (x+y)
IK   histogram intersection       sum min(x, y)
EHK  exponential Hellinger        exp(-g sum (sqrt x - sqrt y)^2)
HK   Hellinger                    sum sqrt(xy)

Chi-square terms with x_i + y_i = 0 contribute 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import _accel
from .errors import ConfigError, DegenerateDataError, DimensionError, DomainError, InputError

KINDS = ("LK", "RK", "ECK", "CK", "IK", "EHK", "HK")
GAMMA_KINDS = ("RK", "ECK", "EHK")
HISTOGRAM_KINDS = ("ECK", "CK", "IK", "EHK", "HK")


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    gamma: float | str | None = None

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in KINDS:
            raise ConfigError(f"unknown kernel {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        gamma = self.gamma
        if kind in GAMMA_KINDS:
            if gamma is None:
                gamma = "auto"
            if gamma != "auto":
                gamma = float(gamma)
                if not gamma > 0:
                    raise ConfigError("gamma must be positive")
        else:
            gamma = None
        object.__setattr__(self, "gamma", gamma)

    @property
    def needs_gamma(self) -> bool:
        return self.kind in GAMMA_KINDS

    @property
    def is_histogram(self) -> bool:
        return self.kind in HISTOGRAM_KINDS

    def resolved(self, X) -> "KernelSpec":
        """Replace ``gamma='auto'`` by the heuristic value on training data X."""
        if self.gamma == "auto":
            return KernelSpec(self.kind, gamma_heuristic(self.kind, X))
        return self

    def __str__(self):
        if self.gamma is None:
            return self.kind
        g = self.gamma if self.gamma == "auto" else repr(float(self.gamma))
        return f"{self.kind}(gamma={g})"


def _check_gamma(spec: KernelSpec) -> float:
    if spec.gamma == "auto":
        raise ConfigError(f"{spec.kind} gamma is 'auto'; resolve it on training data first")
    return float(spec.gamma) if spec.gamma is not None else 0.0


def _check_domain(spec: KernelSpec, *arrays):
    if spec.is_histogram:
        for a in arrays:
            if np.any(a < 0):
                raise DomainError(f"{spec.kind} needs non-negative inputs")


# -- scalar form --------------------------------------------------------------------

def _chi2_distance(x, y):
    s = x + y
    num = (x - y) ** 2
    return float(np.sum(np.divide(num, s, out=np.zeros_like(s), where=s > 0)))


def _chi2_similarity(x, y):
    s = x + y
    num = 2.0 * x * y
    return float(np.sum(np.divide(num, s, out=np.zeros_like(s), where=s > 0)))


def _hellinger_distance(x, y):
    return float(np.sum((np.sqrt(x) - np.sqrt(y)) ** 2))


def distance(kind: str, x, y) -> float:
    """The distance each gamma kernel exponentiates."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if kind == "RK":
        return float(np.sum((x - y) ** 2))
    if kind == "ECK":
        return _chi2_distance(x, y)
    if kind == "EHK":
        return _hellinger_distance(x, y)
    raise ConfigError(f"{kind} has no associated distance")


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch {x.shape} vs {y.shape}")
    _check_domain(spec, x, y)
    kind = spec.kind
    if kind == "LK":
        return float(np.dot(x, y))
    if kind == "CK":
        return _chi2_similarity(x, y)
    if kind == "IK":
        return float(np.sum(np.minimum(x, y)))
    if kind == "HK":
        return float(np.sum(np.sqrt(x * y)))
    return float(np.exp(-_check_gamma(spec) * distance(kind, x, y)))


# -- batch form -----------------------------------------------------------------------

@_accel.njit
def _pairwise_chi2_numba(X, Y, similarity):
    n, D = X.shape
    m = Y.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for d in range(D):
                s = X[i, d] + Y[j, d]
                if s > 0.0:
                    if similarity:
                        acc += 2.0 * X[i, d] * Y[j, d] / s
                    else:
                        diff = X[i, d] - Y[j, d]
                        acc += diff * diff / s
            out[i, j] = acc
    return out


@_accel.njit
def _pairwise_min_numba(X, Y):
    n, D = X.shape
    m = Y.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for d in range(D):
                acc += min(X[i, d], Y[j, d])
            out[i, j] = acc
    return out


def _row_chunks(n_rows, m, D):
    step = max(1, 2_000_000 // max(1, m * D))
    return range(0, n_rows, step), step


def _pairwise_chi2_numpy(X, Y, similarity):
    out = np.empty((X.shape[0], Y.shape[0]))
    starts, step = _row_chunks(X.shape[0], Y.shape[0], X.shape[1])
    for s in starts:
        a = X[s:s + step, None, :]
        b = Y[None, :, :]
        tot = a + b
        num = 2.0 * a * b if similarity else (a - b) ** 2
        out[s:s + step] = np.divide(num, tot, out=np.zeros_like(tot), where=tot > 0).sum(axis=2)
    return out


def _pairwise_min_numpy(X, Y):
    out = np.empty((X.shape[0], Y.shape[0]))
    starts, step = _row_chunks(X.shape[0], Y.shape[0], X.shape[1])
    for s in starts:
        out[s:s + step] = np.minimum(X[s:s + step, None, :], Y[None, :, :]).sum(axis=2)
    return out


def pairwise_chi2(X, Y, similarity=False):
    if _accel.use_numba():
        return _pairwise_chi2_numba(X, Y, similarity)
    return _pairwise_chi2_numpy(X, Y, similarity)


def pairwise_min(X, Y):
    if _accel.use_numba():
        return _pairwise_min_numba(X, Y)
    return _pairwise_min_numpy(X, Y)


def pairwise_distance(kind: str, X, Y) -> np.ndarray:
    if kind == "RK":
        return cdist(X, Y, "sqeuclidean")
    if kind == "ECK":
        return pairwise_chi2(X, Y, similarity=False)
    if kind == "EHK":
        return cdist(np.sqrt(X), np.sqrt(Y), "sqeuclidean")
    raise ConfigError(f"{kind} has no associated distance")


def _as_matrix(A):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if not np.all(np.isfinite(A)):
        raise InputError("kernel inputs must be finite")
    return np.ascontiguousarray(A)


def gram(spec: KernelSpec, X, Y=None) -> np.ndarray:
    """G[i, j] = K(X[i], Y[j]); exactly symmetric when Y is omitted."""
    symmetric = Y is None
    X = _as_matrix(X)
    Y = X if symmetric else _as_matrix(Y)
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"dimension mismatch {X.shape[1]} vs {Y.shape[1]}")
    _check_domain(spec, X, Y)
    kind = spec.kind
    if kind == "LK":
        G = X @ Y.T
    elif kind == "CK":
        G = pairwise_chi2(X, Y, similarity=True)
    elif kind == "IK":
        G = pairwise_min(X, Y)
    elif kind == "HK":
        G = np.sqrt(X) @ np.sqrt(Y).T
    else:
        gamma = _check_gamma(spec)
        dist = pairwise_distance(kind, X, Y)
        if symmetric:
            np.fill_diagonal(dist, 0.0)
        G = np.exp(-gamma * dist)
    if symmetric:
        G = np.triu(G) + np.triu(G, 1).T
    return G


def gamma_heuristic(kind: str, X) -> float:
    """1 / mean distance over unordered pairs of non-identical training points.

    Pairs at distance exactly zero (duplicate points) are left out, so
    replicating a data set does not change gamma.
    """
    kind = str(kind).upper()
    X = _as_matrix(X)
    if X.shape[0] < 2:
        raise DegenerateDataError("gamma heuristic needs at least two points")
    if kind in HISTOGRAM_KINDS and np.any(X < 0):
        raise DomainError(f"{kind} needs non-negative inputs")
    dist = pairwise_distance(kind, X, X)
    iu = np.triu_indices(X.shape[0], k=1)
    d = dist[iu]
    d = d[d > 0]
    if d.size == 0 or not d.mean() > 0:
        raise DegenerateDataError("all points identical; mean distance is zero")
    return float(1.0 / d.mean())
