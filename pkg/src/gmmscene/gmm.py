"""Diagonal-covariance Gaussian mixtures: EM training, posteriors, likelihood."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import _accel
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    InsufficientDataError,
    ParseError,
)

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
MIN_WEIGHT = 1e-12


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 100
    rel_tol: float = 1e-5
    var_floor: float = 1e-3
    seed: int = 0
    init: str = "kmeans++"
    init_subsample: int = 20000
    kmeans_iters: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ConfigError("rel_tol must be positive")
        if not self.var_floor > 0:
            raise ConfigError("var_floor must be positive")
        if self.init not in ("kmeans++", "random-subset"):
            raise ConfigError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class DiagGmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    var_floor: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        var = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        floor = np.asarray(self.var_floor, dtype=np.float64)
        if floor.ndim == 0:
            floor = np.full(mu.shape[1], float(floor))
        if w.shape != (mu.shape[0],) or var.shape != mu.shape or floor.shape != (mu.shape[1],):
            raise DimensionError("inconsistent GMM parameter shapes")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(var))):
            raise DataError("GMM parameters must be finite")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DataError("weights must be positive and sum to 1")
        if np.any(var <= 0):
            raise DataError("variances must be positive")
        for name, arr in (("weights", w), ("means", mu), ("variances", var), ("var_floor", floor)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


# -- log-density kernels ---------------------------------------------------------

@_accel.njit
def _log_gauss_numba(X, means, inv_var, log_norm):
    T, D = X.shape
    M = means.shape[0]
    out = np.empty((T, M))
    for t in range(T):
        for k in range(M):
            acc = 0.0
            for d in range(D):
                diff = X[t, d] - means[k, d]
                acc += diff * diff * inv_var[k, d]
            out[t, k] = log_norm[k] - 0.5 * acc
    return out


def _log_gauss_numpy(X, means, inv_var, log_norm):
    T, D = X.shape
    M = means.shape[0]
    out = np.empty((T, M))
    step = max(1, 4_000_000 // max(1, M * D))
    for s in range(0, T, step):
        diff = X[s:s + step, None, :] - means[None, :, :]
        out[s:s + step] = log_norm[None, :] - 0.5 * np.einsum("tkd,kd->tk", diff * diff, inv_var)
    return out


def component_log_densities(g: DiagGmm, X: np.ndarray) -> np.ndarray:
    """log N(x_t; mu_k, diag(var_k)) for every frame and component, shape (T, M)."""
    X = _as_data(X, g.dim)
    inv_var = 1.0 / g.variances
    log_norm = -0.5 * (g.dim * LOG_2PI + np.sum(np.log(g.variances), axis=1))
    if _accel.use_numba():
        return _log_gauss_numba(X, np.ascontiguousarray(g.means), inv_var, log_norm)
    return _log_gauss_numpy(X, g.means, inv_var, log_norm)


def _as_data(X, dim=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.ndim != 2:
        raise DimensionError("data must be a vector or a 2-D array")
    if dim is not None and X.shape[1] != dim:
        raise DimensionError(f"data dim {X.shape[1]} != model dim {dim}")
    if not np.all(np.isfinite(X)):
        raise DataError("data contains non-finite values")
    return np.ascontiguousarray(X)


def _weighted_log_densities(g, X):
    return component_log_densities(g, X) + np.log(g.weights)[None, :]


def posteriors(g: DiagGmm, X: np.ndarray) -> np.ndarray:
    """Pr(k | x_t) for each row of X, shape (T, M); rows sum to 1."""
    lw = _weighted_log_densities(g, X)
    post = np.exp(lw - logsumexp(lw, axis=1, keepdims=True))
    return post / post.sum(axis=1, keepdims=True)


def posterior(g: DiagGmm, x: np.ndarray) -> np.ndarray:
    """Component posterior for a single vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("posterior expects a single vector; use posteriors() for batches")
    return posteriors(g, x[None, :])[0]


def log_likelihood(g: DiagGmm, X: np.ndarray) -> float:
    """Total log-likelihood sum_t log sum_k w_k N(x_t)."""
    return float(np.sum(logsumexp(_weighted_log_densities(g, X), axis=1)))


# -- EM ----------------------------------------------------------------------------

def _kmeans_pp(X, M, rng):
    n = X.shape[0]
    centers = np.empty((M, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for k in range(1, M):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[k] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[k]) ** 2, axis=1))
    return centers


def _assign(X, centers):
    d2 = (np.sum(X * X, axis=1)[:, None] - 2.0 * X @ centers.T
          + np.sum(centers * centers, axis=1)[None, :])
    return np.argmin(d2, axis=1)


def _initial_model(X, M, cfg, floor, rng):
    n, D = X.shape
    if n > cfg.init_subsample:
        sub = X[np.sort(rng.choice(n, cfg.init_subsample, replace=False))]
    else:
        sub = X
    if cfg.init == "kmeans++":
        centers = _kmeans_pp(sub, M, rng)
        for _ in range(cfg.kmeans_iters):
            labels = _assign(sub, centers)
            for k in range(M):
                members = sub[labels == k]
                if len(members):
                    centers[k] = members.mean(axis=0)
    else:
        centers = sub[np.sort(rng.choice(len(sub), M, replace=False))].copy()
    labels = _assign(sub, centers)
    global_var = np.maximum(sub.var(axis=0), floor)
    weights = np.empty(M)
    variances = np.empty((M, D))
    for k in range(M):
        members = sub[labels == k]
        weights[k] = max(len(members), 1)
        if len(members) > 1:
            variances[k] = np.maximum(members.var(axis=0), floor)
        else:
            variances[k] = global_var
    return DiagGmm(weights / weights.sum(), centers, variances, floor)


def fit_em(data, M: int, cfg: EmConfig | None = None, trace: list | None = None) -> DiagGmm:
    """Maximum-likelihood diagonal GMM by EM.

    Variances are floored at ``cfg.var_floor`` times the global per-dimension
    variance; the floored M-step is still the exact constrained maximiser, so
    the likelihood is monotone.  If ``trace`` is given, the average per-frame
    log-likelihood of each E-step is appended to it.
    """
    cfg = cfg or EmConfig()
    X = _as_data(data)
    n, D = X.shape
    if M < 1:
        raise ConfigError("M must be >= 1")
    if n < M:
        raise InsufficientDataError(f"{n} vectors cannot fit {M} components")
    rng = np.random.default_rng(cfg.seed)
    global_var = X.var(axis=0)
    floor = cfg.var_floor * np.where(global_var > 0, global_var, 1.0)

    g = _initial_model(X, M, cfg, floor, rng)
    prev = None
    for it in range(cfg.max_iters):
        lw = _weighted_log_densities(g, X)
        norm = logsumexp(lw, axis=1, keepdims=True)
        avg_ll = float(np.mean(norm))
        if trace is not None:
            trace.append(avg_ll)
        if prev is not None and abs(avg_ll - prev) <= cfg.rel_tol * abs(prev):
            log.debug("EM converged after %d iterations (avg ll %.6f)", it, avg_ll)
            break
        prev = avg_ll
        resp = np.exp(lw - norm)
        g = _m_step(X, resp, g, floor)
    else:
        log.debug("EM stopped at max_iters=%d", cfg.max_iters)
    return g


@_accel.njit
def _centred_moments_numba(X, resp, nk):
    T, D = X.shape
    M = resp.shape[1]
    mu = np.zeros((M, D))
    for t in range(T):
        for k in range(M):
            r = resp[t, k]
            if r != 0.0:
                for d in range(D):
                    mu[k, d] += r * X[t, d]
    for k in range(M):
        if nk[k] > 0.0:
            for d in range(D):
                mu[k, d] /= nk[k]
    var = np.zeros((M, D))
    for t in range(T):
        for k in range(M):
            r = resp[t, k]
            if r != 0.0:
                for d in range(D):
                    diff = X[t, d] - mu[k, d]
                    var[k, d] += r * diff * diff
    for k in range(M):
        if nk[k] > 0.0:
            for d in range(D):
                var[k, d] /= nk[k]
    return mu, var


def _centred_moments_numpy(X, resp, nk):
    safe = np.where(nk > 0, nk, 1.0)[:, None]
    mu = (resp.T @ X) / safe
    var = np.empty_like(mu)
    M, D = mu.shape
    step = max(1, 4_000_000 // max(1, M * D))
    var[:] = 0.0
    for s in range(0, X.shape[0], step):
        diff = X[s:s + step, None, :] - mu[None, :, :]
        var += np.einsum("tk,tkd->kd", resp[s:s + step], diff * diff)
    return mu, var / safe


def centred_moments(X, resp):
    """Soft counts, weighted means and centred variances per component."""
    nk = resp.sum(axis=0)
    if _accel.use_numba():
        mu, var = _centred_moments_numba(X, np.ascontiguousarray(resp), nk)
    else:
        mu, var = _centred_moments_numpy(X, resp, nk)
    return nk, mu, var


def _m_step(X, resp, g, floor):
    nk, mu, var = centred_moments(X, resp)
    weights = np.maximum(nk / X.shape[0], MIN_WEIGHT)
    weights /= weights.sum()
    # a component with no mass keeps its previous parameters
    live = nk > 1e-10
    means = np.where(live[:, None], mu, g.means)
    variances = np.where(live[:, None], np.maximum(var, floor), g.variances)
    return DiagGmm(weights, means, variances, floor)


# -- text format ---------------------------------------------------------------------
# "gmm M D", M lines "w mu_1..mu_D var_1..var_D", then "floor f_1..f_D".

def format_gmm(g: DiagGmm) -> str:
    lines = [f"gmm {g.n_components} {g.dim}"]
    for k in range(g.n_components):
        vals = [g.weights[k], *g.means[k], *g.variances[k]]
        lines.append(" ".join(repr(float(v)) for v in vals))
    lines.append("floor " + " ".join(repr(float(v)) for v in g.var_floor))
    return "\n".join(lines) + "\n"


def parse_gmm(text: str) -> DiagGmm:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split() if lines else []
    if len(head) != 3 or head[0] != "gmm":
        raise ParseError("header must be 'gmm M D'", 1)
    M, D = int(head[1]), int(head[2])
    body = lines[1:1 + M]
    if len(body) != M:
        raise ParseError(f"expected {M} component lines")
    rows = []
    for i, ln in enumerate(body):
        vals = [float(v) for v in ln.split()]
        if len(vals) != 1 + 2 * D:
            raise ParseError(f"component line needs {1 + 2 * D} values", i + 2)
        rows.append(vals)
    arr = np.array(rows)
    floor_line = lines[1 + M].split() if len(lines) > 1 + M else None
    if floor_line and floor_line[0] == "floor":
        floor = np.array([float(v) for v in floor_line[1:]])
    else:
        floor = np.min(arr[:, 1 + D:], axis=0)
    return DiagGmm(arr[:, 0], arr[:, 1:1 + D], arr[:, 1 + D:], floor)


def save_gmm(path, g: DiagGmm) -> None:
    Path(path).write_text(format_gmm(g))


def load_gmm(path) -> DiagGmm:
    return parse_gmm(Path(path).read_text())
