"""Fixed-length recording embeddings from a background GMM.

``alpha``          soft-count histogram, M dims
``beta_mean``      MAP-adapted means, M*D dims
``beta_mean_var``  adapted means followed by adapted variances, 2*M*D dims
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, EmptyInputError, ParseError
from .features import FeatureMatrix
from .gmm import DiagGmm, posteriors

KINDS = ("alpha", "beta_mean", "beta_mean_var")
STARVED = 1e-10


@dataclass(frozen=True)
class MapConfig:
    relevance_factor: float = 20.0

    def __post_init__(self):
        if not self.relevance_factor >= 0:
            raise ConfigError("relevance factor must be >= 0")


@dataclass(frozen=True)
class Embedding:
    kind: str
    values: np.ndarray
    m: int
    d: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown embedding kind {self.kind!r}")
        values = np.asarray(self.values, dtype=np.float64)
        expected = {"alpha": self.m, "beta_mean": self.m * self.d,
                    "beta_mean_var": 2 * self.m * self.d}[self.kind]
        if values.shape != (expected,):
            raise DimensionError(f"{self.kind} embedding needs {expected} values, got {values.shape}")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class AdaptStats:
    """Zeroth, first and second order statistics per component."""

    n: np.ndarray        # (M,)
    first: np.ndarray    # (M, D)  E_k[x]
    second: np.ndarray   # (M, D)  E_k[x^2]


def _frames(m) -> np.ndarray:
    values = m.values if isinstance(m, FeatureMatrix) else np.atleast_2d(np.asarray(m, dtype=np.float64))
    if values.shape[0] == 0:
        raise EmptyInputError("recording has no frames")
    return values


def alpha_embed(g: DiagGmm, m: FeatureMatrix) -> Embedding:
    X = _frames(m)
    p = posteriors(g, X).mean(axis=0)
    p /= p.sum()
    return Embedding("alpha", p, g.n_components, g.dim)


def map_adapt_stats(g: DiagGmm, m: FeatureMatrix) -> AdaptStats:
    X = _frames(m)
    post = posteriors(g, X)
    n = post.sum(axis=0)
    first = post.T @ X
    second = post.T @ (X * X)
    starved = n < STARVED
    safe_n = np.where(starved, 1.0, n)[:, None]
    first = np.where(starved[:, None], g.means, first / safe_n)
    second = np.where(starved[:, None], g.variances + g.means ** 2, second / safe_n)
    return AdaptStats(n, first, second)


def adapt(g: DiagGmm, stats: AdaptStats, cfg: MapConfig) -> tuple[np.ndarray, np.ndarray]:
    """MAP-adapted (means, variances); weights are left untouched."""
    r = cfg.relevance_factor
    denom = stats.n + r
    # n = r = 0 only happens for a starved component under r = 0: keep the prior
    a = np.divide(stats.n, denom, out=np.zeros_like(stats.n), where=denom > 0)[:, None]
    prior_second = g.variances + g.means ** 2
    mu_hat = a * stats.first + (1.0 - a) * g.means
    var_hat = a * stats.second + (1.0 - a) * prior_second - mu_hat ** 2
    return mu_hat, np.maximum(var_hat, g.var_floor[None, :])


def beta_embed(g: DiagGmm, m: FeatureMatrix, cfg: MapConfig | None = None,
               with_variance: bool = False) -> Embedding:
    cfg = cfg or MapConfig()
    mu_hat, var_hat = adapt(g, map_adapt_stats(g, m), cfg)
    if with_variance:
        return Embedding("beta_mean_var", np.concatenate([mu_hat.ravel(), var_hat.ravel()]),
                         g.n_components, g.dim)
    return Embedding("beta_mean", mu_hat.ravel(), g.n_components, g.dim)


def embed(g: DiagGmm, m: FeatureMatrix, kind: str, cfg: MapConfig | None = None) -> Embedding:
    if kind == "alpha":
        return alpha_embed(g, m)
    if kind == "beta_mean":
        return beta_embed(g, m, cfg, with_variance=False)
    if kind == "beta_mean_var":
        return beta_embed(g, m, cfg, with_variance=True)
    raise ConfigError(f"unknown embedding kind {kind!r}")


# -- text format: "emb kind M D len" then one value per line ----------------------

def format_embedding(e: Embedding) -> str:
    lines = [f"emb {e.kind} {e.m} {e.d} {len(e)}"]
    lines.extend(repr(float(v)) for v in e.values)
    return "\n".join(lines) + "\n"


def parse_embedding(text: str) -> Embedding:
    tokens = text.split()
    if len(tokens) < 5 or tokens[0] != "emb":
        raise ParseError("header must be 'emb kind M D len'", 1)
    kind, m, d, n = tokens[1], int(tokens[2]), int(tokens[3]), int(tokens[4])
    values = tokens[5:]
    if len(values) != n:
        raise ParseError(f"header declares {n} values, found {len(values)}")
    return Embedding(kind, np.array([float(v) for v in values]), m, d)


def save_embedding(path, e: Embedding) -> None:
    Path(path).write_text(format_embedding(e))


def load_embedding(path) -> Embedding:
    return parse_embedding(Path(path).read_text())
