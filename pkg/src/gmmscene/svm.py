"""Kernel SVMs: SMO dual solver, one-vs-one multi-class voting, C selection.

The binary solver minimises the standard soft-margin dual

    min_a  1/2 a^T Q a - e^T a,   Q_ij = y_i y_j K_ij,   0 <= a_i <= C,  y^T a = 0

by two-coefficient SMO steps on the maximal violating pair.  It stops when
the pair's violation m(a) - M(a) drops to ``tol``; that gap is reported as
the KKT residual.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _accel
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    LabelError,
    ParseError,
)
from .kernels import KernelSpec, gram

log = logging.getLogger(__name__)

TAU = 1e-12
DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)


# -- SMO kernels -------------------------------------------------------------------
# Both versions must evaluate identical expressions in identical order.

@_accel.njit
def _smo_numba(K, y, C, tol, max_iter, record):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    obj = np.empty(max_iter + 1 if record else 0)
    it = 0
    gap = np.inf
    while True:
        gmax = -np.inf
        gmin = np.inf
        i = -1
        j = -1
        for t in range(n):
            v = -y[t] * G[t]
            up = (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0)
            low = (y[t] < 0 and alpha[t] < C) or (y[t] > 0 and alpha[t] > 0)
            if up and v > gmax:
                gmax = v
                i = t
            if low and v < gmin:
                gmin = v
                j = t
        if record:
            acc = 0.0
            for t in range(n):
                acc += alpha[t] * (G[t] - 1.0)
            obj[it] = -0.5 * acc
        gap = gmax - gmin
        if i < 0 or j < 0 or gap <= tol or it >= max_iter:
            break
        old_i = alpha[i]
        old_j = alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0.0:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0.0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = total
        d_i = alpha[i] - old_i
        d_j = alpha[j] - old_j
        for t in range(n):
            G[t] += y[t] * y[i] * K[t, i] * d_i + y[t] * y[j] * K[t, j] * d_j
        it += 1
    return alpha, G, it, gap, obj[:it + 1] if record else obj


def _smo_numpy(K, y, C, tol, max_iter, record):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    obj = []
    pos = y > 0
    it = 0
    while True:
        v = -y * G
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (~pos & (alpha < C)) | (pos & (alpha > 0))
        i = int(np.argmax(np.where(up, v, -np.inf))) if up.any() else -1
        j = int(np.argmin(np.where(low, v, np.inf))) if low.any() else -1
        gmax = v[i] if i >= 0 else -np.inf
        gmin = v[j] if j >= 0 else np.inf
        if record:
            obj.append(-0.5 * float(np.sum(alpha * (G - 1.0))))
        gap = gmax - gmin
        if i < 0 or j < 0 or gap <= tol or it >= max_iter:
            break
        ai, aj = alpha[i], alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0.0:
                if aj < 0.0:
                    aj, ai = 0.0, diff
            elif ai < 0.0:
                ai, aj = 0.0, -diff
            if diff > 0.0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0.0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0.0:
                ai, aj = 0.0, total
        d_i = ai - alpha[i]
        d_j = aj - alpha[j]
        alpha[i], alpha[j] = ai, aj
        G += y * y[i] * K[:, i] * d_i + y * y[j] * K[:, j] * d_j
        it += 1
    return alpha, G, it, gap, np.array(obj)


def solve_dual(K, y, C, tol=1e-3, max_iter=None, record=False):
    """Run SMO. Returns (alpha, gradient, iterations, final gap, objective trace)."""
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    if max_iter is None:
        max_iter = max(10_000_000, 100 * n)
    if _accel.use_numba():
        return _smo_numba(K, y, float(C), float(tol), int(max_iter), bool(record))
    return _smo_numpy(K, y, float(C), float(tol), int(max_iter), bool(record))


def _rho(alpha, G, y, C):
    yG = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return float(np.mean(yG[free]))
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2.0)


# -- binary machine -------------------------------------------------------------------

@dataclass(frozen=True)
class BinarySvm:
    """Decision f(x) = sum_s coef_s K(x_s, x) - rho; positive means label +1."""

    support: np.ndarray          # indices into the training set
    coef: np.ndarray             # alpha_s * y_s
    rho: float
    C: float
    alpha: np.ndarray            # full dual vector
    train_decision: np.ndarray   # f at each training point
    kkt_gap: float
    iterations: int
    objective: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def bias(self) -> float:
        return -self.rho


def train_binary(K, labels, C: float = 1.0, tol: float = 1e-3,
                 max_iter: int | None = None, record: bool = False) -> BinarySvm:
    """Train on a precomputed Gram matrix with +-1 labels."""
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n = y.shape[0]
    if K.shape != (n, n):
        raise DimensionError(f"gram shape {K.shape} does not match {n} labels")
    if not np.all(np.isfinite(K)):
        raise DataError("gram matrix contains non-finite values")
    if not np.all(np.abs(y) == 1):
        raise LabelError("binary labels must be +1 or -1")
    if np.all(y > 0) or np.all(y < 0):
        raise LabelError("binary training needs both classes")
    if not C > 0:
        raise ConfigError("C must be positive")
    alpha, G, iters, gap, obj = solve_dual(K, y, C, tol, max_iter, record)
    if gap > tol:
        log.warning("SMO stopped at %d iterations with KKT gap %.3g > tol %.3g", iters, gap, tol)
    rho = _rho(alpha, G, y, C)
    support = np.flatnonzero(alpha > 0)
    return BinarySvm(
        support=support,
        coef=alpha[support] * y[support],
        rho=rho,
        C=float(C),
        alpha=alpha,
        train_decision=y * (G + 1.0) - rho,
        kkt_gap=float(gap),
        iterations=int(iters),
        objective=np.asarray(obj),
    )


def predict_binary(m: BinarySvm, kernel_row) -> np.ndarray | float:
    """f(x) from K(x_s, x) over the support vectors (1-D row or (n_probe, n_sv) block)."""
    row = np.asarray(kernel_row, dtype=np.float64)
    if row.shape[-1] != m.support.shape[0]:
        raise DimensionError(f"kernel row has {row.shape[-1]} entries, model has {m.support.shape[0]} SVs")
    out = row @ m.coef - m.rho
    return float(out) if np.ndim(out) == 0 else out


# -- feature scaling ---------------------------------------------------------------------

@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale


# -- one-vs-one -----------------------------------------------------------------------------

@dataclass(frozen=True)
class PairMachine:
    first: int       # index into classes, voted for when f > 0
    second: int
    support: np.ndarray   # indices into the model's support pool
    coef: np.ndarray
    rho: float
    kkt_gap: float = 0.0


@dataclass(frozen=True)
class MulticlassSvm:
    classes: tuple
    kernel: KernelSpec
    C: float
    pool: np.ndarray
    machines: tuple
    standardizer: Standardizer | None = None

    @property
    def dim(self) -> int:
        return self.pool.shape[1]

    def decision_votes(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise DimensionError(f"embedding dim {X.shape[1]} != model dim {self.dim}")
        if self.standardizer is not None:
            X = self.standardizer.transform(X)
        Kx = gram(self.kernel, X, self.pool)
        votes = np.zeros((X.shape[0], len(self.classes)), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for mach in self.machines:
            f = Kx[:, mach.support] @ mach.coef - mach.rho
            winner = np.where(f > 0, mach.first, mach.second)
            np.add.at(votes, (rows, winner), 1)
        return votes

    def predict(self, X) -> list:
        votes = self.decision_votes(X)
        # argmax returns the first maximum: ties go to the smallest sorted label
        return [self.classes[k] for k in np.argmax(votes, axis=1)]


def predict_multiclass(m: MulticlassSvm, embedding):
    """Label and vote vector for a single embedding."""
    x = np.asarray(getattr(embedding, "values", embedding), dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("predict_multiclass takes one embedding")
    votes = m.decision_votes(x[None, :])[0]
    return m.classes[int(np.argmax(votes))], votes


def _prepare(X, spec, normalize):
    scaler = Standardizer.fit(X) if normalize else None
    Xt = scaler.transform(X) if scaler is not None else X
    return Xt, spec.resolved(Xt), scaler


def _fit_from_gram(K, Xt, y_idx, classes, spec, C, tol, scaler):
    L = len(classes)
    machines = []
    used = []
    for a, b in itertools.combinations(range(L), 2):
        idx = np.flatnonzero((y_idx == a) | (y_idx == b))
        yy = np.where(y_idx[idx] == a, 1.0, -1.0)
        bm = train_binary(K[np.ix_(idx, idx)], yy, C, tol)
        machines.append((a, b, idx[bm.support], bm.coef, bm.rho, bm.kkt_gap))
        used.append(idx[bm.support])
    pool_idx = np.unique(np.concatenate(used)) if used else np.empty(0, dtype=np.int64)
    where = {int(g): p for p, g in enumerate(pool_idx)}
    pairs = tuple(
        PairMachine(a, b, np.array([where[int(g)] for g in sv], dtype=np.int64), coef, rho, gap)
        for a, b, sv, coef, rho, gap in machines
    )
    return MulticlassSvm(tuple(classes), spec, float(C), Xt[pool_idx].copy(), pairs, scaler)


def _encode_labels(labels):
    labels = [str(v) for v in labels]
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise LabelError("multi-class training needs at least two classes")
    pos = {c: k for k, c in enumerate(classes)}
    return classes, np.array([pos[v] for v in labels])


def train_multiclass(X, labels, spec: KernelSpec, C: float = 1.0, normalize: bool = False,
                     tol: float = 1e-3) -> MulticlassSvm:
    """One-vs-one machines over sorted class labels sharing one Gram matrix."""
    X = np.atleast_2d(np.asarray([getattr(e, "values", e) for e in X], dtype=np.float64))
    if X.shape[0] != len(labels):
        raise LabelError("one label per embedding required")
    classes, y_idx = _encode_labels(labels)
    Xt, spec, scaler = _prepare(X, spec, normalize)
    K = gram(spec, Xt)
    return _fit_from_gram(K, Xt, y_idx, classes, spec, C, tol, scaler)


def stratified_folds(labels, n_folds: int, seed: int = 0) -> list[np.ndarray]:
    """Per-class shuffled round-robin assignment; returns test indices per fold."""
    labels = np.asarray([str(v) for v in labels])
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for c in sorted(set(labels)):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        assignment[idx] = (np.arange(len(idx)) + offset) % n_folds
        offset += len(idx)
    return [np.flatnonzero(assignment == f) for f in range(n_folds)]


@dataclass(frozen=True)
class Selection:
    C: float
    gamma: float | None
    cv_accuracy: float
    table: tuple   # ((C, gamma, accuracy), ...)


def select_hyperparameters(X, labels, spec: KernelSpec, c_grid=DEFAULT_C_GRID,
                           normalize: bool = False, n_folds: int = 3, seed: int = 0,
                           gamma_grid: bool = False, tol: float = 1e-3) -> Selection:
    """Grid search over C (and optionally gamma x {1/4, 1/2, 1, 2, 4}) by inner CV.

    Only the data passed in is touched, so callers hand in training folds.
    Ties go to the earlier grid entry.
    """
    X = _as_matrix(X)
    labels = [str(v) for v in labels]
    splits = []
    for test in stratified_folds(labels, n_folds, seed):
        train = np.setdiff1d(np.arange(len(labels)), test)
        if len(test) and len({labels[i] for i in train}) >= 2:
            splits.append((X[train], [labels[i] for i in train], X[test], [labels[i] for i in test]))
    return select_from_splits(splits, spec, c_grid, normalize, X, gamma_grid, tol)


def select_from_splits(splits, spec: KernelSpec, c_grid=DEFAULT_C_GRID, normalize: bool = False,
                       gamma_reference=None, gamma_grid: bool = False,
                       tol: float = 1e-3) -> Selection:
    """Grid search over precomputed ``(X_train, y_train, X_test, y_test)`` splits.

    Callers that re-derive features per split (a GMM refit, say) use this
    directly. ``gamma_reference`` fixes the base gamma for "auto" kernels;
    without it each split resolves its own.
    """
    base_gamma = None
    gammas = [None]
    if spec.needs_gamma and gamma_reference is not None:
        _, resolved, _ = _prepare(_as_matrix(gamma_reference), spec, normalize)
        base_gamma = float(resolved.gamma)
        gammas = [base_gamma * s for s in (0.25, 0.5, 1.0, 2.0, 4.0)] if gamma_grid else [base_gamma]
    table = []
    for gamma in gammas:
        fold_spec = KernelSpec(spec.kind, gamma) if gamma is not None else spec
        for C in c_grid:
            correct = 0
            total = 0
            for Xtr, ytr, Xte, yte in splits:
                model = train_multiclass(Xtr, ytr, fold_spec, C, normalize, tol)
                pred = model.predict(Xte)
                correct += sum(p == str(t) for p, t in zip(pred, yte))
                total += len(yte)
            table.append((float(C), gamma, correct / total if total else 0.0))
    best = max(range(len(table)), key=lambda k: (table[k][2], -k))
    C, gamma, acc = table[best]
    return Selection(C, gamma, acc, tuple(table))


def _as_matrix(X) -> np.ndarray:
    return np.atleast_2d(np.asarray([getattr(e, "values", e) for e in X], dtype=np.float64))


# -- text model format ------------------------------------------------------------------------

def format_model(m: MulticlassSvm) -> str:
    f = repr
    lines = ["svm-ovo 1", f"kernel {m.kernel.kind}",
             f"gamma {f(float(m.kernel.gamma)) if m.kernel.gamma is not None else 'none'}",
             f"C {f(m.C)}", f"classes {len(m.classes)}"]
    lines.extend(m.classes)
    if m.standardizer is None:
        lines.append("normalize 0")
    else:
        lines.append("normalize 1")
        lines.append("mean " + " ".join(f(float(v)) for v in m.standardizer.mean))
        lines.append("scale " + " ".join(f(float(v)) for v in m.standardizer.scale))
    lines.append(f"pool {m.pool.shape[0]} {m.pool.shape[1]}")
    lines.extend(" ".join(f(float(v)) for v in row) for row in m.pool)
    lines.append(f"machines {len(m.machines)}")
    for mach in m.machines:
        lines.append(f"machine {mach.first} {mach.second} {len(mach.support)} {f(float(mach.rho))}")
        lines.extend(f"{int(s)} {f(float(c))}" for s, c in zip(mach.support, mach.coef))
    return "\n".join(lines) + "\n"


def parse_model(text: str) -> MulticlassSvm:
    lines = text.splitlines()
    pos = 0

    def take(prefix=None):
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("unexpected end of model file")
        ln = lines[pos]
        pos += 1
        if prefix is not None:
            parts = ln.split(" ", 1)
            if parts[0] != prefix:
                raise ParseError(f"expected '{prefix}'", pos)
            return parts[1] if len(parts) > 1 else ""
        return ln

    try:
        take("svm-ovo")
        kind = take("kernel").strip()
        gamma_txt = take("gamma").strip()
        C = float(take("C"))
        n_classes = int(take("classes"))
        classes = tuple(take() for _ in range(n_classes))
        scaler = None
        if int(take("normalize")):
            mean = np.array([float(v) for v in take("mean").split()])
            scale = np.array([float(v) for v in take("scale").split()])
            scaler = Standardizer(mean, scale)
        n_pool, dim = (int(v) for v in take("pool").split())
        pool = np.array([[float(v) for v in take().split()] for _ in range(n_pool)]).reshape(n_pool, dim)
        machines = []
        for _ in range(int(take("machines"))):
            a, b, n_sv, rho = take("machine").split()
            rows = [take().split() for _ in range(int(n_sv))]
            machines.append(PairMachine(int(a), int(b),
                                        np.array([int(r[0]) for r in rows], dtype=np.int64),
                                        np.array([float(r[1]) for r in rows]), float(rho)))
        gamma = None if gamma_txt == "none" else float(gamma_txt)
        return MulticlassSvm(classes, KernelSpec(kind, gamma), C, pool, tuple(machines), scaler)
    except ParseError:
        raise
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed model file: {exc}", pos) from None


def save_model(path, m: MulticlassSvm) -> None:
    Path(path).write_text(format_model(m))


def load_model(path) -> MulticlassSvm:
    return parse_model(Path(path).read_text())
