"""Accuracy, confusion matrices, and the one-second segment-based SED scores."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError


def accuracy(truth, predicted) -> float:
    truth, predicted = list(truth), list(predicted)
    if len(truth) != len(predicted):
        raise InputError("truth and predictions differ in length")
    if not truth:
        raise InputError("accuracy of an empty list")
    return sum(t == p for t, p in zip(truth, predicted)) / len(truth)


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple
    counts: np.ndarray   # counts[i, j]: truth i predicted j

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def normalized(self) -> np.ndarray:
        rows = self.support[:, None].astype(np.float64)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def to_tsv(self, normalized: bool = True) -> str:
        data = self.normalized if normalized else self.counts
        lines = ["truth\\pred\t" + "\t".join(self.labels)]
        for label, row in zip(self.labels, data):
            cells = (f"{v:.4f}" for v in row) if normalized else (str(int(v)) for v in row)
            lines.append(label + "\t" + "\t".join(cells))
        return "\n".join(lines) + "\n"


def confusion(truth, predicted, labels) -> ConfusionMatrix:
    labels = tuple(labels)
    index = {lab: k for k, lab in enumerate(labels)}
    truth, predicted = list(truth), list(predicted)
    if len(truth) != len(predicted):
        raise InputError("truth and predictions differ in length")
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        if t not in index or p not in index:
            raise InputError(f"label {t if t not in index else p!r} not in label set")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(labels, counts)


# -- segment-based scoring ----------------------------------------------------------

@dataclass(frozen=True)
class SegmentScore:
    """Counts accumulated over segments; add scores from several files with ``+``."""

    S: int = 0
    D: int = 0
    I: int = 0
    N: int = 0
    TP: int = 0
    FP: int = 0
    FN: int = 0

    def __add__(self, other: "SegmentScore") -> "SegmentScore":
        return SegmentScore(*(a + b for a, b in zip(self.as_tuple(), other.as_tuple())))

    def as_tuple(self):
        return (self.S, self.D, self.I, self.N, self.TP, self.FP, self.FN)

    @property
    def error_rate(self) -> float:
        """(S + D + I) / N.  With no reference events: 0 if nothing was inserted, else inf."""
        errors = self.S + self.D + self.I
        if self.N == 0:
            return 0.0 if errors == 0 else math.inf
        return errors / self.N

    @property
    def f_score(self) -> float:
        """Micro-averaged segment F1; 1.0 when both reference and output are empty."""
        denom = 2 * self.TP + self.FP + self.FN
        return 1.0 if denom == 0 else 2 * self.TP / denom


def _event_fields(ev):
    if hasattr(ev, "onset"):
        return float(ev.onset), float(ev.offset), ev.label
    onset, offset, label = ev
    return float(onset), float(offset), label


def rasterize(events, n_segments: int, grid: float = 1.0) -> list[set]:
    """Label sets active in each grid segment (any positive overlap counts)."""
    active = [set() for _ in range(n_segments)]
    for ev in events:
        onset, offset, label = _event_fields(ev)
        if offset <= onset:
            continue
        first = max(0, int(math.floor(onset / grid)))
        last = min(n_segments - 1, int(math.ceil(offset / grid)) - 1)
        for t in range(first, last + 1):
            if onset < (t + 1) * grid and offset > t * grid:
                active[t].add(label)
    return active


def segment_based_scores(ref, hyp, duration: float, grid: float = 1.0) -> SegmentScore:
    if not duration > 0:
        raise InputError("duration must be positive")
    if not grid > 0:
        raise InputError("grid must be positive")
    n = int(math.ceil(duration / grid - 1e-9))
    ref_sets = rasterize(ref, n, grid)
    hyp_sets = rasterize(hyp, n, grid)
    S = D = I = N = TP = FP = FN = 0
    for r, h in zip(ref_sets, hyp_sets):
        tp = len(r & h)
        fn = len(r - h)
        fp = len(h - r)
        TP += tp
        FN += fn
        FP += fp
        N += len(r)
        S += min(fn, fp)
        D += max(0, fn - fp)
        I += max(0, fp - fn)
    return SegmentScore(S, D, I, N, TP, FP, FN)


def score_lines(score: SegmentScore, prefix: str = "") -> list[str]:
    """key=value lines for machine-readable reports."""
    vals = dict(zip(("S", "D", "I", "N", "TP", "FP", "FN"), score.as_tuple()))
    vals["ER"] = f"{score.error_rate:.6f}"
    vals["F"] = f"{score.f_score:.6f}"
    return [f"{prefix}{k}={v}" for k, v in vals.items()]
