"""Sound event detection by classifying one-second segments.

Training material is carved from annotated scene recordings, optionally
extended with a GENERIC class cut from the unannotated gaps and with
speed-perturbed copies of every event clip.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InputError, ParseError, TooShortError, ValidationError
from .features import AudioClip, FrameConfig, extract, mean_pool

log = logging.getLogger(__name__)

GENERIC = "GENERIC"
DEFAULT_SPEEDS = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 1.10, 1.20, 1.30)
MIN_SPEED, MAX_SPEED = 0.5, 1.3


@dataclass(frozen=True)
class EventAnnotation:
    onset: float
    offset: float
    label: str

    def __post_init__(self):
        if not (0 <= self.onset < self.offset):
            raise ValidationError(f"need 0 <= onset < offset, got ({self.onset}, {self.offset})")
        if not self.label:
            raise ValidationError("empty event label")


@dataclass(frozen=True)
class PerturbConfig:
    speeds: tuple = DEFAULT_SPEEDS
    include_original: bool = True

    def __post_init__(self):
        speeds = tuple(float(s) for s in self.speeds)
        for s in speeds:
            if not s > 0:
                raise ConfigError(f"speed factor must be positive, got {s}")
            if not MIN_SPEED <= s <= MAX_SPEED:
                raise ConfigError(f"speed factor {s} outside [{MIN_SPEED}, {MAX_SPEED}]")
            if s == 1.0:
                raise ConfigError("1.0 is the original; use include_original")
        object.__setattr__(self, "speeds", speeds)


@dataclass(frozen=True)
class SegmentPrediction:
    index: int
    start: float
    end: float
    label: str | None = None
    start_sample: int = 0
    stop_sample: int = 0


# -- annotations --------------------------------------------------------------------

def parse_annotations(text: str) -> list[EventAnnotation]:
    """Parse ``onset<TAB>offset<TAB>label`` lines; blank lines are skipped."""
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", lineno)
        try:
            onset, offset = float(parts[0]), float(parts[1])
        except ValueError:
            raise ParseError("onset/offset must be decimal seconds", lineno) from None
        label = parts[2].strip()
        try:
            events.append(EventAnnotation(onset, offset, label))
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
    return events


def format_annotations(events) -> str:
    return "".join(f"{e.onset:.2f}\t{e.offset:.2f}\t{e.label}\n" for e in events)


# -- carving --------------------------------------------------------------------------

def carve_events(clip: AudioClip, anns) -> list[tuple[str, AudioClip]]:
    """One (label, clip) per annotation, samples [floor(onset*sr), floor(offset*sr))."""
    sr = clip.sample_rate
    n = len(clip.samples)
    out = []
    for k, ev in enumerate(anns):
        start = int(math.floor(ev.onset * sr))
        stop = int(math.floor(ev.offset * sr))
        if start >= n:
            log.warning("%s: event %r at %.2fs lies outside the %.2fs clip; skipped",
                        clip.source_id, ev.label, ev.onset, clip.duration)
            continue
        if stop > n:
            log.warning("%s: event %r offset %.2fs clamped to clip end %.2fs",
                        clip.source_id, ev.label, ev.offset, clip.duration)
            stop = n
        if stop <= start:
            continue
        out.append((ev.label, clip.slice(start, stop, f"{clip.source_id}#{k}")))
    return out


def merge_intervals(anns) -> list[tuple[float, float]]:
    spans = sorted((e.onset, e.offset) for e in anns)
    merged = []
    for on, off in spans:
        if merged and on <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], off))
        else:
            merged.append((on, off))
    return merged


def gap_intervals(anns, duration: float, min_gap: float = 0.0) -> list[tuple[float, float]]:
    """Complement of the merged annotation coverage within [0, duration]."""
    gaps = []
    cursor = 0.0
    for on, off in merge_intervals(anns):
        on, off = min(on, duration), min(off, duration)
        if on > cursor:
            gaps.append((cursor, on))
        cursor = max(cursor, off)
    if duration > cursor:
        gaps.append((cursor, duration))
    return [(a, b) for a, b in gaps if b - a >= min_gap and b > a]


def build_generic_class(recordings, min_gap: float = 1.0, n: int = 60,
                        seed: int = 0) -> list[AudioClip]:
    """Sample ``n`` unannotated gap clips uniformly across ``(clip, annotations)`` pairs."""
    candidates = []
    for clip, anns in recordings:
        sr = clip.sample_rate
        for k, (a, b) in enumerate(gap_intervals(anns, clip.duration, min_gap)):
            start, stop = int(math.floor(a * sr)), int(math.floor(b * sr))
            if stop > start:
                candidates.append(clip.slice(start, stop, f"{clip.source_id}#gap{k}"))
    if not candidates:
        return []
    if len(candidates) <= n:
        return candidates
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(candidates), size=n, replace=False))
    return [candidates[i] for i in chosen]


# -- speed perturbation ------------------------------------------------------------------

def speed_change(clip: AudioClip, factor: float) -> AudioClip:
    """Play ``factor`` times faster by linear-interpolation resampling (pitch moves too)."""
    if not factor > 0:
        raise ConfigError(f"speed factor must be positive, got {factor}")
    n = len(clip.samples)
    if factor == 1.0 or n < 2:
        return replace(clip)
    n_out = int(math.floor((n - 1) / factor)) + 1
    positions = np.arange(n_out) * factor
    samples = np.interp(positions, np.arange(n), clip.samples)
    return AudioClip(samples, clip.sample_rate, f"{clip.source_id}@{factor:g}")


def time_perturb(clip: AudioClip, cfg: PerturbConfig | None = None) -> list[AudioClip]:
    cfg = cfg or PerturbConfig()
    out = [speed_change(clip, s) for s in cfg.speeds]
    if cfg.include_original:
        out.append(clip)
    return out


# -- segmentation and detection ------------------------------------------------------------

def segment_scene(clip: AudioClip, seconds: float = 1.0) -> list[SegmentPrediction]:
    """Consecutive segments covering the clip.

    A trailing remainder of at least half a segment becomes its own segment;
    a shorter one is merged into the previous segment.
    """
    if len(clip.samples) == 0:
        raise InputError("cannot segment an empty clip")
    if not seconds > 0:
        raise ConfigError("segment length must be positive")
    sr = clip.sample_rate
    n = len(clip.samples)
    seg = int(round(seconds * sr))
    bounds = list(range(0, n - n % seg, seg))
    rem = n % seg
    if not bounds:
        bounds = [0]
    elif rem >= seg / 2:
        bounds.append(n - rem)
    bounds.append(n)
    return [SegmentPrediction(k, bounds[k] / sr, bounds[k + 1] / sr, None, bounds[k], bounds[k + 1])
            for k in range(len(bounds) - 1)]


def clip_vector(clip: AudioClip, cfg: FrameConfig) -> np.ndarray:
    """Time-averaged MFCC+deltas, the per-clip classifier input."""
    return mean_pool(extract(clip, cfg))


def detect(model, clip: AudioClip, segments, cfg: FrameConfig) -> list[SegmentPrediction]:
    """Label each segment with the model's top-voted class."""
    segments = list(segments)
    if not segments:
        return []
    vectors = []
    ok = []
    for seg in segments:
        try:
            vectors.append(clip_vector(clip.slice(seg.start_sample, seg.stop_sample), cfg))
            ok.append(True)
        except TooShortError:
            log.warning("%s: segment %d too short for one frame; labelled %s",
                        clip.source_id, seg.index, GENERIC)
            ok.append(False)
    labels = iter(model.predict(np.array(vectors)) if vectors else [])
    return [replace(seg, label=next(labels) if good else GENERIC)
            for seg, good in zip(segments, ok)]


def detections_to_events(preds) -> list[EventAnnotation]:
    """Drop GENERIC segments and merge runs of adjacent same-label segments."""
    events = []
    prev = None
    for p in preds:
        if p.label is None or p.label == GENERIC:
            prev = None
            continue
        if prev is not None and prev.label == p.label and prev.index + 1 == p.index:
            events[-1] = EventAnnotation(events[-1].onset, p.end, p.label)
        else:
            events.append(EventAnnotation(p.start, p.end, p.label))
        prev = p
    return events


def write_detections(preds) -> str:
    return format_annotations(detections_to_events(preds))
