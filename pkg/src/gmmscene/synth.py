"""Synthetic corpora laid out like the challenge data.

Scene corpus::

    root/audio/<scene>_<k>.wav
    root/evaluation_setup/fold<f>_train.txt      audio/<file>.wav<TAB><scene>
    root/evaluation_setup/fold<f>_evaluate.txt

Event corpus (one directory per scene)::

    root/<scene>/audio/<rec>.wav
    root/<scene>/meta/<rec>.ann                  onset<TAB>offset<TAB>label
    root/<scene>/evaluation_setup/fold<f>_{train,evaluate}.txt
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import signal

from .errors import ConfigError
from .features import AudioClip, write_wav
from .sed import EventAnnotation, format_annotations

SCENES = ("beach", "office", "street")
EVENTS = ("chirp", "knock", "tone")


def _band_noise(rng, n, sr, lo, hi, order=4):
    white = rng.standard_normal(n)
    nyq = sr / 2.0
    if lo <= 0:
        sos = signal.butter(order, hi / nyq, btype="lowpass", output="sos")
    elif hi >= nyq:
        sos = signal.butter(order, lo / nyq, btype="highpass", output="sos")
    else:
        sos = signal.butter(order, [lo / nyq, hi / nyq], btype="bandpass", output="sos")
    out = signal.sosfilt(sos, white)
    return out / (np.std(out) + 1e-12)


def _normalize(x, peak=0.8):
    m = np.max(np.abs(x))
    return x * (peak / m) if m > 0 else x


def _shared_sources(n, sr, rng):
    return [_band_noise(rng, n, sr, 0, 500),
            _band_noise(rng, n, sr, 500, 2000),
            _band_noise(rng, n, sr, 2000, min(6000, 0.45 * sr))]


def _scene_colour(scene, n, sr, rng):
    t = np.arange(n) / sr
    if scene == "beach":
        return _band_noise(rng, n, sr, 250, 400)
    if scene == "office":
        hum = sum(np.sin(2 * np.pi * 120 * h * t + rng.uniform(0, 2 * np.pi)) / h for h in (1, 2, 3))
        return hum / np.std(hum) + np.sin(2 * np.pi * 1000 * t)
    if scene == "street":
        return _band_noise(rng, n, sr, 2800, 3400)
    raise ValueError(f"unknown synthetic scene {scene!r}")


def scene_texture(scene: str, n: int, sr: int, rng, colour_level: float = 0.5) -> np.ndarray:
    """Shared background sources in a slowly drifting mix, plus a fixed per-scene colour.

    All scenes sweep the same background, so GMM components are shared
    across classes and the scene shows up as an offset within them.
    """
    sources = _shared_sources(n, sr, rng)
    hop = sr // 20
    knots = rng.standard_normal((len(sources), n // hop + 2))
    smooth = signal.lfilter([0.2], [1.0, -0.8], knots, axis=1)
    mix = np.exp(2.0 * smooth)
    mix /= mix.sum(axis=0)
    grid = np.arange(knots.shape[1]) * hop
    x = sum(np.interp(np.arange(n), grid, np.sqrt(mix[i])) * src for i, src in enumerate(sources))
    return x + colour_level * _scene_colour(scene, n, sr, rng) + 0.01 * rng.standard_normal(n)


def event_sound(label: str, n: int, sr: int, rng) -> np.ndarray:
    t = np.arange(n) / sr
    env = np.minimum(1.0, np.minimum(t, t[::-1]) / 0.02)
    if label == "tone":
        f0 = rng.uniform(700, 800)
        x = np.sin(2 * np.pi * f0 * t) + 0.5 * np.sin(2 * np.pi * 2 * f0 * t)
    elif label == "chirp":
        period = 0.25
        phase = (t % period) / period
        f = 1500 + 2000 * phase
        x = np.sin(2 * np.pi * np.cumsum(f) / sr)
    elif label == "knock":
        x = _band_noise(rng, n, sr, 4500, 6500)
        rate = rng.uniform(5, 7)
        x *= (np.sin(2 * np.pi * rate * t) > 0.3)
    else:
        raise ValueError(f"unknown synthetic event {label!r}")
    return _normalize(x * env, 1.0)


def make_scene_corpus(root, n_per_class: int = 20, n_folds: int = 2, duration: float = 10.0,
                      sample_rate: int = 16000, seed: int = 0, scenes=SCENES) -> Path:
    if n_folds < 2 or n_per_class < n_folds:
        raise ConfigError("need at least two folds and one clip per class per fold")
    root = Path(root)
    (root / "audio").mkdir(parents=True, exist_ok=True)
    (root / "evaluation_setup").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n = int(duration * sample_rate)
    files = {s: [] for s in scenes}
    for scene in scenes:
        for k in range(n_per_class):
            x = scene_texture(scene, n, sample_rate, rng)
            x *= rng.uniform(0.09, 0.11) / np.sqrt(np.mean(x * x))
            name = f"audio/{scene}_{k:03d}.wav"
            write_wav(root / name, AudioClip(x, sample_rate, f"{scene}_{k:03d}"))
            files[scene].append(name)
    for f in range(n_folds):
        train, test = [], []
        for scene in scenes:
            for k, name in enumerate(files[scene]):
                (test if k % n_folds == f else train).append(f"{name}\t{scene}\n")
        (root / "evaluation_setup" / f"fold{f + 1}_train.txt").write_text("".join(train))
        (root / "evaluation_setup" / f"fold{f + 1}_evaluate.txt").write_text("".join(test))
    return root


def compose_event_scene(rng, duration: float, sample_rate: int, labels=EVENTS,
                        noise_level: float = 0.05):
    """Events of 2.5-5 s placed without overlap over a low noise floor."""
    n = int(round(duration * sample_rate))
    x = noise_level * _band_noise(rng, n, sample_rate, 0, 3000)
    events = []
    cursor = rng.uniform(0.5, 2.0)
    while True:
        length = rng.uniform(2.5, 5.0)
        if cursor + length > duration - 0.5:
            break
        label = labels[rng.integers(len(labels))]
        start = int(round(cursor * sample_rate))
        stop = int(round((cursor + length) * sample_rate))
        x[start:stop] += rng.uniform(0.3, 0.5) * event_sound(label, stop - start, sample_rate, rng)
        events.append(EventAnnotation(round(cursor, 2), round(cursor + length, 2), label))
        cursor += length + rng.uniform(1.5, 3.0)
    return _normalize(x, 0.9), events


def make_event_corpus(root, scenes=("home",), n_recordings: int = 6, n_folds: int = 2,
                      duration: float = 30.0, sample_rate: int = 16000, seed: int = 0) -> Path:
    if n_folds < 2 or n_recordings < n_folds:
        raise ConfigError("need at least two folds and one recording per fold")
    root = Path(root)
    rng = np.random.default_rng(seed)
    for scene in scenes:
        sdir = root / scene
        for sub in ("audio", "meta", "evaluation_setup"):
            (sdir / sub).mkdir(parents=True, exist_ok=True)
        names = []
        for k in range(n_recordings):
            x, events = compose_event_scene(rng, duration, sample_rate)
            stem = f"{scene}_{k:02d}"
            write_wav(sdir / "audio" / f"{stem}.wav", AudioClip(x, sample_rate, stem))
            (sdir / "meta" / f"{stem}.ann").write_text(format_annotations(events))
            names.append(f"audio/{stem}.wav")
        for f in range(n_folds):
            train = [nm for k, nm in enumerate(names) if k % n_folds != f]
            test = [nm for k, nm in enumerate(names) if k % n_folds == f]
            (sdir / "evaluation_setup" / f"fold{f + 1}_train.txt").write_text(
                "".join(f"{nm}\t{scene}\n" for nm in train))
            (sdir / "evaluation_setup" / f"fold{f + 1}_evaluate.txt").write_text(
                "".join(f"{nm}\t{scene}\n" for nm in test))
    return root
