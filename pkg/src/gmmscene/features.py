"""Audio front end: WAV decoding, framing, MFCC, deltas and time pooling."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.io.wavfile

from .errors import (
    ConfigError,
    EmptyInputError,
    FormatError,
    ParseError,
    TooShortError,
    UnsupportedError,
)

LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise FormatError("AudioClip samples must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise FormatError("AudioClip samples must be finite")
        if int(self.sample_rate) <= 0:
            raise FormatError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def slice(self, start: int, stop: int, source_id: str | None = None) -> "AudioClip":
        return AudioClip(self.samples[start:stop], self.sample_rate,
                         self.source_id if source_id is None else source_id)


@dataclass(frozen=True)
class FrameConfig:
    """Framing and cepstral parameters.

    ``include_c0`` keeps the zeroth cepstral coefficient as the first of the
    ``n_ceps`` outputs (the ``task1`` profile does this: 20 coefficients
    c0..c19).  With it off, c1..c_n are returned.  ``append_energy`` adds the
    log frame energy as an extra column (the ``task3`` profile: 12 + energy).
    """

    window_ms: float = 30.0
    hop_fraction: float = 0.5
    n_mels: int = 40
    n_ceps: int = 20
    include_c0: bool = True
    delta_width: int = 2
    append_energy: bool = False
    fmin: float = 0.0
    fmax: float | None = None

    def __post_init__(self):
        if not self.window_ms > 0:
            raise ConfigError("window_ms must be positive")
        if not 0 < self.hop_fraction <= 1:
            raise ConfigError("hop_fraction must lie in (0, 1]")
        if self.n_ceps < 1 or self.n_ceps > self.n_mels:
            raise ConfigError("need 1 <= n_ceps <= n_mels")
        if not self.include_c0 and self.n_ceps + 1 > self.n_mels:
            raise ConfigError("n_ceps + 1 must not exceed n_mels when c0 is skipped")
        if self.delta_width < 1:
            raise ConfigError("delta_width must be >= 1")

    def window_length(self, sample_rate: int) -> int:
        # small epsilon so that e.g. 30 ms at 44.1 kHz is exactly 1323
        return int(math.floor(self.window_ms * sample_rate / 1000.0 + 1e-9))

    def hop_length(self, sample_rate: int) -> int:
        return max(1, int(math.floor(self.hop_fraction * self.window_length(sample_rate) + 1e-9)))

    @property
    def static_dim(self) -> int:
        return self.n_ceps + int(self.append_energy)

    @property
    def dim(self) -> int:
        return 3 * self.static_dim


PROFILES = {
    "task1": FrameConfig(n_ceps=20, include_c0=True, append_energy=False),
    "task3": FrameConfig(n_ceps=12, include_c0=False, append_energy=True),
}


def get_profile(name: str, **overrides) -> FrameConfig:
    try:
        cfg = PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown feature profile {name!r}; known: {sorted(PROFILES)}") from None
    return replace(cfg, **overrides) if overrides else cfg


@dataclass
class FeatureMatrix:
    """T x D frame features. ``frame_times`` holds frame centres in seconds."""

    values: np.ndarray
    frame_times: np.ndarray | None = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise FormatError("FeatureMatrix values must be 2-D")
        self.values = values

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.T


# -- WAV ----------------------------------------------------------------------

def decode_wav(data: bytes, source_id: str = "") -> AudioClip:
    """Decode 16-bit PCM or 32-bit float WAV bytes to a mono clip in [-1, 1]."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE file")
    try:
        rate, raw = scipy.io.wavfile.read(io.BytesIO(data))
    except ValueError as exc:
        msg = str(exc)
        if "Unknown wave file format" in msg or "Unsupported" in msg or "bit depth" in msg:
            raise UnsupportedError(msg) from exc
        raise FormatError(msg) from exc
    if raw.dtype == np.int16:
        samples = raw.astype(np.float64) / 32768.0
    elif raw.dtype == np.float32:
        samples = raw.astype(np.float64)
    else:
        raise UnsupportedError(f"unsupported sample encoding {raw.dtype}; need int16 or float32")
    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise UnsupportedError(f"{samples.shape[1]} channels; only mono or stereo")
        samples = samples.mean(axis=1)
    if not np.all(np.isfinite(samples)):
        raise FormatError("non-finite samples")
    return AudioClip(np.clip(samples, -1.0, 1.0), int(rate), source_id)


def encode_wav(clip: AudioClip) -> bytes:
    """16-bit PCM encoding, used for synthetic corpora."""
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype(np.int16)
    buf = io.BytesIO()
    scipy.io.wavfile.write(buf, clip.sample_rate, pcm)
    return buf.getvalue()


def read_wav(path) -> AudioClip:
    path = Path(path)
    return decode_wav(path.read_bytes(), source_id=path.stem)


def write_wav(path, clip: AudioClip) -> None:
    Path(path).write_bytes(encode_wav(clip))


# -- framing / MFCC ------------------------------------------------------------

def frame_count(n_samples: int, window: int, hop: int) -> int:
    if n_samples < window:
        return 0
    return (n_samples - window) // hop + 1


def frame_signal(clip: AudioClip, cfg: FrameConfig) -> np.ndarray:
    """Cut into Hamming-windowed frames, shape (n_frames, W). Trailing partial frames are dropped."""
    W = cfg.window_length(clip.sample_rate)
    H = cfg.hop_length(clip.sample_rate)
    n = len(clip.samples)
    if W < 1 or n < W:
        raise TooShortError(f"clip has {n} samples, shorter than one {W}-sample window")
    count = frame_count(n, W, H)
    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, W)[::H][:count]
    return frames * np.hamming(W)


def frame_times(n_frames: int, sample_rate: int, cfg: FrameConfig) -> np.ndarray:
    W = cfg.window_length(sample_rate)
    H = cfg.hop_length(sample_rate)
    return (np.arange(n_frames) * H + W / 2.0) / sample_rate


def fft_size(window: int) -> int:
    return 1 << max(0, int(window - 1).bit_length())


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Band edges (n_mels + 2 points) equally spaced on the HTK mel scale."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters with unit peak, evaluated at each rfft bin frequency."""
    if fmax is None:
        fmax = sample_rate / 2.0
    edges = mel_center_frequencies(n_mels, fmin, fmax)
    bins = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lower) / (center - lower)
    falling = (upper - bins[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def power_spectrum(frames: np.ndarray, n_fft: int) -> np.ndarray:
    spec = np.fft.rfft(frames, n=n_fft, axis=1)
    return spec.real ** 2 + spec.imag ** 2


def log_mel_energies(frames: np.ndarray, sample_rate: int, cfg: FrameConfig) -> np.ndarray:
    n_fft = fft_size(frames.shape[1])
    fb = mel_filterbank(cfg.n_mels, n_fft, sample_rate, cfg.fmin, cfg.fmax)
    energies = power_spectrum(frames, n_fft) @ fb.T
    return np.log(np.maximum(energies, LOG_FLOOR))


def mfcc(frames: np.ndarray, cfg: FrameConfig, sample_rate: int) -> FeatureMatrix:
    """Static cepstra for windowed frames from :func:`frame_signal`."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    logmel = log_mel_energies(frames, sample_rate, cfg)
    ceps = scipy.fft.dct(logmel, type=2, norm="ortho", axis=1)
    start = 0 if cfg.include_c0 else 1
    out = ceps[:, start:start + cfg.n_ceps]
    if cfg.append_energy:
        energy = np.log(np.maximum(np.sum(frames ** 2, axis=1), LOG_FLOOR))
        out = np.column_stack([out, energy])
    return FeatureMatrix(np.ascontiguousarray(out),
                         frame_times(frames.shape[0], sample_rate, cfg))


def delta(values: np.ndarray, width: int) -> np.ndarray:
    """Regression deltas: sum_n n (c[t+n] - c[t-n]) / (2 sum_n n^2), edges replicated."""
    values = np.asarray(values, dtype=np.float64)
    T = values.shape[0]
    padded = np.pad(values, ((width, width), (0, 0)), mode="edge")
    out = np.zeros_like(values)
    for n in range(1, width + 1):
        out += n * (padded[width + n:width + n + T] - padded[width - n:width - n + T])
    return out / (2.0 * sum(n * n for n in range(1, width + 1)))


def append_deltas(m: FeatureMatrix, width: int = 2) -> FeatureMatrix:
    if m.T == 0:
        raise EmptyInputError("cannot take deltas of an empty matrix")
    d1 = delta(m.values, width)
    d2 = delta(d1, width)
    return FeatureMatrix(np.hstack([m.values, d1, d2]), m.frame_times)


def mean_pool(m: FeatureMatrix) -> np.ndarray:
    if m.T == 0:
        raise EmptyInputError("cannot pool an empty matrix")
    return m.values.mean(axis=0)


def extract(clip: AudioClip, cfg: FrameConfig) -> FeatureMatrix:
    """Frames -> MFCC -> deltas, the full front end for one clip."""
    frames = frame_signal(clip, cfg)
    return append_deltas(mfcc(frames, cfg, clip.sample_rate), cfg.delta_width)


# -- text cache format -----------------------------------------------------------
# First line "D T", then T rows of D whitespace-separated values.

def format_feature_matrix(m: FeatureMatrix) -> str:
    lines = [f"{m.dim} {m.T}"]
    lines.extend(" ".join(repr(float(v)) for v in row) for row in m.values)
    return "\n".join(lines) + "\n"


def parse_feature_matrix(text: str) -> FeatureMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty feature file")
    try:
        dim, T = (int(tok) for tok in lines[0].split())
    except ValueError:
        raise ParseError("header must be 'D T'", 1) from None
    if len(lines) - 1 != T:
        raise ParseError(f"header declares {T} rows, found {len(lines) - 1}")
    rows = np.empty((T, dim))
    for i, ln in enumerate(lines[1:]):
        toks = ln.split()
        if len(toks) != dim:
            raise ParseError(f"expected {dim} values, got {len(toks)}", i + 2)
        try:
            rows[i] = [float(t) for t in toks]
        except ValueError:
            raise ParseError("non-numeric value", i + 2) from None
    return FeatureMatrix(rows)


def save_feature_matrix(path, m: FeatureMatrix) -> None:
    Path(path).write_text(format_feature_matrix(m))


def load_feature_matrix(path) -> FeatureMatrix:
    return parse_feature_matrix(Path(path).read_text())
