"""Run configuration: an INI file with one section per stage.

Example::

    [run]
    task = scene
    data_dir = corpus
    output_dir = out
    seed = 0

    [features]
    profile = task1

    [gmm]
    components = 64, 128, 256, 512

    [embeddings]
    kinds = beta_mean, beta_mean_var
    relevance_factor = 20

    [svm]
    kernels = LK, RK
    alpha_kernels = LK, RK, ECK, CK, IK, EHK, HK
    c_grid = 0.1, 1, 10, 100

    [fusion]
    enabled = true
    members = default

    [sed]
    conditions = plain, G, GP

Any key can be overridden as ``section.key=value``.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

from .embeddings import KINDS as EMBEDDING_KINDS
from .errors import ConfigError
from .features import FrameConfig, get_profile
from .gmm import EmConfig
from .kernels import KINDS as KERNEL_KINDS
from .sed import DEFAULT_SPEEDS, PerturbConfig

SED_CONDITIONS = ("plain", "G", "GP")


def _floats(text):
    return tuple(float(v) for v in _words(text))


def _ints(text):
    return tuple(int(v) for v in _words(text))


def _words(text):
    return tuple(w.strip() for w in str(text).replace(",", " ").split() if w.strip())


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    task: str = "scene"
    data_dir: Path = Path(".")
    output_dir: Path = Path("out")
    seed: int = 0
    folds: tuple = ()
    cache_features: bool = True

    profile: str = "task1"
    frame_overrides: dict = field(default_factory=dict)

    components: tuple = (64,)
    em_max_iters: int = 100
    em_rel_tol: float = 1e-5
    var_floor: float = 1e-3
    max_gmm_frames: int = 200_000

    kinds: tuple = ("beta_mean", "beta_mean_var")
    relevance_factor: float = 20.0

    kernels: tuple = ("LK", "RK")
    alpha_kernels: tuple = ("LK", "RK", "ECK", "CK", "IK", "EHK", "HK")
    c_grid: tuple = (0.1, 1.0, 10.0, 100.0)
    cv_folds: int = 3
    cv_refit_gmm: bool = True
    gamma: str = "auto"
    gamma_grid: bool = False
    normalize: str = "auto"
    svm_tol: float = 1e-3

    fusion: bool = True
    fusion_members: tuple = ("default",)

    scenes: tuple = ()
    conditions: tuple = SED_CONDITIONS
    generic_n: int = 60
    min_gap: float = 1.0
    speeds: tuple = DEFAULT_SPEEDS
    segment_seconds: float = 1.0
    sed_kernel: str = "RK"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.task not in ("scene", "sed"):
            raise ConfigError(f"task must be 'scene' or 'sed', got {self.task!r}")
        if not self.components or any(m < 1 for m in self.components):
            raise ConfigError("GMM component counts must be positive integers")
        if self.relevance_factor < 0:
            raise ConfigError("relevance_factor must be >= 0")
        for k in self.kinds:
            if k not in EMBEDDING_KINDS:
                raise ConfigError(f"unknown embedding kind {k!r}")
        for k in (*self.kernels, *self.alpha_kernels, self.sed_kernel):
            if k.upper() not in KERNEL_KINDS:
                raise ConfigError(f"unknown kernel {k!r}")
        for k in self.kernels:
            if k.upper() not in ("LK", "RK"):
                raise ConfigError("supervector (beta) features take LK or RK only")
        if not self.c_grid or any(c <= 0 for c in self.c_grid):
            raise ConfigError("c_grid must hold positive values")
        if self.normalize not in ("auto", "on", "off"):
            raise ConfigError("normalize must be auto, on or off")
        for c in self.conditions:
            if c not in SED_CONDITIONS:
                raise ConfigError(f"unknown SED condition {c!r}")
        PerturbConfig(self.speeds)
        self.frame_config()

    def frame_config(self) -> FrameConfig:
        return get_profile(self.profile, **self.frame_overrides)

    def em_config(self, seed: int) -> EmConfig:
        return EmConfig(max_iters=self.em_max_iters, rel_tol=self.em_rel_tol,
                        var_floor=self.var_floor, seed=seed)

    def perturb_config(self) -> PerturbConfig:
        return PerturbConfig(self.speeds)

    def normalize_for(self, kernel: str) -> bool:
        if self.normalize == "on":
            return True
        if self.normalize == "off":
            return False
        # auto: supervectors only; pooled MFCCs of short segments would have
        # near-constant delta dimensions blown up by z-scoring
        return self.task == "scene" and kernel.upper() in ("LK", "RK")

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        join = lambda vals: ", ".join(str(v) for v in vals)  # noqa: E731
        cp["run"] = {"task": self.task, "data_dir": str(self.data_dir),
                     "output_dir": str(self.output_dir), "seed": str(self.seed),
                     "folds": join(self.folds), "cache_features": str(self.cache_features).lower()}
        feats = {"profile": self.profile}
        feats.update({k: str(v) for k, v in sorted(self.frame_overrides.items())})
        cp["features"] = feats
        cp["gmm"] = {"components": join(self.components), "max_iters": str(self.em_max_iters),
                     "rel_tol": repr(self.em_rel_tol), "var_floor": repr(self.var_floor),
                     "max_frames": str(self.max_gmm_frames)}
        cp["embeddings"] = {"kinds": join(self.kinds), "relevance_factor": repr(self.relevance_factor)}
        cp["svm"] = {"kernels": join(self.kernels), "alpha_kernels": join(self.alpha_kernels),
                     "c_grid": join(repr(c) for c in self.c_grid), "cv_folds": str(self.cv_folds),
                     "cv_refit_gmm": str(self.cv_refit_gmm).lower(),
                     "gamma": self.gamma, "gamma_grid": str(self.gamma_grid).lower(),
                     "normalize": self.normalize, "tol": repr(self.svm_tol)}
        cp["fusion"] = {"enabled": str(self.fusion).lower(), "members": join(self.fusion_members)}
        cp["sed"] = {"scenes": join(self.scenes), "conditions": join(self.conditions),
                     "generic_n": str(self.generic_n), "min_gap": repr(self.min_gap),
                     "speeds": join(repr(s) for s in self.speeds),
                     "segment_seconds": repr(self.segment_seconds), "kernel": self.sed_kernel}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


# section.key -> (attribute, parser)
_SCHEMA = {
    "run.task": ("task", str),
    "run.data_dir": ("data_dir", Path),
    "run.output_dir": ("output_dir", Path),
    "run.seed": ("seed", int),
    "run.folds": ("folds", _ints),
    "run.cache_features": ("cache_features", _bool),
    "features.profile": ("profile", str),
    "gmm.components": ("components", _ints),
    "gmm.max_iters": ("em_max_iters", int),
    "gmm.rel_tol": ("em_rel_tol", float),
    "gmm.var_floor": ("var_floor", float),
    "gmm.max_frames": ("max_gmm_frames", int),
    "embeddings.kinds": ("kinds", _words),
    "embeddings.relevance_factor": ("relevance_factor", float),
    "svm.kernels": ("kernels", _words),
    "svm.alpha_kernels": ("alpha_kernels", _words),
    "svm.c_grid": ("c_grid", _floats),
    "svm.cv_folds": ("cv_folds", int),
    "svm.cv_refit_gmm": ("cv_refit_gmm", _bool),
    "svm.gamma": ("gamma", str),
    "svm.gamma_grid": ("gamma_grid", _bool),
    "svm.normalize": ("normalize", str),
    "svm.tol": ("svm_tol", float),
    "fusion.enabled": ("fusion", _bool),
    "fusion.members": ("fusion_members", _words),
    "sed.scenes": ("scenes", _words),
    "sed.conditions": ("conditions", _words),
    "sed.generic_n": ("generic_n", int),
    "sed.min_gap": ("min_gap", float),
    "sed.speeds": ("speeds", _floats),
    "sed.segment_seconds": ("segment_seconds", float),
    "sed.kernel": ("sed_kernel", str),
}
_FRAME_KEYS = {f.name: f.type for f in fields(FrameConfig)}


def _apply(values: dict, key: str, raw: str, base: Path | None):
    if key in _SCHEMA:
        attr, parse = _SCHEMA[key]
        try:
            value = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        if isinstance(value, Path) and base is not None and not value.is_absolute():
            value = base / value
        values[attr] = value
        return
    section, _, name = key.partition(".")
    if section == "features" and name in _FRAME_KEYS:
        conv = {"int": int, "float": float, "bool": _bool}.get(str(_FRAME_KEYS[name]).split(" ")[0], float)
        values.setdefault("frame_overrides", {})[name] = conv(raw)
        return
    raise ConfigError(f"unknown config key {key!r}")


def load_config(path=None, overrides=(), **direct) -> RunConfig:
    """Read an INI file (paths relative to it), then apply ``section.key=value`` overrides."""
    values: dict = {}
    if path is not None:
        path = Path(path)
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        for section in cp.sections():
            for name, raw in cp.items(section):
                if raw.strip() == "" and f"{section}.{name}" in ("run.folds", "sed.scenes"):
                    continue
                _apply(values, f"{section}.{name}", raw, path.parent)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        _apply(values, key.strip(), raw.strip(), None)
    values.update({k: v for k, v in direct.items() if v is not None})
    if values.get("task") == "sed" and "profile" not in values:
        values["profile"] = "task3"
    return RunConfig(**values)
