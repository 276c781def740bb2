"""End-to-end scene classification and event detection runs plus report files."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import embeddings as emb
from .config import RunConfig
from .errors import InputError, InsufficientDataError, PipelineIOError, TooShortError
from .features import (
    FeatureMatrix,
    extract,
    load_feature_matrix,
    read_wav,
    save_feature_matrix,
)
from .fusion import FusionEnsemble, fuse_many
from .gmm import fit_em
from .kernels import KernelSpec
from .metrics import SegmentScore, accuracy, confusion, score_lines, segment_based_scores
from .sed import (
    GENERIC,
    build_generic_class,
    carve_events,
    clip_vector,
    detect,
    detections_to_events,
    format_annotations,
    parse_annotations,
    segment_scene,
    time_perturb,
)
from .svm import select_from_splits, select_hyperparameters, stratified_folds, train_multiclass

log = logging.getLogger(__name__)


# -- manifests ------------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldManifest:
    fold: int
    train: tuple   # ((relative path, label), ...)
    test: tuple

    def __post_init__(self):
        overlap = {p for p, _ in self.train} & {p for p, _ in self.test}
        if overlap:
            raise InputError(f"fold {self.fold}: files in both train and test: {sorted(overlap)[:3]}")


def read_manifest(path) -> tuple:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise InputError(f"{path}:{lineno}: expected 'file<TAB>label'")
        rows.append((parts[0].strip(), parts[1].strip()))
    return tuple(rows)


def discover_folds(root, only=()) -> list[FoldManifest]:
    setup = Path(root) / "evaluation_setup"
    found = []
    for p in sorted(setup.glob("fold*_train.txt")):
        m = re.fullmatch(r"fold(\d+)_train\.txt", p.name)
        if not m:
            continue
        k = int(m.group(1))
        if only and k not in only:
            continue
        test = setup / f"fold{k}_evaluate.txt"
        if not test.exists():
            raise InputError(f"missing {test}")
        found.append(FoldManifest(k, read_manifest(p), read_manifest(test)))
    if not found:
        raise InputError(f"no fold manifests under {setup}")
    return sorted(found, key=lambda f: f.fold)


def _check_files(root: Path, manifests):
    missing = sorted({p for f in manifests for p, _ in f.train if not (root / p).exists()})
    if missing:
        raise InputError(f"{len(missing)} training file(s) missing, e.g. {missing[0]}")
    for f in manifests:
        for p, _ in f.test:
            if not (root / p).exists():
                log.error("fold %d: test file missing: %s", f.fold, p)


class FeatureStore:
    """Computes each file's features once, optionally caching the text form on disk."""

    def __init__(self, root: Path, cfg, cache_dir: Path | None):
        self.root = root
        self.cfg = cfg
        self.cache_dir = cache_dir
        self._mem: dict[str, FeatureMatrix] = {}

    def get(self, rel: str) -> FeatureMatrix:
        if rel in self._mem:
            return self._mem[rel]
        cached = None
        if self.cache_dir is not None:
            cached = self.cache_dir / (re.sub(r"[^\w.-]", "_", rel) + ".feat")
        if cached is not None and cached.exists():
            m = load_feature_matrix(cached)
        else:
            m = extract(read_wav(self.root / rel), self.cfg)
            if cached is not None:
                cached.parent.mkdir(parents=True, exist_ok=True)
                save_feature_matrix(cached, m)
                # reload so cached and fresh runs see identical numbers
                m = load_feature_matrix(cached)
        self._mem[rel] = m
        return m


# -- scene classification -------------------------------------------------------------------

@dataclass
class ClassifierRun:
    fold: int
    classifier: str
    files: list
    truth: list
    predicted: list
    C: float | None = None
    gamma: float | None = None
    cv_accuracy: float | None = None


@dataclass
class SceneResults:
    labels: tuple
    folds: tuple
    classifiers: list           # ordered ids, fused last when present
    runs: dict = field(default_factory=dict)   # (fold, classifier) -> ClassifierRun
    config_text: str = ""

    def fold_accuracy(self, fold, clf) -> float:
        r = self.runs[(fold, clf)]
        return accuracy(r.truth, r.predicted)

    def scene_accuracy(self, fold, clf, scene) -> float | None:
        r = self.runs[(fold, clf)]
        pairs = [(t, p) for t, p in zip(r.truth, r.predicted) if t == scene]
        return sum(t == p for t, p in pairs) / len(pairs) if pairs else None

    def overall(self, clf) -> float:
        return float(np.mean([self.fold_accuracy(f, clf) for f in self.folds]))


def classifier_id(kind: str, M: int, kernel: str) -> str:
    return f"{kind}/M{M}/{kernel}"


def _fold_seed(seed: int, fold: int, M: int = 0) -> int:
    return seed * 1_000_003 + fold * 1009 + M


def run_scene_pipeline(cfg: RunConfig) -> SceneResults:
    root = Path(cfg.data_dir)
    manifests = discover_folds(root, cfg.folds)
    _check_files(root, manifests)
    frame_cfg = cfg.frame_config()
    cache = Path(cfg.output_dir) / "features" if cfg.cache_features else None
    store = FeatureStore(root, frame_cfg, cache)
    labels = tuple(sorted({lab for f in manifests for _, lab in (*f.train, *f.test)}))
    rmap = emb.MapConfig(cfg.relevance_factor)

    plan = []
    for M in cfg.components:
        for kind in cfg.kinds:
            kernels = cfg.alpha_kernels if kind == "alpha" else cfg.kernels
            plan.extend((kind, M, k.upper()) for k in kernels)
    clf_ids = [classifier_id(*p) for p in plan]
    members = _fusion_members(cfg, clf_ids)
    results = SceneResults(labels, tuple(f.fold for f in manifests), list(clf_ids),
                           config_text=cfg.to_ini())
    if members:
        results.classifiers.append("fused")

    for fold in manifests:
        train_files = [p for p, _ in fold.train]
        test_files = [p for p, _ in fold.test if (root / p).exists()]
        truth_by_file = dict(fold.test)
        train_labels = [lab for _, lab in fold.train]
        test_truth = [truth_by_file[p] for p in test_files]
        # background model sees training-fold frames only
        for M in cfg.components:
            seed = _fold_seed(cfg.seed, fold.fold, M)
            g = _fit_background(store, train_files, M, cfg, seed)
            inner = _inner_splits(store, train_files, train_labels, M, cfg, seed, rmap) \
                if cfg.cv_refit_gmm else None
            for kind in cfg.kinds:
                Xtr = np.array([emb.embed(g, store.get(p), kind, rmap).values for p in train_files])
                Xte = np.array([emb.embed(g, store.get(p), kind, rmap).values for p in test_files])
                kernels = cfg.alpha_kernels if kind == "alpha" else cfg.kernels
                for kname in kernels:
                    kname = kname.upper()
                    cid = classifier_id(kind, M, kname)
                    normalize = cfg.normalize_for(kname)
                    spec = KernelSpec(kname, cfg.gamma if kname in ("RK", "ECK", "EHK") else None)
                    if inner is not None:
                        sel = select_from_splits(inner[kind], spec, cfg.c_grid, normalize, Xtr,
                                                 cfg.gamma_grid, cfg.svm_tol)
                    else:
                        sel = select_hyperparameters(Xtr, train_labels, spec, cfg.c_grid, normalize,
                                                     cfg.cv_folds, seed, cfg.gamma_grid, cfg.svm_tol)
                    final_spec = KernelSpec(kname, sel.gamma) if sel.gamma is not None else spec
                    model = train_multiclass(Xtr, train_labels, final_spec, sel.C, normalize, cfg.svm_tol)
                    pred = model.predict(Xte) if len(Xte) else []
                    log.info("fold %d %s: C=%g cv=%.3f test=%.3f", fold.fold, cid, sel.C,
                             sel.cv_accuracy, accuracy(test_truth, pred) if pred else float("nan"))
                    results.runs[(fold.fold, cid)] = ClassifierRun(
                        fold.fold, cid, test_files, test_truth, list(pred), sel.C, sel.gamma,
                        sel.cv_accuracy)
        if members:
            cv = {m: results.runs[(fold.fold, m)].cv_accuracy for m in members}
            ensemble = FusionEnsemble.by_accuracy(cv)
            fused = fuse_many({m: results.runs[(fold.fold, m)].predicted for m in members}, ensemble)
            results.runs[(fold.fold, "fused")] = ClassifierRun(
                fold.fold, "fused", test_files, test_truth, fused)
    return results


def _fit_background(store, files, M, cfg, seed):
    if not files:
        raise InsufficientDataError("no training files to fit the background GMM")
    frames = np.vstack([store.get(p).values for p in files])
    if frames.shape[0] > cfg.max_gmm_frames:
        rng = np.random.default_rng(seed)
        frames = frames[np.sort(rng.choice(frames.shape[0], cfg.max_gmm_frames, replace=False))]
    log.info("fitting GMM M=%d on %d frames", M, frames.shape[0])
    return fit_em(frames, M, cfg.em_config(seed))


def _inner_splits(store, files, labels, M, cfg, seed, rmap):
    """Inner CV splits whose embeddings come from a GMM that never saw the held-out clips.

    Embeddings from a GMM fitted on every training clip are biased for CV:
    at convergence the posterior-weighted deviations of a component's clips
    sum to zero, so a held-out clip mirrors the rest of its class.
    """
    splits = {kind: [] for kind in cfg.kinds}
    for k, test in enumerate(stratified_folds(labels, cfg.cv_folds, seed)):
        train = np.setdiff1d(np.arange(len(files)), test)
        if not len(test) or len({labels[i] for i in train}) < 2:
            continue
        g = _fit_background(store, [files[i] for i in train], M, cfg, seed + 7919 * (k + 1))
        for kind in cfg.kinds:
            def embed_all(idx):
                return np.array([emb.embed(g, store.get(files[i]), kind, rmap).values for i in idx])
            splits[kind].append((embed_all(train), [labels[i] for i in train],
                                 embed_all(test), [labels[i] for i in test]))
    return splits


def _fusion_members(cfg: RunConfig, clf_ids):
    if not cfg.fusion:
        return []
    if tuple(cfg.fusion_members) == ("default",):
        members = [c for c in clf_ids if not c.startswith("alpha/")]
    else:
        members = list(cfg.fusion_members)
        unknown = [m for m in members if m not in clf_ids]
        if unknown:
            raise InputError(f"fusion members not among trained classifiers: {unknown}")
    return members if len(members) >= 2 else []


# -- event detection --------------------------------------------------------------------------

@dataclass
class SedRun:
    scene: str
    condition: str
    fold: int
    score: SegmentScore
    n_event_clips: int
    n_generic_clips: int
    n_training_vectors: int
    C: float | None = None
    classes: tuple = ()


@dataclass
class SedResults:
    scenes: tuple
    conditions: tuple
    folds: dict                       # scene -> fold ids
    runs: dict = field(default_factory=dict)   # (scene, condition, fold) -> SedRun
    config_text: str = ""

    def total(self, scene, condition) -> SegmentScore:
        out = SegmentScore()
        for f in self.folds[scene]:
            out = out + self.runs[(scene, condition, f)].score
        return out


def _load_recording(sdir: Path, rel: str):
    clip = read_wav(sdir / rel)
    ann_path = sdir / "meta" / (Path(rel).stem + ".ann")
    anns = parse_annotations(ann_path.read_text()) if ann_path.exists() else []
    return clip, anns


def _vectors(clips, frame_cfg):
    out = []
    for label, clip in clips:
        try:
            out.append((label, clip_vector(clip, frame_cfg)))
        except TooShortError:
            log.warning("%s shorter than one analysis window; skipped", clip.source_id)
    return out


def run_sed_pipeline(cfg: RunConfig) -> SedResults:
    root = Path(cfg.data_dir)
    scenes = tuple(cfg.scenes) or tuple(sorted(p.name for p in root.iterdir()
                                               if (p / "evaluation_setup").is_dir()))
    if not scenes:
        raise InputError(f"no scene directories with evaluation_setup/ under {root}")
    frame_cfg = cfg.frame_config()
    out_dir = Path(cfg.output_dir)
    results = SedResults(scenes, tuple(cfg.conditions), {}, config_text=cfg.to_ini())
    for scene in scenes:
        sdir = root / scene
        manifests = discover_folds(sdir, cfg.folds)
        _check_files(sdir, manifests)
        results.folds[scene] = tuple(f.fold for f in manifests)
        for fold in manifests:
            seed = _fold_seed(cfg.seed, fold.fold)
            train = [_load_recording(sdir, p) for p, _ in fold.train]
            events = [ev for clip, anns in train for ev in carve_events(clip, anns)]
            generic = build_generic_class(train, cfg.min_gap, cfg.generic_n, seed)
            if not generic and any(c != "plain" for c in cfg.conditions):
                log.warning("%s fold %d: no unannotated gaps for the generic class", scene, fold.fold)
            base_vecs = _vectors(events, frame_cfg)
            gen_vecs = [(GENERIC, v) for _, v in _vectors([(GENERIC, c) for c in generic], frame_cfg)]
            pert_vecs = None
            for cond in cfg.conditions:
                train_vecs = list(base_vecs)
                if cond in ("G", "GP"):
                    train_vecs += gen_vecs
                select_vecs = list(train_vecs)
                if cond == "GP":
                    if pert_vecs is None:
                        pert_clips = [(lab, pc) for lab, c in events
                                      for pc in time_perturb(c, cfg.perturb_config())
                                      if pc is not c]
                        pert_vecs = _vectors(pert_clips, frame_cfg)
                    train_vecs += pert_vecs
                run = _train_and_detect(cfg, sdir, fold, scene, cond, seed, frame_cfg,
                                        select_vecs, train_vecs, out_dir)
                run.n_event_clips = len(base_vecs)
                run.n_generic_clips = len(gen_vecs) if cond in ("G", "GP") else 0
                results.runs[(scene, cond, fold.fold)] = run
    return results


def _train_and_detect(cfg, sdir, fold, scene, cond, seed, frame_cfg, select_vecs, train_vecs, out_dir):
    labels = [lab for lab, _ in train_vecs]
    X = np.array([v for _, v in train_vecs])
    kname = cfg.sed_kernel.upper()
    spec = KernelSpec(kname, cfg.gamma if kname in ("RK", "ECK", "EHK") else None)
    normalize = cfg.normalize_for(kname)
    # hyperparameters chosen without perturbed copies so inner folds stay independent
    sel = select_hyperparameters(np.array([v for _, v in select_vecs]), [lab for lab, _ in select_vecs],
                                 spec, cfg.c_grid, normalize, cfg.cv_folds, seed, cfg.gamma_grid,
                                 cfg.svm_tol)
    final_spec = KernelSpec(kname, sel.gamma) if sel.gamma is not None else spec
    model = train_multiclass(X, labels, final_spec, sel.C, normalize, cfg.svm_tol)
    total = SegmentScore()
    det_dir = out_dir / "detections" / scene / cond / f"fold{fold.fold}"
    det_dir.mkdir(parents=True, exist_ok=True)
    for rel, _ in fold.test:
        if not (sdir / rel).exists():
            continue
        clip, ref = _load_recording(sdir, rel)
        preds = detect(model, clip, segment_scene(clip, cfg.segment_seconds), frame_cfg)
        hyp = detections_to_events(preds)
        (det_dir / (Path(rel).stem + ".txt")).write_text(format_annotations(hyp))
        total = total + segment_based_scores(ref, hyp, clip.duration, cfg.segment_seconds)
    log.info("%s %s fold %d: ER=%.3f F=%.3f", scene, cond, fold.fold, total.error_rate, total.f_score)
    return SedRun(scene, cond, fold.fold, total, 0, 0, len(train_vecs), sel.C, model.classes)


# -- reports ------------------------------------------------------------------------------------

def _pct(v):
    return "   -  " if v is None else f"{100 * v:6.1f}"


def _safe(name: str) -> str:
    return re.sub(r"[^\w.-]", "_", name)


def scene_report_text(res: SceneResults) -> str:
    lines = ["Scene classification: overall accuracy (%) per fold", ""]
    width = max(len(c) for c in res.classifiers)
    head = f"{'classifier':<{width}} " + " ".join(f"fold{f:<2}" for f in res.folds) + "    avg"
    lines += [head, "-" * len(head)]
    for clf in res.classifiers:
        cells = " ".join(_pct(res.fold_accuracy(f, clf)) for f in res.folds)
        lines.append(f"{clf:<{width}} {cells} {_pct(res.overall(clf))}")
    for clf in res.classifiers:
        lines += ["", f"Per-scene accuracy (%) for {clf}", ""]
        sw = max(len(s) for s in (*res.labels, "Overall"))
        head = f"{'scene':<{sw}} " + " ".join(f"fold{f:<2}" for f in res.folds) + "    avg"
        lines += [head, "-" * len(head)]
        for scene in res.labels:
            vals = [res.scene_accuracy(f, clf, scene) for f in res.folds]
            present = [v for v in vals if v is not None]
            avg = float(np.mean(present)) if present else None
            lines.append(f"{scene:<{sw}} " + " ".join(_pct(v) for v in vals) + f" {_pct(avg)}")
        lines.append(f"{'Overall':<{sw}} " + " ".join(_pct(res.fold_accuracy(f, clf)) for f in res.folds)
                     + f" {_pct(res.overall(clf))}")
    return "\n".join(lines) + "\n"


def scene_report_kv(res: SceneResults) -> str:
    lines = []
    for clf in res.classifiers:
        for f in res.folds:
            r = res.runs[(f, clf)]
            lines.append(f"{clf}.fold{f}.accuracy={res.fold_accuracy(f, clf):.6f}")
            if r.C is not None:
                lines.append(f"{clf}.fold{f}.C={r.C!r}")
            if r.gamma is not None:
                lines.append(f"{clf}.fold{f}.gamma={r.gamma!r}")
            for scene in res.labels:
                v = res.scene_accuracy(f, clf, scene)
                if v is not None:
                    lines.append(f"{clf}.fold{f}.{scene}={v:.6f}")
        lines.append(f"{clf}.overall={res.overall(clf):.6f}")
    return "\n".join(lines) + "\n"


def sed_report_text(res: SedResults) -> str:
    lines = ["Sound event detection: segment-based error rate and F-score (1 s grid)", ""]
    head = f"{'scene':<16} {'condition':<9} {'ER':>7} {'F(%)':>7} {'N':>6} {'S':>5} {'D':>5} {'I':>5}"
    lines += [head, "-" * len(head)]
    for scene in res.scenes:
        for cond in res.conditions:
            s = res.total(scene, cond)
            lines.append(f"{scene:<16} {cond:<9} {s.error_rate:7.3f} {100 * s.f_score:7.1f} "
                         f"{s.N:6d} {s.S:5d} {s.D:5d} {s.I:5d}")
    for cond in res.conditions:
        tot = SegmentScore()
        for scene in res.scenes:
            tot = tot + res.total(scene, cond)
        lines.append(f"{'all':<16} {cond:<9} {tot.error_rate:7.3f} {100 * tot.f_score:7.1f} "
                     f"{tot.N:6d} {tot.S:5d} {tot.D:5d} {tot.I:5d}")
    return "\n".join(lines) + "\n"


def sed_report_kv(res: SedResults) -> str:
    lines = []
    for scene in res.scenes:
        for cond in res.conditions:
            for f in res.folds[scene]:
                r = res.runs[(scene, cond, f)]
                prefix = f"{scene}.{cond}.fold{f}."
                lines += score_lines(r.score, prefix)
                lines += [f"{prefix}event_clips={r.n_event_clips}",
                          f"{prefix}generic_clips={r.n_generic_clips}",
                          f"{prefix}training_vectors={r.n_training_vectors}",
                          f"{prefix}C={r.C!r}",
                          f"{prefix}classes={','.join(r.classes)}"]
            lines += score_lines(res.total(scene, cond), f"{scene}.{cond}.")
    return "\n".join(lines) + "\n"


def emit_reports(results, out_dir) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []

        def put(name, text):
            p = out / name
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(text)
            written.append(p)

        put("resolved_config.ini", results.config_text)
        if isinstance(results, SceneResults):
            put("scene_report.txt", scene_report_text(results))
            put("scene_report.kv", scene_report_kv(results))
            for clf in results.classifiers:
                truth, pred = [], []
                for f in results.folds:
                    r = results.runs[(f, clf)]
                    truth += r.truth
                    pred += r.predicted
                    put(f"predictions/fold{f}/{_safe(clf)}.tsv",
                        "".join(f"{a}\t{b}\t{c}\n" for a, b, c in zip(r.files, r.truth, r.predicted)))
                put(f"confusion/{_safe(clf)}.tsv", confusion(truth, pred, results.labels).to_tsv())
        else:
            put("sed_report.txt", sed_report_text(results))
            put("sed_report.kv", sed_report_kv(results))
        return written
    except OSError as exc:
        raise PipelineIOError(f"cannot write reports to {out}: {exc}") from exc
