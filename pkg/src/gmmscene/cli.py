"""Command line entry point: ``gmmscene <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .embeddings import KINDS, MapConfig, embed, load_embedding, save_embedding
from .errors import GmmSceneError, InputError
from .features import extract, get_profile, load_feature_matrix, read_wav, save_feature_matrix
from .fusion import FusionEnsemble, fuse_many
from .gmm import EmConfig, fit_em, load_gmm, save_gmm
from .kernels import KernelSpec
from .metrics import accuracy, confusion, score_lines, segment_based_scores
from .pipeline import (
    SedResults,
    _load_recording,
    _vectors,
    emit_reports,
    run_scene_pipeline,
    run_sed_pipeline,
    discover_folds,
)
from .sed import (
    GENERIC,
    build_generic_class,
    carve_events,
    detect,
    parse_annotations,
    segment_scene,
    time_perturb,
    write_detections,
)
from .svm import load_model, save_model, select_hyperparameters, train_multiclass
from .synth import make_event_corpus, make_scene_corpus

log = logging.getLogger("gmmscene")


def _read_pairs(path):
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if line.strip():
            parts = line.split("\t")
            if len(parts) < 2:
                raise InputError(f"{path}:{lineno}: expected two tab-separated columns")
            rows.append((parts[0], parts[1].strip()))
    return rows


def _out_path(directory, src, suffix):
    return Path(directory) / (Path(src).stem + suffix)


# -- stage commands -----------------------------------------------------------------------

def cmd_features(args):
    cfg = get_profile(args.profile)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    for wav in args.wavs:
        m = extract(read_wav(wav), cfg)
        save_feature_matrix(_out_path(args.out, wav, ".feat"), m)
        log.info("%s: %d x %d", wav, m.T, m.dim)


def cmd_train_gmm(args):
    data = np.vstack([load_feature_matrix(p).values for p in args.feats])
    g = fit_em(data, args.components, EmConfig(max_iters=args.max_iters, seed=args.seed))
    save_gmm(args.out, g)


def cmd_embed(args):
    g = load_gmm(args.gmm)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    for p in args.feats:
        e = embed(g, load_feature_matrix(p), args.kind, MapConfig(args.relevance_factor))
        save_embedding(_out_path(args.out, p, ".emb"), e)


def _spec(kind, gamma):
    return KernelSpec(kind, None if gamma is None else (gamma if gamma == "auto" else float(gamma)))


def cmd_train_svm(args):
    rows = _read_pairs(args.list)
    base = Path(args.list).parent
    X = np.array([load_embedding(base / p).values for p, _ in rows])
    labels = [lab for _, lab in rows]
    spec = _spec(args.kernel, args.gamma)
    normalize = args.normalize if args.normalize is not None else spec.kind in ("LK", "RK")
    if args.C is not None:
        C = args.C
    else:
        sel = select_hyperparameters(X, labels, spec, tuple(args.c_grid), normalize, args.cv_folds,
                                     args.seed)
        C = sel.C
        spec = KernelSpec(spec.kind, sel.gamma) if sel.gamma is not None else spec
        log.info("selected C=%g (cv accuracy %.3f)", C, sel.cv_accuracy)
    save_model(args.out, train_multiclass(X, labels, spec, C, normalize))


def cmd_classify(args):
    model = load_model(args.model)
    X = np.array([load_embedding(p).values for p in args.embs])
    lines = "".join(f"{p}\t{lab}\n" for p, lab in zip(args.embs, model.predict(X)))
    _emit(lines, args.out)


def cmd_fuse(args):
    preds = {}
    order = []
    for p in args.predictions:
        rows = _read_pairs(p)
        preds[p] = [lab for _, lab in rows]
        order.append([f for f, _ in rows])
    if any(o != order[0] for o in order):
        raise InputError("prediction files must list the same items in the same order")
    fused = fuse_many(preds, FusionEnsemble(tuple(args.predictions)))
    _emit("".join(f"{f}\t{lab}\n" for f, lab in zip(order[0], fused)), args.out)


def cmd_sed_train(args):
    sdir = Path(args.scene_dir)
    fold = next((f for f in discover_folds(sdir) if f.fold == args.fold), None)
    if fold is None:
        raise InputError(f"fold {args.fold} not found under {sdir}")
    cfg = get_profile(args.profile)
    train = [_load_recording(sdir, p) for p, _ in fold.train]
    events = [ev for clip, anns in train for ev in carve_events(clip, anns)]
    clips = list(events)
    if args.generic:
        clips += [(GENERIC, c) for c in build_generic_class(train, args.min_gap, args.generic_n, args.seed)]
    if args.perturb:
        clips += [(lab, pc) for lab, c in events for pc in time_perturb(c) if pc is not c]
    vecs = _vectors(clips, cfg)
    X = np.array([v for _, v in vecs])
    labels = [lab for lab, _ in vecs]
    spec = _spec(args.kernel, "auto" if args.kernel.upper() in ("RK", "ECK", "EHK") else None)
    sel = select_hyperparameters(X, labels, spec, tuple(args.c_grid), True, 3, args.seed)
    spec = KernelSpec(spec.kind, sel.gamma) if sel.gamma is not None else spec
    save_model(args.out, train_multiclass(X, labels, spec, sel.C, True))
    log.info("trained on %d clips, classes %s", len(vecs), sorted(set(labels)))


def cmd_sed_detect(args):
    model = load_model(args.model)
    cfg = get_profile(args.profile)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    for wav in args.wavs:
        clip = read_wav(wav)
        preds = detect(model, clip, segment_scene(clip, args.segment), cfg)
        _out_path(args.out, wav, ".txt").write_text(write_detections(preds))


def cmd_score(args):
    if args.task == "scene":
        truth = dict(_read_pairs(args.ref))
        pred = _read_pairs(args.hyp)
        t = [truth[f] for f, _ in pred]
        p = [lab for _, lab in pred]
        labels = sorted(set(t) | set(p))
        text = f"accuracy={accuracy(t, p):.6f}\n" + confusion(t, p, labels).to_tsv()
    else:
        if args.duration is None:
            raise InputError("--duration is required for SED scoring")
        ref = parse_annotations(Path(args.ref).read_text())
        hyp = parse_annotations(Path(args.hyp).read_text())
        text = "\n".join(score_lines(segment_based_scores(ref, hyp, args.duration, args.grid))) + "\n"
    _emit(text, args.out)


def _run(args, runner):
    overrides = list(args.set or [])
    cfg = load_config(args.config, overrides,
                      data_dir=Path(args.data) if args.data else None,
                      output_dir=Path(args.output) if args.output else None,
                      seed=args.seed)
    results = runner(cfg)
    written = emit_reports(results, cfg.output_dir)
    name = "sed_report.txt" if isinstance(results, SedResults) else "scene_report.txt"
    sys.stdout.write((Path(cfg.output_dir) / name).read_text())
    log.info("wrote %d files under %s", len(written), cfg.output_dir)


def cmd_run_scene(args):
    args.set = ["run.task=scene", *(args.set or [])]
    _run(args, run_scene_pipeline)


def cmd_run_sed(args):
    args.set = ["run.task=sed", *(args.set or [])]
    _run(args, run_sed_pipeline)


def cmd_synth(args):
    if args.task == "scene":
        make_scene_corpus(args.out, n_per_class=args.n, n_folds=args.folds, seed=args.seed)
    else:
        make_event_corpus(args.out, scenes=tuple(args.scenes), n_recordings=args.n,
                          n_folds=args.folds, seed=args.seed)
    log.info("synthetic %s corpus written to %s", args.task, args.out)


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- parser -----------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmmscene", description="GMM embedding + kernel SVM audio toolkit")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("features", help="WAV -> MFCC+deltas text matrices")
    s.add_argument("wavs", nargs="+")
    s.add_argument("--profile", default="task1", choices=["task1", "task3"])
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train-gmm", help="fit a diagonal GMM on feature files")
    s.add_argument("feats", nargs="+")
    s.add_argument("-M", "--components", type=int, default=64)
    s.add_argument("--max-iters", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_gmm)

    s = sub.add_parser("embed", help="feature files -> alpha / beta embeddings")
    s.add_argument("feats", nargs="+")
    s.add_argument("--gmm", required=True)
    s.add_argument("--kind", choices=KINDS, default="beta_mean")
    s.add_argument("-r", "--relevance-factor", type=float, default=20.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("train-svm", help="train a one-vs-one SVM from an embedding list")
    s.add_argument("--list", required=True, help="TSV: embedding path<TAB>label")
    s.add_argument("--kernel", default="LK")
    s.add_argument("--gamma", default="auto")
    s.add_argument("--C", type=float, default=None, help="fixed C; omit to grid-search")
    s.add_argument("--c-grid", type=float, nargs="+", default=[0.1, 1, 10, 100])
    s.add_argument("--cv-folds", type=int, default=3)
    s.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_svm)

    s = sub.add_parser("classify", help="predict labels for embedding files")
    s.add_argument("embs", nargs="+")
    s.add_argument("--model", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("fuse", help="majority vote over prediction TSVs (argument order = priority)")
    s.add_argument("predictions", nargs="+")
    s.add_argument("--out")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("sed-train", help="train an event classifier for one scene fold")
    s.add_argument("--scene-dir", required=True)
    s.add_argument("--fold", type=int, default=1)
    s.add_argument("--generic", action="store_true")
    s.add_argument("--perturb", action="store_true")
    s.add_argument("--generic-n", type=int, default=60)
    s.add_argument("--min-gap", type=float, default=1.0)
    s.add_argument("--kernel", default="RK")
    s.add_argument("--c-grid", type=float, nargs="+", default=[0.1, 1, 10, 100])
    s.add_argument("--profile", default="task3", choices=["task1", "task3"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sed_train)

    s = sub.add_parser("sed-detect", help="one-second segment detection on scene recordings")
    s.add_argument("wavs", nargs="+")
    s.add_argument("--model", required=True)
    s.add_argument("--profile", default="task3", choices=["task1", "task3"])
    s.add_argument("--segment", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sed_detect)

    s = sub.add_parser("score", help="accuracy/confusion or segment-based ER/F")
    s.add_argument("--task", choices=["scene", "sed"], required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--hyp", required=True)
    s.add_argument("--duration", type=float)
    s.add_argument("--grid", type=float, default=1.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_score)

    for name, func, helptext in (("run-scene", cmd_run_scene, "full scene classification run"),
                                 ("run-sed", cmd_run_sed, "full sound event detection run")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config")
        s.add_argument("--data")
        s.add_argument("--output")
        s.add_argument("--seed", type=int)
        s.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
        s.set_defaults(func=func)

    s = sub.add_parser("synth-corpus", help="write a synthetic scene or event corpus")
    s.add_argument("--task", choices=["scene", "sed"], default="scene")
    s.add_argument("--out", required=True)
    s.add_argument("-n", type=int, default=20, help="clips per class (scene) or recordings per scene (sed)")
    s.add_argument("--folds", type=int, default=2)
    s.add_argument("--scenes", nargs="+", default=["home"])
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except GmmSceneError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        log.error("%s", exc)
        return 6
    return 0


if __name__ == "__main__":
    sys.exit(main())
