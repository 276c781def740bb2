import numpy as np
import pytest

from gmmscene import pipeline
from gmmscene.config import load_config
from gmmscene.errors import InputError
from gmmscene.sed import GENERIC
from gmmscene.synth import make_event_corpus, make_scene_corpus

FAST = ["gmm.components=4", "gmm.max_iters=5", "embeddings.kinds=beta_mean", "svm.c_grid=1"]


@pytest.fixture(scope="module")
def scene_corpus(tmp_path_factory):
    return make_scene_corpus(tmp_path_factory.mktemp("scene"), n_per_class=4, n_folds=2,
                             duration=2.0, seed=1)


@pytest.fixture(scope="module")
def event_corpus(tmp_path_factory):
    return make_event_corpus(tmp_path_factory.mktemp("ev"), n_recordings=4, n_folds=2,
                             duration=12.0, seed=2)


def _cfg(root, out, extra=()):
    return load_config(None, [f"run.data_dir={root}", f"run.output_dir={out}", *FAST, *extra])


def test_manifest_overlap_rejected():
    with pytest.raises(InputError):
        pipeline.FoldManifest(1, (("a.wav", "x"),), (("a.wav", "x"),))


def test_background_sees_training_files_only(scene_corpus, tmp_path, monkeypatch):
    seen = []
    real = pipeline._fit_background

    def spy(store, files, M, cfg, seed):
        seen.append(set(files))
        return real(store, files, M, cfg, seed)

    monkeypatch.setattr(pipeline, "_fit_background", spy)
    cfg = _cfg(scene_corpus, tmp_path, ["svm.kernels=LK", "fusion.enabled=false"])
    res = pipeline.run_scene_pipeline(cfg)
    manifests = pipeline.discover_folds(scene_corpus)
    # outer fit plus one per inner fold, each within that fold's training list
    per_fold = 1 + cfg.cv_folds
    assert len(seen) == len(manifests) * per_fold
    for k, fold in enumerate(manifests):
        train = {p for p, _ in fold.train}
        fits = seen[k * per_fold:(k + 1) * per_fold]
        assert fits[0] == train
        assert all(s < train for s in fits[1:])
    assert res.classifiers == ["beta_mean/M4/LK"]


def test_single_fold_structure(scene_corpus, tmp_path):
    res = pipeline.run_scene_pipeline(_cfg(scene_corpus, tmp_path, ["run.folds=1"]))
    assert res.folds == (1,)
    assert res.classifiers == ["beta_mean/M4/LK", "beta_mean/M4/RK", "fused"]
    text = pipeline.scene_report_text(res)
    for scene in res.labels:
        assert any(line.startswith(scene) for line in text.splitlines())


def test_no_fused_without_fusion(scene_corpus, tmp_path):
    res = pipeline.run_scene_pipeline(_cfg(scene_corpus, tmp_path, ["fusion.enabled=false"]))
    assert "fused" not in res.classifiers


def test_reports_written(scene_corpus, tmp_path):
    res = pipeline.run_scene_pipeline(_cfg(scene_corpus, tmp_path, ["svm.kernels=LK"]))
    written = pipeline.emit_reports(res, tmp_path / "rep")
    names = {p.relative_to(tmp_path / "rep").as_posix() for p in written}
    assert {"scene_report.txt", "scene_report.kv", "resolved_config.ini"} <= names
    assert {"predictions/fold1/beta_mean_M4_LK.tsv", "predictions/fold2/beta_mean_M4_LK.tsv",
            "confusion/beta_mean_M4_LK.tsv"} <= names
    rows = (tmp_path / "rep/predictions/fold1/beta_mean_M4_LK.tsv").read_text().splitlines()
    assert len(rows) == len(res.runs[(1, "beta_mean/M4/LK")].files)


def test_sed_conditions(event_corpus, tmp_path):
    cfg = load_config(None, [f"run.data_dir={event_corpus}", f"run.output_dir={tmp_path}",
                             "run.task=sed", "svm.c_grid=1, 10"])
    res = pipeline.run_sed_pipeline(cfg)
    for f in res.folds["home"]:
        plain = res.runs[("home", "plain", f)]
        g = res.runs[("home", "G", f)]
        gp = res.runs[("home", "GP", f)]
        assert GENERIC not in plain.classes and plain.n_generic_clips == 0
        assert GENERIC in g.classes
        assert plain.n_training_vectors == plain.n_event_clips
        assert g.n_training_vectors == g.n_event_clips + g.n_generic_clips
        # 13 speed copies on top of every original event clip
        assert gp.n_training_vectors == 14 * gp.n_event_clips + gp.n_generic_clips
    dets = list((tmp_path / "detections" / "home" / "GP").rglob("*.txt"))
    assert dets
    for d in dets:
        assert all(GENERIC not in line for line in d.read_text().splitlines())


def test_missing_manifest(tmp_path):
    with pytest.raises(InputError):
        pipeline.discover_folds(tmp_path)


def test_fold_seed_distinct():
    seeds = {pipeline._fold_seed(s, f, M) for s in range(3) for f in range(1, 5) for M in (64, 128)}
    assert len(seeds) == 24
    assert np.all(np.array(sorted(seeds)) >= 0)


def test_synth_rejects_single_fold(tmp_path):
    from gmmscene.errors import ConfigError

    with pytest.raises(ConfigError):
        make_scene_corpus(tmp_path, n_per_class=3, n_folds=1)
    with pytest.raises(ConfigError):
        make_event_corpus(tmp_path, n_recordings=3, n_folds=1)
