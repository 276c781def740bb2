import numpy as np
import pytest

from gmmscene.cli import main
from gmmscene.features import AudioClip, write_wav
from gmmscene.synth import make_event_corpus, make_scene_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    return make_scene_corpus(tmp_path_factory.mktemp("c"), n_per_class=4, n_folds=2, duration=2.0, seed=4)


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0


def test_stage_chain(corpus, tmp_path, capsys):
    wavs = sorted(str(p) for p in (corpus / "audio").glob("*.wav"))
    assert main(["features", *wavs, "--out", str(tmp_path / "f")]) == 0
    feats = sorted(str(p) for p in (tmp_path / "f").glob("*.feat"))
    assert len(feats) == len(wavs)
    assert main(["train-gmm", *feats, "-M", "4", "--max-iters", "5", "--out", str(tmp_path / "g.gmm")]) == 0
    assert main(["embed", *feats, "--gmm", str(tmp_path / "g.gmm"), "--kind", "beta_mean",
                 "--out", str(tmp_path / "e")]) == 0
    embs = sorted((tmp_path / "e").iterdir())
    listing = "".join(f"{p.name}\t{p.name.split('_')[0]}\n" for p in embs)
    (tmp_path / "e" / "train.tsv").write_text(listing)
    assert main(["train-svm", "--list", str(tmp_path / "e" / "train.tsv"), "--kernel", "LK",
                 "--C", "1", "--out", str(tmp_path / "m.svm")]) == 0
    pred = tmp_path / "pred.tsv"
    assert main(["classify", *map(str, embs), "--model", str(tmp_path / "m.svm"), "--out", str(pred)]) == 0
    rows = pred.read_text().splitlines()
    assert len(rows) == len(embs)
    ref = tmp_path / "ref.tsv"
    ref.write_text("".join(f"{tmp_path / 'e' / line.split(chr(9))[0]}\t{line.split(chr(9))[1]}\n"
                           for line in listing.splitlines()))
    capsys.readouterr()
    assert main(["score", "--task", "scene", "--ref", str(ref), "--hyp", str(pred)]) == 0
    assert capsys.readouterr().out.startswith("accuracy=")


def test_fuse(tmp_path, capsys):
    a, b, c = (tmp_path / n for n in "abc")
    a.write_text("x\tA\ny\tB\n")
    b.write_text("x\tB\ny\tB\n")
    c.write_text("x\tA\ny\tC\n")
    assert main(["fuse", str(a), str(b), str(c)]) == 0
    assert capsys.readouterr().out == "x\tA\ny\tB\n"
    c.write_text("y\tA\nx\tC\n")
    assert main(["fuse", str(a), str(b), str(c)]) == 3


def test_score_sed(tmp_path, capsys):
    (tmp_path / "r.txt").write_text("0.00\t1.00\tA\n1.00\t2.00\tB\n")
    (tmp_path / "h.txt").write_text("0.00\t1.00\tA\n1.00\t2.00\tC\n2.00\t3.00\tD\n")
    args = ["score", "--task", "sed", "--ref", str(tmp_path / "r.txt"), "--hyp", str(tmp_path / "h.txt")]
    assert main(args) == 3  # duration required
    capsys.readouterr()
    assert main([*args, "--duration", "3"]) == 0
    out = capsys.readouterr().out
    assert "ER=1.000000" in out and "F=0.400000" in out


def test_run_scene(corpus, tmp_path, capsys):
    out = tmp_path / "o"
    code = main(["run-scene", "--data", str(corpus), "--output", str(out),
                 "--set", "gmm.components=4", "--set", "gmm.max_iters=5",
                 "--set", "embeddings.kinds=beta_mean", "--set", "svm.c_grid=1",
                 "--set", "svm.cv_folds=2"])
    assert code == 0
    assert (out / "scene_report.txt").read_text() in capsys.readouterr().out


def test_synth_and_run_sed(tmp_path):
    assert main(["synth-corpus", "--task", "sed", "--out", str(tmp_path / "ev"), "-n", "4"]) == 0
    assert (tmp_path / "ev" / "home" / "evaluation_setup" / "fold1_train.txt").exists()
    code = main(["run-sed", "--data", str(tmp_path / "ev"), "--output", str(tmp_path / "o"),
                 "--set", "sed.conditions=plain", "--set", "svm.c_grid=1"])
    assert code == 0
    assert (tmp_path / "o" / "sed_report.kv").exists()


def test_empty_training_fold(tmp_path):
    make_scene_corpus(tmp_path / "c", n_per_class=2, n_folds=2, duration=1.0)
    (tmp_path / "c" / "evaluation_setup" / "fold1_train.txt").write_text("")
    assert main(["run-scene", "--data", str(tmp_path / "c"), "--set", "run.folds=1"]) == 5


def test_exit_codes(tmp_path):
    assert main(["run-scene", "--data", str(tmp_path), "--set", "svm.kernels=NOPE"]) == 4
    assert main(["run-scene", "--data", str(tmp_path)]) == 3  # no manifests
    bad = tmp_path / "x.wav"
    bad.write_bytes(b"garbage")
    assert main(["features", str(bad), "--out", str(tmp_path / "f")]) == 3
    assert main(["train-gmm", str(tmp_path / "absent.feat"), "--out", str(tmp_path / "g")]) == 6
    with pytest.raises(SystemExit) as e:
        main(["train-gmm"])
    assert e.value.code == 2


def test_too_few_frames_is_data_error(tmp_path):
    write_wav(tmp_path / "s.wav", AudioClip(np.random.default_rng(0).standard_normal(1200) * 0.1, 16000))
    assert main(["features", str(tmp_path / "s.wav"), "--out", str(tmp_path)]) == 0
    assert main(["train-gmm", str(tmp_path / "s.feat"), "-M", "64", "--out", str(tmp_path / "g")]) == 5


def test_sed_train_and_detect(tmp_path):
    root = make_event_corpus(tmp_path / "ev", n_recordings=4, n_folds=2, duration=12.0, seed=5)
    model = tmp_path / "m.svm"
    assert main(["sed-train", "--scene-dir", str(root / "home"), "--generic", "--c-grid", "1",
                 "--out", str(model)]) == 0
    wavs = sorted(str(p) for p in (root / "home" / "audio").glob("*.wav"))[:1]
    assert main(["sed-detect", *wavs, "--model", str(model), "--out", str(tmp_path / "d")]) == 0
    assert len(list((tmp_path / "d").glob("*.txt"))) == 1
