import pytest

from gmmscene.config import RunConfig, load_config
from gmmscene.errors import ConfigError


def test_defaults():
    cfg = RunConfig()
    assert cfg.components == (64,)
    assert cfg.relevance_factor == 20.0
    assert cfg.c_grid == (0.1, 1.0, 10.0, 100.0)
    assert cfg.cv_refit_gmm is True
    assert cfg.frame_config().n_mels == 40


def test_ini_and_overrides(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\ndata_dir = corpus\nseed = 3\n[gmm]\ncomponents = 8, 16\n"
                   "[svm]\nkernels = RK\n")
    cfg = load_config(ini, ["svm.c_grid=1,10", "embeddings.relevance_factor=5"])
    assert cfg.data_dir == tmp_path / "corpus"
    assert cfg.seed == 3
    assert cfg.components == (8, 16)
    assert cfg.kernels == ("RK",)
    assert cfg.c_grid == (1.0, 10.0)
    assert cfg.relevance_factor == 5.0


def test_roundtrip(tmp_path):
    # absolute paths, since relative ones resolve against the INI's directory
    cfg = load_config(None, [f"run.data_dir={tmp_path}", f"run.output_dir={tmp_path / 'o'}",
                             "gmm.components=4", "svm.cv_refit_gmm=false", "features.n_mels=24",
                             "sed.speeds=0.5, 1.2"])
    (tmp_path / "a.ini").write_text(cfg.to_ini())
    back = load_config(tmp_path / "a.ini")
    assert back.to_ini() == cfg.to_ini()
    assert back.frame_config().n_mels == 24
    assert back.speeds == (0.5, 1.2)
    assert back.cv_refit_gmm is False


def test_sed_defaults_to_task3_profile():
    assert load_config(None, ["run.task=sed"]).profile == "task3"
    assert load_config(None, ["run.task=sed", "features.profile=task1"]).profile == "task1"


@pytest.mark.parametrize("override", [
    "run.task=music",
    "gmm.components=0",
    "embeddings.relevance_factor=-1",
    "embeddings.kinds=gamma",
    "svm.kernels=CK",
    "svm.kernels=XYZ",
    "svm.c_grid=0",
    "svm.normalize=maybe",
    "svm.gamma_grid=perhaps",
    "sed.conditions=GX",
    "sed.speeds=1.5",
    "gmm.max_iters=lots",
    "nosuch.key=1",
    "no-equals-sign",
])
def test_rejects(override):
    with pytest.raises(ConfigError):
        load_config(None, [override])


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


@pytest.mark.parametrize("task,kernel,normalize,expected", [
    ("scene", "LK", "auto", True),
    ("scene", "RK", "auto", True),
    ("scene", "CK", "auto", False),
    ("sed", "RK", "auto", False),
    ("sed", "RK", "on", True),
    ("scene", "LK", "off", False),
])
def test_normalize_rule(task, kernel, normalize, expected):
    cfg = load_config(None, [f"run.task={task}", f"svm.normalize={normalize}"])
    assert cfg.normalize_for(kernel) is expected
