import pytest
from hypothesis import given
from hypothesis import strategies as st

from gmmscene.errors import ConfigError, InputError
from gmmscene.fusion import FusionEnsemble, fuse, fuse_many

ENS3 = FusionEnsemble(("m1", "m2", "m3"))


def test_majority():
    assert fuse(["A", "A", "B"], ENS3) == "A"
    assert fuse(["B", "A", "A"], ENS3) == "A"


def test_tie_goes_to_priority():
    ens = FusionEnsemble(("m1", "m2"))
    assert fuse(["A", "B"], ens) == "A"
    assert fuse(["B", "A"], ens) == "B"


def test_unanimous():
    assert fuse(["C", "C", "C"], ENS3) == "C"


def test_three_way_tie():
    assert fuse(["x", "y", "z"], ENS3) == "x"


def test_empty_predictions():
    with pytest.raises(InputError):
        fuse([], ENS3)


def test_wrong_arity():
    with pytest.raises(InputError):
        fuse(["A", "B"], ENS3)


def test_needs_two_members():
    with pytest.raises(ConfigError):
        FusionEnsemble(("solo",))
    with pytest.raises(ConfigError):
        FusionEnsemble(("a", "a"))


def test_by_accuracy_orders_descending_and_stable():
    ens = FusionEnsemble.by_accuracy({"lk": 0.7, "rk": 0.9, "lk2": 0.7})
    assert ens.members == ("rk", "lk", "lk2")
    assert ens.accuracies == (0.9, 0.7, 0.7)


def test_fuse_many_aligns_by_member():
    ens = FusionEnsemble(("b", "a"))
    out = fuse_many({"a": ["x", "y"], "b": ["z", "y"]}, ens)
    assert out == ["z", "y"]


def test_fuse_many_length_mismatch():
    with pytest.raises(InputError):
        fuse_many({"m1": ["A"], "m2": ["A", "B"], "m3": ["A"]}, ENS3)


@given(st.lists(st.sampled_from("ABC"), min_size=3, max_size=3))
def test_result_has_max_votes(preds):
    out = fuse(preds, ENS3)
    assert preds.count(out) == max(preds.count(p) for p in preds)
    # among the tied labels, the earliest member's pick wins
    tied = [p for p in preds if preds.count(p) == preds.count(out)]
    assert out == tied[0]
