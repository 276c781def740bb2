import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gmmscene import kernels as K
from gmmscene.errors import ConfigError, DegenerateDataError, DimensionError, DomainError
from gmmscene.kernels import KernelSpec


def _histograms(n, d, seed):
    rng = np.random.default_rng(seed)
    H = rng.dirichlet(np.full(d, 0.7), n)
    H[rng.random(H.shape) < 0.15] = 0.0   # some exact zeros to hit the 0/0 rule
    H[H.sum(axis=1) == 0, 0] = 1.0
    return H / H.sum(axis=1, keepdims=True)


def _spec(kind, X):
    return KernelSpec(kind).resolved(X)


def _loop_gram(spec, X, Y):
    return np.array([[K.kernel_eval(spec, x, y) for y in Y] for x in X])


class TestHandValues:
    def test_eck(self):
        v = K.kernel_eval(KernelSpec("ECK", 0.5), [1.0, 0.0], [0.0, 1.0])
        assert abs(v - math.exp(-1)) <= 1e-12

    def test_ik(self):
        assert abs(K.kernel_eval(KernelSpec("IK"), [0.5, 0.5], [1.0, 0.0]) - 0.5) <= 1e-12

    def test_chi2_distance(self):
        assert K.distance("ECK", [1.0, 0.0], [0.0, 1.0]) == 2.0

    @pytest.mark.parametrize("kind", ["CK", "IK", "HK"])
    def test_self_similarity_of_histogram(self, kind):
        x = _histograms(1, 6, 0)[0]
        assert K.kernel_eval(KernelSpec(kind), x, x) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("kind", ["ECK", "EHK", "RK"])
    def test_exponential_self(self, kind):
        x = _histograms(1, 6, 1)[0]
        assert K.kernel_eval(KernelSpec(kind, 3.0), x, x) == 1.0

    def test_zero_over_zero_is_zero(self):
        assert K.kernel_eval(KernelSpec("CK"), [0.0, 1.0], [0.0, 1.0]) == 1.0
        assert K.distance("ECK", [0.0, 0.0], [0.0, 0.0]) == 0.0

    def test_lk_identity_basis(self):
        np.testing.assert_array_equal(K.gram(KernelSpec("LK"), np.eye(4)), np.eye(4))


class TestGamma:
    def test_single_pair(self):
        assert K.gamma_heuristic("RK", [[0.0, 0.0], [1.0, 1.0]]) == 0.5

    def test_three_points(self):
        assert K.gamma_heuristic("RK", [[0, 0], [1, 0], [0, 1]]) == pytest.approx(0.75, abs=1e-15)

    def test_duplicates_do_not_change_gamma(self):
        pair = np.array([[0.2, 0.8], [0.6, 0.4]])
        reference = K.gamma_heuristic("ECK", pair)
        for copies in (2, 3, 5):
            assert K.gamma_heuristic("ECK", np.repeat(pair, copies, axis=0)) == pytest.approx(reference, rel=1e-14)

    def test_all_identical(self):
        with pytest.raises(DegenerateDataError):
            K.gamma_heuristic("RK", np.ones((4, 3)))

    def test_auto_resolution(self):
        X = _histograms(10, 4, 2)
        spec = KernelSpec("EHK").resolved(X)
        assert spec.gamma == K.gamma_heuristic("EHK", X)

    def test_unresolved_auto_rejected(self):
        with pytest.raises(ConfigError):
            K.gram(KernelSpec("RK"), np.eye(2))


class TestGram:
    @pytest.mark.parametrize("kind", K.KINDS)
    def test_psd_and_symmetric(self, kind, backend):
        X = _histograms(50, 12, 3)
        G = K.gram(_spec(kind, X), X)
        assert np.max(np.abs(G - G.T)) <= 1e-12
        assert np.linalg.eigvalsh(G).min() >= -1e-8

    @pytest.mark.parametrize("kind", K.KINDS)
    def test_matches_scalar_loop(self, kind, backend):
        X = _histograms(7, 5, 4)
        Y = _histograms(4, 5, 5)
        spec = _spec(kind, X)
        np.testing.assert_allclose(K.gram(spec, X, Y), _loop_gram(spec, X, Y), rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("kind", ["CK", "IK", "HK", "ECK", "EHK"])
    def test_bounds_on_histograms(self, kind):
        X = _histograms(20, 8, 6)
        G = K.gram(_spec(kind, X), X)
        assert np.all(G >= 0) and np.all(G <= 1 + 1e-12)

    @pytest.mark.parametrize("kind", ["CK", "IK", "HK", "ECK", "EHK"])
    def test_negative_input_rejected(self, kind):
        with pytest.raises(DomainError):
            K.gram(KernelSpec(kind, 1.0), np.array([[0.5, -0.1]]))

    def test_dim_mismatch(self):
        with pytest.raises(DimensionError):
            K.gram(KernelSpec("LK"), np.ones((2, 3)), np.ones((2, 4)))

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (6, 4), elements=st.floats(0, 10)))
    def test_symmetry_property(self, X):
        for kind in ("CK", "IK", "HK"):
            G = K.gram(KernelSpec(kind), X)
            assert np.array_equal(G, G.T)
            assert np.all(np.isfinite(G))

    def test_backends_agree(self):
        from gmmscene import _accel

        X = _histograms(30, 9, 7)
        previous = _accel.backend()
        try:
            out = {}
            for name in ("numba", "numpy"):
                _accel.set_backend(name)
                out[name] = [K.pairwise_chi2(X, X, s) for s in (False, True)] + [K.pairwise_min(X, X)]
        finally:
            _accel.set_backend(previous)
        for a, b in zip(out["numba"], out["numpy"]):
            np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)
