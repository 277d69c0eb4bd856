import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nldd.lorentz import lorentz_quasi_norm, target_exponent


class TestTargetExponent:
    def test_exact_rational_value(self):
        # d=2, s=0.5, p=1.2: 1.2 * 3 / (3 - 1.2) = 2 exactly
        assert target_exponent(2, 0.5, 1.2) == 2.0

    def test_generic_value(self):
        # d=2, s=0.75, p=1: (2 + 1.5) / (2 + 1.5 - 1.5) = 1.75
        assert target_exponent(2, 0.75, 1.0) == pytest.approx(1.75, abs=0)

    def test_rejects_supercritical_p(self):
        with pytest.raises(ValueError):
            target_exponent(2, 0.5, 3.0)


class TestQuasiNorm:
    def test_indicator_closed_form(self):
        # indicator of a set of measure m: ||f||_{p,sigma} = (p/sigma)^(1/sigma) m^(1/p)
        vol = 0.01
        n = 500
        m = n * vol
        samples = np.ones(n)
        for p, sigma in [(1.5, 1.0), (2.0, 2.0), (1.2, 3.0)]:
            expected = (p / sigma) ** (1 / sigma) * m ** (1 / p)
            assert lorentz_quasi_norm(samples, vol, p, sigma) == pytest.approx(
                expected, rel=1e-12
            )

    def test_weak_norm_indicator(self):
        vol, n = 0.25, 16
        val = lorentz_quasi_norm(np.ones(n), vol, 2.0, np.inf)
        assert val == pytest.approx((n * vol) ** 0.5)

    def test_pq_equals_lp(self):
        # sigma = p recovers the plain L^p norm
        rng = np.random.default_rng(7)
        samples = rng.standard_normal(200)
        vol = 0.05
        lp = (np.abs(samples) ** 3).sum() * vol
        assert lorentz_quasi_norm(samples, vol, 3.0, 3.0) == pytest.approx(
            lp ** (1 / 3), rel=1e-12
        )

    @settings(max_examples=25, deadline=None)
    @given(c=st.floats(0.1, 10.0), seed=st.integers(0, 1000))
    def test_homogeneity(self, c, seed):
        rng = np.random.default_rng(seed)
        samples = rng.standard_normal(50)
        for sigma in (1.5, np.inf):
            base = lorentz_quasi_norm(samples, 0.1, 2.0, sigma)
            assert lorentz_quasi_norm(c * samples, 0.1, 2.0, sigma) == pytest.approx(
                c * base, rel=1e-12
            )

    def test_rearrangement_invariance(self):
        rng = np.random.default_rng(3)
        samples = rng.standard_normal(100)
        shuffled = rng.permutation(samples)
        a = lorentz_quasi_norm(samples, 0.2, 1.7, 2.5)
        b = lorentz_quasi_norm(shuffled, 0.2, 1.7, 2.5)
        assert a == pytest.approx(b, rel=1e-14)

    def test_empty_and_zero(self):
        assert lorentz_quasi_norm(np.zeros(10), 1.0, 2.0, 1.0) == 0.0
        assert lorentz_quasi_norm(np.zeros(0), 1.0, 2.0, np.inf) == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            lorentz_quasi_norm(np.ones(3), 1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            lorentz_quasi_norm(np.ones(3), 1.0, 2.0, -1.0)
