import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from demix.deconv import (
    DivergentKpError,
    FourierGrid,
    Kp,
    convolve,
    estimate_deconv,
    fisher_info,
    fourier_series,
    thm4_constants,
)
from demix.mixands import EmpiricalCounts, NoisePmf

P = {0: 0.75, 1: 0.25}


class TestFourier:
    def test_point_mass(self):
        lam = np.linspace(-np.pi, np.pi, 9)
        np.testing.assert_allclose(fourier_series({0: 1.0}, lam), np.ones(9))

    def test_at_pi(self):
        assert fourier_series(P, np.pi) == pytest.approx(0.5)

    def test_at_zero(self):
        assert fourier_series({-2: 0.1, 0: 0.3, 5: 0.6}, 0.0) == pytest.approx(1.0)

    def test_accepts_noise_pmf(self):
        p = NoisePmf.from_mapping(P)
        assert fourier_series(p, np.pi) == pytest.approx(0.5)


class TestKp:
    def test_closed_form(self):
        assert Kp(P).value == pytest.approx(4 * np.pi, abs=1e-6)

    def test_independent_quadrature(self):
        val, _ = quad(lambda lam: 1 / abs(fourier_series(P, lam)) ** 2, -np.pi, np.pi)
        assert Kp(P).value == pytest.approx(val, rel=1e-10)

    def test_point_mass(self):
        assert Kp({0: 1.0}).value == pytest.approx(2 * np.pi)

    def test_divergent(self):
        res = Kp({0: 0.5, 1: 0.5})
        assert res.divergent and math.isinf(res.value)

    @pytest.mark.parametrize("q", [0.1, 0.3, 0.45])
    def test_two_point_family(self, q):
        A, B = 1 - 2 * q + 2 * q * q, 2 * q * (1 - q)
        assert Kp({0: 1 - q, 1: q}).value == pytest.approx(2 * np.pi / math.sqrt(A * A - B * B), rel=1e-9)


class TestGrid:
    def test_odd_rejected(self):
        with pytest.raises(ValueError):
            FourierGrid(7)

    def test_fit_doubles(self):
        assert FourierGrid(16).fit(20).G == 64
        assert FourierGrid(16).fit(3).G == 16


class TestEstimate:
    def test_identity_noise(self):
        out = estimate_deconv(EmpiricalCounts({0: 3, 2: 1}), {0: 1.0}, range(0, 3))
        assert out[0] == pytest.approx(0.75, abs=1e-14)
        assert out[1] == pytest.approx(0.0, abs=1e-14)
        assert out[2] == pytest.approx(0.25, abs=1e-14)

    def test_exact_pmf_recovered(self):
        f = {0: 0.3, 1: 0.5, 3: 0.2}
        pi = convolve(f, P)
        # scale to integer counts that reproduce pi exactly
        scale = 10**6
        counts = EmpiricalCounts({k: round(v * scale) for k, v in pi.items()})
        out = estimate_deconv(counts, P, range(-2, 6))
        for k in range(-2, 6):
            assert out[k] == pytest.approx(f.get(k, 0.0), abs=1e-9)

    def test_negative_support(self):
        p = {-1: 0.2, 0: 0.8}
        f = {2: 0.4, 5: 0.6}
        pi = convolve(f, p)
        counts = EmpiricalCounts({k: round(v * 1000) for k, v in pi.items()})
        out = estimate_deconv(counts, p, range(0, 7))
        assert out[2] == pytest.approx(0.4, abs=1e-9)
        assert out[5] == pytest.approx(0.6, abs=1e-9)

    def test_divergent_rejected(self):
        with pytest.raises(DivergentKpError):
            estimate_deconv(EmpiricalCounts({0: 1}), {0: 0.5, 1: 0.5}, range(3))

    def test_wide_support_refits_grid(self):
        counts = EmpiricalCounts({0: 1, 20000: 1})
        out = estimate_deconv(counts, {0: 1.0}, [0, 20000], FourierGrid(64))
        assert out[0] == pytest.approx(0.5) and out[20000] == pytest.approx(0.5)


@settings(max_examples=25, deadline=None)
@given(st.dictionaries(st.integers(-3, 8), st.integers(1, 40), min_size=1, max_size=6),
       st.floats(0.05, 0.45))
def test_linear_unbiased_inverse(counts, q):
    # convolving the estimate with p gives back the empirical pmf
    p = {0: 1 - q, 1: q}
    c = EmpiricalCounts(counts)
    span = range(c.min_value - 40, c.max_value + 1)
    fhat = estimate_deconv(c, p, span)
    back = convolve(fhat, p)
    for k, v in counts.items():
        assert back[k] == pytest.approx(v / c.n, abs=1e-8)


class TestConstants:
    def test_equal(self):
        c = thm4_constants({0: 1.0}, {0: 1.0}, P)
        assert c.c0 == 0 and c.c1 == 0 and not c.identifiable

    def test_point_masses(self):
        c = thm4_constants({0: 1.0}, {1: 1.0}, P)
        assert c.c0 == pytest.approx(2.0)
        assert c.c1 == pytest.approx(1.5)
        assert c.asymptotic_lower == pytest.approx(2 / 3)

    def test_fisher_point_masses(self):
        assert fisher_info(0.5, {0: 1.0}, {1: 1.0}, {0: 1.0}) == pytest.approx(4.0)

    def test_fisher_equal(self):
        assert fisher_info(0.3, {0: 1.0}, {0: 1.0}, P) == 0.0

    @pytest.mark.parametrize("w", [0.1, 0.5, 0.9])
    def test_fisher_general(self, w):
        assert fisher_info(w, {0: 1.0}, {1: 1.0}, {0: 1.0}) == pytest.approx(1 / (1 - w) + 1 / w)

    def test_fisher_domain(self):
        with pytest.raises(ValueError):
            fisher_info(1.0, {0: 1.0}, {1: 1.0}, P)
