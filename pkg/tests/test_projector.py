import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from demix.mixands import EmpiricalCounts, PowerSeriesFamily
from demix.orthopoly import MeasureSpec, PrecisionCeilingError, quadrature
from demix.projector import (
    ConditioningError,
    estimate_check,
    estimate_gram,
    estimate_halfline,
    estimate_projection,
    exact_mise,
    gram_matrix,
    h_distance,
    h_inner,
    mixture_pmf,
    phi_matrix,
    power_series_basis,
    project_density,
    variance_bound,
)

import oracles

P = PowerSeriesFamily.poisson()
NB = PowerSeriesFamily.negative_binomial(1.0)
UNIT = MeasureSpec.interval(0, 1)
ZEROS = EmpiricalCounts({0: 10})


def uniform(t):
    return np.ones_like(np.asarray(t, dtype=float))


class TestPhi:
    def test_phi00_poisson_unit(self):
        assert phi_matrix(P, UNIT, 1).phi[0, 0] == pytest.approx(oracles.PHI00, rel=1e-13)

    def test_phi00_halfline(self):
        assert phi_matrix(P, MeasureSpec.halfline(), 1).phi[0, 0] == pytest.approx(math.sqrt(2), rel=1e-14)

    def test_lower_triangular_and_read_only(self):
        phi = phi_matrix(P, UNIT, 8).phi
        assert np.all(np.triu(phi, 1) == 0)
        with pytest.raises(ValueError):
            phi[0, 0] = 1.0

    @pytest.mark.parametrize("fam,ms", [
        (P, UNIT),
        (P, MeasureSpec.interval(1, 2)),
        (NB, MeasureSpec.interval(0, 0.5)),
        (P, MeasureSpec.halfline()),
    ])
    def test_basis_orthonormal_in_H(self, fam, ms):
        basis = power_series_basis(fam, ms, 12)
        t, w = quadrature(ms)
        V = basis.values(t)
        assert np.max(np.abs((V * w) @ V.T - np.eye(12))) < 1e-9

    def test_basis_spans_mixand_pmfs(self):
        # Pi 1_k = a_k t^k / Z(t) must lie in V_{k+1}
        basis = power_series_basis(P, UNIT, 6)
        t, w = quadrature(UNIT)
        for k in range(6):
            pk = t**k / math.factorial(k) * np.exp(-t)
            c = basis.values(t, k + 1) @ (w * pk)
            resid = pk - c @ basis.values(t, k + 1)
            assert np.sqrt(np.sum(w * resid**2)) < 1e-12

    def test_radius_violation(self):
        with pytest.raises(ValueError):
            power_series_basis(NB, UNIT, 3)

    def test_precision_ceiling(self):
        with pytest.raises(PrecisionCeilingError):
            power_series_basis(P, UNIT, 31)

    def test_m_zero(self):
        assert power_series_basis(P, UNIT, 0).m == 0


class TestEstimators:
    def test_m_zero_is_zero(self):
        est = estimate_projection(ZEROS, P, UNIT, 0)
        assert np.all(est(np.linspace(0, 1, 5)) == 0)
        assert np.all(estimate_gram(ZEROS, P, UNIT, 0)(np.array([0.3])) == 0)
        assert np.all(estimate_check(ZEROS, P, UNIT, 0)(np.array([0.3])) == 0)

    def test_all_zero_data_m1(self):
        est = estimate_projection(ZEROS, P, UNIT, 1)
        theta = np.linspace(0, 1, 7)
        expected = 2 / (1 - oracles.E2) * np.exp(-theta)
        np.testing.assert_allclose(est(theta), expected, rtol=1e-13)
        assert 2 / (1 - oracles.E2) == pytest.approx(2.31304, abs=1e-5)

    def test_gram_all_zero_data_m1(self):
        est = estimate_gram(ZEROS, P, UNIT, 1)
        theta = np.linspace(0, 1, 7)
        np.testing.assert_allclose(est(theta), 2 / (1 - oracles.E2) * np.exp(-theta), rtol=1e-13)

    def test_halfline_m1(self):
        est = estimate_halfline(ZEROS, 1)
        assert est.coeffs[0] == pytest.approx(math.sqrt(2))
        theta = np.array([0.0, 1.0, 3.0])
        np.testing.assert_allclose(est(theta), 2 * np.exp(-theta), rtol=1e-13)

    def test_check_estimator_m1(self):
        c = EmpiricalCounts({0: 3, 1: 1})
        est = estimate_check(c, P, UNIT, 1)
        theta = np.linspace(0, 1, 5)
        np.testing.assert_allclose(est(theta), 0.75 * np.exp(theta), rtol=1e-13)

    def test_observations_above_m_ignored(self):
        a = estimate_projection(EmpiricalCounts({0: 2, 1: 1, 7: 1}), P, UNIT, 3)
        b = estimate_projection(EmpiricalCounts({0: 2, 1: 1, 3: 1}), P, UNIT, 3)
        np.testing.assert_array_equal(a.coeffs, b.coeffs)

    def test_negative_observation_rejected(self):
        with pytest.raises(ValueError):
            estimate_projection(EmpiricalCounts({-1: 1}), P, UNIT, 2)

    def test_clipped_integrates_to_one(self):
        est = estimate_projection(EmpiricalCounts({0: 5, 1: 4, 2: 1}), P, UNIT, 3)
        g = est.clipped()
        t, w = quadrature(UNIT)
        assert np.sum(w * g(t)) == pytest.approx(1.0)
        assert np.all(g(t) >= 0)


@settings(max_examples=15, deadline=None)
@given(counts=st.dictionaries(st.integers(0, 12), st.integers(1, 50), min_size=1, max_size=8),
       m=st.integers(1, 8))
def test_dual_route_property(counts, m):
    c = EmpiricalCounts(counts)
    a = estimate_projection(c, P, UNIT, m)
    g = estimate_gram(c, P, UNIT, m)
    assert h_distance(a, g, UNIT) < 1e-6


@settings(max_examples=10, deadline=None)
@given(counts=st.dictionaries(st.integers(0, 8), st.integers(1, 20), min_size=1, max_size=5),
       m=st.integers(1, 6))
def test_projection_matches_empirical_frequencies(counts, m):
    c = EmpiricalCounts(counts)
    est = estimate_projection(c, P, UNIT, m)
    t, w = quadrature(UNIT)
    pk = np.array([t**k / math.factorial(k) * np.exp(-t) for k in range(m)])
    inner = pk @ (w * est(t))
    # (fhat, Pi 1_k)_H equals the k-th empirical frequency
    freq = c.frequencies(m)
    np.testing.assert_allclose(inner, freq, atol=1e-10)


class TestGram:
    def test_entries(self):
        R = gram_matrix(P, UNIT, 2).R
        assert R[0, 0] == pytest.approx((1 - oracles.E2) / 2, rel=1e-14)
        assert R[0, 1] == pytest.approx((1 - 3 * oracles.E2) / 4, rel=1e-14)

    @pytest.mark.parametrize("k,l", [(0, 0), (1, 3), (4, 4), (2, 5)])
    def test_against_oracle(self, k, l):
        R = gram_matrix(P, UNIT, 6).R
        assert R[k, l] == pytest.approx(oracles.poisson_R(k, l), rel=1e-13)

    def test_double_precision_guard(self):
        with pytest.raises(ConditioningError) as info:
            gram_matrix(P, UNIT, 10, dps=None)
        assert info.value.cond > 1e12

    def test_mp_guard(self):
        with pytest.raises(ConditioningError):
            gram_matrix(P, UNIT, 20, dps=20)

    def test_inverse_diag_matches_phi(self):
        G = gram_matrix(P, UNIT, 5)
        inv = np.array(G.inverse_mp().tolist(), dtype=float)
        phi = phi_matrix(P, UNIT, 5).phi
        np.testing.assert_allclose(np.diag(inv), np.sum(phi**2, axis=0), rtol=1e-9)


class TestProjection:
    def test_uniform_m1(self):
        res = project_density(uniform, P, UNIT, 1)
        assert res.coeffs[0] == pytest.approx(oracles.UNIFORM_C0, rel=1e-13)
        assert res.residual_norm == pytest.approx(oracles.UNIFORM_RESID, rel=1e-12)

    def test_basis_element_has_zero_residual(self):
        basis = power_series_basis(P, UNIT, 3)

        def phi0(t):
            return basis.values(t, 1)[0]

        for m in (1, 2, 3):
            assert project_density(phi0, P, UNIT, m).residual_norm < 1e-12

    def test_m0(self):
        res = project_density(uniform, P, UNIT, 0)
        assert res.residual_norm == pytest.approx(1.0)

    def test_mixture_pmf_uniform(self):
        pi = mixture_pmf(uniform, P, UNIT, 3)
        assert pi[0] == pytest.approx(oracles.NU_PI0, rel=1e-13)
        assert pi[1] == pytest.approx(oracles.NU_PI1, rel=1e-13)

    def test_h_inner_symmetry(self):
        f = lambda t: np.exp(t)
        g = lambda t: 1 + t
        assert h_inner(f, g, UNIT) == pytest.approx(h_inner(g, f, UNIT))


class TestMise:
    def test_m0(self):
        t = exact_mise(uniform, P, UNIT, 0, 10)
        assert t.total == pytest.approx(1.0) and t.variance == 0

    def test_uniform_m1_n1(self):
        t = exact_mise(uniform, P, UNIT, 1, 1)
        assert t.variance == pytest.approx(oracles.UNIFORM_VAR_M1, rel=1e-12)
        assert t.bias_sq == pytest.approx(oracles.UNIFORM_RESID**2, rel=1e-12)

    def test_variance_scales_with_n(self):
        a = exact_mise(uniform, P, UNIT, 4, 1)
        b = exact_mise(uniform, P, UNIT, 4, 100)
        assert b.variance == pytest.approx(a.variance / 100)
        assert b.bias_sq == a.bias_sq

    def test_variance_bound_m1(self):
        assert variance_bound(uniform, 1.0, P, UNIT, 1, 1) == pytest.approx(oracles.VARIANCE_BOUND_M1, rel=1e-12)

    def test_variance_bound_zero_K(self):
        assert variance_bound(uniform, 0.0, P, UNIT, 3, 1) == 0.0

    @pytest.mark.parametrize("m", range(1, 9))
    def test_variance_below_bound(self, m):
        assert exact_mise(uniform, P, UNIT, m, 50).variance < variance_bound(uniform, 1.0, P, UNIT, m, 50)


def test_concurrent_basis_builds_agree():
    # mpmath precision is global; first-time builds from several threads must not interfere
    from concurrent.futures import ThreadPoolExecutor

    from demix import projector

    NB = PowerSeriesFamily.negative_binomial(3.0)
    ms = MeasureSpec.interval(0, 0.6)
    projector._recurrence.cache_clear()
    projector._cached_basis.cache_clear()
    with ThreadPoolExecutor(8) as pool:
        bases = list(pool.map(lambda m: power_series_basis(NB, ms, m).phi, [20] * 8))
    for phi in bases[1:]:
        np.testing.assert_array_equal(phi, bases[0])
