import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from demix.mixands import (
    EmpiricalCounts,
    NoisePmf,
    PowerSeriesFamily,
    check_A2,
    nu_pi,
    nu_pi_all,
    pmf_cutoff,
    ps_pmf,
    ps_Z,
    tail_bound,
    uniform_pmf,
)
from demix.orthopoly import MeasureSpec

import oracles

P = PowerSeriesFamily.poisson()
NB = PowerSeriesFamily.negative_binomial(1.0)
UNIT = MeasureSpec.interval(0, 1)


@pytest.mark.parametrize("family,theta,k,expected", [
    (P, 1.0, 0, math.exp(-1)),
    (P, 0.5, 2, 0.125 * math.exp(-0.5)),
    (NB, 0.5, 1, 0.25),
    (NB, 0.0, 0, 1.0),
    (P, 0.0, 3, 0.0),
])
def test_pmf_examples(family, theta, k, expected):
    assert ps_pmf(family, theta, k) == pytest.approx(expected, rel=1e-14)


def test_pmf_vectorized():
    out = ps_pmf(P, np.array([0.5, 1.0]), 1)
    assert out == pytest.approx([0.5 * math.exp(-0.5), math.exp(-1)])


def test_negbin_shape():
    nb = PowerSeriesFamily.negative_binomial(2.5)
    t = 0.3
    assert ps_Z(nb, t) == pytest.approx((1 - t) ** -2.5, rel=1e-13)
    assert nb.radius == 1


def test_domain_outside_radius():
    with pytest.raises(ValueError):
        ps_pmf(NB, 1.0, 0)


def test_custom_family_series_matches_closed_form():
    geo = PowerSeriesFamily.custom("geom", lambda k: 1.0, 1.0)
    for t in (0.1, 0.5, 0.9):
        assert ps_Z(geo, t) == pytest.approx(1 / (1 - t), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(theta=st.floats(0, 0.99))
def test_pmf_sums_to_one(theta):
    for fam in (P, NB):
        K = pmf_cutoff(fam, theta)
        total = sum(ps_pmf(fam, theta, k) for k in range(K))
        assert total == pytest.approx(1.0, abs=1e-11)


def test_cache_is_safe_across_threads():
    fam = PowerSeriesFamily.custom("slow", lambda k: 1.0 / math.factorial(k), math.inf)
    results = []

    def work():
        results.append(fam.a_array(60).copy())

    threads = [threading.Thread(target=work) for _ in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for r in results:
        np.testing.assert_array_equal(r, results[0])


class TestNuPi:
    def test_examples(self):
        assert nu_pi(P, UNIT, 0) == pytest.approx(oracles.NU_PI0, rel=1e-13)
        assert nu_pi(P, UNIT, 1) == pytest.approx(oracles.NU_PI1, rel=1e-13)

    @pytest.mark.parametrize("k", [2, 5, 10])
    def test_against_incomplete_gamma(self, k):
        assert nu_pi(P, UNIT, k) == pytest.approx(oracles.poisson_nu_pi(k), rel=1e-12)

    def test_sums_to_interval_length(self):
        ms = MeasureSpec.interval(0.5, 2.0)
        assert nu_pi_all(P, ms, 60).sum() == pytest.approx(1.5, rel=1e-12)

    def test_radius_enforced(self):
        with pytest.raises(ValueError):
            nu_pi(NB, MeasureSpec.interval(0, 1), 0)


class TestTailBound:
    def test_example(self):
        assert tail_bound(P, UNIT, 2, 1.0) == pytest.approx(1 / 6)
        direct = 1 - oracles.NU_PI0 - oracles.NU_PI1
        assert direct == pytest.approx(0.10364, abs=1e-5)
        assert direct <= 1 / 6

    def test_m_zero(self):
        assert tail_bound(P, MeasureSpec.interval(0.5, 2), 0, 1.0) == pytest.approx(1.5)

    @pytest.mark.parametrize("fam,ms", [(P, UNIT), (P, MeasureSpec.interval(0, 3)), (NB, MeasureSpec.interval(0, 0.5))])
    def test_bounds_direct_tail(self, fam, ms):
        terms = nu_pi_all(fam, ms, 120)
        for m in range(12):
            assert tail_bound(fam, ms, m, 1.0) >= terms[m:].sum() * (1 - 1e-12)


class TestA2:
    def test_poisson(self):
        assert check_A2(P, 1.0, 50).holds

    def test_geometric(self):
        res = check_A2(NB, 1.0, 50)
        assert res.holds and res.L == 0.0

    def test_violation(self):
        # a_0 = 1 > c0 a_0 a_0 whenever c0 < 1
        assert not check_A2(P, 0.5, 10).holds

    def test_c0_positive(self):
        with pytest.raises(ValueError):
            check_A2(P, 0.0, 10)


@pytest.mark.parametrize("theta,k,expected", [(3, 1, 1 / 3), (1, 0, 1.0), (3, 5, 0.0)])
def test_uniform_pmf(theta, k, expected):
    assert uniform_pmf(theta, k) == expected


def test_uniform_pmf_rejects_zero():
    with pytest.raises(ValueError):
        uniform_pmf(0, 0)


class TestCounts:
    def test_from_observations(self):
        c = EmpiricalCounts.from_observations([0, 0, 1, 2])
        assert c.counts == {0: 2, 1: 1, 2: 1} and c.n == 4

    def test_frequencies(self):
        c = EmpiricalCounts({0: 3, 2: 1})
        assert c.frequencies(2) == pytest.approx([0.75, 0.0])

    def test_negative_kept_but_not_as_frequencies(self):
        c = EmpiricalCounts({-1: 1, 0: 1})
        assert c.min_value == -1
        with pytest.raises(ValueError):
            c.frequencies(3)

    def test_empty(self):
        with pytest.raises(ValueError):
            EmpiricalCounts({})

    def test_bad_count(self):
        with pytest.raises(ValueError):
            EmpiricalCounts({0: -1})


class TestNoise:
    def test_roundtrip(self):
        p = NoisePmf.from_mapping({-1: 0.25, 1: 0.75})
        assert p.offset == -1 and p.probs == (0.25, 0.0, 0.75)
        assert p.as_dict() == {-1: 0.25, 1: 0.75}

    def test_must_sum_to_one(self):
        with pytest.raises(ValueError):
            NoisePmf(0, (0.5, 0.4))
