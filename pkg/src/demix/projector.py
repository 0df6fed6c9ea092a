"""Projection estimator for power-series mixtures.

The model space ``V_m`` is spanned by the mixand pmfs ``Pi 1_k`` for
``k < m``, i.e. ``{p * Ztilde : deg p < m}``.  Its orthonormal basis is
``phi_k = q_k * Ztilde`` where ``q_k`` are orthonormal for the measure
``Ztilde^2 d nu``, so the estimator coefficients are

    c_k = sum_l Phi[k, l] * freq_l,   Phi[k, l] = Q[k, l] / a_l  (l <= k).

An independent route solves the Gram system ``R_m x = freq`` in extended
precision (mpmath); the Gram matrix of ``Pi 1_k`` is far too ill-conditioned
for double precision beyond m ~ 7.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import mpmath
import numpy as np

from .mixands import EmpiricalCounts, PowerSeriesFamily
from .orthopoly import (
    MAX_DEGREE,
    CoeffMatrix,
    MeasureSpec,
    PrecisionCeilingError,
    RecurrenceCoeffs,
    orthonormal_basis,
    orthonormal_coeffs,
    quadrature,
    recurrence_for,
)

__all__ = [
    "ConditioningError",
    "PowerSeriesBasis",
    "PhiMatrix",
    "GramMatrix",
    "Estimate",
    "ProjectionResult",
    "MiseTerms",
    "power_series_basis",
    "phi_matrix",
    "estimate_projection",
    "estimate_check",
    "gram_matrix",
    "estimate_gram",
    "project_density",
    "mixture_pmf",
    "exact_mise",
    "variance_bound",
    "estimate_halfline",
    "h_inner",
    "h_distance",
]

DOUBLE_COND_LIMIT = 1e12
GRAM_DPS = 50
# mpmath precision is process-global, so every precision change is serialized
_MP_LOCK = threading.RLock()


@contextmanager
def _workdps(dps: int):
    with _MP_LOCK, mpmath.workdps(dps):
        yield


# the moment route loses roughly log10(cond Hankel) digits; checked by a rerun
RECURRENCE_DPS = (120, 160)


class ConditioningError(ArithmeticError):
    def __init__(self, cond: float, limit: float):
        super().__init__(f"Gram matrix condition number {cond:.3g} exceeds {limit:.3g}")
        self.cond = cond
        self.limit = limit


def _nu_prime(family: PowerSeriesFamily, measure: MeasureSpec) -> MeasureSpec:
    if measure.kind == "interval":
        if measure.b >= family.radius:
            raise ValueError(f"b={measure.b} must be below the radius R={family.radius}")
        return MeasureSpec.weighted(
            measure.a, measure.b, lambda t: family.Ztilde(t) ** 2, label=f"{family.name}'"
        )
    if measure.kind == "halfline" and family.is_poisson:
        return MeasureSpec.exp_weight(2)
    raise ValueError(f"unsupported (family, measure) pair: {family.name}, {measure.name}")


def _moment_recurrence(family: PowerSeriesFamily, measure: MeasureSpec, count: int, dps: int):
    """Stieltjes procedure on the exact moments of ``Ztilde^2 d nu``, rounded to double."""
    with _workdps(dps):
        mom = [_moment_mp(family, measure, j) for j in range(2 * count + 1)]

        def inner(p, q):
            return mpmath.fsum(pi * qj * mom[i + j] for i, pi in enumerate(p) for j, qj in enumerate(q))

        zero = mpmath.mpf(0)
        alpha, beta = [], [mom[0]]
        q_prev, q = [zero], [1 / mpmath.sqrt(mom[0])]
        for k in range(count):
            tq = [zero] + q
            alpha.append(inner(tq, q))
            if k + 1 == count:
                break
            pad = q + [zero]
            prev = q_prev + [zero] * (len(tq) - len(q_prev))
            s = mpmath.sqrt(beta[k]) if k else zero
            v = [tq[i] - alpha[k] * pad[i] - s * prev[i] for i in range(len(tq))]
            beta.append(inner(v, v))
            if not beta[-1] > 0:
                raise ArithmeticError(f"moment recurrence lost positivity at k={k + 1}")
            q_prev, q = q, [c / mpmath.sqrt(beta[-1]) for c in v]
        return RecurrenceCoeffs(np.array([float(x) for x in alpha]), np.array([float(x) for x in beta]))


@lru_cache(maxsize=64)
def _recurrence(family: PowerSeriesFamily, measure: MeasureSpec, count: int = MAX_DEGREE + 2):
    """Recurrence of ``nu' = Ztilde^2 nu``.

    On intervals the coefficients come from exact moments in mpmath, which
    leaves them correctly rounded; the double Stieltjes procedure drifts by a
    few ulp per step and that drift dominates the estimator error at high m.
    """
    nu = _nu_prime(family, measure)
    if measure.kind == "interval":
        lo, hi = (_moment_recurrence(family, measure, count, d) for d in RECURRENCE_DPS)
        if np.array_equal(lo.alpha, hi.alpha) and np.array_equal(lo.beta, hi.beta):
            return hi
    return recurrence_for(nu, count)


@dataclass(frozen=True)
class PowerSeriesBasis:
    """The orthonormal functions ``phi_0..phi_{m-1}`` spanning ``V_m``."""

    family: PowerSeriesFamily
    measure: MeasureSpec
    Q: Optional[CoeffMatrix]
    phi: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.phi.shape[0]

    def values(self, theta, rows: Optional[int] = None) -> np.ndarray:
        """``phi_k(theta)`` as an array of shape ``(rows, len(theta))``."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        rows = self.m if rows is None else rows
        if rows == 0:
            return np.zeros((0, theta.size))
        return self.Q.values(theta, rows) * self.family.Ztilde(theta)[None, :]

    def quadrature(self):
        return quadrature(self.measure)


def power_series_basis(family: PowerSeriesFamily, measure: MeasureSpec, m: int,
                       allow_high_degree: bool = False) -> PowerSeriesBasis:
    if m <= MAX_DEGREE:
        return _cached_basis(family, measure, m)
    return _build_basis(family, measure, m, allow_high_degree)


@lru_cache(maxsize=256)
def _cached_basis(family, measure, m):
    return _build_basis(family, measure, m, False)


def _build_basis(family, measure, m, allow_high_degree):
    if m < 0:
        raise ValueError("m must be nonnegative")
    if m > MAX_DEGREE and not allow_high_degree:
        raise PrecisionCeilingError(f"m={m} exceeds the precision ceiling {MAX_DEGREE}")
    if m == 0:
        _nu_prime(family, measure)
        return PowerSeriesBasis(family, measure, None, np.zeros((0, 0)))
    if m > MAX_DEGREE:
        rec = _recurrence(family, measure, m + 2)
    else:
        rec = _recurrence(family, measure)
    Q = orthonormal_coeffs(rec, m, allow_high_degree)
    phi = Q.q / family.a_array(m)[None, :]
    phi.setflags(write=False)
    return PowerSeriesBasis(family, measure, Q, phi)


@dataclass(frozen=True)
class PhiMatrix:
    m: int
    phi: np.ndarray


def phi_matrix(family: PowerSeriesFamily, measure: MeasureSpec, m: int) -> PhiMatrix:
    """Lower-triangular ``Phi[k, l] = Q'[k, l] / a_l``."""
    basis = power_series_basis(family, measure, m)
    return PhiMatrix(m, basis.phi)


@dataclass
class Estimate:
    """A function in ``V_m`` stored by its coordinates in ``phi_0..phi_{m-1}``.

    Values may be negative and need not integrate to one.  ``func``
    overrides evaluation (used by the Gram route, which evaluates its own
    representation in extended precision).
    """

    coeffs: np.ndarray
    basis: PowerSeriesBasis
    func: Optional[Callable] = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return len(self.coeffs)

    def __call__(self, theta):
        if self.func is not None:
            return self.func(theta)
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.m == 0:
            return np.zeros(theta.size)
        return self.coeffs @ self.basis.values(theta, self.m)

    def h_norm(self) -> float:
        return float(np.sqrt(np.sum(np.asarray(self.coeffs) ** 2)))

    def clipped(self) -> Callable:
        """Positive part rescaled to integrate to one.

        Heuristic post-processing; the bias/variance results do not cover it.
        """
        t, w = quadrature(self.basis.measure)
        mass = float(np.sum(w * np.maximum(self(t), 0.0)))
        if not mass > 0:
            raise ValueError("estimate has no positive part to renormalize")
        return lambda theta: np.maximum(self(theta), 0.0) / mass


def _frequencies(counts: EmpiricalCounts, m: int) -> np.ndarray:
    if counts.min_value < 0:
        raise ValueError("power-series data must be nonnegative integers")
    return counts.frequencies(m)


def estimate_projection(counts: EmpiricalCounts, family: PowerSeriesFamily,
                        measure: MeasureSpec, m: int) -> Estimate:
    """Projection estimate of order ``m``; observations ``>= m`` carry no weight."""
    if counts is None:
        raise ValueError("empty counts")
    basis = power_series_basis(family, measure, m)
    freq = _frequencies(counts, m)
    return Estimate(basis.phi @ freq, basis)


def estimate_halfline(counts: EmpiricalCounts, m: int) -> Estimate:
    """Poisson mixtures with the mixing density on ``[0, inf)``."""
    return estimate_projection(counts, PowerSeriesFamily.poisson(), MeasureSpec.halfline(), m)


@dataclass
class CheckEstimate:
    """``Z * sum_k d_k q_k`` with ``q_k`` orthonormal for ``nu`` itself."""

    coeffs: np.ndarray
    Q: Optional[CoeffMatrix]
    family: PowerSeriesFamily
    measure: MeasureSpec

    def __call__(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if len(self.coeffs) == 0:
            return np.zeros(theta.size)
        return self.family.Z(theta) * (self.coeffs @ self.Q.values(theta, len(self.coeffs)))


def estimate_check(counts: EmpiricalCounts, family: PowerSeriesFamily,
                   measure: MeasureSpec, m: int) -> CheckEstimate:
    """The estimator in ``{p Z : deg p < m}`` matching the same empirical moments.

    The per-observation weight is ``Q[k, X] / a_X``.
    """
    if measure.kind != "interval":
        raise ValueError("estimate_check needs Lebesgue measure on an interval")
    if measure.b >= family.radius:
        raise ValueError(f"b={measure.b} must be below the radius R={family.radius}")
    if m == 0:
        return CheckEstimate(np.zeros(0), None, family, measure)
    Q = orthonormal_basis(measure, m)
    freq = _frequencies(counts, m)
    weights = Q.q / family.a_array(m)[None, :]
    return CheckEstimate(weights @ freq, Q, family, measure)


def _moment_mp(family: PowerSeriesFamily, measure: MeasureSpec, j: int):
    """``int theta^j Ztilde(theta)^2 nu(d theta)`` at the current mp precision."""
    two = mpmath.mpf(2)
    if family.is_poisson and measure.kind == "interval":
        a, b = mpmath.mpf(measure.a), mpmath.mpf(measure.b)
        return mpmath.gammainc(j + 1, 2 * a, 2 * b) / two ** (j + 1)
    if family.is_poisson and measure.kind == "halfline":
        return mpmath.factorial(j) / two ** (j + 1)
    if measure.kind == "interval":
        a, b = mpmath.mpf(measure.a), mpmath.mpf(measure.b)
        return mpmath.quad(lambda t: t**j / family.Z_mp(t) ** 2, [a, b])
    raise ValueError(f"no Gram moments for {family.name} on {measure.name}")


@dataclass(frozen=True)
class GramMatrix:
    """``R[k, l] = (Pi 1_k, Pi 1_l)_H`` held at ``dps`` decimal digits."""

    m: int
    R_mp: object = field(repr=False)
    dps: int
    cond: float
    family: PowerSeriesFamily = field(repr=False)
    measure: MeasureSpec = field(repr=False)

    @property
    def R(self) -> np.ndarray:
        return np.array(self.R_mp.tolist(), dtype=float)

    def inverse_mp(self):
        with _workdps(self.dps):
            return self.R_mp**-1


def gram_matrix(family: PowerSeriesFamily, measure: MeasureSpec, m: int,
                dps: Optional[int] = GRAM_DPS) -> GramMatrix:
    """Gram matrix of the mixand pmfs.

    ``dps=None`` works in double precision and refuses condition numbers
    above 1e12; otherwise the limit scales to ``10**(dps - 4)``, the same
    margin relative to the working precision.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if m > MAX_DEGREE:
        raise PrecisionCeilingError(f"m={m} exceeds the precision ceiling {MAX_DEGREE}")
    work = GRAM_DPS if dps is None else dps
    limit = DOUBLE_COND_LIMIT if dps is None else 10.0 ** (dps - 4)
    with _workdps(work):
        mom = [_moment_mp(family, measure, j) for j in range(2 * m - 1)]
        a = [mpmath.mpf(1) / mpmath.factorial(k) if family.is_poisson else mpmath.mpf(family.a(k))
             for k in range(m)]
        R = mpmath.matrix(m, m)
        for k in range(m):
            for l in range(m):
                R[k, l] = a[k] * a[l] * mom[k + l]
        if dps is None:
            Rf = np.array(R.tolist(), dtype=float)
            cond = float(np.linalg.cond(Rf))
            R = mpmath.matrix(Rf.tolist())
        else:
            try:
                cond = float(mpmath.mnorm(R, 1) * mpmath.mnorm(R**-1, 1))
            except ZeroDivisionError:
                cond = math.inf
    if not cond <= limit:
        raise ConditioningError(cond, limit)
    return GramMatrix(m, R, work if dps is not None else 16, cond, family, measure)


@lru_cache(maxsize=32)
def _gram_inverse(family, measure, m, dps):
    G = gram_matrix(family, measure, m, dps)
    return G, G.inverse_mp()


def estimate_gram(counts: EmpiricalCounts, family: PowerSeriesFamily, measure: MeasureSpec,
                  m: int, dps: int = GRAM_DPS) -> Estimate:
    """Solve ``R_m x = freq`` and return ``sum_k x_k Pi 1_k``.

    Evaluation runs at ``dps`` digits; the ``phi``-coordinates of the result
    are obtained by quadrature projection, independently of the ``Phi`` table.
    """
    basis = power_series_basis(family, measure, m)
    if m == 0:
        return Estimate(np.zeros(0), basis)
    freq = _frequencies(counts, m)
    G, Rinv = _gram_inverse(family, measure, m, dps)
    with _workdps(dps):
        x = Rinv * mpmath.matrix([mpmath.mpf(float(v)) for v in freq])
        log_a = [family.log_a(k) for k in range(m)]
        a_mp = [mpmath.mpf(1) / mpmath.factorial(k) if family.is_poisson else mpmath.exp(log_a[k])
                for k in range(m)]
        xs = [x[k] * a_mp[k] for k in range(m)]

    node_cache = {}

    def func(theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if "t" in node_cache and np.array_equal(theta, node_cache["t"]):
            return node_cache["v"].copy()
        out = np.empty(theta.size)
        with _workdps(dps):
            for i, t in enumerate(theta):
                tm = mpmath.mpf(float(t))
                poly = mpmath.mpf(0)
                for c in reversed(xs):
                    poly = poly * tm + c
                out[i] = float(poly / family.Z_mp(tm))
        return out

    t, w = quadrature(measure)
    vals = func(t)
    node_cache.update(t=t, v=vals)
    coeffs = basis.values(t) @ (w * vals)
    return Estimate(coeffs, basis, func=func)


def h_inner(f: Callable, g: Callable, measure: MeasureSpec) -> float:
    t, w = quadrature(measure)
    return float(np.sum(w * np.asarray(f(t)) * np.asarray(g(t))))


def h_distance(f: Callable, g: Callable, measure: MeasureSpec) -> float:
    t, w = quadrature(measure)
    d = np.asarray(f(t), dtype=float) - np.asarray(g(t), dtype=float)
    return float(np.sqrt(np.sum(w * d * d)))


@dataclass(frozen=True)
class ProjectionResult:
    coeffs: np.ndarray
    residual_norm: float
    norm: float


def project_density(f: Callable, family: PowerSeriesFamily, measure: MeasureSpec,
                    m: int) -> ProjectionResult:
    """Coordinates of ``Proj_{V_m} f`` and the residual ``||f - Proj f||_H``."""
    basis = power_series_basis(family, measure, m)
    t, w = quadrature(measure)
    fv = np.asarray(f(t), dtype=float)
    if not np.all(np.isfinite(fv)):
        raise ArithmeticError("density is not finite on the quadrature nodes")
    norm = math.sqrt(float(np.sum(w * fv * fv)))
    if m == 0:
        return ProjectionResult(np.zeros(0), norm, norm)
    V = basis.values(t)
    coeffs = V @ (w * fv)
    resid = fv - coeffs @ V
    return ProjectionResult(coeffs, math.sqrt(float(np.sum(w * resid * resid))), norm)


def mixture_pmf(f: Callable, family: PowerSeriesFamily, measure: MeasureSpec, count: int) -> np.ndarray:
    """``pi_f(x) = int f(theta) pi_theta(x) nu(d theta)`` for ``x < count``."""
    t, w = quadrature(measure)
    fv = np.asarray(f(t), dtype=float)
    k = np.arange(count)
    log_t = np.log(np.where(t > 0, t, 1.0))
    vals = np.exp(family.log_a_array(count)[:, None] + k[:, None] * log_t[None, :]
                  - family.log_Z(t)[None, :])
    vals[1:, t == 0] = 0.0
    return vals @ (w * fv)


@dataclass(frozen=True)
class MiseTerms:
    bias_sq: float
    variance: float

    @property
    def total(self) -> float:
        return self.bias_sq + self.variance


def exact_mise(f: Callable, family: PowerSeriesFamily, measure: MeasureSpec, m: int,
               n: int) -> MiseTerms:
    """Squared bias and variance of the order-``m`` estimator from ``n`` draws.

    Only ``x < m`` enter the variance because ``Phi[k, x] = 0`` for ``x > k``.
    """
    proj = project_density(f, family, measure, m)
    if m == 0:
        return MiseTerms(proj.norm**2, 0.0)
    basis = power_series_basis(family, measure, m)
    pi_f = mixture_pmf(f, family, measure, m)
    second_moment = float(np.sum(pi_f * np.sum(basis.phi**2, axis=0)))
    variance = (second_moment - float(np.sum(proj.coeffs**2))) / n
    return MiseTerms(proj.residual_norm**2, variance)


def variance_bound(f_inf: Callable, K: float, family: PowerSeriesFamily, measure: MeasureSpec,
                   m: int, n: int) -> float:
    """``(K / n) * tr(R_m^{-1} Delta_{f_inf, m})``.

    The diagonal of ``R_m^{-1}`` is read from ``Phi^T Phi``, which is exact
    and avoids inverting the ill-conditioned Gram matrix.
    """
    if K == 0 or m == 0:
        return 0.0
    basis = power_series_basis(family, measure, m)
    rinv_diag = np.sum(basis.phi**2, axis=0)
    pi_inf = mixture_pmf(f_inf, family, measure, m)
    return K / n * float(np.sum(rinv_diag * pi_inf))
