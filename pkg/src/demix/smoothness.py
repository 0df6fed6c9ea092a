"""Approximation classes, the minimax lower bound and the proof fixtures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import comb

from .mixands import PowerSeriesFamily, nu_pi_all
from .orthopoly import MeasureSpec, quadrature
from .projector import mixture_pmf, power_series_basis, project_density, variance_bound

__all__ = [
    "SUP_GRID",
    "SmoothnessSeq",
    "ClassSpec",
    "MembershipVerdict",
    "FactoryDensity",
    "approx_error_seq",
    "class_member",
    "sup_ratio_norm",
    "k_inf",
    "theta_grid",
    "lower_bound_rhs",
    "upper_bound_rhs",
    "smooth_density_factory",
    "two_point_fixture",
    "weighted_modulus",
]

SUP_GRID = 4096
H_GRID = 256
FACTORY_TAIL = 1e-10
NORM_FLOOR = 1e-200


@dataclass(frozen=True)
class SmoothnessSeq:
    """A positive non-increasing sequence ``u_0, u_1, ...``."""

    alpha: Optional[float] = None
    table: Optional[tuple] = None

    def __post_init__(self):
        if (self.alpha is None) == (self.table is None):
            raise ValueError("give exactly one of alpha or table")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.table is not None:
            t = np.asarray(self.table, dtype=float)
            if t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) > 0):
                raise ValueError("table must be positive and non-increasing")

    @classmethod
    def power(cls, alpha: float) -> "SmoothnessSeq":
        return cls(alpha=float(alpha))

    @classmethod
    def tabulated(cls, values: Sequence[float]) -> "SmoothnessSeq":
        return cls(table=tuple(float(v) for v in values))

    def __call__(self, m: int) -> float:
        if m < 0:
            raise ValueError("m must be nonnegative")
        if self.alpha is not None:
            return (1.0 + m) ** (-self.alpha)
        if m >= len(self.table):
            raise IndexError(f"u_{m} lies beyond the table")
        return self.table[m]

    def values(self, count: int) -> np.ndarray:
        return np.array([self(m) for m in range(count)])


@dataclass(frozen=True)
class ClassSpec:
    u: SmoothnessSeq
    C: float
    r: int
    K: Optional[float] = None
    f0: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.C < 0:
            raise ValueError("C must be nonnegative")
        if self.r < 0:
            raise ValueError("r must be nonnegative")
        if self.K is not None:
            if self.K <= 0:
                raise ValueError("K must be positive")
            if self.f0 is None:
                raise ValueError("K requires a reference density f0")


def approx_error_seq(f: Callable, family: PowerSeriesFamily, measure: MeasureSpec,
                     m_max: int) -> np.ndarray:
    """``||f - Proj_{V_m} f||_H`` for ``m = 0..m_max``."""
    out = np.empty(m_max + 1)
    for m in range(m_max + 1):
        out[m] = project_density(f, family, measure, m).residual_norm
    # nested spaces: enforce monotonicity against quadrature noise at the 1e-15 level
    return np.minimum.accumulate(out)


@dataclass(frozen=True)
class MembershipVerdict:
    member: bool
    m_max: int
    worst_m: Optional[int]

    def __bool__(self):
        return self.member

    def __str__(self):
        verdict = "member" if self.member else f"not a member (fails at m={self.worst_m})"
        return f"{verdict}, checked up to m_max={self.m_max}"


def theta_grid(measure: MeasureSpec, size: int = SUP_GRID) -> np.ndarray:
    if not measure.bounded:
        raise ValueError("sup-norm grids need a bounded parameter set")
    return np.linspace(measure.a, measure.b, size)


def class_member(f: Callable, spec: ClassSpec, family: PowerSeriesFamily,
                 measure: MeasureSpec, m_max: int) -> MembershipVerdict:
    """Membership in ``C(u, C, r)`` (or ``C_{f0}(K, u, C, r)``) verified for ``m <= m_max``."""
    if m_max < spec.r:
        raise ValueError("m_max must be at least r")
    res = approx_error_seq(f, family, measure, m_max)
    for m in range(spec.r, m_max + 1):
        if res[m] > spec.C * spec.u(m) * (1 + 1e-12):
            return MembershipVerdict(False, m_max, m)
    if spec.K is not None:
        if sup_ratio_norm(f, spec.f0, theta_grid(measure)) > spec.K:
            return MembershipVerdict(False, m_max, None)
    return MembershipVerdict(True, m_max, None)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.abs(num)
    out = np.zeros_like(num, dtype=float)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    out[~pos & (num > 0)] = np.inf
    return out


def sup_ratio_norm(f: Callable, f0: Callable, grid) -> float:
    """``max |f| / f0`` on the grid with ``0/0 = 0``; a lower bound on the true sup."""
    grid = np.asarray(grid, dtype=float)
    return float(np.max(_ratio(np.asarray(f(grid), float), np.asarray(f0(grid), float))))


def k_inf(basis_rows: Sequence[int], f0: Callable, grid, family: PowerSeriesFamily,
          measure: MeasureSpec) -> float:
    """``sup { ||f||_{inf,f0} : f in span(phi_rows), ||f||_H = 1 }``.

    For orthonormal rows the unit-ball sup at a point is ``sqrt(sum phi_k^2)``.
    """
    rows = sorted(set(int(k) for k in basis_rows))
    if not rows:
        return 0.0
    grid = np.asarray(grid, dtype=float)
    basis = power_series_basis(family, measure, rows[-1] + 1)
    vals = basis.values(grid)[rows]
    return float(np.max(_ratio(np.sqrt(np.sum(vals**2, axis=0)), np.asarray(f0(grid), float))))


def lower_bound_rhs(f0: Callable, spec: ClassSpec, family: PowerSeriesFamily,
                    measure: MeasureSpec, m: int, n: int) -> float:
    """Minimax lower bound over ``f0 + C_{f0}(K, u, C, r)`` at order ``m``."""
    K = 1.0 if spec.K is None else spec.K
    if K > 1:
        raise ValueError("the lower bound requires K <= 1")
    if m < spec.r:
        raise ValueError("m must be at least r")
    kv = k_inf([m, m + 1], f0, theta_grid(measure), family, measure)
    amp = min(K / kv, spec.C * spec.u(m + 1))
    mass = float(np.sum(mixture_pmf(f0, family, measure, m))) if m > 0 else 0.0
    mass = min(mass, 1.0)
    return amp**2 * mass**n


def upper_bound_rhs(f_inf: Callable, K: float, C: float, u: SmoothnessSeq,
                    family: PowerSeriesFamily, measure: MeasureSpec, m: int, n: int) -> float:
    """``(C u_m)^2 + (K/n) tr(R_m^{-1} Delta_{f_inf,m})`` over ``C_{f_inf}(K, u, C, r)``."""
    return (C * u(m)) ** 2 + variance_bound(f_inf, K, family, measure, m, n)


@dataclass(frozen=True)
class FactoryDensity:
    """``f = sum_k alpha_k Pi 1_k`` with ``alpha_k >= 0``.

    ``class_constant`` is the smallest ``C`` the construction certifies,
    i.e. ``f`` lies in ``C(u, class_constant, r)``.
    """

    alpha: np.ndarray
    family: PowerSeriesFamily
    measure: MeasureSpec
    class_constant: float

    @property
    def k_max(self) -> int:
        return len(self.alpha) - 1

    def __call__(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        k = np.arange(len(self.alpha))
        log_t = np.log(np.where(theta > 0, theta, 1.0))
        terms = np.exp(self.family.log_a_array(len(self.alpha))[:, None]
                       + k[:, None] * log_t[None, :] - self.family.log_Z(theta)[None, :])
        terms[1:, theta == 0] = 0.0
        return self.alpha @ terms

    def integral(self) -> float:
        t, w = quadrature(self.measure)
        return float(np.sum(w * self(t)))


class InfeasibleClassError(ValueError):
    def __init__(self, required: float):
        super().__init__(f"normalization needs C >= {required:.6g}")
        self.required = required


def _pmf_norms(family: PowerSeriesFamily, measure: MeasureSpec, count: int) -> np.ndarray:
    t, w = quadrature(measure)
    k = np.arange(count)
    log_t = np.log(np.where(t > 0, t, 1.0))
    vals = np.exp(family.log_a_array(count)[:, None] + k[:, None] * log_t[None, :]
                  - family.log_Z(t)[None, :])
    vals[1:, t == 0] = 0.0
    return np.sqrt(vals**2 @ w)


def smooth_density_factory(family: PowerSeriesFamily, measure: MeasureSpec, u: SmoothnessSeq,
                           r: int, k_max: int = 60, C: float = 1.0) -> FactoryDensity:
    """A smooth probability density in ``C(u, C, r)`` with positive coefficients.

    ``beta_k = (u_k - u_{k+1}) / max(||Pi 1_k||_H, nu Pi 1_k)`` so that
    ``sum_{k>=m} beta_k ||Pi 1_k|| <= u_m``.  For ``r >= 1`` the coefficient
    on ``Pi 1_0`` is free and absorbs the normalization; for ``r = 0`` the
    whole sequence is rescaled and the class needs ``C >= C0``.  The
    series stops at the first ``k`` whose remaining tail is below
    ``1e-10 u_0``, at ``k_max``, or before the mixand norms underflow;
    truncation keeps both constraints exact.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    count = k_max + 2
    nu = nu_pi_all(family, measure, count)
    norms = _pmf_norms(family, measure, count)
    usable = np.flatnonzero(np.maximum(norms, nu) < NORM_FLOOR)
    if usable.size:
        count = max(int(usable[0]), 2)
        nu, norms = nu[:count], norms[:count]
    uv = np.array([u(k) for k in range(count)])
    beta = (uv[:-1] - uv[1:]) / np.maximum(norms[:-1], nu[:-1])
    # truncate where the weighted tail drops below tolerance
    contrib = beta * norms[:-1]
    tail = np.cumsum(contrib[::-1])[::-1]
    cut = len(beta) - 1
    for k in range(len(beta)):
        if k + 1 < len(beta) and tail[k + 1] < FACTORY_TAIL * uv[0]:
            cut = k
            break
    beta = beta[: cut + 1].copy()
    nu = nu[: cut + 1]
    if np.any(beta < 0):
        raise ValueError("u must be non-increasing")
    if r == 0:
        C0 = 1.0 / float(np.sum(beta * nu))
        if C < C0:
            raise InfeasibleClassError(C0)
        return FactoryDensity(C0 * beta, family, measure, C0)
    S = float(np.sum(beta[1:] * nu[1:]))
    lam = C if S == 0 else min(C, 0.5 / S)
    alpha = lam * beta
    alpha[0] = (1.0 - float(np.sum(alpha[1:] * nu[1:]))) / nu[0]
    return FactoryDensity(alpha, family, measure, lam)


def two_point_fixture(family: PowerSeriesFamily, measure: MeasureSpec, m: int,
                      target_norm: float):
    """``g = a phi_m + b phi_{m+1}`` with ``nu g = 0``, ``g perp V_m`` and ``||g||_H = target_norm``.

    Returns ``(g, (a, b))``.
    """
    basis = power_series_basis(family, measure, m + 2)
    t, w = quadrature(measure)
    vals = basis.values(t)
    i_m, i_m1 = float(vals[m] @ w), float(vals[m + 1] @ w)
    if i_m == 0 and i_m1 == 0:
        raise ValueError("both nu-integrals vanish; the fixture is degenerate")
    norm = math.hypot(i_m, i_m1)
    a, b = target_norm * i_m1 / norm, -target_norm * i_m / norm
    coeffs = np.zeros(m + 2)
    coeffs[m], coeffs[m + 1] = a, b

    def g(theta):
        return coeffs @ basis.values(theta)

    return g, (a, b)


def weighted_modulus(f: Callable, r: int, t: float, measure: MeasureSpec,
                     h_points: int = H_GRID) -> float:
    """Grid value of ``sup_{0<h<=t} || Delta^r_{h phi(.)}(f, .) ||_2``, ``phi(x) = sqrt((x-a)(b-x))``.

    Differences reaching outside ``[a, b]`` are set to 0.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if r < 1:
        raise ValueError("r must be a positive integer")
    a, b = measure.a, measure.b
    x, w = quadrature(MeasureSpec.interval(a, b))
    phi = np.sqrt((x - a) * (b - x))
    weights = np.array([(-1) ** (r - i) * comb(r, i, exact=True) for i in range(r + 1)], float)
    best = 0.0
    for h in np.geomspace(t * 1e-4, t, h_points):
        pts = x[None, :] + (np.arange(r + 1)[:, None] - r / 2) * h * phi[None, :]
        inside = np.all((pts >= a) & (pts <= b), axis=0)
        diff = weights @ np.asarray(f(pts.ravel()), float).reshape(pts.shape)
        diff[~inside] = 0.0
        best = max(best, math.sqrt(float(np.sum(w * diff * diff))))
    return best
