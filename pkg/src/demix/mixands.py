"""Mixand families: power series, discrete uniform and integer translation.

A power-series family is fixed by its coefficient sequence ``a_k`` (with
``a_0 = 1``) and radius of convergence ``R``; the mixand at ``theta`` is the
pmf ``a_k theta^k / Z(theta)`` with ``Z(t) = sum_k a_k t^k``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import mpmath
import numpy as np

from .orthopoly import MeasureSpec, quadrature

__all__ = [
    "PowerSeriesFamily",
    "NoisePmf",
    "EmpiricalCounts",
    "A2Check",
    "ps_pmf",
    "ps_Z",
    "nu_pi",
    "nu_pi_all",
    "tail_bound",
    "check_A2",
    "uniform_pmf",
    "pmf_cutoff",
]

PMF_TAIL = 1e-12
PMF_MAX_K = 10_000
SERIES_RTOL = 1e-14


class PowerSeriesFamily:
    """Power-series mixands ``pi_theta(k) = a_k theta^k / Z(theta)``.

    Use the :meth:`poisson`, :meth:`negative_binomial` and :meth:`custom`
    constructors.  Built-ins evaluate ``Z`` in closed form; custom families
    sum the series.  Coefficient values are cached; filling the cache is
    idempotent, and a lock keeps concurrent fills consistent.
    """

    def __init__(self, name: str, a: Callable[[int], float], radius: float,
                 log_a: Optional[Callable[[int], float]] = None,
                 Z: Optional[Callable] = None, Z_mp: Optional[Callable] = None):
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.name = name
        self.radius = float(radius)
        self._a = a
        self._log_a = log_a
        self._Z = Z
        self._Z_mp = Z_mp
        self._cache: list = []
        self._lock = threading.Lock()
        a0 = float(a(0))
        if abs(a0 - 1.0) > 1e-15:
            raise ValueError(f"a(0) must equal 1, got {a0}")

    def __repr__(self):
        return f"PowerSeriesFamily({self.name!r}, radius={self.radius})"

    @classmethod
    def poisson(cls) -> "PowerSeriesFamily":
        return cls(
            "poisson",
            a=lambda k: 1.0 / math.factorial(k),
            radius=math.inf,
            log_a=lambda k: -math.lgamma(k + 1.0),
            Z=np.exp,
            Z_mp=mpmath.exp,
        )

    @classmethod
    def negative_binomial(cls, shape: float = 1.0) -> "PowerSeriesFamily":
        """``a_k = binom(shape + k - 1, k)``; ``shape = 1`` is the geometric law."""
        if not shape > 0:
            raise ValueError("shape must be positive")
        shape = float(shape)

        def log_a(k):
            return math.lgamma(shape + k) - math.lgamma(shape) - math.lgamma(k + 1.0)

        return cls(
            f"negbin({shape:g})",
            a=lambda k: math.exp(log_a(k)),
            radius=1.0,
            log_a=log_a,
            Z=lambda t: (1.0 - np.asarray(t, dtype=float)) ** (-shape),
            Z_mp=lambda t: (1 - t) ** (-mpmath.mpf(shape)),
        )

    @classmethod
    def custom(cls, name: str, a: Callable[[int], float], radius: float) -> "PowerSeriesFamily":
        return cls(name, a=a, radius=radius)

    @property
    def is_poisson(self) -> bool:
        return self.name == "poisson"

    def _fill(self, k: int):
        with self._lock:
            for j in range(len(self._cache), k + 1):
                v = float(self._a(j))
                if not v > 0:
                    raise ValueError(f"a({j}) = {v} is not positive")
                self._cache.append(v)

    def a(self, k: int) -> float:
        if k < 0:
            raise IndexError("negative coefficient index")
        if k >= len(self._cache):
            self._fill(k)
        return self._cache[k]

    def a_array(self, count: int) -> np.ndarray:
        if count > len(self._cache):
            self._fill(count - 1)
        return np.array(self._cache[:count])

    def log_a(self, k: int) -> float:
        if self._log_a is not None:
            return self._log_a(k)
        return math.log(self.a(k))

    def log_a_array(self, count: int) -> np.ndarray:
        return np.array([self.log_a(k) for k in range(count)])

    def _check_domain(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t >= self.radius):
            raise ValueError(f"argument outside [0, R) with R={self.radius}")
        return t

    def Z(self, t):
        t = self._check_domain(t)
        if self._Z is not None:
            return self._Z(t)
        return np.vectorize(self._series)(t)

    def Ztilde(self, t):
        return 1.0 / self.Z(t)

    def log_Z(self, t):
        t = self._check_domain(t)
        if self.is_poisson:
            return t
        return np.log(self.Z(t))

    def _series(self, t: float) -> float:
        total, k = 0.0, 0
        term = 1.0
        while True:
            term = self.a(k) * t**k
            total += term
            if k > 0 and term <= SERIES_RTOL * total:
                return total
            k += 1
            if k > PMF_MAX_K:
                raise ArithmeticError(f"Z series did not converge at t={t}")

    def Z_mp(self, t):
        """``Z`` at mpmath precision (series fallback for custom families)."""
        if self._Z_mp is not None:
            return self._Z_mp(t)
        total, k = mpmath.mpf(0), 0
        eps = mpmath.mpf(10) ** (-mpmath.mp.dps)
        while True:
            term = mpmath.mpf(self.a(k)) * t**k
            total += term
            if k > 0 and term <= eps * total:
                return total
            k += 1
            if k > PMF_MAX_K:
                raise ArithmeticError("Z series did not converge")


def ps_Z(family: PowerSeriesFamily, t):
    """``Z(t) = sum_k a_k t^k`` for ``0 <= t < R``."""
    out = family.Z(t)
    return float(out) if np.ndim(t) == 0 else out


def ps_pmf(family: PowerSeriesFamily, theta, k):
    """``a_k theta^k / Z(theta)``; vectorized over ``theta`` and ``k``."""
    theta = family._check_domain(theta)
    k = np.asarray(k)
    if np.any(k < 0):
        raise ValueError("k must be nonnegative")
    log_ak = np.vectorize(family.log_a, otypes=[float])(k)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_pow = np.where(k == 0, 0.0, k * np.log(np.where(theta > 0, theta, 1.0)))
        log_pow = np.where((theta == 0) & (k > 0), -np.inf, log_pow)
    out = np.exp(log_ak + log_pow - family.log_Z(theta))
    return float(out) if out.ndim == 0 else out


def pmf_cutoff(family: PowerSeriesFamily, theta_max: float, tail: float = PMF_TAIL) -> int:
    """Smallest K with ``sum_{k<K} pi_theta(k) >= 1 - tail`` at ``theta_max``.

    Mixand tails are stochastically increasing in theta, so this K serves
    every theta below ``theta_max``.
    """
    theta_max = float(theta_max)
    if theta_max == 0:
        return 1
    log_z = float(family.log_Z(theta_max))
    total = 0.0
    for k in range(PMF_MAX_K + 1):
        total += math.exp(family.log_a(k) + k * math.log(theta_max) - log_z)
        if total >= 1.0 - tail:
            return k + 1
    raise ArithmeticError(f"pmf tail above {tail} after {PMF_MAX_K} terms at theta={theta_max}")


def _require_inside(family: PowerSeriesFamily, measure: MeasureSpec):
    if measure.bounded and measure.b >= family.radius:
        raise ValueError(f"measure support reaches b={measure.b} >= R={family.radius}")
    if not measure.bounded and math.isfinite(family.radius):
        raise ValueError("unbounded support needs an infinite radius of convergence")


def nu_pi_all(family: PowerSeriesFamily, measure: MeasureSpec, count: int) -> np.ndarray:
    """``nu Pi 1_k = int a_k theta^k Ztilde(theta) nu(d theta)`` for k < count."""
    _require_inside(family, measure)
    t, w = quadrature(measure)
    k = np.arange(count)
    log_t = np.log(np.where(t > 0, t, 1.0))
    log_terms = family.log_a_array(count)[:, None] + k[:, None] * log_t[None, :] - family.log_Z(t)[None, :]
    vals = np.exp(log_terms)
    vals[1:, t == 0] = 0.0
    return vals @ w


def nu_pi(family: PowerSeriesFamily, measure: MeasureSpec, k: int) -> float:
    return float(nu_pi_all(family, measure, k + 1)[k])


def tail_bound(family: PowerSeriesFamily, measure: MeasureSpec, m: int, c0: float) -> float:
    """Upper bound ``c0 a_m int t^m nu(dt)`` on ``sum_{k >= m} nu Pi 1_k``."""
    if not measure.bounded:
        raise ValueError("tail bound needs a bounded interval")
    a, b = measure.a, measure.b
    if measure.kind == "interval":
        moment = (b ** (m + 1) - a ** (m + 1)) / (m + 1)
    else:
        t, w = quadrature(measure)
        moment = float(np.sum(w * t**m))
    return c0 * family.a(m) * moment


@dataclass(frozen=True)
class A2Check:
    holds: bool
    L: float


def check_A2(family: PowerSeriesFamily, c0: float, kmax: int) -> A2Check:
    """Check ``a_{k+l} <= c0 a_k a_l`` for ``k + l <= kmax``.

    Also returns the partial infimum of ``(log c0 + log a_n) / n`` over
    ``1 <= n <= kmax``, which tends to ``-log R``.
    """
    if not c0 > 0:
        raise ValueError("c0 must be positive")
    if kmax < 2:
        raise ValueError("kmax must be at least 2")
    log_a = family.log_a_array(kmax + 1)
    log_c0 = math.log(c0)
    holds = True
    for k in range(kmax + 1):
        l = np.arange(0, kmax - k + 1)
        lhs = log_a[k + l]
        rhs = log_c0 + log_a[k] + log_a[l]
        if np.any(lhs > rhs + 1e-12 * np.maximum(1.0, np.abs(rhs))):
            holds = False
            break
    n = np.arange(1, kmax + 1)
    L = float(np.min((log_c0 + log_a[1:]) / n))
    return A2Check(holds, L)


def uniform_pmf(theta: int, k: int) -> float:
    """Uniform law on ``{0, ..., theta - 1}`` evaluated at ``k``."""
    if theta < 1:
        raise ValueError("theta must be a positive integer")
    return 1.0 / theta if 0 <= k < theta else 0.0


@dataclass(frozen=True)
class NoisePmf:
    """Finitely supported pmf on Z: ``probs[j]`` is the mass at ``offset + j``."""

    offset: int
    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty sequence")
        if np.any(p < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float]) -> "NoisePmf":
        lo, hi = min(mapping), max(mapping)
        return cls(lo, tuple(float(mapping.get(k, 0.0)) for k in range(lo, hi + 1)))

    def as_dict(self) -> dict:
        return {self.offset + j: p for j, p in enumerate(self.probs) if p != 0}


class EmpiricalCounts:
    """Histogram of integer observations."""

    def __init__(self, counts: Mapping[int, int]):
        clean = {}
        for k, c in counts.items():
            if int(k) != k:
                raise ValueError(f"non-integer value {k!r}")
            if int(c) != c or c < 0:
                raise ValueError(f"invalid count {c!r} for value {k}")
            if c:
                clean[int(k)] = int(c)
        if not clean:
            raise ValueError("empty counts")
        self.counts = dict(sorted(clean.items()))
        self.n = sum(self.counts.values())

    @classmethod
    def from_observations(cls, xs) -> "EmpiricalCounts":
        values, counts = np.unique(np.asarray(xs, dtype=np.int64), return_counts=True)
        return cls(dict(zip(values.tolist(), counts.tolist())))

    def __eq__(self, other):
        return isinstance(other, EmpiricalCounts) and self.counts == other.counts

    def __repr__(self):
        return f"EmpiricalCounts(n={self.n}, counts={self.counts})"

    @property
    def min_value(self) -> int:
        return next(iter(self.counts))

    @property
    def max_value(self) -> int:
        return next(reversed(self.counts))

    def frequencies(self, size: int) -> np.ndarray:
        """Empirical frequencies of ``0..size-1``; values outside are dropped."""
        if self.min_value < 0:
            raise ValueError("negative observations are not allowed here")
        out = np.zeros(size)
        for k, c in self.counts.items():
            if k < size:
                out[k] = c
        return out / self.n
