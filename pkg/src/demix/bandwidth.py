"""Model-order rules ``n -> m_n`` and the growth conditions behind them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mixands import PowerSeriesFamily, nu_pi_all, tail_bound
from .orthopoly import MeasureSpec
from .smoothness import SmoothnessSeq

__all__ = [
    "lambda_ab",
    "poisson_mn",
    "FiniteRRule",
    "finiteR_rule",
    "eta_guide",
    "cond45",
    "WnResult",
    "wn",
    "halfline_mn",
]

WN_TAIL = 1e-12


def lambda_ab(a: float, b: float) -> float:
    """``gamma + sqrt(gamma^2 + 1)`` with ``gamma = (2 + a + b) / (b - a)``."""
    if not 0 <= a < b:
        raise ValueError("need 0 <= a < b")
    g = (2 + a + b) / (b - a)
    return g + math.sqrt(g * g + 1)


def poisson_mn(n: int, tau: float = 1.0) -> int:
    """``ceil(tau log n / log log n)``."""
    if n < 16:
        raise ValueError("n must be at least 16 so that log log n > 1")
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    ln = math.log(n)
    return math.ceil(tau * ln / math.log(ln))


@dataclass(frozen=True)
class FiniteRRule:
    tau_max: float
    tau: float
    m_n: int


def finiteR_rule(family: PowerSeriesFamily, a: float, b: float, n: int,
                 tau: float | None = None) -> FiniteRRule:
    """``m_n = ceil(tau log n)`` with ``tau < 1 / log(lambda^2 max(1, bR))``; default ``tau_max / 2``."""
    R = family.radius
    if not math.isfinite(R):
        raise ValueError("the rule needs a finite radius of convergence")
    if b >= R:
        raise ValueError("b must be below the radius")
    lam = lambda_ab(a, b)
    tau_max = 1.0 / math.log(lam**2 * max(1.0, b * R))
    if tau is None:
        tau = tau_max / 2
    if not 0 < tau < tau_max:
        raise ValueError(f"tau must lie in (0, {tau_max:.6g})")
    return FiniteRRule(tau_max, tau, max(math.ceil(tau * math.log(n)), 0))


def eta_guide(tau: float, b: float, R: float, eps: float = 0.0) -> float:
    """The lower limit ``-1 / (tau log(b / (R - eps)))`` for the tail multiplier ``eta``."""
    return -1.0 / (tau * math.log(b / (R - eps)))


def cond45(family: PowerSeriesFamily, b: float, lambda1: float, m: int, n: int,
           a: float = 0.0) -> float:
    """``lambda1^{2m} max_{k<m} b^k / a_k / n``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if lambda1 <= lambda_ab(a, b):
        raise ValueError("lambda1 must exceed lambda(a, b)")
    k = np.arange(m)
    log_terms = k * math.log(b) - family.log_a_array(m) if b > 0 else -family.log_a_array(m)[:1]
    return math.exp(2 * m * math.log(lambda1) + float(np.max(log_terms)) - math.log(n))


@dataclass(frozen=True)
class WnResult:
    value: float
    bound: float


def wn(family: PowerSeriesFamily, measure: MeasureSpec, m: int, n: int,
       c0: float = 1.0) -> WnResult:
    """``n sum_{k>=m} nu Pi 1_k`` summed directly, with the tail-lemma bound."""
    if m == 0:
        direct = measure.b - measure.a
    else:
        count = m + 64
        while True:
            terms = nu_pi_all(family, measure, count)
            if terms[-1] < WN_TAIL * max(terms[m:].max(), 1e-300) or count > 4096:
                break
            count *= 2
        direct = float(np.sum(terms[m:][::-1]))
    return WnResult(n * direct, n * tail_bound(family, measure, m, c0))


def halfline_mn(n: int, lambda1: float, u: SmoothnessSeq) -> int:
    """Largest ``m`` with ``lambda1^m / u_m <= 0.1 sqrt(n)``; 0 when none qualifies."""
    if lambda1 <= 2 + math.sqrt(5):
        raise ValueError("lambda1 must exceed 2 + sqrt(5)")
    limit = 0.1 * math.sqrt(n)
    m, best = 0, 0
    while lambda1**m / u(m) <= limit:
        best = m
        m += 1
    return best
