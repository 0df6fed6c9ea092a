"""Mixtures of discrete uniform laws on ``{0, ..., theta - 1}``, ``theta >= 1``.

With ``h_k = (k + 1)(1_k - 1_{k+1})`` one has ``Pi h_k = 1_{k+1}``, so the
projection estimator reduces to a finite difference of empirical frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Mapping

import numpy as np

from .mixands import EmpiricalCounts

__all__ = [
    "PMF_TAIL",
    "estimate_uniform",
    "mixture_pmf_uniform",
    "mise_bound_uniform",
    "upper_bound_uniform",
    "lower_bound_uniform",
    "FixtureG",
    "fixture_g",
    "bandwidth_uniform",
]

PMF_TAIL = 1e-12


def estimate_uniform(counts: EmpiricalCounts, m: int) -> Dict[int, float]:
    """``f_hat(k) = k (P_n 1_{k-1} - P_n 1_k)`` for ``1 <= k <= m``."""
    if counts is None or not counts.n:
        raise ValueError("empty counts")
    if m < 1:
        raise ValueError("m must be at least 1")
    freq = counts.frequencies(m + 1)
    return {k: float(k * (freq[k - 1] - freq[k])) for k in range(1, m + 1)}


def _support(f: Mapping[int, float]) -> Dict[int, float]:
    out = {int(t): float(v) for t, v in f.items() if v != 0}
    if any(t < 1 for t in out):
        raise ValueError("theta ranges over positive integers")
    return out


def mixture_pmf_uniform(f: Mapping[int, float], k: int) -> float:
    """``pi_f(k) = sum_{theta > k} f(theta) / theta``."""
    return sum(v / t for t, v in _support(f).items() if t > k)


def mise_bound_uniform(f: Mapping[int, float], m: int, n: int) -> float:
    """Squared bias plus ``(1/n) sum_{k<m} (k+1)^2 (pi_f(k) + pi_f(k+1))``."""
    fs = _support(f)
    bias = sum(v * v for t, v in fs.items() if t > m)
    var = sum((k + 1) ** 2 * (mixture_pmf_uniform(fs, k) + mixture_pmf_uniform(fs, k + 1))
              for k in range(m))
    return bias + var / n


def upper_bound_uniform(C: float, u_m: float, m: int, n: int) -> float:
    """Class-wide bound ``(C u_m)^2 + 2 m^2 / n``."""
    return (C * u_m) ** 2 + 2 * m * m / n


def lower_bound_uniform(C: float, u_next: float, m: int, n: int) -> float:
    """``(C u_{m+1} / 2)^2 (1 - sqrt(5) C u_{m+1} / (2m))^n``."""
    base = 1 - math.sqrt(5) / (2 * m) * C * u_next
    return (C * u_next / 2) ** 2 * max(base, 0.0) ** n


@dataclass(frozen=True)
class FixtureG:
    m: int
    g: Dict[int, float]
    f0: Dict[int, float]


def fixture_g(m: int, C: float, u_next: float) -> FixtureG:
    """Perturbation on ``{m, m+1, m+2}`` with zero mass, zero first inverse moment
    and norm ``C u_next / 2``, plus the base pmf ``f0``.
    """
    if m < 2:
        raise ValueError("m must be at least 2")
    thetas = np.array([m, m + 1, m + 2], dtype=float)
    d = np.cross(np.ones(3), 1.0 / thetas)
    d /= np.linalg.norm(d)
    if d[0] < 0:
        d = -d
    g = d * (C * u_next / 2)
    f0_mass = float(np.sum(np.abs(g)))
    if f0_mass > 1:
        raise ValueError(f"C * u_next too large: base mass at 1 would be {1 - f0_mass:.4g}")
    gd = {int(t): float(v) for t, v in zip(thetas, g)}
    f0 = {1: 1.0 - f0_mass}
    f0.update({t: abs(v) for t, v in gd.items()})
    return FixtureG(m, gd, f0)


def bandwidth_uniform(n: int, tau: float, beta: float) -> int:
    """``ceil(tau n^beta)`` with ``0 < beta < 1/2``."""
    if not 0 < beta < 0.5:
        raise ValueError("beta must lie in (0, 1/2)")
    if tau <= 0:
        raise ValueError("tau must be positive")
    return math.ceil(tau * n**beta)
