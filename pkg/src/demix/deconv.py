"""Discrete deconvolution on the integers.

Observations are ``X = Y + E`` with ``Y ~ f`` and independent noise
``E ~ p``.  The estimator divides the empirical characteristic series by
``p*`` and inverts on a uniform frequency grid, which the FFT evaluates in
one pass for all ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Union

import numpy as np

from .mixands import EmpiricalCounts, NoisePmf

__all__ = [
    "DEFAULT_GRID",
    "DIVERGENCE_THRESHOLD",
    "DivergentKpError",
    "FourierGrid",
    "KpResult",
    "Thm4Constants",
    "fourier_series",
    "Kp",
    "estimate_deconv",
    "convolve",
    "thm4_constants",
    "fisher_info",
]

DEFAULT_GRID = 8192
DIVERGENCE_THRESHOLD = 1e-12

PmfLike = Union[NoisePmf, Mapping[int, float]]


class DivergentKpError(ArithmeticError):
    pass


def _as_dict(p: PmfLike) -> Dict[int, float]:
    if isinstance(p, NoisePmf):
        return p.as_dict()
    return {int(k): float(v) for k, v in p.items()}


@dataclass(frozen=True)
class FourierGrid:
    """``G`` equispaced frequencies ``lambda_j = 2 pi j / G`` (one period)."""

    G: int = DEFAULT_GRID

    def __post_init__(self):
        if self.G < 2 or self.G % 2:
            raise ValueError("G must be an even integer >= 2")

    @property
    def nodes(self) -> np.ndarray:
        lam = 2 * np.pi * np.arange(self.G) / self.G
        return np.where(lam > np.pi, lam - 2 * np.pi, lam)

    def fit(self, width: int) -> "FourierGrid":
        """Smallest doubling of ``G`` exceeding twice ``width``."""
        G = self.G
        while G <= 2 * width:
            G *= 2
        return FourierGrid(G)


def fourier_series(coeffs: PmfLike, lam) -> np.ndarray:
    """``sum_k c_k exp(-i k lambda)`` as an exact finite sum."""
    c = _as_dict(coeffs)
    lam = np.asarray(lam, dtype=float)
    out = np.zeros(lam.shape, dtype=complex)
    for k, v in sorted(c.items()):
        out += v * np.exp(-1j * k * lam)
    return out


def _dft(c: Dict[int, float], G: int) -> np.ndarray:
    # P[j] = sum_k c_k exp(-2 pi i j k / G), i.e. the series at lambda_j
    arr = np.zeros(G)
    for k, v in c.items():
        arr[k % G] += v
    return np.fft.fft(arr)


@dataclass(frozen=True)
class KpResult:
    value: float
    divergent: bool


def Kp(p: PmfLike, grid: FourierGrid = FourierGrid()) -> KpResult:
    """Trapezoid value of ``int_{-pi}^{pi} |p*(lambda)|^{-2} d lambda``."""
    ps = _dft(_as_dict(p), grid.G)
    mod2 = ps.real**2 + ps.imag**2
    if mod2.min() < DIVERGENCE_THRESHOLD:
        return KpResult(float("inf"), True)
    return KpResult(float(2 * np.pi * np.mean(1.0 / mod2)), False)


def estimate_deconv(counts: EmpiricalCounts, p: PmfLike, k_range: Iterable[int],
                    grid: FourierGrid = FourierGrid()) -> Dict[int, float]:
    """``f_hat(k) = (1/2pi) int P_n*(lambda) / p*(lambda) e^{ik lambda} d lambda``."""
    if not counts.n:
        raise ValueError("empty counts")
    pd = _as_dict(p)
    ks = list(k_range)
    lo = min([counts.min_value, *pd.keys(), *ks])
    hi = max([counts.max_value, *pd.keys(), *ks])
    g = grid.fit(hi - lo + 1)
    if Kp(pd, g).divergent:
        raise DivergentKpError("p* vanishes on the unit circle")
    pn = _dft({k: c / counts.n for k, c in counts.counts.items()}, g.G)
    ps = _dft(pd, g.G)
    fhat = np.fft.ifft(pn / ps).real
    return {k: float(fhat[k % g.G]) for k in ks}


def convolve(f: PmfLike, p: PmfLike) -> Dict[int, float]:
    fd, pd = _as_dict(f), _as_dict(p)
    out: Dict[int, float] = {}
    for i, a in fd.items():
        for j, b in pd.items():
            out[i + j] = out.get(i + j, 0.0) + a * b
    return out


@dataclass(frozen=True)
class Thm4Constants:
    c0: float
    c1: float
    asymptotic_lower: float
    identifiable: bool


def thm4_constants(f0: PmfLike, f1: PmfLike, p: PmfLike) -> Thm4Constants:
    """``c0 = sum (f1 - f0)^2``, ``c1 = sum |pi_f1 - pi_f0|`` and ``c0 / (2 c1)``."""
    a, b = _as_dict(f0), _as_dict(f1)
    c0 = sum((b.get(k, 0.0) - a.get(k, 0.0)) ** 2 for k in set(a) | set(b))
    pa, pb = convolve(a, p), convolve(b, p)
    c1 = sum(abs(pb.get(k, 0.0) - pa.get(k, 0.0)) for k in set(pa) | set(pb))
    if c1 == 0:
        return Thm4Constants(c0, 0.0, float("nan"), False)
    return Thm4Constants(c0, c1, c0 / (2 * c1), True)


def fisher_info(w: float, f0: PmfLike, f1: PmfLike, p: PmfLike) -> float:
    """Fisher information of ``w`` in the mixture ``(1 - w) pi_f0 + w pi_f1`` (``0/0 = 0``)."""
    if not 0 < w < 1:
        raise ValueError("w must lie in (0, 1)")
    pa, pb = convolve(f0, p), convolve(f1, p)
    total = 0.0
    for k in sorted(set(pa) | set(pb)):
        d = pb.get(k, 0.0) - pa.get(k, 0.0)
        den = (pa.get(k, 0.0) + pb.get(k, 0.0)) / 2 + (w - 0.5) * d
        if d != 0:
            total += d * d / den
    return total
