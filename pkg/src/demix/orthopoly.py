"""Orthonormal polynomial sequences for the supported reference measures.

Coefficient tables are built from three-term recurrences

    r_{k+1}(t) = (t - alpha_k) r_k(t) - beta_k r_{k-1}(t),  r_{-1} = 0, r_0 = 1,

normalized by N_k = sqrt(beta_0 * ... * beta_k).  Closed-form (alpha, beta)
are known for Lebesgue measure on an interval and for the weights e^{-t},
e^{-2t} on the half-line; any other measure given as a weight on an interval
goes through a discretized Stieltjes procedure.

Monomial coefficients grow geometrically with the degree, so function values
are always computed through the normalized recurrence (``CoeffMatrix.values``)
rather than by Horner's rule on the table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "MAX_DEGREE",
    "MeasureSpec",
    "RecurrenceCoeffs",
    "CoeffMatrix",
    "PrecisionCeilingError",
    "NumericalRangeError",
    "NotPositiveDefiniteError",
    "recurrence_for",
    "orthonormal_coeffs",
    "orthonormal_basis",
    "eval_orthopoly",
    "gram_schmidt_oracle",
    "exact_moments",
    "coeff_growth",
    "quadrature",
]

MAX_DEGREE = 30
INTERVAL_NODES = 256
HALFLINE_NODES = 128


class PrecisionCeilingError(ValueError):
    """Requested more rows than ``MAX_DEGREE`` without an explicit override."""


class NumericalRangeError(ArithmeticError):
    """Overflow or NaN while running a recurrence."""


class NotPositiveDefiniteError(ArithmeticError):
    """Moment (Hankel) matrix is not numerically positive definite."""


@dataclass(frozen=True)
class MeasureSpec:
    """A reference measure on the real line.

    kind is one of

    ``"interval"``
        Lebesgue measure on ``[a, b]``.
    ``"exp"``
        Density ``exp(-rate * t)`` on ``(0, inf)``, rate 1 or 2.
    ``"halfline"``
        Lebesgue measure on ``[0, inf)``.  Infinite mass, so it only serves
        as the ambient L2 space of the half-line estimator; it has no
        orthogonal polynomials of its own.
    ``"weighted"``
        Density ``weight(t)`` with respect to Lebesgue measure on ``[a, b]``.
    """

    kind: str
    a: float = 0.0
    b: float = 1.0
    rate: float = 1.0
    weight: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, compare=False, repr=False
    )
    label: str = ""

    def __post_init__(self):
        if self.kind in ("interval", "weighted"):
            if not (math.isfinite(self.a) and math.isfinite(self.b)):
                raise ValueError("interval endpoints must be finite")
            if not self.a < self.b:
                raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
            if self.kind == "weighted" and self.weight is None:
                raise ValueError("weighted measure needs a weight function")
        elif self.kind == "exp":
            if self.rate not in (1, 2):
                raise ValueError(f"exp-weight rate must be 1 or 2, got {self.rate}")
        elif self.kind != "halfline":
            raise ValueError(f"unsupported measure kind {self.kind!r}")

    @classmethod
    def interval(cls, a: float, b: float) -> "MeasureSpec":
        return cls("interval", a=float(a), b=float(b))

    @classmethod
    def exp_weight(cls, rate: float) -> "MeasureSpec":
        return cls("exp", a=0.0, b=math.inf, rate=rate)

    @classmethod
    def halfline(cls) -> "MeasureSpec":
        return cls("halfline", a=0.0, b=math.inf)

    @classmethod
    def weighted(cls, a, b, weight, label="") -> "MeasureSpec":
        return cls("weighted", a=float(a), b=float(b), weight=weight, label=label)

    @property
    def bounded(self) -> bool:
        return self.kind in ("interval", "weighted")

    @property
    def name(self) -> str:
        if self.kind == "interval":
            if (self.a, self.b) == (-1.0, 1.0):
                return "legendre"
            return f"lebesgue[{self.a:g},{self.b:g}]"
        if self.kind == "exp":
            return "laguerre" if self.rate == 1 else "laguerre2"
        if self.kind == "halfline":
            return "halfline"
        return self.label or f"weighted[{self.a:g},{self.b:g}]"


@dataclass(frozen=True)
class RecurrenceCoeffs:
    """Recurrence sequences; ``beta[0]`` is the total mass of the measure."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        if len(self.alpha) != len(self.beta):
            raise ValueError("alpha and beta must have equal length")
        if np.any(~(self.beta > 0)):
            k = int(np.argmax(~(self.beta > 0)))
            raise ValueError(f"beta[{k}] = {self.beta[k]} is not positive")

    def __len__(self):
        return len(self.alpha)


def quadrature(measure: MeasureSpec, n: Optional[int] = None):
    """Nodes and weights integrating against ``measure``.

    Gauss-Legendre on bounded supports, Gauss-Laguerre on the half-line.
    For ``"halfline"`` the Laguerre weights are multiplied back by e^{2t} so
    that the rule targets plain Lebesgue measure; integrands are expected to
    decay at least like e^{-2t} for full accuracy.
    """
    if measure.bounded:
        n = n or INTERVAL_NODES
        x, w = np.polynomial.legendre.leggauss(n)
        half = 0.5 * (measure.b - measure.a)
        t = half * x + 0.5 * (measure.a + measure.b)
        w = w * half
        if measure.kind == "weighted":
            w = w * np.asarray(measure.weight(t), dtype=float)
        return t, w
    n = n or HALFLINE_NODES
    x, w = np.polynomial.laguerre.laggauss(n)
    if measure.kind == "exp":
        return x / measure.rate, w / measure.rate
    t = x / 2.0
    with np.errstate(over="ignore"):
        w = np.where(w > 0, np.exp(np.log(np.where(w > 0, w, 1.0)) + x), 0.0) / 2.0
    return t, w


def _stieltjes(measure: MeasureSpec, count: int, nodes: int) -> RecurrenceCoeffs:
    t, w = quadrature(measure, nodes)
    alpha = np.empty(count)
    beta = np.empty(count)
    beta[0] = float(np.sum(w))
    q_prev = np.zeros_like(t)
    q = np.full_like(t, 1.0 / math.sqrt(beta[0]))
    for k in range(count):
        alpha[k] = float(np.sum(w * t * q * q))
        if k + 1 == count:
            break
        v = (t - alpha[k]) * q - (math.sqrt(beta[k]) * q_prev if k else 0.0)
        beta[k + 1] = float(np.sum(w * v * v))
        if not beta[k + 1] > 0:
            raise NumericalRangeError(f"Stieltjes procedure lost positivity at k={k + 1}")
        q_prev, q = q, v / math.sqrt(beta[k + 1])
    return RecurrenceCoeffs(alpha, beta)


def recurrence_for(measure: MeasureSpec, count: int = MAX_DEGREE + 2,
                   nodes: Optional[int] = None) -> RecurrenceCoeffs:
    """Return the first ``count`` recurrence coefficients of ``measure``."""
    k = np.arange(count, dtype=float)
    with np.errstate(divide="ignore"):
        legendre_beta = np.where(k > 0, 1.0 / (4.0 - 1.0 / np.maximum(k, 1.0) ** 2), 0.0)
    if measure.kind == "interval":
        mu = 0.5 * (measure.a + measure.b)
        delta = 0.5 * (measure.b - measure.a)
        # alpha_k = +mu: substituting (u - mu)/delta into the Legendre recurrence
        alpha = np.full(count, mu)
        beta = delta**2 * legendre_beta
        beta[0] = 2.0 * delta
        return RecurrenceCoeffs(alpha, beta)
    if measure.kind == "exp" and measure.rate == 1:
        beta = k**2
        beta[0] = 1.0
        return RecurrenceCoeffs(2.0 * k + 1.0, beta)
    if measure.kind == "exp" and measure.rate == 2:
        beta = k**2 / 4.0
        beta[0] = 0.5
        return RecurrenceCoeffs(k + 0.5, beta)
    if measure.kind == "weighted":
        return _stieltjes(measure, count, nodes or INTERVAL_NODES)
    raise ValueError(f"no orthogonal polynomials for measure kind {measure.kind!r}")


@dataclass(frozen=True)
class CoeffMatrix:
    """Lower-triangular table ``q[k, l]`` of orthonormal polynomial coefficients."""

    q: np.ndarray
    recurrence: Optional[RecurrenceCoeffs] = field(default=None, compare=False)

    @property
    def m(self) -> int:
        return self.q.shape[0]

    def values(self, t, rows: Optional[int] = None) -> np.ndarray:
        """Array of shape ``(rows, len(t))`` holding ``q_k(t)``.

        Uses the normalized recurrence when available, Horner otherwise.
        """
        rows = self.m if rows is None else rows
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.recurrence is None:
            return np.array([_horner(self.q[k, : k + 1], t) for k in range(rows)])
        alpha, beta = self.recurrence.alpha, self.recurrence.beta
        out = np.empty((rows, t.size))
        if rows == 0:
            return out
        out[0] = 1.0 / math.sqrt(beta[0])
        if rows > 1:
            out[1] = (t - alpha[0]) * out[0] / math.sqrt(beta[1])
        for k in range(1, rows - 1):
            out[k + 1] = ((t - alpha[k]) * out[k] - math.sqrt(beta[k]) * out[k - 1]) / math.sqrt(
                beta[k + 1]
            )
        return out


def _horner(coefs: np.ndarray, t: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(t)
    for c in coefs[::-1]:
        acc = acc * t + c
    return acc


def orthonormal_coeffs(coeffs: RecurrenceCoeffs, m: int, allow_high_degree: bool = False) -> CoeffMatrix:
    """Build rows ``0..m-1`` of the normalized coefficient table."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if m > MAX_DEGREE and not allow_high_degree:
        raise PrecisionCeilingError(
            f"m={m} exceeds the precision ceiling {MAX_DEGREE}; pass allow_high_degree=True"
        )
    if len(coeffs) < m:
        raise ValueError(f"need {m} recurrence coefficients, got {len(coeffs)}")
    alpha, beta = coeffs.alpha, coeffs.beta
    r = np.zeros((m, m))
    r[0, 0] = 1.0
    log_norm = 0.5 * math.log(beta[0])
    q = np.zeros((m, m))
    q[0, 0] = math.exp(-log_norm)
    with np.errstate(over="raise", invalid="raise"):
        for k in range(m - 1):
            try:
                nxt = np.zeros(m)
                nxt[1:] = r[k, :-1]
                nxt -= alpha[k] * r[k]
                if k:
                    nxt -= beta[k] * r[k - 1]
            except FloatingPointError as exc:
                raise NumericalRangeError(f"recurrence overflow at k={k + 1}") from exc
            if not np.all(np.isfinite(nxt)):
                raise NumericalRangeError(f"non-finite coefficient at k={k + 1}")
            r[k + 1] = nxt
            log_norm += 0.5 * math.log(beta[k + 1])
            try:
                q[k + 1] = nxt * math.exp(-log_norm)
            except (FloatingPointError, OverflowError) as exc:
                raise NumericalRangeError(f"normalization overflow at k={k + 1}") from exc
    return CoeffMatrix(q, coeffs)


def orthonormal_basis(measure: MeasureSpec, m: int, allow_high_degree: bool = False) -> CoeffMatrix:
    """Shorthand for ``orthonormal_coeffs(recurrence_for(measure), m)``."""
    count = max(m + 2, MAX_DEGREE + 2)
    return orthonormal_coeffs(recurrence_for(measure, count), m, allow_high_degree)


def eval_orthopoly(Q: CoeffMatrix, k: int, t):
    """Horner evaluation of ``sum_l Q[k, l] t^l``."""
    if not 0 <= k < Q.m:
        raise IndexError(f"row {k} out of range for a table with {Q.m} rows")
    t_arr = np.asarray(t, dtype=float)
    out = _horner(Q.q[k, : k + 1], np.atleast_1d(t_arr))
    return float(out[0]) if t_arr.ndim == 0 else out


def exact_moments(measure: MeasureSpec, count: int) -> list:
    """Moments ``int t^j d(measure)`` for j < count as exact rationals.

    Interval endpoints are taken at their exact binary values.
    """
    if measure.kind == "interval":
        a, b = Fraction(measure.a), Fraction(measure.b)
        return [(b ** (j + 1) - a ** (j + 1)) / (j + 1) for j in range(count)]
    if measure.kind == "exp":
        rate = Fraction(int(measure.rate))
        return [Fraction(math.factorial(j)) / rate ** (j + 1) for j in range(count)]
    raise ValueError(f"no exact moments for measure kind {measure.kind!r}")


def gram_schmidt_oracle(moments: Sequence, m: int) -> CoeffMatrix:
    """Orthonormalize 1, t, ..., t^{m-1} against the given moment sequence.

    Exact rational arithmetic is used when every moment is an ``int`` or
    ``Fraction``; the final normalization is the only floating-point step.
    Otherwise the computation runs in floats and raises
    ``NotPositiveDefiniteError`` once a squared norm stops being positive.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if len(moments) < 2 * m - 1:
        raise ValueError(f"need {2 * m - 1} moments for m={m}, got {len(moments)}")
    exact = all(isinstance(x, (int, Fraction)) for x in moments[: 2 * m - 1])
    mom = [Fraction(x) for x in moments] if exact else [float(x) for x in moments]
    zero = Fraction(0) if exact else 0.0

    def inner(p, s):
        return sum((p[i] * s[j] * mom[i + j] for i in range(len(p)) for j in range(len(s))), zero)

    monic = []
    sq_norms = []
    for k in range(m):
        poly = [zero] * k + [Fraction(1) if exact else 1.0]
        for j, rj in enumerate(monic):
            proj = inner(poly, rj) / sq_norms[j]
            for i, c in enumerate(rj):
                poly[i] -= proj * c
        n2 = inner(poly, poly)
        if not n2 > 0 or (not exact and n2 <= 1e-13 * abs(mom[2 * k])):
            raise NotPositiveDefiniteError(f"moment matrix not positive definite at order {k}")
        monic.append(poly)
        sq_norms.append(n2)
    q = np.zeros((m, m))
    for k, (poly, n2) in enumerate(zip(monic, sq_norms)):
        inv_norm = 1.0 / math.sqrt(n2)
        q[k, : k + 1] = [float(c) * inv_norm for c in poly]
    return CoeffMatrix(q)


def coeff_growth(Q: CoeffMatrix, weights: Optional[Sequence[float]] = None) -> np.ndarray:
    """Per-row ``s_k = sum_l (Q[k, l] / a_l)^2``, with ``a_l = 1`` by default."""
    q = Q.q
    if weights is None:
        return np.sum(q * q, axis=1)
    a = np.asarray(weights, dtype=float)
    if a.size < Q.m:
        raise ValueError(f"need {Q.m} weights, got {a.size}")
    if np.any(a[: Q.m] <= 0):
        raise ValueError("weights must be positive")
    scaled = q / a[None, : Q.m]
    return np.sum(scaled * scaled, axis=1)
