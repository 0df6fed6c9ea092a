"""Seeded sampling from mixtures and Monte Carlo MISE measurement.

Replicate ``i`` at grid position ``j`` draws from
``SeedSequence(seed, spawn_key=(j, i))`` and losses are reduced in index
order, so results do not depend on the number of worker threads.

Logarithmic rates (``(log n)^{-2 alpha}``) cannot be told apart from other
slow decays over the sample sizes reachable here; reports only support
monotone-decay and bound-inequality checks for those scenarios.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Mapping, Optional, Union

import numpy as np

from . import bandwidth as bw
from .deconv import DEFAULT_GRID, FourierGrid, estimate_deconv
from .mixands import EmpiricalCounts, NoisePmf, PowerSeriesFamily, pmf_cutoff
from .orthopoly import MeasureSpec, quadrature
from .projector import estimate_projection, exact_mise
from .smoothness import SmoothnessSeq, smooth_density_factory
from .uniformmix import bandwidth_uniform, estimate_uniform, mixture_pmf_uniform

__all__ = [
    "ENVELOPE_CELLS",
    "EnvelopeError",
    "Scenario",
    "SimConfig",
    "MiseRow",
    "MiseReport",
    "RateTable",
    "parse_true_f",
    "sample_dataset",
    "empirical_mise",
    "l2_dist",
    "rate_table",
    "worker_count",
]

ENVELOPE_CELLS = 1024
ENVELOPE_INFLATE = 1.01
ENVELOPE_PROBES = 8
MAX_REFINEMENTS = 6
BATCH = 1 << 14

SCENARIOS = ("power-series", "deconv", "uniform")
BANDWIDTHS = ("fixed", "poisson", "finite-r", "halfline", "uniform")

Density = Union[Callable, Mapping[int, float]]


class EnvelopeError(ArithmeticError):
    pass


def worker_count() -> int:
    env = os.environ.get("DEMIX_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("DEMIX_THREADS must be a positive integer")
        return n
    return min(8, os.cpu_count() or 1)


@dataclass(frozen=True)
class Scenario:
    """What is observed and how the order ``m`` is chosen for each ``n``."""

    kind: str
    family: Optional[PowerSeriesFamily] = None
    measure: Optional[MeasureSpec] = None
    noise: Optional[NoisePmf] = None
    k_range: Optional[tuple] = None
    bandwidth: str = "fixed"
    m: Optional[int] = None
    tau: Optional[float] = None
    beta: Optional[float] = None
    lambda1: float = 4.5
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.kind!r}")
        if self.bandwidth not in BANDWIDTHS:
            raise ValueError(f"unknown bandwidth rule {self.bandwidth!r}")
        if self.kind == "power-series" and (self.family is None or self.measure is None):
            raise ValueError("power-series scenario needs a family and a measure")
        if self.kind == "deconv" and (self.noise is None or self.k_range is None):
            raise ValueError("deconv scenario needs a noise pmf and a k range")
        if self.bandwidth == "fixed" and self.kind != "deconv" and self.m is None:
            raise ValueError("fixed bandwidth needs m")

    def order(self, n: int) -> Optional[int]:
        if self.kind == "deconv":
            return None
        rule = self.bandwidth
        if rule == "fixed":
            return self.m
        if rule == "poisson":
            return bw.poisson_mn(n, 1.0 if self.tau is None else self.tau)
        if rule == "finite-r":
            return bw.finiteR_rule(self.family, self.measure.a, self.measure.b, n, self.tau).m_n
        if rule == "halfline":
            return bw.halfline_mn(n, self.lambda1, SmoothnessSeq.power(self.alpha))
        return bandwidth_uniform(n, 1.0 if self.tau is None else self.tau,
                                 0.4 if self.beta is None else self.beta)


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario
    true_f: Density = field(compare=False)
    n_grid: tuple
    replicates: int
    seed: int
    out: Optional[str] = None
    true_f_label: str = ""

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(n < 1 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid must be a non-empty increasing list of positive integers")
        object.__setattr__(self, "n_grid", grid)
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def parse_true_f(text: str, scenario: Scenario) -> Density:
    """Density from a short description.

    Continuous parameter sets: ``uniform``, ``beta:p,q`` (rescaled to
    ``[a, b]``), ``exp:rate`` (truncated to ``[a, b]``), ``factory:alpha``.
    Integer parameter sets: ``pmf:k=p,k=p,...``.
    """
    text = text.strip()
    if text.startswith("pmf:"):
        out = {}
        for item in text[4:].split(","):
            k, _, v = item.partition("=")
            out[int(k)] = float(v)
        if abs(sum(out.values()) - 1) > 1e-9 or any(v < 0 for v in out.values()):
            raise ValueError("pmf must be nonnegative and sum to 1")
        return out
    if scenario.kind != "power-series":
        raise ValueError(f"{scenario.kind} scenario needs a pmf true_f")
    ms = scenario.measure
    if not ms.bounded:
        raise ValueError("sampling needs a bounded parameter interval")
    a, b = ms.a, ms.b
    if text == "uniform":
        return lambda t: np.full(np.shape(t), 1.0 / (b - a))
    name, _, args = text.partition(":")
    vals = [float(x) for x in args.split(",")] if args else []
    if name == "beta" and len(vals) == 2:
        from scipy.stats import beta as beta_dist

        p, q = vals
        return lambda t: beta_dist.pdf((np.asarray(t) - a) / (b - a), p, q) / (b - a)
    if name == "exp" and len(vals) == 1:
        rate = vals[0]
        mass = math.exp(-rate * a) - math.exp(-rate * b)
        return lambda t: rate * np.exp(-rate * np.asarray(t)) / mass
    if name == "factory" and len(vals) == 1:
        return smooth_density_factory(scenario.family, ms, SmoothnessSeq.power(vals[0]), 1, C=1.0)
    raise ValueError(f"cannot parse true_f {text!r}")


def _rng(stream_seed) -> np.random.Generator:
    return np.random.default_rng(stream_seed)


def _inverse_cdf(pmf: Mapping[int, float], u: np.ndarray) -> np.ndarray:
    keys = np.array(sorted(pmf), dtype=np.int64)
    cdf = np.cumsum([pmf[k] for k in keys])
    idx = np.searchsorted(cdf / cdf[-1], u, side="right")
    return keys[np.minimum(idx, len(keys) - 1)]


@dataclass(frozen=True)
class _Envelope:
    edges: np.ndarray
    height: np.ndarray
    cum: np.ndarray


def _envelope(f: Callable, a: float, b: float, cells: int) -> _Envelope:
    edges = np.linspace(a, b, cells + 1)
    probes = np.linspace(0.0, 1.0, ENVELOPE_PROBES + 1)
    pts = edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * probes[None, :]
    vals = np.asarray(f(pts.ravel()), float).reshape(pts.shape)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise EnvelopeError("density is negative or not finite")
    height = vals.max(axis=1) * ENVELOPE_INFLATE
    mass = height * np.diff(edges)
    return _Envelope(edges, height, np.cumsum(mass) / mass.sum())


def _sample_theta(f: Callable, measure: MeasureSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    cells = ENVELOPE_CELLS
    env = _envelope(f, measure.a, measure.b, cells)
    out = np.empty(0)
    refinements = 0
    while out.size < n:
        need = n - out.size
        size = min(BATCH, max(64, 2 * need))
        c = np.minimum(np.searchsorted(env.cum, rng.random(size), side="right"), cells - 1)
        t = env.edges[c] + (env.edges[c + 1] - env.edges[c]) * rng.random(size)
        fv = np.asarray(f(t), float)
        h = env.height[c]
        if np.any(fv > h):
            raise EnvelopeError("density exceeds its grid envelope")
        accept = rng.random(size) * h <= fv
        if accept.mean() < 0.01 and refinements < MAX_REFINEMENTS:
            cells *= 2
            refinements += 1
            env = _envelope(f, measure.a, measure.b, cells)
            continue
        out = np.concatenate([out, t[accept][:need]])
    return out


def _sample_power_series(family: PowerSeriesFamily, theta: np.ndarray,
                         rng: np.random.Generator, theta_max: float) -> np.ndarray:
    """Inverse-CDF draw of ``X | theta`` with the pmf built by its ratio recursion."""
    kmax = pmf_cutoff(family, theta_max)
    u = rng.random(theta.size)
    x = np.zeros(theta.size, dtype=np.int64)
    log_t = np.log(np.where(theta > 0, theta, 1.0))
    log_z = family.log_Z(theta)
    log_a = family.log_a_array(kmax + 1)
    cdf = np.zeros(theta.size)
    for k in range(kmax + 1):
        if k == 0:
            pk = np.exp(log_a[0] - log_z)
        else:
            pk = np.where(theta > 0, np.exp(log_a[k] + k * log_t - log_z), 0.0)
        cdf += pk
        x += u >= cdf
    return np.minimum(x, kmax)


def sample_dataset(true_f: Density, scenario: Scenario, n: int, stream_seed) -> EmpiricalCounts:
    """Draw ``n`` observations from the mixture; fully determined by ``stream_seed``."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = _rng(stream_seed)
    if scenario.kind == "power-series":
        ms = scenario.measure
        if not ms.bounded:
            raise ValueError("sampling needs a bounded parameter interval")
        theta = _sample_theta(true_f, ms, n, rng)
        x = _sample_power_series(scenario.family, theta, rng, ms.b)
    elif scenario.kind == "deconv":
        y = _inverse_cdf(true_f, rng.random(n))
        e = _inverse_cdf(scenario.noise.as_dict(), rng.random(n))
        x = y + e
    else:
        theta = _inverse_cdf(true_f, rng.random(n))
        if np.any(theta < 1):
            raise ValueError("uniform mixands need theta >= 1")
        x = np.floor(rng.random(n) * theta).astype(np.int64)
    return EmpiricalCounts.from_observations(x)


def l2_dist(estimate, true_f: Density, domain) -> float:
    """Squared distance ``||estimate - true_f||_H^2``.

    ``domain`` is a bounded ``MeasureSpec`` (Gauss-Legendre quadrature) or
    ``"integers"`` for functions given as ``{k: value}`` maps, where missing
    entries count as 0 on both sides.
    """
    if isinstance(domain, MeasureSpec):
        t, w = quadrature(domain)
        d = np.asarray(estimate(t), float) - np.asarray(true_f(t), float)
        return float(np.sum(w * d * d))
    keys = sorted(set(estimate) | set(true_f))
    return float(sum((estimate.get(k, 0.0) - true_f.get(k, 0.0)) ** 2 for k in keys))


@dataclass(frozen=True)
class MiseRow:
    n: int
    m: Optional[int]
    empirical_mise: float
    standard_error: Optional[float]
    exact_bias_sq: Optional[float] = None
    exact_variance: Optional[float] = None
    mean_coeffs: Optional[np.ndarray] = field(default=None, compare=False)
    coeff_se: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def exact_total(self) -> Optional[float]:
        if self.exact_bias_sq is None:
            return None
        return self.exact_bias_sq + self.exact_variance


@dataclass(frozen=True)
class MiseReport:
    rows: tuple
    header: str = ""

    CSV_FIELDS = ("n", "m", "empirical_mise", "standard_error", "exact_bias_sq", "exact_variance")

    def to_csv(self) -> str:
        lines = [",".join(self.CSV_FIELDS)]
        for r in self.rows:
            cells = []
            for name in self.CSV_FIELDS:
                v = getattr(r, name)
                if v is None:
                    cells.append("NA")
                elif isinstance(v, (int, np.integer)):
                    cells.append(str(int(v)))
                else:
                    cells.append(f"{float(v):.17g}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def _exact_uniform(f: Mapping[int, float], m: int, n: int):
    bias = float(sum(v * v for t, v in f.items() if t > m))
    var = 0.0
    for k in range(1, m + 1):
        p0, p1 = mixture_pmf_uniform(f, k - 1), mixture_pmf_uniform(f, k)
        var += k * k * (p0 + p1 - (p0 - p1) ** 2)
    return bias, var / n


def _replicate(config: SimConfig, j: int, i: int, n: int, m: Optional[int]):
    sc = config.scenario
    seed = np.random.SeedSequence(config.seed, spawn_key=(j, i))
    counts = sample_dataset(config.true_f, sc, n, seed)
    if sc.kind == "power-series":
        est = estimate_projection(counts, sc.family, sc.measure, m)
        return l2_dist(est, config.true_f, sc.measure), np.asarray(est.coeffs)
    if sc.kind == "deconv":
        est = estimate_deconv(counts, sc.noise, sc.k_range, FourierGrid(DEFAULT_GRID))
        return l2_dist(est, dict(config.true_f), "integers"), None
    est = estimate_uniform(counts, m)
    return l2_dist(est, dict(config.true_f), "integers"), None


def empirical_mise(config: SimConfig, workers: Optional[int] = None) -> MiseReport:
    """Monte Carlo MISE for every ``n`` in the grid, with exact columns where available."""
    sc = config.scenario
    workers = worker_count() if workers is None else workers
    rows: List[MiseRow] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for j, n in enumerate(config.n_grid):
            m = sc.order(n)
            results = list(pool.map(lambda i: _replicate(config, j, i, n, m),
                                    range(config.replicates)))
            losses = np.array([r[0] for r in results])
            R = config.replicates
            mean = float(np.sum(losses) / R)
            se = float(np.std(losses, ddof=1) / math.sqrt(R)) if R > 1 else None
            bias = var = None
            mean_c = se_c = None
            if sc.kind == "power-series":
                terms = exact_mise(config.true_f, sc.family, sc.measure, m, n)
                bias, var = terms.bias_sq, terms.variance
                C = np.array([r[1] for r in results]).reshape(R, m)
                mean_c = C.sum(axis=0) / R
                se_c = C.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else None
            elif sc.kind == "uniform":
                bias, var = _exact_uniform(dict(config.true_f), m, n)
            rows.append(MiseRow(n, m, mean, se, bias, var, mean_c, se_c))
    header = ""
    if sc.kind == "power-series" and sc.bandwidth in ("poisson", "finite-r"):
        header = ("logarithmic rates are not distinguishable at these sample sizes; "
                  "only monotone decay and bound inequalities are meaningful")
    return MiseReport(tuple(rows), header)


@dataclass(frozen=True)
class RateTable:
    rows: tuple
    normalized: tuple
    decrease_fraction: float


def rate_table(report: MiseReport, rate: Callable[[int], float]) -> RateTable:
    """Append ``empirical_mise / rate(n)`` and the fraction of consecutive decreases of the raw MISE."""
    if not report.rows:
        raise ValueError("empty report")
    norm = tuple(r.empirical_mise / rate(r.n) for r in report.rows)
    mise = [r.empirical_mise for r in report.rows]
    steps = len(mise) - 1
    frac = sum(b < a for a, b in zip(mise, mise[1:])) / steps if steps else 1.0
    return RateTable(report.rows, norm, frac)
