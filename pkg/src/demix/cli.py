"""Command-line entry point ``demix``.

Exit codes: 0 success, 2 invalid input or usage, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
import time
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .deconv import FourierGrid, Kp, estimate_deconv
from .mixands import EmpiricalCounts, NoisePmf, PowerSeriesFamily
from .orthopoly import MeasureSpec, orthonormal_basis
from .projector import estimate_projection
from .simlab import (
    BANDWIDTHS,
    Scenario,
    SimConfig,
    empirical_mise,
    parse_true_f,
)
from .smoothness import ClassSpec, SmoothnessSeq, lower_bound_rhs, smooth_density_factory, upper_bound_rhs
from .uniformmix import estimate_uniform, mise_bound_uniform

__all__ = ["main", "run", "parse_histogram", "write_histogram", "parse_config", "build_sim_config"]

CONFIG_KEYS = {
    "scenario", "family", "a", "b", "shape", "true_f", "n_grid", "replicates", "seed",
    "bandwidth", "tau", "beta", "m", "out", "noise", "kmin", "kmax", "lambda1", "alpha",
}


class UsageError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def parse_histogram(path, allow_negative: bool = False) -> EmpiricalCounts:
    """Read ``k,count`` CSV (with header) or one raw integer per line."""
    text = Path(path).read_text()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    counts: Dict[int, int] = {}
    if "," in lines[0]:
        body = lines[1:] if not _is_int(lines[0].split(",")[0]) else lines
        for ln in body:
            parts = [p.strip() for p in ln.split(",")]
            if len(parts) != 2:
                raise ValueError(f"{path}: expected two columns in {ln!r}")
            k, c = _parse_int(parts[0], path), _parse_int(parts[1], path)
            if c < 0:
                raise ValueError(f"{path}: negative count in {ln!r}")
            _check_k(k, allow_negative, path)
            counts[k] = counts.get(k, 0) + c
    else:
        for ln in lines:
            k = _parse_int(ln, path)
            _check_k(k, allow_negative, path)
            counts[k] = counts.get(k, 0) + 1
    return EmpiricalCounts(counts)


def _is_int(s: str) -> bool:
    try:
        int(s)
        return True
    except ValueError:
        return False


def _parse_int(s: str, path) -> int:
    try:
        return int(s)
    except ValueError:
        raise ValueError(f"{path}: {s!r} is not an integer") from None


def _check_k(k: int, allow_negative: bool, path):
    if k < 0 and not allow_negative:
        raise ValueError(f"{path}: negative value {k}")


def write_histogram(counts: EmpiricalCounts, path) -> None:
    lines = ["k,count"] + [f"{k},{c}" for k, c in counts.counts.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_noise(path) -> NoisePmf:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    body = lines[1:] if not _is_int(lines[0].split(",")[0]) else lines
    probs = {}
    for ln in body:
        k, p = ln.split(",")
        probs[int(k)] = probs.get(int(k), 0.0) + float(p)
    return NoisePmf.from_mapping(probs)


def _family(name: str, shape: float) -> PowerSeriesFamily:
    if name == "poisson":
        return PowerSeriesFamily.poisson()
    if name in ("negbin", "negative-binomial"):
        return PowerSeriesFamily.negative_binomial(shape)
    raise UsageError(f"unknown family {name!r}")


def _measure(a: float, b: float) -> MeasureSpec:
    if math.isinf(b):
        if a != 0:
            raise UsageError("the half-line must start at 0")
        return MeasureSpec.halfline()
    return MeasureSpec.interval(a, b)


def _poly_measure(name: str, a: float, b: float) -> MeasureSpec:
    if name == "legendre":
        return MeasureSpec.interval(-1.0, 1.0)
    if name == "lebesgue":
        return MeasureSpec.interval(a, b)
    if name == "laguerre":
        return MeasureSpec.exp_weight(1.0)
    if name == "laguerre2":
        return MeasureSpec.exp_weight(2.0)
    if name == "halfline":
        return MeasureSpec.halfline()
    raise UsageError(f"unknown measure {name!r}")


def _write(text: str, out: Optional[str]) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(fmt(v) for v in r) + "\n")
    return buf.getvalue()


def cmd_poly(args) -> int:
    Q = orthonormal_basis(_poly_measure(args.measure, args.a, args.b), args.m)
    rows = [[k, *Q.q[k]] for k in range(args.m)]
    _write(_csv(["k"] + [f"c{j}" for j in range(args.m)], rows), args.out)
    return 0


def cmd_estimate(args) -> int:
    counts = parse_histogram(args.data)
    family, measure = _family(args.family, args.shape), _measure(args.a, args.b)
    est = estimate_projection(counts, family, measure, args.m)
    rows = [["coeff", k, c] for k, c in enumerate(est.coeffs)]
    hi = measure.b if measure.bounded else args.grid_max
    grid = np.linspace(measure.a, hi, args.grid_points)
    rows += [["fhat", t, v] for t, v in zip(grid, est(grid))]
    buf = io.StringIO()
    buf.write("kind,x,value\n")
    for kind, x, v in rows:
        buf.write(f"{kind},{fmt(x)},{fmt(v)}\n")
    _write(buf.getvalue(), args.out)
    return 0


def cmd_deconv(args) -> int:
    noise = parse_noise(args.noise)
    counts = parse_histogram(args.data, allow_negative=True)
    if args.kmax < args.kmin:
        raise UsageError("kmax must be at least kmin")
    fhat = estimate_deconv(counts, noise, range(args.kmin, args.kmax + 1), FourierGrid(args.grid))
    _write(_csv(["k", "fhat"], sorted(fhat.items())), args.out)
    return 0


def cmd_uniform(args) -> int:
    fhat = estimate_uniform(parse_histogram(args.data), args.m)
    _write(_csv(["theta", "fhat"], sorted(fhat.items())), args.out)
    return 0


def _scan(text: str) -> List[int]:
    lo, sep, hi = text.partition("..")
    if not sep:
        return [int(v) for v in text.split(",")]
    return list(range(int(lo), int(hi) + 1))


def cmd_bounds(args) -> int:
    family, measure = _family(args.family, args.shape), _measure(args.a, args.b)
    u = SmoothnessSeq.power(args.alpha)
    f0 = smooth_density_factory(family, measure, u, args.r, C=args.C)
    spec = ClassSpec(u, args.C, args.r, K=1.0, f0=f0)
    # f0 + C_{f0}(1, u, C, r) sits inside C_{f0}(2, u, C + C0, r)
    c_upper = args.C + f0.class_constant
    rows = []
    for m in _scan(args.m_scan):
        if m < max(args.r, 1):
            continue
        lo = lower_bound_rhs(f0, spec, family, measure, m, args.n)
        up = upper_bound_rhs(f0, 2.0, c_upper, u, family, measure, m, args.n)
        rows.append([m, lo, up])
    _write(_csv(["m", "lower", "upper"], rows), args.out)
    return 0


def parse_config(path) -> Dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment; unknown keys are errors."""
    out: Dict[str, str] = {}
    for i, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"{path}:{i}: expected key=value")
        if key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{i}: unknown key {key!r}")
        if key in out:
            raise ValueError(f"{path}:{i}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _opt(cfg: Mapping[str, str], key: str, conv, default=None):
    return conv(cfg[key]) if key in cfg else default


def build_sim_config(cfg: Mapping[str, str], seed: Optional[int] = None) -> SimConfig:
    for key in ("scenario", "true_f", "n_grid", "replicates"):
        if key not in cfg:
            raise ValueError(f"config is missing {key!r}")
    kind = cfg["scenario"]
    bandwidth = cfg.get("bandwidth", "fixed")
    if bandwidth not in BANDWIDTHS:
        raise ValueError(f"unknown bandwidth {bandwidth!r}")
    common = dict(
        bandwidth=bandwidth,
        m=_opt(cfg, "m", int),
        tau=_opt(cfg, "tau", float),
        beta=_opt(cfg, "beta", float),
        lambda1=_opt(cfg, "lambda1", float, 4.5),
        alpha=_opt(cfg, "alpha", float, 1.0),
    )
    if kind == "power-series":
        family = _family(cfg.get("family", "poisson"), _opt(cfg, "shape", float, 1.0))
        measure = _measure(_opt(cfg, "a", float, 0.0), _opt(cfg, "b", float, 1.0))
        scenario = Scenario(kind, family=family, measure=measure, **common)
    elif kind == "deconv":
        if "noise" not in cfg:
            raise ValueError("deconv scenario needs noise=k=p,k=p,...")
        noise = {int(k): float(p) for k, p in (item.split("=") for item in cfg["noise"].split(","))}
        k_range = tuple(range(_opt(cfg, "kmin", int, 0), _opt(cfg, "kmax", int, 20) + 1))
        scenario = Scenario(kind, noise=NoisePmf.from_mapping(noise), k_range=k_range, **common)
    elif kind == "uniform":
        scenario = Scenario(kind, **common)
    else:
        raise ValueError(f"unknown scenario {kind!r}")
    n_grid = tuple(int(float(v)) for v in cfg["n_grid"].split(","))
    return SimConfig(
        scenario=scenario,
        true_f=parse_true_f(cfg["true_f"], scenario),
        n_grid=n_grid,
        replicates=int(cfg["replicates"]),
        seed=seed if seed is not None else _opt(cfg, "seed", int, 0),
        out=cfg.get("out"),
        true_f_label=cfg["true_f"],
    )


def _invariants(config: SimConfig, report) -> Dict[str, object]:
    sc = config.scenario
    checks: Dict[str, object] = {}
    rows = report.rows
    if sc.kind in ("power-series", "uniform") and all(r.standard_error is not None for r in rows):
        ok = [abs(r.empirical_mise - r.exact_total) <= 3 * r.standard_error for r in rows]
        checks["exact_within_3se_fraction"] = sum(ok) / len(ok)
    if sc.kind == "uniform" and all(r.standard_error is not None for r in rows):
        f = dict(config.true_f)
        checks["bound_holds"] = all(
            r.empirical_mise <= mise_bound_uniform(f, r.m, r.n) + 3 * r.standard_error for r in rows)
    if sc.kind == "deconv":
        kp = Kp(sc.noise)
        checks["Kp_over_2pi"] = kp.value / (2 * math.pi)
        if all(r.standard_error is not None for r in rows):
            checks["n_mise_below_bound"] = all(
                r.n * r.empirical_mise <= kp.value / (2 * math.pi) + 3 * r.n * r.standard_error
                for r in rows)
    mise = [r.empirical_mise for r in rows]
    checks["decreasing_steps"] = sum(b < a for a, b in zip(mise, mise[1:]))
    return checks


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    config = build_sim_config(cfg, seed=args.seed)
    start = time.perf_counter()
    report = empirical_mise(config)
    wall = time.perf_counter() - start
    out = args.out or config.out
    _write(report.to_csv(), out)
    summary = {
        "config": dict(cfg, **({"seed": str(args.seed)} if args.seed is not None else {})),
        "wall_time_s": wall,
        "invariants": _invariants(config, report),
        "note": report.header,
    }
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if out in (None, "-"):
        sys.stderr.write(text)
    else:
        Path(str(out) + ".json").write_text(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="demix", description="Mixing-density estimation for discrete mixtures.")
    sub = p.add_subparsers(dest="command", required=True)

    def family_args(sp):
        sp.add_argument("--family", default="poisson", choices=["poisson", "negbin"])
        sp.add_argument("--shape", type=float, default=1.0, help="negative binomial shape")
        sp.add_argument("--a", type=float, default=0.0)
        sp.add_argument("--b", type=float, default=1.0, help="use inf for the half-line")

    sp = sub.add_parser("poly", help="orthonormal polynomial coefficients")
    sp.add_argument("--measure", required=True,
                    choices=["legendre", "lebesgue", "laguerre", "laguerre2", "halfline"])
    sp.add_argument("--a", type=float, default=0.0)
    sp.add_argument("--b", type=float, default=1.0)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_poly)

    sp = sub.add_parser("estimate", help="projection estimate from a histogram")
    family_args(sp)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--grid-points", type=int, default=200)
    sp.add_argument("--grid-max", type=float, default=10.0, help="grid end on the half-line")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("deconv", help="deconvolution estimate on the integers")
    sp.add_argument("--noise", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--kmin", type=int, required=True)
    sp.add_argument("--kmax", type=int, required=True)
    sp.add_argument("--grid", type=int, default=8192)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_deconv)

    sp = sub.add_parser("uniform", help="estimate for mixtures of discrete uniforms")
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_uniform)

    sp = sub.add_parser("bounds", help="lower and upper minimax bounds per m")
    family_args(sp)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--C", type=float, required=True)
    sp.add_argument("--r", type=int, default=1)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m-scan", default="1..12")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("simulate", help="Monte Carlo MISE from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, IsADirectoryError, KeyError) as exc:
        print(f"demix: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"demix: runtime error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
