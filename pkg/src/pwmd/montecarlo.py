"""Monte Carlo tail ratios and W_p scaling experiments.

Tail probabilities come either from plain indicator averages or, for i.i.d.
sums, from exponential tilting: summands are drawn from the law
proportional to e^{theta x} g(x) with theta matched to the target, and
reweighted by the likelihood ratio exp(-theta S + n psi(theta)).
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .core import DistSpec
from .errors import CapabilityError
from .models import IidSum, model_dim, run_blocks, sample_w
from .oracles import reference_tail
from .wasserstein import wp_sample_vs_normal

Z95 = 1.96
WILSON_BELOW = 50


@dataclass
class TailRow:
    x: float
    p_hat: float
    se: float
    ci_lo: float
    ci_hi: float
    p_ref: float
    ratio: float
    ratio_ci_lo: float
    ratio_ci_hi: float
    bound_shape: float = math.nan
    feasible: bool = True


@dataclass
class TailReport:
    rows: list
    reps: int
    seed: int
    method: str

    def to_records(self) -> list:
        return [asdict(r) for r in self.rows]


@dataclass
class ScalingReport:
    points: list
    fitted_exponent: float
    fitted_log_intercept: float
    r_squared: float
    noise_floor: float = math.nan
    floor_flag: bool = False
    abscissa: str = "n"

    def to_records(self) -> list:
        return [dict(p) for p in self.points]


def wilson_interval(successes: float, reps: int, z: float = Z95) -> tuple[float, float]:
    p = successes / reps
    denom = 1 + z * z / reps
    centre = (p + z * z / (2 * reps)) / denom
    half = z * math.sqrt(p * (1 - p) / reps + z * z / (4 * reps * reps)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def _plain_row(stat: np.ndarray, x: float, ref: float) -> TailRow:
    reps = stat.size
    hits = int(np.count_nonzero(stat > x))
    p = hits / reps
    se = math.sqrt(p * (1 - p) / reps)
    if hits < WILSON_BELOW:
        lo, hi = wilson_interval(hits, reps)
    else:
        lo, hi = max(0.0, p - Z95 * se), min(1.0, p + Z95 * se)
    return _row(x, p, se, lo, hi, ref)


def _row(x, p, se, lo, hi, ref) -> TailRow:
    if ref > 0:
        return TailRow(x, p, se, lo, hi, ref, p / ref, lo / ref, hi / ref)
    return TailRow(x, p, se, lo, hi, ref, math.nan, math.nan, math.nan)


def _statistic(model, reps, seed, threads):
    s = sample_w(model, reps, seed, threads)
    return s.values() if s.d == 1 else s.norms()


def _reference(model, x: float) -> float:
    d = model_dim(model)
    return reference_tail(x, "normal" if d == 1 else "chi", d).value


@lru_cache(maxsize=256)
def _tilt(summand: DistSpec, target: float) -> tuple[float, float]:
    theta = summand.solve_tilt(target)
    return theta, summand.log_mgf(theta)


def _tilted_row(model: IidSum, x: float, reps: int, seed: int, threads: int, stream: int) -> TailRow:
    n = model.n
    summand = model.summand
    theta, psi = _tilt(summand, x / math.sqrt(n))
    root = math.sqrt(n)

    def block(rng, m):
        s = summand.sample_sum(rng, n, m, theta)
        logw = -theta * s + n * psi
        return np.where(s / root > x, np.exp(logw), 0.0)

    vals = run_blocks(block, reps, seed, threads=threads, stream=stream)
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(reps)) if reps > 1 else math.inf
    return _row(x, est, se, est - Z95 * se, est + Z95 * se, _reference(model, x))


def _require_tilting(model):
    if not isinstance(model, IidSum):
        raise CapabilityError(f"tilting needs an i.i.d. sum, got {type(model).__name__}")


def estimate_tail(model, x: float, reps: int, seed: int, method: str = "plain", threads: int = 1) -> TailRow:
    """Estimate P(W > x) (or P(|W| > x) for vector W) and its ratio to the reference tail."""
    x = float(x)
    if method == "plain":
        return _plain_row(_statistic(model, reps, seed, threads), x, _reference(model, x))
    if method == "tilted":
        _require_tilting(model)
        return _tilted_row(model, x, reps, seed, threads, stream=3)
    raise ValueError(f"unknown method {method!r}")


def ratio_curve(model, x_grid: Sequence[float], reps: int, seed: int, method: str = "plain",
                bound=None, threads: int = 1) -> TailReport:
    """One TailRow per x. Plain rows share one sample; tilted rows use one stream per x.

    `bound` is an application Delta (``bounds.AppDelta``) whose shape and
    feasibility are attached to each row.
    """
    xs = [float(x) for x in x_grid]
    if not xs or any(b < a for a, b in zip(xs, xs[1:])):
        raise ValueError("x_grid must be nonempty and sorted ascending")
    if method == "plain":
        stat = _statistic(model, reps, seed, threads)
        rows = [_plain_row(stat, x, _reference(model, x)) for x in xs]
    elif method == "tilted":
        _require_tilting(model)
        rows = [_tilted_row(model, x, reps, seed, threads, stream=2 * k + 3) for k, x in enumerate(xs)]
    else:
        raise ValueError(f"unknown method {method!r}")
    if bound is not None:
        for r in rows:
            rep = bound.md_shape(max(r.x, 0.0))
            r.bound_shape, r.feasible = rep.shape, rep.feasible
    return TailReport(rows, reps, seed, method)


def _fit(xs, ys) -> tuple[float, float, float]:
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / tot if tot > 0 else 0.0
    return float(slope), float(intercept), min(1.0, max(0.0, r2))


FLOOR_STREAM = 1000


def gaussian_floor(reps: int, p: float, seed: int, threads: int = 1) -> float:
    """Empirical W_p of `reps` exact N(0, 1) draws against N(0, 1)."""
    z = sample_w(IidSum(1, DistSpec.gaussian()), reps, seed, threads, stream=FLOOR_STREAM)
    return wp_sample_vs_normal(z.values(), p).distance


def wp_scaling(family, n_grid: Sequence[int], p: float, reps: int, seed: int, threads: int = 1) -> ScalingReport:
    """Fit log W_p-hat against log n. `family` maps n to a scalar model (or is a list aligned with n_grid)."""
    if len(n_grid) < 4:
        raise ValueError("n_grid needs at least 4 points")
    build: Callable = family if callable(family) else dict(zip(n_grid, family)).__getitem__
    points = []
    for k, n in enumerate(n_grid):
        w = sample_w(build(n), reps, seed, threads, stream=k + 1).values()
        points.append({"n": int(n), "wp_hat": wp_sample_vs_normal(w, p).distance})
    floor = gaussian_floor(reps, p, seed, threads)
    slope, icpt, r2 = _fit([q["n"] for q in points], [q["wp_hat"] for q in points])
    for q in points:
        q["noise_floor"] = floor
    flag = points[-1]["wp_hat"] <= 2.0 * floor
    return ScalingReport(points, slope, icpt, r2, floor, flag, "n")


def wp_scaling_in_p(model, p_grid: Sequence[float], reps: int, seed: int, threads: int = 1) -> ScalingReport:
    """W_p-hat on one sample across p, with a log-log fit against p."""
    if len(p_grid) < 4:
        raise ValueError("p_grid needs at least 4 points")
    w = sample_w(model, reps, seed, threads, stream=1).values()
    points = [{"p": float(p), "wp_hat": wp_sample_vs_normal(w, p).distance} for p in p_grid]
    slope, icpt, r2 = _fit([q["p"] for q in points], [q["wp_hat"] for q in points])
    return ScalingReport(points, slope, icpt, r2, abscissa="p")


def fmt(v) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, records: list) -> None:
    if not records:
        raise ValueError("nothing to write")
    keys = list(records[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in records:
            w.writerow([fmt(r[k]) for k in keys])
