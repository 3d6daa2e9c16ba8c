"""Exact laws of W on small instances, and exact tail ratios.

These are the ground truth for the Monte Carlo and bound checks:
lattice convolution for i.i.d. sums, full permutation enumeration for the
combinatorial sum and full sign enumeration for Rademacher homogeneous sums.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce

import numpy as np
from scipy import signal

from .core import DistSpec, chi_upper_tail, normal_upper_tail
from .errors import ModelError, SizingError
from .models import CombClt, HomSum, comb_variance, homsum_all_states

MERGE_TOL = 1e-12
SUPPORT_CAP = 10_000_000
MAX_ATOMS = 64
COMB_CAP = 9


@dataclass(frozen=True)
class ExactPmf:
    """Finite law: strictly increasing values with their probabilities."""

    values: np.ndarray
    probs: np.ndarray
    model_tag: str = ""

    @classmethod
    def from_atoms(cls, values, probs, model_tag: str = "") -> "ExactPmf":
        """Sort, drop null atoms and merge values closer than MERGE_TOL."""
        v = np.asarray(values, dtype=float).ravel()
        p = np.asarray(probs, dtype=float).ravel()
        if v.shape != p.shape or v.size == 0:
            raise ValueError("values and probs must be nonempty and equal length")
        if np.any(p < 0):
            raise ValueError("negative probability")
        keep = p > 0
        v, p = v[keep], p[keep]
        order = np.argsort(v, kind="stable")
        v, p = v[order], p[order]
        # a new cluster starts whenever a value is more than MERGE_TOL above the cluster's first value
        starts = [0]
        for k in range(1, v.size):
            if v[k] - v[starts[-1]] > MERGE_TOL:
                starts.append(k)
        starts = np.asarray(starts)
        mass = np.add.reduceat(p, starts)
        centre = np.add.reduceat(p * v, starts) / mass
        total = float(mass.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        return cls(centre, mass, model_tag)

    @property
    def size(self) -> int:
        return self.values.size

    def moment(self, k: int) -> float:
        return float(np.dot(self.probs, self.values**k))

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def variance(self) -> float:
        m = self.mean
        return float(np.dot(self.probs, (self.values - m) ** 2))

    def tail(self, x: float) -> float:
        """P(W > x), strict."""
        k = np.searchsorted(self.values, x, side="right")
        return float(self.probs[k:][::-1].sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["value", "prob"])
            for v, p in zip(self.values, self.probs):
                w.writerow([format(v, ".17g"), format(p, ".17g")])

    @classmethod
    def from_csv(cls, path, model_tag: str = "") -> "ExactPmf":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls.from_atoms([float(r["value"]) for r in rows], [float(r["prob"]) for r in rows], model_tag)


def _integer_lattice(values: np.ndarray):
    """Write values as base + step * k with nonnegative integers k (or None).

    Gaps are expressed as rationals relative to the smallest gap, so a
    lattice that was rescaled by an irrational factor (standardisation)
    is still recognised.
    """
    base = float(values.min())
    gaps = values - base
    nonzero = gaps[gaps > 0]
    if nonzero.size == 0:
        return base, 1.0, np.zeros(values.size, dtype=np.int64)
    unit = float(nonzero.min())
    ratios = [Fraction(float(g / unit)).limit_denominator(10**6) for g in gaps]
    if any(abs(float(f) - g / unit) > 1e-9 * max(1.0, g / unit) for f, g in zip(ratios, gaps)):
        return None
    den = reduce(math.lcm, (f.denominator for f in ratios))
    num = reduce(math.gcd, (f.numerator * (den // f.denominator) for f in ratios))
    step = Fraction(num, den)
    ks = np.array([int(f / step) for f in ratios], dtype=np.int64)
    if ks.max() > SUPPORT_CAP:
        return None
    return base, unit * float(step), ks


def _convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.size * b.size <= 50_000_000:
        return np.convolve(a, b)
    out = signal.fftconvolve(a, b)
    return np.clip(out, 0.0, None)


def convolve_iid_pmf(dist: DistSpec, n: int) -> ExactPmf:
    """Exact law of W = (X_1 + ... + X_n) / sqrt(n) for a standardised lattice summand.

    The atoms are mapped to integer offsets on a common grid, so the support
    of the sum is exact; probabilities are convolved by repeated squaring.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x = dist.standardized()
    v, p = x.atoms()
    if v.size > MAX_ATOMS:
        raise SizingError(f"{v.size} atoms; limit is {MAX_ATOMS}")
    lat = _integer_lattice(v)
    if lat is None:
        raise SizingError("atoms do not lie on a usable integer lattice")
    _, step, ks = lat
    span = int(ks.max())
    support = n * span + 1
    if support > SUPPORT_CAP:
        raise SizingError(f"support of the sum has {support} points; cap is {SUPPORT_CAP}")
    unit = np.zeros(span + 1)
    np.add.at(unit, ks, p)
    result = np.array([1.0])
    power = unit
    m = n
    while m:
        if m & 1:
            result = _convolve(result, power)
        m >>= 1
        if m:
            power = _convolve(power, power)
    result /= result.sum()
    # the summand is centred, so base = -step * E[k]; offsetting by n E[k] avoids cancellation
    k = np.arange(result.size)
    values = step * (k - n * float(np.dot(ks, p))) / math.sqrt(n)
    return ExactPmf.from_atoms(values, result, "iid_sum")


def enumerate_comb(model_or_c, cap: int = COMB_CAP) -> ExactPmf:
    """Exact law of W = S / B_n over all n! equally likely permutations (sigma^2 = 0)."""
    if isinstance(model_or_c, CombClt):
        if not model_or_c.deterministic:
            raise ModelError("enumeration needs sigma2 = 0")
        c = model_or_c.c
    else:
        c = np.asarray(model_or_c, dtype=float)
    n = c.shape[0]
    if n > cap:
        raise SizingError(f"{math.factorial(n)} permutations; limit is n <= {cap}")
    b2 = comb_variance(c)
    if b2 <= 0:
        raise ModelError("degenerate model: B_n^2 = 0")
    perms = np.fromiter(
        itertools.chain.from_iterable(itertools.permutations(range(n))), dtype=np.int64
    ).reshape(-1, n)
    s = c[np.arange(n), perms].sum(axis=1)
    w = s / math.sqrt(b2)
    return ExactPmf.from_atoms(w, np.full(w.size, 1.0 / w.size), "comb_clt")


def enumerate_homsum(model: HomSum, cap: int = 20) -> ExactPmf:
    """Exact law of W over the 2^n equally likely sign vectors."""
    w = homsum_all_states(model, cap=cap)
    return ExactPmf.from_atoms(w, np.full(w.size, 1.0 / w.size), "hom_sum")


@dataclass(frozen=True)
class TailRatio:
    p_w: float
    p_ref: float
    ratio: float
    log_ratio: float


def reference_tail(x: float, reference: str = "normal", d: int = 1):
    if reference == "normal":
        return normal_upper_tail(x)
    if reference == "chi":
        return chi_upper_tail(max(x, 0.0), d)
    raise ValueError(f"unknown reference {reference!r}")


def exact_tail_ratio(pmf: ExactPmf, x: float, reference: str = "normal", d: int = 1) -> TailRatio:
    """P(W > x) / P(Z > x), with Z standard normal or chi(d).

    The log ratio is always reported; ``ratio`` is computed from it when the
    reference tail underflows.
    """
    p_w = pmf.tail(x)
    ref = reference_tail(x, reference, d)
    log_ratio = (math.log(p_w) if p_w > 0 else -math.inf) - ref.log_value
    if ref.value >= 1e-300:
        ratio = p_w / ref.value
    else:
        ratio = math.exp(log_ratio) if log_ratio < 709 else math.inf
    return TailRatio(p_w, ref.value, ratio, log_ratio)
