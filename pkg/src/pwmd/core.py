"""Summand distributions, normal/chi tails, and Orlicz norms.

Everything here is pure and stateless. Tail functions return a
:class:`TailValue` carrying both the probability and its natural log so
that callers can keep working once the probability underflows.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .errors import CapabilityError, DivergenceError, ModelError, RangeError

SQRT2 = math.sqrt(2.0)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# below this the erfc route loses relative accuracy; switch to erfcx
_ERFCX_SPLIT = 5.0

FAMILIES = (
    "rademacher",
    "laplace_unit_var",
    "centered_exponential",
    "uniform_centered",
    "gaussian",
    "lattice",
)


@dataclass(frozen=True)
class TailValue:
    value: float
    log_value: float

    def __float__(self) -> float:
        return self.value


# ---------------------------------------------------------------------------
# normal and chi tails
# ---------------------------------------------------------------------------


def normal_pdf(x):
    return np.exp(-0.5 * np.square(x) - LOG_SQRT_2PI)


def log_normal_sf(x):
    """Vectorised log P(Z > x)."""
    arr = np.asarray(x, dtype=float)
    x = np.atleast_1d(arr)
    out = np.empty_like(x)
    hi = x > _ERFCX_SPLIT
    mid = (x >= -_ERFCX_SPLIT) & ~hi
    lo = x < -_ERFCX_SPLIT
    out[hi] = np.log(0.5 * special.erfcx(x[hi] / SQRT2)) - 0.5 * x[hi] ** 2
    out[mid] = np.log(0.5 * special.erfc(x[mid] / SQRT2))
    # P(Z > x) = 1 - P(Z > -x); log1p keeps the tiny complement
    out[lo] = np.log1p(-0.5 * special.erfcx(-x[lo] / SQRT2) * np.exp(-0.5 * x[lo] ** 2))
    return float(out[0]) if arr.ndim == 0 else out


def normal_sf(x):
    """Vectorised P(Z > x) with relative accuracy into the deep right tail."""
    arr = np.asarray(x, dtype=float)
    x = np.atleast_1d(arr)
    out = 0.5 * special.erfc(x / SQRT2)
    hi = x > _ERFCX_SPLIT
    if np.any(hi):
        xs = x[hi]
        out[hi] = 0.5 * special.erfcx(xs / SQRT2) * np.exp(-0.5 * xs * xs)
    return float(out[0]) if arr.ndim == 0 else out


def normal_upper_tail(x: float) -> TailValue:
    """P(Z > x) for a standard normal Z."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    value = float(normal_sf(np.array([x]))[0])
    log_value = float(log_normal_sf(np.array([x]))[0])
    return TailValue(value, log_value)


def normal_ppf(u):
    """Standard normal quantile function."""
    return special.ndtri(u)


def log_kappa(d: int) -> float:
    """log of the chi normaliser 2^{d/2-1} Gamma(d/2)."""
    return (0.5 * d - 1.0) * math.log(2.0) + math.lgamma(0.5 * d)


def _check_dim(d: int) -> int:
    if int(d) != d or d < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {d}")
    return int(d)


def chi_density(x: float, d: int) -> float:
    """Density of |Z| for Z ~ N(0, I_d)."""
    d = _check_dim(d)
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return math.exp(-log_kappa(1)) if d == 1 else 0.0
    return math.exp((d - 1) * math.log(x) - 0.5 * x * x - log_kappa(d))


def _log_gammaincc_cf(a: float, z: float) -> float:
    """log Q(a, z) by the modified Lentz continued fraction (valid for z > a + 1)."""
    tiny = 1e-300
    b = z + 1.0 - a
    c = 1.0 / tiny
    dd = 1.0 / b
    h = dd
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        dd = an * dd + b
        if abs(dd) < tiny:
            dd = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        dd = 1.0 / dd
        delta = dd * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return -z + a * math.log(z) - math.lgamma(a) + math.log(h)


def chi_upper_tail(x: float, d: int) -> TailValue:
    """P(|Z| > x) for Z ~ N(0, I_d), i.e. Q(d/2, x^2/2)."""
    d = _check_dim(d)
    if x < 0:
        raise ValueError("x must be nonnegative")
    if d == 1:
        return TailValue(2.0 * normal_sf(x), math.log(2.0) + log_normal_sf(x))
    a = 0.5 * d
    z = 0.5 * x * x
    if z <= a + 1.0:
        lower = float(special.gammainc(a, z))
        if lower < 0.5:
            # log1p keeps strict monotonicity where the tail rounds to 1
            return TailValue(1.0 - lower, math.log1p(-lower))
        value = float(special.gammaincc(a, z))
        return TailValue(value, math.log(value))
    log_value = _log_gammaincc_cf(a, z)
    return TailValue(math.exp(log_value), log_value)


# ---------------------------------------------------------------------------
# distribution specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistSpec:
    """A mean-zero summand law.

    Use the classmethod constructors; they validate parameters and, for
    lattices, centre the support.
    """

    family: str
    rate: float | None = None
    half_width: float | None = None
    values: tuple[float, ...] | None = None
    probs: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ModelError(f"unknown family {self.family!r}")
        if self.family == "centered_exponential" and not (self.rate and self.rate > 0):
            raise ModelError("centered_exponential needs rate > 0")
        if self.family == "uniform_centered" and not (self.half_width and self.half_width > 0):
            raise ModelError("uniform_centered needs half_width > 0")
        if self.family == "lattice":
            if not self.values or self.probs is None or len(self.values) != len(self.probs):
                raise ModelError("lattice needs equal-length values and probs")
            p = np.asarray(self.probs)
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ModelError("lattice probabilities must be nonnegative and sum to 1")
            if abs(float(np.dot(self.values, p))) > 1e-12:
                raise ModelError("lattice mean must be 0")
            if self.variance <= 0:
                raise ModelError("lattice variance must be positive")

    # constructors -----------------------------------------------------

    @classmethod
    def rademacher(cls) -> "DistSpec":
        return cls("rademacher")

    @classmethod
    def laplace(cls) -> "DistSpec":
        return cls("laplace_unit_var")

    @classmethod
    def centered_exponential(cls, rate: float = 1.0) -> "DistSpec":
        return cls("centered_exponential", rate=float(rate))

    @classmethod
    def uniform(cls, half_width: float = math.sqrt(3.0)) -> "DistSpec":
        return cls("uniform_centered", half_width=float(half_width))

    @classmethod
    def gaussian(cls) -> "DistSpec":
        return cls("gaussian")

    @classmethod
    def lattice(cls, values: Sequence[float], probs: Sequence[float], center: bool = True) -> "DistSpec":
        v = np.asarray(values, dtype=float)
        p = np.asarray(probs, dtype=float)
        if v.shape != p.shape or v.size == 0:
            raise ModelError("lattice needs equal-length, nonempty values and probs")
        if center:
            v = v - float(np.dot(v, p))
        return cls("lattice", values=tuple(v.tolist()), probs=tuple(p.tolist()))

    @classmethod
    def from_dict(cls, block: dict) -> "DistSpec":
        block = dict(block)
        family = block.pop("family")
        if family == "lattice":
            return cls.lattice(block.pop("values"), block.pop("probs"), block.pop("center", True))
        spec = cls(family, **block)
        return spec

    def to_dict(self) -> dict:
        out = {"family": self.family}
        if self.rate is not None:
            out["rate"] = self.rate
        if self.half_width is not None:
            out["half_width"] = self.half_width
        if self.values is not None:
            out["values"] = list(self.values)
            out["probs"] = list(self.probs)
        return out

    # moments ----------------------------------------------------------

    @property
    def mean(self) -> float:
        if self.family == "lattice":
            return float(np.dot(self.values, self.probs))
        return 0.0

    @property
    def variance(self) -> float:
        f = self.family
        if f in ("rademacher", "laplace_unit_var", "gaussian"):
            return 1.0
        if f == "centered_exponential":
            return 1.0 / self.rate**2
        if f == "uniform_centered":
            return self.half_width**2 / 3.0
        v = np.asarray(self.values)
        return float(np.dot(v * v, self.probs))

    @property
    def fourth_moment(self) -> float:
        f = self.family
        if f == "rademacher":
            return 1.0
        if f == "laplace_unit_var":
            return 6.0  # 24 s^4 with s^2 = 1/2
        if f == "gaussian":
            return 3.0
        if f == "centered_exponential":
            return 9.0 / self.rate**4
        if f == "uniform_centered":
            return self.half_width**4 / 5.0
        v = np.asarray(self.values)
        return float(np.dot(v**4, self.probs))

    @property
    def sup_abs(self) -> float:
        """Essential supremum of |X| (inf for unbounded families)."""
        f = self.family
        if f == "rademacher":
            return 1.0
        if f == "uniform_centered":
            return self.half_width
        if f == "lattice":
            v = np.asarray(self.values)
            return float(np.max(np.abs(v[np.asarray(self.probs) > 0])))
        return math.inf

    @property
    def is_lattice(self) -> bool:
        return self.family in ("rademacher", "lattice")

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        if self.family == "rademacher":
            return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
        if self.family == "lattice":
            return np.asarray(self.values, dtype=float), np.asarray(self.probs, dtype=float)
        raise CapabilityError(f"{self.family} has no finite atom list")

    def scaled(self, s: float) -> "DistSpec":
        """Law of s * X for s > 0 (stays inside the family)."""
        if s <= 0:
            raise ValueError("scale must be positive")
        f = self.family
        if f == "centered_exponential":
            return DistSpec.centered_exponential(self.rate / s)
        if f == "uniform_centered":
            return DistSpec.uniform(self.half_width * s)
        if s == 1.0:
            return self
        if f in ("rademacher", "lattice"):
            v, p = self.atoms()
            return DistSpec.lattice(v * s, p, center=False)
        raise CapabilityError(f"{f} is fixed at unit variance; cannot rescale")

    def standardized(self) -> "DistSpec":
        return self.scaled(1.0 / math.sqrt(self.variance))

    # sampling ---------------------------------------------------------

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        f = self.family
        if f == "rademacher":
            return 2.0 * rng.integers(0, 2, size=size) - 1.0
        if f == "gaussian":
            return rng.standard_normal(size)
        if f == "laplace_unit_var":
            return rng.laplace(0.0, 1.0 / SQRT2, size)
        if f == "centered_exponential":
            return rng.exponential(1.0 / self.rate, size) - 1.0 / self.rate
        if f == "uniform_centered":
            return rng.uniform(-self.half_width, self.half_width, size)
        v, p = self.atoms()
        return v[rng.choice(v.size, size=size, p=p)]

    # exponential tilting ----------------------------------------------

    @property
    def supports_tilting(self) -> bool:
        return True

    def theta_domain(self) -> tuple[float, float]:
        """Open interval on which the log-MGF is finite."""
        f = self.family
        if f == "laplace_unit_var":
            return (-SQRT2, SQRT2)
        if f == "centered_exponential":
            return (-math.inf, self.rate)
        return (-math.inf, math.inf)

    def log_mgf(self, theta: float) -> float:
        """psi(theta) = log E exp(theta X)."""
        f = self.family
        lo, hi = self.theta_domain()
        if not lo < theta < hi:
            return math.inf
        if f == "rademacher":
            a = abs(theta)
            return a + math.log1p(math.exp(-2 * a)) - math.log(2.0)
        if f == "gaussian":
            return 0.5 * theta * theta
        if f == "laplace_unit_var":
            return -math.log1p(-0.5 * theta * theta)
        if f == "centered_exponential":
            r = self.rate
            return -theta / r - math.log1p(-theta / r)
        if f == "uniform_centered":
            a = abs(theta) * self.half_width
            if a < 1e-8:
                return a * a / 6.0
            return a + math.log1p(-math.exp(-2 * a)) - math.log(2 * a)
        v, p = self.atoms()
        return float(special.logsumexp(theta * v, b=p))

    def dlog_mgf(self, theta: float) -> float:
        """psi'(theta): mean of the tilted law."""
        f = self.family
        if f == "rademacher":
            return math.tanh(theta)
        if f == "gaussian":
            return theta
        if f == "laplace_unit_var":
            return theta / (1.0 - 0.5 * theta * theta)
        if f == "centered_exponential":
            r = self.rate
            return 1.0 / (r - theta) - 1.0 / r
        if f == "uniform_centered":
            h = self.half_width
            a = theta * h
            if abs(a) < 1e-6:
                return h * a / 3.0
            return h / math.tanh(a) - 1.0 / theta
        v, p = self.atoms()
        w = special.softmax(theta * v + np.log(np.where(p > 0, p, 1e-300)))
        return float(np.dot(w, v))

    def mean_range(self) -> tuple[float, float]:
        """Range of psi' over the tilting domain."""
        f = self.family
        if f == "rademacher":
            return (-1.0, 1.0)
        if f == "uniform_centered":
            return (-self.half_width, self.half_width)
        if f == "lattice":
            v, p = self.atoms()
            v = v[p > 0]
            return (float(v.min()), float(v.max()))
        if f == "centered_exponential":
            return (-1.0 / self.rate, math.inf)
        return (-math.inf, math.inf)

    def solve_tilt(self, target_mean: float, tol: float = 1e-10) -> float:
        """theta with psi'(theta) = target_mean, by bisection."""
        m_lo, m_hi = self.mean_range()
        if not m_lo < target_mean < m_hi:
            raise RangeError(
                f"tilted mean {target_mean} outside the attainable range ({m_lo}, {m_hi})"
            )
        lo, hi = self.theta_domain()
        # finite bracket: grow until psi' straddles the target
        a = lo if math.isfinite(lo) else -1.0
        b = hi if math.isfinite(hi) else 1.0
        while not math.isfinite(lo) and self.dlog_mgf(a) > target_mean:
            a *= 2.0
        while not math.isfinite(hi) and self.dlog_mgf(b) < target_mean:
            b *= 2.0
        for _ in range(400):
            mid = 0.5 * (a + b)
            if self.dlog_mgf(mid) < target_mean:
                a = mid
            else:
                b = mid
            if b - a < tol:
                break
        return 0.5 * (a + b)

    def sample_sum(self, rng: np.random.Generator, n: int, size: int, theta: float = 0.0) -> np.ndarray:
        """Draw `size` realisations of X_1 + ... + X_n under the theta-tilted law.

        Families with closed-form sum laws (binomial, gamma, normal,
        multinomial) are sampled exactly in O(size); the uniform family
        falls back to summing n columns.
        """
        f = self.family
        if f == "rademacher":
            p_up = 0.5 * (1.0 + math.tanh(theta))
            return 2.0 * rng.binomial(n, p_up, size) - n
        if f == "gaussian":
            return n * theta + math.sqrt(n) * rng.standard_normal(size)
        if f == "laplace_unit_var":
            s = 1.0 / SQRT2
            k = rng.binomial(n, 0.5 * (1.0 + s * theta), size)
            pos = rng.gamma(k.astype(float), 1.0 / (1.0 / s - theta))
            neg = rng.gamma((n - k).astype(float), 1.0 / (1.0 / s + theta))
            return pos - neg
        if f == "centered_exponential":
            r = self.rate
            return rng.gamma(float(n), 1.0 / (r - theta), size) - n / r
        if f == "lattice":
            v, p = self.atoms()
            logw = theta * v + np.log(np.where(p > 0, p, 1e-300))
            w = special.softmax(np.where(p > 0, logw, -np.inf))
            counts = rng.multinomial(n, w, size=size)
            return counts @ v
        # uniform_centered: inverse-cdf draws of the tilted law, summed
        out = np.zeros(size)
        chunk = max(1, 2**20 // max(n, 1))
        for start in range(0, size, chunk):
            m = min(chunk, size - start)
            out[start : start + m] = self._tilted_uniform(rng, theta, (m, n)).sum(axis=1)
        return out

    def _tilted_uniform(self, rng, theta, shape):
        h = self.half_width
        u = rng.random(shape)
        if abs(theta * h) < 1e-12:
            return h * (2.0 * u - 1.0)
        # x = h + log(u + (1-u) e^{-2 theta h}) / theta, stable for both signs
        a = 2.0 * theta * h
        if theta > 0:
            return h + np.log(u + (1.0 - u) * math.exp(-a)) / theta
        return -h + np.log(1.0 - u + u * math.exp(a)) / theta

    # orlicz -----------------------------------------------------------

    def expected_psi(self, t: float, alpha: float) -> float:
        """E[exp((|X|/t)^alpha)] - 1 (may be inf)."""
        return _expected_psi(self, t, alpha)


def _quad(fun, a, b) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(fun, a, b, limit=200, epsabs=1e-13, epsrel=1e-12)
    return val


def _expected_psi(spec: DistSpec, t: float, alpha: float) -> float:
    f = spec.family
    with np.errstate(over="ignore"):
        if f in ("rademacher", "lattice"):
            v, p = spec.atoms()
            return float(np.dot(p, np.exp((np.abs(v) / t) ** alpha))) - 1.0
        if f in ("laplace_unit_var", "centered_exponential") and alpha > 1:
            return math.inf
        if f == "gaussian" and alpha > 2:
            return math.inf
        if f == "laplace_unit_var":
            s = 1.0 / SQRT2
            if alpha == 1:
                return 1.0 / (1.0 - s / t) - 1.0 if t > s else math.inf
            return _quad(lambda y: math.exp((y / t) ** alpha - y / s) / s, 0, math.inf) - 1.0
        if f == "centered_exponential":
            r = spec.rate
            mu = 1.0 / r
            if alpha == 1:
                if t <= mu:
                    return math.inf
                left = r * math.exp(mu / t) * (-math.expm1(-mu * (r + 1.0 / t))) / (r + 1.0 / t)
                right = math.exp(-1.0) * r / (r - 1.0 / t)
                return left + right - 1.0
            dens = lambda e: math.exp((abs(e - mu) / t) ** alpha - r * e) * r
            return _quad(dens, 0, mu) + _quad(dens, mu, math.inf) - 1.0
        if f == "uniform_centered":
            h = spec.half_width
            if alpha == 1:
                return (t / h) * math.expm1(h / t) - 1.0
            return _quad(lambda y: math.exp((y / t) ** alpha), 0, h) / h - 1.0
        # gaussian
        if alpha == 2:
            return 1.0 / math.sqrt(1.0 - 2.0 / t**2) - 1.0 if t * t > 2.0 else math.inf
        g = lambda y: 2.0 * math.exp((y / t) ** alpha - 0.5 * y * y - LOG_SQRT_2PI)
        return _quad(g, 0, math.inf) - 1.0


def orlicz_norm(spec: DistSpec, alpha: float = 1.0, max_iter: int = 200) -> float:
    """inf{t > 0 : E[exp((|X|/t)^alpha)] - 1 <= 1}.

    Bisection over [sd * 1e-6, sd * 1e6]; returns the upper end of the
    final bracket so the defining inequality holds at the returned t.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if spec.family == "gaussian" and alpha > 2:
        raise ValueError("gaussian has no psi_alpha norm for alpha > 2")
    sd = math.sqrt(spec.variance)
    lo, hi = sd * 1e-6, sd * 1e6

    def too_small(t):
        try:
            val = _expected_psi(spec, t, alpha)
        except OverflowError:
            return True
        return not (val <= 1.0)

    if too_small(hi):
        raise DivergenceError(
            f"E psi_{alpha}(|X|/t) > 1 for all t up to {hi:g} ({spec.family})"
        )
    if not too_small(lo):
        return lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if too_small(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return hi
