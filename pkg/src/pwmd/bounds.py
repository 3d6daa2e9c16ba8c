"""Closed-form bound shapes with every unknown absolute constant set to 1.

Each evaluator returns a :class:`BoundReport`: the shape value, the
conditions under which the underlying result applies, which of them fail,
and the intermediate quantities. Infeasibility is reported, never raised.
All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import DistSpec, log_kappa, orlicz_norm
from .errors import DependencyError
from .models import Certificate, contraction_q2

INV_E = math.exp(-1.0)


@dataclass(frozen=True)
class BoundProfile:
    """W_p(W, Z) <= A max_r p^{alpha_r} Delta_r for 1 <= p <= p0."""

    A: float
    terms: tuple
    p0: float

    def __post_init__(self):
        terms = tuple((float(a), float(d)) for a, d in self.terms)
        if not terms:
            raise ValueError("profile needs at least one (alpha, delta) term")
        if any(a < 0 or not d > 0 for a, d in terms):
            raise ValueError("need alpha >= 0 and delta > 0")
        if not self.A > 0 or not self.p0 >= 1:
            raise ValueError("need A > 0 and p0 >= 1")
        object.__setattr__(self, "terms", terms)

    @property
    def dbar(self) -> float:
        return max(d for _, d in self.terms)

    @property
    def range_max_x(self) -> float:
        return min([math.sqrt(self.p0)] + [d ** (-1.0 / (2 * a + 1)) for a, d in self.terms])


@dataclass
class BoundReport:
    shape: float
    feasible: bool
    violated_conditions: list
    range_max_x: float
    intermediates: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    constants_normalized: bool = True

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "feasible": self.feasible,
            "violated_conditions": list(self.violated_conditions),
            "range_max_x": self.range_max_x,
            "intermediates": dict(self.intermediates),
            "flags": list(self.flags),
            "constants_normalized": self.constants_normalized,
        }


def _report(shape, violated, range_max_x, intermediates=None, flags=None) -> BoundReport:
    return BoundReport(
        float(shape), not violated, list(violated), float(range_max_x),
        dict(intermediates or {}), list(flags or []),
    )


def _check_x(x: float) -> float:
    x = float(x)
    if not x >= 0:
        raise ValueError("x must be nonnegative")
    return x


def t4_translate(profile: BoundProfile, x: float) -> BoundReport:
    """Relative-error shape implied by a p-Wasserstein profile.

    shape = (1 + x) (max_r (|log dbar| + x^2)^{alpha_r} Delta_r + dbar).
    """
    x = _check_x(x)
    dbar = profile.dbar
    logd = abs(math.log(dbar))
    shape = (1 + x) * (max((logd + x * x) ** a * d for a, d in profile.terms) + dbar)
    p = math.log(1.0 / dbar) + 0.5 * x * x
    eps = profile.A * max(p**a * d for a, d in profile.terms) * math.e if p > 0 else math.nan
    violated = []
    if logd > profile.p0 / 2:
        violated.append("|log Delta_bar| exceeds p0/2")
    if x > math.sqrt(profile.p0):
        violated.append("x exceeds sqrt(p0)")
    for a, d in profile.terms:
        if x > d ** (-1.0 / (2 * a + 1)):
            violated.append(f"x exceeds Delta^(-1/(2 alpha+1)) for alpha={a:g}, Delta={d:g}")
    flags = []
    if dbar >= INV_E:
        flags.append("Delta_bar >= 1/e: degenerate branch, only x <= e is meaningful")
    inter = {
        "p": p, "epsilon": eps, "Delta_bar": dbar, "p0": profile.p0,
        "alpha": [a for a, _ in profile.terms], "Delta": [d for _, d in profile.terms],
    }
    return _report(shape, violated, profile.range_max_x, inter, flags)


def kappa_d(d: int) -> float:
    """2^{d/2 - 1} Gamma(d/2)."""
    return math.exp(log_kappa(d))


def multiMD_translate(A: float, alpha: float, delta: float, p0: float, d: int, x: float) -> BoundReport:
    """Multivariate relative-error shape (1 + x)(|log Delta| + d log d + x^2)^alpha Delta."""
    x = _check_x(x)
    if d < 2:
        raise ValueError("multiMD_translate needs d >= 2")
    if not (A > 0 and alpha >= 0 and delta > 0 and p0 >= 1):
        raise ValueError("need A > 0, alpha >= 0, delta > 0, p0 >= 1")
    logd = abs(math.log(delta))
    dlogd = d * math.log(d)
    lk = log_kappa(d)
    shape = (1 + x) * (logd + dlogd + x * x) ** alpha * delta
    violated = []
    if logd > p0 / 4:
        violated.append("|log Delta| exceeds p0/4")
    if lk > p0 / 4:
        violated.append("log kappa(d) exceeds p0/4")
    cap = min(delta ** (-1.0 / (2 * alpha + 1)), math.sqrt(p0))
    if x > delta ** (-1.0 / (2 * alpha + 1)):
        violated.append("x exceeds Delta^(-1/(2 alpha+1))")
    if x > math.sqrt(p0):
        violated.append("x exceeds sqrt(p0)")
    flags = []
    if delta >= INV_E:
        flags.append("Delta >= 1/e: degenerate branch, only x <= e is meaningful")
    p = logd + lk + 0.5 * x * x
    inter = {
        "p": p, "epsilon": A * p**alpha * delta * math.e, "Delta": delta, "alpha": alpha,
        "p0": p0, "log_kappa_d": lk,
        "dim_product": d * dlogd**alpha * delta,
        "log_product": d * delta * logd**alpha,
    }
    return _report(shape, violated, cap, inter, flags)


def certificate_bound(cert: Certificate, p: float) -> BoundReport:
    """W_p shape from exact conditional moments of an exchangeable pair.

    d = 1: ||R||_p + sqrt(p) ||E||_p + p sqrt(||E[D^4|G]||_p / lambda);
    d >= 2 multiplies the last term by d^{1/4}.
    """
    p = float(p)
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    c = cert if cert.p == p else cert.at(p)
    last = p * math.sqrt(c.norm_D4_p / c.lam)
    if c.d > 1:
        last *= c.d**0.25
    shape = c.norm_R_p + math.sqrt(p) * c.norm_E_p + last
    inter = {
        "lambda": c.lam, "p": p, "norm_R_p": c.norm_R_p, "norm_E_p": c.norm_E_p,
        "norm_D4_p": c.norm_D4_p, "d": c.d,
    }
    return _report(shape, [], math.inf, inter)


# ---------------------------------------------------------------------------
# per-application Delta
# ---------------------------------------------------------------------------


def _rel_linear(x, delta):
    return (1 + x) * (1 + abs(math.log(delta)) + x * x) * delta


def _rel_dim(x, delta, d):
    return (1 + x) * (abs(math.log(delta)) + d * math.log(d) + x * x) * delta


@dataclass
class AppDelta:
    """Delta and the companion inputs of one application."""

    application: str
    delta: float
    alpha: float
    p0: float | None
    range_max_x: float
    d: int = 1
    smallness: float | None = None
    smallness_label: str = ""
    aux: dict = field(default_factory=dict)
    _shape: Callable = field(default=None, repr=False)

    def md_shape(self, x: float) -> BoundReport:
        """Relative-error shape of the application at x, with its range and smallness checks."""
        x = _check_x(x)
        violated = []
        if self.smallness is not None and self.smallness > 1.0:
            violated.append(f"{self.smallness_label} exceeds 1 (constant c set to 1)")
        if x > self.range_max_x:
            violated.append(f"x exceeds range cap {self.range_max_x:.6g}")
        flags = []
        if self.delta >= INV_E:
            flags.append("Delta >= 1/e: degenerate branch, only x <= e is meaningful")
        inter = {"Delta": self.delta, "alpha": self.alpha, "p0": self.p0, **self.aux}
        return _report(self._shape(x), violated, self.range_max_x, inter, flags)

    def to_dict(self) -> dict:
        return {
            "application": self.application, "delta": self.delta, "alpha": self.alpha,
            "p0": self.p0, "range_max_x": self.range_max_x, "d": self.d,
            "smallness": self.smallness, "smallness_label": self.smallness_label,
            "aux": {k: v for k, v in self.aux.items() if np.isscalar(v)},
        }


def _need(params: dict, key: str, producer: str):
    val = params.get(key)
    if val is None:
        raise DependencyError(f"missing input {key!r}; compute it with {producer}")
    return val


def _orlicz_b(params, alpha=1.0):
    if params.get("b") is not None:
        return float(params["b"])
    dist = params.get("dist")
    if dist is None:
        raise DependencyError("missing input 'b'; compute it with core.orlicz_norm")
    if isinstance(dist, dict):
        dist = DistSpec.from_dict(dist)
    return orlicz_norm(dist.standardized(), alpha)


def _app_iid(pr):
    n = float(_need(pr, "n", "the model size"))
    b = _orlicz_b(pr)
    delta = b * b / math.sqrt(n)
    shape = lambda x: (1 + x) * (1 + abs(math.log(n / b**4)) + x * x) * delta
    return AppDelta("iid", delta, 1.0, delta ** (-2 / 3), delta ** (-1 / 3), 1, delta,
                    "b^2/sqrt(n)", {"b": b, "n": n}, shape)


def _app_comb(pr):
    from .models import comb_variance

    b = float(_need(pr, "b", "core.orlicz_norm"))
    if pr.get("c") is not None:
        c = np.asarray(pr["c"], dtype=float)
        n = c.shape[0]
        b2 = comb_variance(c, pr.get("sigma2"))
    else:
        b2 = float(_need(pr, "b2", "models.comb_variance"))
        n = int(_need(pr, "n", "the model size"))
    delta = math.sqrt(n) * b * b / b2
    wp_shape = lambda p: (p * math.sqrt(n) / b2 + p**2.5 / b2) * b * b
    aux = {"b": b, "n": n, "B_n^2": b2, "wp_shape": wp_shape}
    return AppDelta("comb", delta, 1.0, delta ** (-2 / 3), delta ** (-1 / 3), 1, delta,
                    "sqrt(n) b^2/B_n^2", aux, lambda x: _rel_linear(x, delta))


def _app_dejong(pr):
    q = int(_need(pr, "q", "the model order"))
    K = float(_need(pr, "K", "core.orlicz_norm (psi_2)"))
    M = float(_need(pr, "M", "DistSpec.fourth_moment"))
    k4 = float(_need(pr, "kappa4", "models.fourth_cumulant"))
    infl = float(_need(pr, "influence", "models.maximal_influence"))
    log_term = max(1.0, abs(math.log(infl)) ** (2 * q - 2))
    delta = K ** (2 * q) * math.sqrt(abs(k4) + M**q * infl * log_term)
    shape = lambda x: (1 + x) * (abs(math.log(delta)) + x * x) ** q * delta
    aux = {"q": q, "K": K, "M": M, "kappa4": k4, "influence": infl}
    return AppDelta("dejong", delta, float(q), infl ** -0.5, delta ** (-1 / (2 * q + 1)), 1,
                    delta, "Delta", aux, shape)


def _op_norm(pr):
    if pr.get("F") is not None:
        return contraction_q2(pr["F"]).op_norm_F
    return float(_need(pr, "op_norm", "models.contraction_q2"))


def _app_qf(pr):
    K = float(_need(pr, "K", "DistSpec.sup_abs"))
    op = _op_norm(pr)
    shape = lambda x: K**4 * (1 + x) * (abs(math.log(op)) + x * x) * op
    return AppDelta("qf", op, 1.0, 2 * op ** (-2 / 3), op ** (-1 / 3), 1, None, "",
                    {"K": K, "op_norm_F": op}, shape)


def _app_wiener_simple(pr):
    if pr.get("F") is not None:
        delta = contraction_q2(pr["F"]).hs_norm_F2
    else:
        delta = float(_need(pr, "hs_norm_F2", "models.contraction_q2"))
    a = 1.5
    shape = lambda x: (1 + x) * (1 + abs(math.log(delta)) + x * x) ** a * delta
    return AppDelta("wiener_simple", delta, a, None, delta ** -0.25, 1, delta, "Delta",
                    {"hs_norm_F2": delta}, shape)


def _app_fourth_moment(pr):
    k4 = float(_need(pr, "kappa4", "models.fourth_cumulant"))
    if not k4 > 0:
        raise ValueError("kappa4 must be positive")
    root = math.sqrt(k4)
    shape = lambda x: (1 + x) * (1 + abs(math.log(k4)) + x * x) ** 1.5 * root
    return AppDelta("fourth_moment", root, 1.5, None, k4 ** (-1 / 8), 1, k4, "kappa4",
                    {"kappa4": k4}, shape)


def _app_chi(pr):
    d = int(_need(pr, "d", "the model dimension"))
    n = float(_need(pr, "n", "the model size"))
    b = _orlicz_b(pr)
    delta = d**0.25 * b * b / math.sqrt(n)
    small = d * d * math.log(d) * delta
    return AppDelta("chi", delta, 1.0, delta ** (-2 / 3), delta ** (-1 / 3), d, small,
                    "d^2 log(d) Delta", {"b": b, "n": n}, lambda x: _rel_dim(x, delta, d))


def _app_mdep(pr):
    m = int(_need(pr, "m", "models.dependency_stats"))
    n = float(_need(pr, "n", "the model size"))
    b = _orlicz_b(pr)
    delta = m * m * b**3 * math.log(n) ** 4 / math.sqrt(n)
    return AppDelta("mdep", delta, 1.0, delta ** (-2 / 3), delta ** (-1 / 3), 1, delta, "Delta",
                    {"m": m, "b": b, "n": n, "L": m + 1}, lambda x: _rel_linear(x, delta))


def _local(name, delta, d, aux):
    shape = (lambda x: _rel_linear(x, delta)) if d == 1 else (lambda x: _rel_dim(x, delta, d))
    small = delta if d == 1 else d * d * math.log(d) * delta
    label = "Delta" if d == 1 else "d^2 log(d) Delta_d"
    return AppDelta(name, delta, 1.0, delta ** (-2 / 3), delta ** (-1 / 3), d, small, label, aux, shape)


def _app_local_bounded(pr):
    t1 = float(_need(pr, "theta1", "models.dependency_stats"))
    t2 = float(_need(pr, "theta2", "models.dependency_stats"))
    b = float(_need(pr, "b_n", "the summand bound"))
    bp = float(_need(pr, "b_n_prime", "the coordinate bound"))
    n = float(_need(pr, "n", "the model size"))
    d = int(pr.get("d", 1))
    delta = (d * math.sqrt(t1 * t2) * bp * bp + t1 * t1 * b**3 * math.log(n)) / math.sqrt(n)
    return _local("local_bounded", delta, d, {"theta1": t1, "theta2": t2, "b_n": b, "b_n_prime": bp, "n": n})


def _app_local_unbounded(pr):
    t1 = float(_need(pr, "theta1", "models.dependency_stats"))
    t2 = float(_need(pr, "theta2", "models.dependency_stats"))
    L = float(_need(pr, "L", "models.dependency_stats"))
    n = float(_need(pr, "n", "the model size"))
    b = _orlicz_b(pr)
    d = int(pr.get("d", 1))
    ln = math.log(n)
    delta = (d * L * b * ln + d * math.sqrt(t1 * t2) * b * b * ln**2 + d**1.5 * t1 * t1 * b**3 * ln**4) / math.sqrt(n)
    return _local("local_unbounded", delta, d, {"theta1": t1, "theta2": t2, "L": L, "b": b, "n": n})


APPLICATIONS = {
    "iid": _app_iid,
    "comb": _app_comb,
    "dejong": _app_dejong,
    "qf": _app_qf,
    "wiener_simple": _app_wiener_simple,
    "fourth_moment": _app_fourth_moment,
    "chi": _app_chi,
    "mdep": _app_mdep,
    "local_bounded": _app_local_bounded,
    "local_unbounded": _app_local_unbounded,
}


def app_delta(application: str, **params) -> AppDelta:
    """Delta, alpha, p0 and x-range for a named application."""
    try:
        fn = APPLICATIONS[application]
    except KeyError:
        raise ValueError(f"unknown application {application!r}; choose from {sorted(APPLICATIONS)}") from None
    return fn(params)


def local_wp_bound(n, d, theta1, theta2, b_n, b_n_prime, p) -> BoundReport:
    """p (d (theta1 theta2)^{1/2} b'^2 + theta1^2 b^3 log n) / sqrt(n), with the p-range check."""
    vals = (n, d, theta1, theta2, b_n, b_n_prime, p)
    if any(not v > 0 for v in vals):
        raise ValueError("all inputs must be positive")
    shape = p * (d * math.sqrt(theta1 * theta2) * b_n_prime**2 + theta1**2 * b_n**3 * math.log(n)) / math.sqrt(n)
    p_max = min(theta1 / theta2, 1.0 / (theta1**2 * b_n**2)) * n
    violated = []
    if p < 2:
        violated.append("p below 2")
    if p > p_max:
        violated.append("p exceeds min(theta1/theta2, c/(theta1^2 b_n^2)) n with c = 1")
    return _report(shape, violated, math.inf, {"p_max": p_max}, ["p-range depends on the unknown constant c"])
