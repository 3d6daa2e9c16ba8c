"""p-Wasserstein distances between empirical and reference laws.

Five routes, all returning a :class:`TransportResult`:

* ``wp_empirical_1d``   sorted coupling of two equal-size 1-D samples (exact)
* ``wp_sample_vs_normal`` midpoint-quantile coupling against N(0, 1)
* ``wp_discrete_vs_normal`` exact quantile coupling of a finite pmf and N(0, 1)
* ``wp_assignment``     exact min-cost perfect matching in R^d
* ``wp_sinkhorn``       log-domain entropic approximation, reported as the
  unregularised cost of a feasible plan
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .core import normal_ppf
from .errors import SizingError

ASSIGNMENT_CAP = 4096
MAX_DIM = 64


@dataclass
class Sample:
    """Replicated draws of W, one row per replication."""

    data: np.ndarray
    seed: int
    model_tag: str

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("sample data must be a nonempty reps x d array")
        if not np.all(np.isfinite(data)):
            raise ValueError("sample data must be finite")
        self.data = data

    @property
    def reps(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def values(self) -> np.ndarray:
        """1-D view for scalar models."""
        if self.d != 1:
            raise ValueError("sample is multivariate")
        return self.data[:, 0]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.data, axis=1)


@dataclass
class TransportResult:
    distance: float
    p: float
    method: str
    plan_cost: float
    iterations: int = 0
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    return p


def _result(cost: float, p: float, method: str, **kw) -> TransportResult:
    cost = max(float(cost), 0.0)
    return TransportResult(cost ** (1.0 / p), p, method, cost, **kw)


def _as_1d(xs, name):
    a = np.asarray(xs, dtype=float).ravel()
    if a.size < 1 or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be a nonempty finite vector")
    return a


def _sorted_mean_power(diffs: np.ndarray, p: float) -> float:
    # summing sorted terms makes the reduction independent of input order
    return float(np.sort(np.abs(diffs) ** p).sum() / diffs.size)


def wp_empirical_1d(xs, ys, p: float = 1.0) -> TransportResult:
    p = _check_p(p)
    a, b = _as_1d(xs, "xs"), _as_1d(ys, "ys")
    if a.size != b.size:
        raise ValueError(f"sample sizes differ: {a.size} vs {b.size}")
    cost = _sorted_mean_power(np.sort(a) - np.sort(b), p)
    return _result(cost, p, "sorted_1d")


def normal_midpoint_quantiles(n: int) -> np.ndarray:
    return normal_ppf((np.arange(1, n + 1) - 0.5) / n)


def wp_sample_vs_normal(xs, p: float = 1.0) -> TransportResult:
    p = _check_p(p)
    a = _as_1d(xs, "xs")
    if a.size < 2:
        raise ValueError("need at least two sample points")
    cost = _sorted_mean_power(np.sort(a) - normal_midpoint_quantiles(a.size), p)
    return _result(cost, p, "quantile_vs_normal")


def _plateau_cost(v: float, lo: float, hi: float, p: float) -> float:
    """int_{lo}^{hi} |z - v|^p phi(z) dz, split at v."""

    def g(z):
        return abs(z - v) ** p * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)

    pieces = [lo, hi]
    if lo < v < hi:
        pieces = [lo, v, hi]
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(pieces[:-1], pieces[1:]):
            if a == b:
                continue
            val, _ = integrate.quad(g, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)
            total += val
    return total


def wp_discrete_vs_normal(values, probs, p: float = 1.0) -> TransportResult:
    """Exact W_p between a finite pmf and N(0, 1).

    F^{-1} is constant on each CDF plateau, so the quantile-coupling cost
    splits into one Gaussian integral per atom over the matching
    z-interval [Phi^{-1}(F_{k-1}), Phi^{-1}(F_k)].
    """
    p = _check_p(p)
    v = np.asarray(values, dtype=float).ravel()
    w = np.asarray(probs, dtype=float).ravel()
    if v.size == 0 or v.size != w.size:
        raise ValueError("pmf must be nonempty with matching values and probs")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("pmf probabilities must be nonnegative and sum to 1")
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    keep = w > 0
    v, w = v[keep], w[keep]
    cum = np.concatenate([[0.0], np.cumsum(w)])
    tail = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    # plateau endpoints in z; upper-tail masses keep the right end accurate
    with np.errstate(divide="ignore"):
        edges = np.where(cum <= 0.5, normal_ppf(cum), -normal_ppf(tail))
    edges[0], edges[-1] = -np.inf, np.inf
    costs = np.array([_plateau_cost(v[k], edges[k], edges[k + 1], p) for k in range(v.size)])
    return _result(float(np.sort(costs).sum()), p, "discrete_vs_normal", iterations=v.size)


def _check_clouds(X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape != Y.shape:
        raise ValueError(f"point clouds differ in shape: {X.shape} vs {Y.shape}")
    if X.shape[0] < 1:
        raise ValueError("point clouds must be nonempty")
    if X.shape[1] > MAX_DIM:
        raise ValueError(f"dimension {X.shape[1]} exceeds {MAX_DIM}")
    return X, Y


def _cost_matrix(X, Y, p):
    if X.shape[1] == 1:
        return np.abs(X[:, :1] - Y[:, 0][None, :]) ** p
    return cdist(X, Y) ** p


def wp_assignment(X, Y, p: float = 1.0, cap: int = ASSIGNMENT_CAP) -> TransportResult:
    """Exact equal-weight W_p via a min-cost perfect matching."""
    p = _check_p(p)
    X, Y = _check_clouds(X, Y)
    n = X.shape[0]
    if n > cap:
        raise SizingError(f"assignment needs a dense {n}x{n} cost matrix; cap is {cap}")
    C = _cost_matrix(X, Y, p)
    rows, cols = linear_sum_assignment(C)
    cost = float(np.sort(C[rows, cols]).sum() / n)
    return _result(cost, p, "assignment", iterations=n)


def _round_to_feasible(P, a, b):
    """Project a near-feasible plan onto the transport polytope.

    Rows and columns are scaled down to their targets, then the missing mass
    is added as a rank-one correction (Altschuler, Weed & Rigollet rounding).
    """
    r = np.minimum(1.0, a / np.maximum(P.sum(axis=1), 1e-300))
    P = P * r[:, None]
    c = np.minimum(1.0, b / np.maximum(P.sum(axis=0), 1e-300))
    P = P * c[None, :]
    err_a = a - P.sum(axis=1)
    err_b = b - P.sum(axis=0)
    s = err_a.sum()
    if s > 0:
        P = P + np.outer(err_a, err_b) / s
    return P


def wp_sinkhorn(
    X,
    Y,
    p: float = 1.0,
    epsilon: float | None = None,
    max_iter: int = 10_000,
    tol: float = 1e-8,
) -> TransportResult:
    """Entropic OT with log-domain potentials, reported as the cost of a feasible plan.

    `epsilon` is in cost units (default 1% of the mean pairwise cost). The
    cost matrix is divided by its median before iterating and epsilon is
    annealed geometrically from the median scale down to the target. Within
    a stage the scalings act on a kernel that already carries the dual
    potentials; whenever a scaling leaves [1e-100, 1e100] it is absorbed into
    the potentials and the kernel is rebuilt, so nothing over- or
    underflows however small epsilon is.

    The final plan is rounded onto the exact marginals, so the returned cost
    is an upper bound on the optimum even when the marginal violation is
    still above `tol` at `max_iter` (reported via ``converged``).
    """
    p = _check_p(p)
    X, Y = _check_clouds(X, Y)
    n = X.shape[0]
    C = _cost_matrix(X, Y, p)
    if epsilon is None:
        epsilon = 0.01 * float(C.mean())
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    scale = float(np.median(C))
    if scale <= 0:
        scale = float(C.max()) or 1.0
    K = C / scale
    eps_target = epsilon / scale
    a = np.full(n, 1.0 / n)
    f = np.zeros(n)
    g = np.zeros(n)

    schedule = []
    e = 1.0
    while e > eps_target:
        schedule.append(e)
        e *= 0.5
    schedule.append(eps_target)

    iterations = 0
    violation = math.inf
    for stage, eps in enumerate(schedule):
        last = stage == len(schedule) - 1
        stage_tol = tol if last else 1e-4
        budget = max(max_iter - iterations, 1) if last else 200
        Kt = np.exp((f[:, None] + g[None, :] - K) / eps)
        u = np.ones(n)
        v = np.ones(n)
        for _ in range(budget):
            Kv = Kt @ v
            violation = float(np.abs(u * Kv - a).sum())
            if violation <= stage_tol:
                break
            u = a / Kv
            v = a / (Kt.T @ u)
            iterations += 1
            if u.max() > 1e100 or v.max() > 1e100 or u.min() < 1e-100 or v.min() < 1e-100:
                f += eps * np.log(u)
                g += eps * np.log(v)
                Kt = np.exp((f[:, None] + g[None, :] - K) / eps)
                u[:] = 1.0
                v[:] = 1.0
        f += eps * np.log(u)
        g += eps * np.log(v)
    P = np.exp((f[:, None] + g[None, :] - K) / schedule[-1])
    P = _round_to_feasible(P, a, a)
    cost = float(np.sum(P * C))
    return _result(
        cost,
        p,
        "sinkhorn",
        iterations=iterations,
        converged=violation <= tol,
        diagnostics={"marginal_violation": violation, "epsilon": float(epsilon)},
    )
