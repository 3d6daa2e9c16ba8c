import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from pwmd.errors import SizingError
from pwmd.wasserstein import (
    Sample,
    normal_midpoint_quantiles,
    wp_assignment,
    wp_discrete_vs_normal,
    wp_empirical_1d,
    wp_sample_vs_normal,
    wp_sinkhorn,
)

P_GRID = [1, 1.5, 2, 3, 4, 6]


def brute_matching(X, Y, p):
    """Minimum over all permutations; only for tiny n."""
    from itertools import permutations

    n = len(X)
    best = math.inf
    for perm in permutations(range(n)):
        c = sum(np.linalg.norm(X[i] - Y[j]) ** p for i, j in enumerate(perm))
        best = min(best, c)
    return (best / n) ** (1 / p)


# empirical 1-D ----------------------------------------------------------------


def test_empirical_examples():
    xs = np.random.default_rng(0).normal(size=17)
    assert wp_empirical_1d(xs, xs, 2).distance == 0
    for p in P_GRID:
        assert abs(wp_empirical_1d([0, 1], [2, 3], p).distance - 2) <= 1e-14
    assert abs(wp_empirical_1d([2, 0], [3, 1], 2).distance - 1) <= 1e-14


def test_empirical_errors():
    with pytest.raises(ValueError):
        wp_empirical_1d([0, 1], [0], 1)
    with pytest.raises(ValueError):
        wp_empirical_1d([0, 1], [0, 1], 0.5)
    with pytest.raises(ValueError):
        wp_empirical_1d([0, np.nan], [0, 1], 1)


def test_result_invariant():
    r = wp_empirical_1d([0.0, 1.0, 5.0], [2.0, -1.0, 0.5], 3)
    assert r.method == "sorted_1d"
    assert abs(r.distance - r.plan_cost ** (1 / 3)) <= 1e-15
    assert r.distance >= 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=30), st.integers(0, 2**31))
def test_empirical_symmetric_and_matches_brute_force(xs, seed):
    ys = np.random.default_rng(seed).normal(size=len(xs))
    for p in (1, 2.5):
        a = wp_empirical_1d(xs, ys, p).distance
        assert a == wp_empirical_1d(ys, xs, p).distance
    if len(xs) <= 6:
        X, Y = np.array(xs)[:, None], ys[:, None]
        assert abs(wp_empirical_1d(xs, ys, 2).distance - brute_matching(X, Y, 2)) <= 1e-9 * max(1, abs(max(xs, key=abs)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**31))
def test_triangle_inequality(n, seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.standard_cauchy((3, n))
    for p in (1, 2, 3.5):
        ac = wp_empirical_1d(a, c, p).distance
        assert ac <= wp_empirical_1d(a, b, p).distance + wp_empirical_1d(b, c, p).distance + 1e-10 * max(1, ac)


# sample vs normal -------------------------------------------------------------


def test_sample_vs_normal_examples():
    n = 500
    q = normal_midpoint_quantiles(n)
    assert wp_sample_vs_normal(q, 2).distance == 0
    assert abs(wp_sample_vs_normal(q + 0.37, 1).distance - 0.37) <= 1e-12
    q_oracle = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    assert np.max(np.abs(q - q_oracle)) <= 1e-12
    with pytest.raises(ValueError):
        wp_sample_vs_normal([0.0], 1)
    with pytest.raises(ValueError):
        wp_sample_vs_normal([0.0, 1.0], 0.9)


def test_sample_vs_normal_gaussian_draws():
    xs = np.random.default_rng(12345).normal(size=100_000)
    assert wp_sample_vs_normal(xs, 2).distance <= 0.02


# discrete vs normal -----------------------------------------------------------


def quad_discrete_cost(values, probs, p):
    """Independent route: integrate |F^{-1}(u) - Phi^{-1}(u)|^p over u in slices."""
    order = np.argsort(values)
    v = np.asarray(values, float)[order]
    w = np.asarray(probs, float)[order]
    cum = np.concatenate([[0.0], np.cumsum(w)])
    cum[-1] = 1.0
    total = 0.0
    for k in range(len(v)):
        lo, hi = stats.norm.ppf(cum[k]), stats.norm.ppf(cum[k + 1])
        val, _ = integrate.quad(lambda z: abs(v[k] - z) ** p * stats.norm.pdf(z), lo, hi, epsabs=1e-13, limit=200)
        total += val
    return total


def test_discrete_examples():
    r = wp_discrete_vs_normal([0.0], [1.0], 1)
    assert abs(r.distance - math.sqrt(2 / math.pi)) <= 1e-9
    r = wp_discrete_vs_normal([-1.0, 1.0], [0.5, 0.5], 2)
    closed = math.sqrt(2 - 2 * math.sqrt(2 / math.pi))
    assert abs(r.distance**2 - closed**2) <= 1e-9
    n = 10_000
    q = normal_midpoint_quantiles(n)
    assert wp_discrete_vs_normal(q, np.full(n, 1 / n), 2).distance <= 1e-2


@pytest.mark.parametrize("p", [1, 1.5, 2, 3])
def test_discrete_against_quadrature(p):
    values = [-2.0, -0.5, 0.0, 1.2, 3.0]
    probs = [0.1, 0.3, 0.2, 0.25, 0.15]
    got = wp_discrete_vs_normal(values, probs, p).plan_cost
    assert abs(got - quad_discrete_cost(values, probs, p)) <= 1e-9


def test_discrete_errors():
    with pytest.raises(ValueError):
        wp_discrete_vs_normal([], [], 1)
    with pytest.raises(ValueError):
        wp_discrete_vs_normal([0.0], [1.0], 0.5)


def test_midpoint_lattice_refinement_strictly_decreasing():
    ds = []
    for k in range(6, 15):
        n = 2**k
        ds.append(wp_discrete_vs_normal(normal_midpoint_quantiles(n), np.full(n, 1 / n), 1).distance)
    assert all(b < a for a, b in zip(ds, ds[1:]))


# assignment -------------------------------------------------------------------


def test_assignment_examples():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 3))
    assert wp_assignment(X, X, 2).distance == 0
    v = np.array([0.3, -1.2, 2.0])
    for p in (1, 2, 3):
        assert abs(wp_assignment(X, X + v, p).distance - np.linalg.norm(v)) <= 1e-10
    a, b = rng.normal(size=(2, 60))
    for p in (1, 2, 4):
        exact = wp_empirical_1d(a, b, p).distance
        assert abs(wp_assignment(a[:, None], b[:, None], p).distance - exact) <= 1e-10


def test_assignment_against_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(10):
        X, Y = rng.normal(size=(2, 6, 2))
        for p in (1, 2):
            assert abs(wp_assignment(X, Y, p).distance - brute_matching(X, Y, p)) <= 1e-12


def test_assignment_errors():
    with pytest.raises(ValueError):
        wp_assignment(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(SizingError):
        wp_assignment(np.zeros((10, 1)), np.zeros((10, 1)), cap=8)


def test_assignment_symmetric_and_permutation_invariant():
    rng = np.random.default_rng(5)
    X, Y = rng.normal(size=(2, 80, 2))
    base = wp_assignment(X, Y, 2).distance
    assert base == wp_assignment(Y, X, 2).distance
    for _ in range(5):
        assert wp_assignment(X[rng.permutation(80)], Y[rng.permutation(80)], 2).distance == base


# sinkhorn ---------------------------------------------------------------------


def test_sinkhorn_identity_epsilon_sweep():
    X = np.random.default_rng(6).normal(size=(50, 2))
    ds = [wp_sinkhorn(X, X, 1, epsilon=eps).distance for eps in (1e-1, 1e-2, 1e-3)]
    assert ds[-1] <= 1e-6
    assert ds[0] >= ds[-1]


@pytest.mark.parametrize("seed", range(4))
def test_sinkhorn_upper_bounds_assignment(seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.normal(size=(2, 64, 2))
    for p in (1, 2):
        s = wp_sinkhorn(X, Y, p, epsilon=0.1, max_iter=50)
        assert s.distance >= wp_assignment(X, Y, p).distance - 1e-9
        assert s.iterations >= 1


def test_sinkhorn_close_to_assignment():
    rng = np.random.default_rng(7)
    X, Y = rng.normal(size=(2, 128, 2))
    s = wp_sinkhorn(X, Y, 1)
    exact = wp_assignment(X, Y, 1).distance
    assert abs(s.distance - exact) <= 0.05 * exact
    assert s.diagnostics["marginal_violation"] <= 1e-4


def test_sinkhorn_reports_nonconvergence():
    rng = np.random.default_rng(7)
    X, Y = rng.normal(size=(2, 32, 2))
    s = wp_sinkhorn(X, Y, 1, epsilon=1e-4, max_iter=3)
    assert not s.converged
    assert s.distance >= wp_assignment(X, Y, 1).distance - 1e-9


# properties across all five routes -------------------------------------------


def test_monotone_in_p_all_routes():
    rng = np.random.default_rng(8)
    a, b = rng.normal(size=(2, 64))
    X, Y = rng.normal(size=(2, 48, 2))
    xs = rng.laplace(size=300)
    routes = {
        "sorted_1d": lambda p: wp_empirical_1d(a, b, p).distance,
        "quantile": lambda p: wp_sample_vs_normal(xs, p).distance,
        "discrete": lambda p: wp_discrete_vs_normal([-1.0, 0.5, 2.0], [0.3, 0.6, 0.1], p).distance,
        "assignment": lambda p: wp_assignment(X, Y, p).distance,
        "sinkhorn": lambda p: wp_sinkhorn(X, Y, p).distance,
    }
    for name, f in routes.items():
        ds = [f(p) for p in P_GRID]
        assert all(y >= x - 1e-12 for x, y in zip(ds, ds[1:])), (name, ds)


def test_sample_type_invariants():
    s = Sample(np.zeros((5, 2)), seed=1, model_tag="t")
    assert s.reps == 5 and s.d == 2
    with pytest.raises(ValueError):
        Sample(np.array([[np.inf]]), seed=1, model_tag="t")
    with pytest.raises(ValueError):
        Sample(np.zeros((0, 1)), seed=1, model_tag="t")
