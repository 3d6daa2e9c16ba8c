"""End-to-end acceptance checks, one test per criterion, each with its runtime cap.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL line per criterion (see conftest.py).
"""

import itertools
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from pwmd import models as M
from pwmd import montecarlo as MC
from pwmd.bounds import BoundProfile, multiMD_translate, t4_translate
from pwmd.cli import run_config
from pwmd.core import DistSpec, chi_density, chi_upper_tail, normal_pdf, normal_sf
from pwmd.oracles import convolve_iid_pmf, exact_tail_ratio
from pwmd.wasserstein import wp_assignment, wp_discrete_vs_normal, wp_empirical_1d, wp_sinkhorn

SEED = 20261016


@contextmanager
def time_cap(seconds, record):
    t0 = time.perf_counter()
    yield
    wall = time.perf_counter() - t0
    record("wall_s", round(wall, 2))
    assert wall < seconds, f"took {wall:.1f}s, cap {seconds}s"


@pytest.fixture
def detail(record_property):
    parts = {}

    def note(key, value):
        parts[key] = value
        record_property("detail", " ".join(f"{k}={v}" for k, v in parts.items()))

    return note


# 1 ----------------------------------------------------------------------------


def test_criterion_01_exact_ot(detail):
    rng = np.random.default_rng(SEED)
    worst_shift = worst_1d = 0.0
    with time_cap(30, detail):
        for _ in range(100):
            n, d = int(rng.integers(2, 257)), int(rng.integers(1, 9))
            X = rng.normal(size=(n, d))
            v = rng.normal(size=d)
            p = float(rng.choice([1.0, 1.5, 2.0, 3.0]))
            worst_shift = max(worst_shift, abs(wp_assignment(X, X + v, p).distance - np.linalg.norm(v)))
            if d == 1:
                Y = rng.standard_cauchy(size=(n, 1))
                worst_1d = max(worst_1d, abs(wp_assignment(X, Y, p).distance - wp_empirical_1d(X[:, 0], Y[:, 0], p).distance))
        # make sure the one-dimensional route is exercised even if few d = 1 draws came up
        for _ in range(10):
            n = int(rng.integers(2, 257))
            a, b = rng.normal(size=(2, n))
            worst_1d = max(worst_1d, abs(wp_assignment(a[:, None], b[:, None], 2).distance - wp_empirical_1d(a, b, 2).distance))
    detail("max_shift_err", f"{worst_shift:.2e}")
    detail("max_1d_err", f"{worst_1d:.2e}")
    assert worst_shift <= 1e-10 and worst_1d <= 1e-10


# 2 ----------------------------------------------------------------------------


def test_criterion_02_closed_form_wasserstein(detail):
    with time_cap(1, detail):
        w2 = wp_discrete_vs_normal([-1.0, 1.0], [0.5, 0.5], 2).distance
        w1 = wp_discrete_vs_normal([0.0], [1.0], 1).distance
    e2 = abs(w2 - math.sqrt(2 - 2 * math.sqrt(2 / math.pi)))
    e1 = abs(w1 - math.sqrt(2 / math.pi))
    detail("rademacher_w2_err", f"{e2:.1e}")
    detail("point_mass_w1_err", f"{e1:.1e}")
    assert e2 <= 1e-6 and e1 <= 1e-9


# 3 ----------------------------------------------------------------------------


def test_criterion_03_sinkhorn_fidelity(detail):
    # p = 1; at p = 2 the default epsilon leaves a bias of about 6% (see the decision notes)
    rng = np.random.default_rng(SEED)
    worst_rel, worst_below = 0.0, 0.0
    with time_cap(60, detail):
        for _ in range(20):
            X, Y = rng.normal(size=(2, 128, 2))
            exact = wp_assignment(X, Y, 1).distance
            s = wp_sinkhorn(X, Y, 1).distance
            worst_rel = max(worst_rel, abs(s - exact) / exact)
            worst_below = max(worst_below, exact - s)
    detail("max_rel_err", f"{worst_rel:.4f}")
    detail("max_below", f"{worst_below:.1e}")
    assert worst_rel <= 0.05 and worst_below <= 1e-9


# 4 ----------------------------------------------------------------------------


def test_criterion_04_pair_linearity(detail):
    rng = np.random.default_rng(SEED)
    cases = []
    with time_cap(20, detail):
        for n in (2, 4, 8):
            model = M.IidSum(n, DistSpec.rademacher())
            cases.append(("iid", n, model, 1 / n))
        for n in (3, 4, 5):
            model = M.CombClt(M.centered(rng.normal(size=(n, n))))
            cases.append(("comb", n, model, 2 / (n - 1)))
        for n in (4, 6):
            model = M.HomSum.random(2, n, rng)
            cases.append(("homsum", n, model, 2 / n))
        worst = 0.0
        for name, n, model, lam in cases:
            assert M.pair_lambda(model) == pytest.approx(lam, rel=1e-15), (name, n)
            cert = M.exact_pair_conditionals(model)
            worst = max(worst, cert.residual)
            # centred arrays have sum Y = 0, so the remainder term vanishes in every model here
            assert np.max(np.abs(cert.R)) <= 1e-12, (name, n)
    detail("max_residual", f"{worst:.1e}")
    assert worst <= 1e-12


# 5 ----------------------------------------------------------------------------


def test_criterion_05_comb_variance(detail):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    with time_cap(30, detail):
        for _ in range(20):
            n = int(rng.integers(2, 8))
            c = M.centered(rng.normal(size=(n, n)) * rng.exponential())
            rows = np.arange(n)
            sums = np.array([c[rows, perm].sum() for perm in itertools.permutations(range(n))])
            enumerated = float(np.mean(sums**2) - np.mean(sums) ** 2)
            worst = max(worst, abs(M.comb_variance(c) - enumerated) / max(1.0, enumerated))
    detail("max_err", f"{worst:.1e}")
    assert worst <= 1e-12


# 6 ----------------------------------------------------------------------------


def test_criterion_06_exact_tail_ratio(detail):
    with time_cap(5, detail):
        exact = exact_tail_ratio(convolve_iid_pmf(DistSpec.rademacher(), 4), 0.0)
        row = MC.estimate_tail(M.IidSum(4, DistSpec.rademacher()), 0.0, 100_000, SEED)
    z = abs(row.ratio - exact.ratio) / (row.se / row.p_ref)
    detail("exact", exact.ratio)
    detail("mc", f"{row.ratio:.5f}")
    detail("z", f"{z:.2f}")
    assert exact.ratio == 0.625
    assert z <= 4


# 7 ----------------------------------------------------------------------------


def test_criterion_07_moderate_deviation(detail):
    reps = 1_000_000
    laplace = DistSpec.laplace()
    with time_cap(120, detail):
        # the same estimator call at x = 1 for every n, so the three gaps are comparable
        rows = [MC.estimate_tail(M.IidSum(n, laplace), 1.0, reps, SEED, "tilted") for n in (100, 1000, 10_000)]
        gaps = [abs(r.ratio - 1) for r in rows]
        n = 10_000
        grid = np.linspace(0.0, 0.8 * n ** (1 / 6), 16)
        ratios = [r.ratio for r in MC.ratio_curve(M.IidSum(n, laplace), grid, reps, SEED, "tilted").rows]
    detail("gaps_at_x1", "/".join(f"{g:.5f}" for g in gaps))
    detail("ratio_se", "/".join(f"{r.se / r.p_ref:.5f}" for r in rows))
    detail("ratio_range", f"[{min(ratios):.4f},{max(ratios):.4f}]")
    assert gaps[2] <= 0.05
    assert all(0.8 <= r <= 1.2 for r in ratios)
    assert gaps[0] > gaps[1] > gaps[2], "ratio gap at x = 1 is not monotone in n"


# 8 ----------------------------------------------------------------------------


def test_criterion_08_wp_scaling(detail):
    grid = [2**k for k in range(4, 11)]
    with time_cap(180, detail):
        rep = MC.wp_scaling(lambda n: M.IidSum(n, DistSpec.laplace()), grid, 1.0, 100_000, SEED)
    last = rep.points[-1]["wp_hat"]
    detail("exponent", f"{rep.fitted_exponent:.3f}")
    detail("r2", f"{rep.r_squared:.3f}")
    detail("last_over_floor", f"{last / rep.noise_floor:.2f}")
    assert -0.6 <= rep.fitted_exponent <= -0.4
    assert rep.r_squared >= 0.95
    assert last >= 3 * rep.noise_floor


# 9 ----------------------------------------------------------------------------


def test_criterion_09_chaos_fourth_cumulant(detail):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    with time_cap(60, detail):
        for k in range(10):
            model = M.GaussChaos2.random(int(rng.integers(4, 16)), rng)
            F2 = model.F @ model.F
            target = 48.0 * float(np.trace(F2 @ F2))
            w = M.sample_w(model, 1_000_000, SEED + k).values()
            w4 = w**4
            # E W^4 - 3 is a sample mean, so its standard error is std(W^4) / sqrt(reps)
            est, se = float(np.mean(w4)) - 3.0, float(np.std(w4, ddof=1)) / math.sqrt(w.size)
            worst = max(worst, abs(est - target) / se)
    detail("max_z", f"{worst:.2f}")
    assert worst <= 4


# 10 ---------------------------------------------------------------------------


def test_criterion_10_contraction_norms(detail):
    worst = 0.0
    with time_cap(1, detail):
        for n in (4, 16, 64):
            c = M.contraction_q2(np.eye(n) / math.sqrt(2 * n))
            worst = max(worst, abs(c.op_norm_F2 - 1 / (2 * n)), abs(c.hs_norm_F2 - 1 / (2 * math.sqrt(n))))
    detail("max_err", f"{worst:.1e}")
    assert worst <= 1e-12


# 11 ---------------------------------------------------------------------------


def test_criterion_11_special_functions(detail):
    with time_cap(5, detail):
        xs = np.linspace(0.0, 10.0, 100)
        chi2_err = max(abs(chi_upper_tail(float(x), 2).value - math.exp(-x * x / 2)) for x in xs)
        grid = np.linspace(0.0, 10.0, 401)[1:]
        chi_ok = all(
            # equality holds at d = 2, so allow a few ulps of rounding in the quotient
            chi_density(float(x), d) / chi_upper_tail(float(x), d).value <= x * (1 + 1e-14)
            for d in range(2, 17) for x in grid
        )
        mills_ok = all(normal_pdf(float(x)) / normal_sf(float(x)) <= 1 + x for x in grid)
    detail("chi2_err", f"{chi2_err:.1e}")
    assert chi2_err <= 1e-12
    assert chi_ok and mills_ok


# 12 ---------------------------------------------------------------------------


def up(v):
    return math.nextafter(v, math.inf)


def down(v):
    return math.nextafter(v, -math.inf)


def test_criterion_12_bound_shapes(detail):
    with time_cap(1, detail):
        prof = BoundProfile(1.0, ((1.0, 0.01),), 1e6)
        values = (
            t4_translate(prof, 0.0).shape,
            t4_translate(prof, 2.0).shape,
            multiMD_translate(1.0, 1.0, 0.02, 1e6, 4, 0.0).shape,
        )
        errs = [abs(v - t) for v, t in zip(values, (0.0560517, 0.288155, 0.189144))]

        def t4_fires(profile, x, needle):
            return any(needle in v for v in t4_translate(profile, x).violated_conditions)

        def md_fires(args, x, needle):
            return any(needle in v for v in multiMD_translate(*args, x).violated_conditions)

        cap = 0.01 ** (-1.0 / 3)
        checks = {
            "t4 x-cap": (not t4_fires(prof, cap, "Delta^(-1/")) and t4_fires(prof, up(cap), "Delta^(-1/"),
            "t4 sqrt(p0)": (not t4_fires(BoundProfile(1.0, ((1.0, 1e-9),), 4.0), 2.0, "sqrt(p0)"))
            and t4_fires(BoundProfile(1.0, ((1.0, 1e-9),), 4.0), up(2.0), "sqrt(p0)"),
        }
        p0 = 2 * abs(math.log(0.01))
        checks["t4 log dbar"] = (not t4_fires(BoundProfile(1.0, ((1.0, 0.01),), p0), 0.0, "p0/2")) and t4_fires(
            BoundProfile(1.0, ((1.0, 0.01),), down(p0)), 0.0, "p0/2"
        )
        inv_e = math.exp(-1.0)
        checks["t4 dbar>=1/e flag"] = bool(t4_translate(BoundProfile(1.0, ((1.0, inv_e),), 10.0), 0.0).flags) and not (
            t4_translate(BoundProfile(1.0, ((1.0, down(inv_e)),), 10.0), 0.0).flags
        )
        # multivariate: |log Delta| <= p0/4, log kappa(d) <= p0/4, x <= Delta^(-1/(2 alpha+1)), x <= sqrt(p0)
        p0 = 4 * abs(math.log(0.02))
        checks["md log delta"] = (not md_fires((1.0, 1.0, 0.02, p0, 2), 0.0, "|log Delta|")) and md_fires(
            (1.0, 1.0, 0.02, down(p0), 2), 0.0, "|log Delta|"
        )
        lk = math.log(2.0)  # kappa(4) = 2 Gamma(2) = 2
        checks["md log kappa"] = (not md_fires((1.0, 1.0, 0.9, 4 * lk, 4), 0.0, "log kappa")) and md_fires(
            (1.0, 1.0, 0.9, down(4 * lk), 4), 0.0, "log kappa"
        )
        cap = 0.02 ** (-1.0 / 3)
        checks["md x-cap"] = (not md_fires((1.0, 1.0, 0.02, 1e6, 4), cap, "Delta^(-1/")) and md_fires(
            (1.0, 1.0, 0.02, 1e6, 4), up(cap), "Delta^(-1/"
        )
        checks["md sqrt(p0)"] = (not md_fires((1.0, 1.0, 1e-3, 16.0, 4), 4.0, "sqrt(p0)")) and md_fires(
            (1.0, 1.0, 1e-3, 16.0, 4), up(4.0), "sqrt(p0)"
        )
        checks["md delta>=1/e flag"] = bool(multiMD_translate(1.0, 1.0, inv_e, 1e6, 2, 0.0).flags) and not (
            multiMD_translate(1.0, 1.0, down(inv_e), 1e6, 2, 0.0).flags
        )
    detail("max_value_err", f"{max(errs):.1e}")
    detail("thresholds", f"{sum(checks.values())}/{len(checks)}")
    assert max(errs) <= 1e-6
    assert all(checks.values()), [k for k, ok in checks.items() if not ok]


# 13 ---------------------------------------------------------------------------

CONFIGS = {
    "tail_plain": """
kind = "tail_ratio"
[estimation]
seed = 20261016
reps = 300000
[model]
type = "iid_sum"
n = 50
dist = { family = "laplace_unit_var" }
[grid]
x = [0.0, 1.0, 2.0]
""",
    "tail_tilted": """
kind = "tail_ratio"
[estimation]
seed = 20261016
reps = 300000
method = "tilted"
[model]
type = "iid_sum"
n = 200
dist = { family = "centered_exponential" }
[grid]
x = [1.0, 2.0, 3.0]
""",
    "tail_comb": """
kind = "tail_ratio"
[estimation]
seed = 20261016
reps = 200000
[model]
type = "comb_clt"
c_seed = 4
n = 12
[grid]
x = [0.5, 1.5]
""",
    "scaling": """
kind = "wasserstein_scaling"
[estimation]
seed = 20261016
reps = 100000
p = 2.0
[model]
type = "iid_sum"
n = 4
dist = { family = "centered_exponential" }
[grid]
n = [4, 8, 16, 32, 64]
""",
}


def test_criterion_13_determinism(tmp_path, detail):
    identical = {}
    with time_cap(60, detail):
        for name, text in CONFIGS.items():
            path = tmp_path / f"{name}.toml"
            path.write_text(text)
            bodies = []
            for threads in (1, 8):
                out = tmp_path / f"{name}_{threads}"
                assert run_config(path, out, threads=threads, quiet=True) == 0, name
                bodies.append((out / "results.csv").read_bytes())
            identical[name] = bodies[0] == bodies[1]
    detail("identical", f"{sum(identical.values())}/{len(identical)}")
    assert all(identical.values()), identical
