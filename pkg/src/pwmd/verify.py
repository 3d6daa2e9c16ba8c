"""Desk-scale invariant checks for every module, run by ``pwmd verify``.

Each check returns ``(ok, detail)``. Module functions are looked up through
their module objects at call time so that a patched implementation is the
one being checked.
"""

from __future__ import annotations

import itertools
import math
import tempfile
import time
from pathlib import Path

import numpy as np
from scipy import stats

from . import bounds as B
from . import core as C
from . import models as M
from . import montecarlo as MC
from . import oracles as O
from . import wasserstein as WS

CHECKS = []


def check(tag: str):
    def deco(fn):
        CHECKS.append((tag, fn.__name__, fn))
        return fn

    return deco


# core -----------------------------------------------------------------------


@check("core")
def chi2_tail_identity():
    xs = np.linspace(0.0, 10.0, 100)
    err = max(abs(C.chi_upper_tail(x, 2).value - math.exp(-x * x / 2)) for x in xs)
    return err <= 1e-12, f"max abs error {err:.2e}"


@check("core")
def hazard_inequalities():
    xs = np.linspace(0.01, 10.0, 200)
    worst = 0.0
    for x in xs:
        worst = max(worst, C.normal_pdf(x) / C.normal_sf(x) - (1 + x))
        for d in range(2, 17):
            r = C.chi_density(x, d) / C.chi_upper_tail(x, d).value
            worst = max(worst, r - x * (1 + 1e-12))
    return worst <= 0, f"largest excess {worst:.2e}"


@check("core")
def orlicz_closed_forms():
    r = C.orlicz_norm(C.DistSpec.rademacher(), 1.0)
    g = C.orlicz_norm(C.DistSpec.gaussian(), 2.0)
    e1, e2 = abs(r - 1 / math.log(2)), abs(g - math.sqrt(8 / 3))
    return max(e1, e2) <= 1e-9, f"rademacher psi1 err {e1:.1e}, gaussian psi2 err {e2:.1e}"


# wasserstein -----------------------------------------------------------------


@check("wasserstein")
def assignment_translation():
    rng = M.rng_stream(11)
    worst = 0.0
    for _ in range(20):
        n, d = int(rng.integers(2, 65)), int(rng.integers(1, 5))
        X = rng.standard_normal((n, d))
        v = rng.standard_normal(d) * 0.3
        worst = max(worst, abs(WS.wp_assignment(X, X + v).distance - np.linalg.norm(v)))
        if d == 1:
            Y = rng.standard_normal((n, 1))
            a = WS.wp_assignment(X, Y, 2).distance
            b = WS.wp_empirical_1d(X, Y, 2).distance
            worst = max(worst, abs(a - b))
    return worst <= 1e-10, f"max error {worst:.1e}"


@check("wasserstein")
def discrete_closed_forms():
    a = WS.wp_discrete_vs_normal([-1, 1], [0.5, 0.5], 2).distance
    b = WS.wp_discrete_vs_normal([0.0], [1.0], 1).distance
    ea = abs(a - math.sqrt(2 - 2 * math.sqrt(2 / math.pi)))
    eb = abs(b - math.sqrt(2 / math.pi))
    return ea <= 1e-6 and eb <= 1e-9, f"rademacher err {ea:.1e}, point mass err {eb:.1e}"


@check("wasserstein")
def sinkhorn_upper_bound():
    rng = M.rng_stream(12)
    worst_rel, worst_below = 0.0, 0.0
    for _ in range(3):
        X, Y = rng.standard_normal((64, 2)), rng.standard_normal((64, 2)) + 0.5
        exact = WS.wp_assignment(X, Y).distance
        approx = WS.wp_sinkhorn(X, Y).distance
        worst_rel = max(worst_rel, abs(approx - exact) / exact)
        worst_below = max(worst_below, exact - approx)
    return worst_rel <= 0.05 and worst_below <= 1e-9, f"max rel err {worst_rel:.3f}"


# models ----------------------------------------------------------------------


@check("models")
def pair_linearity_exact():
    cases = [M.IidSum(n, C.DistSpec.rademacher()) for n in (2, 4, 8)]
    cases += [M.CombClt(M.centered(M.rng_stream(3, n).random((n, n)))) for n in (3, 4, 5)]
    cases += [M.HomSum.perfect_matching(n) for n in (4, 6)]
    worst = max(M.exact_pair_conditionals(m, 2).residual for m in cases)
    return worst <= 1e-12, f"max residual {worst:.1e}"


@check("models")
def comb_variance_enumeration():
    rng = M.rng_stream(5)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 8))
        c = M.centered(rng.standard_normal((n, n)))
        perms = np.array(list(itertools.permutations(range(n))))
        s = c[np.arange(n), perms].sum(axis=1)
        enum_var = float(np.mean((s - s.mean()) ** 2))
        worst = max(worst, abs(M.comb_variance(c) - enum_var))
    return worst <= 1e-12, f"max |B_n^2 - enumerated Var(S)| {worst:.1e}"


@check("models")
def exchangeability():
    reps = 100_000
    thr = 1.63 * math.sqrt(2.0 / reps)
    worst = 0.0
    models = [
        M.IidSum(10, C.DistSpec.laplace()),
        M.CombClt(M.centered(M.rng_stream(4).random((6, 6)))),
        M.HomSum.perfect_matching(8),
    ]
    for k, m in enumerate(models):
        a = M.draw_pairs(m, reps, 100 + k)
        b = M.draw_pairs(m, reps, 200 + k)
        ks = stats.ks_2samp(a.w + 2 * a.w_prime, b.w_prime + 2 * b.w).statistic
        worst = max(worst, ks / thr)
    return worst <= 1.0, f"max KS / threshold {worst:.2f}"


@check("models")
def gauss_chaos_variance():
    m = M.GaussChaos2.random(12, M.rng_stream(6))
    w = M.sample_w(m, 1_000_000, 7).values()
    var = float(np.mean(w * w))
    se = float(np.std(w * w) / math.sqrt(w.size))
    return abs(var - 1) <= 4 * se, f"variance {var:.5f} (se {se:.5f})"


@check("models")
def dependency_groups_independent():
    ok = True
    for m in (M.MDep(30, 3), M.GraphDep(12, [(i, (i + 1) % 12) for i in range(12)] + [(0, 6)])):
        st = M.dependency_stats(m)
        for g in st.groups:
            for i, j in itertools.combinations(g, 2):
                ok &= j not in st.neighborhoods[i]
    return ok, "all groups are independent sets" if ok else "a group contains neighbours"


# bounds ----------------------------------------------------------------------


@check("bounds")
def translate_examples():
    pr = B.BoundProfile(1.0, [(1.0, 0.01)], 1e6)
    vals = [B.t4_translate(pr, 0).shape, B.t4_translate(pr, 2).shape,
            B.multiMD_translate(1, 1, 0.02, 1e6, 4, 0).shape]
    want = [0.0560517, 0.288155, 0.189144]
    err = max(abs(a - b) for a, b in zip(vals, want))
    cap = 0.01 ** (-1 / 3)
    flags = B.t4_translate(pr, cap).feasible and not B.t4_translate(pr, math.nextafter(cap, 10)).feasible
    return err <= 1e-6 and flags, f"max error {err:.1e}, range flag exact: {flags}"


@check("bounds")
def translate_monotone():
    ok = True
    for delta in (1e-4, 1e-2, 0.2):
        pr = B.BoundProfile(1.0, [(1.0, delta), (0.5, delta / 2)], 1e6)
        s = [B.t4_translate(pr, x).shape for x in np.linspace(0, 5, 51)]
        ok &= all(b >= a for a, b in zip(s, s[1:]))
    for x in (0.0, 1.0, 3.0):
        s = [B.t4_translate(B.BoundProfile(1, [(1.0, d)], 1e6), x).shape for d in np.geomspace(1e-6, 0.3, 40)]
        ok &= all(b >= a for a, b in zip(s, s[1:]))
        ok &= B.multiMD_translate(1, 0, 0.05, 1e6, 2, x).shape == (1 + x) * 0.05
    return ok, "monotone in x and Delta; d=2, alpha=0 reduction exact"


@check("bounds")
def certificate_monotone_in_p():
    cert = M.exact_pair_conditionals(M.CombClt(M.centered(M.rng_stream(8).random((5, 5)))), 1)
    s = [B.certificate_bound(cert, p).shape for p in (1, 2, 4, 8)]
    return all(b >= a for a, b in zip(s, s[1:])), "shapes " + ", ".join(f"{v:.4g}" for v in s)


# oracles ---------------------------------------------------------------------


@check("oracles")
def convolution_associativity():
    dist = C.DistSpec.lattice([-1, 0, 2], [0.3, 0.5, 0.2])
    worst = 0.0
    for a, b in ((2, 2), (1, 3)):
        pa, pb = O.convolve_iid_pmf(dist, a), O.convolve_iid_pmf(dist, b)
        vals = (pa.values[:, None] * math.sqrt(a) + pb.values[None, :] * math.sqrt(b)) / math.sqrt(a + b)
        joint = O.ExactPmf.from_atoms(vals.ravel(), np.outer(pa.probs, pb.probs).ravel())
        direct = O.convolve_iid_pmf(dist, a + b)
        if joint.size != direct.size:
            return False, "supports differ"
        worst = max(worst, float(np.max(np.abs(joint.probs - direct.probs))),
                    float(np.max(np.abs(joint.values - direct.values))))
    return worst <= 1e-12, f"max atom difference {worst:.1e}"


@check("oracles")
def pmf_normalisation():
    pmfs = [O.convolve_iid_pmf(C.DistSpec.rademacher(), 9),
            O.enumerate_comb(M.centered(M.rng_stream(9).random((6, 6)))),
            O.enumerate_homsum(M.HomSum.perfect_matching(10))]
    worst = max(max(abs(p.probs.sum() - 1), abs(p.mean), abs(p.variance - 1)) for p in pmfs)
    return worst <= 1e-12, f"max deviation {worst:.1e}"


@check("oracles")
def rademacher_ratio():
    r = O.exact_tail_ratio(O.convolve_iid_pmf(C.DistSpec.rademacher(), 4), 0.0)
    return r.ratio == 0.625, f"ratio {r.ratio!r}"


# montecarlo ------------------------------------------------------------------


@check("montecarlo")
def thread_determinism():
    m = M.IidSum(30, C.DistSpec.laplace())
    a = MC.ratio_curve(m, [0.5, 1.5], 150_000, 3, "tilted", threads=1).to_records()
    b = MC.ratio_curve(m, [0.5, 1.5], 150_000, 3, "tilted", threads=8).to_records()
    return a == b, "identical reports" if a == b else "reports differ"


@check("montecarlo")
def tilted_unbiased_lattice():
    n = 64
    dist = C.DistSpec.lattice([-1, 0, 2], [0.3, 0.5, 0.2])
    x = n ** (1 / 6)
    exact = O.convolve_iid_pmf(dist, n).tail(x)
    r = MC.estimate_tail(M.IidSum(n, dist), x, 100_000, 13, "tilted")
    return abs(r.p_hat - exact) <= 4 * r.se, f"estimate {r.p_hat:.6g} vs exact {exact:.6g} (se {r.se:.2g})"


@check("montecarlo")
def ratio_consistency():
    rep = MC.ratio_curve(M.IidSum(5, C.DistSpec.rademacher()), [0.0, 0.7, 1.4], 20_000, 4)
    ok = all(abs(r.ratio - r.p_hat / r.p_ref) <= 1e-15 * abs(r.ratio) for r in rep.rows)
    return ok, "ratio = p_hat / p_ref"


# cli ------------------------------------------------------------------------


@check("cli")
def config_rerun_identical():
    from .cli import run_config

    cfg = (
        'kind = "tail_ratio"\n[model]\ntype = "iid_sum"\nn = 4\n'
        '[grid]\nx = [0.0, 1.0]\n[estimation]\nreps = 20000\nseed = 1\n'
    )
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "c.toml"
        path.write_text(cfg)
        outs = []
        for k, threads in enumerate((1, 8)):
            out = Path(tmp) / f"o{k}"
            code = run_config(path, out_dir=out, threads=threads, quiet=True)
            outs.append((code, (out / "results.csv").read_bytes()))
        from .config import ExperimentConfig
        import json

        manifest = json.loads((Path(tmp) / "o0" / "manifest.json").read_text())
        ExperimentConfig.model_validate(manifest["config"])
    ok = outs[0][0] == 0 and outs[0] == outs[1]
    return ok, "byte-identical CSV across thread counts; manifest round-trips"


def run_checks(filter_tag: str | None = None) -> list:
    """Run every check (or those whose tag matches); return (tag, name, ok, detail, seconds) rows."""
    rows = []
    for tag, name, fn in CHECKS:
        if filter_tag is not None and tag != filter_tag:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        rows.append((tag, name, bool(ok), detail, time.perf_counter() - t0))
    return rows


def run(filter_tag: str | None = None, echo=print) -> bool:
    """Run the checks, print a pass/fail table and return True iff all passed."""
    rows = run_checks(filter_tag)
    if not rows:
        echo(f"no checks match {filter_tag!r}")
        return False
    for tag, name, ok, detail, secs in rows:
        echo(f"{'PASS' if ok else 'FAIL'}  {tag:<12} {name:<32} {secs:6.2f}s  {detail}")
    return all(r[2] for r in rows)
