"""Model zoo: samplers for W, exchangeable pairs, and structural statistics.

Every model yields a standardised W (mean 0, unit variance, or identity
covariance for the multivariate sum). Random streams are derived from
``(seed, block)`` with a counter-based generator, and replications are
processed in fixed-size blocks, so results do not depend on how many
worker threads are used.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .core import DistSpec
from .errors import CapabilityError, ModelError, SizingError
from .wasserstein import Sample

BLOCK = 1 << 16


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox stream for (seed, *key)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def run_blocks(fn, reps: int, seed: int, block: int = BLOCK, threads: int = 1, stream: int = 0):
    """Evaluate ``fn(rng, m)`` over fixed-size blocks and concatenate in order."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    sizes = [min(block, reps - s) for s in range(0, reps, block)]

    def one(b):
        return fn(rng_stream(seed, stream, b), sizes[b])

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(len(sizes))))
    else:
        parts = [one(b) for b in range(len(sizes))]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(col) for col in zip(*parts))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# model variants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IidSum:
    """W = (X_1 + ... + X_n) / sqrt(n) with i.i.d. standardised summands."""

    n: int
    dist: DistSpec
    tag = "iid_sum"

    def __post_init__(self):
        if self.n < 1:
            raise ModelError("n must be >= 1")

    @property
    def summand(self) -> DistSpec:
        return self.dist.standardized()

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.n)

    d = 1


@dataclass(frozen=True)
class MultiIid:
    """W = n^{-1/2} sum X_i in R^d, coordinates i.i.d. copies of one law."""

    n: int
    d: int
    dist: DistSpec
    tag = "multi_iid"

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ModelError("n and d must be >= 1")

    @property
    def summand(self) -> DistSpec:
        return self.dist.standardized()


@dataclass(eq=False)
class CombClt:
    """S = sum_i X_{i, pi(i)} over a uniform permutation, W = S / B_n.

    X_ij = c_ij + sigma_ij * xi_ij with xi_ij i.i.d. standardised `noise`.
    ``sigma2 = None`` means a deterministic array.
    """

    c: np.ndarray
    sigma2: np.ndarray | None = None
    noise: DistSpec = field(default_factory=DistSpec.gaussian)
    tag = "comb_clt"
    d = 1

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.shape[0]
        if self.c.ndim != 2 or self.c.shape != (n, n) or n < 2:
            raise ModelError("c must be a square matrix with n >= 2")
        if self.sigma2 is None:
            self.sigma2 = np.zeros_like(self.c)
        self.sigma2 = np.asarray(self.sigma2, dtype=float)
        if self.sigma2.shape != self.c.shape or np.any(self.sigma2 < 0):
            raise ModelError("sigma2 must be a nonnegative matrix shaped like c")
        _check_centered(self.c)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def deterministic(self) -> bool:
        return not np.any(self.sigma2 > 0)

    @property
    def b2(self) -> float:
        return comb_variance(self.c, self.sigma2)


@dataclass(eq=False)
class HomSum:
    """W = sum over [n]^q of f(i_1..i_q) X_{i_1}...X_{i_q}.

    `f` is stored once per index set as sorted tuples ``idx`` (E x q, strictly
    increasing rows) with values ``vals``; the full symmetric tensor takes
    that value on all q! orderings and vanishes on diagonals.
    """

    q: int
    n: int
    idx: np.ndarray
    vals: np.ndarray
    dist: DistSpec = field(default_factory=DistSpec.rademacher)
    tag = "hom_sum"
    d = 1

    def __post_init__(self):
        self.idx = np.asarray(self.idx, dtype=np.int64).reshape(-1, self.q)
        self.vals = np.asarray(self.vals, dtype=float).ravel()
        if self.q < 2:
            raise ModelError("q must be >= 2")
        if self.idx.shape[0] != self.vals.size:
            raise ModelError("idx and vals disagree in length")
        if self.idx.size and (self.idx.min() < 0 or self.idx.max() >= self.n):
            raise ModelError("index out of range")
        if self.idx.size and np.any(np.diff(self.idx, axis=1) <= 0):
            raise ModelError("index tuples must be strictly increasing (vanishing diagonals)")
        if len({tuple(r) for r in self.idx.tolist()}) != self.idx.shape[0]:
            raise ModelError("duplicate index tuples")
        var = math.factorial(self.q) ** 2 * float(np.dot(self.vals, self.vals))
        if abs(var - 1.0) > 1e-10:
            raise ModelError(f"q! * ||f||^2 must equal 1, got {var:.12g}")

    @classmethod
    def from_matrix(cls, F, dist: DistSpec | None = None, normalize: bool = False) -> "HomSum":
        F = np.asarray(F, dtype=float)
        n = F.shape[0]
        if not np.allclose(F, F.T, atol=1e-12) or np.any(np.diag(F) != 0):
            raise ModelError("F must be symmetric with zero diagonal")
        iu = np.triu_indices(n, 1)
        keep = F[iu] != 0
        idx = np.stack([iu[0][keep], iu[1][keep]], axis=1)
        vals = F[iu][keep]
        if normalize:
            vals = vals / (2.0 * np.linalg.norm(vals))
        return cls(2, n, idx, vals, dist or DistSpec.rademacher())

    @classmethod
    def perfect_matching(cls, n: int, dist: DistSpec | None = None) -> "HomSum":
        if n % 2:
            raise ModelError("perfect matching needs even n")
        idx = np.arange(n).reshape(-1, 2)
        vals = np.full(n // 2, 1.0 / math.sqrt(2 * n))
        return cls(2, n, idx, vals, dist or DistSpec.rademacher())

    @classmethod
    def random(cls, q: int, n: int, rng: np.random.Generator, dist: DistSpec | None = None,
               density: float = 1.0) -> "HomSum":
        combos = np.array(list(itertools.combinations(range(n), q)), dtype=np.int64)
        keep = rng.random(len(combos)) < density
        keep[0] = True
        combos = combos[keep]
        vals = rng.standard_normal(len(combos))
        vals /= math.factorial(q) * np.linalg.norm(vals)
        return cls(q, n, combos, vals, dist or DistSpec.rademacher())

    def matrix(self) -> np.ndarray:
        if self.q != 2:
            raise CapabilityError("matrix form only for q = 2")
        F = np.zeros((self.n, self.n))
        F[self.idx[:, 0], self.idx[:, 1]] = self.vals
        return F + F.T

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """W for each row of X (reps x n)."""
        X = np.atleast_2d(X)
        if self.q == 2 and self.n <= 4096:
            F = self.matrix()
            return np.einsum("ri,ri->r", X @ F, X)
        qf = math.factorial(self.q)
        out = np.empty(X.shape[0])
        step = max(1, (1 << 22) // max(1, self.vals.size * self.q))
        for s in range(0, X.shape[0], step):
            prods = X[s : s + step][:, self.idx].prod(axis=2)
            out[s : s + step] = qf * (prods @ self.vals)
        return out

    @property
    def summand(self) -> DistSpec:
        return self.dist.standardized()


@dataclass(eq=False)
class GaussChaos2:
    """W = X^T F X with X ~ N(0, I_n), F symmetric, zero diagonal, 2||F||_HS^2 = 1."""

    F: np.ndarray
    tag = "gauss_chaos2"
    d = 1

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=float)
        F = self.F
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise ModelError("F must be square")
        if not np.allclose(F, F.T, atol=1e-12, rtol=0):
            raise ModelError("F must be symmetric")
        if np.any(np.abs(np.diag(F)) > 1e-12):
            raise ModelError("F must have zero diagonal")
        if abs(2.0 * float(np.sum(F * F)) - 1.0) > 1e-10:
            raise ModelError("2 ||F||_HS^2 must equal 1")

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "GaussChaos2":
        A = rng.standard_normal((n, n))
        F = A + A.T
        np.fill_diagonal(F, 0.0)
        F /= math.sqrt(2.0) * np.linalg.norm(F)
        return cls(F)

    @classmethod
    def perfect_matching(cls, n: int) -> "GaussChaos2":
        F = np.zeros((n, n))
        for k in range(n // 2):
            F[2 * k, 2 * k + 1] = F[2 * k + 1, 2 * k] = 1.0 / math.sqrt(2 * n)
        return cls(F)


@dataclass(eq=False)
class MDep:
    """Moving window X_i = sum_k kernel[k] xi_{i+k}, k = 0..m (m-dependent)."""

    n: int
    m: int
    kernel: tuple = None
    dist: DistSpec = field(default_factory=DistSpec.gaussian)
    tag = "m_dep"
    d = 1

    def __post_init__(self):
        if self.n < 2 or self.m < 0:
            raise ModelError("need n >= 2 and m >= 0")
        if self.kernel is None:
            self.kernel = (1.0,) * (self.m + 1)
        self.kernel = tuple(float(k) for k in self.kernel)
        if len(self.kernel) != self.m + 1:
            raise ModelError("kernel needs m + 1 coefficients")
        if self.weights_norm2 <= 0:
            raise ModelError("degenerate kernel")

    @property
    def weights(self) -> np.ndarray:
        """Coefficient of xi_j in X_1 + ... + X_n."""
        return np.convolve(np.ones(self.n), np.asarray(self.kernel))

    @property
    def weights_norm2(self) -> float:
        w = self.weights
        return float(np.dot(w, w))

    def neighbors(self, i: int) -> set:
        return set(range(max(0, i - self.m), min(self.n, i + self.m + 1)))


@dataclass(eq=False)
class GraphDep:
    """X_i = xi_i + sum over edges e containing i of eta_e; dependency graph = the graph."""

    n: int
    edges: tuple
    dist: DistSpec = field(default_factory=DistSpec.gaussian)
    tag = "graph_dep"
    d = 1

    def __post_init__(self):
        clean = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b or not (0 <= a < self.n and 0 <= b < self.n):
                raise ModelError(f"bad edge ({a}, {b})")
            clean.add((min(a, b), max(a, b)))
        self.edges = tuple(sorted(clean))
        self._adj = [set() for _ in range(self.n)]
        for a, b in self.edges:
            self._adj[a].add(b)
            self._adj[b].add(a)

    def neighbors(self, i: int) -> set:
        return {i} | self._adj[i]

    @property
    def max_degree(self) -> int:
        return max((len(a) for a in self._adj), default=0)


Model = Union[IidSum, MultiIid, CombClt, HomSum, GaussChaos2, MDep, GraphDep]


def _check_centered(c: np.ndarray, tol: float = 1e-10) -> None:
    if np.max(np.abs(c.mean(axis=1))) > tol or np.max(np.abs(c.mean(axis=0))) > tol:
        raise ModelError("c must have centred rows and columns")


def centered(c) -> np.ndarray:
    """Double-centre a matrix so that every row and column mean is 0."""
    c = np.asarray(c, dtype=float)
    return c - c.mean(axis=1, keepdims=True) - c.mean(axis=0, keepdims=True) + c.mean()


# ---------------------------------------------------------------------------
# sampling W
# ---------------------------------------------------------------------------


def comb_variance(c, sigma2=None) -> float:
    """Var(S) = sum c_ij^2 / (n - 1) + sum sigma_ij^2 / n."""
    c = np.asarray(c, dtype=float)
    _check_centered(c)
    n = c.shape[0]
    s2 = 0.0 if sigma2 is None else float(np.sum(sigma2))
    return float(np.sum(c * c)) / (n - 1) + s2 / n


def _block_sampler(model):
    if isinstance(model, IidSum):
        x, n = model.summand, model.n
        return lambda rng, m: x.sample_sum(rng, n, m) / math.sqrt(n)
    if isinstance(model, MultiIid):
        x, n, d = model.summand, model.n, model.d
        return lambda rng, m: x.sample_sum(rng, n, m * d).reshape(m, d) / math.sqrt(n)
    if isinstance(model, CombClt):
        b2 = model.b2
        if b2 <= 0:
            raise ModelError("degenerate model: B_n^2 = 0")
        bn = math.sqrt(b2)
        n = model.n
        rows = np.arange(n)
        sig = np.sqrt(model.sigma2)
        noise = model.noise.standardized()
        stochastic = not model.deterministic

        def comb(rng, m):
            perm = rng.permuted(np.tile(rows, (m, 1)), axis=1)
            s = model.c[rows, perm].sum(axis=1)
            if stochastic:
                s = s + (sig[rows, perm] * noise.sample(rng, (m, n))).sum(axis=1)
            return s / bn

        return comb
    if isinstance(model, HomSum):
        x = model.summand
        return lambda rng, m: model.evaluate(x.sample(rng, (m, model.n)))
    if isinstance(model, GaussChaos2):
        F = model.F
        return lambda rng, m: _quad_form(rng.standard_normal((m, model.n)), F)
    if isinstance(model, MDep):
        w = model.weights / math.sqrt(model.weights_norm2)
        x = model.dist.standardized()
        return lambda rng, m: _chunked_linear(rng, x, w, m)
    if isinstance(model, GraphDep):
        x = model.dist.standardized()
        coef = np.concatenate([np.ones(model.n), np.full(len(model.edges), 2.0)])
        coef /= np.linalg.norm(coef)
        return lambda rng, m: _chunked_linear(rng, x, coef, m)
    raise CapabilityError(f"no sampler for {type(model).__name__}")


def _quad_form(X, F):
    return np.einsum("ri,ri->r", X @ F, X)


def _chunked_linear(rng, x: DistSpec, w: np.ndarray, m: int) -> np.ndarray:
    out = np.empty(m)
    step = max(1, (1 << 21) // w.size)
    for s in range(0, m, step):
        k = min(step, m - s)
        out[s : s + k] = x.sample(rng, (k, w.size)) @ w
    return out


def model_dim(model) -> int:
    return getattr(model, "d", 1)


def sample_w(model: Model, reps: int, seed: int, threads: int = 1, stream: int = 0) -> Sample:
    """`reps` i.i.d. draws of the standardised W, deterministic in (`seed`, `stream`)."""
    fn = _block_sampler(model)
    data = run_blocks(fn, reps, seed, threads=threads, stream=2 * stream)
    return Sample(data, seed, model.tag)


# ---------------------------------------------------------------------------
# exchangeable pairs
# ---------------------------------------------------------------------------


@dataclass
class PairDraw:
    w: np.ndarray
    w_prime: np.ndarray
    d_increment: np.ndarray
    aux: dict


def pair_lambda(model) -> float:
    if isinstance(model, (IidSum, MultiIid)):
        return 1.0 / model.n
    if isinstance(model, CombClt):
        return 2.0 / (model.n - 1)
    if isinstance(model, HomSum):
        return model.q / model.n
    raise CapabilityError(f"no exchangeable pair for {type(model).__name__}")


def _pair_block(model):
    if isinstance(model, (IidSum, MultiIid)):
        x, n = model.summand, model.n
        d = model_dim(model)

        def iid(rng, m):
            X = x.sample(rng, (m, n, d))
            w = X.sum(axis=1) / math.sqrt(n)
            i = rng.integers(0, n, m)
            new = x.sample(rng, (m, d))
            wp = w + (new - X[np.arange(m), i]) / math.sqrt(n)
            if d == 1:
                return w[:, 0], wp[:, 0], i, i
            return w, wp, i, i

        return iid
    if isinstance(model, HomSum):
        x, n = model.summand, model.n

        def hom(rng, m):
            X = x.sample(rng, (m, n))
            w = model.evaluate(X)
            i = rng.integers(0, n, m)
            X[np.arange(m), i] = x.sample(rng, m)
            return w, model.evaluate(X), i, i

        return hom
    if isinstance(model, CombClt):
        n = model.n
        bn = math.sqrt(model.b2)
        rows = np.arange(n)
        sig = np.sqrt(model.sigma2)
        noise = model.noise.standardized()

        def comb(rng, m):
            perm = rng.permuted(np.tile(rows, (m, 1)), axis=1)
            Xd = model.c[rows, perm] + sig[rows, perm] * noise.sample(rng, (m, n))
            w = Xd.sum(axis=1) / bn
            i = rng.integers(0, n, m)
            j = rng.integers(0, n - 1, m)
            j = j + (j >= i)
            r = np.arange(m)
            pi_i, pi_j = perm[r, i], perm[r, j]
            cross = (
                model.c[i, pi_j] + sig[i, pi_j] * noise.sample(rng, m)
                + model.c[j, pi_i] + sig[j, pi_i] * noise.sample(rng, m)
            )
            dd = (cross - Xd[r, i] - Xd[r, j]) / bn
            return w, w + dd, i, j

        return comb
    raise CapabilityError(f"no exchangeable pair for {type(model).__name__}")


def draw_pairs(model: Model, reps: int, seed: int, threads: int = 1) -> PairDraw:
    """`reps` independent exchangeable pairs (W, W')."""
    fn = _pair_block(model)
    block = max(1, (1 << 22) // (getattr(model, "n", 1) * model_dim(model)))
    w, wp, i, j = run_blocks(fn, reps, seed, block=block, threads=threads, stream=1)  # odd streams: pairs
    return PairDraw(w, wp, wp - w, {"I": i, "J": j})


def draw_pair(model: Model, seed: int) -> PairDraw:
    """One exchangeable pair."""
    pd = draw_pairs(model, 1, seed)
    aux = {"I": int(pd.aux["I"][0])}
    if isinstance(model, CombClt):
        aux["J"] = int(pd.aux["J"][0])
    return PairDraw(pd.w[0], pd.w_prime[0], pd.d_increment[0], aux)


# ---------------------------------------------------------------------------
# exact conditional moments
# ---------------------------------------------------------------------------


@dataclass
class Certificate:
    """Exact conditional-moment data for the exchangeable-pair bounds.

    The per-state arrays let the norms be re-evaluated at any order.
    """

    lam: float
    p: float
    norm_R_p: float
    norm_E_p: float
    norm_D4_p: float
    d: int
    exact: bool
    residual: float
    probs: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    E: np.ndarray = field(repr=False)
    D4: np.ndarray = field(repr=False)

    @staticmethod
    def lp(probs, vals, p) -> float:
        # summing sorted terms keeps the norm independent of state order
        vals = np.abs(np.asarray(vals, dtype=float))
        terms = np.sort(probs * vals**p)
        return float(terms.sum() ** (1.0 / p))

    def at(self, p: float) -> "Certificate":
        return Certificate(
            self.lam, p,
            self.lp(self.probs, self.R, p),
            self.lp(self.probs, self.E, p),
            self.lp(self.probs, self.D4, p),
            self.d, self.exact, self.residual,
            self.probs, self.R, self.E, self.D4,
        )


STATE_CAP = 1 << 22


def _iid_states(model):
    x = model.summand
    v, pv = x.atoms()
    n, d = model.n, model_dim(model)
    k = v.size
    count = k ** (n * d)
    if n * d > 12 or count > STATE_CAP:
        raise SizingError(f"state space has {count} states (n*d = {n * d}); limit is n*d <= 12")
    codes = np.array(list(itertools.product(range(k), repeat=n * d)), dtype=np.int64)
    probs = pv[codes].prod(axis=1)
    states = v[codes].reshape(-1, n, d)
    return states, probs, v, pv


def _iid_conditionals(model):
    states, probs, v, pv = _iid_states(model)
    n, d = model.n, model_dim(model)
    W = states.sum(axis=1) / math.sqrt(n)
    # replacement vectors for the chosen coordinate and their probabilities
    repl = np.array(list(itertools.product(v, repeat=d)))
    rprob = np.array([np.prod(t) for t in itertools.product(pv, repeat=d)])
    # D[s, i, r, :] = (repl_r - x_{s,i}) / sqrt(n); transition prob rprob_r / n
    D = (repl[None, None, :, :] - states[:, :, None, :]) / math.sqrt(n)
    wts = (rprob / n)[None, None, :]
    ED = np.einsum("sirk,ir->sk", D, wts[0].repeat(n, axis=0))
    sq = np.einsum("sirk,sirk->sir", D, D)
    EDD = np.einsum("sirk,sirl,ir->skl", D, D, wts[0].repeat(n, axis=0))
    EDD_sq = np.einsum("sirk,sirl,sir,ir->skl", D, D, sq, wts[0].repeat(n, axis=0))
    return W, probs, ED, EDD, EDD_sq


def _comb_conditionals(model):
    n = model.n
    if not model.deterministic:
        raise CapabilityError("exact conditionals need a deterministic array (sigma2 = 0)")
    if n > 7:
        raise SizingError(f"{math.factorial(n)} permutations; limit is n <= 7")
    Y = model.c / math.sqrt(model.b2)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    rows = np.arange(n)
    W = Y[rows, perms].sum(axis=1)
    diag = Y[rows, perms]  # Y_{i, pi(i)}
    cross = Y[rows[None, :, None], perms[:, None, :]]  # Y_{i, pi(j)}
    D = -diag[:, :, None] - diag[:, None, :] + cross + np.transpose(cross, (0, 2, 1))
    off = ~np.eye(n, dtype=bool)
    Doff = D[:, off]
    w = 1.0 / (n * (n - 1))
    ED = Doff.sum(axis=1) * w
    EDD = (Doff**2).sum(axis=1) * w
    ED4 = (Doff**4).sum(axis=1) * w
    probs = np.full(len(perms), 1.0 / len(perms))
    return W, probs, ED[:, None], EDD[:, None, None], ED4[:, None, None], Y


def homsum_all_states(model: HomSum, cap: int = 20):
    """W over all 2^n sign vectors (Rademacher summands), state index = bit code."""
    if model.dist.family != "rademacher":
        raise CapabilityError("sign enumeration needs Rademacher summands")
    n = model.n
    if n > cap:
        raise SizingError(f"2^{n} sign vectors; limit is n <= {cap}")
    codes = np.arange(1 << n, dtype=np.int64)
    W = np.empty(codes.size)
    step = 1 << 16
    bits = np.arange(n)
    for s in range(0, codes.size, step):
        X = 1.0 - 2.0 * ((codes[s : s + step, None] >> bits) & 1)
        W[s : s + step] = model.evaluate(X)
    return W


def _homsum_conditionals(model):
    W = homsum_all_states(model, cap=16)
    n = model.n
    codes = np.arange(W.size, dtype=np.int64)
    # resampling coordinate I flips its sign with probability 1/2, else D = 0
    Dflip = np.stack([W[codes ^ (1 << i)] - W for i in range(n)], axis=1)
    w = 1.0 / (2 * n)
    ED = Dflip.sum(axis=1) * w
    EDD = (Dflip**2).sum(axis=1) * w
    ED4 = (Dflip**4).sum(axis=1) * w
    probs = np.full(W.size, 1.0 / W.size)
    return W, probs, ED[:, None], EDD[:, None, None], ED4[:, None, None]


def exact_pair_conditionals(model: Model, p: float = 2.0) -> Certificate:
    """Enumerate states and pair transitions; return the exact certificate.

    R is read off from E[D | state] = -lambda (W + R); ``residual`` is the
    largest deviation of E[D | state] from the model's closed-form drift
    -lambda (W + R_formula).
    """
    lam = pair_lambda(model)
    if isinstance(model, (IidSum, MultiIid)):
        if not model.summand.is_lattice:
            raise CapabilityError("exact conditionals need a lattice summand law")
        W, probs, ED, EDD, EDD_sq = _iid_conditionals(model)
        r_formula = np.zeros_like(W)
    elif isinstance(model, CombClt):
        W, probs, ED, EDD, EDD_sq, Y = _comb_conditionals(model)
        W = W[:, None]
        r_formula = np.full_like(W, -Y.sum() / model.n)
    elif isinstance(model, HomSum):
        W, probs, ED, EDD, EDD_sq = _homsum_conditionals(model)
        W = W[:, None]
        r_formula = np.zeros_like(W)
    else:
        raise CapabilityError(f"no exact enumeration for {type(model).__name__}")
    d = W.shape[1]
    residual = float(np.max(np.abs(ED + lam * (W + r_formula))))
    R = -ED / lam - W
    E = EDD / (2.0 * lam) - np.eye(d)[None]
    Rn = np.linalg.norm(R, axis=1)
    En = np.linalg.norm(E.reshape(len(E), -1), axis=1)
    D4n = np.linalg.norm(EDD_sq.reshape(len(EDD_sq), -1), axis=1)
    lp = Certificate.lp
    return Certificate(
        lam, p, lp(probs, Rn, p), lp(probs, En, p), lp(probs, D4n, p), d, True, residual,
        probs, Rn, En, D4n,
    )


# ---------------------------------------------------------------------------
# structural statistics
# ---------------------------------------------------------------------------


def maximal_influence(model: HomSum) -> float:
    """max_i sum_{i_2..i_q} f(i, i_2, ..., i_q)^2."""
    infl = np.zeros(model.n)
    w = math.factorial(model.q - 1) * model.vals**2
    for k in range(model.q):
        np.add.at(infl, model.idx[:, k], w)
    return float(infl.max())


@dataclass
class ContractionNorms:
    F_squared: np.ndarray
    op_norm_F: float
    hs_norm_F: float
    op_norm_F2: float
    hs_norm_F2: float


def contraction_q2(F) -> ContractionNorms:
    """First contraction of an order-2 kernel (the matrix square) and its norms."""
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ValueError("F must be square")
    scale = max(1.0, float(np.max(np.abs(F))))
    if np.max(np.abs(F - F.T)) > 1e-12 * scale:
        raise ValueError("F must be symmetric")
    F2 = F @ F
    eig = np.linalg.eigvalsh(F) if F.size else np.zeros(1)
    eig2 = np.linalg.eigvalsh(F2) if F.size else np.zeros(1)
    return ContractionNorms(
        F2,
        float(np.max(np.abs(eig))),
        float(np.linalg.norm(F)),
        float(np.max(np.abs(eig2))),
        float(np.linalg.norm(F2)),
    )


@dataclass
class FourthCumulant:
    kappa4: float
    se: float
    exact: bool


def jackknife_se(values: np.ndarray, stat, groups: int = 100) -> float:
    """Grouped delete-one jackknife standard error of stat(values)."""
    values = np.asarray(values)
    g = min(groups, values.size)
    parts = np.array_split(values, g)
    sums = [stat(np.concatenate(parts[:k] + parts[k + 1 :])) for k in range(g)]
    sums = np.asarray(sums)
    return float(math.sqrt((g - 1) / g * np.sum((sums - sums.mean()) ** 2)))


def fourth_cumulant(model: Model, reps: int = 100_000, seed: int = 0, threads: int = 1) -> FourthCumulant:
    """E W^4 - 3: exact where possible, otherwise Monte Carlo with a jackknife SE."""
    if isinstance(model, GaussChaos2):
        F2 = model.F @ model.F
        return FourthCumulant(48.0 * float(np.sum(F2 * F2)), 0.0, True)
    if isinstance(model, HomSum) and model.dist.family == "rademacher" and model.n <= 20:
        W = homsum_all_states(model)
        return FourthCumulant(float(np.mean(W**4)) - 3.0, 0.0, True)
    if model_dim(model) != 1:
        raise CapabilityError("fourth cumulant is defined here for scalar W only")
    w = sample_w(model, reps, seed, threads).values()
    stat = lambda a: float(np.mean(a**4)) - 3.0
    return FourthCumulant(stat(w), jackknife_se(w, stat), False)


@dataclass
class DependencyStats:
    theta1: int
    theta2: int
    group_count: int
    neighborhoods: list
    groups: list


def _second_size(nb, i, j) -> int:
    """|B_ij| with A_ij = A_i u A_j, using symmetry of the neighbourhood relation."""
    aij = nb[i] | nb[j]
    inner = sum(len(nb[k]) for k in aij)
    outer = sum(len(nb[l] - aij) for l in aij)
    return inner + outer


def dependency_stats(model: MDep | GraphDep) -> DependencyStats:
    """theta_1 = max |A_i|, theta_2 = max over i, j in A_i of |B_ij|, and an L-group partition."""
    if isinstance(model, MDep):
        n, m = model.n, model.m
        nb_full = [model.neighbors(i) for i in range(n)]
        # translation invariance: a window of 6m + 6 indices holds every configuration
        ne = min(n, 6 * m + 6)
        sub = MDep(ne, m, model.kernel, model.dist) if ne < n else model
        nb = [sub.neighbors(i) for i in range(ne)]
        groups = [list(range(r, n, m + 1)) for r in range(m + 1)]
    elif isinstance(model, GraphDep):
        nb_full = nb = [model.neighbors(i) for i in range(model.n)]
        colour = {}
        for i in range(model.n):
            used = {colour[j] for j in model._adj[i] if j in colour}
            colour[i] = next(c for c in itertools.count() if c not in used)
        L = max(colour.values()) + 1 if colour else 1
        groups = [[i for i in range(model.n) if colour[i] == c] for c in range(L)]
    else:
        raise CapabilityError(f"no dependency structure for {type(model).__name__}")
    theta1 = max(len(a) for a in nb)
    theta2 = max(_second_size(nb, i, j) for i in range(len(nb)) for j in nb[i])
    return DependencyStats(theta1, theta2, len(groups), nb_full, groups)
