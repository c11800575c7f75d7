"""Partition functions, bracketed pressure, Bowen parameter, theta-number,
transfer-operator eigenmeasures, Gibbs checks, and invariant-measure dimension.

All weight-based quantities work on two-sided per-edge bounds
w_lo(e) <= ||D phi_e||_inf <= w_up(e) plus an empirical distortion constant
K >= 1, and report brackets, never bare point estimates.  Large sums are
evaluated in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import (BudgetError, NonConvergenceError, UnsupportedError,
                     ValidationError)
from . import groups as G
from .gdms import DEFAULT_WORD_BUDGET, GdmsSpec, Word, stationary_distribution

BISECTION_TOL = 1e-6
BISECTION_MAX_ITER = 200
POWER_TOL = 1e-12
POWER_MAX_ITER = 100_000


# ---------------------------------------------------------------------------
# Weight tables
# ---------------------------------------------------------------------------

@dataclass
class WeightTable:
    """Per-edge two-sided bounds on the sup derivative norms.

    lower_is_inf marks tables whose w_lo also lower-bounds the *infimum* of
    the pointwise norm over the domain (true for bracketed single-inversion
    bounds and for exact similarity weights); such tables admit a slightly
    tighter pressure lower bound.
    """

    w_lo: np.ndarray
    w_up: np.ndarray
    distortion: float = 1.0
    lower_is_inf: bool = False
    exact: bool = False

    def __post_init__(self):
        self.w_lo = np.asarray(self.w_lo, float)
        self.w_up = np.asarray(self.w_up, float)
        if (self.w_lo <= 0).any() or (self.w_up <= 0).any():
            raise ValidationError("weights must be positive")
        if (self.w_lo > self.w_up * (1 + 1e-12)).any():
            raise ValidationError("need w_lo <= w_up")
        if self.distortion < 1.0:
            raise ValidationError("distortion constant must be >= 1")

    @property
    def w_mid(self) -> np.ndarray:
        return np.sqrt(self.w_lo * self.w_up)

    def side(self, which: str) -> np.ndarray:
        if which == "lower":
            return self.w_lo
        if which == "upper":
            return self.w_up
        if which == "mid":
            return self.w_mid
        raise ValidationError(f"unknown weight side {which!r}")


def edge_weight_bounds(sys: GdmsSpec, a: int, samples: int = 1024, seed: int = 0,
                       distortion: float = 1.5):
    """(w_lo, w_up, lower_is_inf, exact) for edge a over its domain vertex set."""
    e = sys.edges[a]
    chain = e.chain
    v = sys.vertices[sys.dst_idx[a]]
    if chain.is_similarity:
        return chain.r_f, chain.r_f, True, True
    if chain.n_inversions == 1:
        g = sys.group
        dc = G.gauge_dist(g, chain.pole, v.center)
        dmax = dc + v.radius
        dmin = max(dc - v.radius, v.inner_radius - dc, 1e-12)
        if dmin <= 1e-12 and v.inner_radius == 0:
            raise ValidationError(f"edge {e.id!r}: pole touches the domain ball")
        return chain.r_f / dmax ** 2, chain.r_f / dmin ** 2, True, False
    lo, up = chain.deriv_norm_sup(v.center, v.radius, "sampled", k=samples,
                                  seed=seed, distortion=distortion)
    return lo, up, False, False


def estimate_distortion(sys: GdmsSpec, w_up: np.ndarray, depth: int = 4,
                        seed: int = 0, n_edges: int = 32, n_words: int = 64,
                        n_points: int = 24) -> float:
    """Empirical bounded-distortion constant.

    Max sampled ratio of pointwise derivative norms over composed words of
    length <= depth, times a 1.1 safety factor.  The word sample is drawn
    from the largest-weight edges so the estimate is stable under alphabet
    truncation (growing the alphabet only appends smaller-weight edges).
    """
    rng = np.random.default_rng(seed)
    order = np.argsort(-w_up, kind="stable")[:n_edges]
    chosen = sorted(int(x) for x in order)
    succ = {a: [b for b in chosen if sys.admissible_pair(a, b)] for a in chosen}
    ratio_max = 1.0
    point_cache = {}
    words: List[Word] = [(a,) for a in chosen]
    for _ in range(n_words):
        a = chosen[int(rng.integers(len(chosen)))]
        word = [a]
        for _ in range(int(rng.integers(1, depth))):
            nxt = succ[word[-1]]
            if not nxt:
                break
            word.append(nxt[int(rng.integers(len(nxt)))])
        words.append(tuple(word))
    for word in words:
        v = sys.vertices[sys.dst_idx[word[-1]]]
        if v.id not in point_cache:
            point_cache[v.id] = v.sample(sys.group, n_points,
                                         np.random.default_rng(seed + 1))
        Z, T = point_cache[v.id]
        chain = sys.word_map(word)
        vals = chain.deriv_norm_many(Z, T)
        vals = vals[np.isfinite(vals) & (vals > 0)]
        if vals.size >= 2:
            ratio_max = max(ratio_max, float(vals.max() / vals.min()))
    return ratio_max * 1.1


def compute_weight_table(sys: GdmsSpec, samples: int = 1024, seed: int = 0) -> WeightTable:
    nE = sys.n_edges
    w_lo = np.empty(nE); w_up = np.empty(nE)
    inf_flags = np.empty(nE, dtype=bool); exact_flags = np.empty(nE, dtype=bool)
    for a in range(nE):
        lo, up, is_inf, is_exact = edge_weight_bounds(sys, a, samples, seed)
        w_lo[a], w_up[a] = lo, up
        inf_flags[a], exact_flags[a] = is_inf, is_exact
    exact = bool(exact_flags.all())
    distortion = 1.0 if exact else estimate_distortion(sys, w_up, seed=seed)
    return WeightTable(w_lo, w_up, distortion=distortion,
                       lower_is_inf=bool(inf_flags.all()), exact=exact)


def ensure_weights(sys: GdmsSpec, samples: int = 1024, seed: int = 0) -> WeightTable:
    if sys.weights is None:
        sys.weights = compute_weight_table(sys, samples, seed)
    return sys.weights


# ---------------------------------------------------------------------------
# Partition sums and pressure
# ---------------------------------------------------------------------------

def log_partition_sum(sys: GdmsSpec, t: float, n: int, side: str = "upper",
                      budget: int = DEFAULT_WORD_BUDGET) -> float:
    """log Z_n(t) with per-edge side weights multiplied along admissible words."""
    if t < 0:
        raise ValidationError("t must be >= 0")
    if n < 1:
        raise ValidationError("n must be >= 1")
    table = ensure_weights(sys)
    lw = t * np.log(table.side(side))
    if sys.is_maximal and len(sys.vertices) == 1:
        return n * float(logsumexp(lw))
    nE = sys.n_edges
    if nE * nE * max(n - 1, 1) > 50 * budget:
        raise BudgetError("partition sum transfer-matrix pass exceeds budget",
                          estimate=nE * nE * (n - 1), budget=50 * budget)
    adj = sys.adjacency().astype(float)
    c = float(lw.max())
    ew = np.exp(lw - c)
    v = np.ones(nE)
    log_scale = 0.0
    for _ in range(n - 1):
        v = adj @ (ew * v)
        m = v.max()
        if m <= 0:
            return -math.inf
        v /= m
        log_scale += math.log(m) + c
    return float(np.log((ew * v).sum()) + log_scale + c)


def partition_sum(sys: GdmsSpec, t: float, n: int, side: str = "upper",
                  budget: int = DEFAULT_WORD_BUDGET) -> float:
    """Z_n(t); +inf on overflow (the log version is used internally)."""
    lz = log_partition_sum(sys, t, n, side, budget)
    try:
        return math.exp(lz)
    except OverflowError:
        return math.inf


def perron_eigenvalue(M: np.ndarray, tol: float = POWER_TOL,
                      max_iter: int = POWER_MAX_ITER):
    """Perron eigenvalue and right eigenvector of a nonnegative matrix.

    Power iteration on M + sigma*I (the shift removes periodicity and drops
    out of the eigenvalue exactly).
    """
    M = np.asarray(M, float)
    if (M < 0).any():
        raise ValidationError("matrix must be nonnegative")
    nE = M.shape[0]
    sigma = 0.05 * float(M.max())
    if sigma == 0:
        raise ValidationError("zero matrix has no Perron data")
    Ms = M + sigma * np.eye(nE)
    v = np.ones(nE)
    lam = 0.0
    for _ in range(max_iter):
        w = Ms @ v
        lam_new = float(w.max())
        if lam_new <= 0:
            raise ValidationError("matrix is reducible to zero action")
        w /= lam_new
        if abs(lam_new - lam) <= tol * max(lam_new, 1.0) and np.abs(w - v).max() < 1e-13:
            return lam_new - sigma, w
        v, lam = w, lam_new
    raise NonConvergenceError("power iteration did not converge")


def transfer_matrix(sys: GdmsSpec, t: float, side: str) -> np.ndarray:
    table = ensure_weights(sys)
    w = table.side(side)
    return sys.adjacency().astype(float) * (w[None, :] ** t)


@dataclass
class PressureBracket:
    t: float
    lower: float
    upper: float
    depth: int
    method: str
    distortion: float = 1.0
    irreducible: bool = True

    def __post_init__(self):
        if self.lower > self.upper + 1e-12:
            raise ValidationError("pressure bracket inverted")

    def to_json(self):
        return {"t": self.t, "P_lo": self.lower, "P_hi": self.upper,
                "depth": self.depth, "method": self.method,
                "distortion": self.distortion}


def pressure_bracket(sys: GdmsSpec, t: float, n_max: int = 8,
                     budget: int = DEFAULT_WORD_BUDGET) -> PressureBracket:
    """Two-sided bounds on the topological pressure P(t).

    Similarity systems are exact (log of the weighted Perron eigenvalue).
    Single-vertex maximal systems use sub/superadditivity of the partition
    sums; systems with a genuine incidence structure use spectral bounds
    log lam(M_lo) - t log K <= P(t) <= log lam(M_up).
    """
    if t < 0:
        raise ValidationError("t must be >= 0")
    table = ensure_weights(sys)
    K = table.distortion
    single_full = sys.is_maximal and len(sys.vertices) == 1
    if table.exact:
        if single_full:
            p = float(logsumexp(t * np.log(table.w_up)))
        else:
            lam, _ = perron_eigenvalue(transfer_matrix(sys, t, "upper"))
            p = math.log(lam)
        return PressureBracket(t, p, p, 1, "exact", 1.0)
    if single_full:
        upper = min(log_partition_sum(sys, t, n, "upper", budget) / n
                    for n in range(1, n_max + 1))
        if table.lower_is_inf:
            lower = max((log_partition_sum(sys, t, n, "lower", budget)
                         - t * math.log(K)) / n for n in range(1, n_max + 1))
        else:
            # sampled lower weights only bound the sup norm, so the product
            # over a word can overshoot; discount by K per letter.
            lower = max(log_partition_sum(sys, t, n, "lower", budget) / n
                        for n in range(1, n_max + 1)) - t * math.log(K)
        return PressureBracket(t, min(lower, upper), upper, n_max,
                               "subadditive", K)
    lam_up, _ = perron_eigenvalue(transfer_matrix(sys, t, "upper"))
    lam_lo, _ = perron_eigenvalue(transfer_matrix(sys, t, "lower"))
    lower = math.log(lam_lo) - t * math.log(K)
    upper = math.log(lam_up)
    kind, _ = sys.finite_irreducibility()
    return PressureBracket(t, min(lower, upper), upper, 1, "spectral", K,
                           irreducible=(kind == "irreducible"))


# ---------------------------------------------------------------------------
# Bowen parameter
# ---------------------------------------------------------------------------

@dataclass
class DimBracket:
    h_lo: float
    h_hi: float
    iterations: int
    tol: float
    p_lower_at_h_lo: float
    p_upper_at_h_hi: float
    slack: float = 0.0
    note: str = ""

    def __post_init__(self):
        if self.h_lo > self.h_hi + 1e-12:
            raise ValidationError("dimension bracket inverted")

    @property
    def mid(self) -> float:
        return 0.5 * (self.h_lo + self.h_hi)

    def to_json(self):
        return {"h_lo": self.h_lo, "h_hi": self.h_hi, "iterations": self.iterations,
                "tol": self.tol, "slack": self.slack, "note": self.note}


def _bisect_root(f: Callable[[float], float], lo: float, hi: float, tol: float):
    """Largest t with f >= 0 and smallest t with f <= 0, to endpoint gap tol.

    f must be decreasing with f(lo) >= 0 >= f(hi).  Returns (a, b, iters)
    with a <= root <= b and b - a <= tol.
    """
    a, b = lo, hi
    iters = 0
    while b - a > tol and iters < BISECTION_MAX_ITER:
        m = 0.5 * (a + b)
        if f(m) >= 0:
            a = m
        else:
            b = m
        iters += 1
    return a, b, iters


def bowen_dim(sys: GdmsSpec, tol: float = BISECTION_TOL, n_max: int = 8,
              budget: int = DEFAULT_WORD_BUDGET) -> DimBracket:
    """Bracket [h_lo, h_hi] for the Bowen parameter inf{t : P(t) <= 0}.

    Certified by the final pressure evaluations: P_lower(h_lo) >= 0 and
    P_upper(h_hi) <= 0.  When the pressure bracket is wider than tol the
    extra width is reported as slack, never hidden.
    """
    cache = {}

    def press(t: float) -> PressureBracket:
        if t not in cache:
            cache[t] = pressure_bracket(sys, t, n_max, budget)
        return cache[t]

    f_up = lambda t: press(t).upper
    f_lo = lambda t: press(t).lower
    Q = sys.group.Q
    iters = 0
    note = ""

    hi = float(Q)
    expansions = 0
    while f_up(hi) > 0:
        hi *= 2.0
        expansions += 1
        if expansions > 60:
            raise NonConvergenceError("upper pressure never becomes nonpositive")
    if expansions:
        note = f"search interval expanded to [0,{hi:g}]; "

    if f_up(0.0) <= 0:
        h_hi = 0.0
    else:
        _, h_hi, it = _bisect_root(f_up, 0.0, hi, tol / 2)
        iters += it
    if f_lo(0.0) <= 0:
        h_lo = 0.0
    else:
        h_lo, _, it = _bisect_root(f_lo, 0.0, hi, tol / 2)
        iters += it
    slack = max(h_hi - h_lo - tol, 0.0)
    if slack > 0:
        note += f"pressure bracket width dominates (slack {slack:.3g})"
    return DimBracket(h_lo=h_lo, h_hi=h_hi, iterations=iters, tol=tol,
                      p_lower_at_h_lo=f_lo(h_lo), p_upper_at_h_hi=f_up(h_hi),
                      slack=slack, note=note.strip())


# ---------------------------------------------------------------------------
# Theta number from shell sums
# ---------------------------------------------------------------------------

@dataclass
class ShellFamily:
    """Shell decomposition of an infinite alphabet: per-shell edge weights.

    tail = "geometric": shells at geometrically growing scales; the tail of
    sum_k S_k(t) is geometric and converges iff the fitted log S_k slope in
    k is negative.  tail = "power": shells at polynomially growing scales;
    the tail behaves like sum_k k^a and converges iff the fitted slope of
    log S_k against log k is < -1.
    """

    log_weights: List[np.ndarray]
    counts: Optional[List[np.ndarray]] = None
    tail: str = "geometric"
    labels: Optional[np.ndarray] = None  # regression x per shell; default 1..K

    def __post_init__(self):
        if self.tail not in ("geometric", "power"):
            raise ValidationError(f"unknown tail type {self.tail!r}")
        if self.counts is not None and len(self.counts) != len(self.log_weights):
            raise ValidationError("counts/log_weights length mismatch")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, float)
            if self.labels.shape != (len(self.log_weights),):
                raise ValidationError("labels/log_weights length mismatch")

    @property
    def n_shells(self) -> int:
        return len(self.log_weights)

    def log_shell_sum(self, k: int, t: float) -> float:
        lw = t * self.log_weights[k]
        if self.counts is None:
            return float(logsumexp(lw))
        return float(logsumexp(lw, b=self.counts[k].astype(float)))


@dataclass
class ThetaEstimate:
    lo: float
    hi: float
    estimate: float
    previous: float
    stderr: float
    shells: int

    def to_json(self):
        return {"theta_lo": self.lo, "theta_hi": self.hi,
                "theta_hat": self.estimate, "theta_prev": self.previous,
                "stderr": self.stderr, "shells": self.shells}


def _tail_slope(family: ShellFamily, t: float, n_shells: int, start: int = 0):
    """OLS slope of log S_k(t) against the tail coordinate, plus its stderr."""
    if family.labels is not None:
        x = family.labels[start:n_shells]
    else:
        ks = np.arange(1, n_shells + 1, dtype=float)[start:]
        x = ks if family.tail == "geometric" else np.log(ks)
    y = np.array([family.log_shell_sum(k, t) for k in range(start, n_shells)])
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    resid = y - (ym + slope * (x - xm))
    dof = max(len(x) - 2, 1)
    se = float(math.sqrt((resid ** 2).sum() / dof / sxx))
    return slope, se


def theta_estimate(family: ShellFamily, t_max: float = 64.0) -> ThetaEstimate:
    """Finiteness threshold of Z_1(t) fitted from shell sums.

    Solves slope(t) = target (0 for geometric tails, -1 for power tails).
    The earliest shell carries the largest finite-size bias, so with >= 6
    shells the point estimate drops it (burn-in of one shell).  The bracket
    is the hull of three estimator variants (with/without burn-in, last vs
    previous truncation) widened on both sides by the variant spread plus
    twice the regression standard error: the spread is a proxy for the
    still-unconverged truncation bias (whose sign is not known a priori),
    the 2-sigma term covers shell-sum fluctuations.
    """
    K = family.n_shells
    if K < 4:
        raise ValidationError(f"theta estimation needs >= 4 shells, got {K}")
    target = 0.0 if family.tail == "geometric" else -1.0
    burn = 1 if K >= 6 else 0

    def solve(start: int, n_shells: int) -> Tuple[float, float]:
        def g(t):
            return _tail_slope(family, t, n_shells, start)[0] - target
        if g(0.0) <= 0:
            return 0.0, _tail_slope(family, 0.0, n_shells, start)[1]
        hi = 1.0
        while g(hi) > 0:
            hi *= 2.0
            if hi > t_max:
                raise NonConvergenceError("shell sums do not decay within the t range")
        root = float(brentq(g, hi / 2 if g(hi / 2) > 0 else 0.0, hi, xtol=1e-10))
        slope_se = _tail_slope(family, root, n_shells, start)[1]
        dg = (g(root + 1e-4) - g(root - 1e-4)) / 2e-4
        t_se = abs(slope_se / dg) if dg != 0 else slope_se
        return root, t_se

    full, se = solve(burn, K)
    prev, _ = solve(burn, K - 1)
    cands = [full, prev]
    if burn:
        cands.append(solve(0, K)[0])
    spread = max(cands) - min(cands)
    lo = max(min(cands) - spread - 2 * se, 0.0)
    hi = max(cands) + spread + 2 * se
    return ThetaEstimate(lo=lo, hi=hi, estimate=full, previous=prev,
                         stderr=se, shells=K)


# ---------------------------------------------------------------------------
# Transfer-operator eigenmeasure and Gibbs property
# ---------------------------------------------------------------------------

@dataclass
class CylinderMeasure:
    """Eigenmeasure of the dual transfer operator, discretized on cylinders.

    Masses follow m([w]) = w_mid(w)^t * v(w_n) * lam^-|w| / Z with v the
    (right) Perron eigenvector of M_ab = A_ab w_mid(b)^t; this choice makes
    children masses sum exactly to the parent mass.
    """

    depth: int
    words: List[Word]
    masses: np.ndarray
    eigenvalue: float
    t: float
    eigenvector: np.ndarray
    norm_const: float

    def mass(self, word: Word) -> float:
        try:
            idx = self._index[word]
        except AttributeError:
            self._index = {w: k for k, w in enumerate(self.words)}
            idx = self._index[word]
        return float(self.masses[idx])


def transfer_eigenmeasure(sys: GdmsSpec, t: float, depth: int,
                          budget: int = DEFAULT_WORD_BUDGET) -> CylinderMeasure:
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    kind, _ = sys.finite_irreducibility()
    if kind != "irreducible":
        raise ValidationError("transfer eigenmeasure requires an irreducible system")
    table = ensure_weights(sys)
    lam, v = perron_eigenvalue(transfer_matrix(sys, t, "mid"))
    w_t = table.w_mid ** t
    Zc = float((w_t * v).sum() / lam)  # depth-independent normalization
    words = list(sys.admissible_words(depth, budget))
    masses = np.empty(len(words))
    for k, word in enumerate(words):
        masses[k] = math.prod(w_t[a] for a in word) * v[word[-1]] / (lam ** depth * Zc)
    total = masses.sum()
    if abs(total - 1.0) > 1e-9:
        masses = masses / total
    return CylinderMeasure(depth=depth, words=words, masses=masses,
                           eigenvalue=lam, t=t, eigenvector=v, norm_const=Zc)


def gibbs_check(measure: CylinderMeasure, sys: GdmsSpec, t: float,
                side: str = "mid", budget: int = DEFAULT_WORD_BUDGET):
    """(min, max) of the Gibbs ratios over all cylinders of depth <= measure.depth.

    The ratio compares each cylinder mass against the eigen-structure
    prediction w_side(w)^t * v(w_n) * lam^-|w| / Z; for exact similarity
    weights it is identically 1 up to floating-point rounding.
    """
    table = ensure_weights(sys)
    w_t = table.side(side) ** t
    lam, v, Zc = measure.eigenvalue, measure.eigenvector, measure.norm_const
    w_mid_t = table.w_mid ** t
    lo, hi = math.inf, -math.inf
    for n in range(1, measure.depth + 1):
        for word in sys.admissible_words(n, budget):
            # cylinder mass from the consistent family (children sum to parent)
            m = math.prod(w_mid_t[a] for a in word) * v[word[-1]] / (lam ** n * Zc)
            pred = math.prod(w_t[a] for a in word) * v[word[-1]] / (lam ** n * Zc)
            r = m / pred
            lo, hi = min(lo, r), max(hi, r)
    return lo, hi


# ---------------------------------------------------------------------------
# Invariant-measure dimension
# ---------------------------------------------------------------------------

@dataclass
class InvariantMeasureSpec:
    kind: str  # "bernoulli" | "markov"
    probs: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None
    pi: Optional[np.ndarray] = None

    @staticmethod
    def bernoulli(probs) -> "InvariantMeasureSpec":
        p = np.asarray(probs, float)
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
            raise ValidationError("Bernoulli probabilities must be a distribution")
        return InvariantMeasureSpec("bernoulli", probs=p)

    @staticmethod
    def markov(P, pi=None) -> "InvariantMeasureSpec":
        P = np.asarray(P, float)
        if not np.allclose(P.sum(axis=1), 1.0, atol=1e-9):
            raise ValidationError("Markov rows must be stochastic")
        if pi is None:
            pi = stationary_distribution(P)
        return InvariantMeasureSpec("markov", P=P, pi=np.asarray(pi, float))


def measure_dimension(sys: GdmsSpec, mu: InvariantMeasureSpec, depth: int = 8) -> float:
    """h_mu / chi_mu: entropy over Lyapunov exponent of the shift-invariant
    measure projected to the limit set.

    The Lyapunov exponent is the depth-cylinder discretization
    -sum_{|w|=depth} mu([w]) (1/depth) log w_mid(w); because the word
    weights are per-edge products and mu is shift-invariant this telescopes
    exactly to -sum_e freq_mu(e) log w_mid(e), which is what is evaluated.
    """
    table = ensure_weights(sys)
    logw = np.log(table.w_mid)
    nE = sys.n_edges
    adj = sys.adjacency()
    if mu.kind == "bernoulli":
        p = mu.probs
        if p.shape != (nE,):
            raise ValidationError(f"need {nE} Bernoulli probabilities")
        support = np.flatnonzero(p > 0)
        for a in support:
            for b in support:
                if not adj[a, b]:
                    raise ValidationError(
                        "Bernoulli support contains an inadmissible transition")
        h = float(-(p[support] * np.log(p[support])).sum())
        freq = p
    elif mu.kind == "markov":
        P, pi = mu.P, mu.pi
        if P.shape != (nE, nE):
            raise ValidationError(f"Markov matrix must be {nE} x {nE}")
        if ((P > 0) & ~adj).any():
            raise ValidationError("Markov support violates the incidence")
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(P > 0, P * np.log(P), 0.0)
        h = float(-(pi[:, None] * plogp).sum())
        freq = pi
    else:
        raise ValidationError(f"unknown measure kind {mu.kind!r}")
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    chi = float(-(freq * logw).sum())
    if chi <= 0:
        raise ValidationError(f"nonpositive Lyapunov exponent {chi:g}")
    if h == 0.0:
        return 0.0
    return h / chi


# ---------------------------------------------------------------------------
# Dimension spectrum: greedy subsystems
# ---------------------------------------------------------------------------

def similarity_dimension(weights: Sequence[float], tol: float = 1e-12) -> float:
    """Root of sum w^t = 1 (Moran equation); 0 for a single map."""
    w = np.asarray(weights, float)
    if (w <= 0).any() or (w >= 1).any():
        raise ValidationError("similarity weights must lie in (0,1)")
    logw = np.log(w)

    def f(t):
        return float(logsumexp(t * logw))

    if f(0.0) <= 0:
        return 0.0
    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            raise NonConvergenceError("Moran equation has no root in range")
    return float(brentq(f, 0.0, hi, xtol=tol))


@dataclass
class SubsystemResult:
    indices: List[int]
    weights: List[float]
    dim: DimBracket
    trace: List[Tuple[int, float]]
    exhausted: bool  # budget/generator ran out before reaching the target tol


def subsystem_with_dimension(weight_gen, t_target: float, tol: float = 1e-4,
                             budget: int = 100_000,
                             trace_points: int = 64) -> SubsystemResult:
    """Greedy subsystem of an infinite similarity IFS with dimension ~ t_target.

    weight_gen yields per-edge similarity ratios in decreasing order.  Edges
    are added in index order whenever the resulting Moran dimension stays
    below t_target; since the Moran sum f_S(t) = sum w^t is decreasing in t,
    "dimension < t_target after adding w" is exactly f_S(t_target) + w^t < 1
    and "dimension >= t_target - tol" is f_S(t_target - tol) >= 1, so the
    scan is O(1) per candidate.  Exact dimensions (scalar Moran roots) are
    evaluated only for the trace and the final bracket.
    """
    if t_target <= 0:
        raise ValidationError("target dimension must be positive")
    chosen: List[int] = []
    weights: List[float] = []
    trace: List[Tuple[int, float]] = []
    s_target = 0.0   # sum w^t_target over accepted edges
    s_stop = 0.0     # sum w^(t_target - tol)
    t_stop = max(t_target - tol, 0.0)
    reached = False
    for idx, w in enumerate(weight_gen):
        if idx >= budget:
            break
        w = float(w)
        if not (0 < w < 1):
            raise ValidationError("similarity weights must lie in (0,1)")
        if s_target + w ** t_target < 1.0:
            chosen.append(idx)
            weights.append(w)
            s_target += w ** t_target
            s_stop += w ** t_stop
            if len(chosen) <= trace_points or len(chosen) % 64 == 0:
                trace.append((idx, similarity_dimension(weights)))
            if s_stop >= 1.0:
                reached = True
                break
    h = similarity_dimension(weights) if weights else 0.0
    if not trace or trace[-1][0] != (chosen[-1] if chosen else -1):
        if chosen:
            trace.append((chosen[-1], h))
    dim = DimBracket(h_lo=h, h_hi=h, iterations=0, tol=tol,
                     p_lower_at_h_lo=0.0, p_upper_at_h_hi=0.0)
    return SubsystemResult(indices=chosen, weights=weights, dim=dim,
                           trace=trace, exhausted=not reached)
