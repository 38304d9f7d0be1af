"""Rate functions of the local alignment score.

The central object is the fixed-match score G_kappa(x_m, y_n) (best
restricted score over alignments with exactly kappa matches starting at
(1, 1)).  Its exponential moments summed over all lengths give

    psi_kappa(theta) = log sum_{m, n >= kappa} E exp(theta G_kappa(x_m, y_n)),

and restricting to the diagonal and taking the maximum gives xi_kappa.  Their
largest positive roots bracket the large-deviation rate theta~ of the local
score.  :class:`KappaTable` stores the distribution of G_kappa over all
length pairs up to a cutoff once, so both functions can be evaluated at any
theta cheaply; the (m, n) region beyond the cutoff is covered by a certified
envelope bound.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels as kern
from .model import (
    GapPenalty,
    ModelError,
    ScoringModel,
    gamma_tail_sum,
    gap_table,
    gap_weight_sum,
    letter_pair_mgf,
)
from .parallel import DEFAULT_SHARDS, run_ordered, shard_rngs, split_counts
from .roots import NoRoot, largest_root, newton_polish

__all__ = [
    "LOGARITHMIC",
    "LINEAR",
    "INDETERMINATE",
    "DivergentSeries",
    "NoRoot",
    "DomainVerdict",
    "PsiEstimate",
    "KappaTable",
    "KappaRoot",
    "ThetaBracket",
    "PsiPrime",
    "GrowthConstants",
    "theta_star",
    "summation_test",
    "h1_closed_form",
    "kappa_table",
    "psi_kappa",
    "xi_kappa",
    "root_psi_kappa",
    "root_xi_kappa",
    "theta_tilde",
    "psi_prime",
    "growth_constants",
    "verify_root",
]

LOGARITHMIC = "LogarithmicForLargeDelta"
LINEAR = "LinearForAllDelta"
INDETERMINATE = "Indeterminate"

ROOT_TOL = 1e-6
MC_SAMPLES = 100_000
EXACT_MAX_PAIRS_LOG2 = 26
EXACT_WORK = 4e9
MC_MAX_CUTOFF = 16


class DivergentSeries(ModelError):
    """The gap series diverges at this theta, so h_kappa is infinite."""


# --------------------------------------------------------------------------
# theta* and the summation test


def theta_star(model: ScoringModel) -> float:
    """Unique positive root of E exp(theta K) = 1."""
    if not (model.mean_score < 0 and model.kmax > 0):
        raise ModelError("theta* needs E[K] < 0 and K_max > 0")
    from scipy import optimize

    P, K = model.pair_probs, model.scores.array

    def f(t):
        return float(np.sum(P * np.exp(t * K))) - 1.0

    def df(t):
        return float(np.sum(P * K * np.exp(t * K)))

    hi = 1.0
    while f(hi) <= 0:
        hi *= 2.0
    # the mgf dips below one right of zero; find a point where it does
    lo = hi
    while f(lo) >= 0:
        lo /= 2.0
        if lo < 1e-300:
            raise ModelError("could not bracket theta*")
    root = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)
    return float(newton_polish(f, df, root, 1e-12))


@dataclass(frozen=True)
class DomainVerdict:
    verdict: str
    theta_star: float
    witness_theta: float | None
    tail_value: float | None
    tail_remainder: float | None
    reason: str

    def to_json(self) -> dict:
        return asdict(self)


def _tail_class(g: GapPenalty) -> GapPenalty:
    if g.is_infinite:
        raise ModelError("the summation test needs a finite gap penalty")
    if g.family == "table":
        if g.tail is None:
            raise ModelError("gap table with unknown asymptotic class cannot be classified")
        return g.tail
    return g


def summation_test(g: GapPenalty, model: ScoringModel, margin: float = ROOT_TOL) -> DomainVerdict:
    """Classify ``g`` as logarithmic-for-large-initiation-cost or linear.

    Affine and power-law tails make sum exp(-t gamma(k)) finite for every
    t > 0, hence logarithmic growth once the initiation cost is large.  For
    gamma(k) = rate * log k the series at t converges iff t * rate > 1, so
    the verdict turns on rate versus 1/theta*; within ``margin`` of the
    threshold no classification is made.
    """
    ts = theta_star(model)
    tail = _tail_class(g)
    if tail.family in ("affine", "power"):
        w = ts / 2
        v, r = gamma_tail_sum(tail, w, None)
        return DomainVerdict(LOGARITHMIC, ts, w, v, r, f"{tail.family} tail sums converge for every theta > 0")
    thresh = 1.0 / ts
    d = tail.rate
    if d > thresh + margin:
        w = 0.5 * (1.0 / d + ts)
        v, r = gamma_tail_sum(tail, w, None)
        return DomainVerdict(LOGARITHMIC, ts, w, v, r, f"rate {d:g} > 1/theta* = {thresh:.6g}: series converges below theta*")
    if d < thresh - margin:
        w = 0.5 * (ts + 1.0 / d)
        v, r = gamma_tail_sum(tail, w, 64)
        return DomainVerdict(LINEAR, ts, w, v, r, f"rate {d:g} < 1/theta* = {thresh:.6g}: series diverges above theta*")
    return DomainVerdict(INDETERMINATE, ts, None, None, None, f"rate {d:g} within {margin:g} of 1/theta* = {thresh:.6g}")


# --------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class PsiEstimate:
    """Value of a log-moment functional.

    The truth lies in [value, value + trunc_bound] up to Monte Carlo error
    ``mc_se`` (zero for exact evaluation).
    """

    value: float
    trunc_bound: float
    mc_se: float
    kappa: int
    theta: float
    method: str
    seed: int | None = None
    r_arg: int | None = None
    captured: bool = True

    @property
    def upper(self) -> float:
        return self.value + self.trunc_bound

    def to_json(self) -> dict:
        d = {k: self.__dict__[k] for k in ("value", "trunc_bound", "mc_se", "kappa", "theta", "method", "seed")}
        if self.r_arg is not None:
            d["r_arg"] = self.r_arg
            d["captured"] = self.captured
        return d


def _theta_floor(g: GapPenalty) -> float:
    """Below this theta the gap series diverges."""
    if g.is_infinite:
        return 0.0
    tail = g.tail if g.family == "table" else g
    if tail is not None and tail.family == "log":
        return 1.0 / tail.rate
    return 0.0


def h1_closed_form(theta: float, g: GapPenalty, model: ScoringModel) -> PsiEstimate:
    """psi_1(theta) from the single-match closed form.

    With one match at (1, 1), G_1 = K(x1, y1) - g(m-1) - g(n-1), so
    h_1 = (sum_{k>=0} exp(-theta g(k)))^2 * E exp(theta K).  The series
    remainder bound becomes the truncation bound; a divergent series gives
    value = inf.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    s, rem = gap_weight_sum(g, theta, None)
    mgf = letter_pair_mgf(model, theta)
    if not math.isfinite(rem):
        return PsiEstimate(math.inf, math.inf, 0.0, 1, theta, "closed")
    lo = 2 * math.log(s) + math.log(mgf)
    up = 2 * math.log(s + rem) + math.log(mgf)
    return PsiEstimate(lo, up - lo, 0.0, 1, theta, "closed")


# --------------------------------------------------------------------------
# distribution tables of G_kappa


def _aggregate(vals: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u, inv = np.unique(vals, return_inverse=True)
    return u, np.bincount(inv.ravel(), weights=w, minlength=u.size)


@dataclass
class KappaTable:
    """Distribution of G_kappa(x_m, y_n) for kappa <= m, n <= cutoff.

    Exact tables hold, per (m, n) cell, the distinct values with their
    probabilities.  Monte Carlo tables hold G for every sampled full-length
    pair and every prefix cell (one DP per sample serves all cells), so the
    sample correlation between cells is accounted for in the standard error.
    """

    model: ScoringModel
    g: GapPenalty
    kappa: int
    cutoff: int
    method: str
    seed: int | None
    samples_matrix: np.ndarray | None = None
    cell_values: list = field(default_factory=list)
    cell_logw: list = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.cutoff - self.kappa + 1

    @property
    def cells(self) -> list[tuple[int, int]]:
        lo, hi = self.kappa, self.cutoff
        return [(m, n) for m in range(lo, hi + 1) for n in range(lo, hi + 1)]

    def diag_index(self, r: int) -> int:
        k = r - self.kappa
        return k * self.width + k

    @property
    def n_samples(self) -> int:
        return 0 if self.samples_matrix is None else self.samples_matrix.shape[0]

    # log of sum over ``cols`` of E exp(theta G), with relative standard error
    def log_moment(self, theta: float, cols=None) -> tuple[float, float]:
        if self.method == "exact":
            idx = range(len(self.cell_values)) if cols is None else cols
            terms = [self.cell_logw[c] + theta * self.cell_values[c] for c in idx]
            with np.errstate(invalid="ignore"):
                return float(logsumexp(np.concatenate(terms))), 0.0
        S = self.samples_matrix
        per = np.empty(S.shape[0])
        for a in range(0, S.shape[0], 8192):
            G = S[a : a + 8192].astype(np.float64) if cols is None else S[a : a + 8192, cols].astype(np.float64)
            with np.errstate(invalid="ignore"):
                per[a : a + 8192] = logsumexp(theta * G, axis=1)
        top = per.max()
        e = np.exp(per - top)
        mean = e.mean()
        if mean == 0:
            return -math.inf, math.inf
        rel = e.std(ddof=1) / math.sqrt(e.size) / mean if e.size > 1 else math.inf
        return float(top + math.log(mean)), float(rel)

    def envelope_tail(self, theta: float) -> float:
        """Certified bound on the h_kappa mass of cells with m or n beyond the cutoff."""
        if self.g.is_infinite:
            return 0.0
        head = self.cutoff - self.kappa
        S, T = gap_weight_sum(self.g, theta, head)
        if not math.isfinite(T):
            return math.inf
        return math.exp(theta * self.kappa * self.model.kmax) * (2 * T * S + T * T)

    def psi(self, theta: float) -> PsiEstimate:
        if not theta > 0:
            raise ValueError("theta must be positive")
        tail = self.envelope_tail(theta)
        if not math.isfinite(tail):
            raise DivergentSeries(f"gap series diverges at theta={theta:g}; h_{self.kappa} is infinite")
        lh, rel = self.log_moment(theta)
        trunc = math.log1p(tail * math.exp(-lh))
        return PsiEstimate(lh, trunc, rel, self.kappa, theta, self.method, self.seed)

    def diag_log_moments(self, theta: float, r_max: int | None = None) -> list[tuple[int, float, float]]:
        r_max = self.cutoff if r_max is None else min(r_max, self.cutoff)
        out = []
        for r in range(self.kappa, r_max + 1):
            lm, rel = self.log_moment(theta, [self.diag_index(r)])
            out.append((r, lm, rel))
        return out

    def xi(self, theta: float, r_max: int | None = None) -> PsiEstimate:
        r_max = self.cutoff if r_max is None else min(r_max, self.cutoff)
        moms = self.diag_log_moments(theta, r_max)
        r_arg, best, rel = max(moms, key=lambda t: (t[1], -t[0]))
        captured = True
        if r_arg == r_max and not self.g.is_infinite:
            # terms past r_max are bounded through the envelope
            env = theta * (self.kappa * self.model.kmax - 2 * float(gap_table(self.g, r_max + 1 - self.kappa)[-1]))
            captured = env < best
        return PsiEstimate(best, 0.0, rel, self.kappa, theta, self.method, self.seed, r_arg, captured)


_TABLE_CACHE: dict = {}
_TABLE_CACHE_MAX = 6


def clear_table_cache():
    _TABLE_CACHE.clear()


def _exact_work(base: int, cutoff: int, kappa: int) -> float:
    return float(base) ** (2 * cutoff) * (kappa + 1) * 2 * cutoff**3


def default_cutoff(model: ScoringModel, g: GapPenalty, kappa: int, method: str, rel_tail: float = 1e-6) -> int:
    """Length cutoff for a G_kappa table.

    Exact: the largest cutoff whose enumeration fits the work budget and the
    2^26 pair cap.  Monte Carlo: the smallest cutoff whose envelope tail is
    below ``rel_tail`` of the (kappa, kappa) cell at theta*/2, capped at 16.
    """
    base = len(model.alphabet)
    if method == "exact":
        M = kappa
        while (2 * (M + 1)) * math.log2(base) <= EXACT_MAX_PAIRS_LOG2 and _exact_work(base, M + 1, kappa) <= EXACT_WORK:
            M += 1
        return M
    if g.is_infinite:
        return kappa
    t = max(theta_star(model) / 2, _theta_floor(g) * 1.05)
    floor_mass = letter_pair_mgf(model, t) ** kappa
    M = kappa + 1
    while M < MC_MAX_CUTOFF:
        S, T = gap_weight_sum(g, t, M - kappa)
        tail = math.exp(t * kappa * model.kmax) * (2 * T * S + T * T)
        if tail <= rel_tail * floor_mass:
            break
        M += 1
    return M


def _build_exact(model, g, kappa, cutoff, shards, threads) -> KappaTable:
    base = len(model.alphabet)
    if 2 * cutoff * math.log2(base) > EXACT_MAX_PAIRS_LOG2 + 1e-9:
        raise ModelError(f"exact enumeration of {base}^{2 * cutoff} pairs exceeds the 2^{EXACT_MAX_PAIRS_LOG2} cap")
    total = base ** (2 * cutoff)
    K = np.ascontiguousarray(model.scores.array)
    gt = gap_table(g, cutoff)
    logp = np.log(model.dist.array)
    w = cutoff - kappa + 1
    ncell = w * w
    bounds = np.cumsum([0] + split_counts(total, shards))
    chunk = 1 << 14

    def shard(a, b):
        acc_v = [[] for _ in range(ncell)]
        acc_w = [[] for _ in range(ncell)]
        for s in range(a, b, chunk):
            e = min(b, s + chunk)
            out = np.empty((e - s, ncell))
            lw = np.empty(e - s)
            kern.fixed_cells_enum(s, e, base, logp, K, gt, kappa, kappa, cutoff, False, out, lw)
            wt = np.exp(lw)
            for c in range(ncell):
                u, ws = _aggregate(out[:, c], wt)
                acc_v[c].append(u)
                acc_w[c].append(ws)
        return [_aggregate(np.concatenate(acc_v[c]), np.concatenate(acc_w[c])) for c in range(ncell)]

    parts = run_ordered(shard, [(int(bounds[i]), int(bounds[i + 1])) for i in range(shards) if bounds[i] < bounds[i + 1]], threads)
    vals, logw = [], []
    for c in range(ncell):
        u, ws = _aggregate(np.concatenate([p[c][0] for p in parts]), np.concatenate([p[c][1] for p in parts]))
        vals.append(u)
        with np.errstate(divide="ignore"):
            logw.append(np.log(ws))
    return KappaTable(model, g, kappa, cutoff, "exact", None, None, vals, logw)


def _build_mc(model, g, kappa, cutoff, samples, seed, shards, threads) -> KappaTable:
    base = len(model.alphabet)
    K = np.ascontiguousarray(model.scores.array)
    gt = gap_table(g, cutoff)
    p = model.dist.array
    w = cutoff - kappa + 1

    def shard(rng, count):
        X = rng.choice(base, size=(count, cutoff), p=p)
        Y = rng.choice(base, size=(count, cutoff), p=p)
        out = np.empty((count, w * w))
        kern.fixed_cells_batch(X, Y, K, gt, kappa, kappa, cutoff, False, out)
        return out.astype(np.float32)

    rngs = shard_rngs(seed, shards)
    jobs = [(r, c) for r, c in zip(rngs, split_counts(samples, shards)) if c > 0]
    G = np.concatenate(run_ordered(shard, jobs, threads), axis=0)
    return KappaTable(model, g, kappa, cutoff, "mc", seed, G)


def kappa_table(
    model: ScoringModel,
    g: GapPenalty,
    kappa: int,
    method: str = "exact",
    cutoff: int | None = None,
    samples: int = MC_SAMPLES,
    seed: int = 0,
    shards: int = DEFAULT_SHARDS,
    threads: int | None = None,
) -> KappaTable:
    """Build (or fetch from cache) the G_kappa distribution table."""
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    if method not in ("exact", "mc"):
        raise ValueError(f"unknown method {method!r}")
    if cutoff is None:
        cutoff = default_cutoff(model, g, kappa, method)
    if cutoff < kappa:
        raise ValueError("cutoff must be >= kappa")
    key = (model, g, kappa, method, cutoff) + ((samples, seed, shards) if method == "mc" else (shards,))
    tab = _TABLE_CACHE.get(key)
    if tab is None:
        if method == "exact":
            tab = _build_exact(model, g, kappa, cutoff, shards, threads)
        else:
            tab = _build_mc(model, g, kappa, cutoff, samples, seed, shards, threads)
        if len(_TABLE_CACHE) >= _TABLE_CACHE_MAX:
            _TABLE_CACHE.pop(next(iter(_TABLE_CACHE)))
        _TABLE_CACHE[key] = tab
    return tab


def psi_kappa(model: ScoringModel, g: GapPenalty, kappa: int, theta: float, method: str = "exact", **table_kw) -> PsiEstimate:
    """psi_kappa(theta) with its truncation bound (and MC error for ``method='mc'``).

    ``method='closed'`` is available for kappa = 1 only.
    """
    if method == "closed":
        if kappa != 1:
            raise ValueError("closed form exists for kappa = 1 only")
        return h1_closed_form(theta, g, model)
    return kappa_table(model, g, kappa, method, **table_kw).psi(theta)


def xi_kappa(model: ScoringModel, g: GapPenalty, kappa: int, theta: float, r_max: int | None = None, method: str = "exact", **table_kw) -> PsiEstimate:
    """xi_kappa(theta) = max over kappa <= r <= r_max of log E exp(theta G_kappa(x_r, y_r)).

    The attaining r is reported in ``r_arg``; ``captured`` is False (and a
    warning issued) when the maximum sits at r_max and the envelope cannot
    rule out larger terms beyond it.
    """
    if r_max is not None and "cutoff" not in table_kw:
        table_kw["cutoff"] = r_max
    tab = kappa_table(model, g, kappa, method, **table_kw)
    est = tab.xi(theta, r_max)
    if not est.captured:
        warnings.warn(f"xi_{kappa} maximum sits at r_max={est.r_arg}; supremum may lie beyond", RuntimeWarning, stacklevel=2)
    return est


# --------------------------------------------------------------------------
# roots


@dataclass(frozen=True)
class KappaRoot:
    theta: float
    kappa: int
    kind: str  # "psi" or "xi"
    estimate: PsiEstimate
    theta_se: float
    envelope: str
    r_arg: int | None = None

    def to_json(self) -> dict:
        return {
            "theta": self.theta,
            "kappa": self.kappa,
            "kind": self.kind,
            "theta_se": self.theta_se,
            "envelope": self.envelope,
            "r_arg": self.r_arg,
            "estimate": self.estimate.to_json(),
        }


def _search_interval(model, g, interval):
    if interval is not None:
        lo, hi = interval
    else:
        ts = theta_star(model)
        lo, hi = ts * 1e-3, ts * 1.5
    floor = _theta_floor(g)
    if lo <= floor:
        lo = floor * (1 + 1e-6) + 1e-9
    if hi <= lo:
        hi = 2 * lo
    return lo, hi


def _slope(f, t, h=1e-5):
    return (f(t + h) - f(t - h)) / (2 * h)


def root_psi_kappa(
    model: ScoringModel,
    g: GapPenalty,
    kappa: int,
    method: str | None = None,
    interval: tuple[float, float] | None = None,
    tol: float = ROOT_TOL,
    envelope: str = "upper",
    **table_kw,
) -> KappaRoot:
    """Largest positive root theta_kappa of psi_kappa.

    ``envelope='upper'`` solves value + trunc_bound = 0, i.e. the root of a
    certified upper bound on psi_kappa; it never exceeds the true root, and
    psi_kappa is <= 0 there, which is what the tail bound needs.
    ``envelope='value'`` solves the truncated value itself.
    """
    if method is None:
        method = "closed" if kappa == 1 else "exact"
    if method == "closed":
        def est(t):
            return h1_closed_form(t, g, model)
    else:
        tab = kappa_table(model, g, kappa, method, **table_kw)
        est = tab.psi

    def f(t):
        e = est(t)
        return e.upper if envelope == "upper" else e.value

    lo, hi = _search_interval(model, g, interval)
    root, _ = largest_root(f, lo, hi, tol)
    e = est(root)
    slope = _slope(f, root, min(1e-5, root * 1e-3))
    se = e.mc_se / slope if slope > 0 else math.inf
    return KappaRoot(root, kappa, "psi", e, se, envelope)


def root_xi_kappa(
    model: ScoringModel,
    g: GapPenalty,
    kappa: int,
    r_max: int | None = None,
    method: str = "exact",
    interval: tuple[float, float] | None = None,
    tol: float = ROOT_TOL,
    **table_kw,
) -> KappaRoot:
    """Largest positive root of xi_kappa, with the attaining diagonal length r."""
    if r_max is not None and "cutoff" not in table_kw:
        table_kw["cutoff"] = r_max
    tab = kappa_table(model, g, kappa, method, **table_kw)

    def f(t):
        return tab.xi(t, r_max).value

    lo, hi = _search_interval(model, GapPenalty.infinite(), interval)
    try:
        root, _ = largest_root(f, lo, hi, tol)
    except NoRoot as exc:
        raise NoRoot(f"xi_{kappa}: {exc} (raise r_max or check the model)") from None
    e = tab.xi(root, r_max)
    if not e.captured:
        warnings.warn(f"xi_{kappa} root: maximum at r_max={e.r_arg}", RuntimeWarning, stacklevel=2)
    slope = _slope(f, root, min(1e-5, root * 1e-3))
    se = e.mc_se / slope if slope > 0 else math.inf
    return KappaRoot(root, kappa, "xi", e, se, "value", e.r_arg)


def verify_root(root: KappaRoot, tol: float = ROOT_TOL) -> bool:
    """True when ``root`` is a certified root of psi_kappa.

    The certified upper envelope (value + trunc_bound + 3 mc_se) must lie
    in [-tol, tol]: non-positive up to tol, which the tail bound needs, and
    close enough to zero that theta is the root rather than any point where
    psi_kappa happens to be negative.
    """
    e = root.estimate
    if root.kind != "psi":
        return False
    up = e.value + e.trunc_bound + 3 * e.mc_se
    return -tol <= up <= tol


@dataclass(frozen=True)
class ThetaBracket:
    lower: float
    upper: float
    kappa: int
    slack: float
    per_kappa: tuple = ()

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def valid(self) -> bool:
        return 0 < self.lower <= self.upper + self.slack

    def to_json(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "midpoint": self.midpoint,
            "kappa": self.kappa,
            "slack": self.slack,
            "valid": self.valid,
            "per_kappa": [dict(r) for r in self.per_kappa],
        }


def theta_tilde(
    model: ScoringModel,
    g: GapPenalty,
    kappa_max: int,
    method: str = "exact",
    r_max: int | None = None,
    tol: float = ROOT_TOL,
    **table_kw,
) -> ThetaBracket:
    """Bracket [theta_kappa, theta^_kappa] around theta~ for kappa = 1..kappa_max.

    Widths for every kappa are kept in ``per_kappa`` so the convergence of
    the two root sequences can be inspected.
    """
    rows = []
    lower = upper = None
    slack = 0.0
    for k in range(1, kappa_max + 1):
        lo = root_psi_kappa(model, g, k, None if k == 1 else method, tol=tol, **table_kw)
        kw = dict(table_kw)
        if r_max is not None:
            kw["cutoff"] = max(r_max, k)
        up = root_xi_kappa(model, g, k, method=method, tol=tol, **kw)
        sl = 2 * tol + 3 * (_finite(lo.theta_se) + _finite(up.theta_se))
        rows.append(
            {
                "kappa": k,
                "theta_psi": lo.theta,
                "theta_xi": up.theta,
                "r_kappa": up.r_arg,
                "width": up.theta - lo.theta,
                "slack": sl,
                "method": lo.estimate.method,
            }
        )
        lower, upper, slack = lo.theta, up.theta, sl
    return ThetaBracket(lower, upper, kappa_max, slack, tuple(rows))


def _finite(x: float) -> float:
    return x if math.isfinite(x) else 0.0


# --------------------------------------------------------------------------
# slope of psi at theta~ and predicted growth constants


@dataclass(frozen=True)
class PsiPrime:
    value: float
    theta: float
    kappa: int
    h: float
    richardson_gap: float
    lambda_value: float | None
    lambda_reference: float | None
    consistent: bool | None
    warnings: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return asdict(self)


def _psi_per_kappa(model, g, kappa, method, table_kw):
    if kappa == 1 and method != "mc":
        return lambda t: h1_closed_form(t, g, model).value
    tab = kappa_table(model, g, kappa, method, **table_kw)
    return lambda t: tab.psi(t).value / kappa


def psi_prime(
    model: ScoringModel,
    g: GapPenalty,
    bracket: ThetaBracket,
    kappa: int | None = None,
    h_step: float = 1e-3,
    method: str = "exact",
    lam: float | None = 0.02,
    rel_tol: float = 0.05,
    **table_kw,
) -> PsiPrime:
    """Slope of psi_kappa/kappa at the bracket midpoint by central differences.

    Cross-check: the lambda-shift route recomputes the psi_kappa root for
    the score matrices K +/- lam and converts the root displacement into a
    slope, lam * theta / (theta - theta(lam)); this is compared with the
    central difference taken at the same (unshifted) root.  Relative
    disagreement above ``rel_tol`` marks the result inconsistent.
    """
    kappa = bracket.kappa if kappa is None else kappa
    f = _psi_per_kappa(model, g, kappa, method, table_kw)
    t = bracket.midpoint
    notes = []
    if bracket.width > h_step:
        notes.append(f"bracket width {bracket.width:.3g} exceeds step {h_step:g}")
    d1 = (f(t + h_step) - f(t - h_step)) / (2 * h_step)
    d2 = (f(t + h_step / 2) - f(t - h_step / 2)) / h_step
    value = d2 + (d2 - d1) / 3.0
    lam_value = ref = consistent = None
    if lam:
        m = None if kappa == 1 else method
        base = root_psi_kappa(model, g, kappa, m, envelope="value", **table_kw).theta
        up = root_psi_kappa(model.shifted(lam), g, kappa, m, envelope="value", **table_kw).theta
        dn = root_psi_kappa(model.shifted(-lam), g, kappa, m, envelope="value", **table_kw).theta
        lam_value = 2 * lam * base / (dn - up)
        ref = (f(base + h_step) - f(base - h_step)) / (2 * h_step)
        consistent = abs(lam_value - ref) <= rel_tol * abs(ref)
        if not consistent:
            notes.append(f"lambda-shift slope {lam_value:.6g} disagrees with central difference {ref:.6g}")
    return PsiPrime(value, t, kappa, h_step, abs(d2 - d1), lam_value, ref, consistent, tuple(notes))


@dataclass(frozen=True)
class GrowthConstants:
    score_rate: tuple[float, float]
    match_rate: tuple[float, float]
    psi_prime: float

    def to_json(self) -> dict:
        return asdict(self)


def growth_constants(bracket: ThetaBracket, slope: float | PsiPrime) -> GrowthConstants:
    """Predicted limits of H/log n (2/theta~) and |z*|/log n (2/(theta~ psi'))."""
    d = slope.value if isinstance(slope, PsiPrime) else float(slope)
    if not d > 0:
        raise ModelError(f"psi' must be positive at theta~, got {d}")
    lo, up = bracket.lower, bracket.upper
    return GrowthConstants((2 / up, 2 / lo), (2 / (up * d), 2 / (lo * d)), d)
