"""Tail probabilities P{H(x_m, y_n) >= c}.

Three routes are offered: the analytic bound
min(1, mn exp(theta (kappa-1) K_max - theta c)) valid at a root theta of
psi_kappa, crude Monte Carlo, and importance sampling built on the
segment-planting change of measure (kappa = 1).

Importance sampling draws each planted segment under the tilted law nu:
lengths (r, s) with probability proportional to exp(-theta g(r-1)) exp(-theta g(s-1)),
the first letter pair tilted by exp(theta K(a, b)), remaining letters from mu.
The reference path measure keeps nu's length law but draws every letter from
mu; its (x, y)-marginal is exactly mu x mu, and the likelihood ratio of a path
is the product over accepted segments of mgf(theta) exp(-theta K(a, b)).
A segment rejected for running past the sequence end has its letters redrawn
from mu in the fill step in both measures, so it carries weight one.

Those plain weights grow geometrically along long paths, so the estimator
also (i) stops planting once the running segment sum drops below a floor,
which is a rule of the path alone and keeps the reference marginal intact,
and (ii) draws a fraction of paths from the reference measure itself
(defensive mixture), which bounds every weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from .align import alignment_score, fixed_match_score, local_align
from .asymptotics import ROOT_TOL, KappaRoot, h1_closed_form, verify_root
from .model import Alignment, GapPenalty, ModelError, ScoringModel, gap_table, gap_weight_sum, letter_pair_mgf
from .parallel import DEFAULT_SHARDS, run_ordered, shard_rngs, split_counts

__all__ = [
    "TailEstimate",
    "TiltedSegmentSampler",
    "SimPath",
    "LRCheck",
    "LRViolation",
    "pvalue_bound",
    "sample_local_scores",
    "direct_mc_pvalue",
    "direct_mc_pvalues",
    "build_tilted_sampler",
    "simulate_Q",
    "verify_lr_inequality",
    "is_pvalue",
    "rate_diagnostic",
]

RESIDUAL_TOL = 1e-9
DEFENSIVE = 0.2
IS_FLOOR = 0.0
MAX_CAP = 1 << 20


class LRViolation(RuntimeError):
    """A link of the likelihood-ratio chain failed; indicates a bug."""


@dataclass(frozen=True)
class TailEstimate:
    p_hat: float | None
    se: float
    bound: float | None
    method: str  # direct_mc | importance | bound_only
    c: float
    m: int
    n: int
    theta: float | None
    kappa: int | None
    N: int
    seed: int | None

    def to_json(self) -> dict:
        return dict(self.__dict__)

    @property
    def consistent_with_bound(self) -> bool:
        if self.p_hat is None or self.bound is None:
            return True
        return self.p_hat - 3 * self.se <= self.bound


# --------------------------------------------------------------------------
# analytic bound


def pvalue_bound(c: float, m: int, n: int, root: KappaRoot, kmax: float, tol: float = ROOT_TOL) -> float:
    """min(1, mn exp(theta (kappa-1) K_max) exp(-theta c)) at a verified root of psi_kappa.

    The bound only holds where psi_kappa(theta) <= 0, so ``root`` must carry
    a psi_kappa estimate whose certified upper envelope is within ``tol`` of 0
    (see :func:`~gapstat.asymptotics.verify_root`).
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    if not verify_root(root, tol):
        raise ModelError(
            f"theta={root.theta:.9g} is not a verified psi_{root.kappa} root "
            f"(value + trunc + 3se = {root.estimate.upper + 3 * root.estimate.mc_se:.3g}, outside +/-{tol:g})"
        )
    t, k = root.theta, root.kappa
    log_b = math.log(m) + math.log(n) + t * (k - 1) * kmax - t * c
    return 1.0 if log_b >= 0 else math.exp(log_b)


# --------------------------------------------------------------------------
# crude Monte Carlo


def _score_batch(X, Y, K, g: GapPenalty, gt):
    if g.is_infinite:
        return kern.gapless_scores_batch(X, Y, K)
    return kern.local_scores_batch(X, Y, K, gt)


def sample_local_scores(
    m: int,
    n: int,
    model: ScoringModel,
    g: GapPenalty,
    N: int,
    seed: int = 0,
    shards: int = DEFAULT_SHARDS,
    threads: int | None = None,
    chunk: int = 4096,
) -> np.ndarray:
    """H(x_m, y_n) for N independent mu x mu pairs, in a seed-determined order."""
    if N < 1:
        raise ValueError("N must be >= 1")
    K = np.ascontiguousarray(model.scores.array)
    gt = gap_table(g, max(m, n))
    p = model.dist.array
    base = len(model.alphabet)

    def shard(rng, count):
        out = np.empty(count)
        for a in range(0, count, chunk):
            b = min(count, a + chunk)
            X = rng.choice(base, size=(b - a, m), p=p)
            Y = rng.choice(base, size=(b - a, n), p=p)
            out[a:b] = _score_batch(X, Y, K, g, gt)
        return out

    jobs = [(r, k) for r, k in zip(shard_rngs(seed, shards), split_counts(N, shards)) if k > 0]
    return np.concatenate(run_ordered(shard, jobs, threads))


def _binomial(scores: np.ndarray, c: float) -> tuple[float, float]:
    N = scores.size
    p = float(np.count_nonzero(scores >= c)) / N
    return p, math.sqrt(p * (1 - p) / N)


def direct_mc_pvalue(
    c: float,
    m: int,
    n: int,
    model: ScoringModel,
    g: GapPenalty,
    N: int,
    seed: int = 0,
    shards: int = DEFAULT_SHARDS,
    threads: int | None = None,
    bound: float | None = None,
) -> TailEstimate:
    """Fraction of N random pairs with H >= c, with its binomial standard error."""
    return direct_mc_pvalues([c], m, n, model, g, N, seed, shards, threads, [bound])[0]


def direct_mc_pvalues(cs, m, n, model, g, N, seed=0, shards=DEFAULT_SHARDS, threads=None, bounds=None) -> list[TailEstimate]:
    """``direct_mc_pvalue`` for several thresholds from one shared sample."""
    H = sample_local_scores(m, n, model, g, N, seed, shards, threads)
    bounds = [None] * len(cs) if bounds is None else bounds
    out = []
    for c, b in zip(cs, bounds):
        p, se = _binomial(H, c)
        out.append(TailEstimate(p, se, b, "direct_mc", float(c), m, n, None, None, N, seed))
    return out


# --------------------------------------------------------------------------
# tilted sampler (kappa = 1)


@dataclass(frozen=True)
class TiltedSegmentSampler:
    """Segment-pair law nu at a root theta of psi_1, truncated at lengths <= cap.

    ``length_probs[r-1]`` is the (r and s alike) marginal of segment lengths,
    ``pair_probs`` the tilted law of the first letter pair.  ``mass`` is the
    nu-mass of the retained lengths and ``residual`` a certified bound on the
    rest; ``mass + residual`` equals h_1(theta) = 1 up to the root tolerance.
    """

    theta: float
    kappa: int
    model: ScoringModel
    g: GapPenalty
    cap: int
    length_probs: np.ndarray
    pair_probs: np.ndarray
    mgf: float
    mass: float
    residual: float
    root: KappaRoot | None = None

    def __post_init__(self):
        object.__setattr__(self, "gaps", gap_table(self.g, self.cap - 1))

    @property
    def total_mass(self) -> float:
        return self.mass + self.residual

    @property
    def log_mgf(self) -> float:
        return math.log(self.mgf)


    def segment_log_density_ratio(self, r: int, s: int, a: int, b: int) -> float:
        """log of (sampled probability of the segment) / (mu-probability of its letters)."""
        mu = self.model.dist.array
        return (
            math.log(self.length_probs[r - 1])
            + math.log(self.length_probs[s - 1])
            + math.log(self.pair_probs[a, b])
            - math.log(mu[a])
            - math.log(mu[b])
        )


def build_tilted_sampler(
    root: KappaRoot | float,
    model: ScoringModel,
    g: GapPenalty,
    kappa: int = 1,
    cap: int | None = None,
    tol: float = ROOT_TOL,
    require_root: bool = True,
) -> TiltedSegmentSampler:
    """Tabulate nu for kappa = 1 at a root of psi_1.

    With ``cap=None`` the smallest length cap whose residual nu-mass is below
    1e-9 is used; an explicit cap with larger residual is an error.  The
    importance weights stay exact for any theta > 0 because the sampled
    length law is renormalized; ``require_root=False`` allows such off-root
    samplers when psi_1 has no root (then ``mass + residual`` is h_1(theta)
    rather than 1).
    """
    if kappa != 1:
        raise ModelError("the tilted sampler is implemented for kappa = 1 only")
    theta = root.theta if isinstance(root, KappaRoot) else float(root)
    h1 = h1_closed_form(theta, g, model)
    if require_root and not abs(h1.value) <= tol:
        raise ModelError(f"theta={theta:.9g} is not a psi_1 root (psi_1 = {h1.value:.3g})")
    mgf = letter_pair_mgf(model, theta)

    def masses(R):
        S, T = gap_weight_sum(g, theta, R - 1)
        return mgf * S * S, mgf * ((S + T) ** 2 - S * S)

    if cap is None:
        cap = 1
        while masses(cap)[1] >= RESIDUAL_TOL * masses(cap)[0]:
            cap *= 2
            if cap > MAX_CAP:
                raise ModelError(f"residual nu-mass stays above {RESIDUAL_TOL:g} up to cap {MAX_CAP}")
        lo, hi = cap // 2 + 1, cap
        while lo < hi:
            mid = (lo + hi) // 2
            if masses(mid)[1] < RESIDUAL_TOL * masses(mid)[0]:
                hi = mid
            else:
                lo = mid + 1
        cap = max(1, hi)
    mass, residual = masses(cap)
    if not residual < RESIDUAL_TOL * mass:
        raise ModelError(f"residual nu-mass {residual:.3g} at cap {cap} exceeds {RESIDUAL_TOL:g}; raise the cap")
    w = np.exp(-theta * gap_table(g, cap - 1))
    mu = model.dist.array
    tilt = np.outer(mu, mu) * np.exp(theta * model.scores.array)
    return TiltedSegmentSampler(
        theta, 1, model, g, cap, w / w.sum(), tilt / tilt.sum(), mgf, mass, residual,
        root if isinstance(root, KappaRoot) else None,
    )


@dataclass(frozen=True)
class Segment:
    i: int  # 1-based start in x
    j: int
    r: int
    s: int
    a: int  # first letters
    b: int
    G: float


@dataclass(frozen=True)
class SimPath:
    start: tuple[int, int]
    segments: tuple[Segment, ...]
    S: float
    reason: str  # threshold_reached | overflow | aborted
    log_weight: float  # log dP'/dQ
    log_lr: float  # log of sampled-law / mu-law over the accepted segments

    @property
    def planted(self) -> Alignment | None:
        if not self.segments:
            return None
        return Alignment(tuple((sg.i, sg.j) for sg in self.segments))


def _draw(rng, cdf):
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))


def _letters(rng, cdf, k):
    return np.searchsorted(cdf, rng.random(k) * cdf[-1], side="right")


def _simulate(m, n, c, smp: TiltedSegmentSampler, rng, len_cdf, pair_cdf, mu_cdf, flat_cdf=None, floor=-math.inf):
    base = len(smp.model.alphabet)
    K = smp.model.scores.array
    i0 = int(rng.integers(1, m + 1))
    j0 = int(rng.integers(1, n + 1))
    x = np.empty(m, np.int64)
    y = np.empty(n, np.int64)
    x[: i0 - 1] = _letters(rng, mu_cdf, i0 - 1)
    y[: j0 - 1] = _letters(rng, mu_cdf, j0 - 1)
    i, j, S = i0, j0, 0.0
    segs = []
    logw = loglr = 0.0
    thresh = c - (smp.kappa - 1) * smp.model.kmax
    reason = "overflow"
    while True:
        r = _draw(rng, len_cdf) + 1
        s = _draw(rng, len_cdf) + 1
        if i + r - 1 > m or j + s - 1 > n:
            break
        a, b = divmod(_draw(rng, pair_cdf if flat_cdf is None else flat_cdf), base)
        x[i - 1], y[j - 1] = a, b
        x[i : i + r - 1] = _letters(rng, mu_cdf, r - 1)
        y[j : j + s - 1] = _letters(rng, mu_cdf, s - 1)
        G = K[a, b] - smp.gaps[r - 1] - smp.gaps[s - 1]
        segs.append(Segment(i, j, r, s, a, b, G))
        S += G
        logw += smp.log_mgf - smp.theta * K[a, b]
        loglr += smp.segment_log_density_ratio(r, s, a, b)
        i, j = i + r, j + s
        if S >= thresh:
            reason = "threshold_reached"
            break
        if S < floor:
            reason = "aborted"
            break
    x[i - 1 :] = _letters(rng, mu_cdf, m - i + 1)
    y[j - 1 :] = _letters(rng, mu_cdf, n - j + 1)
    return x, y, SimPath((i0, j0), tuple(segs), S, reason, logw, loglr)


def _cdfs(smp: TiltedSegmentSampler):
    return np.cumsum(smp.length_probs), np.cumsum(smp.pair_probs.ravel()), np.cumsum(smp.model.dist.array)


def _flat_cdf(smp: TiltedSegmentSampler):
    return np.cumsum(smp.model.pair_probs.ravel())


def simulate_Q(m: int, n: int, c: float, sampler: TiltedSegmentSampler, seed: int | np.random.Generator = 0, floor: float = -math.inf):
    """Draw (x, y) from the planting measure Q.

    Uniform start cell, letters before it from mu; then planted segments
    from nu until the running sum of segment scores reaches
    c - (kappa-1) K_max or a segment would run past an end; everything from
    the current position on is filled from mu.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _simulate(m, n, c, sampler, rng, *_cdfs(sampler), None, floor)


# --------------------------------------------------------------------------
# likelihood-ratio chain


@dataclass(frozen=True)
class LRCheck:
    log_lr: float
    theta_sum_G: float
    sum_G: float
    threshold: float
    S_planted: float
    sum_G_decomposed: float
    H: float
    ok: bool
    failures: tuple[str, ...] = ()


def verify_lr_inequality(path: SimPath, x, y, m: int, n: int, sampler: TiltedSegmentSampler, c: float, atol: float = 1e-9, raise_on_failure: bool = True) -> LRCheck:
    """Check every link of the likelihood-ratio chain on a threshold-reaching path.

    Links: the accumulated log likelihood ratio equals theta * sum G; sum G
    reaches the threshold; the planted alignment zeta scores at least sum G
    in (x, y) (its final trailing gap is free); re-cutting (x, y) into
    segments that each end just before the next match of zeta gives
    segment scores summing to at least S_zeta; and H >= S_zeta.
    """
    if path.reason != "threshold_reached":
        raise ValueError("path did not reach the threshold")
    if len(x) != m or len(y) != n:
        raise ValueError("sequence lengths do not match (m, n)")
    K = sampler.model.scores.array
    g = sampler.g
    kappa = sampler.kappa
    th = sampler.theta
    sum_G = math.fsum(sg.G for sg in path.segments)
    zeta = path.planted
    S_z = alignment_score(zeta, x, y, K, g)
    # re-cut: segment eta runs from match eta up to just before match eta+1; the last ends at its match
    pairs = zeta.pairs
    dec = []
    for e, (i, j) in enumerate(pairs):
        if e + 1 < len(pairs):
            i1, j1 = pairs[e + 1][0] - 1, pairs[e + 1][1] - 1
        else:
            i1, j1 = i + kappa - 1, j + kappa - 1
        dec.append(fixed_match_score(kappa, x[i - 1 : i1], y[j - 1 : j1], K, g))
    sum_dec = math.fsum(dec)
    if g.is_infinite:
        H = float(kern.gapless_score(np.asarray(x, np.int64), np.asarray(y, np.int64), np.ascontiguousarray(K)))
    else:
        H = local_align(x, y, K, g).score
    thresh = c - (kappa - 1) * sampler.model.kmax
    fails = []
    if not abs(path.log_lr - th * sum_G) <= atol * max(1.0, abs(th * sum_G)) + len(path.segments) * abs(math.log(sampler.mass)):
        fails.append(f"log LR {path.log_lr!r} != theta*sumG {th * sum_G!r}")
    if not sum_G >= thresh:
        fails.append(f"sum G {sum_G} below threshold {thresh}")
    if not S_z >= sum_G - atol:
        fails.append(f"S_zeta {S_z} < sum G {sum_G}")
    if not sum_dec >= S_z - atol:
        fails.append(f"re-cut segment scores {sum_dec} < S_zeta {S_z}")
    if not H >= S_z - atol:
        fails.append(f"H {H} < S_zeta {S_z}")
    rep = LRCheck(path.log_lr, th * sum_G, sum_G, thresh, S_z, sum_dec, H, not fails, tuple(fails))
    if fails and raise_on_failure:
        raise LRViolation("; ".join(fails))
    return rep


# --------------------------------------------------------------------------
# importance sampling


def _is_shard(m, n, c, smp, defensive, floor, rng, count):
    cdfs = _cdfs(smp)
    flat = _flat_cdf(smp)
    K = np.ascontiguousarray(smp.model.scores.array)
    gt = gap_table(smp.g, max(m, n))
    la, lb = (math.log(defensive), math.log1p(-defensive)) if defensive > 0 else (-math.inf, 0.0)
    vals = np.zeros(count)
    for t in range(count):
        untilted = defensive > 0 and rng.random() < defensive
        x, y, path = _simulate(m, n, c, smp, rng, *cdfs, flat if untilted else None, floor)
        if smp.g.is_infinite:
            H = kern.gapless_score(x, y, K)
        else:
            H = kern.local_score(x, y, K, gt)
        if H >= c:
            # dP'/d(defensive mixture) = 1 / (a + (1 - a) dQ/dP')
            vals[t] = math.exp(-np.logaddexp(la, lb - path.log_weight))
    return vals


def is_pvalue(
    c: float,
    m: int,
    n: int,
    sampler: TiltedSegmentSampler,
    N: int,
    seed: int = 0,
    shards: int = DEFAULT_SHARDS,
    threads: int | None = None,
    defensive: float = DEFENSIVE,
    floor: float = IS_FLOOR,
) -> TailEstimate:
    """Importance-sampling estimate of P{H(x_m, y_n) >= c}.

    Each replicate draws a path from the mixture ``defensive`` P' +
    (1 - ``defensive``) Q and scores 1{H >= c} dP'/d(mixture).  Planting
    stops early when the running segment sum falls below ``floor``.  With
    ``defensive=0`` and ``floor=-inf`` this is the plain estimator
    1{H >= c} dP'/dQ of the literal scheme: unbiased, but its weights on
    long overflowing paths grow geometrically and the sample mean is then
    badly skewed.  The standard error includes the truncated nu-mass as a
    bias allowance.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0 <= defensive < 1:
        raise ValueError("defensive must lie in [0, 1)")
    jobs = [(m, n, c, sampler, defensive, floor, r, k) for r, k in zip(shard_rngs(seed, shards), split_counts(N, shards)) if k > 0]
    v = np.concatenate(run_ordered(_is_shard, jobs, threads))
    p = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(N)) if N > 1 else math.inf
    se += sampler.residual
    bound = None
    if sampler.root is not None and verify_root(sampler.root):
        bound = pvalue_bound(c, m, n, sampler.root, sampler.model.kmax)
    return TailEstimate(p, se, bound, "importance", float(c), m, n, sampler.theta, sampler.kappa, N, seed)


def rate_diagnostic(cs, m, n, model, g, N, seed=0, min_hits=50, shards=DEFAULT_SHARDS, threads=None) -> list[dict]:
    """-log(p_hat)/c from direct Monte Carlo over a threshold grid.

    Rows whose hit count is below ``min_hits`` are marked unresolved.
    """
    H = sample_local_scores(m, n, model, g, N, seed, shards, threads)
    rows = []
    for c in cs:
        hits = int(np.count_nonzero(H >= c))
        p = hits / N
        rows.append(
            {
                "c": float(c),
                "hits": hits,
                "p_hat": p,
                "se": math.sqrt(p * (1 - p) / N),
                "rate": -math.log(p) / c if hits and c > 0 else math.inf,
                "resolved": hits >= min_hits,
            }
        )
    return rows
