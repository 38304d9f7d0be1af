"""Scoring models, gap penalties and candidate alignments.

Everything here is immutable once constructed, so instances can be shared
between worker threads and used as cache keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from scipy import special

__all__ = [
    "ModelError",
    "Alphabet",
    "LetterDist",
    "ScoreMatrix",
    "ScoringModel",
    "GapPenalty",
    "Alignment",
    "eval_gap",
    "gap_table",
    "gamma_tail_sum",
    "gap_weight_sum",
    "letter_pair_mgf",
]

PROB_TOL = 1e-9
FAMILIES = ("affine", "power", "log", "table", "inf")


class ModelError(ValueError):
    """Invalid model input (distribution, matrix, gap penalty or alignment)."""


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple[str, ...]

    def __post_init__(self):
        syms = tuple(self.symbols)
        object.__setattr__(self, "symbols", syms)
        if not 2 <= len(syms) <= 64:
            raise ModelError(f"alphabet size must be in [2, 64], got {len(syms)}")
        if len(set(syms)) != len(syms):
            raise ModelError("alphabet has duplicate symbols")
        for s in syms:
            if not s or any(ch.isspace() for ch in s):
                raise ModelError(f"bad alphabet symbol {s!r}")

    def __len__(self) -> int:
        return len(self.symbols)

    @cached_property
    def index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.symbols)}

    def encode(self, seq: str | Sequence[str]) -> np.ndarray:
        """Map a sequence of symbols to an int array of letter indices."""
        try:
            return np.fromiter((self.index[c] for c in seq), dtype=np.int64)
        except KeyError as exc:
            raise ModelError(f"symbol {exc.args[0]!r} not in alphabet") from None

    def decode(self, codes) -> str:
        sep = "" if all(len(s) == 1 for s in self.symbols) else " "
        return sep.join(self.symbols[int(c)] for c in codes)


@dataclass(frozen=True)
class LetterDist:
    """Letter probabilities, strictly positive and summing to one."""

    alphabet: Alphabet
    probs: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(v) for v in self.probs)
        object.__setattr__(self, "probs", p)
        if len(p) != len(self.alphabet):
            raise ModelError("distribution length does not match alphabet")
        if any(not (0.0 < v <= 1.0) for v in p):
            raise ModelError("letter probabilities must lie in (0, 1]")
        if abs(math.fsum(p) - 1.0) > PROB_TOL:
            raise ModelError(f"letter probabilities sum to {math.fsum(p)!r}, not 1")

    @classmethod
    def from_mapping(cls, alphabet: Alphabet, probs: Mapping[str, float]) -> "LetterDist":
        missing = set(alphabet.symbols) - set(probs)
        extra = set(probs) - set(alphabet.symbols)
        if missing or extra:
            raise ModelError(f"distribution symbols mismatch (missing={sorted(missing)}, extra={sorted(extra)})")
        return cls(alphabet, tuple(probs[s] for s in alphabet.symbols))

    @classmethod
    def uniform(cls, alphabet: Alphabet) -> "LetterDist":
        k = len(alphabet)
        return cls(alphabet, (1.0 / k,) * k)

    @cached_property
    def array(self) -> np.ndarray:
        a = np.array(self.probs)
        a.flags.writeable = False
        return a


@dataclass(frozen=True)
class ScoreMatrix:
    entries: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(float(v) for v in row) for row in self.entries)
        object.__setattr__(self, "entries", rows)
        k = len(rows)
        if any(len(r) != k for r in rows):
            raise ModelError("score matrix must be square")
        for a in range(k):
            for b in range(a + 1, k):
                if rows[a][b] != rows[b][a]:
                    raise ModelError(f"score matrix not symmetric at ({a}, {b})")
        if not all(math.isfinite(v) for r in rows for v in r):
            raise ModelError("score matrix entries must be finite")
        if self.kmax <= 0:
            raise ModelError("score matrix needs a positive entry (K_max > 0)")

    @classmethod
    def match_mismatch(cls, size: int, match: float, mismatch: float) -> "ScoreMatrix":
        return cls(tuple(tuple(match if a == b else mismatch for b in range(size)) for a in range(size)))

    @cached_property
    def array(self) -> np.ndarray:
        a = np.array(self.entries, dtype=np.float64)
        a.flags.writeable = False
        return a

    @property
    def kmax(self) -> float:
        return max(max(r) for r in self.entries)

    @property
    def kmin(self) -> float:
        return min(min(r) for r in self.entries)

    def shifted(self, lam: float) -> "ScoreMatrix":
        """Return the matrix with ``lam`` added to every entry."""
        return ScoreMatrix(tuple(tuple(v + lam for v in r) for r in self.entries))


@dataclass(frozen=True)
class ScoringModel:
    """Alphabet, letter law and score matrix with E[K] < 0 and K_max > 0."""

    alphabet: Alphabet
    dist: LetterDist
    scores: ScoreMatrix
    check_drift: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.dist.alphabet != self.alphabet:
            raise ModelError("distribution is over a different alphabet")
        if len(self.scores.entries) != len(self.alphabet):
            raise ModelError("score matrix size does not match alphabet")
        if self.check_drift and not self.mean_score < 0:
            raise ModelError(f"expected letter-pair score must be negative, got {self.mean_score}")

    @classmethod
    def uniform(cls, symbols: str | Sequence[str], match: float, mismatch: float) -> "ScoringModel":
        alpha = Alphabet(tuple(symbols))
        return cls(alpha, LetterDist.uniform(alpha), ScoreMatrix.match_mismatch(len(alpha), match, mismatch))

    @property
    def kmax(self) -> float:
        return self.scores.kmax

    @property
    def kmin(self) -> float:
        return self.scores.kmin

    @cached_property
    def pair_probs(self) -> np.ndarray:
        p = self.dist.array
        return np.outer(p, p)

    @property
    def mean_score(self) -> float:
        return float(np.sum(self.pair_probs * self.scores.array))

    def shifted(self, lam: float) -> "ScoringModel":
        """Same model with K replaced by K + lam; the drift condition is not re-checked."""
        return ScoringModel(self.alphabet, self.dist, self.scores.shifted(lam), check_drift=False)


@dataclass(frozen=True)
class GapPenalty:
    """Concave gap penalty g(k) = init + gamma(k) for k >= 1, g(0) = 0.

    ``family`` selects gamma: ``affine`` rate*(k-1), ``power`` rate*(k-1)**alpha,
    ``log`` rate*log(k), ``table`` explicit gamma(1..K), ``inf`` for the
    gapless score (g(k) = inf for k >= 1).  A table must declare the
    asymptotic class of its tail through ``tail`` (a closed-family penalty
    whose gamma is used beyond the table) or be flagged unknown with
    ``tail=None``.
    """

    family: str
    init: float = 0.0
    rate: float = 0.0
    alpha: float = 1.0
    table: tuple[float, ...] = ()
    tail: "GapPenalty | None" = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ModelError(f"unknown gap family {self.family!r}")
        if self.family == "inf":
            return
        if not (math.isfinite(self.init) and self.init >= 0):
            raise ModelError("gap initiation cost must be finite and nonnegative")
        if self.family in ("affine", "power", "log") and not self.rate > 0:
            raise ModelError("gap rate must be positive")
        if self.family == "power" and not 0 < self.alpha < 1:
            raise ModelError("power-law exponent must lie in (0, 1)")
        if self.family == "table":
            tab = tuple(float(v) for v in self.table)
            object.__setattr__(self, "table", tab)
            if not tab or tab[0] != 0.0:
                raise ModelError("gap table must start with gamma(1) = 0")
            if self.tail is not None and self.tail.family not in ("affine", "power", "log"):
                raise ModelError("table tail class must be affine, power or log")
            self._check_table()

    def _check_table(self):
        g = [0.0] + [self.init + v for v in self.table]
        for k in range(1, len(g)):
            if g[k] < g[k - 1]:
                raise ModelError(f"gap penalty decreases at k={k}")
            if k + 1 < len(g) and g[k + 1] - g[k] > g[k] - g[k - 1] + 1e-12:
                raise ModelError(f"gap penalty not concave at k={k}")

    # constructors -------------------------------------------------------
    @classmethod
    def affine(cls, init: float, rate: float) -> "GapPenalty":
        return cls("affine", init, rate)

    @classmethod
    def power(cls, init: float, rate: float, alpha: float) -> "GapPenalty":
        return cls("power", init, rate, alpha)

    @classmethod
    def logarithmic(cls, init: float, rate: float) -> "GapPenalty":
        return cls("log", init, rate)

    @classmethod
    def infinite(cls) -> "GapPenalty":
        return cls("inf")

    @classmethod
    def custom(cls, init: float, gammas: Sequence[float], tail: "GapPenalty | None" = None) -> "GapPenalty":
        return cls("table", init, table=tuple(gammas), tail=tail)

    # evaluation ---------------------------------------------------------
    @property
    def is_infinite(self) -> bool:
        return self.family == "inf"

    @property
    def asymptotic_class(self) -> str:
        """Closed family governing the tail, or ``"unknown"``."""
        if self.family == "table":
            return self.tail.family if self.tail is not None else "unknown"
        return self.family

    def gamma(self, k: int) -> float:
        if k < 1:
            raise ValueError("gamma is defined for k >= 1")
        fam = self.family
        if fam == "affine":
            return self.rate * (k - 1)
        if fam == "power":
            return self.rate * (k - 1) ** self.alpha
        if fam == "log":
            return self.rate * math.log(k)
        if fam == "table":
            if k > len(self.table):
                raise ModelError(f"gap table has {len(self.table)} entries, asked for gamma({k})")
            return self.table[k - 1]
        return math.inf

    def __call__(self, k: int) -> float:
        return eval_gap(self, k)

    def describe(self) -> str:
        if self.family == "inf":
            return "inf"
        if self.family == "affine":
            return f"affine:{self.init:g},{self.rate:g}"
        if self.family == "power":
            return f"power:{self.init:g},{self.rate:g},{self.alpha:g}"
        if self.family == "log":
            return f"log:{self.init:g},{self.rate:g}"
        return f"table[{len(self.table)}]:{self.asymptotic_class}"


def eval_gap(g: GapPenalty, k: int) -> float:
    """Penalty of a gap of length ``k`` (0 for k = 0)."""
    if k < 0:
        raise ValueError("gap length must be nonnegative")
    if k == 0:
        return 0.0
    if g.is_infinite:
        return math.inf
    return g.init + g.gamma(k)


def gap_table(g: GapPenalty, kmax: int) -> np.ndarray:
    """Array ``[g(0), ..., g(kmax)]`` for the numeric kernels."""
    out = np.empty(kmax + 1)
    out[0] = 0.0
    if kmax == 0:
        return out
    k = np.arange(1, kmax + 1, dtype=np.float64)
    fam = g.family
    if fam == "inf":
        out[1:] = np.inf
    elif fam == "affine":
        out[1:] = g.init + g.rate * (k - 1)
    elif fam == "power":
        out[1:] = g.init + g.rate * (k - 1) ** g.alpha
    elif fam == "log":
        out[1:] = g.init + g.rate * np.log(k)
    else:
        if kmax > len(g.table):
            raise ModelError(f"gap table has {len(g.table)} entries, need {kmax}")
        out[1:] = g.init + np.asarray(g.table[:kmax])
    return out


def _closed_tail_bound(g: GapPenalty, theta: float, K: int) -> float:
    """Upper bound on sum_{k > K} exp(-theta * gamma(k)) for a closed family, K >= 1."""
    if g.family == "affine":
        q = theta * g.rate
        return math.exp(-q * K) / -math.expm1(-q)
    if g.family == "power":
        # sum_{k>K} f(k) <= int_K^inf exp(-c (x-1)^a) dx, f decreasing
        c, a = theta * g.rate, g.alpha
        s = 1.0 / a
        return float(s * c ** (-s) * special.gamma(s) * special.gammaincc(s, c * (K - 1) ** a))
    if g.family == "log":
        p = theta * g.rate
        if p <= 1.0:
            return math.inf
        return K ** (1.0 - p) / (p - 1.0)
    raise ModelError(f"no closed tail bound for family {g.family!r}")


def gamma_tail_sum(g: GapPenalty, theta: float, K: int | None = None) -> tuple[float, float]:
    """Partial sum of exp(-theta*gamma(k)) over k = 1..K and a bound on the rest.

    Returns ``(value, remainder_bound)``.  ``K=None`` requests the full
    series: exact for the affine and log families, otherwise a partial sum taken far
    enough out that the certified remainder is negligible.  A divergent
    series is reported with ``remainder_bound = inf`` rather than raised.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    if g.is_infinite:
        return 0.0, 0.0
    if g.family == "table" and g.tail is None:
        raise ModelError("gap table with unknown asymptotic class has no tail bound")
    if K is None:
        if g.family == "affine":
            return -1.0 / math.expm1(-theta * g.rate), 0.0
        if g.family == "log" and theta * g.rate > 1.0:
            # sum of k^(-theta*rate) is the Riemann zeta function
            return float(special.zeta(theta * g.rate, 1.0)), 0.0
        K = _auto_cutoff(g, theta)
    if K < 0:
        raise ValueError("K must be nonnegative")

    if g.family == "table":
        n = len(g.table)
        tab = np.asarray(g.table)
        ks = min(K, n)
        value = float(np.sum(np.exp(-theta * tab[:ks])))
        value += math.fsum(math.exp(-theta * g.tail.gamma(k)) for k in range(n + 1, K + 1))
        # beyond the table gamma follows the declared tail class
        rem = float(np.sum(np.exp(-theta * tab[ks:]))) + _closed_tail_bound(g.tail, theta, max(K, n))
        return value, rem

    if K == 0:
        return 0.0, 1.0 + _closed_tail_bound(g, theta, 1)
    gam = gap_table(GapPenalty(g.family, 0.0, g.rate, g.alpha), K)[1:]
    return float(np.sum(np.exp(-theta * gam))), _closed_tail_bound(g, theta, K)


def _auto_cutoff(g: GapPenalty, theta: float, rel: float = 1e-15) -> int:
    """Smallest power-of-two cutoff whose remainder bound is below ``rel``."""
    if g.family == "log" and theta * g.rate <= 1.0:
        return 1 << 12
    K = 16
    while K < (1 << 26):
        if g.family == "table":
            if K >= len(g.table) and _closed_tail_bound(g.tail, theta, K) < rel:
                return K
        elif _closed_tail_bound(g, theta, K) < rel:
            return K
        K *= 2
    return K


def gap_weight_sum(g: GapPenalty, theta: float, K: int | None = None) -> tuple[float, float]:
    """Sum of exp(-theta*g(k)) over k = 0..K plus a bound on k > K (K=None: whole series)."""
    if g.is_infinite:
        return 1.0, 0.0
    scale = math.exp(-theta * g.init)
    if K is None:
        v, r = gamma_tail_sum(g, theta, None)
        return 1.0 + scale * v, scale * r
    if K == 0:
        v, r = gamma_tail_sum(g, theta, 0)
        return 1.0, scale * r
    v, r = gamma_tail_sum(g, theta, K)
    return 1.0 + scale * v, scale * r


def letter_pair_mgf(model: ScoringModel, theta: float) -> float:
    """E exp(theta * K(x1, y1)) under the product letter law."""
    return float(np.sum(model.pair_probs * np.exp(theta * model.scores.array)))


@dataclass(frozen=True)
class Alignment:
    """Matched position pairs (1-based), strictly increasing in both coordinates."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple((int(i), int(j)) for i, j in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not pairs:
            raise ModelError("an alignment needs at least one matched pair")
        if pairs[0][0] < 1 or pairs[0][1] < 1:
            raise ModelError("alignment positions are 1-based")
        for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
            if not (i1 > i0 and j1 > j0):
                raise ModelError("alignment pairs must increase strictly in both coordinates")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)
