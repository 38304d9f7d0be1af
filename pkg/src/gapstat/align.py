"""Alignment scores under a concave gap penalty.

All engines take letter-code arrays (see :meth:`Alphabet.encode`), the
score matrix as a 2-D float array and a :class:`GapPenalty`.  Positions in
alignments are 1-based, matching :class:`Alignment`.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from .model import Alignment, GapPenalty, ModelError, eval_gap, gap_table

__all__ = [
    "LocalResult",
    "DPWorkspace",
    "alignment_score",
    "restricted_score",
    "local_align",
    "local_align_prefixes",
    "global_score",
    "global_score_prefixes",
    "fixed_match_score",
    "gapless_local",
    "brute_force_local",
    "brute_force_global",
    "brute_force_fixed",
    "BRUTE_FORCE_MAX_LEN",
]

BRUTE_FORCE_MAX_LEN = 7


@dataclass(frozen=True)
class LocalResult:
    score: float
    optimal: Alignment

    @property
    def match_count(self) -> int:
        return len(self.optimal)


class DPWorkspace:
    """Reusable DP tables for repeated alignments of one size.

    A workspace serves one alignment at a time; give each worker its own.
    """

    def __init__(self, m: int, n: int, trace: bool = True):
        self.shape = (m + 1, n + 1)
        self.M = np.empty(self.shape)
        self.Q = np.empty(self.shape)
        tshape = self.shape if trace else (1, 1)
        self.Marg = np.empty(tshape, np.int32)
        self.Qarg = np.empty(tshape, np.int32)
        self.trace = trace

    def fits(self, m: int, n: int, trace: bool) -> bool:
        return self.shape == (m + 1, n + 1) and (self.trace or not trace)


def _codes(seq) -> np.ndarray:
    a = np.ascontiguousarray(seq, dtype=np.int64)
    if a.ndim != 1:
        raise ValueError("sequence must be one-dimensional")
    return a


def _scores(K) -> np.ndarray:
    return np.ascontiguousarray(K, dtype=np.float64)


def _nonempty(x, y):
    if len(x) == 0 or len(y) == 0:
        raise ModelError("sequences must be nonempty")


def alignment_score(z: Alignment, x, y, K, g: GapPenalty) -> float:
    """Score of alignment ``z``: letter-pair scores minus interior gap penalties.

    Returns -inf when ``z`` runs past the end of either sequence.
    """
    m, n = len(x), len(y)
    pairs = z.pairs
    if pairs[-1][0] > m or pairs[-1][1] > n:
        return -math.inf
    K = np.asarray(K)
    total = 0.0
    for i, j in pairs:
        total += K[x[i - 1], y[j - 1]]
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        total -= eval_gap(g, i1 - i0 - 1) + eval_gap(g, j1 - j0 - 1)
    return total


def restricted_score(z: Alignment, x, y, K, g: GapPenalty) -> float:
    """Alignment score with the unaligned flanks on both ends also penalized."""
    s = alignment_score(z, x, y, K, g)
    if s == -math.inf:
        return s
    (i1, j1), (iu, ju) = z.pairs[0], z.pairs[-1]
    m, n = len(x), len(y)
    return s - eval_gap(g, i1 - 1) - eval_gap(g, j1 - 1) - eval_gap(g, m - iu) - eval_gap(g, n - ju)


def _fill_local(x, y, K, g, ws: DPWorkspace | None, trace: bool):
    m, n = len(x), len(y)
    if ws is None or not ws.fits(m, n, trace):
        ws = DPWorkspace(m, n, trace)
    gt = gap_table(g, max(m, n))
    kern.local_fill(x, y, K, gt, ws.M, ws.Q, ws.Marg, ws.Qarg, trace, True)
    return ws


def local_align(x, y, K, g: GapPenalty, workspace: DPWorkspace | None = None) -> LocalResult:
    """Local alignment score H and the canonical optimal alignment.

    H is the maximum over all nonempty alignments, so it is negative when
    every letter pair scores negatively.  Among optimal alignments the one
    ending at the lexicographically smallest cell is returned; along the
    traceback a fresh start beats an equal-scoring extension, and smaller
    predecessor cells (row first) win remaining ties.

    Cost is O(mn(m+n)) in the worst case; predecessors whose gap alone
    costs more than the best score seen so far are skipped, which is exact
    and makes logarithmic-domain penalties run in near O(mn).
    """
    x, y, K = _codes(x), _codes(y), _scores(K)
    _nonempty(x, y)
    if g.is_infinite:
        raise ModelError("use gapless_local for the infinite gap penalty")
    ws = _fill_local(x, y, K, g, workspace, True)
    best, i, j = kern.argmax_corner(ws.M, len(x), len(y))
    pairs = kern.traceback(ws.Marg, ws.Qarg, i, j)
    return LocalResult(float(best), Alignment(tuple(map(tuple, pairs.tolist()))))


def local_align_prefixes(x, y, K, g: GapPenalty, sizes, workspace: DPWorkspace | None = None) -> list[LocalResult]:
    """``local_align(x[:n], y[:n])`` for each n in ``sizes`` from a single DP fill."""
    x, y, K = _codes(x), _codes(y), _scores(K)
    _nonempty(x, y)
    ws = _fill_local(x, y, K, g, workspace, True)
    out = []
    for n in sizes:
        if not 1 <= n <= min(len(x), len(y)):
            raise ValueError(f"prefix size {n} out of range")
        best, i, j = kern.argmax_corner(ws.M, n, n)
        pairs = kern.traceback(ws.Marg, ws.Qarg, i, j)
        out.append(LocalResult(float(best), Alignment(tuple(map(tuple, pairs.tolist())))))
    return out


def global_score(x, y, K, g: GapPenalty) -> float:
    """Global score G: best restricted score over all nonempty alignments."""
    x, y, K = _codes(x), _codes(y), _scores(K)
    _nonempty(x, y)
    m, n = len(x), len(y)
    M, Q = np.empty((m + 1, n + 1)), np.empty((m + 1, n + 1))
    gt = gap_table(g, max(m, n))
    kern.global_fill(x, y, K, gt, M, Q)
    return float(kern.finalize(M, gt, m, n))


def global_score_prefixes(x, y, K, g: GapPenalty, sizes) -> list[float]:
    """``global_score(x[:n], y[:n])`` for each n in ``sizes`` from one DP fill."""
    x, y, K = _codes(x), _codes(y), _scores(K)
    _nonempty(x, y)
    m, n = len(x), len(y)
    M, Q = np.empty((m + 1, n + 1)), np.empty((m + 1, n + 1))
    gt = gap_table(g, max(m, n))
    kern.global_fill(x, y, K, gt, M, Q)
    return [float(kern.finalize(M, gt, s, s)) for s in sizes]


def fixed_match_score(kappa: int, x, y, K, g: GapPenalty) -> float:
    """G_kappa: best restricted score among alignments with exactly ``kappa``
    matches, the first at (1, 1)."""
    x, y, K = _codes(x), _codes(y), _scores(K)
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    if len(x) < kappa or len(y) < kappa:
        raise ModelError(f"sequences shorter than kappa={kappa}")
    gt = gap_table(g, max(len(x), len(y)))
    return float(kern.fixed_score(x, y, K, gt, kappa))


def gapless_local(x, y, K) -> float:
    """H_inf: best score of a nonempty run of consecutive diagonal letter pairs."""
    x, y, K = _codes(x), _codes(y), _scores(K)
    _nonempty(x, y)
    return float(kern.gapless_score(x, y, K))


# Exhaustive oracles ------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _alignments_of_size(m: int, n: int, u: int) -> tuple[Alignment, ...]:
    return tuple(
        Alignment(tuple(zip(rows, cols)))
        for rows in itertools.combinations(range(1, m + 1), u)
        for cols in itertools.combinations(range(1, n + 1), u)
    )


def _all_alignments(m: int, n: int, size: int | None = None):
    sizes = range(1, min(m, n) + 1) if size is None else (size,)
    for u in sizes:
        yield from _alignments_of_size(m, n, u)


def _check_small(x, y):
    _nonempty(x, y)
    if len(x) > BRUTE_FORCE_MAX_LEN or len(y) > BRUTE_FORCE_MAX_LEN:
        raise ValueError(f"brute force limited to lengths <= {BRUTE_FORCE_MAX_LEN}")


def brute_force_local(x, y, K, g: GapPenalty) -> float:
    """Exhaustive maximum of the alignment score (test oracle, lengths <= 7)."""
    _check_small(x, y)
    return max(alignment_score(z, x, y, K, g) for z in _all_alignments(len(x), len(y)))


def brute_force_global(x, y, K, g: GapPenalty) -> float:
    _check_small(x, y)
    return max(restricted_score(z, x, y, K, g) for z in _all_alignments(len(x), len(y)))


def brute_force_fixed(kappa: int, x, y, K, g: GapPenalty) -> float:
    _check_small(x, y)
    if len(x) < kappa or len(y) < kappa:
        raise ModelError(f"sequences shorter than kappa={kappa}")
    return max(
        restricted_score(z, x, y, K, g)
        for z in _all_alignments(len(x), len(y), kappa)
        if z.pairs[0] == (1, 1)
    )
