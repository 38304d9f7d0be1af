import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gapstat.align import (
    DPWorkspace,
    alignment_score,
    brute_force_fixed,
    brute_force_global,
    brute_force_local,
    fixed_match_score,
    gapless_local,
    global_score,
    global_score_prefixes,
    local_align,
    local_align_prefixes,
    restricted_score,
)
from gapstat.model import Alignment, Alphabet, GapPenalty, ModelError, ScoreMatrix, eval_gap

AC = Alphabet(tuple("ACGT"))
PM1 = ScoreMatrix.match_mismatch(4, 1, -1).array
B12 = ScoreMatrix.match_mismatch(2, 1, -2).array


def enc(s):
    return AC.encode(s)


GAPS = [
    GapPenalty.affine(0.25, 0.25),
    GapPenalty.logarithmic(0.5, 0.7),
    GapPenalty.power(0.3, 0.5, 0.5),
]


# -- scores of given alignments ----------------------------------------------------


def test_alignment_score_examples():
    z = Alignment(((1, 1), (2, 2)))
    assert alignment_score(z, enc("AC"), enc("AC"), PM1, GapPenalty.affine(3, 1)) == 2
    z = Alignment(((1, 1), (3, 2)))
    assert alignment_score(z, enc("AGC"), enc("AC"), PM1, GapPenalty.affine(0.5, 1)) == 1.5
    z = Alignment(((1, 1), (2, 2)))
    assert alignment_score(z, enc("A"), enc("AC"), PM1, GapPenalty.affine(1, 1)) == -math.inf


def test_restricted_score_examples():
    g = GapPenalty.affine(2, 1)
    assert restricted_score(Alignment(((1, 1),)), enc("A"), enc("A"), PM1, g) == 1
    assert restricted_score(Alignment(((1, 1),)), enc("AG"), enc("A"), PM1, g) == -1
    g = GapPenalty.affine(0.5, 1)
    assert restricted_score(Alignment(((2, 2),)), enc("GA"), enc("GA"), PM1, g) == 0


# -- local alignment -------------------------------------------------------------------


def test_local_align_single_mismatch_is_negative():
    r = local_align(enc("A"), enc("G"), PM1, GapPenalty.affine(1, 1))
    assert r.score == -1
    assert r.optimal.pairs == ((1, 1),)


def test_local_align_full_match():
    r = local_align(enc("AC"), enc("AC"), PM1, GapPenalty.affine(2, 1))
    assert r.score == 2 and r.match_count == 2


def test_local_align_matches_oracle_example():
    g = GapPenalty.affine(0.25, 0.25)
    x, y = enc("AGGC"), enc("AC")
    assert local_align(x, y, PM1, g).score == brute_force_local(x, y, PM1, g)


def test_local_align_rejects_empty_and_infinite():
    with pytest.raises(ModelError):
        local_align(enc(""), enc("A"), PM1, GapPenalty.affine(1, 1))
    with pytest.raises(ModelError):
        local_align(enc("A"), enc("A"), PM1, GapPenalty.infinite())


def test_tie_break_prefers_smallest_end_cell():
    # two equally good single matches; the earlier one is reported
    r = local_align(enc("AGA"), enc("A"), PM1, GapPenalty.affine(5, 1))
    assert r.optimal.pairs == ((1, 1),)


def test_workspace_reuse():
    ws = DPWorkspace(5, 5)
    g = GapPenalty.affine(1, 0.5)
    a = local_align(enc("ACGTA"), enc("ACTTA"), PM1, g, ws)
    b = local_align(enc("ACGTA"), enc("ACTTA"), PM1, g, ws)
    assert a == b


def test_prefix_results_match_separate_runs(rng):
    g = GapPenalty.logarithmic(1.0, 1.5)
    x, y = rng.integers(0, 4, 40), rng.integers(0, 4, 40)
    sizes = [5, 10, 20, 40]
    pref = local_align_prefixes(x, y, PM1, g, sizes)
    for n, r in zip(sizes, pref):
        assert r == local_align(x[:n], y[:n], PM1, g)
    G = global_score_prefixes(x, y, PM1, g, sizes)
    assert G == [global_score(x[:n], y[:n], PM1, g) for n in sizes]


# -- global / fixed-match -----------------------------------------------------------------


def test_global_examples():
    assert global_score(enc("A"), enc("A"), PM1, GapPenalty.affine(1, 1)) == 1
    assert global_score(enc("AG"), enc("A"), PM1, GapPenalty.affine(2, 1)) == -1


def test_fixed_match_examples():
    assert fixed_match_score(2, enc("AC"), enc("AC"), PM1, GapPenalty.affine(3, 1)) == 2
    g = GapPenalty.affine(0.5, 1)
    x, y = enc("AGC"), enc("AC")
    assert fixed_match_score(2, x, y, PM1, g) == brute_force_fixed(2, x, y, PM1, g)
    with pytest.raises(ModelError):
        fixed_match_score(3, x, y, PM1, g)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=6), st.lists(st.integers(0, 3), min_size=1, max_size=6))
def test_fixed_one_match_closed_form(x, y):
    g = GapPenalty.power(1.0, 0.8, 0.6)
    want = PM1[x[0], y[0]] - eval_gap(g, len(x) - 1) - eval_gap(g, len(y) - 1)
    assert fixed_match_score(1, np.array(x), np.array(y), PM1, g) == pytest.approx(want, abs=1e-12)


# -- gapless --------------------------------------------------------------------------------


def test_gapless_examples():
    assert gapless_local(enc("A"), enc("A"), PM1) == 1
    assert gapless_local(enc("ACA"), enc("AGA"), PM1) == 1


# -- exhaustive oracle on small binary inputs -------------------------------------------------


seqs = st.lists(st.integers(0, 1), min_size=1, max_size=5)


@pytest.mark.parametrize("g", GAPS, ids=["affine", "log", "power"])
@given(x=seqs, y=seqs)
def test_engines_match_brute_force(g, x, y):
    x, y = np.array(x), np.array(y)
    H = local_align(x, y, B12, g)
    assert H.score == pytest.approx(brute_force_local(x, y, B12, g), abs=1e-12)
    assert alignment_score(H.optimal, x, y, B12, g) == pytest.approx(H.score, abs=1e-12)
    assert global_score(x, y, B12, g) == pytest.approx(brute_force_global(x, y, B12, g), abs=1e-12)
    for k in range(1, min(len(x), len(y), 3) + 1):
        assert fixed_match_score(k, x, y, B12, g) == pytest.approx(brute_force_fixed(k, x, y, B12, g), abs=1e-12)
    assert gapless_local(x, y, B12) <= H.score


def test_brute_force_size_cap():
    with pytest.raises(ValueError):
        brute_force_local(np.zeros(8, int), np.zeros(2, int), B12, GAPS[0])


# -- structural properties -------------------------------------------------------------------


dna_seqs = st.lists(st.integers(0, 3), min_size=1, max_size=12)


@given(dna_seqs, dna_seqs, st.integers(0, 3))
def test_local_score_monotone_under_extension(x, y, extra):
    g = GapPenalty.logarithmic(1.0, 1.0)
    a = local_align(np.array(x), np.array(y), PM1, g).score
    b = local_align(np.array(x + [extra]), np.array(y), PM1, g).score
    assert b >= a


@given(dna_seqs, dna_seqs)
def test_local_at_least_gapless(x, y):
    assert local_align(np.array(x), np.array(y), PM1, GapPenalty.affine(0.5, 0.5)).score >= gapless_local(np.array(x), np.array(y), PM1)


@given(st.integers(1, 3), dna_seqs, dna_seqs)
def test_fixed_score_envelope(k, x, y):
    if len(x) < k or len(y) < k:
        return
    g = GapPenalty.affine(2, 1)
    G = fixed_match_score(k, np.array(x), np.array(y), PM1, g)
    assert G <= k * 1 - eval_gap(g, len(x) - k) - eval_gap(g, len(y) - k) + 1e-12


@given(st.integers(1, 2), dna_seqs, dna_seqs, dna_seqs, dna_seqs)
def test_concatenation_superadditive(k, x, y, u, v):
    if min(len(x), len(y), len(u), len(v)) < k:
        return
    g = GapPenalty.power(1.0, 1.0, 0.5)
    a = fixed_match_score(k, np.array(x), np.array(y), PM1, g)
    b = fixed_match_score(k, np.array(u), np.array(v), PM1, g)
    c = fixed_match_score(2 * k, np.array(x + u), np.array(y + v), PM1, g)
    assert a + b <= c + 1e-12


@given(st.integers(1, 3), dna_seqs, dna_seqs, st.floats(-2, 2))
def test_lambda_shift_adds_lambda_kappa(k, x, y, lam):
    if len(x) < k or len(y) < k:
        return
    g = GapPenalty.affine(1.5, 0.5)
    a = fixed_match_score(k, np.array(x), np.array(y), PM1, g)
    b = fixed_match_score(k, np.array(x), np.array(y), PM1 + lam, g)
    assert b - a == pytest.approx(lam * k, abs=1e-12)


@given(dna_seqs, dna_seqs, st.sampled_from(GAPS))
def test_pruned_fill_equals_full_fill(x, y, g):
    from gapstat import _kernels as kern
    from gapstat.model import gap_table

    x, y = np.array(x, dtype=np.int64), np.array(y, dtype=np.int64)
    gt = gap_table(g, max(len(x), len(y)))
    out = []
    for prune in (True, False):
        ws = DPWorkspace(len(x), len(y))
        kern.local_fill(x, y, PM1, gt, ws.M, ws.Q, ws.Marg, ws.Qarg, True, prune)
        best, i, j = kern.argmax_corner(ws.M, len(x), len(y))
        out.append((best, i, j, kern.traceback(ws.Marg, ws.Qarg, i, j).tolist()))
    assert out[0] == out[1]
