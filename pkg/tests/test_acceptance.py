"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""

import itertools
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE, binary_model, g2_moment_sum
from gapstat.align import (
    brute_force_fixed,
    brute_force_global,
    brute_force_local,
    fixed_match_score,
    global_score,
    local_align,
)
from gapstat.asymptotics import (
    h1_closed_form,
    kappa_table,
    psi_kappa,
    root_psi_kappa,
    theta_star,
    theta_tilde,
    verify_root,
)
from gapstat.cli import main as cli_main
from gapstat.lawlab import phase_scan, sign_change, strong_law_run
from gapstat.model import GapPenalty, ScoringModel, eval_gap, letter_pair_mgf
from gapstat.tailprob import (
    build_tilted_sampler,
    direct_mc_pvalue,
    direct_mc_pvalues,
    is_pvalue,
    pvalue_bound,
    rate_diagnostic,
    simulate_Q,
    verify_lr_inequality,
)

pytestmark = pytest.mark.acceptance

THREADS = os.cpu_count() or 1
DNA = ScoringModel.uniform("ACGT", 1, -1)
REF_GAP = GapPenalty.affine(8, 2)


def record(num, ok, detail, elapsed, limit):
    ok = ok and elapsed < limit
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'} | {detail} | {elapsed:.3g} s (limit {limit:g} s)"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


# 1 --------------------------------------------------------------------------------------------


def test_criterion_1_analytic_roots():
    cases = [(DNA, math.log(3)), (binary_model(), math.log((1 + math.sqrt(5)) / 2))]
    errs, times = [], []
    for model, want in cases:
        theta_star(model)  # warm-up
        t0 = time.perf_counter()
        for _ in range(20):
            got = theta_star(model)
        times.append((time.perf_counter() - t0) / 20)
        errs.append(abs(got - want))
    ok = max(errs) <= 1e-10 and max(times) < 1e-3
    record(1, ok, f"max error {max(errs):.1e}, mean time per call (slower model)", max(times), 1e-3)


# 2 --------------------------------------------------------------------------------------------


def test_criterion_2_oracle_equivalence():
    t0 = time.perf_counter()
    K = binary_model().scores.array
    gaps = [GapPenalty.affine(0.25, 0.25), GapPenalty.logarithmic(0.5, 0.7), GapPenalty.power(0.3, 0.5, 0.5)]
    seqs = [np.array(s) for L in range(1, 6) for s in itertools.product((0, 1), repeat=L)]
    worst, checks = 0.0, 0
    for g in gaps:
        for x in seqs:
            for y in seqs:
                pairs = [
                    (local_align(x, y, K, g).score, brute_force_local(x, y, K, g)),
                    (global_score(x, y, K, g), brute_force_global(x, y, K, g)),
                ]
                for k in range(1, min(len(x), len(y), 3) + 1):
                    pairs.append((fixed_match_score(k, x, y, K, g), brute_force_fixed(k, x, y, K, g)))
                for a, b in pairs:
                    worst = max(worst, 0.0 if a == b else abs(a - b))
                    checks += 1
    record(2, worst <= 1e-12, f"{checks} comparisons over {len(seqs) ** 2} pairs x 3 penalties, max |diff| {worst:.1e}", time.perf_counter() - t0, 120)


# 3 --------------------------------------------------------------------------------------------


def test_criterion_3_psi_consistency():
    t0 = time.perf_counter()
    model = binary_model()
    g = GapPenalty.affine(20, 5)
    tab = kappa_table(model, g, 1, "exact", cutoff=10)
    worst1, inside = 0.0, True
    for theta in np.linspace(0.4, 1.3, 10):
        a, b = tab.psi(theta), h1_closed_form(theta, g, model)
        d = abs(a.value - b.value)
        worst1 = max(worst1, d)
        inside &= d <= a.trunc_bound + b.trunc_bound + 1e-15
    g2 = GapPenalty.affine(2, 1)
    lm, _ = kappa_table(model, g2, 2, "exact", cutoff=8).log_moment(1.0)
    d2 = abs(lm - math.log(g2_moment_sum(model, g2, 1.0, 8)))
    ok = inside and worst1 <= 1e-8 and d2 <= 1e-9
    record(3, ok, f"kappa=1 max discrepancy {worst1:.1e} (within bounds: {inside}); kappa=2 vs enumeration {d2:.1e}", time.perf_counter() - t0, 300)


# 4 --------------------------------------------------------------------------------------------


def test_criterion_4_structural_properties():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    model = binary_model()
    K = model.scores.array
    gaps = [GapPenalty.affine(2, 1), GapPenalty.affine(3, 0.5), GapPenalty.power(2, 1, 0.7), GapPenalty.logarithmic(2, 1.5)]
    tabs = {(gi, k): kappa_table(model, g, k, "exact", cutoff=6) for gi, g in enumerate(gaps) for k in (1, 2, 3)}
    viol = dict.fromkeys(["convexity", "subadditivity", "xi<=psi", "psi/kappa>=logmgf", "envelope", "concatenation", "lambda-shift"], 0)
    cases = 1000

    def draw_theta():
        return float(rng.uniform(0.7, 1.3))

    for _ in range(cases):
        gi, k, th = int(rng.integers(4)), int(rng.integers(1, 4)), draw_theta()
        h = float(rng.uniform(0.01, 0.1))
        f = lambda t: tabs[gi, k].log_moment(t)[0]
        if f(th - h) + f(th + h) - 2 * f(th) < -1e-9:
            viol["convexity"] += 1

        gi, th = int(rng.integers(4)), draw_theta()
        a, b = ((1, 1), (1, 2))[int(rng.integers(2))]
        if tabs[gi, a + b].psi(th).value > tabs[gi, a].psi(th).upper + tabs[gi, b].psi(th).upper + 1e-12:
            viol["subadditivity"] += 1

        gi, k, th = int(rng.integers(4)), int(rng.integers(1, 4)), draw_theta()
        if tabs[gi, k].xi(th).value > tabs[gi, k].psi(th).value + 1e-12:
            viol["xi<=psi"] += 1
        if tabs[gi, k].psi(th).value / k < math.log(letter_pair_mgf(model, th)) - 1e-12:
            viol["psi/kappa>=logmgf"] += 1

        g = gaps[int(rng.integers(4))]
        k = int(rng.integers(1, 4))
        m, n = (int(v) for v in rng.integers(k, 13, 2))
        x, y = rng.integers(0, 2, m), rng.integers(0, 2, n)
        G = fixed_match_score(k, x, y, K, g)
        if G > k * model.kmax - eval_gap(g, m - k) - eval_gap(g, n - k) + 1e-12:
            viol["envelope"] += 1

        k1, k2 = (int(v) for v in rng.integers(1, 3, 2))
        parts = [rng.integers(0, 2, int(rng.integers(kk, 8))) for kk in (k1, k1, k2, k2)]
        u1, v1, u2, v2 = parts
        lhs = fixed_match_score(k1, u1, v1, K, g) + fixed_match_score(k2, u2, v2, K, g)
        if lhs > fixed_match_score(k1 + k2, np.concatenate([u1, u2]), np.concatenate([v1, v2]), K, g) + 1e-12:
            viol["concatenation"] += 1

    for _ in range(cases):
        gi, k, th = int(rng.integers(4)), int(rng.integers(1, 3)), draw_theta()
        lam = float(rng.uniform(-0.5, 0.5))
        base = tabs[gi, k].log_moment(th)[0]
        shifted = kappa_table(model.shifted(lam), gaps[gi], k, "exact", cutoff=6).log_moment(th)[0]
        if abs(shifted - base - lam * k * th) > 1e-12:
            viol["lambda-shift"] += 1

    total = sum(viol.values())
    detail = f"{cases} cases per property, violations " + ", ".join(f"{k}={v}" for k, v in viol.items())
    record(4, total == 0, detail, time.perf_counter() - t0, 600)


# 5 --------------------------------------------------------------------------------------------


def test_criterion_5_bracket_validity():
    t0 = time.perf_counter()
    br = theta_tilde(DNA, REF_GAP, 3)
    ts = theta_star(DNA)
    order = all(r["theta_psi"] <= r["theta_xi"] + r["slack"] for r in br.per_kappa)
    xi1 = br.per_kappa[0]["theta_xi"]
    rows = rate_diagnostic(np.arange(1, 16), 16, 16, DNA, REF_GAP, 1_000_000, seed=3, threads=THREADS)
    top = [r for r in rows if r["resolved"]][-1]
    lo, hi = br.lower - 0.25, br.upper + 0.25
    ok = order and abs(xi1 - ts) <= 1e-10 and lo <= top["rate"] <= hi
    widths = ", ".join(f"{r['width']:.2e}" for r in br.per_kappa)
    detail = (
        f"ordering {order}, |theta^_1 - theta*| = {abs(xi1 - ts):.1e}, bracket [{br.lower:.6f}, {br.upper:.6f}] widths {widths}; "
        f"rate at c={top['c']:g} ({top['hits']} hits, m=n=16) = {top['rate']:.4f} in [{lo:.3f}, {hi:.3f}]"
    )
    record(5, ok, detail, time.perf_counter() - t0, 900)


# 6 --------------------------------------------------------------------------------------------


def test_criterion_6_bound_dominance():
    t0 = time.perf_counter()
    roots = [root_psi_kappa(DNA, REF_GAP, 1), root_psi_kappa(DNA, REF_GAP, 3)]
    assert all(verify_root(r) for r in roots)
    cs = [4, 6, 8, 10, 12, 14, 16]
    cells = bad = 0
    worst = -math.inf
    for mn in (32, 64):
        ests = direct_mc_pvalues(cs, mn, mn, DNA, REF_GAP, 100_000, seed=mn, threads=THREADS)
        for e in ests:
            for r in roots:
                b = pvalue_bound(e.c, mn, mn, r, DNA.kmax)
                cells += 1
                worst = max(worst, (e.p_hat - 3 * e.se) - b)
                bad += e.p_hat - 3 * e.se > b
    record(6, bad == 0, f"{cells} cells (kappa 1 and 3 roots), violations {bad}, max (p-3se) - bound = {worst:.3g}", time.perf_counter() - t0, 600)


# 7 --------------------------------------------------------------------------------------------


IS_CONFIGS = [
    ("uniform4 affine 8,2 m=n=32 c=6", DNA, REF_GAP, 32, 6, True),
    ("uniform4 affine 8,2 m=n=32 c=8", DNA, REF_GAP, 32, 8, True),
    ("uniform4 affine 8,2 m=n=24 c=7", DNA, REF_GAP, 24, 7, True),
    ("uniform4 log 8,2 m=n=32 c=7", DNA, GapPenalty.logarithmic(8, 2), 32, 7, True),
    ("binary affine 4,1 m=n=32 c=12", binary_model(), GapPenalty.affine(4, 1), 32, 12, False),
]


def test_criterion_7_importance_sampling():
    t0 = time.perf_counter()
    parts, agree = [], True
    for i, (name, model, g, mn, c, rooted) in enumerate(IS_CONFIGS):
        if rooted:
            smp = build_tilted_sampler(root_psi_kappa(model, g, 1), model, g)
        else:
            smp = build_tilted_sampler(theta_star(model), model, g, require_root=False)
        d = direct_mc_pvalue(c, mn, mn, model, g, 100_000, seed=100 + i, threads=THREADS)
        e = is_pvalue(c, mn, mn, smp, 10_000, seed=200 + i, threads=THREADS)
        z = (e.p_hat - d.p_hat) / math.hypot(e.se, d.se)
        hits = round(d.p_hat * d.N)
        agree &= abs(z) <= 3 and hits >= 100
        parts.append(f"{name}: z={z:+.2f} hits={hits}")
    smp = build_tilted_sampler(root_psi_kappa(DNA, REF_GAP, 1), DNA, REF_GAP)
    rng = np.random.default_rng(77)
    checked = fails = 0
    while checked < 10_000:
        x, y, path = simulate_Q(32, 32, 6, smp, rng)
        if path.reason != "threshold_reached":
            continue
        fails += not verify_lr_inequality(path, x, y, 32, 32, smp, 6, raise_on_failure=False).ok
        checked += 1
    detail = "; ".join(parts) + f"; LR chain on {checked} paths, violations {fails}"
    record(7, agree and fails == 0, detail, time.perf_counter() - t0, 600)


# 8 --------------------------------------------------------------------------------------------


def test_criterion_8_strong_law():
    t0 = time.perf_counter()
    tr = strong_law_run(DNA, REF_GAP, reps=20, seed=0, threads=THREADS)
    target = 2 / theta_star(DNA)
    g_lo, g_hi = tr.n_grid[0], tr.n_grid[-1]
    m_hi = float(np.median(tr.ratio("Hinf", g_hi)))
    m_lo = float(np.median(tr.ratio("Hinf", g_lo)))
    gapless_ok = abs(m_hi - target) <= 0.25 * target and abs(m_hi - target) < abs(m_lo - target)
    lo, hi = tr.predicted["score_rate"]
    h_med = float(np.median(tr.ratio("H", g_hi)))
    gapped_ok = 0.7 * lo <= h_med <= 1.3 * hi
    viol = 0
    for rep in range(tr.reps):
        H = [r["H"] for r in tr.rows if r["rep"] == rep]
        viol += sum(b < a for a, b in zip(H, H[1:]))
    viol += sum(r["H"] < r["Hinf"] for r in tr.rows)
    ok = tr.complete and gapless_ok and gapped_ok and viol == 0
    detail = (
        f"median Hinf/log n {m_lo:.3f} (n={g_lo}) -> {m_hi:.3f} (n={g_hi}) vs 2/theta* = {target:.4f}; "
        f"median H/log n {h_med:.3f} in [{0.7 * lo:.3f}, {1.3 * hi:.3f}]; invariant violations {viol}"
    )
    record(8, ok, detail, time.perf_counter() - t0, 1800)


# 9 --------------------------------------------------------------------------------------------


def test_criterion_9_phase_threshold():
    t0 = time.perf_counter()
    grid = [round(0.4 + 0.1 * i, 10) for i in range(11)]
    cells = phase_scan(DNA, "log", [8.0], grid, n=256, reps=50, seed=0, growth=False, threads=THREADS)
    crit = 1 / theta_star(DNA)
    changes = sign_change(cells)
    near = [(a, b) for a, b in changes if a <= crit + 0.1 + 1e-9 and b >= crit - 0.1 - 1e-9]
    betas = ", ".join(f"{c.rate:.1f}:{c.beta:+.4f}" for c in cells)
    detail = f"sign changes {changes or 'none'} (target 1/theta* = {crit:.3f}); beta-hat by rate {betas}"
    record(9, bool(near), detail, time.perf_counter() - t0, 1200)


# 10 -------------------------------------------------------------------------------------------


def test_criterion_10_reproducibility(tmp_path):
    t0 = time.perf_counter()
    scores = tmp_path / "pm1.txt"
    scores.write_text("A C G T\n1 -1 -1 -1\n-1 1 -1 -1\n-1 -1 1 -1\n-1 -1 -1 1\n")
    s = str(scores)
    commands = {
        "tail-mc": ["tail", "--method", "mc", "--c", "6", "--m", "24", "--N", "20000"],
        "tail-is": ["tail", "--method", "is", "--c", "7", "--m", "24", "--N", "2000"],
        "theta-mc": ["theta", "--method", "mc", "--kappa", "2", "--cutoff", "5", "--samples", "4000"],
        "law": ["law", "--nmin", "16", "--nmax", "128", "--reps", "6", "--kappa-max", "1"],
        "phase": ["phase", "--Delta-grid", "8", "--delta-grid", "0.6:1.2:0.3", "--n", "32", "--reps", "6"],
    }
    differ = []
    for name, argv in commands.items():
        blobs = []
        for threads in ("1", "4"):
            od = tmp_path / f"{name}-{threads}"
            od.mkdir()
            extra = ["--outdir", str(od)] if name in ("law", "phase") else ["--out", str(od / "out.json")]
            assert cli_main(argv + ["--scores", s, "--seed", "11", "--threads", threads] + extra) == 0
            blobs.append({p.name: p.read_bytes() for p in sorted(od.iterdir())})
        if blobs[0] != blobs[1]:
            differ.append(name)
    detail = f"{len(commands)} commands rerun with 1 and 4 threads, differing outputs: {differ or 'none'}"
    record(10, not differ, detail, time.perf_counter() - t0, 600)
