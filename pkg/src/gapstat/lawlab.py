"""Seeded experiments on the growth of alignment scores.

* :func:`strong_law_run` follows H/log n, H_inf/log n and |z*|/log n along
  nested prefixes of one random pair per replicate and sets them against
  the predicted constants 2/theta*, 2/theta~ and 2/(theta~ psi'(theta~)).
* :func:`estimate_beta` estimates beta = lim E[G(x_n, y_n)]/n, whose sign
  separates the logarithmic and linear growth domains.
* :func:`phase_scan` pairs the analytic domain verdict with beta-hat over a
  (init, rate) grid.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .align import alignment_score, gapless_local, global_score_prefixes, local_align_prefixes
from .asymptotics import (
    INDETERMINATE,
    LINEAR,
    LOGARITHMIC,
    NoRoot,
    growth_constants,
    psi_prime,
    summation_test,
    theta_star,
    theta_tilde,
)
from .model import GapPenalty, ModelError, ScoringModel
from .parallel import run_ordered

__all__ = [
    "simulate_pair",
    "LawTrajectory",
    "InvariantViolation",
    "strong_law_run",
    "predicted_constants",
    "BetaEstimate",
    "estimate_beta",
    "PhaseCell",
    "phase_scan",
    "DEFAULT_GRID",
    "sign_change",
]

DEFAULT_GRID = tuple(2**k for k in range(6, 13))
CSV_COLUMNS = ("n", "rep", "H", "Hinf", "zstar", "H_over_logn", "zstar_over_logn")


class InvariantViolation(RuntimeError):
    """A per-replicate invariant failed during a run."""


def simulate_pair(n: int, model: ScoringModel, seed, m: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Independent i.i.d. mu sequences of lengths (m, n) (m defaults to n)."""
    m = n if m is None else m
    rng = np.random.default_rng(seed)
    p = model.dist.array
    base = len(model.alphabet)
    return rng.choice(base, size=m, p=p), rng.choice(base, size=n, p=p)


def _rep_seeds(seed: int, reps: int):
    return np.random.SeedSequence(seed).spawn(reps)


# --------------------------------------------------------------------------
# strong law


@dataclass
class LawTrajectory:
    n_grid: tuple[int, ...]
    reps: int
    seed: int
    rows: list[dict]
    predicted: dict
    complete: bool = True
    gapped: bool = True

    def values(self, key: str, n: int) -> np.ndarray:
        return np.array([r[key] for r in self.rows if r["n"] == n], dtype=float)

    def ratio(self, key: str, n: int) -> np.ndarray:
        return self.values(key, n) / math.log(n)

    def summary(self) -> dict:
        out = {}
        for n in self.n_grid:
            if not any(r["n"] == n for r in self.rows):
                continue
            cell = {"reps": int(self.values("H", n).size)}
            for key in ("H", "Hinf", "zstar"):
                q = np.percentile(self.ratio(key, n), [25, 50, 75]) if self.gapped or key == "Hinf" else [math.nan] * 3
                cell[f"{key}_over_logn"] = {"q25": float(q[0]), "median": float(q[1]), "q75": float(q[2])}
            out[str(n)] = cell
        return out

    def to_json(self) -> dict:
        return {
            "n_grid": list(self.n_grid),
            "reps": self.reps,
            "seed": self.seed,
            "complete": self.complete,
            "predicted": self.predicted,
            "summary": self.summary(),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r[k] if not isinstance(r[k], float) else repr(r[k]) for k in CSV_COLUMNS])
        return buf.getvalue()


def predicted_constants(model: ScoringModel, g: GapPenalty, kappa_max: int = 3, method: str = "exact", **table_kw) -> dict:
    """Predicted limits: 2/theta* for H_inf and, when theta~ is bracketed, intervals for H and |z*|."""
    ts = theta_star(model)
    pred = {"theta_star": ts, "gapless_rate": 2 / ts}
    try:
        br = theta_tilde(model, g, kappa_max, method=method, **table_kw)
    except NoRoot as exc:
        pred["note"] = f"no psi_kappa root: {exc}"
        return pred
    pred["bracket"] = br.to_json()
    try:
        pp = psi_prime(model, g, br, method=method, **table_kw)
        gc = growth_constants(br, pp)
        pred["psi_prime"] = pp.to_json()
        pred["score_rate"] = list(gc.score_rate)
        pred["match_rate"] = list(gc.match_rate)
    except (NoRoot, ModelError) as exc:
        pred["score_rate"] = [2 / br.upper, 2 / br.lower]
        pred["note"] = f"psi' unavailable: {exc}"
    return pred


def _law_rep(x, y, K, g: GapPenalty, grid, rep):
    gapped = not g.is_infinite
    Hinf = [gapless_local(x[:n], y[:n], K) for n in grid]
    if gapped:
        res = local_align_prefixes(x, y, K, g, grid)
    rows = []
    prev = -math.inf
    for t, n in enumerate(grid):
        if gapped:
            H, z = res[t].score, res[t].optimal
            S = alignment_score(z, x[:n], y[:n], K, g)
            if not math.isclose(S, H, rel_tol=1e-12, abs_tol=1e-9):
                raise InvariantViolation(f"rep {rep} n {n}: S(z*) = {S} differs from H = {H}")
            if H < Hinf[t]:
                raise InvariantViolation(f"rep {rep} n {n}: H = {H} < H_inf = {Hinf[t]}")
            zs = len(z)
        else:
            H, zs = Hinf[t], 0
        if H < prev:
            raise InvariantViolation(f"rep {rep}: H decreased from {prev} to {H} at n = {n}")
        prev = H
        ln = math.log(n)
        rows.append(
            {"n": n, "rep": rep, "H": H, "Hinf": Hinf[t], "zstar": zs, "H_over_logn": H / ln, "zstar_over_logn": zs / ln}
        )
    return rows


def strong_law_run(
    model: ScoringModel,
    g: GapPenalty,
    n_grid=DEFAULT_GRID,
    reps: int = 20,
    seed: int = 0,
    predicted: dict | None = None,
    kappa_max: int = 3,
    budget_seconds: float | None = None,
    threads: int | None = None,
) -> LawTrajectory:
    """Replicated strong-law trajectories over nested prefixes.

    Each replicate draws one pair of length max(n_grid) and reads every
    grid size off a single DP fill, so H is compared along genuinely
    nested prefixes.  Inline checks (abort on violation): H nondecreasing
    in n, H >= H_inf and S(z*) = H.  When ``budget_seconds`` runs out the
    replicates completed so far are returned with ``complete=False``.
    ``predicted=None`` computes the predicted constants (which needs a
    psi_kappa root; a NoRoot is recorded as a note).
    """
    grid = tuple(sorted(int(n) for n in n_grid))
    if grid[0] < 2:
        raise ValueError("grid sizes must be >= 2 so that log n > 0")
    if predicted is None:
        predicted = predicted_constants(model, g, kappa_max)
    K = np.ascontiguousarray(model.scores.array)
    nmax = grid[-1]
    seeds = _rep_seeds(seed, reps)
    t0 = time.monotonic()
    rows: list[dict] = []
    complete = True
    batch = 1 if threads is None or threads <= 1 else threads
    for a in range(0, reps, batch):
        if budget_seconds is not None and time.monotonic() - t0 > budget_seconds:
            complete = False
            break
        jobs = []
        for rep in range(a, min(reps, a + batch)):
            x, y = simulate_pair(nmax, model, seeds[rep])
            jobs.append((x, y, K, g, grid, rep))
        for part in run_ordered(_law_rep, jobs, threads):
            rows.extend(part)
    return LawTrajectory(grid, reps, seed, rows, predicted, complete, not g.is_infinite)


# --------------------------------------------------------------------------
# beta and the phase scan


@dataclass(frozen=True)
class BetaEstimate:
    n: int
    reps: int
    beta: float
    se: float
    beta_2n: float
    se_2n: float
    seed: int

    def to_json(self) -> dict:
        return asdict(self)


def _beta_rep(x, y, K, g, n):
    G = global_score_prefixes(x, y, K, g, [n, 2 * n])
    return G[0] / n, G[1] / (2 * n)


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.inf


def estimate_beta(model: ScoringModel, g: GapPenalty, n: int, reps: int, seed: int = 0, threads: int | None = None) -> BetaEstimate:
    """Mean of G(x_n, y_n)/n over replicates, with the same at 2n to expose drift.

    Both sizes come from nested prefixes of one pair of length 2n per replicate.
    """
    if n < 1 or reps < 1:
        raise ValueError("n and reps must be positive")
    K = np.ascontiguousarray(model.scores.array)
    jobs = []
    for s in _rep_seeds(seed, reps):
        x, y = simulate_pair(2 * n, model, s)
        jobs.append((x, y, K, g, n))
    vals = run_ordered(_beta_rep, jobs, threads)
    b1, s1 = _mean_se([v[0] for v in vals])
    b2, s2 = _mean_se([v[1] for v in vals])
    return BetaEstimate(n, reps, b1, s1, b2, s2, seed)


@dataclass(frozen=True)
class PhaseCell:
    init: float
    rate: float
    alpha: float | None
    verdict: str
    beta: float
    se: float
    beta_2n: float
    se_2n: float
    slope_n: float | None
    slope_logn: float | None
    flag: str | None

    def to_json(self) -> dict:
        return asdict(self)


def _make_gap(family: str, init: float, rate: float, alpha: float | None) -> GapPenalty:
    if family == "affine":
        return GapPenalty.affine(init, rate)
    if family == "power":
        if alpha is None:
            raise ValueError("power family needs alpha")
        return GapPenalty.power(init, rate, alpha)
    if family == "log":
        return GapPenalty.logarithmic(init, rate)
    raise ValueError(f"unknown family {family!r}")


def _local_growth(model, g, n, reps, seed):
    """Mean local score at n and 2n from nested prefixes."""
    K = np.ascontiguousarray(model.scores.array)
    h1, h2 = [], []
    for s in _rep_seeds(seed, reps):
        x, y = simulate_pair(2 * n, model, s)
        r = local_align_prefixes(x, y, K, g, [n, 2 * n])
        h1.append(r[0].score)
        h2.append(r[1].score)
    d = float(np.mean(h2) - np.mean(h1))
    return d / n, d / math.log(2)


def phase_scan(
    model: ScoringModel,
    family: str,
    init_grid,
    rate_grid,
    n: int,
    reps: int,
    seed: int = 0,
    alpha: float | None = None,
    growth: bool = True,
    threads: int | None = None,
) -> list[PhaseCell]:
    """Analytic verdict and beta-hat for every (init, rate) cell.

    All cells reuse the same replicate sequences (common random numbers),
    so differences between cells reflect the penalty, not the sample.  The
    growth diagnostic compares the increase of E[H] from n to 2n per unit
    n and per unit log n.  Disagreements are flagged, never reconciled:
    a linear verdict with beta-hat significantly negative, or a
    logarithmic verdict with beta-hat significantly positive (the latter
    can be genuine at small init, since the verdict concerns large init).
    """
    cells = []
    for D in init_grid:
        for d in rate_grid:
            g = _make_gap(family, float(D), float(d), alpha)
            verdict = summation_test(g, model).verdict
            b = estimate_beta(model, g, n, reps, seed, threads)
            sn = sl = None
            if growth:
                sn, sl = _local_growth(model, g, n, reps, seed)
            flag = None
            if verdict == LINEAR and b.beta + 3 * b.se < 0:
                flag = "disagree: linear verdict but beta-hat < 0"
            elif verdict == LOGARITHMIC and b.beta - 3 * b.se > 0:
                flag = "note: beta-hat > 0 under a large-init logarithmic verdict"
            elif verdict == INDETERMINATE:
                flag = "indeterminate verdict"
            cells.append(PhaseCell(float(D), float(d), alpha, verdict, b.beta, b.se, b.beta_2n, b.se_2n, sn, sl, flag))
    return cells


def sign_change(cells: list[PhaseCell]) -> list[tuple[float, float]]:
    """Adjacent rate values (per init) between which beta-hat changes sign."""
    out = []
    by_init: dict[float, list[PhaseCell]] = {}
    for c in cells:
        by_init.setdefault(c.init, []).append(c)
    for row in by_init.values():
        row = sorted(row, key=lambda c: c.rate)
        for a, b in zip(row, row[1:]):
            if (a.beta > 0) != (b.beta > 0):
                out.append((a.rate, b.rate))
    return out
