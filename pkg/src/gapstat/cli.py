"""Command-line interface.

Subcommands: align, testgap, theta, tail, law, phase.  Output is JSON
(sorted keys) on stdout or to ``--out``; law and phase also write CSV.
Exit codes: 0 success, 1 data or invariant error, 2 usage error,
3 no root of the rate function.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .align import gapless_local, global_score, local_align
from .asymptotics import (
    ROOT_TOL,
    KappaRoot,
    NoRoot,
    growth_constants,
    h1_closed_form,
    kappa_table,
    psi_prime,
    root_psi_kappa,
    summation_test,
    theta_star,
    theta_tilde,
)
from .lawlab import phase_scan, sign_change, strong_law_run
from .model import Alphabet, GapPenalty, LetterDist, ModelError, ScoreMatrix, ScoringModel
from .parallel import DEFAULT_SHARDS, THREADS_ENV
from .tailprob import (
    DEFENSIVE,
    IS_FLOOR,
    TailEstimate,
    build_tilted_sampler,
    direct_mc_pvalue,
    is_pvalue,
    pvalue_bound,
)

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_NOROOT = 0, 1, 2, 3


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# input parsing


def _lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]


def read_scores(path: str) -> tuple[Alphabet, ScoreMatrix]:
    """First line: symbols; then one row of K per symbol (an optional leading row label is allowed)."""
    lines = _lines(path)
    if not lines:
        raise ModelError(f"{path}: empty score file")
    symbols = tuple(lines[0].split())
    alpha = Alphabet(symbols)
    rows = []
    for k, ln in enumerate(lines[1 : 1 + len(symbols)]):
        tok = ln.split()
        if len(tok) == len(symbols) + 1 and tok[0] == symbols[k]:
            tok = tok[1:]
        if len(tok) != len(symbols):
            raise ModelError(f"{path}: row {k + 1} has {len(tok)} entries, expected {len(symbols)}")
        try:
            rows.append(tuple(float(t) for t in tok))
        except ValueError as exc:
            raise ModelError(f"{path}: row {k + 1}: {exc}") from None
    if len(rows) != len(symbols):
        raise ModelError(f"{path}: expected {len(symbols)} rows, found {len(rows)}")
    return alpha, ScoreMatrix(tuple(rows))


def read_dist(path: str, alpha: Alphabet) -> LetterDist:
    probs = {}
    for ln in _lines(path):
        tok = ln.split()
        if len(tok) != 2:
            raise ModelError(f"{path}: expected 'symbol probability', got {ln!r}")
        try:
            probs[tok[0]] = float(tok[1])
        except ValueError:
            raise ModelError(f"{path}: bad probability {tok[1]!r}") from None
    return LetterDist.from_mapping(alpha, probs)


def read_sequence(path: str, alpha: Alphabet) -> np.ndarray:
    """Plain text; '>' lines skipped.  Single-character alphabets are read per character."""
    with open(path, encoding="utf-8") as fh:
        body = [ln.strip() for ln in fh if not ln.startswith(">")]
    if all(len(s) == 1 for s in alpha.symbols):
        toks = [c for c in "".join(body) if not c.isspace()]
    else:
        toks = " ".join(body).split()
    try:
        return alpha.encode(toks)
    except KeyError as exc:
        raise ModelError(f"{path}: symbol {exc.args[0]!r} not in alphabet") from None


def _floats(text: str, n: int, spec: str) -> list[float]:
    parts = text.split(",")
    if len(parts) != n:
        raise UsageError(f"gap spec {spec!r}: expected {n} numbers")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"gap spec {spec!r}: malformed number") from None


def _tail_class(cls: str, spec: str) -> GapPenalty | None:
    name, _, arg = cls.partition(":")
    if name == "unknown":
        return None
    vals = arg.split(":") if arg else []
    try:
        nums = [float(v) for v in vals]
    except ValueError:
        raise UsageError(f"gap spec {spec!r}: malformed class parameters") from None
    if name in ("affine", "log") and len(nums) == 1:
        return GapPenalty.affine(0.0, nums[0]) if name == "affine" else GapPenalty.logarithmic(0.0, nums[0])
    if name == "power" and len(nums) == 2:
        return GapPenalty.power(0.0, nums[0], nums[1])
    raise UsageError(f"gap spec {spec!r}: class must be unknown, affine:RATE, log:RATE or power:RATE:ALPHA")


def parse_gap(spec: str) -> GapPenalty:
    """affine:INIT,RATE | power:INIT,RATE,ALPHA | log:INIT,RATE | inf | table:FILE,CLASS.

    A table file lists INIT followed by gamma(1), gamma(2), ... (gamma(1) = 0).
    """
    family, _, rest = spec.partition(":")
    if family == "inf" and not rest:
        return GapPenalty.infinite()
    if family == "affine":
        return GapPenalty.affine(*_floats(rest, 2, spec))
    if family == "power":
        return GapPenalty.power(*_floats(rest, 3, spec))
    if family == "log":
        return GapPenalty.logarithmic(*_floats(rest, 2, spec))
    if family == "table":
        path, sep, cls = rest.partition(",")
        if not sep or not path:
            raise UsageError(f"gap spec {spec!r}: expected table:FILE,CLASS")
        tail = _tail_class(cls, spec)
        try:
            vals = [float(t) for ln in _lines(path) for t in ln.split()]
        except ValueError:
            raise ModelError(f"{path}: malformed gap table") from None
        if len(vals) < 2:
            raise ModelError(f"{path}: gap table needs INIT and at least gamma(1)")
        return GapPenalty.custom(vals[0], vals[1:], tail)
    raise UsageError(f"unrecognized gap spec {spec!r}")


def parse_grid(text: str) -> list[float]:
    """Comma list, or START:STOP:STEP (inclusive of STOP up to rounding)."""
    try:
        if ":" in text:
            a, b, s = (float(v) for v in text.split(":"))
            if s <= 0:
                raise ValueError
            k = int(math.floor((b - a) / s + 1e-9))
            return [round(a + i * s, 12) for i in range(k + 1)]
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"malformed grid {text!r}") from None


def load_model(args) -> ScoringModel:
    alpha, K = read_scores(args.scores)
    dist = read_dist(args.dist, alpha) if args.dist else LetterDist.uniform(alpha)
    return ScoringModel(alpha, dist, K)


# --------------------------------------------------------------------------
# output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def emit(args, obj):
    text = dumps(obj)
    if getattr(args, "out", None):
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# subcommands


def cmd_align(args):
    model_alpha, K = read_scores(args.scores)
    g = parse_gap(args.gap)
    x = read_sequence(args.x, model_alpha)
    y = read_sequence(args.y, model_alpha)
    Karr = K.array
    out = {"gap": g.describe(), "m": int(x.size), "n": int(y.size)}
    if g.is_infinite:
        out.update(H=gapless_local(x, y, Karr), optimal=None, match_count=None)
    else:
        res = local_align(x, y, Karr, g)
        out.update(H=res.score, optimal=[list(p) for p in res.optimal.pairs], match_count=res.match_count)
    if args.global_score:
        out["G"] = global_score(x, y, Karr, g)
    emit(args, out)


def cmd_testgap(args):
    model = load_model(args)
    g = parse_gap(args.gap)
    v = summation_test(g, model)
    out = v.to_json()
    out["inv_theta_star"] = 1 / v.theta_star
    out["gap"] = g.describe()
    emit(args, out)


def _table_kw(args) -> dict:
    kw = {"shards": args.shards, "threads": args.threads}
    if args.cutoff is not None:
        kw["cutoff"] = args.cutoff
    if args.method == "mc":
        kw.update(samples=args.samples, seed=args.seed)
    return kw


def cmd_theta(args):
    model = load_model(args)
    g = parse_gap(args.gap)
    kw = _table_kw(args)
    br = theta_tilde(model, g, args.kappa, method=args.method, r_max=args.r_max, tol=args.tol, **kw)
    root = root_psi_kappa(model, g, args.kappa, None if args.kappa == 1 and args.method == "exact" else args.method, tol=args.tol, **kw)
    out = {
        "theta_star": theta_star(model),
        "bracket": br.to_json(),
        "root": root.to_json(),
        "method": args.method,
        "seed": args.seed,
        "gap": g.describe(),
    }
    try:
        pp = psi_prime(model, g, br, method=args.method, **kw)
        gc = growth_constants(br, pp)
        out["psi_prime"] = pp.to_json()
        out["growth"] = gc.to_json()
    except ModelError as exc:
        out["psi_prime_error"] = str(exc)
    if args.root_out:
        Path(args.root_out).write_text(dumps({"root": root.to_json(), "gap": g.describe()}), encoding="utf-8")
    emit(args, out)


def _root_for(args, model, g) -> KappaRoot:
    """Root from --root FILE or --theta, re-evaluated here so that it is certified against this model."""
    if args.root:
        data = json.loads(Path(args.root).read_text(encoding="utf-8"))
        r = data.get("root", data)
        theta, kappa, method = float(r["theta"]), int(r["kappa"]), r.get("estimate", {}).get("method", "exact")
    elif args.theta is not None:
        theta, kappa, method = args.theta, args.kappa, "closed" if args.kappa == 1 else "exact"
    else:
        return root_psi_kappa(model, g, args.kappa)
    if method == "closed" or (kappa == 1 and method == "exact"):
        est = h1_closed_form(theta, g, model)
    else:
        kw = {"shards": args.shards, "threads": args.threads}
        if method == "mc":
            kw.update(samples=args.samples, seed=args.seed)
        est = kappa_table(model, g, kappa, method, **kw).psi(theta)
    return KappaRoot(theta, kappa, "psi", est, 0.0, "given")


def cmd_tail(args):
    model = load_model(args)
    g = parse_gap(args.gap)
    m, n = args.m, args.n if args.n is not None else args.m
    if args.method == "bound":
        root = _root_for(args, model, g)
        b = pvalue_bound(args.c, m, n, root, model.kmax, args.tol)
        est = TailEstimate(None, 0.0, b, "bound_only", args.c, m, n, root.theta, root.kappa, 0, None)
    elif args.method == "mc":
        est = direct_mc_pvalue(args.c, m, n, model, g, args.N, args.seed, args.shards, args.threads)
    else:
        if args.theta is not None or args.root:
            root = _root_for(args, model, g)
        else:
            root = root_psi_kappa(model, g, 1)
        smp = build_tilted_sampler(root, model, g, root.kappa, require_root=not args.off_root)
        est = is_pvalue(args.c, m, n, smp, args.N, args.seed, args.shards, args.threads, args.defensive, args.floor)
    emit(args, est.to_json())


def cmd_law(args):
    model = load_model(args)
    g = parse_gap(args.gap)
    grid = [2**k for k in range(int(math.log2(args.nmin)), int(math.log2(args.nmax)) + 1)]
    traj = strong_law_run(model, g, grid, args.reps, args.seed, kappa_max=args.kappa_max, budget_seconds=args.budget, threads=args.threads)
    os.makedirs(args.outdir, exist_ok=True)
    Path(args.outdir, "law.csv").write_text(traj.to_csv(), encoding="utf-8")
    summary = traj.to_json()
    summary["gap"] = g.describe()
    Path(args.outdir, "law.json").write_text(dumps(summary), encoding="utf-8")
    sys.stdout.write(dumps({"csv": "law.csv", "json": "law.json", "complete": traj.complete, "seed": args.seed}))


def cmd_phase(args):
    model = load_model(args)
    cells = phase_scan(
        model,
        args.family,
        parse_grid(args.Delta_grid),
        parse_grid(args.delta_grid),
        args.n,
        args.reps,
        args.seed,
        alpha=args.alpha,
        growth=not args.no_growth,
        threads=args.threads,
    )
    os.makedirs(args.outdir, exist_ok=True)
    rows = [c.to_json() for c in cells]
    cols = list(rows[0].keys()) if rows else []
    lines = [",".join(cols)] + [",".join("" if r[k] is None else repr(r[k]) if isinstance(r[k], float) else str(r[k]) for k in cols) for r in rows]
    Path(args.outdir, "phase.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    summary = {
        "cells": rows,
        "sign_changes": [list(p) for p in sign_change(cells)],
        "theta_star": theta_star(model),
        "inv_theta_star": 1 / theta_star(model),
        "n": args.n,
        "reps": args.reps,
        "seed": args.seed,
        "family": args.family,
    }
    Path(args.outdir, "phase.json").write_text(dumps(summary), encoding="utf-8")
    sys.stdout.write(dumps({"csv": "phase.csv", "json": "phase.json", "seed": args.seed}))


# --------------------------------------------------------------------------
# parser


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gapstat", description="Local alignment statistics under concave gap penalties.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    common.add_argument("--shards", type=_positive_int, default=DEFAULT_SHARDS, help="fixed work split; results depend on it, not on threads")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="write JSON here instead of stdout")
    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--scores", required=True, help="score matrix file")
    model.add_argument("--dist", default=None, help="letter distribution file (default uniform)")
    model.add_argument("--gap", default="affine:8,2", help="gap spec (default affine:8,2)")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("align", parents=[common], help="local alignment score and optimal alignment")
    a.add_argument("--x", required=True)
    a.add_argument("--y", required=True)
    a.add_argument("--scores", required=True)
    a.add_argument("--gap", required=True)
    a.add_argument("--global", dest="global_score", action="store_true", help="also report the global score G")
    a.set_defaults(func=cmd_align)

    t = sub.add_parser("testgap", parents=[common, model], help="growth-domain summation test")
    t.set_defaults(func=cmd_testgap)

    th = sub.add_parser("theta", parents=[common, model], help="bracket theta~ and predicted growth constants")
    th.add_argument("--kappa", type=_positive_int, default=3)
    th.add_argument("--r-max", type=_positive_int, default=None)
    th.add_argument("--method", choices=("exact", "mc"), default="exact")
    th.add_argument("--samples", type=_positive_int, default=100_000)
    th.add_argument("--cutoff", type=_positive_int, default=None, help="length cutoff of the G_kappa tables")
    th.add_argument("--tol", type=float, default=ROOT_TOL)
    th.add_argument("--root-out", default=None, help="write the psi_kappa root here for 'tail --method bound'")
    th.set_defaults(func=cmd_theta)

    tl = sub.add_parser("tail", parents=[common, model], help="tail probability of the local score")
    tl.add_argument("--c", type=float, required=True)
    tl.add_argument("--m", type=_positive_int, required=True)
    tl.add_argument("--n", type=_positive_int, default=None)
    tl.add_argument("--method", choices=("bound", "mc", "is"), default="bound")
    tl.add_argument("--N", type=_positive_int, default=100_000)
    tl.add_argument("--root", default=None, help="root file written by 'theta --root-out'")
    tl.add_argument("--theta", type=float, default=None, help="inline root (verified before use)")
    tl.add_argument("--kappa", type=_positive_int, default=1)
    tl.add_argument("--samples", type=_positive_int, default=100_000)
    tl.add_argument("--tol", type=float, default=ROOT_TOL)
    tl.add_argument("--defensive", type=float, default=DEFENSIVE)
    tl.add_argument("--floor", type=float, default=IS_FLOOR)
    tl.add_argument("--off-root", action="store_true", help="allow an importance sampler at a theta that is not a root")
    tl.set_defaults(func=cmd_tail)

    lw = sub.add_parser("law", parents=[common, model], help="strong-law trajectories (CSV + JSON)")
    lw.add_argument("--nmin", type=_positive_int, default=64)
    lw.add_argument("--nmax", type=_positive_int, default=4096)
    lw.add_argument("--reps", type=_positive_int, default=20)
    lw.add_argument("--kappa-max", type=_positive_int, default=3)
    lw.add_argument("--budget", type=float, default=None, help="seconds; stop after the replicates finished by then")
    lw.add_argument("--outdir", required=True)
    lw.set_defaults(func=cmd_law)

    ph = sub.add_parser("phase", parents=[common], help="phase scan of beta-hat over (init, rate)")
    ph.add_argument("--scores", required=True)
    ph.add_argument("--dist", default=None)
    ph.add_argument("--family", choices=("affine", "power", "log"), default="log")
    ph.add_argument("--Delta-grid", required=True, help="init values: comma list or START:STOP:STEP")
    ph.add_argument("--delta-grid", required=True, help="rate values: comma list or START:STOP:STEP")
    ph.add_argument("--alpha", type=float, default=None)
    ph.add_argument("--n", type=_positive_int, default=256)
    ph.add_argument("--reps", type=_positive_int, default=50)
    ph.add_argument("--no-growth", action="store_true", help="skip the local-score growth diagnostic")
    ph.add_argument("--outdir", required=True)
    ph.set_defaults(func=cmd_phase)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except NoRoot as exc:
        print(f"gapstat: no root: {exc} (gap penalty too weak for this kappa, or linear domain)", file=sys.stderr)
        return EXIT_NOROOT
    except (ModelError, ValueError, OSError, KeyError) as exc:
        print(f"gapstat: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
