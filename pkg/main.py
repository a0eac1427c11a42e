"""
sketchrows - row sampling for tall matrices
Shrinks n x d matrices to poly(d)-row samples that preserve l2 or lp
structure, with built-in verification:
- leverage: exact leverage scores or JL stretch upper bounds
- sample:   iterative l2 / lp row sampling with provenance
- verify:   spectral sandwich or lp direction check of a sketch
- lstsq:    sketch-and-solve least squares
- bench:    synthetic designs vs the uniform baseline
- history:  recent runs from the run-history database
"""
import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from config import DEFAULT_DELTA, DEFAULT_DIRECTIONS, LOG_LEVEL, RUN_HISTORY_PATH

# Configure logging
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL),
    format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
    datefmt="%H:%M:%S"
)
logger = logging.getLogger(__name__)

from bench import run_bench, summarize
from chart_generator import generate_bench_chart
from database import get_recent_runs, record_run
from errors import (
    CapacityError, ContractViolation, DegenerateBasisError, IterationLimitError,
    MatrixMarketError, NumericalError, ParameterError, SketchError,
)
from l2_pipeline import PipelineConfig, row_sample_l2, solve_l2_regression
from lp_pipeline import LpConfig, row_sample_p_full, two_level_lp
from matrix_market import (
    read_matrix_market, read_vector, write_matrix_market, write_provenance_csv,
    write_scores_csv, write_vector,
)
from run_report import RunReport
from sketch_sampling import RngStream, approx_str, exact_leverage_scores, verify_provenance
from verify import loewner_check, lp_direction_check

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

# exact residuals in `lstsq` only below this many dense entries
EXACT_SOLVE_MAX_ENTRIES = 50_000_000


def _l2_config(args) -> PipelineConfig:
    overrides = {}
    if getattr(args, "c_sample", None) is not None:
        overrides["c_sample"] = args.c_sample
    return PipelineConfig(eps=args.eps, R=getattr(args, "reduction_rate", None), seed=args.seed, **overrides)


def _lp_config(args) -> LpConfig:
    overrides = {}
    if args.c_p is not None:
        overrides["c_p"] = args.c_p
    if args.n_star_const is not None:
        overrides["n_star_const"] = args.n_star_const
    return LpConfig(p=args.p, p_prime=args.p_prime, eps=args.eps, seed=args.seed,
                    l2=_l2_config(args), **overrides)


def _emit(report: RunReport, path: Optional[str]):
    text = report.to_json()
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


# ============================================================
# COMMANDS
# ============================================================

def cmd_leverage(args, report: RunReport) -> int:
    with report.phase("read"):
        A = read_matrix_market(args.input)
    report.set_input(A)
    report.config = {"mode": args.mode, "rho": args.rho, "delta": args.delta}

    with report.phase("scores"):
        if args.mode == "exact":
            scores = exact_leverage_scores(A)
            report.extra["score_sum"] = scores.total
            print(f"sum of leverage scores: {scores.total:.6f}", file=sys.stderr)
        else:
            scores = approx_str(A, A, kappa=1, rho=args.rho, delta=args.delta, rng=RngStream(args.seed))

    if args.self_test:
        exact = exact_leverage_scores(A)
        covered = float(np.mean(scores.values >= exact.values * (1 - 1e-9))) if len(exact) else 1.0
        report.verification.append({"kind": "upper-bound", "fraction": covered, "pass": covered >= 0.99})

    write_scores_csv(args.out, scores)
    report.output_rows = len(scores)
    _emit(report, args.report)
    return EXIT_OK if report.passed in (None, True) else EXIT_VERIFY_FAILED


def cmd_sample(args, report: RunReport) -> int:
    if args.norm == "lp" and args.p is None:
        raise ParameterError("--p is required with --norm lp")
    if args.norm == "l2" and args.p is not None:
        raise ParameterError("--p is only valid with --norm lp")

    with report.phase("read"):
        A = read_matrix_market(args.input)
    report.set_input(A)
    rng = RngStream(args.seed)

    with report.phase("sample"):
        if args.norm == "l2":
            cfg = _l2_config(args)
            report.config = {"norm": "l2", "eps": cfg.eps, "R": cfg.reduction_rate(A.shape[1]),
                             "c_sample": cfg.c_sample, "delta": cfg.delta}
            S = row_sample_l2(A, cfg, rng)
        else:
            cfg = _lp_config(args)
            report.config = {"norm": "lp", "p": cfg.p, "eps": cfg.eps, "c_p": cfg.c_p,
                             "n_star_const": cfg.n_star_const, "two_level": args.two_level,
                             "empirical_only": cfg.empirical_only}
            S = two_level_lp(A, cfg, rng) if args.two_level else row_sample_p_full(A, cfg, rng)

    report.output_rows = S.n_rows
    report.shrink_history = list(S.shrink_history)
    report.warnings.extend(S.warnings)

    with report.phase("write"):
        write_matrix_market(args.out, S.matrix)
        if args.provenance:
            write_provenance_csv(args.provenance, S)

    if args.verify:
        with report.phase("verify"):
            if args.norm == "l2":
                report.add_verification(loewner_check(A, S.matrix, args.eps))
            else:
                report.add_verification(
                    lp_direction_check(A, S.matrix, args.p, args.eps, args.directions, rng.child(99)))
            report.verification.append({"kind": "provenance", "pass": verify_provenance(A, S)})

    _emit(report, args.report)
    return EXIT_OK if report.passed in (None, True) else EXIT_VERIFY_FAILED


def cmd_verify(args, report: RunReport) -> int:
    with report.phase("read"):
        A = read_matrix_market(args.a)
        B = read_matrix_market(args.b)
    report.set_input(A)
    report.output_rows = B.shape[0]
    report.config = {"norm": args.norm, "p": args.p, "eps": args.eps, "directions": args.directions}

    with report.phase("verify"):
        if args.norm == "l2":
            result = loewner_check(A, B, args.eps)
        else:
            if args.p is None:
                raise ParameterError("--p is required with --norm lp")
            result = lp_direction_check(A, B, args.p, args.eps, args.directions, RngStream(args.seed))
    report.add_verification(result)

    _emit(report, args.report)
    return EXIT_OK if result.passed else EXIT_VERIFY_FAILED


def cmd_lstsq(args, report: RunReport) -> int:
    with report.phase("read"):
        A = read_matrix_market(args.a)
        b = read_vector(args.b)
    report.set_input(A)
    if b.size != A.shape[0]:
        raise ContractViolation(f"b has length {b.size}, A has {A.shape[0]} rows")

    cfg = _l2_config(args)
    report.config = {"eps": cfg.eps, "c_sample": cfg.c_sample}
    with report.phase("solve"):
        result = solve_l2_regression(A, b, cfg, RngStream(args.seed))
    report.output_rows = result.sketch_rows
    report.warnings.extend(result.sketch.warnings)

    residual = float(np.linalg.norm(A @ result.x - b))
    report.extra.update({"sketched_residual": residual, "rank": result.rank,
                         "rank_deficient": result.rank_deficient})

    if A.shape[0] * A.shape[1] <= EXACT_SOLVE_MAX_ENTRIES:
        with report.phase("exact"):
            x_exact = np.linalg.lstsq(A.toarray(), b, rcond=None)[0]
            exact = float(np.linalg.norm(A @ x_exact - b))
        report.extra["exact_residual"] = exact
        report.extra["ratio"] = residual / exact if exact > 0 else (1.0 if residual == 0 else float("inf"))

    write_vector(args.out, result.x)
    _emit(report, args.report)
    return EXIT_OK


def cmd_bench(args, report: RunReport) -> int:
    if args.norm == "lp" and args.p is None:
        raise ParameterError("--p is required with --norm lp")
    l2_cfg = _l2_config(args)
    lp_cfg = _lp_config(args) if args.norm == "lp" else None
    report.config = {"n": args.n, "d": args.d, "density": args.density, "trials": args.trials,
                     "norm": args.norm, "p": args.p, "eps": args.eps, "c_sample": l2_cfg.c_sample}

    with report.phase("bench"):
        results = run_bench(args.n, args.d, args.density, args.trials, args.norm,
                            args.p or 1.0, args.eps, args.seed, l2_cfg, lp_cfg)

    report.extra["trials"] = [vars(r) for r in results]
    report.extra["summary"] = summarize(results)

    if args.chart:
        png = generate_bench_chart(results, args.eps, c_reference=l2_cfg.c_sample)
        if png:
            Path(args.chart).write_bytes(png)
            logger.info(f"📈 Chart written to {args.chart}")

    _emit(report, args.report)
    return EXIT_OK


def cmd_history(args) -> int:
    if not args.history:
        logger.error("❌ No history database (set SKETCHROWS_HISTORY or pass --history)")
        return EXIT_USAGE
    runs = asyncio.run(get_recent_runs(args.history, args.limit, args.command_filter))
    for run in runs:
        status = {None: "-", 1: "pass", 0: "FAIL"}[run["passed"]]
        print(f"#{run['id']:<5} {run['created_at']}  {run['command']:<9} seed={run['seed']}  "
              f"{run['input_rows']}x{run['input_cols']} -> {run['output_rows']}  {status}")
    return EXIT_OK


# ============================================================
# ARGUMENTS
# ============================================================

def _add_seed(p):
    p.add_argument("--seed", type=int, default=0)


def _add_constants(p):
    p.add_argument("--c-sample", type=float, default=None, help="oversampling constant (l2)")
    p.add_argument("--c-p", type=float, default=None, help="sampling constant (lp)")
    p.add_argument("--n-star-const", type=float, default=None, help="row threshold constant (lp)")
    p.add_argument("--p-prime", type=float, default=None, help="intermediate norm for --two-level")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sketchrows", description="Row sampling for tall matrices")
    parser.add_argument("--history", default=RUN_HISTORY_PATH or None, help="run-history SQLite path")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("leverage", help="leverage scores / stretch upper bounds")
    p.add_argument("input")
    p.add_argument("--mode", choices=["exact", "approx"], default="exact")
    p.add_argument("--rho", type=float, default=8.0)
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--self-test", action="store_true", help="compare approx scores to exact")
    _add_seed(p)

    p = sub.add_parser("sample", help="row-sample a matrix")
    p.add_argument("input")
    p.add_argument("--norm", choices=["l2", "lp"], default="l2")
    p.add_argument("--p", type=float)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--reduction-rate", type=int)
    p.add_argument("--two-level", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--provenance")
    p.add_argument("--report")
    p.add_argument("--verify", action="store_true")
    p.add_argument("--directions", type=int, default=DEFAULT_DIRECTIONS)
    _add_seed(p)
    _add_constants(p)

    p = sub.add_parser("verify", help="check a sketch against its source")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--norm", choices=["l2", "lp"], default="l2")
    p.add_argument("--p", type=float)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--directions", type=int, default=DEFAULT_DIRECTIONS)
    p.add_argument("--report")
    _add_seed(p)

    p = sub.add_parser("lstsq", help="sketch-and-solve least squares")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    _add_seed(p)
    _add_constants(p)

    p = sub.add_parser("bench", help="synthetic benchmark")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--d", type=int, nargs="+", default=[40])
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--norm", choices=["l2", "lp"], default="l2")
    p.add_argument("--p", type=float)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--chart")
    p.add_argument("--report")
    _add_seed(p)
    _add_constants(p)

    p = sub.add_parser("history", help="list recent runs")
    p.add_argument("--limit", type=int, default=20)
    p.add_argument("--command", dest="command_filter")

    return parser


COMMANDS = {
    "leverage": cmd_leverage,
    "sample": cmd_sample,
    "verify": cmd_verify,
    "lstsq": cmd_lstsq,
    "bench": cmd_bench,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "history":
        return cmd_history(args)

    report = RunReport(command=args.command, seed=args.seed)
    try:
        code = COMMANDS[args.command](args, report)
    except (MatrixMarketError, ParameterError, ContractViolation, CapacityError, OSError) as e:
        logger.error(f"❌ {args.command}: {e}")
        return EXIT_USAGE
    except (NumericalError, DegenerateBasisError, IterationLimitError) as e:
        logger.error(f"❌ {args.command}: numerical failure: {e}")
        return EXIT_NUMERICAL
    except SketchError as e:
        logger.error(f"❌ {args.command}: {e}")
        return EXIT_NUMERICAL

    if args.history:
        try:
            run_id = asyncio.run(record_run(args.history, report))
            logger.debug(f"Run #{run_id} saved to {args.history}")
        except Exception as e:
            logger.warning(f"⚠️ Could not record run history: {e}")
    return code


if __name__ == "__main__":
    sys.exit(main())
