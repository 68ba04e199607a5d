"""
Command line interface.

    ostail estimate --dist "weibull(alpha=0.5)" --n 8 --l 4 --gamma-th 0.1 --estimator weibull-is
    ostail table table2 --seed 42 --out table2.csv
    ostail sweep fig1
    ostail verify table2

Exit codes: 0 success, 1 invalid input or config, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import DomainError, NumericalError, OstailError
from .harness import (
    ESTIMATOR_NAMES,
    FORMATS,
    PRESETS,
    SEED_ENV,
    config_from_mapping,
    emit_results,
    load_config,
    read_reference,
    run_convergence_sweep,
    run_experiment,
    verify_rows,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("ostail")


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dist", help='branch law, e.g. "weibull(alpha=0.5,eta=1)"')
    p.add_argument("--n", type=int, help="number of branches N")
    p.add_argument("--l", type=int, help="number of combined branches L")
    p.add_argument("--gamma-th", help="threshold, or a comma-separated list")
    p.add_argument("--samples", type=int, help="sample size M (points per replicate for rqmc-cmc)")
    p.add_argument("--seed", type=int, help=f"master seed (default ${SEED_ENV} or 42)")
    p.add_argument("--estimator", action="append",
                   help=f"estimator name, repeatable or comma-separated ({', '.join(ESTIMATOR_NAMES)})")
    p.add_argument("--replicates", type=int, help="RQMC replicates m")
    p.add_argument("--weights", help="IS weights lambda_1..lambda_L, comma-separated")
    p.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--out", help="write results here instead of stdout")
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.add_argument("--timing", action="store_true", help="include wall-clock milliseconds per row")


def _overrides(args) -> dict:
    estimators = None
    if args.estimator:
        estimators = tuple(e for chunk in args.estimator for e in _csv_list(chunk))
    return {
        "dist": args.dist,
        "n": args.n,
        "l": args.l,
        "thresholds": args.gamma_th,
        "samples": args.samples,
        "seed": args.seed,
        "estimators": estimators,
        "replicates": args.replicates,
        "weights": args.weights,
        "workers": args.workers,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ostail", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate one configuration given by flags")
    _add_common(p)

    p = sub.add_parser("table", help="run a preset or config file")
    p.add_argument("config", help=f"preset ({', '.join(PRESETS)}) or config file")
    _add_common(p)

    p = sub.add_parser("sweep", help="RQMC convergence sweep")
    p.add_argument("config", help="preset (fig1) or config file with m_grid")
    _add_common(p)
    p.add_argument("--m-grid", help="points per replicate, comma-separated powers of two")

    p = sub.add_parser("verify", help="run a config and compare against reference values")
    p.add_argument("config", help="preset or config file")
    p.add_argument("reference", nargs="?", help="reference CSV (defaults to the shipped values for a preset)")
    _add_common(p)
    return parser


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w", newline="") as fh:
        fh.write(text)


def _estimate(args) -> int:
    ov = _overrides(args)
    values = {k: v for k, v in ov.items() if v is not None}
    config = config_from_mapping(values).validate()
    rows = run_experiment(config, timing=args.timing)
    _write(emit_results(rows, args.format), args.out)
    return EXIT_OK


def _table(args) -> int:
    config = load_config(args.config, _overrides(args))
    rows = run_experiment(config, timing=args.timing)
    _write(emit_results(rows, args.format), args.out)
    return EXIT_OK


def _sweep(args) -> int:
    ov = _overrides(args)
    ov["m_grid"] = args.m_grid
    config = load_config(args.config, ov)
    result = run_convergence_sweep(config)
    _write(result.to_csv() if args.format == "csv" else result.to_jsonl(), args.out)
    print(f"# rqmc_slope={result.rqmc_slope:.4f} mc_slope={result.mc_slope:.4f} reference=-0.5",
          file=sys.stderr)
    return EXIT_OK


def _verify(args) -> int:
    config = load_config(args.config, _overrides(args))
    ref_source = args.reference or args.config
    if args.reference is None and args.config not in PRESETS:
        raise DomainError("a reference CSV is required unless the config is a preset")
    reference = read_reference(ref_source)
    rows = run_experiment(config, timing=args.timing)
    if args.out:
        _write(emit_results(rows, args.format), args.out)
    verdicts = verify_rows(rows, reference)
    for v in verdicts:
        print(v.line())
    failed = sum(not v.passed for v in verdicts)
    print(f"{len(verdicts) - failed}/{len(verdicts)} cells within tolerance")
    return EXIT_VERIFY if failed else EXIT_OK


_COMMANDS = {"estimate": _estimate, "table": _table, "sweep": _sweep, "verify": _verify}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DomainError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OstailError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
