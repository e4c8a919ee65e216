"""Command line: ``deconvhet run | simulate | kernel``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .error_cf import ErrorCF
from .exceptions import ConfigurationError, DeconvHetError, NumericalError, StageError
from .io import RunConfig, atomic_write, format_report, load_csv, parse_error_spec, parse_grid, report_items
from .kernels import FLAT_TOP, QuadratureConfig, decon_kernel, flat_top_kft

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError("must be finite and positive")
    return v


def _alpha(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0.0 < v < 0.5:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 0.5)")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="deconvhet", description="Heteroskedasticity tests with a mismeasured covariate.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="test a CSV dataset")
    r.add_argument("--data", required=True, help="CSV file with a header row")
    r.add_argument("--y-col", default="y")
    r.add_argument("--w-col", default="w")
    r.add_argument("--wrep-col", default=None, help="replicate measurement column")
    r.add_argument("--error", required=True,
                   help="known:laplace:var=V | known:gaussian:var=V | known:gaussian:sd=S | unknown")
    r.add_argument("--mean", choices=("constant", "linear"), default="linear")
    bw = r.add_mutually_exclusive_group()
    bw.add_argument("--bandwidth", type=_positive_float, help="explicit bandwidth b")
    bw.add_argument("--bandwidth-c", type=_positive_float, default=1.0, help="rule-of-thumb constant c")
    r.add_argument("--bandwidth-rule", choices=("ordinary", "supersmooth"), default=None,
                   help="rule of thumb (default: from the error law; ordinary when unknown)")
    r.add_argument("--grid", default="auto", help="lo:hi:count (odd count >= 5) or auto")
    r.add_argument("--bootstrap", type=_positive_int, default=199, metavar="B")
    r.add_argument("--alpha", type=_alpha, action="append", help="significance level (repeatable)")
    r.add_argument("--seed", type=_nonneg_int, default=0)
    r.add_argument("--out", default=None, help="write the text report here as well as to stdout")
    r.add_argument("--kv-out", default=None, help="also write a flat key=value file")

    s = sub.add_parser("simulate", help="run a Monte Carlo size/power study")
    s.add_argument("--preset", choices=("smoke", "acceptance", "table1", "full"), default="smoke")
    s.add_argument("--reps", type=_positive_int, default=None, help="override the preset's rep count")
    s.add_argument("--bootstrap", type=_positive_int, default=None, metavar="B")
    s.add_argument("--alpha", type=_alpha, action="append")
    s.add_argument("--seed", type=_nonneg_int, default=0)
    s.add_argument("--grid", default="auto", help="lo:hi:count or auto")
    s.add_argument("--workers", type=_positive_int, default=None, help="worker processes")
    s.add_argument("--out", default=None, help="CSV output path")
    s.add_argument("--quiet", action="store_true")

    k = sub.add_parser("kernel", help="dump kft, an error CF or the deconvolution kernel")
    k.add_argument("what", choices=("kft", "cf", "decon"))
    k.add_argument("--error", default="known:laplace:var=0.3333333333333333")
    k.add_argument("--bandwidth", type=_positive_float, default=0.5)
    k.add_argument("--range", default="-1:1:201", help="lo:hi:count of evaluation points")
    k.add_argument("--points", default=None, help="comma-separated evaluation points instead of a range")
    k.add_argument("--out", default=None)
    return p


def _run(args):
    error = parse_error_spec(args.error)
    cfg = RunConfig(
        data=args.data,
        error=error,
        y_col=args.y_col,
        w_col=args.w_col,
        wrep_col=args.wrep_col,
        mean=args.mean,
        bandwidth=args.bandwidth,
        bandwidth_c=args.bandwidth_c,
        bandwidth_rule=args.bandwidth_rule,
        grid=parse_grid(args.grid),
        B=args.bootstrap,
        alphas=tuple(sorted(set(args.alpha or [0.05]))),
        seed=args.seed,
        out=args.out,
        kv_out=args.kv_out,
    )
    from .pipeline import heteroskedasticity_test

    try:
        sample = load_csv(cfg.data, cfg.y_col, cfg.w_col, cfg.wrep_col)
    except ConfigurationError as exc:
        raise StageError("load", exc) from exc
    report = heteroskedasticity_test(
        sample,
        cfg.error.cf(),
        family=cfg.mean,
        bandwidth=cfg.bandwidth,
        c=cfg.bandwidth_c,
        rule=cfg.bandwidth_rule,
        grid=cfg.grid,
        B=cfg.B,
        alphas=cfg.alphas,
        seed=cfg.seed,
        error_law=cfg.error.law if cfg.error.known else None,
    )
    text = format_report(report, cfg)
    if cfg.out:
        atomic_write(cfg.out, text)
    if cfg.kv_out:
        atomic_write(cfg.kv_out, "".join(f"{k}={v}\n" for k, v in report_items(report, cfg)))
    sys.stdout.write(text)
    return report


def _simulate(args):
    from .simulation import preset_cells, run_study

    cells, reps, B, alphas = preset_cells(args.preset)
    reps = args.reps or reps
    B = args.bootstrap or B
    alphas = tuple(sorted(set(args.alpha))) if args.alpha else alphas
    for a in alphas:
        if B < 1.0 / a - 1.0 - 1e-9:
            raise ConfigurationError(f"B={B} is too small for alpha={a}")
    grid = parse_grid(args.grid)
    grid_spec = None if grid is None else (grid.lo, grid.hi, len(grid))

    def progress(cell, rates, secs):
        if not args.quiet:
            print(f"  {cell.key():<40} KS {rates['ks']} CvM {rates['cvm']} ({secs:.1f}s)",
                  file=sys.stderr, flush=True)

    result = run_study(cells, reps, B, alphas, args.seed, args.workers, grid_spec, progress)
    if args.out:
        atomic_write(args.out, result.to_csv())
    print(result.table())
    for key, errs in result.errors.items():
        print(f"cell {key}: {len(errs)} failed rep(s); first: {errs[0]}", file=sys.stderr)
    return result


def _kernel(args):
    if args.points:
        try:
            x = np.array([float(v) for v in args.points.split(",")])
        except ValueError:
            raise ConfigurationError(f"bad point list {args.points!r}") from None
    else:
        try:
            lo, hi, count = args.range.split(":")
            lo, hi, count = float(lo), float(hi), int(count)
        except ValueError:
            raise ConfigurationError(f"bad range {args.range!r}; expected lo:hi:count") from None
        if not lo < hi or count < 2:
            raise ConfigurationError("range needs lo < hi and count >= 2")
        x = np.linspace(lo, hi, count)
    if args.what == "kft":
        y = flat_top_kft(x)
    else:
        fe = parse_error_spec(args.error).cf()
        if not isinstance(fe, ErrorCF):
            raise ConfigurationError("kernel dumps need a known error law")
        if args.what == "cf":
            y = fe(x)
        else:
            # weight placed at covariate value x by an observation at w = 0:
            # Kb(x / b), which integrates to 1 over x
            b = args.bandwidth
            y = decon_kernel(x / b, b, fe, FLAT_TOP, QuadratureConfig(nodes_per_unit=512))
    text = "".join(f"{a!r} {float(v)!r}\n" for a, v in zip(x.tolist(), np.asarray(y).tolist()))
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return x, y


_RANGE_FLAGS = ("--grid", "--range")


def _glue_ranges(argv):
    """Let ``--grid -1:1:41`` through: argparse would read ``-1:1:41`` as a flag."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _RANGE_FLAGS:
            nxt = next(it, None)
            if nxt is not None:
                out.append(f"{tok}={nxt}")
                continue
        out.append(tok)
    return out


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_glue_ranges(argv))
    except SystemExit as exc:  # usage errors and --help: return the code instead of exiting
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    handler = {"run": _run, "simulate": _simulate, "kernel": _kernel}[args.command]
    try:
        handler(args)
    except StageError as exc:
        print(f"deconvhet: error in stage {exc.stage}: {type(exc.cause).__name__}: {exc.cause}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.cause, (NumericalError, ArithmeticError)) else EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"deconvhet: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"deconvhet: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DeconvHetError as exc:
        print(f"deconvhet: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
