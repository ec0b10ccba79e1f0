"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numeric failure (degenerate variance, overflow).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from pathlib import Path

from . import __version__
from . import inference as inf
from . import kernels as K
from . import models as M
from . import sim
from . import ustat as U
from . import varest
from .core import binom_exact, load_matrix, save_matrix
from .errors import UStatError, ValidationError

DEFAULT_SEED = 2024
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _emit(args, doc: dict, lines: list[str]) -> None:
    if args.json:
        print(json.dumps(_clean(doc), indent=2, sort_keys=True))
    else:
        for line in lines:
            print(line)


def _kernel(text: str) -> K.Kernel:
    path = Path(text)
    if not text.lstrip().startswith("{") and path.suffix == ".json" and path.exists():
        text = path.read_text()
    return K.resolve(text)


def _model(args) -> M.ModelSpec:
    text = args.model
    path = Path(text)
    if path.suffix == ".json" and path.exists():
        text = path.read_text()
    if text.lstrip().startswith("{"):
        return M.model_from_json(text)
    return M.named_model(text, epsilon=args.epsilon, F2=args.F2, G2=args.G2, lam=args.lam)


def _seed(args) -> int:
    return DEFAULT_SEED if args.seed is None else args.seed


def _rho(value):
    return "empirical" if value is None else value


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_sample(args) -> int:
    model = _model(args)
    seed = _seed(args)
    draw = M.sample(model, args.m, args.n, seed)
    save_matrix(draw.matrix, args.out)
    if args.latents:
        with open(args.latents, "w", encoding="utf-8") as fh:
            json.dump({"xi": draw.xi.tolist(), "eta": draw.eta.tolist()}, fh)
    doc = {"model": model.description, "m": args.m, "n": args.n, "seed": seed, "out": str(args.out),
           "density": float(draw.matrix.values.mean())}
    _emit(args, doc, [f"wrote {args.m}x{args.n} sample of {model.description} to {args.out}"])
    return EXIT_OK


def cmd_ustat(args) -> int:
    Y = load_matrix(args.matrix)
    h = _kernel(args.kernel)
    terms = binom_exact(Y.m, h.p) * binom_exact(Y.n, h.q)
    if not args.json:
        print(f"kernel terms: {terms}", file=sys.stderr)
    t0 = time.perf_counter()
    if args.fast:
        if h.fast_path not in U.FAST_SUMS:
            raise ValidationError(f"kernel {h.id} has no fast path; run without --fast")
        res = U.u_fast_sums(Y, h)
    else:
        res = U.u_naive(Y, h, force=args.force, threads=args.threads)
    elapsed = time.perf_counter() - t0
    doc = {"kernel": h.id, "value": res.value, "total_terms": str(res.total_terms), "method": res.method,
           "seconds": elapsed}
    _emit(args, doc, [f"{res.value:.17g}", f"total_terms {res.total_terms}", f"time {elapsed:.6f}s"])
    return EXIT_OK


def cmd_variance(args) -> int:
    Y = load_matrix(args.matrix)
    h = _kernel(args.kernel)
    method = {"direct": "direct", "loo": "leave_one_out", "algoA": "algorithm_A"}[args.method]
    if method == "algorithm_A":
        est = varest.algorithm_A_variance(Y, h, rho=_rho(args.rho), seed=_seed(args))
    else:
        est = varest.variance_estimate(Y, h, rho=_rho(args.rho), method=method, force=args.force,
                                       threads=args.threads)
    doc = {"kernel": h.id, "value": est.value, "v10": est.v10, "v01": est.v01, "V": est.V, "rho": est.rho,
           "method": est.method, "degenerate": est.degenerate, "N": est.N}
    lines = [f"{k:<10} {v}" for k, v in doc.items()]
    _emit(args, doc, lines)
    return EXIT_OK


def _report_lines(rep: inf.EstimateReport) -> list[str]:
    lines = [
        f"statistic  {rep.statistic_id}",
        f"estimate   {rep.estimate:.10g}",
        f"variance   {rep.variance:.10g}",
        f"N          {rep.N}",
        f"ci         [{rep.ci[0]:.10g}, {rep.ci[1]:.10g}] at level {1 - rep.alpha:g}",
    ]
    if rep.z is not None:
        lines.append(f"z          {rep.z:.6g}")
        lines.append(f"p_value    {rep.p_value:.6g}")
    lines.append(f"degenerate {rep.degenerate}")
    return lines


def cmd_estimate(args) -> int:
    Y = load_matrix(args.matrix)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = inf.statistic_report(Y, args.stat, _rho(args.rho), args.alpha, args.null)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if rep.degenerate and args.null is not None:
        print("error: variance is degenerate; cannot test against the null value", file=sys.stderr)
        return EXIT_NUMERIC
    _emit(args, rep.to_dict(), _report_lines(rep))
    return EXIT_OK


def cmd_compare(args) -> int:
    YA = load_matrix(args.matrix_a)
    YB = load_matrix(args.matrix_b)
    rep = inf.compare_networks(YA, YB, args.stat, _rho(args.rho), args.alpha)
    _emit(args, rep.to_dict(), _report_lines(rep))
    return EXIT_OK


def cmd_simulate(args) -> int:
    doc = json.loads(Path(args.config).read_text())
    for key in ("output_dir", "K", "seed", "threads"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    config = sim.ExperimentConfig.from_json(doc)
    if config.experiment == "bench":
        config.threads = 1
    result = sim.run(config)
    summary = {"experiment": config.experiment, "output_dir": config.output_dir}
    if config.experiment == "coverage":
        summary["rows"] = [r.__dict__ for r in result]
        lines = [f"N={r.N} rho={r.rho:g} param={r.param} coverage={r.coverage:.4f} "
                 f"band=[{r.band_lo:.4f}, {r.band_hi:.4f}]" for r in result]
    elif config.experiment == "bench":
        summary["rows"] = [r.__dict__ for r in result[0]]
        lines = [f"N={r.N} {r.algorithm}: " + (r.skipped or f"{r.mean_seconds:.4g}s, estimate {r.estimate_mean:.6g}")
                 for r in result[0]]
    else:
        summary["cells"] = {k: int(len(v)) for k, v in result.items()}
        lines = [f"{k}: {len(v)} studentized values" for k, v in result.items()]
    _emit(args, summary, lines + [f"outputs in {config.output_dir}"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit machine-readable JSON on stdout")
    common.add_argument("--seed", type=int, default=None, help=f"random seed (default {DEFAULT_SEED})")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker cap (default: ${U.THREADS_ENV} or the number of cores)")

    parser = _Parser(prog="bipustat", description=__doc__.splitlines()[0] if __doc__ else None,
                     epilog=f"Environment: {U.THREADS_ENV} sets the default thread cap.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("sample", parents=[common], help="draw a network from a model")
    p.add_argument("--model", required=True, help="I, II, III, or a model JSON document/file")
    p.add_argument("--epsilon", type=float, default=0.0, help="perturbation for model II")
    p.add_argument("--F2", type=float, default=3.0, help="row second moment for model III")
    p.add_argument("--G2", type=float, default=2.0, help="column second moment for model III")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="density scale for model III")
    p.add_argument("--m", type=int, required=True, help="number of rows")
    p.add_argument("--n", type=int, required=True, help="number of columns")
    p.add_argument("--out", required=True, help="output CSV/TSV path")
    p.add_argument("--latents", help="optional JSON path for the row/column latents")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("ustat", parents=[common], help="compute a U-statistic")
    p.add_argument("--matrix", required=True, help="CSV/TSV matrix file")
    p.add_argument("--kernel", required=True, help=f"built-in ({', '.join(K.BUILTIN_NAMES)}) or kernel JSON")
    p.add_argument("--fast", action="store_true", help="use the matrix-operation path")
    p.add_argument("--force", action="store_true", help="allow more than 1e10 kernel evaluations")
    p.set_defaults(func=cmd_ustat)

    p = sub.add_parser("variance", parents=[common], help="estimate the asymptotic variance")
    p.add_argument("--matrix", required=True, help="CSV/TSV matrix file")
    p.add_argument("--kernel", required=True, help="built-in kernel name or kernel JSON")
    p.add_argument("--method", choices=("direct", "loo", "algoA"), default="direct",
                   help="conditional means, leave-one-out, or empirical covariances")
    p.add_argument("--rho", type=float, default=None, help="fixed row share (default m/(m+n))")
    p.add_argument("--force", action="store_true", help="allow more than 1e10 kernel evaluations")
    p.set_defaults(func=cmd_variance)

    p = sub.add_parser("estimate", parents=[common], help="estimate a network statistic with its interval")
    p.add_argument("--matrix", required=True, help="CSV/TSV matrix file")
    p.add_argument("--stat", required=True, choices=inf.STATISTICS, help="statistic")
    p.add_argument("--null", type=float, default=None, help="null value for a z-test")
    p.add_argument("--alpha", type=float, default=0.05, help="interval error level (default 0.05)")
    p.add_argument("--rho", type=float, default=None, help="fixed row share (default m/(m+n))")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("compare", parents=[common], help="two-sample test between networks")
    p.add_argument("--matrix-a", required=True, help="first network")
    p.add_argument("--matrix-b", required=True, help="second network")
    p.add_argument("--stat", required=True, choices=inf.STATISTICS, help="statistic")
    p.add_argument("--alpha", type=float, default=0.05, help="interval error level (default 0.05)")
    p.add_argument("--rho", type=float, default=None, help="fixed row share (default m/(m+n))")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", parents=[common], help="run a simulation study from a JSON config")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--output-dir", dest="output_dir", default=None, help="override the output directory")
    p.add_argument("--K", type=int, default=None, help="override the replicate count")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("bipustat: a subcommand is required")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except UStatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


run_cli = main

if __name__ == "__main__":
    sys.exit(main())
