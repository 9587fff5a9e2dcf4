"""Command-line interface: ``fabhmm <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 numerical degeneracy.
"""
import argparse
import os
import sys
import time

from . import __version__
from .baselines import fit_em_detailed, sweep_bic
from .data import gen_synthetic, ingest_text
from .evaluation import ExperimentPlan, predictive_loglik, run_experiment
from .exceptions import FabHmmError, NumericalDegeneracyError
from .fab import FitConfig, fit_fab
from .io import load_dataset, load_params, params_to_dict, read_json, save_dataset, write_json

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_DEGENERATE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _stem(path):
    root, ext = os.path.splitext(path)
    return root if ext == ".json" else path


def _write_text(path, text):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _resolve_seed(args):
    if args.seed is None:
        args.seed = time.time_ns() % 2 ** 32
        print(f"seed={args.seed} (time-derived)", file=sys.stderr)
    return args.seed


def _fit_config(args, k_max):
    try:
        return FitConfig(k_max=k_max, epsilon=args.epsilon, tol=args.tol, max_iter=args.max_iter,
                         restarts=args.restarts, seed=args.seed, time_limit=args.time_limit,
                         n_jobs=args.jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_generate(args):
    seed = _resolve_seed(args)
    if args.length < 1 or (args.test_length is not None and args.test_length < 1):
        raise UsageError("lengths must be >= 1")
    if args.test_length is None:
        train, test = gen_synthetic(args.kind, args.length, seed), None
    else:
        train, test = gen_synthetic(args.kind, args.length, seed, test_length=args.test_length)
    save_dataset(train, args.out)
    msg = f"wrote {args.out} (kind={args.kind}, T={args.length})"
    if test is not None:
        test_out = args.test_out or _stem(args.out) + ".test.json"
        save_dataset(test, test_out)
        msg += f"; {test_out} (T={args.test_length})"
    print(msg)


def cmd_ingest_text(args):
    prefix = args.out_prefix or args.out
    if prefix is None:
        raise UsageError("ingest-text needs --out-prefix")
    with open(args.input, "rb") as fh:
        raw = fh.read()
    split = ingest_text(raw, args.train_chars, args.test_chars)
    save_dataset(split.train, prefix + ".train.json")
    print(f"wrote {prefix}.train.json (T={split.train.total_length}, alphabet={len(split.alphabet)})")
    if split.test is not None:
        save_dataset(split.test, prefix + ".test.json")
        print(f"wrote {prefix}.test.json (T={split.test.total_length}, filtered={split.n_filtered})")
    else:
        print(f"test slice empty after filtering (filtered={split.n_filtered})")


def cmd_fit(args):
    if args.method == "fab" and args.k is not None:
        raise UsageError("--method fab takes --k-max, not --k")
    if args.method == "em" and args.k is None:
        raise UsageError("--method em requires --k")
    if args.method == "em" and args.k_max is not None:
        raise UsageError("--method em takes --k, not --k-max")
    _resolve_seed(args)
    data = load_dataset(args.data)
    report_path = args.report or _stem(args.out) + ".report.json"
    timing = not args.no_timing
    if args.method == "fab":
        report = fit_fab(data, _fit_config(args, args.k_max or 10))
        params = report.params
        write_json(report_path, report.to_dict(timing))
        _write_text(args.trace_csv or _stem(args.out) + ".trace.csv", report.trace_csv())
        summary = f"method=fab selected_k={report.selected_k} fic_lb={report.fic_lb!r} " \
                  f"iterations={report.iterations_run} converged={str(report.converged).lower()}"
    else:
        fit = fit_em_detailed(data, args.k, _fit_config(args, args.k))
        params = fit.params
        write_json(report_path, {
            "method": "em", "k": args.k, "loglik": fit.loglik, "iterations_run": fit.iterations,
            "converged": fit.converged, "restart_id": fit.restart_id, "seed": args.seed,
            "loglik_trace": fit.trace, "warnings": fit.warnings, "model": params_to_dict(params)})
        summary = f"method=em k={args.k} loglik={fit.loglik!r} iterations={fit.iterations} " \
                  f"converged={str(fit.converged).lower()}"
    write_json(args.out, params_to_dict(params))
    print(summary)


def cmd_sweep_bic(args):
    _resolve_seed(args)
    data = load_dataset(args.data)
    result = sweep_bic(data, args.k_max, _fit_config(args, args.k_max))
    timing = not args.no_timing
    write_json(args.out, result.to_dict(timing))
    _write_text(_stem(args.out) + ".csv", result.to_csv(timing))
    if args.model_out:
        write_json(args.model_out, params_to_dict(result.best_params))
    print(f"method=em-bic selected_k={result.selected_k}")


def cmd_eval(args):
    params = load_params(args.model)
    test = load_dataset(args.test)
    pll = predictive_loglik(params, test)
    if args.out:
        write_json(args.out, {"pll": pll, "n_symbols": test.total_length, "k": params.n_states})
    print(f"pll={pll!r}")


def cmd_experiment(args):
    if args.seed is None:
        raise UsageError("experiment requires --seed")
    plan = ExperimentPlan.from_dict(read_json(args.plan))
    report = run_experiment(plan, args.out, seed=args.seed, n_jobs=args.jobs, timing=not args.no_timing)
    for c in report.cells:
        k = c["selected_k_mean"]
        pll = c["pll_mean"]
        print(f"method={c['method']} length={c['length']} ok={c['n_ok']}/{c['n_rows']} "
              f"mean_k={'nan' if k is None else f'{k:.2f}'} mean_pll={'nan' if pll is None else f'{pll:.4f}'}")
    print(f"wrote {os.path.join(args.out, 'report.csv')}")


def build_parser():
    parser = _Parser(prog="fabhmm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    def common(p, out_required=True):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=out_required)
        p.add_argument("--jobs", type=int, default=1)

    def training(p):
        p.add_argument("--epsilon", type=float, default=1.0)
        p.add_argument("--tol", type=float, default=1e-4)
        p.add_argument("--max-iter", type=int, default=1000)
        p.add_argument("--restarts", type=int, default=5)
        p.add_argument("--time-limit", type=float, default=None)
        p.add_argument("--no-timing", action="store_true",
                       help="omit wall-clock times from outputs so reruns are byte-identical")

    p = sub.add_parser("generate", help="sample the four-state ground-truth HMM")
    p.add_argument("--kind", choices=["gaussian", "gaussian1d", "categorical"], required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--test-length", type=int, default=None)
    p.add_argument("--test-out", default=None)
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest-text", help="turn a text file into character datasets")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--train-chars", type=int, default=5000)
    p.add_argument("--test-chars", type=int, default=5000)
    p.add_argument("--out-prefix", default=None)
    common(p, out_required=False)
    p.set_defaults(func=cmd_ingest_text)

    p = sub.add_parser("fit", help="train one model")
    p.add_argument("--method", choices=["fab", "em"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--trace-csv", default=None)
    training(p)
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep-bic", help="EM for K=1..k_max, select by BIC")
    p.add_argument("--data", required=True)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--model-out", default=None)
    training(p)
    common(p)
    p.set_defaults(func=cmd_sweep_bic)

    p = sub.add_parser("eval", help="per-symbol predictive log-likelihood")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    common(p, out_required=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run an experiment plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--no-timing", action="store_true")
    common(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "kind", None) == "gaussian":
        args.kind = "gaussian1d"
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fabhmm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalDegeneracyError as exc:
        print(f"fabhmm: numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (FabHmmError, ValueError, TypeError, OSError) as exc:
        print(f"fabhmm: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
