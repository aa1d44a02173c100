"""Command line: ``featrel explain | experiment gaussian | experiment kernel | verify``.

Exit codes: 0 success, 1 usage, 2 I/O, 3 numeric failure, 4 verification
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import load_csv, load_discrete, load_gaussian
from .errors import FeatrelError, ReadError, UsageError
from .experiments import (
    METHOD_KINDS,
    ExperimentConfig,
    run_gaussian_experiment,
    run_kernel_experiment,
    summary_json,
    text_histogram,
)
from .explain import explain_instance
from .model import LinearModel, parse_expression
from .valuefn import ValueFunctionSpec

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="featrel", description="Shapley feature attribution under marginal or conditional value functions.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("explain", help="attribute one instance and print the result as JSON")
    e.add_argument("--model", required=True, help="file holding an expression over x1..xn, or a linear model as JSON")
    e.add_argument("--arity", type=int, help="number of features (defaults to the instance length)")
    e.add_argument("--instance", required=True, type=_floats)
    e.add_argument("--value-fn", required=True, choices=sorted(METHOD_KINDS))
    e.add_argument("--background", help="CSV of background samples")
    e.add_argument("--header", action="store_true", help="background CSV has a header row")
    e.add_argument("--gaussian", help="Gaussian spec JSON")
    e.add_argument("--discrete", help="discrete distribution JSON")
    e.add_argument("--mode", choices=("exact", "wls"), default="exact")
    e.add_argument("--budget", type=int)
    e.add_argument("--samples", type=int)
    e.add_argument("--bandwidth", type=float)
    e.add_argument("--neighbors", type=int)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--out")

    x = sub.add_parser("experiment", help="error experiments on linear models")
    xs = x.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    g = xs.add_parser("gaussian", help="rank-one Gaussian features")
    g.add_argument("--dims", type=int, default=3)
    g.add_argument("--zero-coefs", type=_ints, default=None, help="1-based indices with zero coefficient (default 1)")
    g.add_argument("--runs", type=int, default=200)
    g.add_argument("--samples", type=int, default=1000)
    g.add_argument("--budget", type=int)
    g.add_argument("--value-fn", action="append", choices=("marginal", "cond-gauss"))
    g.add_argument("--instance-dist", choices=("gaussian", "uniform"), default="gaussian")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--histogram", action="store_true", help="print text histograms of the errors to stderr")
    g.add_argument("--out", help="error-record CSV path; the summary goes to PATH.json")

    k = xs.add_parser("kernel", help="kernel-conditional vs. marginal on a CSV data set")
    k.add_argument("--background", required=True, help="numeric CSV data set")
    k.add_argument("--header", action="store_true")
    k.add_argument("--runs", type=int, default=200)
    k.add_argument("--samples", type=int, default=1000)
    k.add_argument("--bandwidth", type=float, default=0.1)
    k.add_argument("--neighbors", type=int)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--histogram", action="store_true")
    k.add_argument("--out")

    v = sub.add_parser("verify", help="run a property suite")
    v.add_argument("suite", nargs="?", choices=("axioms", "invariants", "all"), default="all", help="which suite to run (default all)")
    v.add_argument("--seed", type=int, default=0)
    return p


def _load_model(path, arity):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ReadError(f"cannot read model file {path}: {exc.strerror or exc}", module="cli") from exc
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            model = LinearModel.from_dict(json.loads(stripped))
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"{path}: not a linear-model JSON ({exc})", module="model-core") from exc
        if model.arity != arity:
            raise UsageError(f"linear model has {model.arity} coefficients, instance has {arity}", module="cli")
        return model
    return parse_expression(stripped, arity)


def _spec_from_args(a, n):
    kind = METHOD_KINDS[a.value_fn]
    kw = {"seed": a.seed}
    if kind in ("marginal-mc", "conditional-kernel"):
        if not a.background:
            raise UsageError(f"--value-fn {a.value_fn} needs --background", module="cli")
        kw["background"] = load_csv(a.background, a.header)
    elif kind == "conditional-gaussian":
        if not a.gaussian:
            raise UsageError("--value-fn cond-gauss needs --gaussian", module="cli")
        kw["gaussian"] = load_gaussian(a.gaussian)
    else:
        if not a.discrete:
            raise UsageError(f"--value-fn {a.value_fn} needs --discrete", module="cli")
        kw["discrete"] = load_discrete(a.discrete)
    if kind in ("marginal-mc", "conditional-gaussian") and a.samples is not None:
        kw["sample_count"] = a.samples
    if kind == "conditional-kernel":
        kw["bandwidth"] = a.bandwidth if a.bandwidth is not None else 0.1
        kw["neighbor_count"] = a.neighbors
    return ValueFunctionSpec(kind, **kw)


def _write(text, out):
    if out:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise ReadError(f"cannot write {out}: {exc.strerror or exc}", module="cli") from exc
    else:
        sys.stdout.write(text)


def cmd_explain(a) -> int:
    x = np.asarray(a.instance, dtype=float)
    arity = a.arity if a.arity is not None else x.size
    if x.size != arity:
        raise UsageError(f"--instance has {x.size} values, --arity is {arity}", module="cli")
    model = _load_model(a.model, arity)
    spec = _spec_from_args(a, arity)
    res = explain_instance(model, x, spec, a.mode, a.budget, seed=a.seed, workers=a.workers)
    _write(res.to_json() + "\n", a.out)
    return EXIT_OK


def _emit_experiment(result, a, methods):
    csv_text = result.to_csv()
    summary = summary_json(result) + "\n"
    if a.out:
        _write(csv_text, a.out)
        _write(summary, a.out + ".json")
    else:
        sys.stdout.write(csv_text)
        sys.stderr.write(summary)
    if a.histogram:
        for m in methods:
            sys.stderr.write(text_histogram(result.errors(m), label=f"error {m}"))
    return EXIT_OK


def cmd_experiment(a) -> int:
    if a.experiment == "gaussian":
        cfg = ExperimentConfig(
            dims=a.dims,
            zero_coefficient_indices=tuple(a.zero_coefs) if a.zero_coefs is not None else (1,),
            runs=a.runs,
            sample_count=a.samples,
            coalition_budget=a.budget,
            value_kinds=tuple(a.value_fn or ("marginal", "cond-gauss")),
            seed=a.seed,
            instance=a.instance_dist,
            workers=a.workers,
        )
        return _emit_experiment(run_gaussian_experiment(cfg), a, cfg.value_kinds)
    data = load_csv(a.background, a.header)
    result = run_kernel_experiment(
        data, runs=a.runs, bandwidth=a.bandwidth, neighbor_count=a.neighbors, seed=a.seed, sample_count=a.samples
    )
    return _emit_experiment(result, a, ("marginal", "cond-kernel"))


def cmd_verify(a) -> int:
    from .verify import run_suite

    checks = run_suite(a.suite, a.seed)
    for c in checks:
        print(c.line())
    bad = [c for c in checks if not c.ok]
    print(f"{len(checks) - len(bad)}/{len(checks)} checks as expected")
    return EXIT_OK if not bad else EXIT_VERIFY


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"explain": cmd_explain, "experiment": cmd_experiment, "verify": cmd_verify}
    try:
        return handlers[a.command](a)
    except FeatrelError as exc:
        print(f"featrel: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
