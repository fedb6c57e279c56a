"""Command-line interface.

Subcommands: train, predict, eval, path, synth, gradcheck. Exit codes are
0 on success, 1 for usage errors, 2 for data errors and 3 for numerical
failures.
"""

from __future__ import annotations

import argparse
import contextlib
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from .exceptions import InputError, NumericalError
from .features import IdentityMap, QuadraticMap, build_anchor_map
from .io import (
    FORMATS,
    load_dataset,
    load_model,
    read_rows,
    save_model,
    scale_features,
    write_dataset,
)
from .model import Dataset, Regularizer, loss_and_gradient, loss_avg, zero_one_error
from .synthetic import BlockDatasetSpec, CodeDatasetSpec, gen_block_dataset, gen_code_dataset
from .trainer import TrainConfig, TrainTrace, shareboost_train, shareboost_train_stumps

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

RULES = {
    "grad": "grad_l1",
    "refit": "best_column_refit",
    "linesearch": "single_column_linesearch",
    "vector": "single_column_vector",
}
REGS = {"none": "none", "frob": "frobenius", "sminf1": "smooth_mixed_norm"}
FEATURES = ("identity", "stumps", "quadratic", "anchors")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


def _quantiles(text):
    try:
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad quantile list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("quantile list is empty")
    return vals


def _add_data_args(p, required=True):
    p.add_argument("--data", required=required, help="dataset file")
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.add_argument("--label-col", default=None,
                   help="csv label column, by header name or index (default: last)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shareboost", description="Sparse multiclass linear classifiers "
                     "trained by greedy fully corrective feature selection.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model")
    _add_data_args(p)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--rule", choices=sorted(RULES), default="grad")
    p.add_argument("--reg", choices=sorted(REGS), default="none")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3,
                   help="regularization weight (ignored with --reg none)")
    p.add_argument("--beta", type=float, default=100.0)
    p.add_argument("--features", choices=FEATURES, default="identity")
    p.add_argument("--anchors", type=int, default=30, help="number of anchor centers")
    p.add_argument("--quantiles", type=_quantiles, default=(0.3, 0.5, 0.8),
                   help="comma-separated radius quantiles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="limit BLAS threads; 1 gives reproducible files (default: all)")
    p.add_argument("--no-scale", action="store_true", help="keep raw feature values")
    p.add_argument("--heldout", default=None, help="held-out dataset (same format)")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--trace", default=None, help="trace file to write")

    p = sub.add_parser("predict", help="predict labels for a dataset")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--out", default=None, help="label file (default: stdout)")

    p = sub.add_parser("eval", help="loss, error and support size of a model")
    p.add_argument("--model", required=True)
    _add_data_args(p)

    p = sub.add_parser("path", help="sparsity / accuracy table from a trace file")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=("code", "block"), default="code")
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--m", type=int, default=1600)
    p.add_argument("--s", type=int, default=6, help="blocks (block kind)")
    p.add_argument("--eps", type=float, default=0.25, help="zeroed fraction (block kind)")
    p.add_argument("--noise", type=float, default=0.0, help="label noise (code kind)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.add_argument("--out", required=True)

    p = sub.add_parser("gradcheck", help="compare the analytic gradient with finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--tolerance", type=float, default=1e-6)
    return parser


# --------------------------------------------------------------------------


def _emit(table: str, out):
    if out is None:
        sys.stdout.write(table)
    else:
        with open(out, "w") as fh:
            fh.write(table)


def _cmd_train(args):
    raw = load_dataset(args.data, args.format, args.label_col)
    heldout = None
    if args.heldout:
        heldout = load_dataset(args.heldout, args.format, args.label_col,
                               classes=raw.classes, d=raw.d if args.format == "sparse" else None)
        if heldout.d != raw.d:
            raise InputError(f"held-out data has {heldout.d} features, training data {raw.d}")
    scaling = None
    if not args.no_scale:
        raw, scaling = scale_features(raw)
        if heldout is not None:
            heldout = heldout.with_features(scaling.apply(heldout.X))

    reg = Regularizer(REGS[args.reg], args.lam if args.reg != "none" else 0.0, args.beta)
    groups = None
    if args.features == "stumps":
        cfg = TrainConfig(rounds=args.rounds, rule=RULES[args.rule], reg=reg)
        model, trace = shareboost_train_stumps(raw, cfg, heldout, scaling)
    else:
        if args.features == "identity":
            fmap = IdentityMap(raw.d)
        elif args.features == "quadratic":
            fmap = QuadraticMap(raw.d)
        else:
            fmap = build_anchor_map(raw, args.anchors, args.quantiles, seed=args.seed)
            groups = fmap.groups
        data = raw.with_features(fmap.transform(raw.X))
        held = None if heldout is None else heldout.with_features(fmap.transform(heldout.X))
        cfg = TrainConfig(rounds=args.rounds, rule=RULES[args.rule], reg=reg, groups=groups)
        model, trace = shareboost_train(data, cfg, held, fmap, scaling)

    model.meta = {
        "rounds": len(trace),
        "rule": cfg.rule,
        "reg": reg.kind,
        "lambda": reg.lam,
        "beta": reg.beta,
        "features": args.features,
        "seed": args.seed,
    }
    save_model(args.out, model)
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace.to_text())
    last = trace.records[-1] if trace.records else None
    err = last.train_err if last else float("nan")
    print(f"rounds={len(trace)} support={len(model.support)} train_err={err:.6g}")
    return EXIT_OK


def _model_inputs(model, args):
    d = model.raw_dimension if args.format == "sparse" else None
    X, tokens, lines = read_rows(args.data, args.format, args.label_col, d)
    return X, tokens, lines


def _cmd_predict(args):
    model = load_model(args.model)
    X, _, _ = _model_inputs(model, args)
    pred = model.predict(X)
    names = model.classes or [str(c) for c in range(model.k)]
    _emit("".join(f"{names[c]}\n" for c in pred), args.out)
    return EXIT_OK


def _cmd_eval(args):
    model = load_model(args.model)
    d = model.raw_dimension if args.format == "sparse" else None
    raw = load_dataset(args.data, args.format, args.label_col, classes=model.classes, d=d)
    if raw.k != model.k:
        raise InputError(f"dataset has {raw.k} classes, model {model.k}")
    data = Dataset(model.transform(raw.X), raw.y, model.k)
    print(f"loss\t{loss_avg(model.W, data)!r}")
    print(f"zero_one_error\t{zero_one_error(model.W, data)!r}")
    print(f"support_size\t{len(model.support)}")
    return EXIT_OK


def _cmd_path(args):
    with open(args.trace) as fh:
        trace = TrainTrace.from_text(fh.read())
    _emit(trace.path_table(), args.out)
    return EXIT_OK


def _cmd_synth(args):
    if args.kind == "code":
        data = gen_code_dataset(CodeDatasetSpec(args.k, args.m), args.noise, args.seed)
    else:
        data = gen_block_dataset(BlockDatasetSpec(args.k, args.s, args.m, args.eps), args.seed)
    data = Dataset(data.X, data.y, data.k, [str(c + 1) for c in range(data.k)])
    write_dataset(args.out, data, args.format)
    return EXIT_OK


def max_gradient_error(rng, instances=50, h=1e-5):
    """Largest relative error between the analytic loss gradient and central
    differences over random instances (``m <= 20``, ``d <= 8``, ``k <= 5``).

    The error of one instance is ``|g - g_fd|_inf / max(|g|_inf, |g_fd|_inf)``.
    """
    worst = 0.0
    for _ in range(instances):
        m, d, k = rng.integers(1, 21), rng.integers(1, 9), rng.integers(2, 6)
        data = Dataset(rng.normal(size=(m, d)), rng.integers(k, size=m), int(k))
        W = rng.normal(size=(k, d))
        _, G = loss_and_gradient(W, data)
        fd = np.zeros_like(W)
        for idx in np.ndindex(*W.shape):
            E = np.zeros_like(W)
            E[idx] = h
            fd[idx] = (loss_avg(W + E, data) - loss_avg(W - E, data)) / (2 * h)
        scale = max(np.abs(G).max(), np.abs(fd).max(), np.finfo(float).tiny)
        worst = max(worst, float(np.abs(G - fd).max() / scale))
    return worst


def _cmd_gradcheck(args):
    err = max_gradient_error(np.random.default_rng(args.seed), args.instances)
    print(f"max_relative_error\t{err:.3e}")
    return EXIT_OK if err <= args.tolerance else EXIT_NUMERICAL


COMMANDS = {
    "train": _cmd_train,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "path": _cmd_path,
    "synth": _cmd_synth,
    "gradcheck": _cmd_gradcheck,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    threads = getattr(args, "threads", None)
    if threads is not None and threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE
    limit = threadpool_limits(limits=threads) if threads else contextlib.nullcontext()
    try:
        with limit:
            return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main():
    sys.exit(run_cli())
