"""Command-line interface.

Exit codes: 0 success (including non-converged fits, which are recorded in
the model file), 2 usage or input errors, 3 unrecoverable numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import io, model as modelfile
from .empirical import SmootherConfig, empirical_distribution, extract_joint_events
from .evaluation import grid_search, holdout_split, kfold_splits, kl_to_truth, negative_test_loglik
from .loglinear import kl_divergence
from .model import fit_app, parse_subset, subset_label
from .optimizer import NATURAL, PLAIN, FitConfig, NumericalError
from .poset import build_space, mask_of, members_of
from .simulate import bernoulli_toy, constant, mixture_generator, sinusoidal, thinning_sample

EXIT_USAGE = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("addpoisson")


class UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")


def _method(text: str) -> str:
    aliases = {"natural": NATURAL, NATURAL: NATURAL, "plain": PLAIN, "gradient": PLAIN, PLAIN: PLAIN}
    if text not in aliases:
        raise argparse.ArgumentTypeError(f"unknown method {text!r}")
    return aliases[text]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="addpoisson",
                                     description="Additive Poisson process intensity estimation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw synthetic events and ground-truth intensities")
    p.add_argument("--kind", required=True, choices=["constant", "sinusoidal", "mixture", "bernoulli"])
    p.add_argument("--dims", type=int, default=1)
    p.add_argument("--components", type=int, default=20)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--level", type=float, default=None)
    p.add_argument("--amplitude", type=float, default=None)
    p.add_argument("--frequency", type=float, default=None, help="angular frequency, rad/s")
    p.add_argument("--probability", type=float, default=0.1)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--wishart-df", type=float, default=None)
    p.add_argument("--cov-scale", type=float, default=None)
    p.add_argument("--window", type=float, default=0.1, help="coincidence window for joint truth")
    p.add_argument("--bins", type=int, default=100, help="bins of the ground-truth tables")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("fit", help="fit a model to an event file")
    p.add_argument("--input", required=True)
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--bins", type=int, required=True)
    p.add_argument("--bandwidth", type=float, default=None, help="seconds; Scott's rule if omitted")
    p.add_argument("--window", type=float, default=0.1)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--dims", type=int, default=None)
    p.add_argument("--method", type=_method, default=NATURAL)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--init", choices=["zeros", "random"], default="zeros")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score a model")
    p.add_argument("--model", required=True)
    p.add_argument("--test", default=None, help="event file")
    p.add_argument("--subset", required=True, help="e.g. 1 or 1,2")
    p.add_argument("--metric", choices=["nll", "kl", "empirical-kl"], required=True)
    p.add_argument("--truth", default=None, help="bin,intensity CSV")
    p.add_argument("--append", default=None, help="results CSV to append to")
    p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = sub.add_parser("gridsearch", help="select bandwidth and bin count by validation likelihood")
    p.add_argument("--input", required=True)
    p.add_argument("--holdout", type=float, default=0.3)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--h-grid", type=_float_list, required=True)
    p.add_argument("--M-grid", type=_int_list, required=True)
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--window", type=float, default=0.1)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--dims", type=int, default=None)
    p.add_argument("--method", type=_method, default=NATURAL)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", required=True)

    p = sub.add_parser("intensity", help="export the per-bin intensity of one subset")
    p.add_argument("--model", required=True)
    p.add_argument("--subset", required=True)
    p.add_argument("--events", default=None, help="event file whose counts rescale the intensity")
    p.add_argument("--out", required=True)
    return parser


# ---------------------------------------------------------------- commands

def _subset_mask(text: str, D: int, flag: str = "--subset") -> int:
    try:
        ids = parse_subset(text)
    except ValueError:
        raise UsageError(f"{flag}: cannot parse {text!r}")
    if any(not 1 <= j <= D for j in ids):
        raise UsageError(f"{flag}: subset {text!r} not within processes 1..{D}")
    return mask_of(ids)


def _read_events(path, duration=None, dims=None, flag="--input"):
    try:
        return io.read_events(path, duration, dims)
    except (OSError, io.EventFileError) as exc:
        raise UsageError(f"{flag}: {exc}")


def cmd_simulate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    T = args.duration
    if not T > 0:
        raise UsageError("--duration must be positive")
    if args.dims < 1:
        raise UsageError("--dims must be at least 1")
    if not args.bins >= 1:
        raise UsageError("--bins must be at least 1")
    truths = {}
    if args.kind == "mixture":
        if args.components < 1:
            raise UsageError("--components must be at least 1")
        if args.count < 0:
            raise UsageError("--count must be non-negative")
        gt = mixture_generator(args.dims, args.components, args.count, T, seed=args.seed,
                               wishart_df=args.wishart_df, cov_scale=args.cov_scale,
                               delta=args.window, pairing="observations")
        streams = gt.sample.per_process
        for mask in range(1, 1 << args.dims):
            truths[mask] = gt.binned(mask, args.bins, args.window)
    else:
        if args.kind == "constant":
            if args.level is None or args.level < 0:
                raise UsageError("--level is required and must be non-negative for --kind constant")
            spec = constant(args.level, T)
        elif args.kind == "sinusoidal":
            if args.amplitude is None or args.amplitude < 0:
                raise UsageError("--amplitude is required and must be non-negative for --kind sinusoidal")
            if args.frequency is None:
                raise UsageError("--frequency is required for --kind sinusoidal")
            spec = sinusoidal(args.amplitude, args.frequency, T)
        else:
            if not 0 <= args.probability <= 1:
                raise UsageError("--probability must lie in [0, 1]")
            if not args.step > 0:
                raise UsageError("--step must be positive")
            spec = None
        seeds = np.random.SeedSequence(args.seed).spawn(args.dims)
        streams = []
        for j in range(args.dims):
            rng_seed = np.random.default_rng(seeds[j])
            if spec is None:
                streams.append(bernoulli_toy(args.probability, args.step, T, rng_seed))
            elif spec.upper_bound == 0:
                streams.append(np.empty(0))
            else:
                streams.append(thinning_sample(spec, spec.upper_bound, T, rng_seed))
        if spec is not None:
            for j in range(args.dims):
                truths[1 << j] = spec.binned(args.bins)
    io.write_events(os.path.join(args.out, "events.csv"), streams, T)
    for mask, lam in truths.items():
        name = "truth_" + "-".join(str(j) for j in members_of(mask)) + ".csv"
        io.write_intensity(os.path.join(args.out, name), lam, T, with_edges=False)
    print(f"wrote {sum(len(s) for s in streams)} events to {os.path.join(args.out, 'events.csv')}")
    return 0


def cmd_fit(args) -> int:
    streams, T = _read_events(args.input, args.duration, args.dims)
    D = len(streams)
    if not 1 <= args.order <= D:
        raise UsageError(f"--order must satisfy 1 <= k <= D={D}")
    if args.bins < 1:
        raise UsageError("--bins must be at least 1")
    if args.bandwidth is not None and not args.bandwidth > 0:
        raise UsageError("--bandwidth must be positive")
    if args.window < 0:
        raise UsageError("--window must be non-negative")
    try:
        cfg = FitConfig(method=args.method, max_iters=args.max_iters, tol=args.tol, step=args.step,
                        init=args.init, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    data = extract_joint_events(streams, args.window, T=T)
    try:
        fitted, report, _ = fit_app(data, args.order, args.bins, args.bandwidth, cfg)
    except ValueError as exc:
        raise UsageError(f"--input: {exc}")
    modelfile.save(fitted, args.out, args.format)
    status = "converged" if report.converged else f"not converged ({report.message})"
    print(f"{status}: iterations={report.iterations_run} kl={report.final_kl:.6g} "
          f"residual={report.final_residual:.3g} params={len(report.domain)} "
          f"pruned={len(report.pruned)}")
    return 0


def _load_model(path):
    try:
        return modelfile.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"--model: {exc}")


def cmd_eval(args) -> int:
    m = _load_model(args.model)
    mask = _subset_mask(args.subset, m.space.D)
    if args.metric == "kl":
        if args.truth is None:
            raise UsageError("--metric kl requires --truth")
        truth = io.read_intensity(args.truth)
        if len(truth) != m.space.M:
            raise UsageError(f"--truth has {len(truth)} bins, model has {m.space.M}")
        lam, _ = m.intensity(mask)
        value = kl_to_truth(lam, truth)
    elif args.metric == "nll":
        if args.test is None:
            raise UsageError("--metric nll requires --test")
        streams, _ = _read_events(args.test, m.space.T, m.space.D, flag="--test")
        test = extract_joint_events(streams, m.window, T=m.space.T)
        lam, _ = m.intensity(mask)
        value = negative_test_loglik(lam, test.events(mask), m.space.T, m.space.M)
    else:
        if args.test is None:
            raise UsageError("--metric empirical-kl requires --test")
        streams, _ = _read_events(args.test, m.space.T, m.space.D, flag="--test")
        test = extract_joint_events(streams, m.window, T=m.space.T)
        phat = empirical_distribution(test, SmootherConfig(m.bandwidths, m.space.M, m.space.T),
                                      m.space)
        value = kl_divergence(phat, m.distribution())
    label = subset_label(mask)
    if args.format == "json":
        print(json.dumps({"model": args.model, "subset": label, "metric": args.metric, "value": value}))
    else:
        print(f"{args.metric},{label},{value!r}")
    if args.append:
        io.append_row(args.append, ["model", "subset", "metric", "value"],
                      [args.model, label, args.metric, value])
    return 0


def cmd_gridsearch(args) -> int:
    streams, T = _read_events(args.input, args.duration, args.dims)
    D = len(streams)
    if not 1 <= args.order <= D:
        raise UsageError(f"--order must satisfy 1 <= k <= D={D}")
    if not args.h_grid or any(h <= 0 for h in args.h_grid):
        raise UsageError("--h-grid must hold positive bandwidths")
    if not args.M_grid or any(M < 1 for M in args.M_grid):
        raise UsageError("--M-grid must hold positive bin counts")
    if args.folds is not None:
        if args.folds < 2:
            raise UsageError("--folds must be at least 2")
        splits = kfold_splits(streams, args.folds, args.seed, args.window, T)
        train, valid = [s[0] for s in splits], [s[1] for s in splits]
    else:
        if not 0 < args.holdout < 1:
            raise UsageError("--holdout must lie in (0, 1)")
        train, valid = holdout_split(streams, args.holdout, args.seed, args.window, T)
    result = grid_search(train, valid, args.h_grid, args.M_grid, args.order, args.method)
    if args.format == "json":
        with open(args.out, "w", newline="\n", encoding="utf-8") as fh:
            json.dump({"best": {"h": result.best_h, "M": result.best_M},
                       "table": [{"h": h, "M": M, "score": s} for h, M, s in result.table]},
                      fh, indent=2)
            fh.write("\n")
    else:
        io.write_table(args.out, ["h", "M", "score"], result.table)
    print(f"--bandwidth {result.best_h!r} --bins {result.best_M}")
    return 0


def cmd_intensity(args) -> int:
    m = _load_model(args.model)
    mask = _subset_mask(args.subset, m.space.D)
    counts = None
    if args.events:
        streams, _ = _read_events(args.events, m.space.T, m.space.D, flag="--events")
        counts = extract_joint_events(streams, m.window, T=m.space.T)
    lam, empty = m.intensity(mask, counts)
    if empty:
        print(f"warning: subset {subset_label(mask)} has no events; intensity is zero",
              file=sys.stderr)
    io.write_intensity(args.out, lam, m.space.T)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "gridsearch": cmd_gridsearch,
    "intensity": cmd_intensity,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"{parser.prog} {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
