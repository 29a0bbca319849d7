"""Command-line entry point: ``hetcal {fit,apply,report,synth,verify}``.

Exit codes are 0 on success, 1 when ``verify`` finds a failing property
and 2 for invalid input. All randomness comes from ``--seed`` through
``numpy.random.default_rng``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import oracle, pipeline, synth
from .partitioner import CRITERIA, TreeConfig
from .score_model import PROB_CLAMP, load_csv, write_csv

EXIT_OK, EXIT_PROPERTY, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad user input; reported on stderr with exit code 2."""


def _write_json(obj, path) -> None:
    text = json.dumps(obj, sort_keys=True, indent=1) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _load(path, scale, what):
    try:
        return load_csv(path, score_scale=scale, role=what)
    except FileNotFoundError:
        raise InputError(f"{what}: file not found: {path}")
    except ValueError as e:
        raise InputError(f"{what} ({path}): {e}")


# --------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> int:
    train = _load(args.train, args.score_scale, "train")
    calib = _load(args.calib, args.score_scale, "calib")
    try:
        cfg = pipeline.HetCalConfig(
            tree=TreeConfig(criterion=args.criterion, max_depth=args.max_depth,
                            min_samples_leaf=args.min_samples_leaf, eps=args.eps),
            calibrator=args.calibrator,
            min_calib_samples_per_partition=args.min_calib_samples,
            n_trees=args.n_trees, stages=args.stages, platt_reg=args.platt_reg,
            histogram_bins=args.bins, seed=args.seed)
        hc = pipeline.fit(train, calib, cfg)
    except ValueError as e:
        raise InputError(str(e))
    for r in hc.leaf_reports:
        print(f"stage {r.stage} leaf {r.leaf}: calib rows {r.n_calib} (positives {r.n_pos})"
              f"{' -> fallback' if r.fallback else ''}", file=sys.stderr)
    n_fb = sum(r.fallback for r in hc.leaf_reports)
    print(f"{n_fb} of {len(hc.leaf_reports)} leaves use the global fallback", file=sys.stderr)
    pipeline.save_model(hc, args.out)
    return EXIT_OK


def cmd_apply(args) -> int:
    try:
        hc = pipeline.load_model(args.model)
    except FileNotFoundError:
        raise InputError(f"model: file not found: {args.model}")
    except (ValueError, KeyError, TypeError) as e:
        raise InputError(f"model ({args.model}): cannot parse: {e}")
    data = _load(args.data, args.score_scale, "data")
    if len(data) and data.n_features != hc.n_features:
        raise InputError(f"data has {data.n_features} feature columns, model expects {hc.n_features}")
    if len(data) == 0 and data.n_features not in (0, hc.n_features):
        raise InputError(f"data has {data.n_features} feature columns, model expects {hc.n_features}")
    probs = pipeline.predict(hc, data.features, data.scores) if len(data) else np.empty(0)
    write_csv(data, args.out, extra_columns={"calibrated_prob": probs})
    return EXIT_OK


def _read_column(path, name):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or name not in reader.fieldnames:
            raise InputError(f"data ({path}): missing column {name!r}")
        out = []
        for i, row in enumerate(reader, start=1):
            try:
                out.append(float(row[name]))
            except (TypeError, ValueError):
                raise InputError(f"data ({path}): row {i}: column {name!r} is not numeric: {row[name]!r}")
    return np.asarray(out, dtype=float)


def cmd_report(args) -> int:
    data = _load(args.data, args.score_scale, "data")
    probs = _read_column(args.data, args.prob_column)
    if np.any((probs < 0) | (probs > 1)):
        raise InputError(f"column {args.prob_column!r} must hold probabilities in [0, 1]")
    n_pos = int(data.labels.sum())
    if n_pos in (0, len(data)):
        raise InputError("report needs both labels present")
    comp = pipeline.compare_to_baseline(probs, data.scores, data.labels, args.bins)
    report = dict(comp["calibrated"])
    if args.baseline:
        report["baseline"] = comp["baseline"]
        report["auc_lift_pct"] = comp["auc_lift_pct"]
    _write_json(report, args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.kind == "heterogeneous":
        data = synth.gen_heterogeneous(args.n, args.w, args.b, args.seed, sigma_base=args.sigma_base,
                                       n_het=args.n_het, n_noise=args.n_noise)
        write_csv(data, args.out)
    elif args.kind == "overconfident":
        train, test = synth.gen_overconfident(args.n, args.seed, sigma_base=args.sigma_base)
        write_csv(train, args.out_train)
        write_csv(test, args.out_test)
    else:
        if args.w_step <= 0 or args.w_max < args.w_min:
            raise InputError("sweep needs w_step > 0 and w_max >= w_min")
        n = int(round((args.w_max - args.w_min) / args.w_step)) + 1
        grid = args.w_min + args.w_step * np.arange(n)
        synth.write_sweep_csv(synth.figure2_sweep(grid, args.sigma_base), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    report = oracle.property_suite(seed=args.seed, trials=args.trials, max_keys=args.max_keys)
    _write_json(report, args.out)
    for name, r in report["properties"].items():
        print(f"{'PASS' if r['passed'] else 'FAIL'} {name} ({r['checked']} instances)", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_PROPERTY


# --------------------------------------------------------------------------
# parser


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hetcal", description="Tree-partitioned score calibration.")
    sub = p.add_subparsers(dest="command", required=True)

    def scale(q):
        q.add_argument("--score-scale", choices=("logit", "probability"), default="logit",
                       help=f"scale of the score column; probabilities are clamped to [{PROB_CLAMP}, 1-{PROB_CLAMP}]")

    f = sub.add_parser("fit", help="fit a calibrator and write model JSON")
    f.add_argument("--train", required=True)
    f.add_argument("--calib", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--criterion", choices=CRITERIA, default="gini")
    f.add_argument("--max-depth", type=_positive_int, default=3)
    f.add_argument("--min-samples-leaf", type=_positive_int, default=100)
    f.add_argument("--eps", type=float, default=0.1)
    f.add_argument("--calibrator", choices=pipeline.CALIBRATORS, default="platt")
    f.add_argument("--min-calib-samples", type=int, default=50)
    f.add_argument("--n-trees", type=_positive_int, default=None)
    f.add_argument("--stages", type=int, choices=(1, 2), default=1)
    f.add_argument("--platt-reg", type=float, default=1e-6)
    f.add_argument("--bins", type=_positive_int, default=10)
    f.add_argument("--seed", type=int, default=0)
    scale(f)
    f.set_defaults(func=cmd_fit)

    a = sub.add_parser("apply", help="append calibrated_prob to a CSV")
    a.add_argument("--model", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--out", required=True)
    scale(a)
    a.set_defaults(func=cmd_apply)

    r = sub.add_parser("report", help="metrics JSON for a column of probabilities")
    r.add_argument("--data", required=True)
    r.add_argument("--out", default="-")
    r.add_argument("--prob-column", default="calibrated_prob")
    r.add_argument("--bins", type=_positive_int, default=15)
    r.add_argument("--baseline", action=argparse.BooleanOptionalAction, default=True,
                   help="include sigmoid(score) metrics and the AUC lift")
    scale(r)
    r.set_defaults(func=cmd_report)

    s = sub.add_parser("synth", help="write synthetic datasets or the AUC-vs-w sweep")
    s.add_argument("kind", choices=("heterogeneous", "overconfident", "sweep"))
    s.add_argument("--n", type=int, default=10000)
    s.add_argument("--w", type=float, default=1.8)
    s.add_argument("--b", type=float, default=-0.9)
    s.add_argument("--n-het", type=int, default=1)
    s.add_argument("--n-noise", type=int, default=2)
    s.add_argument("--sigma-base", type=float, default=synth.SIGMA_BASE)
    s.add_argument("--w-min", type=float, default=0.0)
    s.add_argument("--w-max", type=float, default=6.0)
    s.add_argument("--w-step", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--out-train")
    s.add_argument("--out-test")
    s.set_defaults(func=cmd_synth)

    v = sub.add_parser("verify", help="run the optimality property suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--trials", type=_positive_int, default=200)
    v.add_argument("--max-keys", type=int, default=6, choices=range(1, oracle.MAX_BRUTE_KEYS + 1))
    v.add_argument("--out", default="-")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth":
        needed = ("out_train", "out_test") if args.kind == "overconfident" else ("out",)
        missing = [n for n in needed if getattr(args, n) is None]
        if missing:
            parser.error(f"synth {args.kind} needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except BrokenPipeError:
        # reader closed stdout early (e.g. ``| head``); stay quiet on exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
