"""``sts-bench`` command line: generate | run | sweep | report."""
from __future__ import annotations

import argparse
import json
import os
import re
import sys
from typing import Optional, Sequence

import numpy as np

from . import report
from .explanations import ExplanationSource, mask_density
from .graphs import DatasetFormatError, ValidationError, load_dataset, save_dataset
from .harness import (AnalysisResult, ResultFormatError, SweepFailure, TrialConfig, default_metric,
                      load_result, parse_layers, run_analysis, run_sweep, save_result)
from .stats import PerformanceMetric
from .student import StudentConfig
from .synthgen import SynthConfig, generate

EXIT_OK, EXIT_USAGE, EXIT_UNRELIABLE = 0, 2, 3

SWEEP_FLAGS = {"train-size": "train_size", "noise": "noise_P", "adversarial": "adversarial_Q",
               "layers": "layers", "channels": "mask_channels"}

# built-in defaults of run/sweep, in the layout of a result fingerprint
DEFAULTS = {
    "student": {"conv_units": [5, 5, 5], "dense_units": [5, 3], "explanation_weight": 1.0,
                "node_weight": 1.0, "edge_weight": 1.0, "epochs": 150, "batch_size": 10,
                "learning_rate": 0.01},
    "reference_weight": 0.0,
    "train_size": 100,
    "repetitions": 25,
    "explanations": "ground_truth",
    "master_seed": 0,
}


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _add_protocol_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="dataset file (JSON lines)")
    p.add_argument("--config", help="JSON config in result-fingerprint layout; flags override it")
    p.add_argument("--explanations", help="ground_truth | noise:P | adversarial:Q | random[:density] | "
                                          "trivial:RULE | external:PATH (default ground_truth)")
    p.add_argument("--train-size", type=_positive_int, help="training graphs per trial (default 100)")
    p.add_argument("--repetitions", "-R", type=int, help="paired trials R (default 25)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--explanation-seed", type=int, help="seed of stochastic explanation sources "
                                                         "(default: the master seed)")
    p.add_argument("--metric", choices=[m.value for m in PerformanceMetric],
                   help="default: accuracy for classification, mse for regression")
    p.add_argument("--layers", help="student layout, e.g. 5-5-5:5-3 (conv widths:dense widths)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--explanation-weight", type=float, help="gamma of the explanation student")
    p.add_argument("--node-weight", type=float)
    p.add_argument("--edge-weight", type=float)
    p.add_argument("--reference-weight", type=float, help="gamma of the reference student (default 0)")
    p.add_argument("--workers", type=_positive_int, help="worker processes (default $STS_BENCH_THREADS or cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sts-bench", description="Student-teacher simulatability "
                                     "benchmark for attributional graph explanations.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write the synthetic red/blue motif dataset")
    g.add_argument("--count", type=int, default=5000, help="number of graphs (even, default 5000)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--min-nodes", type=int, default=15, help="smallest base graph (default 15)")
    g.add_argument("--max-nodes", type=int, default=40, help="largest base graph (default 40)")
    g.add_argument("--extra-edge-ratio", type=float, default=0.3,
                   help="extra edges per base node on top of the spanning tree (default 0.3)")
    g.add_argument("--background-low", type=float, default=0.3)
    g.add_argument("--background-high", type=float, default=0.8)

    r = sub.add_parser("run", help="one student-teacher analysis")
    _add_protocol_flags(r)
    r.add_argument("--out", required=True, help="result file to write")

    s = sub.add_parser("sweep", help="one analysis per value of a protocol parameter")
    _add_protocol_flags(s)
    s.add_argument("--param", required=True, help="one of " + ", ".join(SWEEP_FLAGS))
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="CSV table and SVG plot from result files")
    p.add_argument("results", nargs="+")
    p.add_argument("--csv", help="CSV output path (default: stdout)")
    p.add_argument("--svg", help="SVG output path")
    p.add_argument("--title", default="")
    p.add_argument("--force", action="store_true", help="aggregate results from different protocols")
    return parser


# -- configuration ------------------------------------------------------------------


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    data = data.get("fingerprint", data)  # a whole result file works as a config too
    known = set(DEFAULTS) | {"metric", "explanation_seed", "dataset"}
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"config {path}: unknown keys {sorted(unknown)}")
    data = {k: v for k, v in data.items() if k != "dataset"}
    return data


def _flag_overrides(args) -> dict:
    out: dict = {"student": {}}
    student_flags = {"epochs": "epochs", "batch_size": "batch_size", "learning_rate": "learning_rate",
                     "explanation_weight": "explanation_weight", "node_weight": "node_weight",
                     "edge_weight": "edge_weight"}
    for flag, key in student_flags.items():
        if getattr(args, flag) is not None:
            out["student"][key] = getattr(args, flag)
    if args.layers is not None:
        try:
            conv, dense = parse_layers(args.layers)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        out["student"].update(conv_units=list(conv), dense_units=list(dense))
    for flag, key in (("train_size", "train_size"), ("repetitions", "repetitions"), ("seed", "master_seed"),
                      ("explanations", "explanations"), ("explanation_seed", "explanation_seed"),
                      ("metric", "metric"), ("reference_weight", "reference_weight")):
        if getattr(args, flag) is not None:
            out[key] = getattr(args, flag)
    return out


def resolve_protocol(args, dataset) -> tuple:
    """``(TrialConfig, repetitions)`` from defaults < config file < flags."""
    settings = _merge(_merge(DEFAULTS, _load_config(args.config)), _flag_overrides(args))
    try:
        student_keys = dict(settings["student"])
        student_keys.pop("channels", None)
        student_keys.pop("task_kind", None)
        channels = dataset.channels
        student = StudentConfig(channels=channels, task_kind=dataset.task_kind, **student_keys)
        seed = int(settings["master_seed"])
        source = ExplanationSource.parse(str(settings["explanations"]),
                                         int(settings.get("explanation_seed", seed)))
        metric = PerformanceMetric(settings.get("metric") or default_metric(dataset.task_kind))
        config = TrialConfig(student=student, train_size=int(settings["train_size"]), metric=metric,
                             explanations=source, master_seed=seed,
                             reference_weight=float(settings["reference_weight"]))
        repetitions = int(settings["repetitions"])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    if repetitions < 2:
        raise UsageError(f"--repetitions must be >= 2, got {repetitions}")
    if config.train_size >= len(dataset):
        raise UsageError(f"--train-size {config.train_size} leaves no test graphs "
                         f"(dataset has {len(dataset)})")
    return config, repetitions


def _load_dataset(path: str):
    if not os.path.exists(path):
        raise UsageError(f"dataset not found: {path}")
    try:
        return load_dataset(path)
    except (DatasetFormatError, ValidationError) as exc:
        raise UsageError(f"cannot load dataset: {exc}") from None


def _describe(result: AnalysisResult) -> str:
    if result.test is None:
        return f"STS n/a (only {len(result.ok_trials())} usable trials)"
    verdict = "significant" if result.significant else "not significant"
    return (f"STS {result.sts:.4f}  t {result.test.t_statistic:.3f}  p {result.test.p_value:.4g}  "
            f"({verdict} at p<0.05)  diverged {result.diverged}/{result.repetitions}")


# -- commands -----------------------------------------------------------------------


def cmd_generate(args) -> int:
    try:
        cfg = SynthConfig(graph_count=args.count, min_nodes=args.min_nodes, max_nodes=args.max_nodes,
                          extra_edge_ratio=args.extra_edge_ratio, background_low=args.background_low,
                          background_high=args.background_high, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    dataset = generate(cfg)
    try:
        save_dataset(dataset, args.out)
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc.strerror}") from None
    labels = dataset.labels()
    nodes = np.array([g.node_count for g in dataset.graphs])
    edges = np.array([g.edge_count for g in dataset.graphs]) / 2
    print(f"wrote {len(dataset)} graphs to {args.out}")
    print(f"  active {int(np.sum(labels == 1))}  inactive {int(np.sum(labels == 0))}")
    print(f"  nodes/graph {nodes.mean():.1f}  undirected edges/graph {edges.mean():.1f}  "
          f"edge density {np.mean(2 * edges / (nodes * (nodes - 1))):.4f}")
    print(f"  ground-truth mask density {mask_density([g.masks for g in dataset.graphs]):.4f}")
    return EXIT_OK


def cmd_run(args) -> int:
    dataset = _load_dataset(args.dataset)
    config, repetitions = resolve_protocol(args, dataset)
    try:
        result = run_analysis(dataset, config, repetitions, args.workers)
    except (ValueError, KeyError, OSError) as exc:
        raise UsageError(str(exc)) from None
    try:
        save_result(result, args.out)
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc.strerror}") from None
    print(_describe(result))
    print(f"wall-clock {result.wall_clock:.1f}s; result written to {args.out}")
    if not result.reliable:
        print("analysis unreliable: too many diverged trials", file=sys.stderr)
        return EXIT_UNRELIABLE
    return EXIT_OK


def _sweep_values(parameter: str, text: str) -> list:
    raw = [v.strip() for v in text.split(",") if v.strip()]
    if not raw:
        raise UsageError("--values is empty")
    try:
        if parameter == "train_size":
            return [int(v) for v in raw]
        if parameter in ("noise_P", "adversarial_Q"):
            return [float(v) for v in raw]
    except ValueError as exc:
        raise UsageError(f"bad --values: {exc}") from None
    return raw


def cmd_sweep(args) -> int:
    if args.param not in SWEEP_FLAGS:
        raise UsageError(f"unknown --param {args.param!r}; choose from {', '.join(SWEEP_FLAGS)}")
    parameter = SWEEP_FLAGS[args.param]
    values = _sweep_values(parameter, args.values)
    dataset = _load_dataset(args.dataset)
    config, repetitions = resolve_protocol(args, dataset)
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        outcomes = run_sweep(dataset, config, parameter, values, repetitions, args.workers)
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None
    results, code = [], EXIT_OK
    for value, outcome in zip(values, outcomes):
        if isinstance(outcome, SweepFailure):
            print(f"{outcome.label}: FAILED {outcome.error}", file=sys.stderr)
            code = max(code, EXIT_USAGE)
            continue
        name = re.sub(r"[^A-Za-z0-9._-]", "_", f"{args.param}_{value}") + ".json"
        save_result(outcome, os.path.join(args.out_dir, name))
        results.append(outcome)
        print(f"{outcome.label}: {_describe(outcome)}")
        if not outcome.reliable:
            code = max(code, EXIT_UNRELIABLE)
    with open(os.path.join(args.out_dir, "sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write(report.to_csv(results))
    print(f"wall-clock {sum(r.wall_clock for r in results):.1f}s; results in {args.out_dir}")
    return code


def cmd_report(args) -> int:
    try:
        results = [load_result(p) for p in args.results]
    except OSError as exc:
        raise UsageError(f"cannot read result: {exc}") from None
    except ResultFormatError as exc:
        raise UsageError(str(exc)) from None
    if not args.force:
        try:
            report.check_compatible(results)
        except report.MixedFingerprints as exc:
            raise UsageError(f"{exc}; pass --force to aggregate anyway") from None
    table = report.to_csv(results)
    try:
        if args.csv:
            with open(args.csv, "w", encoding="utf-8") as fh:
                fh.write(table)
        else:
            sys.stdout.write(table)
        if args.svg:
            with open(args.svg, "w", encoding="utf-8") as fh:
                fh.write(report.to_svg(results, args.title))
    except OSError as exc:
        raise UsageError(f"cannot write report: {exc.strerror}") from None
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "sweep": cmd_sweep, "report": cmd_report}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sts-bench {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
