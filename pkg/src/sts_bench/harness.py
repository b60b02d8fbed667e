"""Paired student-teacher trials, R-fold analyses and parameter sweeps.

A trial trains two students from one shared initialization on one shared
train split: the reference (no explanation loss) and the explanation student.
Only their test performance, and the masks they generate, are compared.
"""
from __future__ import annotations

import hashlib
import json
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .explanations import ExplanationSource, materialize
from .graphs import CLASSIFICATION, Dataset, ExplanationMasks, dumps_dataset, split_dataset
from .optim import derive_seed
from .stats import PerformanceMetric, TestReport, oriented_differences, paired_t_test, sts
from .student import StudentConfig, TrainingDiverged, evaluate, init_student, train

RESULT_FORMAT = "sts-bench-result"
RESULT_VERSION = 1
MAX_DIVERGED_FRACTION = 0.2
SWEEP_PARAMETERS = ("train_size", "noise_P", "adversarial_Q", "layers", "mask_channels")
MASK_CHANNELS = {"both": (1.0, 1.0), "nodes": (1.0, 0.0), "edges": (0.0, 1.0)}


class ResultFormatError(ValueError):
    pass


def default_metric(task_kind: str) -> PerformanceMetric:
    return PerformanceMetric.ACCURACY if task_kind == CLASSIFICATION else PerformanceMetric.MSE


@dataclass(frozen=True)
class TrialConfig:
    """Everything one paired trial needs besides the data.

    ``student`` is the explanation student's configuration; the reference uses
    the same configuration with ``explanation_weight = reference_weight``.
    """

    student: StudentConfig = field(default_factory=lambda: StudentConfig(explanation_weight=1.0))
    train_size: int = 100
    metric: PerformanceMetric = PerformanceMetric.ACCURACY
    explanations: ExplanationSource = field(default_factory=ExplanationSource)
    repetition: int = 0
    master_seed: int = 0
    reference_weight: float = 0.0

    def __post_init__(self):
        if self.train_size < 1:
            raise ValueError(f"train_size must be >= 1, got {self.train_size}")
        if self.reference_weight < 0:
            raise ValueError("reference_weight must be >= 0")
        object.__setattr__(self, "metric", PerformanceMetric(self.metric))

    def seeds(self) -> Dict[str, int]:
        return {role: derive_seed(self.master_seed, self.repetition, role)
                for role in ("split", "init", "shuffle")}

    @property
    def reference_student(self) -> StudentConfig:
        return replace(self.student, explanation_weight=self.reference_weight)

    def fingerprint(self) -> dict:
        """Every hyperparameter and seed that determines an analysis (repetition excluded)."""
        return {
            "student": self.student.to_dict(),
            "reference_weight": self.reference_weight,
            "train_size": self.train_size,
            "metric": self.metric.value,
            "explanations": self.explanations.spec(),
            "explanation_seed": self.explanations.seed,
            "master_seed": self.master_seed,
        }


@dataclass
class StudentOutcome:
    performance: Optional[float]
    node_auc: Optional[float]
    edge_auc: Optional[float]
    diverged_epoch: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.diverged_epoch is None


@dataclass
class TrialResult:
    repetition: int
    perf_ref: Optional[float]
    perf_exp: Optional[float]
    node_auc_ref: Optional[float]
    node_auc_exp: Optional[float]
    edge_auc_ref: Optional[float]
    edge_auc_exp: Optional[float]
    split_fingerprint: str
    seeds: Dict[str, int]
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AnalysisResult:
    fingerprint: dict
    trials: List[TrialResult]
    sts: Optional[float]
    test: Optional[TestReport]
    label: str = ""
    wall_clock: float = 0.0

    @property
    def repetitions(self) -> int:
        return len(self.trials)

    @property
    def diverged(self) -> int:
        return sum(not t.ok for t in self.trials)

    @property
    def reliable(self) -> bool:
        return self.test is not None and self.diverged <= MAX_DIVERGED_FRACTION * self.repetitions

    @property
    def significant(self) -> bool:
        return self.test is not None and self.test.significant

    @property
    def metric(self) -> PerformanceMetric:
        return PerformanceMetric(self.fingerprint["metric"])

    def ok_trials(self) -> List[TrialResult]:
        return [t for t in self.trials if t.ok]

    def column(self, name: str) -> List[float]:
        """Values of one TrialResult field over ok trials, skipping missing entries."""
        return [getattr(t, name) for t in self.ok_trials() if getattr(t, name) is not None]

    def mean(self, name: str) -> Optional[float]:
        values = self.column(name)
        return float(np.mean(values)) if values else None

    def to_dict(self) -> dict:
        # wall-clock time is deliberately not persisted: result files stay byte-reproducible
        return {
            "format": RESULT_FORMAT, "version": RESULT_VERSION,
            "label": self.label,
            "fingerprint": self.fingerprint,
            "repetitions": self.repetitions,
            "diverged": self.diverged,
            "reliable": self.reliable,
            "sts": self.sts,
            "test": None if self.test is None else self.test.to_dict(),
            "trials": [t.to_dict() for t in self.trials],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def summarize(fingerprint: dict, trials: Sequence[TrialResult], label: str = "",
              wall_clock: float = 0.0) -> AnalysisResult:
    """STS and paired t-test over the ok trials."""
    metric = PerformanceMetric(fingerprint["metric"])
    ok = [t for t in trials if t.ok]
    value = sts([t.perf_exp for t in ok], [t.perf_ref for t in ok], metric) if ok else None
    test = None
    if len(ok) >= 2:
        test = paired_t_test(oriented_differences([t.perf_exp for t in ok],
                                                  [t.perf_ref for t in ok], metric))
    return AnalysisResult(fingerprint, list(trials), value, test, label, wall_clock)


def result_from_dict(d: dict) -> AnalysisResult:
    if not isinstance(d, dict) or d.get("format") != RESULT_FORMAT:
        raise ResultFormatError("not an sts-bench result record")
    if d.get("version") != RESULT_VERSION:
        raise ResultFormatError(f"unsupported result version {d.get('version')!r}")
    try:
        trials = [TrialResult(**t) for t in d["trials"]]
        result = summarize(d["fingerprint"], trials, d.get("label", ""))
        metric = d["fingerprint"]["metric"]
        PerformanceMetric(metric)
    except (KeyError, TypeError, ValueError) as exc:
        raise ResultFormatError(f"malformed result record: {exc}") from None
    if result.sts != d.get("sts") and not (result.sts is None and d.get("sts") is None):
        raise ResultFormatError("stored STS does not match the trial records")
    return result


def load_result(path: str | os.PathLike) -> AnalysisResult:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ResultFormatError(f"{path}: invalid JSON ({exc.msg})") from None
    try:
        return result_from_dict(data)
    except ResultFormatError as exc:
        raise ResultFormatError(f"{path}: {exc}") from None


def save_result(result: AnalysisResult, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(result.to_json())


# -- trials -------------------------------------------------------------------------


def dataset_digest(dataset: Dataset) -> str:
    return hashlib.sha256(dumps_dataset(dataset).encode()).hexdigest()


def _split_fingerprint(train_ids: np.ndarray) -> str:
    return hashlib.sha256(np.asarray(train_ids, dtype="<i8").tobytes()).hexdigest()[:16]


def _train_and_score(dataset: Dataset, config: StudentConfig, seeds: Dict[str, int],
                     train_ids, test_ids, masks) -> StudentOutcome:
    model = init_student(config, seeds["init"], dataset.node_feature_dim,
                         dataset.edge_feature_dim, dataset.target_dim)
    try:
        trained, _ = train(model, dataset, train_ids, config, seeds["shuffle"], masks=masks)
    except TrainingDiverged as exc:
        return StudentOutcome(None, None, None, exc.epoch)
    ev = evaluate(trained, dataset, test_ids, config.task_kind)
    if not math.isfinite(ev.performance):
        return StudentOutcome(None, None, None, config.epochs)
    return StudentOutcome(ev.performance, ev.node_auc, ev.edge_auc)


def run_trial(dataset: Dataset, config: TrialConfig,
              masks: Optional[Sequence[ExplanationMasks]] = None,
              reference: Optional[StudentOutcome] = None) -> TrialResult:
    """One paired trial.

    ``masks`` are the supervision targets (materialized from
    ``config.explanations`` when omitted). ``reference`` lets a caller reuse a
    reference outcome already computed for the identical split, init and
    schedule; the reference never sees explanations, so it does not depend on
    the explanation source.
    """
    if masks is None:
        masks = materialize(config.explanations, dataset)
    seeds = config.seeds()
    train_ids, test_ids = split_dataset(dataset, config.train_size, seeds["split"])
    if reference is None:
        reference = _train_and_score(dataset, config.reference_student, seeds, train_ids, test_ids, masks)
    explained = _train_and_score(dataset, config.student, seeds, train_ids, test_ids, masks)
    status = "ok" if reference.ok and explained.ok else "diverged"
    return TrialResult(
        repetition=config.repetition,
        perf_ref=reference.performance, perf_exp=explained.performance,
        node_auc_ref=reference.node_auc, node_auc_exp=explained.node_auc,
        edge_auc_ref=reference.edge_auc, edge_auc_exp=explained.edge_auc,
        split_fingerprint=_split_fingerprint(train_ids), seeds=seeds, status=status,
    )


def reference_outcome(result: TrialResult) -> Optional[StudentOutcome]:
    """The reference half of a finished trial, for reuse by later analyses."""
    if result.perf_ref is None:
        return None
    return StudentOutcome(result.perf_ref, result.node_auc_ref, result.edge_auc_ref)


# -- analyses -----------------------------------------------------------------------


def worker_count(requested: Optional[int] = None) -> int:
    if requested is not None:
        if requested < 1:
            raise ValueError("worker count must be >= 1")
        return requested
    env = os.environ.get("STS_BENCH_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"STS_BENCH_THREADS must be an integer, got {env!r}") from None
        if value < 1:
            raise ValueError("STS_BENCH_THREADS must be >= 1")
        return value
    return os.cpu_count() or 1


# state shared with forked workers; set only for the lifetime of one pool
_SHARED: dict = {}


def _pool_trial(job):
    config, reference = job
    return run_trial(_SHARED["dataset"], config, _SHARED["masks"], reference)


ReferenceCache = Dict[Tuple[str, int], StudentOutcome]


def _reference_key(digest: str, config: TrialConfig) -> Tuple[str, int]:
    fp = config.fingerprint()
    key = {"dataset": digest, "student": config.reference_student.to_dict(),
           "train_size": fp["train_size"], "master_seed": fp["master_seed"]}
    if config.reference_weight > 0:  # such a reference does see the explanations
        key.update(explanations=fp["explanations"], explanation_seed=fp["explanation_seed"])
    return json.dumps(key, sort_keys=True), config.repetition


def run_analysis(dataset: Dataset, config: TrialConfig, repetitions: int,
                 workers: Optional[int] = None, label: str = "",
                 reference_cache: Optional[ReferenceCache] = None) -> AnalysisResult:
    """``repetitions`` paired trials, aggregated into STS and a paired t-test.

    Trials run in a process pool of ``workers`` (default: ``STS_BENCH_THREADS``
    or the core count); results are ordered by repetition, so the outcome does
    not depend on scheduling. ``reference_cache`` shares reference students
    between analyses that differ only in the explanation student.
    """
    if repetitions < 2:
        raise ValueError(f"an analysis needs at least 2 repetitions, got {repetitions}")
    start = time.perf_counter()
    masks = materialize(config.explanations, dataset)
    digest = dataset_digest(dataset)
    configs = [replace(config, repetition=r) for r in range(repetitions)]
    refs = [None] * repetitions
    if reference_cache is not None:
        refs = [reference_cache.get(_reference_key(digest, c)) for c in configs]
    n_workers = min(worker_count(workers), repetitions)
    if n_workers == 1:
        trials = [run_trial(dataset, c, masks, ref) for c, ref in zip(configs, refs)]
    else:
        _SHARED.update(dataset=dataset, masks=masks)
        try:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(n_workers, mp_context=ctx) as pool:
                trials = list(pool.map(_pool_trial, zip(configs, refs)))
        finally:
            _SHARED.clear()
    trials.sort(key=lambda t: t.repetition)
    if reference_cache is not None:
        for c, t in zip(configs, trials):
            outcome = reference_outcome(t)
            if outcome is not None:
                reference_cache[_reference_key(digest, c)] = outcome
    fingerprint = dict(config.fingerprint(), repetitions=repetitions,
                       dataset={"digest": digest, "graphs": len(dataset), "task_kind": dataset.task_kind})
    return summarize(fingerprint, trials, label, time.perf_counter() - start)


# -- sweeps -------------------------------------------------------------------------


@dataclass
class SweepFailure:
    label: str
    error: str


def parse_layers(text: str) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """``"5-5-5:5-3"`` -> conv widths (5, 5, 5) and dense widths (5, 3)."""
    conv, _, dense = str(text).partition(":")
    try:
        conv_units = tuple(int(u) for u in conv.split("-") if u)
        dense_units = tuple(int(u) for u in dense.split("-") if u)
    except ValueError:
        raise ValueError(f"bad layer layout {text!r}; expected e.g. 5-5-5:5-3") from None
    if not conv_units:
        raise ValueError(f"layer layout {text!r} has no conv layers")
    return conv_units, dense_units


def apply_sweep_value(config: TrialConfig, parameter: str, value) -> TrialConfig:
    """The trial configuration of one sweep point."""
    seed = config.explanations.seed
    if parameter == "train_size":
        return replace(config, train_size=int(value))
    if parameter == "noise_P":
        return replace(config, explanations=ExplanationSource("noise", ratio=float(value), seed=seed))
    if parameter == "adversarial_Q":
        return replace(config, explanations=ExplanationSource("adversarial", ratio=float(value), seed=seed))
    if parameter == "layers":
        conv, dense = parse_layers(value)
        return replace(config, student=replace(config.student, conv_units=conv, dense_units=dense))
    if parameter == "mask_channels":
        if value not in MASK_CHANNELS:
            raise ValueError(f"mask_channels value must be one of {sorted(MASK_CHANNELS)}, got {value!r}")
        node_w, edge_w = MASK_CHANNELS[value]
        return replace(config, student=replace(config.student, node_weight=node_w, edge_weight=edge_w))
    raise ValueError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")


def run_sweep(dataset: Dataset, config: TrialConfig, parameter: str, values: Sequence,
              repetitions: int, workers: Optional[int] = None,
              reference_cache: Optional[ReferenceCache] = None
              ) -> List[Union[AnalysisResult, SweepFailure]]:
    """One analysis per value under the same master seed; failing points are reported, not raised."""
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")
    if not values:
        raise ValueError("a sweep needs at least one value")
    point_configs = [apply_sweep_value(config, parameter, v) for v in values]
    cache = {} if reference_cache is None else reference_cache
    out: List[Union[AnalysisResult, SweepFailure]] = []
    for value, point in zip(values, point_configs):
        label = f"{parameter}={value}"
        try:
            out.append(run_analysis(dataset, point, repetitions, workers, label, cache))
        except Exception as exc:  # one bad point must not sink the rest of the sweep
            out.append(SweepFailure(label, f"{type(exc).__name__}: {exc}"))
    return out
