import json
from dataclasses import replace

import numpy as np
import pytest

from sts_bench import harness, student, synthgen
from sts_bench.explanations import ExplanationSource
from sts_bench.harness import (AnalysisResult, ResultFormatError, SweepFailure, TrialConfig, TrialResult,
                               apply_sweep_value, load_result, parse_layers, run_analysis, run_sweep,
                               run_trial, save_result, summarize)
from sts_bench.stats import PerformanceMetric
from sts_bench.student import StudentConfig

FAST = StudentConfig(conv_units=(3, 3), dense_units=(3,), epochs=3, explanation_weight=1.0)


@pytest.fixture(scope="module")
def ds():
    return synthgen.generate(synthgen.SynthConfig(graph_count=40, seed=11))


def fast_config(**kw):
    return TrialConfig(student=kw.pop("student", FAST), train_size=kw.pop("train_size", 12), **kw)


def test_trial_config_validation():
    with pytest.raises(ValueError):
        TrialConfig(train_size=0)
    with pytest.raises(ValueError):
        TrialConfig(reference_weight=-1.0)
    assert TrialConfig(metric="mse").metric is PerformanceMetric.MSE


def test_seeds_are_pure_functions_of_master_and_repetition():
    a = TrialConfig(master_seed=3, repetition=2).seeds()
    assert a == TrialConfig(master_seed=3, repetition=2, train_size=50).seeds()
    assert a != TrialConfig(master_seed=3, repetition=1).seeds()
    assert len(set(a.values())) == 3


def test_paired_null_trial(ds):
    cfg = fast_config(student=replace(FAST, explanation_weight=0.0))
    t = run_trial(ds, cfg)
    assert t.ok and t.perf_ref == t.perf_exp and t.node_auc_ref == t.node_auc_exp


def test_students_share_initial_outputs(ds):
    cfg = fast_config()
    seeds = cfg.seeds()
    ref = student.init_student(cfg.reference_student, seeds["init"])
    exp = student.init_student(cfg.student, seeds["init"])
    probes = list(ds.graphs[:10])
    pr, mr = student.predict(ref, probes)
    pe, me = student.predict(exp, probes)
    assert np.array_equal(pr, pe) and all(a.equals(b) for a, b in zip(mr, me))


def test_trial_records_split_and_seeds(ds):
    t = run_trial(ds, fast_config(repetition=1))
    assert t.seeds == fast_config(repetition=1).seeds()
    assert len(t.split_fingerprint) == 16
    assert t.split_fingerprint != run_trial(ds, fast_config(repetition=2)).split_fingerprint
    assert all(np.isfinite(v) for v in (t.perf_ref, t.perf_exp))


def test_analysis_paired_null_is_exact(ds):
    res = run_analysis(ds, fast_config(student=replace(FAST, explanation_weight=0.0)), 3, workers=1)
    assert res.sts == 0.0 and res.test.p_value == 1.0 and not res.significant


def test_analysis_needs_two_repetitions(ds):
    with pytest.raises(ValueError):
        run_analysis(ds, fast_config(), 1)


def test_analysis_reproducible_and_schedule_independent(ds):
    cfg = fast_config(explanations=ExplanationSource("noise", ratio=0.3, seed=2))
    seq = run_analysis(ds, cfg, 3, workers=1)
    par = run_analysis(ds, cfg, 3, workers=3)
    assert seq.to_json() == par.to_json() == run_analysis(ds, cfg, 3, workers=1).to_json()
    assert seq.fingerprint["repetitions"] == 3
    assert seq.fingerprint["dataset"]["graphs"] == 40


def test_reference_cache_does_not_change_results(ds):
    cache = {}
    cold = run_analysis(ds, fast_config(), 2, workers=1, reference_cache=cache)
    assert len(cache) == 2
    warm = run_analysis(ds, fast_config(), 2, workers=1, reference_cache=cache)
    assert cold.to_json() == warm.to_json()
    other = run_analysis(ds, fast_config(explanations=ExplanationSource("random")), 2, workers=1,
                         reference_cache=cache)
    assert len(cache) == 2
    assert other.column("perf_ref") == cold.column("perf_ref")


def test_worker_count(monkeypatch):
    monkeypatch.setenv("STS_BENCH_THREADS", "3")
    assert harness.worker_count() == 3
    assert harness.worker_count(2) == 2
    monkeypatch.setenv("STS_BENCH_THREADS", "zero")
    with pytest.raises(ValueError):
        harness.worker_count()
    with pytest.raises(ValueError):
        harness.worker_count(0)


def trial(rep, ref, exp, status="ok"):
    return TrialResult(rep, ref, exp, 0.9, 0.9, 0.9, 0.9, "f" * 16, {"split": 1}, status)


def test_diverged_trials_are_excluded_and_flagged():
    fp = {"metric": "accuracy"}
    trials = [trial(0, 0.5, 0.6), trial(1, 0.5, 0.7), trial(2, None, None, "diverged"),
              trial(3, 0.5, 0.8), trial(4, 0.5, 0.9)]
    ok = summarize(fp, trials)
    assert ok.diverged == 1 and ok.repetitions == 5 and ok.reliable
    assert ok.sts == pytest.approx(0.25)
    bad = summarize(fp, trials[:3] + [trial(3, None, None, "diverged")])
    assert bad.diverged == 2 and not bad.reliable


def test_lower_is_better_metric_orientation():
    res = summarize({"metric": "mse"}, [trial(0, 1.0, 0.5), trial(1, 1.0, 0.7)])
    assert res.sts > 0


def test_identical_trials_give_zero_and_one():
    res = summarize({"metric": "accuracy"}, [trial(0, 0.8, 0.8), trial(1, 0.7, 0.7)])
    assert res.sts == 0.0 and res.test.p_value == 1.0


def test_result_round_trip(ds, tmp_path):
    res = run_analysis(ds, fast_config(), 2, workers=1, label="demo")
    save_result(res, tmp_path / "r.json")
    back = load_result(tmp_path / "r.json")
    assert back.to_json() == res.to_json()
    assert "wall_clock" not in (tmp_path / "r.json").read_text()


def test_result_tampering_detected(ds, tmp_path):
    data = run_analysis(ds, fast_config(), 2, workers=1).to_dict()
    data["sts"] = 123.0
    (tmp_path / "t.json").write_text(json.dumps(data))
    with pytest.raises(ResultFormatError, match="STS"):
        load_result(tmp_path / "t.json")
    (tmp_path / "x.json").write_text("{")
    with pytest.raises(ResultFormatError):
        load_result(tmp_path / "x.json")
    (tmp_path / "y.json").write_text(json.dumps({"format": "other"}))
    with pytest.raises(ResultFormatError):
        load_result(tmp_path / "y.json")


@pytest.mark.parametrize("text, expected", [("5-5-5:5-3", ((5, 5, 5), (5, 3))), ("3-3:3", ((3, 3), (3,))),
                                            ("8", ((8,), ()))])
def test_parse_layers(text, expected):
    assert parse_layers(text) == expected


@pytest.mark.parametrize("text", [":5", "a-b:3", ""])
def test_parse_layers_errors(text):
    with pytest.raises(ValueError):
        parse_layers(text)


def test_sweep_value_mapping():
    base = TrialConfig(explanations=ExplanationSource(seed=4))
    assert apply_sweep_value(base, "train_size", "300").train_size == 300
    noisy = apply_sweep_value(base, "noise_P", 0.4).explanations
    assert (noisy.kind, noisy.ratio, noisy.seed) == ("noise", 0.4, 4)
    assert apply_sweep_value(base, "adversarial_Q", 1.0).explanations.spec() == "adversarial:1.0"
    layered = apply_sweep_value(base, "layers", "5-5-5:5-3").student
    assert layered.conv_units == (5, 5, 5) and layered.dense_units == (5, 3)
    nodes = apply_sweep_value(base, "mask_channels", "nodes").student
    assert (nodes.node_weight, nodes.edge_weight) == (1.0, 0.0)
    with pytest.raises(ValueError):
        apply_sweep_value(base, "mask_channels", "both-ish")
    with pytest.raises(ValueError):
        apply_sweep_value(base, "temperature", 1)


def test_sweep_reports_failures_without_aborting(ds):
    out = run_sweep(ds, fast_config(), "train_size", [12, 400], 2, workers=1)
    assert isinstance(out[0], AnalysisResult) and out[0].label == "train_size=12"
    assert isinstance(out[1], SweepFailure) and "400" in out[1].label


def test_sweep_points_share_seed_scheme(ds):
    out = run_sweep(ds, fast_config(), "mask_channels", ["both", "nodes"], 2, workers=1)
    assert [t.seeds for t in out[0].trials] == [t.seeds for t in out[1].trials]
    assert out[0].column("perf_ref") == out[1].column("perf_ref")


def test_sweep_rejects_bad_arguments(ds):
    with pytest.raises(ValueError):
        run_sweep(ds, fast_config(), "bogus", [1], 2)
    with pytest.raises(ValueError):
        run_sweep(ds, fast_config(), "train_size", [], 2)
