"""A small explanation-noise sweep rendered as CSV and SVG.

Writes noise_sweep.csv and noise_sweep.svg into the current directory.
"""
from pathlib import Path

from sts_bench import report, synthgen
from sts_bench.harness import SweepFailure, TrialConfig, run_sweep
from sts_bench.student import StudentConfig

ds = synthgen.generate(synthgen.SynthConfig(graph_count=300, seed=2))
config = TrialConfig(student=StudentConfig(explanation_weight=1.0, epochs=25), train_size=50)
points = run_sweep(ds, config, "noise_P", [0.0, 0.4, 1.0], repetitions=3)

results = [p for p in points if not isinstance(p, SweepFailure)]
for p in points:
    if isinstance(p, SweepFailure):
        print(p.label, "failed:", p.error)

print(report.to_csv(results))
Path("noise_sweep.csv").write_text(report.to_csv(results))
Path("noise_sweep.svg").write_text(report.to_svg(results, title="explanation noise sweep"))
print("wrote noise_sweep.csv and noise_sweep.svg")
