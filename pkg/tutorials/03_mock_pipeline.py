"""Run the Creator-Inspector loop with deterministic mock agents.

The flaky creator first proposes a model with a raw stretch input. The
oracle inspector flags it, the creator switches to invariant inputs and
the corrected model is approved and retrained.
"""

from cannlab.agents import FlakyCreator, OracleInspector, PipelineConfig, ground_truth_label, run_pipeline
from cannlab.datasets import generate_synthetic
from cannlab.model import mooney_rivlin

data = generate_synthetic(mooney_rivlin(), n=15)
config = PipelineConfig(refinement_rounds=1, violating_export_prob=1.0, output_dir="mock_run")
run = run_pipeline(config, data, FlakyCreator(), OracleInspector())

for a, b in run.transitions:
    print(f"{a:>18} -> {b}")
for e in run.exports:
    print(f"round {e.round}: approved, mean R2 {e.fit.mean_r2:.5f}")
for e in run.sampled_violations:
    print(f"round {e.round}: violating model kept for analysis, fails {[c.value for c in e.validation.failed]}")

conf = ground_truth_label(run)
print("adherence precision", conf["adherence_precision"], "violation precision", conf["violation_precision"])
print("outputs written to", config.output_dir)
