"""Time the four EM backends against each other on random models.

BNC answers the per-record EM queries by variable elimination on each
confounded component — the baseline. ACC compiles each component once and
answers the same queries by circuit sweeps. BNP and ACP are the same two
engines with the component tasks executed in parallel. All four produce
numerically matching trajectories; only the wall clock differs.

Desk-scale expectations (2 cores): the compiled engine wins by several x,
parallelism adds its factor on top, and the ratios grow with model size
because elimination redoes structural work per query that compilation pays
for once.
"""

import numpy as np

from cfbounds.bench import run_benchmark
from cfbounds.em import EmConfig
from cfbounds.generate import GenConfig, generate_instances

cfg = GenConfig(
    endogenous_range=(3, 6),
    exogenous_range=(2, 4),
    exo_cardinality_range=(3, 24),
    dataset_size_range=(1000, 1000),
    edge_probability=0.4,
    seed=3,
)
instances = [(f"m{i}", pscm, data) for i, (pscm, data) in enumerate(generate_instances(cfg, 4))]
for name, pscm, data in instances:
    print(name, "-", len(pscm.exogenous_ids), "roots,",
          len(pscm.endogenous_ids), "observed,", len(data.records), "distinct records")

config = EmConfig(runs=10, max_iterations=60, rel_tolerance=0.0, seed=0)
report = run_benchmark(instances, ["BNC", "BNP", "ACC", "ACP"], config, timeout_s=900)

print(f"\n{'model':<6} {'method':<6} {'EM ms':>9} {'vs BNC':>8}")
for entry in report.entries:
    ratio = "-" if entry.ratio_vs_bnc is None else f"{entry.ratio_vs_bnc:.3f}"
    print(f"{entry.model:<6} {entry.method:<6} {entry.wall_ms:>9.1f} {ratio:>8}")

print("\ntotals (ms):", {m: round(v) for m, v in report.totals_ms.items()})
print("median ratios:", {m: round(q['median'], 3) for m, q in report.quartiles.items()})
