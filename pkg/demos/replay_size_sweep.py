# How much does the replay budget matter?
#
# Same data, same seeds, same class orders; the only thing moving is the
# number of synthetic rows kept per old class. Small budgets under-
# represent old classes during training and the forgetting metric shows it.

import csv
from pathlib import Path

from protoreplay import (
    BenchSpec,
    DatasetReader,
    SamplerConfig,
    SessionPlan,
    TrainConfig,
    generate,
    replay_size_sweep,
)
from protoreplay.protocol import sweep_csv_rows

root = Path("demo_out/sweep_bench")
generate(
    BenchSpec(
        dim=24,
        n_classes=12,
        train_per_class=100,
        test_per_class=50,
        separation=5.0,
        base_classes=6,
        increment_size=2,
        n_increments=3,
        seed=3,
    ),
    root,
)

reader = DatasetReader(root)
plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=(7, 8))

results = replay_size_sweep(
    reader,
    plan,
    sizes=[5, 20, 60, 150],
    sampler_cfg=SamplerConfig(replay_per_class=60, candidate_pool=120),
    train_cfg=TrainConfig(epochs=12, batch_size=64, alpha=4),
)

print("size   final G   mean IFM")
for size, rep in results.items():
    agg = rep.aggregate()
    print(f"{size:4d}   {agg['final_g']['mean']:7.2f}   {agg['mean_ifm']['mean']:8.3f}")

out_csv = Path("demo_out/sweep.csv")
with out_csv.open("w", newline="") as fh:
    csv.writer(fh).writerows(sweep_csv_rows(results))
print("long-form rows written to", out_csv)
