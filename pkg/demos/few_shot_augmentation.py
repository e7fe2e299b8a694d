"""Few-shot sessions with and without synthetic augmentation.

Incremental sessions see only 2 real rows per class. Plain training on
those shots overfits the tiny sample; augmentation inflates each class
back to a full pool by sampling around the shots and keeping only draws
within a shrinking Mahalanobis radius of the class.
"""

from pathlib import Path

from protoreplay import (
    BenchSpec,
    DatasetReader,
    SamplerConfig,
    SessionPlan,
    TrainConfig,
    generate,
    run_fscil,
)

# low dimension and tight packing on purpose: with plenty of room the head
# nails every class from 2 shots and there is nothing left to demonstrate
root = Path("demo_out/fewshot_bench")
generate(
    BenchSpec(
        dim=8,
        n_classes=12,
        train_per_class=100,
        test_per_class=50,
        separation=3.0,
        base_classes=8,
        increment_size=2,
        n_increments=2,
        seed=19,
    ),
    root,
)

reader = DatasetReader(root)
plan = SessionPlan.from_manifest(reader.manifest, trial_seeds=(1, 2, 3, 4, 5), shots=2)
sampler = SamplerConfig(replay_per_class=60, candidate_pool=120)
train = TrainConfig(epochs=15, batch_size=64, alpha=4)

plain = run_fscil(reader, plan, sampler, train, augment=False)
boosted = run_fscil(reader, plan, sampler, train, augment=True)

for name, rep in (("plain shots", plain), ("augmented", boosted)):
    agg = rep.aggregate()
    print(
        f"{name:12s}  final G {agg['final_g']['mean']:6.2f}"
        f"  mean IFM {agg['mean_ifm']['mean']:6.3f}"
        f"  SAD {agg['sad']['mean']:6.2f}"
    )
