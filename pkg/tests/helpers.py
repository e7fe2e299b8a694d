import numpy as np

from protoreplay import BenchSpec, SamplerConfig, TrainConfig

# verdict lines collected by the acceptance tests, printed by the
# conftest terminal-summary hook after capture is torn down
CRITERION_LINES: list[str] = []

# small but well-separated benchmark shared by protocol and CLI tests
TINY_SPEC = BenchSpec(
    dim=8,
    n_classes=6,
    train_per_class=40,
    test_per_class=25,
    separation=6.0,
    base_classes=4,
    increment_size=1,
    n_increments=2,
    seed=11,
)

# fast settings for unit-level protocol runs
FAST_TRAIN = TrainConfig(epochs=6, batch_size=32, alpha=2, seed=0)
FAST_SAMPLER = SamplerConfig(replay_per_class=30, candidate_pool=60, max_filter_rounds=5)


def random_spd(rng: np.random.Generator, d: int, cond: float = 50.0) -> np.ndarray:
    """Random symmetric positive definite matrix with bounded conditioning."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eigs = rng.uniform(1.0, cond, size=d)
    return (q * eigs) @ q.T
