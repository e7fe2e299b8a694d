"""Deterministic derivation of random streams from one master seed.

Every random draw in this package flows from a single integer seed.
Independent components (trials, sessions, classes, roles) get their own
generator derived through :class:`numpy.random.SeedSequence`, which hashes
the integer path ``(seed, role, index, ...)`` into a well-separated stream.
Changing any element of the path changes the stream; keeping the path fixed
reproduces it bit for bit.

Role constants are part of the on-disk reproducibility story: reports
produced with a given seed stay reproducible as long as these values and
the derivation paths printed below do not change.
"""

from __future__ import annotations

import numpy as np

# Stream roles. Fixed values; appending new roles is fine, renumbering is not.
ORDER = 0    # class-order permutation for a trial
TRAIN = 1    # mini-batch shuffling inside classifier training
REPLAY = 2   # synthetic replay sampling, per class
SHOTS = 3    # few-shot subset selection, per class
AUGMENT = 4  # few-shot augmentation sampling, per class
DATA = 5     # synthetic benchmark generation
TRIAL = 6    # per-trial master seeds derived from a run seed


def stream(*path: int) -> np.random.Generator:
    """Return the generator at an integer derivation path.

    Parameters
    ----------
    *path : int
        Non-empty sequence, conventionally ``(seed, role, index, ...)``.
    """
    if not path:
        raise ValueError("seed path must be non-empty")
    return np.random.default_rng(np.random.SeedSequence([int(p) for p in path]))


def subseed(*path: int) -> int:
    """Collapse a derivation path into one reproducible 63-bit integer seed.

    Used where a plain integer must be stored or passed on (per-trial seeds
    in reports, worker processes). ``stream(subseed(p), ...)`` derivations
    stay deterministic because subseed itself is.
    """
    if not path:
        raise ValueError("seed path must be non-empty")
    state = np.random.SeedSequence([int(p) for p in path]).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) | (int(state[1]) >> 1)
