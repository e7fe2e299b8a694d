"""Look inside the saved knowledge: prototypes, distances, normality.

A class survives between sessions only as its Gaussian prototype, so it
pays to inspect what that object actually holds. This walks one class
through fitting, rank reduction on degenerate data, distance queries,
the principal-component normality report, and a save/load round trip.
"""

import numpy as np
from pathlib import Path

from protoreplay import (
    PrototypeStore,
    fit_prototype,
    load_state,
    mahalanobis,
    mahalanobis_many,
    principal_component_report,
    sample_gaussian,
    save_state,
    svd_reduce,
)

rng = np.random.default_rng(0)

# a healthy full-rank class
d = 12
rows = rng.standard_normal((200, d)) * 1.5 + 3.0
proto = fit_prototype(5, rows)
print("label", proto.label, " dim", proto.dim, " reduced:", proto.reduced)
print("mean of stored mean:", round(float(proto.mean.mean()), 3))

# distances: the class center is close, a far point is far
center = mahalanobis(proto.mean, proto)
far = mahalanobis(proto.mean + 10.0, proto)
print(f"mahalanobis at center {center:.3f}, at +10 offset {far:.3f}")

# degenerate class: 200 rows living on a 3-dimensional sheet
thin = rng.standard_normal((200, 3)) @ rng.standard_normal((3, d))
small = svd_reduce(9, thin)
print("thin class reduced:", small.reduced, " rank:", small.rank)

# sampling from the reduced prototype stays on the sheet
batch = sample_gaussian(small, 50, rng)
dev = batch.vectors - small.mean
resid = dev - (dev @ small.basis) @ small.basis.T
print("max off-sheet residual:", float(np.abs(resid).max()))

# batch distances under the reduced prototype
dists = mahalanobis_many(batch.vectors, small)
print(f"synthetic batch distance range: {dists.min():.2f} .. {dists.max():.2f}")

# top principal components with normal Q-Q points
for comp in principal_component_report(rows, 3):
    # a straight Q-Q line has sample quantiles tracking theoretical ones
    slope = np.polyfit(comp.qq[:, 0], comp.qq[:, 1], 1)[0]
    spread = float(np.std(comp.projections))
    print(f"component {comp.component}: spread {spread:.3f}, qq slope {slope:.3f}")

store = PrototypeStore(d)
store.add(proto)
store.add(small)
path = save_state(Path("demo_out/protos.bin"), store)
loaded, head = load_state(path)
print("reloaded labels:", loaded.labels(), " head present:", head is not None)
