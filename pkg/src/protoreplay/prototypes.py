"""Per-class Gaussian prototypes in embedding space.

A prototype compresses one class into a mean vector and a covariance
matrix. Rank-deficient or otherwise non-positive-semidefinite covariances
are stored in a reduced form: an orthonormal basis of the directions the
data actually spans, plus the mean and covariance of the coordinates in
that basis. Sampling and distance computations then work in the reduced
coordinates and map back.

Fitting uses the plain two-pass estimator with sequential accumulation
over rows, so the result matches a straightforward reference
implementation bit for bit. A small ridge ``eps * I`` with
``eps = 1e-6 * trace(cov) / d`` (or ``1e-6`` when the trace is zero) is
always added to keep downstream solves well-posed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import (
    DimensionMismatch,
    DuplicateLabel,
    EmptyInput,
    SingularCovariance,
    UnknownLabel,
    ValidationError,
)
from .store import _as_feature_matrix

SYMMETRY_RTOL = 1e-6       # allowed relative asymmetry of a covariance
ORTHONORMAL_ATOL = 1e-6    # allowed deviation of basis.T @ basis from I
PSD_TRACE_RTOL = 1e-8      # eigenvalues below -rtol * trace fail the PSD check
SHRINKAGE_SCALE = 1e-6     # ridge strength relative to the mean diagonal
RANK_RTOL = 1e-7           # singular values below rtol * s_max do not count


def _seq_mean(x: np.ndarray) -> np.ndarray:
    # sequential accumulation; numpy's pairwise summation would differ from
    # a reference loop in the last ulp
    total = np.zeros(x.shape[1])
    for row in x:
        total += row
    return total / x.shape[0]


def _seq_cov(x: np.ndarray, mean: np.ndarray) -> np.ndarray:
    n, d = x.shape
    if n < 2:
        return np.zeros((d, d))
    acc = np.zeros((d, d))
    for row in x:
        dev = row - mean
        acc += np.outer(dev, dev)
    return acc / (n - 1)


def shrinkage_eps(cov: np.ndarray) -> float:
    """Ridge strength for a covariance: 1e-6 of the mean diagonal, 1e-6 floor."""
    trace = float(np.trace(cov))
    scale = trace / cov.shape[0] if trace > 0.0 else 1.0
    return SHRINKAGE_SCALE * scale


@dataclass(frozen=True)
class ClassPrototype:
    """Gaussian summary of one class.

    Attributes
    ----------
    label : int
    mean : (d,) float64
    cov : (d, d) float64
        For reduced prototypes this is the full-space reconstruction
        ``basis @ reduced_cov @ basis.T``.
    sample_count : int
        Rows the prototype was fitted from.
    basis : (d, r) float64 or None
        Orthonormal columns spanning the data directions; present only for
        reduced prototypes. ``r`` may be 0 when all rows were identical.
    reduced_mean : (r,) float64 or None
    reduced_cov : (r, r) float64 or None
    """

    label: int
    mean: np.ndarray
    cov: np.ndarray
    sample_count: int
    basis: np.ndarray | None = None
    reduced_mean: np.ndarray | None = None
    reduced_cov: np.ndarray | None = None

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1:
            raise DimensionMismatch("mean must be a vector")
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise DimensionMismatch(f"cov shape {cov.shape} does not match dim {d}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValidationError("prototype moments must be finite")
        scale = max(float(np.abs(cov).max()), np.finfo(np.float64).tiny)
        if float(np.abs(cov - cov.T).max()) > SYMMETRY_RTOL * scale:
            raise ValidationError("covariance is not symmetric within tolerance")
        if self.sample_count < 1:
            raise ValidationError("sample_count must be >= 1")

        reduced_fields = (self.basis, self.reduced_mean, self.reduced_cov)
        if any(f is not None for f in reduced_fields):
            if any(f is None for f in reduced_fields):
                raise ValidationError(
                    "basis, reduced_mean and reduced_cov must be given together"
                )
            basis = np.asarray(self.basis, dtype=np.float64)
            rmean = np.asarray(self.reduced_mean, dtype=np.float64)
            rcov = np.asarray(self.reduced_cov, dtype=np.float64)
            if basis.ndim != 2 or basis.shape[0] != d:
                raise DimensionMismatch("basis must be (d, r)")
            r = basis.shape[1]
            if rmean.shape != (r,) or rcov.shape != (r, r):
                raise DimensionMismatch("reduced moments must be (r,) and (r, r)")
            if r > min(self.sample_count - 1, d):
                raise ValidationError(
                    f"rank {r} exceeds min(sample_count - 1, dim) = "
                    f"{min(self.sample_count - 1, d)}"
                )
            if r:
                gram = basis.T @ basis
                if float(np.abs(gram - np.eye(r)).max()) > ORTHONORMAL_ATOL:
                    raise ValidationError("basis columns are not orthonormal")
                trace_r = float(np.trace(rcov))
                if float(np.linalg.eigvalsh((rcov + rcov.T) / 2.0).min()) < (
                    -PSD_TRACE_RTOL * max(trace_r, 0.0)
                ):
                    raise ValidationError("reduced covariance fails the PSD check")
            for name, arr in (("basis", basis), ("reduced_mean", rmean), ("reduced_cov", rcov)):
                if not np.all(np.isfinite(arr)):
                    raise ValidationError(f"{name} must be finite")
                arr = arr.copy()
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

        mean = mean.copy()
        cov = cov.copy()
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "sample_count", int(self.sample_count))

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def reduced(self) -> bool:
        return self.basis is not None

    @property
    def rank(self) -> int:
        """Rank of the stored covariance model (d when not reduced)."""
        return int(self.basis.shape[1]) if self.reduced else self.dim


def fit_prototype(
    label: int,
    vectors,
    *,
    mode: str = "auto",
    shrinkage: bool = True,
) -> ClassPrototype:
    """Fit a Gaussian prototype from the rows of one class.

    Mean and covariance are the exact two-pass estimates (unbiased
    covariance, n - 1 denominator; a single row gives a zero covariance).
    The shrinkage ridge is added unless disabled.

    ``mode`` selects the storage path:

    - ``"auto"``: full form, falling back to the reduced form only when the
      shrunk covariance has an eigenvalue below ``-1e-8 * trace``;
    - ``"reduce"``: always store reduced (needs at least 2 rows);
    - ``"full"``: never reduce.
    """
    if mode not in ("auto", "reduce", "full"):
        raise ValidationError(f"unknown prototype mode '{mode}'")
    x = _as_feature_matrix(vectors)
    n, d = x.shape
    if n < 1:
        raise EmptyInput("cannot fit a prototype from zero rows")

    if mode == "reduce" and n >= 2:
        return svd_reduce(label, x, shrinkage=shrinkage)

    mean = _seq_mean(x)
    cov = _seq_cov(x, mean)
    if shrinkage:
        cov = cov + shrinkage_eps(cov) * np.eye(d)

    if mode == "auto" and n >= 2:
        trace = float(np.trace(cov))
        lo = float(np.linalg.eigvalsh((cov + cov.T) / 2.0).min())
        if lo < -PSD_TRACE_RTOL * max(trace, 0.0):
            return svd_reduce(label, x, shrinkage=shrinkage)

    return ClassPrototype(label=label, mean=mean, cov=cov, sample_count=n)


def svd_reduce(label: int, vectors, *, shrinkage: bool = True) -> ClassPrototype:
    """Fit a prototype in the reduced coordinates of the data's own span.

    The basis is the leading right-singular vectors of the centered rows;
    singular values below ``1e-7 * s_max`` do not count toward the rank,
    which is additionally capped at ``n - 1``. The reduced mean and
    covariance are refitted in the projected coordinates. When every row is
    identical the rank is 0 and sampling from the prototype returns copies
    of the mean.
    """
    x = _as_feature_matrix(vectors)
    n, d = x.shape
    if n < 2:
        raise EmptyInput("reduced fit needs at least 2 rows")
    mean = _seq_mean(x)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    smax = float(s[0]) if s.size else 0.0
    rank = int(np.count_nonzero(s > RANK_RTOL * smax)) if smax > 0.0 else 0
    rank = min(rank, n - 1)
    if rank == 0:
        warnings.warn(
            f"class {label}: all {n} rows identical; storing a rank-0 prototype",
            stacklevel=2,
        )
    basis = vt[:rank].T.copy()
    coords = centered @ basis
    rmean = _seq_mean(coords) if rank else np.zeros(0)
    rcov = _seq_cov(coords, rmean) if rank else np.zeros((0, 0))
    if shrinkage and rank:
        rcov = rcov + shrinkage_eps(rcov) * np.eye(rank)
    cov = basis @ rcov @ basis.T
    cov = (cov + cov.T) / 2.0
    return ClassPrototype(
        label=label,
        mean=mean,
        cov=cov,
        sample_count=n,
        basis=basis,
        reduced_mean=rmean,
        reduced_cov=rcov,
    )


def _solve_quadratic(c: np.ndarray, devs: np.ndarray, diagonal_only: bool) -> np.ndarray:
    """Squared Mahalanobis distances of deviation rows under covariance c."""
    if diagonal_only:
        diag = np.diag(c).copy()
        if np.any(diag <= 0.0):
            raise SingularCovariance("covariance diagonal has non-positive entries")
        return np.einsum("ij,ij->i", devs, devs / diag)
    try:
        sol = np.linalg.solve(c, devs.T)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"covariance is singular: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise SingularCovariance("covariance solve produced non-finite values")
    return np.einsum("ij,ji->i", devs, sol)


def mahalanobis_many(
    z, prototype: ClassPrototype, *, diagonal_only: bool = False
) -> np.ndarray:
    """Mahalanobis distance of each row of ``z`` to a prototype.

    Uses the full covariance through a linear solve (no explicit inverse).
    For reduced prototypes the distance is computed in the reduced
    coordinates; a rank-0 prototype yields distance 0 by convention.
    ``diagonal_only`` keeps only the covariance diagonal, as a cheap
    screening variant.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.ndim != 2 or z.shape[1] != prototype.dim:
        raise DimensionMismatch(
            f"rows have dim {z.shape[-1]}, prototype has dim {prototype.dim}"
        )
    if prototype.reduced:
        if prototype.rank == 0:
            return np.zeros(z.shape[0])
        devs = (z - prototype.mean) @ prototype.basis - prototype.reduced_mean
        c = prototype.reduced_cov
    else:
        devs = z - prototype.mean
        c = prototype.cov
    sq = _solve_quadratic(c, devs, diagonal_only)
    return np.sqrt(np.clip(sq, 0.0, None))


def mahalanobis(z, prototype: ClassPrototype, *, diagonal_only: bool = False) -> float:
    """Mahalanobis distance of a single vector to a prototype."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise DimensionMismatch("expected a single vector; use mahalanobis_many for batches")
    return float(mahalanobis_many(z[None, :], prototype, diagonal_only=diagonal_only)[0])


@dataclass(frozen=True)
class ComponentReport:
    """Diagnostics for one principal direction of a class.

    ``projections`` are the centered data projected on the component, in
    data order. ``qq`` pairs theoretical normal quantiles with the sorted
    standardized projections, one row per sample.
    """

    component: int
    projections: np.ndarray
    qq: np.ndarray  # (n, 2): theoretical, sample


def principal_component_report(vectors, k: int) -> list[ComponentReport]:
    """Project a class onto its top-k principal directions for normality checks.

    Components are ordered by decreasing variance. Each report carries the
    raw projections (histogram material) and normal Q-Q pairs computed at
    the points ``(i - 0.5) / n``. ``k`` is clamped to the data rank with a
    warning. Needs at least 3 rows.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    x = _as_feature_matrix(vectors)
    n = x.shape[0]
    if n < 3:
        raise EmptyInput(f"normality diagnostics need at least 3 rows, got {n}")
    mean = _seq_mean(x)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    smax = float(s[0]) if s.size else 0.0
    rank = int(np.count_nonzero(s > RANK_RTOL * smax)) if smax > 0.0 else 0
    rank = min(rank, n - 1)
    if rank == 0:
        warnings.warn("all rows identical; no components to report", stacklevel=2)
        return []
    if k > rank:
        warnings.warn(f"k={k} exceeds data rank {rank}; clamping", stacklevel=2)
        k = rank
    theoretical = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    out = []
    for i in range(k):
        proj = centered @ vt[i]
        std = float(proj.std(ddof=1))
        standardized = proj / std if std > 0.0 else np.zeros_like(proj)
        qq = np.column_stack([theoretical, np.sort(standardized)])
        out.append(ComponentReport(component=i, projections=proj, qq=qq))
    return out


class PrototypeStore:
    """All saved class prototypes of one run, keyed by label.

    Prototypes are immutable; the store only grows. Iteration order is
    always ascending by label, independent of insertion order.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValidationError("dim must be >= 1")
        self.dim = int(dim)
        self._entries: dict[int, ClassPrototype] = {}

    def add(self, prototype: ClassPrototype) -> None:
        if prototype.dim != self.dim:
            raise DimensionMismatch(
                f"prototype dim {prototype.dim} does not match store dim {self.dim}"
            )
        if prototype.label in self._entries:
            raise DuplicateLabel(f"label {prototype.label} already stored")
        self._entries[prototype.label] = prototype

    def get(self, label: int) -> ClassPrototype:
        try:
            return self._entries[int(label)]
        except KeyError:
            raise UnknownLabel(f"no prototype for label {label}") from None

    def __contains__(self, label: int) -> bool:
        return int(label) in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def labels(self) -> list[int]:
        return sorted(self._entries)

    def prototypes(self) -> list[ClassPrototype]:
        return [self._entries[l] for l in self.labels()]

    def excluding(self, label: int) -> "PrototypeStore":
        """A view-like copy without one label (for leave-own-class-out filters)."""
        out = PrototypeStore(self.dim)
        for l, p in self._entries.items():
            if l != int(label):
                out._entries[l] = p
        return out
