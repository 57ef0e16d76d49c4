"""Quantile-based cohort segmentation.

Cut families over a single feature: N-bin individual splits and two-sided
binary splits at a threshold index. Quantiles are nearest-rank (no
interpolation) so cohort assignment is bit-identical across platforms, and
segment intervals are half-open (lower, upper].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .experiment import ExperimentDataset

INDIVIDUAL = "individual"
BINARY = "binary"

NEG_INF = float("-inf")
POS_INF = float("inf")


@dataclass(frozen=True, slots=True)
class CutSpec:
    """One segmentation family: `individual` (N bins) or `binary` (at index i0)."""

    feature: str
    kind: str
    n_bins: int
    threshold_index: int | None = None

    def __post_init__(self):
        if self.kind not in (INDIVIDUAL, BINARY):
            raise ValueError(f"unknown cut kind {self.kind!r}")
        if self.n_bins < 1:
            raise ValueError(f"n_bins must be >= 1, got {self.n_bins}")
        if self.kind == BINARY:
            i0 = self.threshold_index
            if i0 is None or not (1 <= i0 <= self.n_bins - 1):
                raise ValueError(
                    f"binary threshold index must be in [1, {self.n_bins - 1}], got {i0}"
                )
        elif self.threshold_index is not None:
            raise ValueError("individual cuts take no threshold index")

    @property
    def slot_count(self) -> int:
        return self.n_bins if self.kind == INDIVIDUAL else 2

    @property
    def short_descriptor(self) -> str:
        if self.kind == INDIVIDUAL:
            return f"ind{self.n_bins}"
        return f"bin{self.threshold_index}of{self.n_bins}"

    def describe(self) -> str:
        return f"{self.feature}.{self.short_descriptor}"


@dataclass(frozen=True, slots=True)
class Segment:
    """A cohort: users whose feature value lies in (lower, upper]."""

    feature: str
    lower: float
    upper: float
    members: frozenset[str]

    @property
    def is_empty(self) -> bool:
        return not self.members

    def contains(self, value: float) -> bool:
        return self.lower < value <= self.upper

    def describe(self) -> str:
        return f"{self.feature} in ({_bound_str(self.lower)}, {_bound_str(self.upper)}]"

    def to_json(self) -> dict:
        return {
            "feature": self.feature,
            "lower": _bound_str(self.lower),
            "upper": _bound_str(self.upper),
        }


def _bound_str(value: float) -> str | float:
    if value == NEG_INF:
        return "-inf"
    if value == POS_INF:
        return "+inf"
    return value


def bound_from_json(value) -> float:
    if value == "-inf":
        return NEG_INF
    if value == "+inf":
        return POS_INF
    return float(value)


def quantile(values: Sequence[float] | np.ndarray, p: float) -> float:
    """Nearest-rank quantile: the sorted value at 1-based index ceil(p*n).

    p=0 returns -inf (the open lower sentinel); p=1 returns the maximum.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("quantile of empty values is undefined")
    if not np.isfinite(arr).all():
        raise ValueError("quantile requires finite values")
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must be in [0, 1], got {p}")
    if p == 0.0:
        return NEG_INF
    idx = min(math.ceil(p * arr.size), arr.size)
    return float(np.sort(arr, kind="stable")[idx - 1])


def _boundary_values(sorted_values: np.ndarray, n_bins: int) -> list[float]:
    # Boundary i is the nearest-rank i/N quantile, via exact integer ceil.
    n = sorted_values.size
    bounds = []
    for i in range(1, n_bins + 1):
        idx = -((-i * n) // n_bins)  # ceil(i*n/N) without float error
        bounds.append(float(sorted_values[idx - 1]))
    return bounds


def individual_split(ds: ExperimentDataset, feature: str, n_bins: int) -> list[Segment]:
    """Split users into N quantile bins of `feature`.

    Segment i covers (Q((i-1)/N), Q(i/N)]. Bins emptied by ties are retained
    (flagged via `is_empty`) so slot indices stay positionally stable.
    """
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    values = ds.feature_values(feature)
    order = np.sort(values, kind="stable")
    bounds = _boundary_values(order, n_bins)
    segments = []
    lower = NEG_INF
    for i in range(n_bins):
        upper = bounds[i]
        mask = (values > lower) & (values <= upper)
        members = frozenset(uid for uid, hit in zip(ds.user_ids, mask) if hit)
        segments.append(Segment(feature=feature, lower=lower, upper=upper, members=members))
        lower = upper
    return segments


def binary_split(ds: ExperimentDataset, feature: str, threshold_index: int,
                 n_bins: int) -> tuple[Segment, Segment]:
    """Two-way split at the i0/N quantile: (-inf, Q(i0/N)] vs (Q(i0/N), max]."""
    if not (1 <= threshold_index <= n_bins - 1):
        raise ValueError(
            f"threshold index must be in [1, {n_bins - 1}], got {threshold_index}"
        )
    values = ds.feature_values(feature)
    order = np.sort(values, kind="stable")
    cut = _boundary_values(order, n_bins)[threshold_index - 1]
    top = float(order[-1])
    low_mask = values <= cut
    ids = ds.user_ids
    low = frozenset(uid for uid, hit in zip(ids, low_mask) if hit)
    high = frozenset(uid for uid, hit in zip(ids, low_mask) if not hit)
    return (
        Segment(feature=feature, lower=NEG_INF, upper=cut, members=low),
        Segment(feature=feature, lower=cut, upper=top, members=high),
    )


def full_population_segment(ds: ExperimentDataset) -> Segment:
    """The degenerate single-slot partition: every user, unbounded interval."""
    return Segment(feature="", lower=NEG_INF, upper=POS_INF,
                   members=frozenset(ds.user_ids))


def materialize(ds: ExperimentDataset, cut: CutSpec | None) -> list[Segment]:
    """Segments of `cut` against `ds`; None means the whole population."""
    if cut is None:
        return [full_population_segment(ds)]
    if cut.kind == INDIVIDUAL:
        return individual_split(ds, cut.feature, cut.n_bins)
    return list(binary_split(ds, cut.feature, cut.threshold_index, cut.n_bins))


def interior_cutpoints(values: Sequence[float] | np.ndarray, n_bins: int) -> list[float]:
    """The N-1 interior quantile boundaries Q(i/N), i = 1..N-1."""
    arr = np.sort(np.asarray(values, dtype=float), kind="stable")
    if arr.size == 0:
        raise ValueError("cutpoints of empty values are undefined")
    return _boundary_values(arr, n_bins)[:-1]


def bucket_index(value: float, cutpoints: Sequence[float]) -> int:
    """Bucket of `value` against fixed interior cutpoints.

    Buckets are (-inf, c1], (c1, c2], ..., (c_{B-1}, +inf): the index equals
    the number of cutpoints strictly below the value, so out-of-range values
    fall into the end buckets.
    """
    return int(np.searchsorted(np.asarray(cutpoints, dtype=float), value, side="left"))


@dataclass(frozen=True)
class CutEnumerationConfig:
    """Which cut families to enumerate: features, bin count, kinds."""

    features: tuple[str, ...]
    n_bins: int = 4
    kinds: tuple[str, ...] = (INDIVIDUAL, BINARY)

    def __post_init__(self):
        if self.n_bins < 1:
            raise ConfigError(f"n_bins must be >= 1, got {self.n_bins}")
        for kind in self.kinds:
            if kind not in (INDIVIDUAL, BINARY):
                raise ConfigError(f"unknown cut kind {kind!r}")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "CutEnumerationConfig":
        return cls(
            features=tuple(data["features"]),
            n_bins=int(data.get("N", data.get("n_bins", 4))),
            kinds=tuple(data.get("kinds", (INDIVIDUAL, BINARY))),
        )


def enumerate_cuts(ds: ExperimentDataset, config: CutEnumerationConfig | Mapping) -> list[CutSpec]:
    """All CutSpecs for the config, in deterministic order.

    Features in declared order, individual before binary, threshold index
    ascending.
    """
    if not isinstance(config, CutEnumerationConfig):
        config = CutEnumerationConfig.from_mapping(config)
    for feature in config.features:
        if feature not in ds.features:
            raise ValueError(f"unknown feature {feature!r}")
    cuts: list[CutSpec] = []
    for feature in config.features:
        if INDIVIDUAL in config.kinds:
            cuts.append(CutSpec(feature=feature, kind=INDIVIDUAL, n_bins=config.n_bins))
        if BINARY in config.kinds:
            for i0 in range(1, config.n_bins):
                cuts.append(CutSpec(feature=feature, kind=BINARY,
                                    n_bins=config.n_bins, threshold_index=i0))
    return cuts
