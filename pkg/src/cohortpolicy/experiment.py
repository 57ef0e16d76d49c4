"""Randomized-experiment data model and treatment-effect estimators.

The dataset is immutable after construction: users are stored sorted by
user_id so every estimate is independent of input row order, and all
estimators are pure functions of the dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Mapping

import numpy as np

from .errors import EstimationError, IntegrityError

if TYPE_CHECKING:  # pragma: no cover
    from .segmentation import Segment

ABSOLUTE = "absolute"
RELATIVE_PERCENT = "relative_percent"
LIFT_UNITS = (ABSOLUTE, RELATIVE_PERCENT)


@dataclass(frozen=True, slots=True)
class MetricEstimate:
    """A lift estimate: mean difference vs control plus its standard error.

    `mean` is in the dataset's declared lift units (absolute metric units
    or relative fraction); no unit conversion ever happens downstream.
    Counts are 0 for estimates loaded from a stored-estimate file.
    """

    mean: float
    std_err: float
    n_treated: int = 0
    n_control: int = 0

    def __post_init__(self):
        if not math.isfinite(self.mean):
            raise ValueError(f"estimate mean must be finite, got {self.mean}")
        if not (math.isfinite(self.std_err) and self.std_err >= 0.0):
            raise ValueError(f"std_err must be finite and >= 0, got {self.std_err}")

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "std_err": self.std_err,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
        }


@dataclass(frozen=True, slots=True)
class UserRecord:
    """One experiment participant: features, assigned arm, observed outcomes."""

    user_id: str
    features: Mapping[str, float]
    arm: str
    outcomes: Mapping[str, float]
    day: int | None = None


@dataclass(eq=False)
class ExperimentDataset:
    """One randomized experiment. Treat as immutable after construction.

    `actions` lists every arm including the control; `control_action` names
    which one is the control. All users must carry the same feature and
    metric keys, with finite values.
    """

    experiment_id: str
    users: tuple[UserRecord, ...]
    actions: tuple[str, ...]
    control_action: str
    metrics: tuple[str, ...]
    features: tuple[str, ...]
    lift_units: str = ABSOLUTE

    def __post_init__(self):
        self.users = tuple(sorted(self.users, key=lambda u: u.user_id))
        self.actions = tuple(self.actions)
        self.metrics = tuple(self.metrics)
        self.features = tuple(self.features)
        if self.control_action not in self.actions:
            raise IntegrityError(
                f"control action {self.control_action!r} not in actions {self.actions}"
            )
        if self.lift_units not in LIFT_UNITS:
            raise ValueError(f"lift_units must be one of {LIFT_UNITS}")
        self._validate_users()

    def _validate_users(self):
        feature_keys = set(self.features)
        metric_keys = set(self.metrics)
        action_set = set(self.actions)
        seen: set[str] = set()
        for user in self.users:
            if user.user_id in seen:
                raise IntegrityError(f"user {user.user_id!r} appears more than once")
            seen.add(user.user_id)
            if user.arm not in action_set:
                raise IntegrityError(
                    f"user {user.user_id!r} assigned to unknown arm {user.arm!r}"
                )
            if set(user.features) != feature_keys:
                raise IntegrityError(
                    f"user {user.user_id!r} features do not match dataset features"
                )
            if set(user.outcomes) != metric_keys:
                raise IntegrityError(
                    f"user {user.user_id!r} outcomes do not match dataset metrics"
                )
            for key, value in user.features.items():
                if not math.isfinite(value):
                    raise IntegrityError(
                        f"user {user.user_id!r} has non-finite feature {key!r}"
                    )
            for key, value in user.outcomes.items():
                if not math.isfinite(value):
                    raise IntegrityError(
                        f"user {user.user_id!r} has non-finite outcome {key!r}"
                    )

    # -- derived views -----------------------------------------------------

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def treatments(self) -> tuple[str, ...]:
        return tuple(a for a in self.actions if a != self.control_action)

    @cached_property
    def user_ids(self) -> tuple[str, ...]:
        return tuple(u.user_id for u in self.users)

    @cached_property
    def _row_of(self) -> dict[str, int]:
        return {uid: i for i, uid in enumerate(self.user_ids)}

    @cached_property
    def _arms(self) -> np.ndarray:
        return np.array([u.arm for u in self.users], dtype=object)

    @cached_property
    def _feature_columns(self) -> dict[str, np.ndarray]:
        cols = {}
        for name in self.features:
            cols[name] = np.array([u.features[name] for u in self.users], dtype=float)
        return cols

    @cached_property
    def _outcome_columns(self) -> dict[str, np.ndarray]:
        cols = {}
        for name in self.metrics:
            cols[name] = np.array([u.outcomes[name] for u in self.users], dtype=float)
        return cols

    def feature_values(self, feature: str) -> np.ndarray:
        if feature not in self._feature_columns:
            raise ValueError(f"unknown feature {feature!r}")
        return self._feature_columns[feature]

    def outcome_values(self, metric: str) -> np.ndarray:
        if metric not in self._outcome_columns:
            raise ValueError(f"unknown metric {metric!r}")
        return self._outcome_columns[metric]

    def arm_mask(self, action: str) -> np.ndarray:
        if action not in self.actions:
            raise ValueError(f"unknown action {action!r}")
        return self._arms == action

    def member_mask(self, user_ids: Iterable[str]) -> np.ndarray:
        mask = np.zeros(self.n_users, dtype=bool)
        rows = self._row_of
        for uid in user_ids:
            row = rows.get(uid)
            if row is not None:
                mask[row] = True
        return mask

    def subset(self, mask: np.ndarray, experiment_id: str | None = None) -> "ExperimentDataset":
        users = tuple(u for u, keep in zip(self.users, mask) if keep)
        return ExperimentDataset(
            experiment_id=experiment_id or self.experiment_id,
            users=users,
            actions=self.actions,
            control_action=self.control_action,
            metrics=self.metrics,
            features=self.features,
            lift_units=self.lift_units,
        )

    def daily_slices(self, n_days: int | None = None) -> list["ExperimentDataset"]:
        """Split into per-day datasets.

        Uses the users' day labels when present; otherwise partitions the
        id-sorted users into `n_days` contiguous chunks (a valid proxy for
        time slices in a randomized experiment, where users are exchangeable).
        """
        labels = [u.day for u in self.users]
        if all(d is not None for d in labels) and self.users:
            days = sorted(set(labels))
            out = []
            for d in days:
                mask = np.array([u.day == d for u in self.users], dtype=bool)
                out.append(self.subset(mask, f"{self.experiment_id}#day{d}"))
            return out
        if n_days is None or n_days < 1:
            raise ValueError("dataset has no day labels; pass n_days >= 1")
        bounds = np.linspace(0, self.n_users, n_days + 1).astype(int)
        out = []
        for d in range(n_days):
            mask = np.zeros(self.n_users, dtype=bool)
            mask[bounds[d]:bounds[d + 1]] = True
            out.append(self.subset(mask, f"{self.experiment_id}#day{d}"))
        return out


# -- estimators --------------------------------------------------------------


def _variance(values: np.ndarray) -> float:
    # Sample variance (n-1 denominator); a single observation contributes 0.
    if values.size < 2:
        return 0.0
    return float(np.var(values, ddof=1))


def _lift(ds: ExperimentDataset, mask: np.ndarray | None, action: str,
          metric: str, where: str) -> MetricEstimate:
    treated = ds.arm_mask(action)
    control = ds.arm_mask(ds.control_action)
    if mask is not None:
        treated = treated & mask
        control = control & mask
    n_t = int(treated.sum())
    n_c = int(control.sum())
    if n_t == 0:
        raise EstimationError(f"no users treated with {action!r} in {where}")
    if n_c == 0:
        raise EstimationError(f"no control users in {where}")
    outcomes = ds.outcome_values(metric)
    t_vals = outcomes[treated]
    c_vals = outcomes[control]
    mean = float(np.mean(t_vals) - np.mean(c_vals))
    std_err = math.sqrt(_variance(t_vals) / n_t + _variance(c_vals) / n_c)
    return MetricEstimate(mean=mean, std_err=std_err, n_treated=n_t, n_control=n_c)


def compute_ate(ds: ExperimentDataset, action: str, metric: str) -> MetricEstimate:
    """Average treatment effect of `action` vs control on `metric`.

    Mean outcome over the treated arm minus mean outcome over the control
    arm; standard error is the two-sample unpooled sqrt(s_t^2/n_t + s_c^2/n_c).
    """
    if action not in ds.actions:
        raise ValueError(f"unknown action {action!r}")
    if action == ds.control_action:
        n_c = int(ds.arm_mask(action).sum())
        return MetricEstimate(mean=0.0, std_err=0.0, n_treated=n_c, n_control=n_c)
    return _lift(ds, None, action, metric, f"experiment {ds.experiment_id!r}")


def segment_hte(ds: ExperimentDataset, segment: "Segment", action: str,
                metric: str) -> MetricEstimate:
    """Segment-level heterogeneous treatment effect of `action` on `metric`.

    Restricted to the segment's members: mean outcome of treated members
    minus mean outcome of control members. Over the full population this
    equals compute_ate exactly.
    """
    if action not in ds.actions:
        raise ValueError(f"unknown action {action!r}")
    mask = ds.member_mask(segment.members)
    if action == ds.control_action:
        n_c = int((mask & ds.arm_mask(action)).sum())
        return MetricEstimate(mean=0.0, std_err=0.0, n_treated=n_c, n_control=n_c)
    return _lift(ds, mask, action, metric, f"segment {segment.describe()}")
