"""Deterministic lifecycle governance hooks.

Validation checks around the search stages: pre-search feature-stability
filtering on user-cohort shift ratios, post-search statistical robustness
over temporal slices, and a backtest that replays a policy's lift over
daily slices. Hooks only emit verdicts; they never mutate estimates.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import EstimationError, InsufficientDataError
from .experiment import ExperimentDataset, MetricEstimate
from .search import FORMAT_VERSION, PolicyCandidate, evaluate_policy_pinned
from .segmentation import bucket_index, interior_cutpoints, materialize, quantile

STAGE_PRE_SEARCH = "pre_search"
STAGE_POST_SEARCH = "post_search"
STAGE_PRE_RECOMMENDATION = "pre_recommendation"

PASS = "pass"
REJECT = "reject"

CODE_FEATURE_UNSTABLE = "FEATURE_UNSTABLE"
CODE_SIGN_FLIP = "SIGN_FLIP"
CODE_NOT_SIGNIFICANT = "NOT_SIGNIFICANT"
CODE_BACKTEST_DIVERGED = "BACKTEST_DIVERGED"
CODE_EMPTY_SLICE = "EMPTY_SLICE_SKIPPED"
CODE_NO_QUALIFYING_POLICY = "NO_QUALIFYING_POLICY"

STATUS_BENCHMARK = "benchmark"
STATUS_STABLE = "stable"
STATUS_UNSTABLE = "unstable"

QUANTILE_CUT = "quantile"
BINARY_CUT = "binary"

# Admission thresholds for the pre-search filter: a feature enters the
# search space if its binary-cut shift is <= 15% or its quantile-cut shift
# is <= 45%.
DEFAULT_THRESHOLDS: Mapping[str, float] = {"binary": 0.15, "quantile": 0.45}

SIGNIFICANCE_Z = 1.96
SIGN_CONSISTENCY_SHARE = 2.0 / 3.0
BACKTEST_ENVELOPE_Z = 2.0
BACKTEST_BURN_IN_DAYS = 7


@dataclass
class FeatureSnapshotPair:
    """Per-user values of one feature at two snapshot times."""

    feature: str
    t0_values: dict[str, float]
    t1_values: dict[str, float]
    window_days: int = 180


@dataclass
class StabilityVerdict:
    """Shift measurements for one feature plus the resulting status."""

    feature: str
    shift_quantile: float | None
    shift_binary: float | None
    status: str
    threshold_basis: dict[str, float]

    def to_json(self) -> dict:
        return {
            "feature": self.feature,
            "shift_quantile": self.shift_quantile,
            "shift_binary": self.shift_binary,
            "status": self.status,
            "threshold_basis": dict(sorted(self.threshold_basis.items())),
        }


@dataclass
class HookReport:
    """Outcome of one governance hook: stage, verdict, machine-readable
    reason codes, and the offending entity ids."""

    stage: str
    verdict: str
    reason_codes: list[str] = field(default_factory=list)
    entities: list[str] = field(default_factory=list)
    narrative: str = ""

    def __post_init__(self):
        if self.verdict == REJECT and (not self.reason_codes or not self.entities):
            raise ValueError("a rejection needs at least one reason code and entity")

    @property
    def rejected(self) -> bool:
        return self.verdict == REJECT

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "stage": self.stage,
            "verdict": self.verdict,
            "reason_codes": list(self.reason_codes),
            "entities": list(self.entities),
            "narrative": self.narrative,
        }


# -- feature stability ---------------------------------------------------------


def shift_ratio(pair: FeatureSnapshotPair, cut: str = QUANTILE_CUT,
                n_bins: int = 4) -> float:
    """Fraction of users whose cohort bucket changed between snapshots.

    Buckets come from the t0 distribution (quantile cuts: `n_bins` equal
    buckets; binary cuts: p25/p75 thresholds, i.e. three buckets) and t1
    values are re-bucketed against those fixed t0 cutpoints, so the ratio
    measures user migration rather than distribution reshaping.
    """
    common = sorted(set(pair.t0_values) & set(pair.t1_values))
    if len(common) < 2:
        raise InsufficientDataError(
            f"feature {pair.feature!r}: need >= 2 users present in both "
            f"snapshots, got {len(common)}")
    t0 = np.array([pair.t0_values[u] for u in common], dtype=float)
    t1 = np.array([pair.t1_values[u] for u in common], dtype=float)
    if cut == QUANTILE_CUT:
        cuts = interior_cutpoints(t0, n_bins)
    elif cut == BINARY_CUT:
        cuts = [quantile(t0, 0.25), quantile(t0, 0.75)]
    else:
        raise ValueError(f"unknown cut basis {cut!r}")
    moved = sum(1 for v0, v1 in zip(t0, t1)
                if bucket_index(v0, cuts) != bucket_index(v1, cuts))
    return moved / len(common)


def classify_stability(feature: str, shift_quantile: float | None = None,
                       shift_binary: float | None = None,
                       thresholds: Mapping[str, float] | None = None,
                       benchmark: bool = False) -> StabilityVerdict:
    """Status from the available shift measures.

    Unstable iff every available measure exceeds its threshold; passing on
    either cut basis suffices for stability. `benchmark` marks the baseline
    feature set used to anchor natural drift.
    """
    thresholds = dict(thresholds or DEFAULT_THRESHOLDS)
    if shift_quantile is None and shift_binary is None:
        raise ValueError(f"feature {feature!r} has no shift measure")
    passes = []
    if shift_quantile is not None:
        passes.append(shift_quantile <= thresholds["quantile"])
    if shift_binary is not None:
        passes.append(shift_binary <= thresholds["binary"])
    if not any(passes):
        status = STATUS_UNSTABLE
    elif benchmark:
        status = STATUS_BENCHMARK
    else:
        status = STATUS_STABLE
    return StabilityVerdict(feature=feature, shift_quantile=shift_quantile,
                            shift_binary=shift_binary, status=status,
                            threshold_basis=thresholds)


def pre_search_filter(verdicts: Sequence[StabilityVerdict],
                      thresholds: Mapping[str, float] | None = None
                      ) -> tuple[HookReport, list[str]]:
    """Admit features whose binary shift is within the binary threshold or
    whose quantile shift is within the quantile threshold.

    The hook rejects only when a non-empty verdict list admits nothing;
    pruning with survivors is a pass and the pipeline proceeds on the
    admitted subset.
    """
    thresholds = dict(thresholds or DEFAULT_THRESHOLDS)
    admitted: list[str] = []
    rejected: list[str] = []
    for verdict in verdicts:
        ok = ((verdict.shift_binary is not None
               and verdict.shift_binary <= thresholds["binary"])
              or (verdict.shift_quantile is not None
                  and verdict.shift_quantile <= thresholds["quantile"]))
        (admitted if ok else rejected).append(verdict.feature)
    if verdicts and not admitted:
        report = HookReport(
            stage=STAGE_PRE_SEARCH, verdict=REJECT,
            reason_codes=[CODE_FEATURE_UNSTABLE],
            entities=rejected,
            narrative=f"all {len(rejected)} features exceed both shift thresholds")
    else:
        report = HookReport(
            stage=STAGE_PRE_SEARCH, verdict=PASS,
            reason_codes=[CODE_FEATURE_UNSTABLE] if rejected else [],
            entities=rejected,
            narrative=(f"{len(admitted)} features admitted, "
                       f"{len(rejected)} filtered out"))
    return report, admitted


# -- policy robustness -----------------------------------------------------------


def _pooled(series: Sequence[MetricEstimate]) -> MetricEstimate:
    # Size-weighted stratified combination of slice estimates.
    weights = np.array([max(e.n_treated + e.n_control, 1) for e in series], dtype=float)
    weights = weights / weights.sum()
    mean = float(sum(w * e.mean for w, e in zip(weights, series)))
    var = float(sum((w * e.std_err) ** 2 for w, e in zip(weights, series)))
    return MetricEstimate(mean=mean, std_err=math.sqrt(var),
                          n_treated=sum(e.n_treated for e in series),
                          n_control=sum(e.n_control for e in series))


def robustness_check(policy: PolicyCandidate,
                     slices: Sequence[Mapping[str, MetricEstimate]],
                     target_metrics: Sequence[str],
                     min_slices: int = 3) -> HookReport:
    """Temporal-slice robustness for the metrics the policy is meant to move.

    Pass iff, per target metric, the slice-level lift keeps the pooled sign
    in at least 2/3 of slices and the pooled lift clears 1.96 standard
    errors. Rejections carry SIGN_FLIP / NOT_SIGNIFICANT codes.
    """
    if len(slices) < min_slices:
        raise InsufficientDataError(
            f"robustness check needs >= {min_slices} temporal slices, "
            f"got {len(slices)}")
    codes: list[str] = []
    notes: list[str] = []
    for metric in target_metrics:
        series = [s[metric] for s in slices]
        pooled = _pooled(series)
        ref = math.copysign(1.0, pooled.mean) if pooled.mean != 0 else 0.0
        consistent = sum(1 for e in series
                         if e.mean == 0.0 or math.copysign(1.0, e.mean) == ref)
        if consistent / len(series) < SIGN_CONSISTENCY_SHARE:
            codes.append(CODE_SIGN_FLIP)
            notes.append(f"{metric}: lift sign holds in only "
                         f"{consistent}/{len(series)} slices")
        if abs(pooled.mean) < SIGNIFICANCE_Z * pooled.std_err:
            codes.append(CODE_NOT_SIGNIFICANT)
            notes.append(f"{metric}: pooled lift {pooled.mean:.4g} within "
                         f"{SIGNIFICANCE_Z} x {pooled.std_err:.4g}")
    if codes:
        return HookReport(stage=STAGE_POST_SEARCH, verdict=REJECT,
                          reason_codes=sorted(set(codes)),
                          entities=[policy.policy_id],
                          narrative="; ".join(notes))
    return HookReport(stage=STAGE_POST_SEARCH, verdict=PASS,
                      entities=[policy.policy_id],
                      narrative=f"lift stable across {len(slices)} slices")


# -- backtest --------------------------------------------------------------------


@dataclass
class BacktestSeries:
    """Per-day and cumulative lift series for one policy."""

    days: list[str]
    daily: list[dict[str, MetricEstimate]]
    cumulative: list[dict[str, MetricEstimate]]

    def save_csv(self, path: str | Path, metrics: Sequence[str]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# format_version: {FORMAT_VERSION}\n")
            writer = csv.writer(fh, lineterminator="\n")
            header = ["day"]
            for metric in metrics:
                header += [f"{metric}_daily_mean", f"{metric}_daily_std_err",
                           f"{metric}_cum_mean", f"{metric}_cum_std_err"]
            writer.writerow(header)
            for day, d_est, c_est in zip(self.days, self.daily, self.cumulative):
                row = [day]
                for metric in metrics:
                    row += [repr(d_est[metric].mean), repr(d_est[metric].std_err),
                            repr(c_est[metric].mean), repr(c_est[metric].std_err)]
                writer.writerow(row)


def run_backtest(policy: PolicyCandidate, daily: Sequence[ExperimentDataset],
                 target_metrics: Sequence[str],
                 min_days: int = BACKTEST_BURN_IN_DAYS
                 ) -> tuple[BacktestSeries, HookReport]:
    """Replay the policy's lift day by day and check temporal persistence.

    The reference is the policy's own (search-time) full-window estimate.
    Pass iff, from day `min_days` on, each cumulative estimate stays within
    2 standard errors of the reference (SE of the difference) and its sign
    never flips against the reference. Empty daily slices are skipped with
    a warning code.
    """
    if len(daily) < min_days:
        raise InsufficientDataError(
            f"backtest needs >= {min_days} daily slices, got {len(daily)}")
    for metric in target_metrics:
        if metric not in policy.estimates:
            raise ValueError(
                f"policy {policy.policy_id!r} has no estimate for {metric!r}")

    days: list[str] = []
    daily_series: list[dict[str, MetricEstimate]] = []
    cumulative_series: list[dict[str, MetricEstimate]] = []
    codes: list[str] = []
    notes: list[str] = []
    template = daily[0]
    usable = []
    for ds in daily:
        if ds.n_users == 0:
            codes.append(CODE_EMPTY_SLICE)
            notes.append(f"slice {ds.experiment_id} empty, skipped")
        else:
            usable.append(ds)
    if not usable:
        raise InsufficientDataError("every backtest slice is empty")

    def pooled_dataset(users):
        return ExperimentDataset(
            experiment_id=f"{template.experiment_id}#window",
            users=tuple(users),
            actions=template.actions,
            control_action=template.control_action,
            metrics=template.metrics,
            features=template.features,
            lift_units=template.lift_units,
        )

    # Cohort boundaries are pinned from the whole backtest window; each day
    # re-buckets its users against those fixed intervals.
    window = pooled_dataset([u for ds in usable for u in ds.users])
    pinned = materialize(window, policy.cut)
    pooled_users: list = []
    for ds in usable:
        pooled_users.extend(ds.users)
        try:
            day_est = evaluate_policy_pinned(ds, policy, pinned).estimates
            cum_est = evaluate_policy_pinned(pooled_dataset(pooled_users),
                                             policy, pinned).estimates
        except EstimationError:
            codes.append(CODE_EMPTY_SLICE)
            notes.append(f"slice {ds.experiment_id} lacks arm support, skipped")
            continue
        days.append(ds.experiment_id)
        daily_series.append({m: day_est[m] for m in template.metrics})
        cumulative_series.append({m: cum_est[m] for m in template.metrics})

    series = BacktestSeries(days=days, daily=daily_series,
                            cumulative=cumulative_series)
    if len(cumulative_series) < min_days:
        raise InsufficientDataError(
            f"backtest needs >= {min_days} usable daily slices, "
            f"got {len(cumulative_series)}")

    for metric in target_metrics:
        reference = policy.estimates[metric]
        for day_idx in range(min_days - 1, len(cumulative_series)):
            cum = cumulative_series[day_idx][metric]
            band = BACKTEST_ENVELOPE_Z * math.sqrt(
                cum.std_err ** 2 + reference.std_err ** 2)
            if abs(cum.mean - reference.mean) > band:
                codes.append(CODE_BACKTEST_DIVERGED)
                notes.append(
                    f"{metric}: cumulative lift {cum.mean:.4g} on day "
                    f"{day_idx + 1} leaves the {BACKTEST_ENVELOPE_Z}-SE band "
                    f"around {reference.mean:.4g}")
                break
        for day_idx in range(min_days - 1, len(cumulative_series)):
            cum = cumulative_series[day_idx][metric]
            if cum.mean * reference.mean < 0:
                codes.append(CODE_SIGN_FLIP)
                notes.append(f"{metric}: cumulative lift flips sign on day "
                             f"{day_idx + 1}")
                break

    hard_codes = [c for c in codes if c != CODE_EMPTY_SLICE]
    if hard_codes:
        report = HookReport(stage=STAGE_PRE_RECOMMENDATION, verdict=REJECT,
                            reason_codes=sorted(set(codes)),
                            entities=[policy.policy_id],
                            narrative="; ".join(notes))
    else:
        report = HookReport(stage=STAGE_PRE_RECOMMENDATION, verdict=PASS,
                            reason_codes=sorted(set(codes)),
                            entities=[policy.policy_id],
                            narrative=(f"cumulative lift consistent over "
                                       f"{len(cumulative_series)} days"))
    return series, report


# -- snapshot and report persistence ----------------------------------------------


def load_snapshots(path: str | Path,
                   window_days: int = 180) -> dict[str, FeatureSnapshotPair]:
    """Read snapshot CSV rows (user_id, feature_id, value, snapshot in {t0,t1})
    into per-feature snapshot pairs."""
    pairs: dict[str, FeatureSnapshotPair] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    for column in ("user_id", "feature_id", "value", "snapshot"):
        if column not in (reader.fieldnames or []):
            raise ValueError(f"snapshot file is missing column {column!r}")
    for row in reader:
        feature = row["feature_id"]
        pair = pairs.setdefault(feature, FeatureSnapshotPair(
            feature=feature, t0_values={}, t1_values={}, window_days=window_days))
        target = pair.t0_values if row["snapshot"] == "t0" else pair.t1_values
        target[row["user_id"]] = float(row["value"])
    return pairs


def save_snapshots(path: str | Path,
                   pairs: Mapping[str, FeatureSnapshotPair]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# format_version: {FORMAT_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "feature_id", "value", "snapshot"])
        for feature in sorted(pairs):
            pair = pairs[feature]
            for label, values in (("t0", pair.t0_values), ("t1", pair.t1_values)):
                for user_id in sorted(values):
                    writer.writerow([user_id, feature, repr(values[user_id]), label])


def save_reports(path: str | Path, reports: Sequence[HookReport]) -> None:
    """Write the hook-report trail as JSONL, one report per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(report.to_json(), sort_keys=True))
            fh.write("\n")


def load_reports(path: str | Path) -> list[HookReport]:
    reports = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            reports.append(HookReport(stage=data["stage"], verdict=data["verdict"],
                                      reason_codes=list(data["reason_codes"]),
                                      entities=list(data["entities"]),
                                      narrative=data["narrative"]))
    return reports
