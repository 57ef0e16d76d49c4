"""Candidate policy enumeration, evaluation, and random-weight Top-K search.

A policy maps each segment slot of one cut to an action (control allowed).
Per-metric policy lift is the segment-size-weighted average of segment-level
effects; policy standard errors compose segment standard errors as
independent size-weighted variances (segments are disjoint user sets).
"""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, EstimationError
from .experiment import ExperimentDataset, MetricEstimate, segment_hte
from .segmentation import CutSpec, Segment, materialize

FORMAT_VERSION = 1


@dataclass
class PolicyCandidate:
    """A segment->action assignment over one cut, plus per-metric estimates.

    `cut` is None for the degenerate single-slot (whole population) policy.
    `assignment` is positional: slot index -> action id.
    """

    policy_id: str
    cut: CutSpec | None
    assignment: tuple[str, ...]
    estimates: dict[str, MetricEstimate] = field(default_factory=dict)

    def __post_init__(self):
        slots = self.cut.slot_count if self.cut is not None else 1
        if len(self.assignment) != slots:
            raise ValueError(
                f"policy {self.policy_id!r} assigns {len(self.assignment)} slots, "
                f"cut has {slots}"
            )

    def mean_vector(self, metrics: Sequence[str]) -> tuple[float, ...]:
        return tuple(self.estimates[m].mean for m in metrics)


@dataclass(frozen=True)
class WeightVector:
    """A point on the metric simplex: non-negative weights summing to 1."""

    weights: tuple[float, ...]

    def __post_init__(self):
        if not self.weights:
            raise ValueError("weight vector must be non-empty")
        if any(w < 0 for w in self.weights):
            raise ValueError(f"weights must be non-negative, got {self.weights}")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(self.weights)}")


@dataclass
class CandidateSet:
    """Union of per-weight Top-K selections, with admission provenance.

    `policy_ids` is sorted ascending; `provenance` maps each admitted id to
    the (weight index, rank) pairs that admitted it.
    """

    policy_ids: list[str]
    provenance: dict[str, list[tuple[int, int]]]


def make_policy_id(cut: CutSpec | None, assignment: Sequence[str]) -> str:
    if cut is None:
        return f"global.{assignment[0]}"
    return f"{cut.describe()}.{'-'.join(assignment)}"


def global_policies(ds: ExperimentDataset,
                    actions: Sequence[str] | None = None) -> list[PolicyCandidate]:
    """One single-slot whole-population policy per action."""
    actions = tuple(actions) if actions is not None else ds.actions
    return [PolicyCandidate(policy_id=make_policy_id(None, (a,)),
                            cut=None, assignment=(a,))
            for a in actions]


def _sample_assignments(n_actions: int, slots: int, budget: int,
                        control_index: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    # All-control is forced in; the rest are unique uniform draws.
    control = tuple([control_index] * slots)
    chosen = {control}
    while len(chosen) < budget:
        chosen.add(tuple(int(a) for a in rng.integers(0, n_actions, size=slots)))
    return sorted(chosen)


def enumerate_policies(ds: ExperimentDataset, cuts: Sequence[CutSpec],
                       actions: Sequence[str] | None = None,
                       budget: int = 128, seed: int = 0) -> list[PolicyCandidate]:
    """Candidate policies for each cut: the full action cross-product when it
    fits the per-cut budget, otherwise a seeded uniform sample without
    replacement with the all-control reference always present.

    An empty cut list yields the global single-slot policies, one per action.
    """
    if budget < 1:
        raise ConfigError(f"policy budget must be >= 1, got {budget}")
    action_list = tuple(actions) if actions is not None else ds.actions
    if not action_list:
        raise ConfigError("no actions to assign")
    if not cuts:
        return global_policies(ds, action_list)

    control_index = (action_list.index(ds.control_action)
                     if ds.control_action in action_list else 0)
    rng = np.random.default_rng(seed)
    policies: list[PolicyCandidate] = []
    for cut in cuts:
        slots = cut.slot_count
        total = len(action_list) ** slots
        if total <= budget:
            combos = list(itertools.product(range(len(action_list)), repeat=slots))
        else:
            combos = _sample_assignments(len(action_list), slots, budget,
                                         control_index, rng)
        for combo in combos:
            assignment = tuple(action_list[i] for i in combo)
            policies.append(PolicyCandidate(
                policy_id=make_policy_id(cut, assignment),
                cut=cut, assignment=assignment))
    return policies


# -- evaluation ---------------------------------------------------------------


def _slot_keys(ds: ExperimentDataset, policy: PolicyCandidate,
               segments: Sequence[Segment]):
    for slot, (segment, action) in enumerate(zip(segments, policy.assignment)):
        yield slot, segment, action


def _combine(ds: ExperimentDataset, policy: PolicyCandidate,
             segments: Sequence[Segment],
             stats: Mapping[tuple[int, str, str], MetricEstimate]) -> PolicyCandidate:
    n_total = ds.n_users
    estimates: dict[str, MetricEstimate] = {}
    for metric in ds.metrics:
        mean = 0.0
        var = 0.0
        n_t = 0
        n_c = 0
        for slot, segment, action in _slot_keys(ds, policy, segments):
            if segment.is_empty or action == ds.control_action:
                continue
            est = stats[(slot, action, metric)]
            weight = len(segment.members) / n_total
            mean += weight * est.mean
            var += (weight * est.std_err) ** 2
            n_t += est.n_treated
            n_c += est.n_control
        estimates[metric] = MetricEstimate(mean=mean, std_err=math.sqrt(var),
                                           n_treated=n_t, n_control=n_c)
    return replace(policy, estimates=estimates)


def evaluate_policy(ds: ExperimentDataset, policy: PolicyCandidate) -> PolicyCandidate:
    """Fill per-metric estimates for one policy (returns a new candidate).

    Control-assigned slots contribute zero lift by definition; empty slots
    carry zero weight. A non-empty slot whose assigned action lacks treated
    or control members raises EstimationError naming the slot.
    """
    segments = materialize(ds, policy.cut)
    stats: dict[tuple[int, str, str], MetricEstimate] = {}
    for slot, segment, action in _slot_keys(ds, policy, segments):
        if segment.is_empty or action == ds.control_action:
            continue
        for metric in ds.metrics:
            try:
                stats[(slot, action, metric)] = segment_hte(ds, segment, action, metric)
            except EstimationError as exc:
                raise EstimationError(
                    f"policy {policy.policy_id!r} slot {slot}: {exc}") from exc
    return _combine(ds, policy, segments, stats)


def evaluate_policy_pinned(ds: ExperimentDataset, policy: PolicyCandidate,
                           pinned: Sequence[Segment]) -> PolicyCandidate:
    """Evaluate against cohort boundaries fixed elsewhere (e.g. the full
    backtest window): this dataset's users are re-bucketed by value into the
    pinned intervals instead of re-deriving quantiles."""
    segments = []
    for i, seg in enumerate(pinned):
        if policy.cut is None:
            members = frozenset(ds.user_ids)
        else:
            # The top slot is open-ended so values above the reference
            # window's maximum still land in a cohort.
            top = i == len(pinned) - 1
            values = ds.feature_values(seg.feature)
            members = frozenset(
                uid for uid, v in zip(ds.user_ids, values)
                if v > seg.lower and (top or v <= seg.upper))
        segments.append(Segment(feature=seg.feature, lower=seg.lower,
                                upper=seg.upper, members=members))
    stats: dict[tuple[int, str, str], MetricEstimate] = {}
    for slot, segment, action in _slot_keys(ds, policy, segments):
        if segment.is_empty or action == ds.control_action:
            continue
        for metric in ds.metrics:
            try:
                stats[(slot, action, metric)] = segment_hte(ds, segment, action, metric)
            except EstimationError as exc:
                raise EstimationError(
                    f"policy {policy.policy_id!r} slot {slot}: {exc}") from exc
    return _combine(ds, policy, segments, stats)


def evaluate_policies(ds: ExperimentDataset, policies: Sequence[PolicyCandidate],
                      threads: int = 1,
                      skip_unsupported: bool = False) -> list[PolicyCandidate]:
    """Batch-evaluate policies, sharing segment-level effect estimates.

    Segment effects are keyed by (cut, slot, action, metric), so policies on
    the same cut reuse them. The result is independent of `threads`: every
    estimate is a pure function of the immutable dataset.
    """
    by_cut: dict[CutSpec | None, list[Segment]] = {}
    needed: set[tuple[CutSpec | None, int, str, str]] = set()
    for policy in policies:
        if policy.cut not in by_cut:
            by_cut[policy.cut] = materialize(ds, policy.cut)
        segments = by_cut[policy.cut]
        for slot, segment, action in _slot_keys(ds, policy, segments):
            if segment.is_empty or action == ds.control_action:
                continue
            for metric in ds.metrics:
                needed.add((policy.cut, slot, action, metric))

    def compute(key):
        cut, slot, action, metric = key
        segment = by_cut[cut][slot]
        return key, segment_hte(ds, segment, action, metric)

    keys = sorted(needed, key=lambda k: (repr(k[0]), k[1], k[2], k[3]))
    stats: dict[tuple[CutSpec | None, int, str, str], MetricEstimate | None] = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_guarded(compute), keys))
    else:
        results = [_guarded(compute)(k) for k in keys]
    for key, value in results:
        stats[key] = value

    out = []
    for policy in policies:
        segments = by_cut[policy.cut]
        slot_stats = {}
        supported = True
        for slot, segment, action in _slot_keys(ds, policy, segments):
            if segment.is_empty or action == ds.control_action:
                continue
            for metric in ds.metrics:
                est = stats[(policy.cut, slot, action, metric)]
                if est is None:
                    if skip_unsupported:
                        supported = False
                        break
                    raise EstimationError(
                        f"policy {policy.policy_id!r} slot {slot}: no treated/control "
                        f"support for action {action!r}")
                slot_stats[(slot, action, metric)] = est
            if not supported:
                break
        if supported:
            out.append(_combine(ds, policy, segments, slot_stats))
    return out


def _guarded(fn):
    def wrapper(key):
        try:
            return fn(key)
        except EstimationError:
            return key, None
    return wrapper


# -- random-weight search ------------------------------------------------------


def sample_weights(n_metrics: int, n_samples: int, seed: int) -> list[WeightVector]:
    """Uniform simplex samples via normalized unit-rate exponentials.

    Identical seed gives an identical sequence.
    """
    if n_metrics < 1:
        raise ValueError(f"n_metrics must be >= 1, got {n_metrics}")
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if n_metrics == 1:
        return [WeightVector((1.0,)) for _ in range(n_samples)]
    rng = np.random.default_rng(seed)
    draws = -np.log1p(-rng.random((n_samples, n_metrics)))
    totals = draws.sum(axis=1)
    totals[totals == 0.0] = 1.0
    normalized = draws / totals[:, None]
    # Exact sum-to-1 after float division is not guaranteed; renormalize the
    # largest coordinate to absorb the residual.
    out = []
    for row in normalized:
        residual = 1.0 - row.sum()
        row = row.copy()
        row[int(np.argmax(row))] += residual
        out.append(WeightVector(tuple(float(w) for w in row)))
    return out


def scalarized_score(policy: PolicyCandidate, weights: WeightVector,
                     metrics: Sequence[str] | None = None) -> float:
    """Weighted sum of per-metric mean lifts, weights aligned with `metrics`
    (default: the policy's estimate insertion order)."""
    metric_order = tuple(metrics) if metrics is not None else tuple(policy.estimates)
    if len(metric_order) != len(weights.weights):
        raise ValueError(
            f"weight vector has {len(weights.weights)} entries for "
            f"{len(metric_order)} metrics")
    total = 0.0
    for w, metric in zip(weights.weights, metric_order):
        if metric not in policy.estimates:
            raise ValueError(
                f"policy {policy.policy_id!r} has no estimate for metric {metric!r}")
        total += w * policy.estimates[metric].mean
    return total


def collect_candidates(policies: Sequence[PolicyCandidate],
                       weights: Sequence[WeightVector], top_k: int,
                       metrics: Sequence[str] | None = None) -> CandidateSet:
    """Union of Top-K policies per weight vector (Step 1 of frontier search).

    Ties in score break by ascending policy_id, so the result is independent
    of input ordering and scheduling. Provenance records every (weight
    index, 1-based rank) that admitted each policy.
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    if not policies:
        raise ValueError("no policies to search")
    metric_order = tuple(metrics) if metrics is not None else tuple(policies[0].estimates)
    try:
        mu = np.array([[p.estimates[m].mean for m in metric_order] for p in policies])
    except KeyError as exc:
        raise ValueError(f"a policy is missing an estimate for metric "
                         f"{exc.args[0]!r}") from exc
    ids = [p.policy_id for p in policies]
    id_order = np.argsort(np.array(ids, dtype=object), kind="stable")

    provenance: dict[str, list[tuple[int, int]]] = {}
    for w_idx, w in enumerate(weights):
        scores = mu @ np.asarray(w.weights)
        # Sort by id first, then stably by descending score: equal scores
        # keep ascending-id order.
        ranked = id_order[np.argsort(-scores[id_order], kind="stable")]
        for rank, row in enumerate(ranked[:top_k], start=1):
            provenance.setdefault(ids[row], []).append((w_idx, rank))
    return CandidateSet(policy_ids=sorted(provenance), provenance=provenance)


# -- policy table persistence ---------------------------------------------------


def save_policy_table(path: str | Path, policies: Sequence[PolicyCandidate],
                      metrics: Sequence[str]) -> None:
    """Write the policy table CSV: id, cut descriptor, per-slot actions, and
    per-metric mean/std_err columns."""
    path = Path(path)
    header = ["policy_id", "feature", "cut", "actions"]
    for metric in metrics:
        header += [f"{metric}_mean", f"{metric}_std_err"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# format_version: {FORMAT_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for policy in sorted(policies, key=lambda p: p.policy_id):
            cut = policy.cut
            row = [policy.policy_id,
                   cut.feature if cut is not None else "",
                   cut.short_descriptor if cut is not None else "global",
                   "-".join(policy.assignment)]
            for metric in metrics:
                est = policy.estimates[metric]
                row += [repr(est.mean), repr(est.std_err)]
            writer.writerow(row)


def load_policy_table(path: str | Path) -> tuple[dict[str, dict[str, MetricEstimate]], list[str]]:
    """Read a policy table CSV into {policy_id: {metric: MetricEstimate}} and
    the metric id list."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    metric_cols = [(i, name[: -len("_mean")]) for i, name in enumerate(header)
                   if name.endswith("_mean")]
    err_col = {name: header.index(f"{name}_std_err") for _, name in metric_cols}
    table: dict[str, dict[str, MetricEstimate]] = {}
    for row in reader:
        if not row:
            continue
        policy_id = row[0]
        table[policy_id] = {
            name: MetricEstimate(mean=float(row[i]), std_err=float(row[err_col[name]]))
            for i, name in metric_cols
        }
    return table, [name for _, name in metric_cols]
