"""End-to-end governed run: stability filter -> search -> frontier ->
robustness -> backtest, with a bounded refinement loop.

Every stage is seeded and deterministic, so identical run configs produce
byte-identical artifacts regardless of worker count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .experiment import ExperimentDataset
from .frontier import (FrontierResult, ToleranceConfig, save_frontier,
                       save_frontier_coords, tolerance_filter)
from .governance import (CODE_NO_QUALIFYING_POLICY, DEFAULT_THRESHOLDS,
                         REJECT, STAGE_POST_SEARCH, SIGNIFICANCE_Z,
                         FeatureSnapshotPair, HookReport, classify_stability,
                         load_snapshots, pre_search_filter, robustness_check,
                         run_backtest, save_reports, shift_ratio)
from .ingest import IngestSchema, ingest
from .search import (FORMAT_VERSION, PolicyCandidate, collect_candidates,
                     evaluate_policies, evaluate_policy_pinned,
                     enumerate_policies, sample_weights, save_policy_table)
from .segmentation import CutEnumerationConfig, enumerate_cuts, materialize
from .synth import ScenarioConfig, generate_experiment, generate_snapshots


@dataclass
class RunConfig:
    """Knobs for one governed pipeline run.

    Defaults: 1000 weight samples, top-5 per weight, tau = 1.0, shift
    thresholds 15% (binary) / 45% (quantile), refinement budget 3.
    """

    seed: int = 0
    weight_samples: int = 1000
    top_k: int = 5
    tau: float = 1.0
    thresholds: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    max_refinements: int = 3
    primary_metric: str | None = None
    minimize_metrics: tuple[str, ...] = ()
    n_bins: int = 4
    cut_kinds: tuple[str, ...] = ("individual", "binary")
    policy_budget: int = 128
    features: tuple[str, ...] | None = None
    backtest_days: int = 14
    robustness_slices: int = 4
    scenario: ScenarioConfig | None = None
    dataset_path: str | None = None
    schema_path: str | None = None
    snapshots_path: str | None = None

    def __post_init__(self):
        if self.weight_samples < 1:
            raise ConfigError("weight_samples must be >= 1")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")
        if self.max_refinements < 0:
            raise ConfigError("max_refinements must be >= 0")
        for key in ("binary", "quantile"):
            value = self.thresholds.get(key)
            if value is None or not (0.0 <= value <= 1.0):
                raise ConfigError(f"threshold {key!r} must be in [0, 1], got {value}")
        if self.scenario is None and not self.dataset_path:
            raise ConfigError("run config needs either a scenario or a dataset path")
        if self.dataset_path and not self.schema_path:
            raise ConfigError("a dataset path needs a schema path")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "RunConfig":
        scenario = None
        if "scenario" in data and data["scenario"] is not None:
            scenario = ScenarioConfig.from_mapping(data["scenario"])
        return cls(
            seed=int(data.get("seed", 0)),
            weight_samples=int(data.get("weight_samples", 1000)),
            top_k=int(data.get("top_k", 5)),
            tau=float(data.get("tau", 1.0)),
            thresholds=dict(data.get("thresholds", DEFAULT_THRESHOLDS)),
            max_refinements=int(data.get("max_refinements", 3)),
            primary_metric=data.get("primary_metric"),
            minimize_metrics=tuple(data.get("minimize_metrics", ())),
            n_bins=int(data.get("n_bins", 4)),
            cut_kinds=tuple(data.get("cut_kinds", ("individual", "binary"))),
            policy_budget=int(data.get("policy_budget", 128)),
            features=tuple(data["features"]) if data.get("features") else None,
            backtest_days=int(data.get("backtest_days", 14)),
            robustness_slices=int(data.get("robustness_slices", 4)),
            scenario=scenario,
            dataset_path=data.get("dataset_path"),
            schema_path=data.get("schema_path"),
            snapshots_path=data.get("snapshots_path"),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed run config: {exc}") from exc
        if not isinstance(data, Mapping):
            raise ConfigError("run config must be a JSON object")
        return cls.from_mapping(data)

    def to_json(self) -> dict:
        data = {
            "seed": self.seed,
            "weight_samples": self.weight_samples,
            "top_k": self.top_k,
            "tau": self.tau,
            "thresholds": dict(sorted(self.thresholds.items())),
            "max_refinements": self.max_refinements,
            "primary_metric": self.primary_metric,
            "minimize_metrics": list(self.minimize_metrics),
            "n_bins": self.n_bins,
            "cut_kinds": list(self.cut_kinds),
            "policy_budget": self.policy_budget,
            "features": list(self.features) if self.features else None,
            "backtest_days": self.backtest_days,
            "robustness_slices": self.robustness_slices,
            "dataset_path": self.dataset_path,
            "schema_path": self.schema_path,
            "snapshots_path": self.snapshots_path,
            "scenario": None,
        }
        if self.scenario is not None:
            data["scenario"] = {
                "seed": self.scenario.seed,
                "n_users": self.scenario.n_users,
                "n_features": self.scenario.n_features,
                "n_metrics": self.scenario.n_metrics,
                "n_actions": self.scenario.n_actions,
                "noise_sd": self.scenario.noise_sd,
                "n_days": self.scenario.n_days,
                "experiment_id": self.scenario.experiment_id,
                "planted_effects": [vars(e) for e in self.scenario.planted_effects],
                "drift_specs": [vars(d) for d in self.scenario.drift_specs],
            }
        return data


@dataclass
class PipelineResult:
    """Outcome of a governed run: recommendation or terminal rejection."""

    status: str  # "recommended" | "rejected"
    recommendation: PolicyCandidate | None
    reports: list[HookReport]
    iterations: int
    policies: list[PolicyCandidate]
    frontier: FrontierResult | None
    dataset: ExperimentDataset | None = None
    backtest_series: object | None = None

    @property
    def recommended(self) -> bool:
        return self.status == "recommended"


def _load_inputs(config: RunConfig
                 ) -> tuple[ExperimentDataset, dict[str, FeatureSnapshotPair]]:
    if config.scenario is not None:
        ds, _ = generate_experiment(config.scenario)
        snapshots = {}
        for i, drift in enumerate(config.scenario.drift_specs):
            snapshots[drift.feature] = generate_snapshots(
                ds, drift, seed=config.scenario.seed + 1000 + i)
        return ds, snapshots
    ds = ingest(config.dataset_path, IngestSchema.from_json(config.schema_path))
    if not config.snapshots_path:
        raise ConfigError("file-based runs need a snapshots path for the "
                          "pre-search stability filter")
    return ds, load_snapshots(config.snapshots_path)


def _stability_verdicts(features: Sequence[str],
                        snapshots: Mapping[str, FeatureSnapshotPair],
                        thresholds: Mapping[str, float]) -> list:
    verdicts = []
    for feature in features:
        pair = snapshots.get(feature)
        if pair is None:
            raise ConfigError(f"no snapshot data for feature {feature!r}")
        verdicts.append(classify_stability(
            feature,
            shift_quantile=shift_ratio(pair, "quantile"),
            shift_binary=shift_ratio(pair, "binary"),
            thresholds=thresholds))
    return verdicts


def _qualifies(policy: PolicyCandidate, primary: str, metrics: Sequence[str]) -> bool:
    est = policy.estimates[primary]
    if est.mean < SIGNIFICANCE_Z * est.std_err or est.mean <= 0:
        return False
    for metric in metrics:
        if metric == primary:
            continue
        other = policy.estimates[metric]
        if abs(other.mean) > SIGNIFICANCE_Z * other.std_err:
            return False
    return True


def govern_pipeline(config: RunConfig, threads: int = 1) -> PipelineResult:
    """Run the full governed search and return the hook-report trail plus
    either a recommended policy or a terminal rejection.

    A policy-level rejection removes the offending policy and re-runs, up to
    `max_refinements` extra iterations; a rejection nothing can be removed
    for (empty search space, no qualifying policy) is terminal.
    """
    ds, snapshots = _load_inputs(config)
    primary = config.primary_metric or ds.metrics[0]
    if primary not in ds.metrics:
        raise ConfigError(f"primary metric {primary!r} not in dataset metrics")
    eligible = tuple(config.features) if config.features else ds.features

    reports: list[HookReport] = []
    excluded_policies: set[str] = set()
    last_policies: list[PolicyCandidate] = []
    last_frontier: FrontierResult | None = None
    iterations = 0

    for iteration in range(config.max_refinements + 1):
        iterations = iteration + 1
        verdicts = _stability_verdicts(eligible, snapshots, config.thresholds)
        pre_report, admitted_features = pre_search_filter(verdicts,
                                                          config.thresholds)
        reports.append(pre_report)
        if not admitted_features:
            return PipelineResult(status="rejected", recommendation=None,
                                  reports=reports, iterations=iterations,
                                  policies=last_policies, frontier=last_frontier,
                                  dataset=ds)

        cuts = enumerate_cuts(ds, CutEnumerationConfig(
            features=tuple(admitted_features), n_bins=config.n_bins,
            kinds=config.cut_kinds))
        policies = enumerate_policies(ds, cuts, budget=config.policy_budget,
                                      seed=config.seed)
        policies = [p for p in policies if p.policy_id not in excluded_policies]
        evaluated = evaluate_policies(ds, policies, threads=threads,
                                      skip_unsupported=True)
        last_policies = evaluated

        weights = sample_weights(len(ds.metrics), config.weight_samples,
                                 config.seed)
        candidate_set = collect_candidates(evaluated, weights, config.top_k,
                                           metrics=ds.metrics)
        by_id = {p.policy_id: p for p in evaluated}
        candidates = [by_id[pid] for pid in candidate_set.policy_ids]
        directions = {m: ("minimize" if m in config.minimize_metrics else "maximize")
                      for m in ds.metrics}
        frontier = tolerance_filter(
            candidates, ToleranceConfig(tau=config.tau, directions=directions),
            metrics=ds.metrics)
        last_frontier = frontier

        qualifying = [by_id[pid] for pid in frontier.admitted
                      if _qualifies(by_id[pid], primary, ds.metrics)]
        if not qualifying:
            reports.append(HookReport(
                stage=STAGE_POST_SEARCH, verdict=REJECT,
                reason_codes=[CODE_NO_QUALIFYING_POLICY],
                entities=list(frontier.admitted) or ["<frontier>"],
                narrative=(f"no frontier policy lifts {primary} at "
                           f"{SIGNIFICANCE_Z} sigma while staying neutral "
                           f"elsewhere")))
            return PipelineResult(status="rejected", recommendation=None,
                                  reports=reports, iterations=iterations,
                                  policies=last_policies, frontier=last_frontier,
                                  dataset=ds)
        candidate = max(qualifying,
                        key=lambda p: (p.estimates[primary].mean, p.policy_id))

        daily = ds.daily_slices(config.backtest_days)
        pinned = materialize(ds, candidate.cut)
        slice_bounds = np.linspace(0, len(daily), config.robustness_slices + 1)
        slice_estimates = []
        for s in range(config.robustness_slices):
            chunk = daily[int(slice_bounds[s]):int(slice_bounds[s + 1])]
            users = tuple(u for part in chunk for u in part.users)
            slice_ds = ExperimentDataset(
                experiment_id=f"{ds.experiment_id}#slice{s}", users=users,
                actions=ds.actions, control_action=ds.control_action,
                metrics=ds.metrics, features=ds.features,
                lift_units=ds.lift_units)
            slice_estimates.append(
                evaluate_policy_pinned(slice_ds, candidate, pinned).estimates)
        robustness_report = robustness_check(candidate, slice_estimates,
                                             target_metrics=[primary])
        reports.append(robustness_report)
        if robustness_report.rejected:
            excluded_policies.add(candidate.policy_id)
            continue

        series, backtest_report = run_backtest(candidate, daily,
                                               target_metrics=[primary])
        reports.append(backtest_report)
        if backtest_report.rejected:
            excluded_policies.add(candidate.policy_id)
            continue

        return PipelineResult(status="recommended", recommendation=candidate,
                              reports=reports, iterations=iterations,
                              policies=last_policies, frontier=frontier,
                              dataset=ds, backtest_series=series)

    return PipelineResult(status="rejected", recommendation=None,
                          reports=reports, iterations=iterations,
                          policies=last_policies, frontier=last_frontier,
                          dataset=ds)


def write_run_artifacts(result: PipelineResult, config: RunConfig,
                        out_dir: str | Path) -> dict[str, str]:
    """Persist the run directory: policy table, frontier JSON and coordinate
    file, hook-report trail, recommendation JSON, and a manifest.

    Contents carry no timestamps or machine details, so identical configs
    write byte-identical directories.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = result.dataset
    metrics = list(ds.metrics) if ds is not None else []

    artifacts: dict[str, str] = {}
    if result.policies:
        save_policy_table(out / "policy_table.csv", result.policies, metrics)
        artifacts["policy_table"] = "policy_table.csv"
    if result.frontier is not None:
        save_frontier(out / "frontier.json", result.frontier)
        artifacts["frontier"] = "frontier.json"
        if len(metrics) >= 2 and result.policies:
            by_id = {p.policy_id: p for p in result.policies}
            frontier_policies = [by_id[pid] for pid in
                                 sorted(set(result.frontier.admitted)
                                        | set(result.frontier.dominated_by))
                                 if pid in by_id]
            save_frontier_coords(out / "frontier_coords.csv", frontier_policies,
                                 result.frontier, (metrics[0], metrics[1]))
            artifacts["frontier_coords"] = "frontier_coords.csv"
    save_reports(out / "hook_reports.jsonl", result.reports)
    artifacts["hook_reports"] = "hook_reports.jsonl"

    recommendation: dict = {
        "format_version": FORMAT_VERSION,
        "status": result.status,
        "iterations": result.iterations,
        "policy": None,
    }
    if result.recommendation is not None:
        policy = result.recommendation
        recommendation["policy"] = {
            "policy_id": policy.policy_id,
            "feature": policy.cut.feature if policy.cut else None,
            "cut": policy.cut.short_descriptor if policy.cut else "global",
            "assignment": list(policy.assignment),
            "estimates": {m: policy.estimates[m].to_json() for m in metrics},
        }
    with open(out / "recommendation.json", "w", encoding="utf-8") as fh:
        json.dump(recommendation, fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifacts["recommendation"] = "recommendation.json"

    if result.backtest_series is not None:
        result.backtest_series.save_csv(out / "backtest.csv", metrics)
        artifacts["backtest"] = "backtest.csv"

    manifest = {
        "format_version": FORMAT_VERSION,
        "status": result.status,
        "iterations": result.iterations,
        "config": config.to_json(),
        "artifacts": dict(sorted(artifacts.items())),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifacts["manifest"] = "manifest.json"
    return artifacts
