"""Seeded synthetic experiments with planted effects, conflicts, and drift.

Everything is derived from integer seeds (per-experiment seeds come from a
SeedSequence spawn), so identical configs give identical datasets, policy
tables, and ground truths.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .evaluation import KINDS, GroundTruth, InstructionSpec, ground_truth_oracle
from .experiment import ExperimentDataset, MetricEstimate, UserRecord
from .governance import FeatureSnapshotPair
from .search import enumerate_policies, evaluate_policies
from .segmentation import CutEnumerationConfig, bucket_index, enumerate_cuts, interior_cutpoints, quantile

NEG_INF = float("-inf")


@dataclass(frozen=True)
class PlantedEffect:
    """Add `lift` to `metric` for users in a quantile range of `feature`
    assigned to `action`."""

    feature: str
    q_lo: float
    q_hi: float
    action: str
    metric: str
    lift: float

    def __post_init__(self):
        if not (0.0 <= self.q_lo < self.q_hi <= 1.0):
            raise ConfigError(
                f"planted quantile range must satisfy 0 <= lo < hi <= 1, "
                f"got ({self.q_lo}, {self.q_hi})")


@dataclass(frozen=True)
class DriftSpec:
    """Perturb `feature` so its measured quantile shift ratio hits the target."""

    feature: str
    target_shift_ratio: float

    def __post_init__(self):
        if not (0.0 <= self.target_shift_ratio <= 1.0):
            raise ConfigError(
                f"target shift ratio must be in [0, 1], got {self.target_shift_ratio}")


@dataclass(frozen=True)
class ScenarioConfig:
    """One synthetic experiment: sizes, planted effects, drift, noise."""

    seed: int = 0
    n_users: int = 1000
    n_features: int = 2
    n_metrics: int = 2
    n_actions: int = 2
    planted_effects: tuple[PlantedEffect, ...] = ()
    drift_specs: tuple[DriftSpec, ...] = ()
    noise_sd: float = 1.0
    n_days: int = 0
    experiment_id: str = "synth"

    def __post_init__(self):
        for name, value in (("n_users", self.n_users), ("n_features", self.n_features),
                            ("n_metrics", self.n_metrics), ("n_actions", self.n_actions)):
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if self.noise_sd < 0:
            raise ConfigError(f"noise_sd must be >= 0, got {self.noise_sd}")
        _check_contradictions(self.planted_effects)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f"f{i + 1}" for i in range(self.n_features))

    @property
    def metric_names(self) -> tuple[str, ...]:
        return tuple(f"m{i + 1}" for i in range(self.n_metrics))

    @property
    def action_names(self) -> tuple[str, ...]:
        return ("a0", *(f"a{i + 1}" for i in range(self.n_actions)))

    @classmethod
    def from_mapping(cls, data) -> "ScenarioConfig":
        effects = tuple(PlantedEffect(**e) for e in data.get("planted_effects", ()))
        drifts = tuple(DriftSpec(**d) for d in data.get("drift_specs", ()))
        known = {"seed", "n_users", "n_features", "n_metrics", "n_actions",
                 "noise_sd", "n_days", "experiment_id"}
        kwargs = {k: v for k, v in data.items() if k in known}
        return cls(planted_effects=effects, drift_specs=drifts, **kwargs)


def _check_contradictions(effects: Sequence[PlantedEffect]) -> None:
    # Two effects on the same (feature, action, metric) with overlapping
    # quantile ranges would stack unpredictably; reject the configuration.
    for i, a in enumerate(effects):
        for b in effects[i + 1:]:
            if (a.feature, a.action, a.metric) != (b.feature, b.action, b.metric):
                continue
            if a.q_lo < b.q_hi and b.q_lo < a.q_hi:
                raise ConfigError(
                    f"planted effects overlap on ({a.feature}, {a.action}, "
                    f"{a.metric}): ({a.q_lo}, {a.q_hi}) vs ({b.q_lo}, {b.q_hi})")


def _effect_mask(values: np.ndarray, q_lo: float, q_hi: float) -> np.ndarray:
    lower = NEG_INF if q_lo == 0.0 else quantile(values, q_lo)
    upper = quantile(values, q_hi)
    return (values > lower) & (values <= upper)


def _balanced_labels(labels: Sequence, n: int, rng: np.random.Generator) -> np.ndarray:
    tiled = np.array(list(labels) * (n // len(labels) + 1), dtype=object)[:n]
    return tiled[rng.permutation(n)]


def generate_experiment(cfg: ScenarioConfig,
                        lift_scale: float = 1.0
                        ) -> tuple[ExperimentDataset, dict]:
    """Build one experiment: uniform features, balanced random arms, outcomes
    = planted segment lifts + Gaussian noise.

    Returns the dataset and a planted-truth record (realized segment bounds
    and member counts per effect) for oracle checks. `lift_scale` scales all
    planted lifts, which backtest fixtures use to decay effects over days.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_users
    width = max(5, len(str(n)))
    user_ids = [f"u{i:0{width}d}" for i in range(n)]
    features = {name: rng.random(n) for name in cfg.feature_names}
    arms = _balanced_labels(cfg.action_names, n, rng)
    days = None
    if cfg.n_days > 0:
        days = _balanced_labels(range(cfg.n_days), n, rng)

    outcomes = {name: np.zeros(n) for name in cfg.metric_names}
    truth_effects = []
    for effect in cfg.planted_effects:
        if effect.feature not in features:
            raise ConfigError(f"planted effect references unknown feature "
                              f"{effect.feature!r}")
        if effect.action not in cfg.action_names:
            raise ConfigError(f"planted effect references unknown action "
                              f"{effect.action!r}")
        if effect.metric not in outcomes:
            raise ConfigError(f"planted effect references unknown metric "
                              f"{effect.metric!r}")
        in_range = _effect_mask(features[effect.feature], effect.q_lo, effect.q_hi)
        mask = in_range & (arms == effect.action)
        outcomes[effect.metric][mask] += effect.lift * lift_scale
        truth_effects.append({
            "feature": effect.feature, "q_lo": effect.q_lo, "q_hi": effect.q_hi,
            "action": effect.action, "metric": effect.metric,
            "lift": effect.lift * lift_scale,
            "n_in_range": int(in_range.sum()), "n_affected": int(mask.sum()),
        })
    if cfg.noise_sd > 0:
        for name in cfg.metric_names:
            outcomes[name] += rng.normal(0.0, cfg.noise_sd, n)

    users = tuple(
        UserRecord(
            user_id=user_ids[i],
            features={name: float(features[name][i]) for name in cfg.feature_names},
            arm=str(arms[i]),
            outcomes={name: float(outcomes[name][i]) for name in cfg.metric_names},
            day=int(days[i]) if days is not None else None,
        )
        for i in range(n)
    )
    dataset = ExperimentDataset(
        experiment_id=cfg.experiment_id,
        users=users,
        actions=cfg.action_names,
        control_action="a0",
        metrics=cfg.metric_names,
        features=cfg.feature_names,
    )
    truth = {
        "experiment_id": cfg.experiment_id,
        "seed": cfg.seed,
        "noise_sd": cfg.noise_sd,
        "lift_scale": lift_scale,
        "effects": truth_effects,
    }
    return dataset, truth


def generate_daily_slices(cfg: ScenarioConfig, n_days: int,
                          lift_schedule: Sequence[float] | None = None
                          ) -> list[ExperimentDataset]:
    """Independent per-day experiments with seed-derived randomness.

    `lift_schedule` scales the planted lifts per day (e.g. a decay to zero);
    default is stationary (1.0 every day).
    """
    if n_days < 1:
        raise ConfigError(f"n_days must be >= 1, got {n_days}")
    if lift_schedule is not None and len(lift_schedule) != n_days:
        raise ConfigError("lift_schedule length must equal n_days")
    seeds = np.random.SeedSequence(cfg.seed).generate_state(n_days)
    out = []
    for day in range(n_days):
        scale = 1.0 if lift_schedule is None else float(lift_schedule[day])
        day_cfg = replace(cfg, seed=int(seeds[day]), n_days=0,
                          experiment_id=f"{cfg.experiment_id}#day{day}")
        ds, _ = generate_experiment(day_cfg, lift_scale=scale)
        users = tuple(
            UserRecord(user_id=f"d{day:03d}.{u.user_id}", features=u.features,
                       arm=u.arm, outcomes=u.outcomes, day=day)
            for u in ds.users)
        out.append(ExperimentDataset(
            experiment_id=day_cfg.experiment_id, users=users,
            actions=ds.actions, control_action=ds.control_action,
            metrics=ds.metrics, features=ds.features, lift_units=ds.lift_units))
    return out


def stitch_days(slices: Sequence[ExperimentDataset],
                experiment_id: str | None = None) -> ExperimentDataset:
    """Concatenate per-day slices into one day-labelled dataset."""
    if not slices:
        raise ConfigError("no slices to stitch")
    first = slices[0]
    users = tuple(u for ds in slices for u in ds.users)
    return ExperimentDataset(
        experiment_id=experiment_id or first.experiment_id.split("#")[0],
        users=users, actions=first.actions, control_action=first.control_action,
        metrics=first.metrics, features=first.features, lift_units=first.lift_units)


def generate_snapshots(ds: ExperimentDataset, drift: DriftSpec, seed: int,
                       n_bins: int = 4, window_days: int = 180) -> FeatureSnapshotPair:
    """Snapshot pair whose measured quantile shift ratio matches the target.

    Exactly round(target * n) users get their t1 value re-drawn inside a
    different t0 quantile bucket; everyone else keeps their t0 value. Buckets
    are fixed from t0 cutpoints, so the measured ratio is moved/n.
    """
    rng = np.random.default_rng(seed)
    values = ds.feature_values(drift.feature)
    user_ids = ds.user_ids
    n = len(user_ids)
    cuts = interior_cutpoints(values, n_bins)
    n_buckets = len(cuts) + 1
    span = float(values.max() - values.min()) or 1.0
    # Buckets emptied by tied cutpoints cannot receive a value; skip them.
    reachable = [b for b in range(n_buckets)
                 if b == 0 or b == n_buckets - 1 or cuts[b] > cuts[b - 1]]

    t0 = {uid: float(v) for uid, v in zip(user_ids, values)}
    t1 = dict(t0)
    n_move = round(drift.target_shift_ratio * n)
    movers = rng.choice(n, size=n_move, replace=False)
    for row in sorted(int(i) for i in movers):
        uid = user_ids[row]
        current = bucket_index(t0[uid], cuts)
        choices = [b for b in reachable if b != current]
        target = int(choices[rng.integers(0, len(choices))])
        lower = cuts[target - 1] if target > 0 else None
        upper = cuts[target] if target < len(cuts) else None
        if lower is None:
            new_value = upper - span * float(rng.random())
        elif upper is None:
            new_value = lower + span * (float(rng.random()) + 1e-9)
        else:
            new_value = lower + (upper - lower) * float(rng.random())
            if new_value <= lower:
                new_value = upper
        t1[uid] = float(new_value)
    return FeatureSnapshotPair(feature=drift.feature, t0_values=t0, t1_values=t1,
                               window_days=window_days)


# -- canonical scenarios ---------------------------------------------------------


def conflict_scenario(seed: int = 7, n_users: int = 4000, noise_sd: float = 1.0,
                      n_days: int = 14) -> ScenarioConfig:
    """Two-metric conflict: one treatment helps active users' m1, the other
    helps inactive users' m2, and each harms the opposite metric for the
    other cohort. Globally uniform treatments are zero-sum; the cohort
    policy (a1 to active users, control elsewhere) lifts m1 and stays
    neutral on m2.
    """
    return ScenarioConfig(
        seed=seed, n_users=n_users, n_features=2, n_metrics=2, n_actions=2,
        noise_sd=noise_sd, n_days=n_days, experiment_id="conflict",
        planted_effects=(
            PlantedEffect("f1", 0.5, 1.0, "a1", "m1", 2.0),
            PlantedEffect("f1", 0.0, 0.5, "a1", "m2", -2.0),
            PlantedEffect("f1", 0.0, 0.5, "a2", "m1", -2.0),
            PlantedEffect("f1", 0.0, 0.5, "a2", "m2", 2.0),
        ),
        drift_specs=(DriftSpec("f1", 0.04), DriftSpec("f2", 0.03)),
    )


def drifted_scenario(seed: int = 11, n_users: int = 3000) -> ScenarioConfig:
    """One stable feature with a real effect plus one unstable feature with a
    tempting decoy effect; governance should keep only the stable one."""
    return ScenarioConfig(
        seed=seed, n_users=n_users, n_features=2, n_metrics=2, n_actions=2,
        noise_sd=1.0, n_days=14, experiment_id="drifted",
        planted_effects=(
            PlantedEffect("f1", 0.5, 1.0, "a1", "m1", 2.0),
            PlantedEffect("f2", 0.75, 1.0, "a2", "m1", 3.0),
        ),
        drift_specs=(DriftSpec("f1", 0.04), DriftSpec("f2", 0.50)),
    )


# -- benchmark -------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkConfig:
    """Benchmark shape: experiments x the five instruction kinds."""

    seed: int = 0
    n_experiments: int = 20
    n_users: int = 800
    n_features: int = 3
    n_metrics: int = 2
    n_actions: int = 2
    noise_sd: float = 1.0
    n_bins: int = 4
    policy_budget: int = 60

    def __post_init__(self):
        if self.n_experiments < 1:
            raise ConfigError("n_experiments must be >= 1")
        if self.n_metrics < 2:
            raise ConfigError("the benchmark instruction kinds need >= 2 metrics")

    @classmethod
    def from_mapping(cls, data) -> "BenchmarkConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class BenchmarkBundle:
    """Instructions, their oracle ground truths, and per-experiment policy
    tables ({policy_id: {metric: MetricEstimate}}) plus the evaluated
    candidates they came from."""

    instructions: list[InstructionSpec]
    ground_truths: list[GroundTruth]
    policy_tables: dict[str, dict[str, dict[str, MetricEstimate]]]
    policies: dict[str, list]
    metric_names: tuple[str, ...]


def _random_effects(rng: np.random.Generator, cfg: BenchmarkConfig
                    ) -> tuple[PlantedEffect, ...]:
    features = [f"f{i + 1}" for i in range(cfg.n_features)]
    actions = [f"a{i + 1}" for i in range(cfg.n_actions)]
    # A conflicting pair stretches the two-metric frontier so the Pareto set
    # stays comfortably larger than the 5 ground-truth slots.
    effects = [
        PlantedEffect("f1", 0.5, 1.0, actions[0], "m1", float(rng.uniform(1.5, 3.0))),
        PlantedEffect("f1", 0.5, 1.0, actions[0], "m2", -float(rng.uniform(1.0, 2.0))),
        PlantedEffect("f1", 0.0, 0.5, actions[-1], "m2", float(rng.uniform(1.5, 3.0))),
        PlantedEffect("f1", 0.0, 0.5, actions[-1], "m1", -float(rng.uniform(1.0, 2.0))),
    ]
    quartiles = (0.0, 0.25, 0.5, 0.75, 1.0)
    for _ in range(int(rng.integers(2, 5))):
        feature = features[int(rng.integers(1, len(features)))] if len(features) > 1 else "f1"
        lo = int(rng.integers(0, 4))
        hi = int(rng.integers(lo + 1, 5))
        effect = PlantedEffect(
            feature=feature, q_lo=quartiles[lo], q_hi=quartiles[hi],
            action=actions[int(rng.integers(0, len(actions)))],
            metric=f"m{int(rng.integers(1, cfg.n_metrics + 1))}",
            lift=float(rng.uniform(-2.5, 2.5)),
        )
        try:
            _check_contradictions([*effects, effect])
        except ConfigError:
            continue
        effects.append(effect)
    return tuple(effects)


def build_benchmark(cfg: BenchmarkConfig) -> BenchmarkBundle:
    """Generate experiments, search their policy spaces, and emit all five
    instruction kinds with oracle ground truths (default 20 x 5 = 100)."""
    seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.n_experiments)
    instructions: list[InstructionSpec] = []
    ground_truths: list[GroundTruth] = []
    tables: dict[str, dict[str, dict[str, MetricEstimate]]] = {}
    evaluated_by_experiment: dict[str, list] = {}
    metric_names: tuple[str, ...] = ()
    idx = 0
    for e in range(cfg.n_experiments):
        exp_seed = int(seeds[e])
        rng = np.random.default_rng([cfg.seed, e])
        scenario = ScenarioConfig(
            seed=exp_seed, n_users=cfg.n_users, n_features=cfg.n_features,
            n_metrics=cfg.n_metrics, n_actions=cfg.n_actions,
            noise_sd=cfg.noise_sd, experiment_id=f"exp{e:03d}",
            planted_effects=_random_effects(rng, cfg),
        )
        ds, _ = generate_experiment(scenario)
        cuts = enumerate_cuts(ds, CutEnumerationConfig(
            features=ds.features, n_bins=cfg.n_bins))
        policies = enumerate_policies(ds, cuts, budget=cfg.policy_budget,
                                      seed=exp_seed)
        evaluated = evaluate_policies(ds, policies, skip_unsupported=True)
        table = {p.policy_id: dict(p.estimates) for p in evaluated}
        tables[scenario.experiment_id] = table
        evaluated_by_experiment[scenario.experiment_id] = evaluated
        metric_names = ds.metrics

        primary, secondary = (("m1", "m2") if e % 2 == 0 else ("m2", "m1"))
        for kind in KINDS:
            instruction = InstructionSpec(
                kind=kind,
                primary_metric=primary,
                secondary_metric=None if kind == "single_metric" else secondary,
                experiment_id=scenario.experiment_id,
            )
            gt = ground_truth_oracle(instruction, table)
            gt.instruction_idx = idx
            instructions.append(instruction)
            ground_truths.append(gt)
            idx += 1
    return BenchmarkBundle(instructions=instructions, ground_truths=ground_truths,
                           policy_tables=tables,
                           policies=evaluated_by_experiment,
                           metric_names=metric_names)


def write_benchmark(bundle: BenchmarkBundle, out_dir: str | Path) -> dict[str, str]:
    """Write instructions.jsonl, ground_truth.json, and per-experiment policy
    tables under `out_dir`. Returns the artifact name map."""
    from .evaluation import save_ground_truths, save_instructions
    from .search import save_policy_table

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_instructions(out / "instructions.jsonl", bundle.instructions)
    save_ground_truths(out / "ground_truth.json", bundle.ground_truths)
    tables_dir = out / "policy_tables"
    tables_dir.mkdir(exist_ok=True)
    for experiment_id in sorted(bundle.policies):
        save_policy_table(tables_dir / f"{experiment_id}.csv",
                          bundle.policies[experiment_id], bundle.metric_names)
    return {"instructions": "instructions.jsonl",
            "ground_truth": "ground_truth.json",
            "policy_tables": "policy_tables"}
