import numpy as np
import pytest

from cohortpolicy.experiment import ExperimentDataset, MetricEstimate, UserRecord
from cohortpolicy.search import PolicyCandidate


def build_dataset(feature_values, arms, outcomes, *, feature="f1", metric="m1",
                  control="control", experiment_id="test", extra_metrics=None):
    """Tiny dataset factory: parallel lists of feature value, arm, outcome."""
    actions = sorted(set(arms) - {control})
    metrics = [metric, *(extra_metrics or {}).keys()]
    users = []
    for i, (value, arm, outcome) in enumerate(zip(feature_values, arms, outcomes)):
        user_outcomes = {metric: float(outcome)}
        for name, series in (extra_metrics or {}).items():
            user_outcomes[name] = float(series[i])
        users.append(UserRecord(
            user_id=f"u{i:03d}",
            features={feature: float(value)},
            arm=arm,
            outcomes=user_outcomes,
        ))
    return ExperimentDataset(
        experiment_id=experiment_id,
        users=tuple(users),
        actions=(control, *actions),
        control_action=control,
        metrics=tuple(metrics),
        features=(feature,),
    )


def make_policy(policy_id, means, std_errs=None, metrics=None):
    """Evaluated stand-in policy for frontier and search tests."""
    metrics = metrics or [f"m{i + 1}" for i in range(len(means))]
    std_errs = std_errs if std_errs is not None else [0.0] * len(means)
    estimates = {
        m: MetricEstimate(mean=float(mu), std_err=float(se), n_treated=1, n_control=1)
        for m, mu, se in zip(metrics, means, std_errs)
    }
    return PolicyCandidate(policy_id=policy_id, cut=None,
                           assignment=("a0",), estimates=estimates)


@pytest.fixture
def eight_user_dataset():
    """Feature values 1..8, alternating treatment/control arms."""
    values = [1, 2, 3, 4, 5, 6, 7, 8]
    arms = ["t1", "control"] * 4
    outcomes = [0.0] * 8
    return build_dataset(values, arms, outcomes)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
