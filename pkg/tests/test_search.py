import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohortpolicy.errors import ConfigError, EstimationError
from cohortpolicy.experiment import compute_ate
from cohortpolicy.search import (WeightVector, collect_candidates,
                                 enumerate_policies, evaluate_policies,
                                 evaluate_policy, global_policies,
                                 load_policy_table, sample_weights,
                                 save_policy_table, scalarized_score)
from cohortpolicy.segmentation import CutSpec, enumerate_cuts

from conftest import build_dataset, make_policy


def two_arm_dataset(n=16, outcome=None):
    values = list(range(1, n + 1))
    arms = ["a1", "a0"] * (n // 2)
    outcomes = outcome if outcome is not None else [0.0] * n
    return build_dataset(values, arms, outcomes, control="a0")


# -- enumeration -------------------------------------------------------------------


def test_binary_cut_full_cross_product():
    ds = two_arm_dataset()
    cut = CutSpec(feature="f1", kind="binary", n_bins=4, threshold_index=2)
    policies = enumerate_policies(ds, [cut], budget=64, seed=0)
    assert len(policies) == 4  # 2 slots x 2 actions
    assignments = {p.assignment for p in policies}
    assert assignments == set(itertools.product(("a0", "a1"), repeat=2))


def test_budget_sampling_keeps_all_control():
    ds = two_arm_dataset()
    cut = CutSpec(feature="f1", kind="individual", n_bins=4)
    policies = enumerate_policies(ds, [cut], budget=10, seed=5)
    assert len(policies) == 10  # clamped; 2^4 = 16 > 10
    assert ("a0", "a0", "a0", "a0") in {p.assignment for p in policies}


def test_empty_cuts_give_global_policies():
    ds = two_arm_dataset()
    policies = enumerate_policies(ds, [], budget=10)
    assert [p.policy_id for p in policies] == ["global.a0", "global.a1"]


def test_budget_below_one_errors():
    ds = two_arm_dataset()
    with pytest.raises(ConfigError):
        enumerate_policies(ds, [], budget=0)


def test_enumeration_deterministic():
    ds = two_arm_dataset()
    cuts = enumerate_cuts(ds, {"features": ["f1"], "N": 4})
    a = enumerate_policies(ds, cuts, budget=10, seed=42)
    b = enumerate_policies(ds, cuts, budget=10, seed=42)
    assert [p.policy_id for p in a] == [p.policy_id for p in b]


# -- evaluation --------------------------------------------------------------------


def test_all_control_policy_zero_lift():
    ds = two_arm_dataset(outcome=list(range(16)))
    cut = CutSpec(feature="f1", kind="binary", n_bins=4, threshold_index=2)
    policy = next(p for p in enumerate_policies(ds, [cut], budget=64)
                  if p.assignment == ("a0", "a0"))
    result = evaluate_policy(ds, policy)
    assert result.estimates["m1"].mean == 0.0
    assert result.estimates["m1"].std_err == 0.0


def test_single_segment_policy_equals_ate(rng):
    outcomes = rng.normal(size=16)
    ds = two_arm_dataset(outcome=list(outcomes))
    policy = global_policies(ds)[1]
    assert policy.assignment == ("a1",)
    result = evaluate_policy(ds, policy)
    assert result.estimates["m1"] == compute_ate(ds, "a1", "m1")


def test_equal_halves_cancel():
    # low half: HTE +2, high half: HTE -2, equal sizes -> policy mean 0
    outcomes = []
    for i in range(16):
        treated = i % 2 == 0
        low = i < 8
        outcomes.append((2.0 if low else -2.0) if treated else 0.0)
    ds = two_arm_dataset(outcome=outcomes)
    cut = CutSpec(feature="f1", kind="binary", n_bins=2, threshold_index=1)
    policy = next(p for p in enumerate_policies(ds, [cut], budget=64)
                  if p.assignment == ("a1", "a1"))
    result = evaluate_policy(ds, policy)
    assert result.estimates["m1"].mean == pytest.approx(0.0, abs=1e-12)


def test_policy_std_err_composes_segment_variances(rng):
    outcomes = rng.normal(size=16)
    ds = two_arm_dataset(outcome=list(outcomes))
    cut = CutSpec(feature="f1", kind="binary", n_bins=2, threshold_index=1)
    policy = next(p for p in enumerate_policies(ds, [cut], budget=64)
                  if p.assignment == ("a1", "a1"))
    result = evaluate_policy(ds, policy)

    from cohortpolicy.experiment import segment_hte
    from cohortpolicy.segmentation import binary_split
    low, high = binary_split(ds, "f1", 1, 2)
    se_low = segment_hte(ds, low, "a1", "m1").std_err
    se_high = segment_hte(ds, high, "a1", "m1").std_err
    expected = ((0.5 * se_low) ** 2 + (0.5 * se_high) ** 2) ** 0.5
    assert result.estimates["m1"].std_err == pytest.approx(expected, abs=1e-12)


def test_unsupported_segment_errors():
    # all treated users in the low half: the high slot has no treated members
    values = list(range(1, 9))
    arms = ["a1", "a1", "a0", "a0", "a0", "a0", "a0", "a0"]
    ds = build_dataset(values, arms, [0.0] * 8, control="a0")
    cut = CutSpec(feature="f1", kind="binary", n_bins=2, threshold_index=1)
    policy = next(p for p in enumerate_policies(ds, [cut], budget=64)
                  if p.assignment == ("a0", "a1"))
    with pytest.raises(EstimationError, match="slot 1"):
        evaluate_policy(ds, policy)


def test_evaluate_policies_batch_matches_single(rng):
    outcomes = rng.normal(size=16)
    ds = two_arm_dataset(outcome=list(outcomes))
    cuts = enumerate_cuts(ds, {"features": ["f1"], "N": 4})
    policies = enumerate_policies(ds, cuts, budget=16, seed=1)
    batch = evaluate_policies(ds, policies)
    for policy, from_batch in zip(policies, batch):
        assert evaluate_policy(ds, policy).estimates == from_batch.estimates


def test_evaluate_policies_thread_count_irrelevant(rng):
    outcomes = rng.normal(size=16)
    ds = two_arm_dataset(outcome=list(outcomes))
    cuts = enumerate_cuts(ds, {"features": ["f1"], "N": 4})
    policies = enumerate_policies(ds, cuts, budget=16, seed=1)
    one = evaluate_policies(ds, policies, threads=1)
    four = evaluate_policies(ds, policies, threads=4)
    assert [p.estimates for p in one] == [p.estimates for p in four]


# -- weights -----------------------------------------------------------------------


def test_weights_single_metric():
    for w in sample_weights(1, 5, seed=3):
        assert w.weights == (1.0,)


def test_weights_deterministic():
    assert sample_weights(3, 100, seed=7) == sample_weights(3, 100, seed=7)


def test_weights_uniform_on_simplex():
    weights = sample_weights(2, 10000, seed=13)
    first = np.array([w.weights[0] for w in weights])
    assert abs(first.mean() - 0.5) < 0.02


def test_weights_validate():
    weights = sample_weights(4, 50, seed=1)
    for w in weights:
        assert all(x >= 0 for x in w.weights)
        assert abs(sum(w.weights) - 1.0) <= 1e-9
    with pytest.raises(ValueError):
        WeightVector((0.5, 0.6))
    with pytest.raises(ValueError):
        WeightVector((-0.1, 1.1))


# -- scalarized score ---------------------------------------------------------------


def test_score_one_hot_projection():
    policy = make_policy("p", [1.0, 2.0])
    assert scalarized_score(policy, WeightVector((0.0, 1.0))) == 2.0


def test_score_even_mix():
    policy = make_policy("p", [1.0, 2.0])
    assert scalarized_score(policy, WeightVector((0.5, 0.5))) == 1.5


def test_score_zero_everywhere():
    policy = make_policy("p", [0.0, 0.0, 0.0])
    for w in sample_weights(3, 10, seed=2):
        assert scalarized_score(policy, w) == 0.0


def test_score_missing_estimate_errors():
    policy = make_policy("p", [1.0])
    with pytest.raises(ValueError):
        scalarized_score(policy, WeightVector((0.5, 0.5)), metrics=["m1", "m2"])


@settings(max_examples=40)
@given(st.floats(0, 1))
def test_score_linear_in_weights(alpha):
    policy = make_policy("p", [0.3, -1.7])
    w1, w2 = WeightVector((1.0, 0.0)), WeightVector((0.0, 1.0))
    mixed = WeightVector((alpha, 1.0 - alpha))
    expected = (alpha * scalarized_score(policy, w1)
                + (1 - alpha) * scalarized_score(policy, w2))
    assert scalarized_score(policy, mixed) == pytest.approx(expected, abs=1e-12)


# -- candidate collection -------------------------------------------------------------


def test_top_k_saturates():
    policies = [make_policy(f"p{i}", [float(i), float(-i)]) for i in range(5)]
    weights = sample_weights(2, 20, seed=4)
    result = collect_candidates(policies, weights, top_k=10)
    assert result.policy_ids == sorted(p.policy_id for p in policies)


def test_dominant_policy_always_wins():
    rng = np.random.default_rng(8)
    policies = [make_policy(f"p{i:02d}", list(rng.uniform(-1, 0, size=3)))
                for i in range(20)]
    policies.append(make_policy("winner", [1.0, 1.0, 1.0]))
    weights = sample_weights(3, 50, seed=9)
    result = collect_candidates(policies, weights, top_k=1)
    assert result.policy_ids == ["winner"]
    # brute force: the dominant policy maximizes every scalarization
    for w in weights:
        scores = {p.policy_id: scalarized_score(p, w) for p in policies}
        assert max(scores, key=scores.get) == "winner"


def test_tie_broken_by_ascending_id():
    policies = [make_policy("b", [1.0, 1.0]), make_policy("a", [1.0, 1.0])]
    weights = sample_weights(2, 5, seed=10)
    result = collect_candidates(policies, weights, top_k=1)
    assert result.policy_ids == ["a"]


def test_collection_invariant_to_input_order():
    rng = np.random.default_rng(12)
    policies = [make_policy(f"p{i:02d}", list(rng.normal(size=2)))
                for i in range(30)]
    weights = sample_weights(2, 25, seed=12)
    forward = collect_candidates(policies, weights, top_k=3)
    backward = collect_candidates(policies[::-1], weights, top_k=3)
    assert forward.policy_ids == backward.policy_ids
    assert forward.provenance == backward.provenance


def test_provenance_records_ranks():
    policies = [make_policy("a", [2.0]), make_policy("b", [1.0]),
                make_policy("c", [0.0])]
    weights = [WeightVector((1.0,))]
    result = collect_candidates(policies, weights, top_k=2)
    assert result.provenance == {"a": [(0, 1)], "b": [(0, 2)]}


def test_rank_one_policies_weakly_pareto_optimal():
    from cohortpolicy.frontier import strict_pareto_oracle
    rng = np.random.default_rng(21)
    policies = [make_policy(f"p{i:02d}", list(rng.normal(size=3)))
                for i in range(40)]
    weights = sample_weights(3, 60, seed=22)
    result = collect_candidates(policies, weights, top_k=4)
    pareto = strict_pareto_oracle(policies)
    rank_one = {pid for pid, pairs in result.provenance.items()
                if any(rank == 1 for _, rank in pairs)}
    assert rank_one <= pareto


# -- table persistence ----------------------------------------------------------------


def test_policy_table_round_trip(tmp_path, rng):
    outcomes = rng.normal(size=16)
    ds = two_arm_dataset(outcome=list(outcomes))
    cuts = enumerate_cuts(ds, {"features": ["f1"], "N": 4})
    policies = evaluate_policies(ds, enumerate_policies(ds, cuts, budget=16))
    path = tmp_path / "table.csv"
    save_policy_table(path, policies, ds.metrics)
    table, metrics = load_policy_table(path)
    assert metrics == list(ds.metrics)
    assert set(table) == {p.policy_id for p in policies}
    for policy in policies:
        for metric in metrics:
            loaded = table[policy.policy_id][metric]
            assert loaded.mean == policy.estimates[metric].mean
            assert loaded.std_err == policy.estimates[metric].std_err
