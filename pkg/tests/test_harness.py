import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procclust.clustering import Clustering, misclassification_rate
from procclust.distance import TruncationParams
from procclust.errors import InvalidParameterError
from procclust.generators import CoupledPair, MarkovSpec, RotationSpec
from procclust.harness import (
    ExperimentConfig,
    Source,
    TruncationSchedule,
    convergence_curve,
    corpus_mixing_bound,
    draw_corpus,
    is_coarsening,
    matching_rate,
    run_experiment,
)

A = MarkovSpec([[0.8, 0.2], [0.2, 0.8]], [0.25, 0.75])
B = MarkovSpec([[0.2, 0.8], [0.8, 0.2]], [0.25, 0.75])


def test_single_sample_always_matches():
    cfg = ExperimentConfig([Source(A, 1, "A")], [20, 40], trials=3)
    rep = run_experiment(cfg)
    assert [r.exact_match_rate for r in rep.records] == [1.0, 1.0]
    assert [r.n for r in rep.records] == [20, 40]


def test_duplicate_process_with_two_labels_warns():
    cfg = ExperimentConfig([Source(A, 2, "x"), Source(A, 2, "y")], [30], trials=2)
    rep = run_experiment(cfg)
    assert any("not identifiable" in w for w in rep.warnings)
    assert 0.0 <= rep.records[0].exact_match_rate <= 1.0


def test_k_mismatch_warns():
    cfg = ExperimentConfig([Source(A, 2, "x"), Source(B, 2, "y")], [30], k=3)
    assert any("differs" in w for w in cfg.warnings())


@pytest.mark.parametrize(
    "kwargs",
    [
        {"lengths": [40, 20]},
        {"lengths": [20, 20]},
        {"lengths": []},
        {"trials": 0},
        {"k": 5},
        {"algorithm": "kmeans"},
        {"estimator": "fast"},
        {"scheme": "hex"},
        {"algorithm": "threshold", "lengths": [4, 8]},
    ],
)
def test_invalid_configs_rejected_before_work(kwargs):
    base = {"sources": [Source(A, 2, "x"), Source(B, 2, "y")], "lengths": [20], "trials": 1}
    base.update(kwargs)
    with pytest.raises(InvalidParameterError):
        run_experiment(ExperimentConfig(**base))


def test_reports_are_reproducible_and_parallel_invariant():
    cfg = ExperimentConfig([Source(A, 2, "A"), Source(B, 2, "B")], [30, 60], trials=4, seed=5)
    one = [r.to_dict() for r in run_experiment(cfg).records]
    two = [r.to_dict() for r in run_experiment(cfg).records]
    par = [r.to_dict() for r in run_experiment(cfg, n_jobs=2).records]
    assert json.dumps(one) == json.dumps(two) == json.dumps(par)
    assert "wall_time" not in one[0]
    assert "wall_time" in run_experiment(cfg).records[0].to_dict(timing=True)


def test_known_k_records_call_counts_within_budget():
    cfg = ExperimentConfig([Source(A, 3, "A"), Source(B, 3, "B")], [50], trials=3)
    rec = run_experiment(cfg).records[0]
    assert rec.call_budget == 12
    assert rec.max_distance_calls <= rec.call_budget
    assert all(c <= rec.call_budget for c in rec.trial_calls)


def test_threshold_algorithm_uses_default_rule_and_is_monotone():
    cfg = ExperimentConfig([Source(A, 2, "A"), Source(B, 2, "B")], [64], trials=2, algorithm="threshold")
    rec = run_experiment(cfg).records[0]
    assert rec.threshold == pytest.approx(8 ** -0.25)
    assert rec.threshold_monotone is True
    assert rec.call_budget is None


def test_corpus_mixing_bound():
    cfg = ExperimentConfig([Source(A, 2, "A"), Source(B, 1, "B")], [64])
    ab = corpus_mixing_bound(cfg)
    # three independent two-state chains with |1 - 2p| = 0.6: 3 * 0.6**n / 4
    assert ab(2) == pytest.approx(3 * 0.36 / 4)
    assert corpus_mixing_bound(ExperimentConfig([Source(RotationSpec(0.3))], [64])) is None


def test_rates_and_records_are_well_formed():
    cfg = ExperimentConfig([Source(A, 2, "A"), Source(RotationSpec(0.3), 2, "R")], [20, 40, 80], trials=3)
    rep = run_experiment(cfg)
    assert len(rep.records) == 3
    for r in rep.records:
        assert 0.0 <= r.exact_match_rate <= 1.0
        assert 0.0 <= r.mean_misclassification <= 1.0
        assert len(r.trial_exact) == 3
    assert "exact" in rep.summary_table()


def test_rotation_processes_separated_by_known_k():
    cfg = ExperimentConfig(
        [Source(RotationSpec(0.1), 2, "slow"), Source(RotationSpec(0.45), 2, "fast"), Source(A, 2, "A")],
        [800],
        trials=5,
        seed=2,
    )
    assert run_experiment(cfg).records[0].exact_match_rate == 1.0


def test_coupled_sources_label_both_components():
    pair = CoupledPair([[0.8, 0.2], [0.2, 0.8]], [[0.7, 0.3], [0.3, 0.7]], [0.25, 0.75])
    cfg = ExperimentConfig([Source(pair, 2, "c")], [30])
    samples, labels = draw_corpus(cfg, 30, 0)
    assert labels == ["c/a", "c/b", "c/a", "c/b"]
    assert [s.id for s in samples] == ["c/a-0", "c/b-0", "c/a-1", "c/b-1"]
    assert cfg.target_k == 2


def test_samples_do_not_depend_on_corpus_size():
    small = ExperimentConfig([Source(A, 1, "A")], [30], seed=1)
    large = ExperimentConfig([Source(A, 3, "A"), Source(B, 2, "B")], [30], seed=1)
    assert np.array_equal(draw_corpus(small, 30, 0)[0][0].values, draw_corpus(large, 30, 0)[0][0].values)


def test_config_round_trip():
    cfg = ExperimentConfig(
        [Source(A, 2, "A"), Source(RotationSpec(0.3), 1, "R")],
        [20, 40],
        trials=2,
        estimator="truncated",
        truncation=TruncationSchedule(3, None, 10),
        seed=9,
    )
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()


def test_truncation_schedule():
    t = TruncationSchedule()
    assert t(1024) == TruncationParams(10, 10)
    assert t(4) == TruncationParams(1, 1)
    assert TruncationSchedule(2, None, 5)(64) == TruncationParams(2, 6, 5)


@settings(max_examples=100)
@given(a=st.lists(st.integers(0, 4), min_size=1, max_size=10), b=st.lists(st.integers(0, 4), min_size=10, max_size=10))
def test_matching_rate_agrees_with_brute_force(a, b):
    p, t = Clustering.from_labels(a), Clustering.from_labels(b[: len(a)])
    assert matching_rate(p, t) == pytest.approx(misclassification_rate(p, t), abs=1e-12)


def test_is_coarsening():
    fine = Clustering(((0,), (1,), (2, 3)), 4)
    assert is_coarsening(fine, Clustering(((0, 1), (2, 3)), 4))
    assert not is_coarsening(Clustering(((0, 2), (1, 3)), 4), Clustering(((0, 1), (2, 3)), 4))


def test_convergence_curve_same_process_shrinks():
    curve = convergence_curve(A, A, [50, 400, 3200], trials=10, seed=1)
    assert curve.reference is None
    assert curve.medians[0] > curve.medians[1] > curve.medians[2]


def test_convergence_curve_distinct_processes_reference():
    curve = convergence_curve(A, B, [100, 400], trials=5, seed=1)
    assert curve.reference_length == 4000
    assert curve.reference > 0.3
    assert abs(curve.medians[-1] - curve.reference) < 0.2 * curve.reference


def test_convergence_curve_truncated_estimator():
    exact = convergence_curve(A, B, [400], trials=3, seed=2, reference=False)
    trunc = convergence_curve(A, B, [400], trials=3, estimator=TruncationSchedule(), seed=2, reference=False)
    for e, t in zip(exact.values[0], trunc.values[0]):
        assert 0 <= e - t < 0.05
