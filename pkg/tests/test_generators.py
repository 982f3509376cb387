import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procclust.errors import InvalidParameterError, InvalidSpecError
from procclust.generators import (
    CoupledPair,
    MarkovSpec,
    RotationSpec,
    gen_coupled,
    gen_markov,
    gen_rotation,
    generate,
    markov_alpha_bound,
    rng_for,
    spec_from_dict,
)

STICKY = [[0.8, 0.2], [0.2, 0.8]]


def flip(p):
    return MarkovSpec([[1 - p, p], [p, 1 - p]], [0.0, 1.0])


def test_fair_coin_frequency():
    coin = MarkovSpec([[0.5, 0.5], [0.5, 0.5]], [0.0, 1.0])
    x = gen_markov(coin, 10000, seed=1).values
    assert set(np.unique(x)) <= {0.0, 1.0}
    assert abs(x.mean() - 0.5) < 0.02


@pytest.mark.parametrize(
    "transition",
    [
        [[1.0, 0.0], [0.0, 1.0]],  # reducible
        [[0.0, 1.0], [1.0, 0.0]],  # periodic
        [[0.5, 0.6], [0.5, 0.5]],  # not stochastic
        [[1.0]],  # one state
    ],
)
def test_non_ergodic_or_invalid_chains_rejected(transition):
    emissions = [0.0] * len(transition)
    with pytest.raises(InvalidSpecError):
        MarkovSpec(transition, emissions)


def test_emission_validation():
    with pytest.raises(InvalidSpecError):
        MarkovSpec(STICKY, [0.1])
    with pytest.raises(InvalidSpecError):
        MarkovSpec(STICKY, [(0.5, 0.1), 0.2])


def test_interval_emissions_stay_in_their_state_interval():
    spec = MarkovSpec(STICKY, [(0.0, 0.4), (0.6, 1.0)])
    x = gen_markov(spec, 2000, seed=4).values
    assert np.all(((x >= 0.0) & (x < 0.4)) | ((x >= 0.6) & (x < 1.0)))


def test_stationary_distribution():
    spec = MarkovSpec([[0.9, 0.1], [0.3, 0.7]], [0.0, 1.0])
    assert np.allclose(spec.stationary, [0.75, 0.25], atol=1e-12)


def test_initial_state_is_stationary():
    spec = MarkovSpec([[0.9, 0.1], [0.3, 0.7]], [0.0, 1.0])
    first = np.array([gen_markov(spec, 1, seed=9, sample_id=f"run{r}").values[0] for r in range(10000)])
    empirical = np.array([np.mean(first == 0.0), np.mean(first == 1.0)])
    assert 0.5 * np.abs(empirical - spec.stationary).sum() < 0.05


def test_markov_determinism_and_stream_independence():
    spec = MarkovSpec(STICKY, [0.25, 0.75])
    a = gen_markov(spec, 200, seed=3, sample_id="s")
    b = gen_markov(spec, 200, seed=3, sample_id="s")
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, gen_markov(spec, 200, seed=4, sample_id="s").values)
    assert not np.array_equal(a.values, gen_markov(spec, 200, seed=3, sample_id="t").values)
    assert not np.array_equal(a.values, gen_markov(spec, 200, seed=3, sample_id="s", stream=(1,)).values)


def test_rng_streams_are_pinned():
    # the PCG64 / SeedSequence derivation is part of the reproducibility contract
    assert rng_for(0, "x").random() == rng_for(0, "x").random()
    assert rng_for(0, 1).random() != rng_for(0, 2).random()


def test_rotation_examples():
    x = gen_rotation(RotationSpec(0.0), 50, seed=2).values
    assert np.all(x == x[0])
    y = gen_rotation(RotationSpec(0.6180339887), 10000, seed=2).values
    assert abs(y.mean() - 0.5) < 0.02
    assert np.all((y >= 0) & (y < 1))
    with pytest.raises(InvalidSpecError):
        RotationSpec(1.0)


@settings(max_examples=50)
@given(alpha=st.floats(0.0, 1.0, exclude_max=True), seed=st.integers(0, 2**32), n=st.integers(1, 500))
def test_rotation_outputs_in_unit_interval(alpha, seed, n):
    x = gen_rotation(RotationSpec(alpha), n, seed).values
    assert x.size == n
    assert np.all((x >= 0) & (x < 1))


def test_lengths_must_be_positive():
    with pytest.raises(InvalidParameterError):
        gen_markov(flip(0.3), 0, 1)
    with pytest.raises(InvalidParameterError):
        gen_rotation(RotationSpec(0.3), 0, 1)


def test_coupled_identical_parameterisations_give_equal_paths():
    pair = CoupledPair(STICKY, STICKY, [0.25, 0.75])
    a, b = gen_coupled(pair, 500, seed=5)
    assert np.array_equal(a.values, b.values)


def test_coupled_pair_is_reproducible_and_dependent():
    pair = CoupledPair(STICKY, [[0.7, 0.3], [0.3, 0.7]], [0.25, 0.75])
    a, b = gen_coupled(pair, 10000, seed=5)
    a2, b2 = gen_coupled(pair, 10000, seed=5)
    assert np.array_equal(a.values, a2.values) and np.array_equal(b.values, b2.values)
    assert not np.array_equal(a.values, b.values)
    assert abs(np.corrcoef(a.values, b.values)[0, 1]) > 0.1


def test_coupled_joint_law_is_stationary_with_correct_marginals():
    Pa = np.array([[0.9, 0.1], [0.3, 0.7]])
    Pb = np.array([[0.6, 0.4], [0.5, 0.5]])
    pair = CoupledPair(Pa, Pb, [0.0, 1.0])
    joint = pair.joint_stationary.reshape(2, 2)
    assert np.allclose(joint.sum(axis=1), MarkovSpec(Pa, [0, 1]).stationary, atol=1e-10)
    assert np.allclose(joint.sum(axis=0), MarkovSpec(Pb, [0, 1]).stationary, atol=1e-10)
    # one step of the coupled dynamics, estimated by simulation, preserves the law
    first = np.array([gen_coupled(pair, 2, seed=1, ids=(f"a{r}", f"b{r}")) for r in range(4000)], dtype=object)
    second = np.zeros((2, 2))
    for a, b in first:
        second[int(a.values[1]), int(b.values[1])] += 1
    assert 0.5 * np.abs(second / second.sum() - joint).sum() < 0.05


def test_coupled_rejects_mismatched_shapes():
    with pytest.raises(InvalidSpecError):
        CoupledPair(STICKY, [[0.2, 0.4, 0.4]] * 3, [0.0, 1.0])


def test_alpha_bound_examples():
    iid = MarkovSpec([[0.3, 0.7], [0.3, 0.7]], [0.0, 1.0])
    assert all(markov_alpha_bound(iid)(n) < 1e-15 for n in range(1, 20))
    assert markov_alpha_bound(flip(0.3))(1) == pytest.approx(0.1, abs=1e-12)


@given(p=st.floats(0.01, 0.99), n=st.integers(1, 60))
def test_alpha_bound_dominates_symmetric_closed_form(p, n):
    bound = markov_alpha_bound(flip(p))
    # alpha(n) >= |P(X_0 = 0, X_n = 0) - 1/4| = |1 - 2p|^n / 4 for this family,
    # and the bound attains it
    exact = abs(1 - 2 * p) ** n / 4
    assert bound(n) >= exact - 1e-12
    assert bound(n) == pytest.approx(exact, abs=1e-12)
    assert bound(n + 1) <= bound(n)


def test_generate_dispatch_and_round_trip():
    specs = [
        MarkovSpec(STICKY, [(0.0, 0.5), 0.75]),
        RotationSpec(0.3),
        CoupledPair(STICKY, [[0.7, 0.3], [0.3, 0.7]], [0.25, 0.75]),
    ]
    for spec in specs:
        again = spec_from_dict(spec.to_dict())
        assert again.to_dict() == spec.to_dict()
    assert generate(specs[1], 5, 0).values.size == 5
    with pytest.raises(InvalidSpecError):
        generate(specs[2], 5, 0)
    with pytest.raises(InvalidSpecError):
        spec_from_dict({"kind": "walk"})
    with pytest.raises(InvalidSpecError):
        spec_from_dict({"kind": "markov", "transition": STICKY})
