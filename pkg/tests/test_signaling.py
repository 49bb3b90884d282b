import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigbsg.fixtures import example_beliefs
from sigbsg.game import running_example
from sigbsg.geometry import build_belief_atlas, consistency_residual, enumerate_vertices, joint_region
from sigbsg.signaling import (
    BeliefDistribution,
    Commitment,
    InconsistentBeliefsError,
    beliefs_to_commitment,
    choose_report,
    commitment_to_beliefs,
    convex_decompose,
    leader_objective,
    leader_report_value,
    optimal_report,
    optimal_reports,
    reduce_to_atlas,
    report_value,
    report_values,
)

from util import random_commitment, random_game

THETA1, THETA2 = 0, 1


def test_worked_example_values(market):
    pi = example_beliefs()
    # truthful: theta1 leaves at (0,2/3,1/3) only, theta2 stays uninformed and leaves
    assert leader_objective(market, pi, truthful=True) == pytest.approx(0.8625, abs=1e-12)
    assert leader_objective(market, pi) == pytest.approx(0.525, abs=1e-12)


def test_worked_example_reports(market):
    pi = example_beliefs()
    assert report_value(market, pi, THETA1, THETA2) == pytest.approx(0.25, abs=1e-12)
    assert report_value(market, pi, THETA2, THETA2) == pytest.approx(0.0, abs=1e-12)
    assert leader_report_value(market, pi, THETA1, THETA2) == pytest.approx(0.25, abs=1e-12)
    assert optimal_report(market, pi, THETA2) == THETA1
    # theta1 is indifferent and keeps the truth
    assert optimal_report(market, pi, THETA1) == THETA1
    assert optimal_reports(market, pi) == [THETA1, THETA1]


def test_worked_example_commitment_round_trip(market):
    pi = example_beliefs()
    sigma = beliefs_to_commitment(market, pi)
    np.testing.assert_allclose(sigma.x, [0, 0.5, 0.5], atol=1e-15)
    assert sigma.C.shape[2] >= market.N
    back = commitment_to_beliefs(market, sigma)
    assert leader_objective(market, back) == pytest.approx(0.525, abs=1e-12)


def test_choose_report_rules():
    assert choose_report([1.0, 1.0, 0.0], 1) == 1  # truth wins ties
    assert choose_report([1.0, 1.0, 0.0], 2) == 0  # otherwise the smallest index
    assert choose_report([0.0, 2.0, 2.0], 0) == 1
    assert choose_report([0.0, 1.0 + 5e-10, 1.0], 2) == 2  # within tolerance


def test_commitment_validation():
    with pytest.raises(ValueError, match="sums"):
        Commitment([0.5, 0.6], np.zeros((1, 2, 2)))
    with pytest.raises(ValueError, match="marginals"):
        Commitment([0.5, 0.5], [[[0.5, 0.0], [0.2, 0.2]]])
    with pytest.raises(ValueError, match="negative"):
        Commitment([1.5, -0.5], [[[1.5, 0.0], [-0.5, 0.0]]])


def test_belief_distribution_validation():
    with pytest.raises(ValueError):
        BeliefDistribution(([[1, 0]],), ([0.5],))
    with pytest.raises(ValueError):
        BeliefDistribution(([[1, 0], [0, 1]],), ([0.5],))


def test_inconsistent_beliefs_rejected(market):
    pi = BeliefDistribution(([[1, 0, 0]], [[0, 1, 0]]), ([1.0], [1.0]))
    with pytest.raises(InconsistentBeliefsError):
        beliefs_to_commitment(market, pi)


def test_uninformative_commitment(market):
    sigma = Commitment.uninformative(market, [1 / 3, 2 / 3, 0])
    pi = commitment_to_beliefs(market, sigma)
    assert all(P.shape[0] == 1 for P in pi.points)
    # the baseline commitment: theta1 is indifferent and leaves, theta2 enters
    assert leader_objective(market, pi) == pytest.approx(0.55, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_commitment_beliefs_round_trip(seed):
    rng = np.random.default_rng(seed)
    game = random_game(rng, 3, 2, 2)
    sigma = random_commitment(rng, game)
    pi = commitment_to_beliefs(game, sigma)
    assert consistency_residual(pi) <= 1e-12
    np.testing.assert_allclose(pi.expected_beliefs()[0], sigma.x, atol=1e-12)
    again = commitment_to_beliefs(game, beliefs_to_commitment(game, pi))
    U1, V1 = report_values(game, pi)
    U2, V2 = report_values(game, again)
    np.testing.assert_allclose(U1, U2, atol=1e-12)
    np.testing.assert_allclose(V1, V2, atol=1e-12)


def test_signals_merge_identical_posteriors(market):
    x = np.array([0.2, 0.3, 0.5])
    # two signals with the same posterior collapse into one support point
    C = np.stack([np.stack([x * 0.4, x * 0.6], axis=1)] * 2)
    pi = commitment_to_beliefs(market, Commitment(x, C))
    assert pi.points[0].shape[0] == 1
    assert pi.weights[0][0] == pytest.approx(1.0)


def test_convex_decompose(market):
    region = joint_region(market, (1, 1))
    verts = enumerate_vertices(region)
    b = np.array([0.2, 0.5, 0.3])
    w = convex_decompose(b, region, verts)
    assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(w @ verts, b, atol=1e-12)
    with pytest.raises(ValueError):
        convex_decompose([0, 0, 1], region, verts)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reduction_keeps_follower_values_and_reports(seed):
    rng = np.random.default_rng(seed)
    game = running_example()
    atlas = build_belief_atlas(game)
    pi = commitment_to_beliefs(game, random_commitment(rng, game))
    red = reduce_to_atlas(game, pi, atlas)
    U, V = report_values(game, pi)
    Ur, Vr = report_values(game, red)
    np.testing.assert_allclose(Ur, U, atol=1e-9)
    assert optimal_reports(game, red) == optimal_reports(game, pi)
    assert consistency_residual(red, atlas) <= 1e-9
    # region vertices are ties where the follower favours the leader
    assert np.all(Vr >= V - 1e-9)


def test_reduction_can_raise_leader_value(market):
    """At b = (0, .6, .4) both types enter, but the reduced support sits on ties where they leave."""
    b = [0, 0.6, 0.4]
    pi = BeliefDistribution(([b], [b]), ([1.0], [1.0]))
    red = reduce_to_atlas(market, pi, build_belief_atlas(market))
    U, V = report_values(market, pi)
    Ur, Vr = report_values(market, red)
    np.testing.assert_allclose(Ur, U, atol=1e-12)
    np.testing.assert_allclose(V, 0.0)
    # weights .6 on (0,2/3,1/3) and .4 on (0,1/2,1/2)
    np.testing.assert_allclose(Vr, [[0.6, 0.4], [0.6, 0.4]], atol=1e-12)
