import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from sigbsg.equilibrium import (
    brute_force_oracle,
    build_candidate_set,
    ic_residuals,
    solve_bse,
    solve_eps_sigbse,
    solve_sig_lp,
    uninformative_value,
)
from sigbsg.game import Game
from sigbsg.geometry import build_belief_atlas, partition_polytope
from sigbsg.signaling import commitment_to_beliefs, leader_objective

from util import random_game


def ic_lp_by_deviation_maps(game: Game, mu=None) -> float:
    """The IC program with one row per misreport and per map from signals to actions."""
    mu = game.prior if mu is None else np.asarray(mu)
    M, N, K = game.M, game.N, game.K
    n = M + K * M * N

    def ci(k, i, j):
        return M + (k * M + i) * N + j

    c = np.zeros(n)
    for k, i, j in itertools.product(range(K), range(M), range(N)):
        c[ci(k, i, j)] = -mu[k] * game.leader_payoff[i, j]
    A_eq = [np.r_[np.ones(M), np.zeros(n - M)]]
    b_eq = [1.0]
    for k, i in itertools.product(range(K), range(M)):
        row = np.zeros(n)
        row[i] = -1
        for j in range(N):
            row[ci(k, i, j)] = 1
        A_eq.append(row)
        b_eq.append(0.0)
    A_ub = []
    for k in range(K):
        F = game.follower_payoffs[k]
        for j, jp in itertools.permutations(range(N), 2):
            row = np.zeros(n)
            for i in range(M):
                row[ci(k, i, j)] = F[i, jp] - F[i, j]
            A_ub.append(row)
    for t, h in itertools.permutations(range(K), 2):
        F = game.follower_payoffs[t]
        for f in itertools.product(range(N), repeat=N):
            row = np.zeros(n)
            for i, j in itertools.product(range(M), range(N)):
                row[ci(t, i, j)] -= F[i, j]
                row[ci(h, i, j)] += F[i, f[j]]
            A_ub.append(row)
    res = linprog(c, A_ub=np.array(A_ub) if A_ub else None, b_ub=np.zeros(len(A_ub)) if A_ub else None,
                  A_eq=np.array(A_eq), b_eq=b_eq, bounds=(0, None), method="highs")
    assert res.status == 0
    return -res.fun


def bse_grid(game: Game, steps: int = 1000) -> float:
    """Best commitment on a grid of two-action mixed strategies."""
    best = -np.inf
    for a in np.linspace(0, 1, steps + 1):
        best = max(best, uninformative_value(game, [a, 1 - a]))
    return best


def test_market_bse(market):
    res = solve_bse(market)
    assert res.value == pytest.approx(0.55, abs=1e-12)
    np.testing.assert_allclose(res.commitment.x, [1 / 3, 2 / 3, 0], atol=1e-9)
    assert res.certificate["responses"] == [0, 1]


def test_market_sig_lp(market):
    res = solve_sig_lp(market)
    # 171/220, confirmed by the deviation-map program
    assert res.value == pytest.approx(171 / 220, abs=1e-9)
    assert ic_lp_by_deviation_maps(market) == pytest.approx(171 / 220, abs=1e-9)
    obedience, ic = ic_residuals(market, res.commitment)
    assert obedience >= -1e-9 and ic >= -1e-9
    np.testing.assert_allclose(res.commitment.x, [1 / 11, 6 / 11, 4 / 11], atol=1e-7)


def test_sig_lp_with_point_prior(market):
    # a sure theta1 follower: the leader can always play i0 or i1 and keep the follower out
    assert solve_sig_lp(market, [1.0, 0.0]).value == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(2, 3), st.integers(1, 3))
def test_sig_lp_matches_deviation_map_program(seed, M, N, K):
    game = random_game(np.random.default_rng(seed), M, N, K)
    assert solve_sig_lp(game).value == pytest.approx(ic_lp_by_deviation_maps(game), abs=1e-7)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(1, 2))
def test_bse_against_grid(seed, N, K):
    game = random_game(np.random.default_rng(seed), 2, N, K)
    bse = solve_bse(game).value
    grid = bse_grid(game)
    assert grid <= bse + 1e-9
    # inside a response interval the value is 2-Lipschitz in the l1 norm and grid points are 1e-3 apart
    assert bse - grid <= 2e-3 + 1e-9


def test_bse_value_is_attained(market):
    res = solve_bse(market)
    assert uninformative_value(market, res.commitment.x) == pytest.approx(res.value, abs=1e-9)


@pytest.mark.parametrize("method", ["lp", "enumerate"])
def test_market_eps(market, method):
    res = solve_eps_sigbse(market, 1e-3, method=method)
    assert res.value == pytest.approx(171 / 220, abs=1e-3)
    assert res.diagnostics["within_bound"]
    # the reported value is what the commitment delivers
    pi = commitment_to_beliefs(market, res.commitment)
    assert leader_objective(market, pi) == pytest.approx(res.value, abs=1e-9)


def test_eps_rejects_bad_arguments(market):
    with pytest.raises(ValueError):
        solve_eps_sigbse(market, 0.0)
    with pytest.raises(ValueError):
        solve_eps_sigbse(market, 1e-3, method="simplex")


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_eps_methods_agree(seed):
    game = random_game(np.random.default_rng(seed), 2, 2, 2)
    a = solve_eps_sigbse(game, 1e-4, method="lp").value
    b = solve_eps_sigbse(game, 1e-4, method="enumerate").value
    assert a == pytest.approx(b, abs=1e-4)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(2, 3))
def test_single_type_signaling_equals_bse(seed, M, N):
    # with one follower type signaling cannot beat the commitment itself
    game = random_game(np.random.default_rng(seed), M, N, 1)
    bse = solve_bse(game).value
    assert solve_sig_lp(game).value == pytest.approx(bse, abs=1e-7)
    assert solve_eps_sigbse(game, 1e-6).value == pytest.approx(bse, abs=1e-6)


def test_candidate_set_members_are_in_their_pieces(market):
    atlas = build_belief_atlas(market)
    cands = build_candidate_set(market, atlas, 1e-3)
    assert len(cands) > 0
    for c in cands.members:
        assert partition_polytope(market, atlas, c.gamma).contains(c.weights.ravel(), tol=1e-10) or c.step == 0.0
        assert np.allclose(c.weights.sum(axis=1), 1.0)


def test_brute_force_grid_values(market):
    coarse = brute_force_oracle(market, 1 / 4)
    fine = brute_force_oracle(market, 1 / 8)
    assert coarse == pytest.approx(0.6375, abs=1e-12)
    assert fine == pytest.approx(0.7359375, abs=1e-12)
    assert coarse <= fine <= solve_eps_sigbse(market, 1e-4).value + 1e-4


def test_brute_force_rejects_bad_resolution(market):
    with pytest.raises(ValueError):
        brute_force_oracle(market, 0.3)
    with pytest.raises(ValueError):
        brute_force_oracle(market, 1 / 64, cap=10)


def test_solve_result_json(market):
    doc = solve_eps_sigbse(market, 1e-3).to_json(market)
    assert doc["mode"] == "eps"
    assert set(doc["commitment"]["C"]) == {"theta1", "theta2"}
    assert "beliefs" in doc["commitment"]
