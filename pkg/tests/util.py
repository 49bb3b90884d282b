"""Random games and commitments shared by the test modules."""

import numpy as np

from sigbsg.game import Game
from sigbsg.signaling import Commitment


def random_game(rng: np.random.Generator, M: int, N: int, K: int, low=-2.0, high=2.0) -> Game:
    L = rng.uniform(low, high, (M, N))
    F = rng.uniform(low, high, (K, M, N))
    mu = rng.dirichlet(np.ones(K))
    return Game(L, F, mu)


def random_commitment(rng: np.random.Generator, game: Game, signals: int | None = None) -> Commitment:
    S = signals or game.N + 1
    x = rng.dirichlet(np.ones(game.M))
    phi = rng.dirichlet(np.ones(S), size=(game.K, game.M))
    return Commitment.from_scheme(x, phi)
