"""Game data model, follower best responses and game-file ingestion."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

TOL = 1e-9


class GameError(ValueError):
    """Raised when a game document or game object is invalid."""


@dataclass(frozen=True)
class Game:
    """A Bayesian Stackelberg game with one leader type and K follower types.

    ``leader_payoff`` is M x N, ``follower_payoffs`` is K x M x N and ``prior``
    has length K.
    """

    leader_payoff: np.ndarray
    follower_payoffs: np.ndarray
    prior: np.ndarray
    leader_actions: tuple[str, ...] = field(default=())
    follower_actions: tuple[str, ...] = field(default=())
    type_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        L = np.array(self.leader_payoff, dtype=float)
        F = np.array(self.follower_payoffs, dtype=float)
        mu = np.array(self.prior, dtype=float)
        if L.ndim != 2 or L.shape[0] < 1 or L.shape[1] < 1:
            raise GameError(f"leader payoff must be a non-empty M x N matrix, got shape {L.shape}")
        if F.ndim != 3 or F.shape[1:] != L.shape or F.shape[0] < 1:
            raise GameError(f"follower payoffs must be K x {L.shape[0]} x {L.shape[1]}, got {F.shape}")
        if mu.shape != (F.shape[0],):
            raise GameError(f"prior must have length {F.shape[0]}, got shape {mu.shape}")
        if not (np.all(np.isfinite(L)) and np.all(np.isfinite(F)) and np.all(np.isfinite(mu))):
            raise GameError("payoffs and prior must be finite")
        if np.any(mu < 0):
            raise GameError("prior has a negative entry")
        if abs(mu.sum() - 1.0) > 1e-12:
            raise GameError(f"prior sums to {mu.sum()!r}, expected 1")
        for arr in (L, F, mu):
            arr.setflags(write=False)
        object.__setattr__(self, "leader_payoff", L)
        object.__setattr__(self, "follower_payoffs", F)
        object.__setattr__(self, "prior", mu)
        M, N = L.shape
        K = F.shape[0]
        names = {
            "leader_actions": (self.leader_actions, M, "i"),
            "follower_actions": (self.follower_actions, N, "j"),
            "type_names": (self.type_names, K, "theta"),
        }
        for attr, (given, n, stem) in names.items():
            given = tuple(given) or tuple(f"{stem}{k}" for k in range(n))
            if len(given) != n:
                raise GameError(f"{attr} has {len(given)} labels, expected {n}")
            object.__setattr__(self, attr, given)

    @property
    def M(self) -> int:
        return self.leader_payoff.shape[0]

    @property
    def N(self) -> int:
        return self.leader_payoff.shape[1]

    @property
    def K(self) -> int:
        return self.follower_payoffs.shape[0]

    def with_prior(self, prior: Sequence[float]) -> "Game":
        return Game(
            self.leader_payoff,
            self.follower_payoffs,
            np.asarray(prior, dtype=float),
            self.leader_actions,
            self.follower_actions,
            self.type_names,
        )

    def type_index(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            if not 0 <= name_or_index < self.K:
                raise GameError(f"type index {name_or_index} out of range")
            return int(name_or_index)
        try:
            return self.type_names.index(name_or_index)
        except ValueError:
            raise GameError(f"unknown type {name_or_index!r}") from None

    def to_document(self) -> dict:
        return {
            "leader_actions": list(self.leader_actions),
            "follower_actions": list(self.follower_actions),
            "leader_payoff": self.leader_payoff.tolist(),
            "types": [
                {"name": name, "prior": float(p), "follower_payoff": F.tolist()}
                for name, p, F in zip(self.type_names, self.prior, self.follower_payoffs)
            ],
        }


def make_belief(b: Sequence[float]) -> np.ndarray:
    """Validate a belief vector; tiny negative entries are clamped to zero."""
    arr = np.array(b, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise GameError("belief must be a non-empty vector")
    if np.any(arr < -1e-12):
        raise GameError(f"belief has negative entries: {arr}")
    arr = np.clip(arr, 0.0, None)
    if abs(arr.sum() - 1.0) > 1e-9:
        raise GameError(f"belief sums to {arr.sum()!r}")
    return arr


def _schema(name: str) -> dict:
    return json.loads(resources.files("sigbsg.schemas").joinpath(name).read_text())


def load_game(document: str | dict | Path) -> Game:
    """Parse and validate a game JSON document (text, dict or path)."""
    if isinstance(document, Path):
        document = document.read_text()
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise GameError(f"game document is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(document, _schema("game.schema.json"))
    except jsonschema.ValidationError as exc:
        raise GameError(f"schema violation: {exc.message}") from exc

    M = len(document["leader_actions"])
    N = len(document["follower_actions"])

    def matrix(rows, what):
        if len(rows) != M or any(len(r) != N for r in rows):
            raise GameError(f"{what} must be a {M}x{N} matrix")
        return np.array(rows, dtype=float)

    L = matrix(document["leader_payoff"], "leader_payoff")
    types = document["types"]
    F = np.stack([matrix(t["follower_payoff"], f"follower_payoff of {t['name']!r}") for t in types])
    mu = np.array([t["prior"] for t in types], dtype=float)
    if np.any(mu < 0):
        raise GameError("negative prior")
    total = mu.sum()
    if abs(total - 1.0) > 1e-6:
        raise GameError(f"priors sum to {total!r}, outside [1-1e-6, 1+1e-6]")
    mu = mu / total
    return Game(
        L,
        F,
        mu,
        tuple(document["leader_actions"]),
        tuple(document["follower_actions"]),
        tuple(t["name"] for t in types),
    )


def best_responses(game: Game, theta: int, beliefs: np.ndarray) -> np.ndarray:
    """Vectorised :func:`best_response` over the rows of ``beliefs``.

    Rows may be unnormalised (a posterior scaled by its signal probability);
    the tie tolerance is scaled by the row mass so that ties are judged on the
    normalised belief.
    """
    B = np.atleast_2d(np.asarray(beliefs, dtype=float))
    mass = np.maximum(B.sum(axis=1, keepdims=True), 0.0)
    fu = B @ game.follower_payoffs[theta]
    tied = fu >= fu.max(axis=1, keepdims=True) - TOL * mass
    lu = np.where(tied, B @ game.leader_payoff, -np.inf)
    best = tied & (lu >= lu.max(axis=1, keepdims=True) - TOL * mass)
    # argmax picks the first True, i.e. the lowest index among remaining ties
    return np.argmax(best, axis=1)


def best_response(game: Game, theta: int, b: np.ndarray) -> int:
    """Follower best response; ties go to the leader, then to the lowest index."""
    return int(best_responses(game, theta, b)[0])


def follower_value(game: Game, theta: int, b: np.ndarray) -> float:
    b = np.asarray(b, dtype=float)
    return float(b @ game.follower_payoffs[theta][:, best_response(game, theta, b)])


def leader_belief_value(game: Game, theta: int, b: np.ndarray) -> float:
    b = np.asarray(b, dtype=float)
    return float(b @ game.leader_payoff[:, best_response(game, theta, b)])


def running_example() -> Game:
    """The two-type market-entry game used throughout the tests and the CLI."""
    return load_game(resources.files("sigbsg.data").joinpath("market_entry.json").read_text())
