"""Signaling commitments, belief distributions and the utilities they induce.

A commitment ``(x, C)`` fixes a mixed strategy ``x`` and, for every reported
type, a joint distribution ``C[k, i, s]`` over the leader action ``i`` and the
signal ``s``.  Equivalently it fixes, per reported type, a finitely supported
distribution over posterior beliefs whose mean is ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import lp
from .game import TOL, Game, best_responses
from .geometry import BeliefAtlas, Polytope, enumerate_vertices, joint_region

MERGE_TOL = 1e-9
SIGNAL_TOL = 1e-12


class InconsistentBeliefsError(ValueError):
    """Types' expected posteriors disagree, so no single mixed strategy fits."""


@dataclass(frozen=True)
class Commitment:
    """Mixed strategy ``x`` (length M) and correlation tensor ``C`` (K x M x S)."""

    x: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        C = np.asarray(self.C, dtype=float)
        if C.ndim != 3 or C.shape[1] != x.shape[0]:
            raise ValueError(f"C must be K x {x.shape[0]} x S, got {C.shape}")
        if np.any(x < -TOL) or np.any(C < -TOL):
            raise ValueError("commitment has negative probabilities")
        if abs(x.sum() - 1.0) > TOL:
            raise ValueError(f"mixed strategy sums to {x.sum()!r}")
        marg = np.abs(C.sum(axis=2) - x[None, :]).max()
        if marg > TOL:
            raise ValueError(f"row marginals of C differ from x by {marg:.3g}")
        object.__setattr__(self, "x", np.clip(x, 0.0, None))
        object.__setattr__(self, "C", np.clip(C, 0.0, None))

    @classmethod
    def uninformative(cls, game: Game, x, signal: int = 0) -> "Commitment":
        x = np.asarray(x, dtype=float)
        C = np.zeros((game.K, game.M, game.N))
        C[:, :, signal] = x
        return cls(x, C)

    @classmethod
    def from_scheme(cls, x, phi) -> "Commitment":
        """Build from ``phi[k, i, s]`` = P(signal s | action i, report k)."""
        x = np.asarray(x, dtype=float)
        phi = np.asarray(phi, dtype=float)
        return cls(x, x[None, :, None] * phi)

    def to_json(self, game: Game) -> dict:
        return {
            "x": self.x.tolist(),
            "C": {name: self.C[k].tolist() for k, name in enumerate(game.type_names)},
        }


@dataclass(frozen=True)
class BeliefDistribution:
    """Per reported type, posteriors (rows of ``points[k]``) with probabilities ``weights[k]``."""

    points: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.points) != len(self.weights) or not self.points:
            raise ValueError("need one support per type")
        pts, ws = [], []
        for P, w in zip(self.points, self.weights):
            P = np.atleast_2d(np.asarray(P, dtype=float))
            w = np.asarray(w, dtype=float).reshape(-1)
            if P.shape[0] != w.shape[0]:
                raise ValueError("support points and weights disagree in length")
            if np.any(w < -TOL):
                raise ValueError("negative weight")
            if abs(w.sum() - 1.0) > TOL:
                raise ValueError(f"weights sum to {w.sum()!r}")
            pts.append(P)
            ws.append(np.clip(w, 0.0, None))
        object.__setattr__(self, "points", tuple(pts))
        object.__setattr__(self, "weights", tuple(ws))

    @property
    def K(self) -> int:
        return len(self.points)

    @classmethod
    def from_atlas_weights(cls, atlas: BeliefAtlas, W: np.ndarray, tol: float = 0.0) -> "BeliefDistribution":
        """From a K x |atlas| weight matrix; atlas points with weight <= ``tol`` are dropped."""
        W = np.asarray(W, dtype=float)
        pts, ws = [], []
        for row in W:
            keep = row > tol
            w = np.clip(row[keep], 0.0, None)
            pts.append(atlas.points[keep])
            ws.append(w / w.sum())
        return cls(tuple(pts), tuple(ws))

    def atlas_weights(self, atlas: BeliefAtlas) -> np.ndarray:
        W = np.zeros((self.K, len(atlas)))
        for k, (P, w) in enumerate(zip(self.points, self.weights)):
            for b, wb in zip(P, w):
                idx = atlas.index_of(b)
                if idx is None:
                    raise ValueError(f"support point {b} of type {k} is not an atlas point")
                W[k, idx] += wb
        return W

    def expected_beliefs(self) -> np.ndarray:
        return np.array([w @ P for P, w in zip(self.points, self.weights)])

    def to_json(self, game: Game) -> dict:
        return {
            name: [{"belief": b.tolist(), "weight": float(w)} for b, w in zip(P, ws)]
            for name, P, ws in zip(game.type_names, self.points, self.weights)
        }


def _merge(points: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    out_p: list[np.ndarray] = []
    out_w: list[float] = []
    for b, w in zip(points, weights):
        for n, q in enumerate(out_p):
            if np.abs(q - b).max() <= MERGE_TOL:
                out_w[n] += w
                break
        else:
            out_p.append(b)
            out_w.append(w)
    return np.asarray(out_p), np.asarray(out_w)


def commitment_to_beliefs(game: Game, sigma: Commitment) -> BeliefDistribution:
    pts, ws = [], []
    for k in range(sigma.C.shape[0]):
        nu = sigma.C[k].sum(axis=0)
        live = nu > SIGNAL_TOL
        post = (sigma.C[k][:, live] / nu[live]).T
        p, w = _merge(post, nu[live])
        pts.append(p)
        ws.append(w / w.sum())
    return BeliefDistribution(tuple(pts), tuple(ws))


def beliefs_to_commitment(game: Game, pi: BeliefDistribution, check: bool = True) -> Commitment:
    """One signal per support point; the alphabet is padded to at least N signals."""
    from .geometry import consistency_residual

    if check:
        r = consistency_residual(pi)
        if r > TOL:
            raise InconsistentBeliefsError(f"expected posteriors differ by {r:.3g}")
    x = pi.expected_beliefs()[0]
    S = max(game.N, max(P.shape[0] for P in pi.points))
    C = np.zeros((pi.K, game.M, S))
    for k, (P, w) in enumerate(zip(pi.points, pi.weights)):
        C[k, :, : P.shape[0]] = (w[:, None] * P).T
    # restore the exact row marginals lost to rounding in the other types
    C *= np.divide(x, C.sum(axis=2), out=np.ones_like(C[:, :, 0]), where=C.sum(axis=2) > 0)[:, :, None]
    return Commitment(x, C)


def _values_at(game: Game, P: np.ndarray, true: int) -> tuple[np.ndarray, np.ndarray]:
    br = best_responses(game, true, P)
    fv = np.einsum("bi,ib->b", P, game.follower_payoffs[true][:, br])
    lv = np.einsum("bi,ib->b", P, game.leader_payoff[:, br])
    return fv, lv


def report_value(game: Game, pi: BeliefDistribution, reported: int, true: int) -> float:
    """Expected utility of a type-``true`` follower who reports ``reported``."""
    fv, _ = _values_at(game, pi.points[reported], true)
    return float(pi.weights[reported] @ fv)


def leader_report_value(game: Game, pi: BeliefDistribution, reported: int, true: int) -> float:
    _, lv = _values_at(game, pi.points[reported], true)
    return float(pi.weights[reported] @ lv)


def report_values(game: Game, pi: BeliefDistribution) -> tuple[np.ndarray, np.ndarray]:
    """Matrices ``U[rep, true]`` and ``V[rep, true]`` over all report pairs."""
    U = np.empty((pi.K, game.K))
    V = np.empty((pi.K, game.K))
    for rep in range(pi.K):
        for true in range(game.K):
            fv, lv = _values_at(game, pi.points[rep], true)
            U[rep, true] = pi.weights[rep] @ fv
            V[rep, true] = pi.weights[rep] @ lv
    return U, V


def choose_report(utilities: Sequence[float], true: int, tol: float = TOL) -> int:
    """Best report given the follower's value of each report.

    Among reports within ``tol`` of the best, the truthful one wins; otherwise
    the smallest index does.
    """
    u = np.asarray(utilities, dtype=float)
    tied = np.flatnonzero(u >= u.max() - tol)
    return int(true) if true in tied else int(tied[0])


def optimal_report(game: Game, pi: BeliefDistribution, true: int) -> int:
    return choose_report([report_value(game, pi, r, true) for r in range(pi.K)], true)


def optimal_reports(game: Game, pi: BeliefDistribution) -> list[int]:
    U, _ = report_values(game, pi)
    return [choose_report(U[:, k], k) for k in range(game.K)]


def leader_objective(game: Game, pi: BeliefDistribution, truthful: bool = False) -> float:
    """Prior-weighted leader utility when each type reports optimally.

    ``truthful=True`` evaluates the same commitment as if every type reported
    its true type (a diagnostic, not the equilibrium value).
    """
    U, V = report_values(game, pi)
    total = 0.0
    for k in range(game.K):
        rep = k if truthful else choose_report(U[:, k], k)
        total += game.prior[k] * V[rep, k]
    return float(total)


def convex_decompose(b, region: Polytope, vertices: np.ndarray) -> np.ndarray:
    """Weights over ``vertices`` whose combination is ``b``.

    Among valid decompositions the LP prefers low vertex indices, which makes
    the answer deterministic.
    """
    b = np.asarray(b, dtype=float)
    V = np.asarray(vertices, dtype=float)
    if not region.closure().contains(b):
        raise ValueError(f"belief {b} lies outside the region")
    n = V.shape[0]
    d = np.abs(V - b).max(axis=1)
    if n and d.min() <= MERGE_TOL:
        w = np.zeros(n)
        w[int(np.argmin(d))] = 1.0
        return w
    A_eq = np.vstack([V.T, np.ones((1, n))])
    b_eq = np.concatenate([b, [1.0]])
    sol = lp.maximize(-np.arange(n, dtype=float), A_eq=A_eq, b_eq=b_eq)
    if sol is None:
        raise RuntimeError(f"belief {b} is not in the hull of the region's vertices")
    w = np.clip(sol.x, 0.0, None)
    # polish on the support so the reconstruction error is at rounding level
    supp = np.flatnonzero(w > 1e-12)
    ws, *_ = np.linalg.lstsq(A_eq[:, supp], b_eq, rcond=None)
    if np.all(ws >= 0):
        w = np.zeros(n)
        w[supp] = ws
    return w / w.sum()


def response_tuple(game: Game, b) -> tuple[int, ...]:
    b = np.asarray(b, dtype=float)
    return tuple(int(best_responses(game, k, b)[0]) for k in range(game.K))


def reduce_to_atlas(game: Game, pi: BeliefDistribution, atlas: BeliefAtlas) -> BeliefDistribution:
    """Spread every off-atlas posterior over the vertices of its joint best-response region.

    Follower values are linear on each region, so every report utility is
    unchanged and so are the optimal reports.
    """
    regions: dict[tuple[int, ...], tuple[Polytope, np.ndarray, np.ndarray]] = {}
    W = np.zeros((pi.K, len(atlas)))
    for k, (P, w) in enumerate(zip(pi.points, pi.weights)):
        for b, wb in zip(P, w):
            idx = atlas.index_of(b, tol=MERGE_TOL)
            if idx is not None:
                W[k, idx] += wb
                continue
            jt = response_tuple(game, b)
            if jt not in regions:
                region = joint_region(game, jt)
                verts = enumerate_vertices(region)
                ids = np.array([atlas.index_of(v) for v in verts], dtype=object)
                if any(i is None for i in ids):
                    raise RuntimeError(f"region {jt} has a vertex outside the atlas")
                regions[jt] = (region, verts, ids.astype(int))
            region, verts, ids = regions[jt]
            omega = convex_decompose(b, region, verts)
            np.add.at(W[k], ids, wb * omega)
    return BeliefDistribution.from_atlas_weights(atlas, W)
