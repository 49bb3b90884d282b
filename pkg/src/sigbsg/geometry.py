"""Polytopes over the belief simplex and over atlas-supported distributions.

Polytopes are kept in H-representation ``{x : A x >= c}`` where individual rows
may be strict.  Vertices are enumerated by brute force over active sets, which
is adequate for the desk-scale games this package targets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import lp
from .game import Game, best_responses

FEAS_TOL = 1e-9
DEDUP_TOL = 1e-7
DEFAULT_CAP = 2_000_000


class EnumerationCapError(RuntimeError):
    """Vertex enumeration would need more active-set solves than allowed."""


class EmptyPolytopeError(ValueError):
    pass


@dataclass(frozen=True)
class Polytope:
    """``{x : A x >= c}`` with ``strict[i]`` marking rows that must hold strictly."""

    A: np.ndarray
    c: np.ndarray
    strict: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if A.shape[0] != c.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows but c has {c.shape[0]}")
        strict = np.zeros(c.shape[0], dtype=bool) if self.strict is None else np.asarray(self.strict, dtype=bool)
        if strict.shape != c.shape:
            raise ValueError("strict flags must match the number of rows")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "strict", strict)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def closure(self) -> "Polytope":
        return Polytope(self.A, self.c, np.zeros_like(self.strict))

    def slack(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) - self.c

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        s = self.slack(x)
        return bool(np.all(np.where(self.strict, s >= tol, s >= -tol)))

    def intersect(self, other: "Polytope") -> "Polytope":
        return Polytope(
            np.vstack([self.A, other.A]),
            np.concatenate([self.c, other.c]),
            np.concatenate([self.strict, other.strict]),
        )


def simplex_polytope(d: int) -> Polytope:
    """The probability simplex in R^d: two rows for the sum, then x >= 0."""
    ones = np.ones((1, d))
    A = np.vstack([ones, -ones, np.eye(d)])
    c = np.concatenate([[1.0, -1.0], np.zeros(d)])
    return Polytope(A, c)


def _comparison_rows(game: Game, theta: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    F = game.follower_payoffs[theta]
    others = [jp for jp in range(game.N) if jp != j]
    A = np.array([F[:, j] - F[:, jp] for jp in others]).reshape(len(others), game.M)
    return A, np.zeros(len(others))


def br_region(game: Game, theta: int, j: int) -> Polytope:
    """Beliefs under which ``j`` is a best response of type ``theta``."""
    A, c = _comparison_rows(game, theta, j)
    return simplex_polytope(game.M).intersect(Polytope(A, c))


def joint_region(game: Game, jtuple: Sequence[int]) -> Polytope:
    """Beliefs under which each type k has ``jtuple[k]`` among its best responses."""
    if len(jtuple) != game.K:
        raise ValueError(f"response tuple must have length K={game.K}")
    p = simplex_polytope(game.M)
    for k, j in enumerate(jtuple):
        A, c = _comparison_rows(game, k, j)
        p = p.intersect(Polytope(A, c))
    return p


# ---------------------------------------------------------------------------
# vertex enumeration


def _split_equalities(A: np.ndarray, c: np.ndarray, tol: float = 1e-12):
    """Separate rows that come in opposite pairs (encoded equalities) from the rest."""
    norms = np.linalg.norm(A, axis=1)
    zero = norms <= tol
    if np.any(zero & (c > FEAS_TOL)):
        return None
    keep = ~zero
    A, c, norms = A[keep], c[keep], norms[keep]
    An = A / norms[:, None]
    cn = c / norms
    n = An.shape[0]
    paired = np.zeros(n, dtype=bool)
    eq_rows = []
    for i in range(n):
        if paired[i]:
            continue
        diff = np.abs(An[i + 1:] + An[i]).max(axis=1, initial=0.0) if i + 1 < n else np.empty(0)
        hits = np.flatnonzero((diff <= tol) & (np.abs(cn[i + 1:] + cn[i]) <= tol) & ~paired[i + 1:])
        if hits.size:
            paired[i] = paired[i + 1 + hits[0]] = True
            eq_rows.append(i)
    ineq = ~paired
    return An[eq_rows], cn[eq_rows], An[ineq], cn[ineq]


def dedup_points(points: np.ndarray, tol: float = DEDUP_TOL) -> tuple[np.ndarray, list[list[int]]]:
    """Greedy deduplication in the sup-norm; returns kept points and member lists."""
    kept: list[np.ndarray] = []
    members: list[list[int]] = []
    for idx, p in enumerate(points):
        if kept:
            d = np.abs(np.asarray(kept) - p).max(axis=1)
            hit = int(np.argmin(d))
            if d[hit] <= tol:
                members[hit].append(idx)
                continue
        kept.append(p)
        members.append([idx])
    return (np.asarray(kept) if kept else np.empty((0, points.shape[1] if points.ndim == 2 else 0))), members


def enumerate_vertices(p: Polytope, cap: int = DEFAULT_CAP, chunk: int = 20_000) -> np.ndarray:
    """All extreme points of the closure of ``p`` (assumed bounded).

    Pairs of opposite rows are treated as equalities and kept active; the
    remaining rows are searched over all subsets of the size needed to pin a
    point down.  Raises :class:`EnumerationCapError` when that count exceeds
    ``cap``.
    """
    d = p.dim
    split = _split_equalities(p.A, p.c)
    if split is None:
        return np.empty((0, d))
    E, e, G, g = split

    if E.shape[0]:
        x0, *_ = np.linalg.lstsq(E, e, rcond=None)
        if np.abs(E @ x0 - e).max() > FEAS_TOL:
            return np.empty((0, d))
        _, s, Vt = np.linalg.svd(E)
        rank = int(np.sum(s > 1e-10 * max(1.0, s[0])))
        Z = Vt[rank:].T
    else:
        x0 = np.zeros(d)
        Z = np.eye(d)
    k = Z.shape[1]
    H = G @ Z
    h = g - G @ x0

    if k == 0:
        pts = x0[None, :] if np.all(h <= FEAS_TOL) else np.empty((0, d))
        return pts

    # rows that vanish on the affine hull of the equalities are constants
    hn = np.linalg.norm(H, axis=1)
    const = hn <= 1e-12
    if np.any(const & (h > FEAS_TOL)):
        return np.empty((0, d))
    H, h = H[~const], h[~const]
    r = H.shape[0]
    if r < k:
        return np.empty((0, d))
    total = math.comb(r, k)
    if total > cap:
        raise EnumerationCapError(
            f"vertex enumeration needs C({r},{k}) = {total} active-set solves, cap is {cap}"
        )

    found = []
    combos = itertools.combinations(range(r), k)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp)
        if block.size == 0:
            break
        Hs = H[block]  # (n, k, k)
        hs = h[block]
        sv = np.linalg.svd(Hs, compute_uv=False)
        ok = sv[:, -1] > 1e-9 * np.maximum(sv[:, 0], 1.0)
        if not np.any(ok):
            continue
        y = np.linalg.solve(Hs[ok], hs[ok][..., None])[..., 0]
        feas = np.all(y @ H.T - h >= -FEAS_TOL, axis=1)
        if np.any(feas):
            found.append(y[feas] @ Z.T + x0)
    if not found:
        return np.empty((0, d))
    pts, _ = dedup_points(np.vstack(found))
    return pts


# ---------------------------------------------------------------------------
# the belief atlas


def _snap_to_simplex(b: np.ndarray) -> np.ndarray:
    b = np.where(np.abs(b) < 1e-12, 0.0, b)
    b = np.clip(b, 0.0, None)
    return b / b.sum()


@dataclass
class BeliefAtlas:
    """Finite set of beliefs (rows of ``points``) with the response tuples that produced them."""

    points: np.ndarray
    origins: list[list[tuple[int, ...]]]

    def __len__(self) -> int:
        return self.points.shape[0]

    def index_of(self, b, tol: float = DEDUP_TOL) -> int | None:
        if len(self) == 0:
            return None
        d = np.abs(self.points - np.asarray(b, dtype=float)).max(axis=1)
        i = int(np.argmin(d))
        return i if d[i] <= tol else None

    def to_json(self) -> dict:
        return {
            "points": self.points.tolist(),
            "origins": [[list(t) for t in o] for o in self.origins],
        }


def build_belief_atlas(game: Game, cap: int = DEFAULT_CAP) -> BeliefAtlas:
    """Union of the vertices of every joint best-response region, deduplicated and sorted."""
    pts, tags = [], []
    for jtuple in itertools.product(range(game.N), repeat=game.K):
        for v in enumerate_vertices(joint_region(game, jtuple), cap=cap):
            pts.append(_snap_to_simplex(v))
            tags.append(jtuple)
    if not pts:
        raise RuntimeError("no joint region has a vertex; the belief simplex is never covered")
    points, members = dedup_points(np.asarray(pts))
    origins = [sorted({tags[i] for i in m}) for m in members]
    order = sorted(range(len(points)), key=lambda i: tuple(np.round(points[i], 12)))
    return BeliefAtlas(points[order], [origins[i] for i in order])


# ---------------------------------------------------------------------------
# distributions over the atlas


def atlas_follower_values(game: Game, atlas: BeliefAtlas) -> np.ndarray:
    """``out[k, b]`` is the type-k follower's best-response value at atlas point b."""
    P = atlas.points
    out = np.empty((game.K, len(atlas)))
    for k in range(game.K):
        br = best_responses(game, k, P)
        out[k] = np.einsum("bi,ib->b", P, game.follower_payoffs[k][:, br])
    return out


def atlas_leader_values(game: Game, atlas: BeliefAtlas) -> np.ndarray:
    """``out[k, b]`` is the leader's value at atlas point b when a type-k follower best-responds."""
    P = atlas.points
    out = np.empty((game.K, len(atlas)))
    for k in range(game.K):
        br = best_responses(game, k, P)
        out[k] = np.einsum("bi,ib->b", P, game.leader_payoff[:, br])
    return out


def consistency_residual(pi, atlas: BeliefAtlas | None = None) -> float:
    """Largest gap between two types' expected posteriors.

    With an atlas given, every support point must belong to it.
    """
    if atlas is not None:
        pi.atlas_weights(atlas)  # raises when a support point is off the atlas
    means = pi.expected_beliefs()
    if means.shape[0] < 2:
        return 0.0
    return float((means.max(axis=0) - means.min(axis=0)).max())


def consistent_polytope(game: Game, atlas: BeliefAtlas) -> Polytope:
    """Consistent distributions over the atlas, as a polytope in R^{K * |atlas|}.

    Variable block k holds the weights that the distribution for report k puts
    on each atlas point.
    """
    K, n, M = game.K, len(atlas), game.M
    D = K * n
    rows, rhs = [], []
    for k in range(K):
        ones = np.zeros(D)
        ones[k * n:(k + 1) * n] = 1.0
        rows += [ones, -ones]
        rhs += [1.0, -1.0]
    rows.extend(np.eye(D))
    rhs.extend(np.zeros(D))
    W = atlas.points.T  # M x n
    for k in range(1, K):
        block = np.zeros((M, D))
        block[:, :n] = W
        block[:, k * n:(k + 1) * n] = -W
        rows.extend(block)
        rows.extend(-block)
        rhs.extend(np.zeros(2 * M))
    return Polytope(np.asarray(rows), np.asarray(rhs))


def report_comparison_rows(game: Game, atlas: BeliefAtlas, gamma: Sequence[int], fvals=None):
    """Rows forcing each type k to report ``gamma[k]``.

    A report is chosen among the maximisers of the follower's expected value
    with the truthful report first and then the smallest index.  Hence a
    misreport must beat the truth strictly, must beat smaller indices strictly
    and larger indices weakly, while a truthful report only needs to weakly
    beat everything.
    """
    K, n = game.K, len(atlas)
    fvals = atlas_follower_values(game, atlas) if fvals is None else fvals
    rows, strict = [], []
    for k in range(K):
        l = gamma[k]
        for q in range(K):
            if q == l:
                continue
            row = np.zeros(K * n)
            row[l * n:(l + 1) * n] += fvals[k]
            row[q * n:(q + 1) * n] -= fvals[k]
            rows.append(row)
            strict.append(l != k and (q == k or q < l))
    if not rows:
        return Polytope(np.empty((0, K * n)), np.empty(0))
    return Polytope(np.asarray(rows), np.zeros(len(rows)), np.asarray(strict))


def partition_polytope(game: Game, atlas: BeliefAtlas, gamma: Sequence[int], fvals=None) -> Polytope:
    """Consistent atlas distributions under which type k reports ``gamma[k]`` for every k."""
    if len(gamma) != game.K or any(not 0 <= g < game.K for g in gamma):
        raise ValueError(f"gamma must map each of the {game.K} types to a type index")
    return consistent_polytope(game, atlas).intersect(report_comparison_rows(game, atlas, gamma, fvals))


def strict_feasible_point(p: Polytope) -> np.ndarray | None:
    """A point of ``p`` maximising the smallest slack of its strict rows.

    Without strict rows the smallest slack over all rows that are not part of
    an equality pair is maximised instead, giving a Chebyshev-style centre.
    Returns ``None`` when the best achievable strict slack is at most 1e-9 and
    raises :class:`EmptyPolytopeError` when even the closure is empty.
    """
    A, c = p.A, p.c
    if p.strict.any():
        mask = p.strict.astype(float)
    else:
        mask = np.ones(p.n_rows)
        norms = np.linalg.norm(A, axis=1)
        An = A / np.where(norms > 0, norms, 1.0)[:, None]
        for i in range(p.n_rows):
            opposite = np.all(np.abs(An + An[i]) <= 1e-12, axis=1) & (np.abs(c + c[i]) <= 1e-12 * np.maximum(1, norms))
            if opposite.any() and norms[i] > 0:
                mask[i] = 0.0
        mask[norms == 0] = 0.0
    d = p.dim
    # variables (x, s) with 0 <= s <= 1: feasible iff the closure is non-empty
    A_ge = np.hstack([A, -mask[:, None]])
    cost = np.zeros(d + 1)
    cost[-1] = 1.0
    bounds = [(None, None)] * d + [(0.0, 1.0)]
    sol = lp.maximize(cost, A_ge, c, bounds=bounds)
    if sol is None:
        raise EmptyPolytopeError("polytope is empty")
    if p.strict.any() and sol.value <= FEAS_TOL:
        return None
    return sol.x[:d]
