"""Equilibrium solvers: baseline BSE, the incentive-compatible LP, the
epsilon-optimal signaling search over partition pieces, and a grid oracle."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .game import TOL, Game, best_responses
from .geometry import (
    DEFAULT_CAP,
    BeliefAtlas,
    EmptyPolytopeError,
    Polytope,
    atlas_follower_values,
    atlas_leader_values,
    build_belief_atlas,
    enumerate_vertices,
    partition_polytope,
    strict_feasible_point,
)
from .signaling import (
    BeliefDistribution,
    Commitment,
    beliefs_to_commitment,
    choose_report,
    commitment_to_beliefs,
    leader_objective,
)

@dataclass
class SolveResult:
    mode: str
    value: float
    commitment: Commitment
    beliefs: BeliefDistribution | None = None
    certificate: dict = field(default_factory=dict)
    epsilon: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def to_json(self, game: Game) -> dict:
        commitment = self.commitment.to_json(game)
        if self.beliefs is not None:
            commitment["beliefs"] = self.beliefs.to_json(game)
        return {
            "mode": self.mode,
            "value": float(self.value),
            "epsilon": float(self.epsilon),
            "commitment": commitment,
            "certificate": self.certificate,
            "diagnostics": self.diagnostics,
        }


def _type_payoffs(game: Game, sigma: Commitment) -> np.ndarray:
    """Leader utility per type when every type reports truthfully and obeys."""
    S = sigma.C.shape[2]
    L = game.leader_payoff
    if S != game.N:
        raise ValueError("obedient evaluation needs one signal per follower action")
    return np.einsum("kij,ij->k", sigma.C, L)


# ---------------------------------------------------------------------------
# baseline Bayesian Stackelberg equilibrium


def solve_bse(game: Game) -> SolveResult:
    """Multiple-LP method: one LP per profile of follower responses."""
    M, N, K = game.M, game.N, game.K
    best = None
    infeasible = 0
    for jt in itertools.product(range(N), repeat=K):
        c = sum(game.prior[k] * game.leader_payoff[:, j] for k, j in enumerate(jt))
        rows = [
            game.follower_payoffs[k][:, j] - game.follower_payoffs[k][:, jp]
            for k, j in enumerate(jt)
            for jp in range(N)
            if jp != j
        ]
        A_ge = np.asarray(rows).reshape(len(rows), M)
        sol = lp.maximize(c, A_ge, np.zeros(len(rows)), A_eq=np.ones((1, M)), b_eq=[1.0])
        if sol is None:
            infeasible += 1
            continue
        if best is None or sol.value > best[0] + 1e-12:
            best = (sol.value, sol.x, jt)
    if best is None:
        raise lp.LPError("every response profile is infeasible")
    _, x, _ = best
    x = np.clip(x, 0.0, None)
    x /= x.sum()
    responses = [int(best_responses(game, k, x)[0]) for k in range(K)]
    value = float(sum(game.prior[k] * x @ game.leader_payoff[:, j] for k, j in enumerate(responses)))
    sigma = Commitment(x, np.stack([np.outer(x, np.eye(N)[j]) for j in responses]))
    return SolveResult(
        mode="bse",
        value=value,
        commitment=sigma,
        certificate={"responses": responses, "reports": list(range(K))},
        diagnostics={"profiles": N**K, "infeasible_profiles": infeasible, "lp_value": float(best[0])},
    )


# ---------------------------------------------------------------------------
# incentive-compatible signaling LP


def _sig_lp_program(game: Game, mu: np.ndarray):
    M, N, K = game.M, game.N, game.K
    nx, nC = M, K * M * N
    pairs = [(t, h) for t in range(K) for h in range(K) if h != t]
    nz = len(pairs) * N
    nvar = nx + nC + nz

    def cidx(k, i, j):
        return nx + (k * M + i) * N + j

    def zidx(p, j):
        return nx + nC + p * N + j

    cost = np.zeros(nvar)
    for k in range(K):
        for i in range(M):
            for j in range(N):
                cost[cidx(k, i, j)] = mu[k] * game.leader_payoff[i, j]

    A_eq, b_eq = [], []
    row = np.zeros(nvar)
    row[:nx] = 1.0
    A_eq.append(row)
    b_eq.append(1.0)
    for k in range(K):
        for i in range(M):
            row = np.zeros(nvar)
            row[i] = -1.0
            for j in range(N):
                row[cidx(k, i, j)] = 1.0
            A_eq.append(row)
            b_eq.append(0.0)

    A_ge = []
    # obedience
    for k in range(K):
        F = game.follower_payoffs[k]
        for j in range(N):
            for jp in range(N):
                if jp == j:
                    continue
                row = np.zeros(nvar)
                for i in range(M):
                    row[cidx(k, i, j)] = F[i, j] - F[i, jp]
                A_ge.append(row)
    # truthful reporting beats every misreport, with the inner max linearised
    for p, (t, h) in enumerate(pairs):
        F = game.follower_payoffs[t]
        for j in range(N):
            for jp in range(N):
                row = np.zeros(nvar)
                row[zidx(p, j)] = 1.0
                for i in range(M):
                    row[cidx(h, i, j)] = -F[i, jp]
                A_ge.append(row)
        row = np.zeros(nvar)
        for j in range(N):
            row[zidx(p, j)] = -1.0
        for i in range(M):
            for j in range(N):
                row[cidx(t, i, j)] += F[i, j]
        A_ge.append(row)
    bounds = [(0, None)] * (nx + nC) + [(None, None)] * nz
    A_ge = np.asarray(A_ge).reshape(len(A_ge), nvar)
    return cost, A_ge, np.zeros(A_ge.shape[0]), np.asarray(A_eq), np.asarray(b_eq), bounds


def ic_residuals(game: Game, sigma: Commitment) -> tuple[float, float]:
    """Smallest obedience slack and smallest truthful-over-misreport margin."""
    K, N = game.K, game.N
    obedience = np.inf
    for k in range(K):
        F = game.follower_payoffs[k]
        gain = np.einsum("ij,ij->j", sigma.C[k], F)
        for jp in range(N):
            alt = sigma.C[k].T @ F[:, jp]
            obedience = min(obedience, float((gain - alt).min()))
    ic = np.inf
    for t in range(K):
        F = game.follower_payoffs[t]
        truthful = float(np.einsum("ij,ij->", sigma.C[t], F))
        for h in range(K):
            if h != t:
                lie = float((sigma.C[h].T @ F).max(axis=1).sum())
                ic = min(ic, truthful - lie)
    return obedience, ic


def solve_sig_lp(game: Game, mu=None) -> SolveResult:
    """Best commitment under which every type reports truthfully and obeys."""
    mu = game.prior if mu is None else np.asarray(mu, dtype=float)
    cost, A_ge, b_ge, A_eq, b_eq, bounds = _sig_lp_program(game, mu)
    sol = lp.maximize(cost, A_ge, b_ge, A_eq, b_eq, bounds)
    if sol is None:
        raise lp.LPError("signaling LP is infeasible")
    M, N, K = game.M, game.N, game.K
    x = np.clip(sol.x[:M], 0.0, None)
    x /= x.sum()
    C = np.clip(sol.x[M : M + K * M * N].reshape(K, M, N), 0.0, None)
    row = C.sum(axis=2)
    C *= np.divide(x, row, out=np.zeros_like(row), where=row > 0)[:, :, None]
    for k in range(K):
        empty = row[k] <= 0
        C[k, empty, 0] = x[empty]
    sigma = Commitment(x, C)
    obedience, ic = ic_residuals(game, sigma)
    per_type = _type_payoffs(game, sigma)
    return SolveResult(
        mode="iclp",
        value=float(sol.value),
        commitment=sigma,
        certificate={
            "reports": list(range(K)),
            "type_values": per_type.tolist(),
            "obedience_residual": obedience,
            "ic_residual": ic,
        },
        diagnostics={"prior": mu.tolist(), "lp_value": float(sol.value)},
    )


# ---------------------------------------------------------------------------
# epsilon-optimal signaling over partition pieces


@dataclass
class Candidate:
    weights: np.ndarray  # K x |atlas|
    gamma: tuple[int, ...]
    vertex: np.ndarray  # closure vertex the candidate was derived from
    step: float  # distance moved off the vertex (0 for members of the piece)


@dataclass
class CandidateSet:
    atlas: BeliefAtlas
    members: list[Candidate]
    delta: float
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.members)

    def distribution(self, n: int) -> BeliefDistribution:
        return BeliefDistribution.from_atlas_weights(self.atlas, self.members[n].weights)


class _AtlasEvaluator:
    """Evaluates atlas-supported distributions given as K x |atlas| weight matrices."""

    def __init__(self, game: Game, atlas: BeliefAtlas):
        self.game = game
        self.atlas = atlas
        self.fvals = atlas_follower_values(game, atlas)
        self.vvals = atlas_leader_values(game, atlas)

    def reports(self, W: np.ndarray) -> list[int]:
        U = W @ self.fvals.T  # U[rep, true]
        return [choose_report(U[:, k], k) for k in range(self.game.K)]

    def objective(self, W: np.ndarray) -> tuple[float, list[int]]:
        rep = self.reports(W)
        V = W @ self.vvals.T
        return float(sum(self.game.prior[k] * V[r, k] for k, r in enumerate(rep))), rep

    def piece_gradient(self, gamma, mu=None) -> np.ndarray:
        mu = self.game.prior if mu is None else mu
        K, n = self.game.K, len(self.atlas)
        g = np.zeros(K * n)
        for k in range(K):
            g[gamma[k] * n : (gamma[k] + 1) * n] += mu[k] * self.vvals[k]
        return g

    def delta(self, epsilon: float) -> float:
        norm = float(np.linalg.norm(self.vvals, axis=1).max())
        return math.inf if norm == 0 else epsilon / norm


def _clean(w: np.ndarray, K: int) -> np.ndarray:
    W = np.clip(w.reshape(K, -1), 0.0, None)
    return W / W.sum(axis=1, keepdims=True)


def _perturb(Q: Polytope, v: np.ndarray, centre: np.ndarray, delta: float):
    """Move ``v`` toward ``centre`` by ``delta`` (or less if the centre is closer).

    Returns the moved point and the step, or ``(None, step)`` when no point on
    the segment passes the strict membership test.  When rounding makes the
    nominal step fall short of the 1e-9 strict margin, the smallest passing
    step is located by bisection.
    """
    d = centre - v
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        return None, 0.0
    u = d / dist
    step = min(delta, dist)
    if Q.contains(v + step * u):
        return v + step * u, step
    if not Q.contains(centre):
        return None, step
    lo, hi = step, dist
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if Q.contains(v + mid * u):
            hi = mid
        else:
            lo = mid
    return v + hi * u, hi


def _pieces(game: Game):
    return itertools.product(range(game.K), repeat=game.K)


def build_candidate_set(
    game: Game,
    atlas: BeliefAtlas | None = None,
    epsilon: float = 1e-3,
    cap: int = DEFAULT_CAP,
) -> CandidateSet:
    """Every closure vertex of every non-empty partition piece, nudged into its piece if needed."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    atlas = build_belief_atlas(game) if atlas is None else atlas
    ev = _AtlasEvaluator(game, atlas)
    delta = ev.delta(epsilon)
    members: list[Candidate] = []
    diag = {"pieces": {}, "delta": delta}
    for gamma in _pieces(game):
        key = "".join(map(str, gamma))
        Q = partition_polytope(game, atlas, gamma, ev.fvals)
        verts = enumerate_vertices(Q, cap=cap)
        if verts.shape[0] == 0:
            diag["pieces"][key] = {"status": "empty closure"}
            continue
        centre = None
        if Q.strict.any():
            centre = strict_feasible_point(Q)
            if centre is None:
                diag["pieces"][key] = {"status": "no strictly feasible point", "closure_vertices": len(verts)}
                continue
        kept = moved = dropped = 0
        for v in verts:
            if Q.contains(v):
                members.append(Candidate(_clean(v, game.K), gamma, v, 0.0))
                kept += 1
                continue
            w, step = _perturb(Q, v, centre, delta) if centre is not None else (None, 0.0)
            if w is None:
                dropped += 1
                continue
            members.append(Candidate(_clean(w, game.K), gamma, v, step))
            moved += 1
        diag["pieces"][key] = {
            "status": "ok",
            "closure_vertices": int(len(verts)),
            "kept": kept,
            "perturbed": moved,
            "dropped": dropped,
        }
    return CandidateSet(atlas, members, delta, diag)


def _piece_optima(game: Game, ev: _AtlasEvaluator, epsilon: float):
    """For each piece, the best closure vertex by LP, nudged into the piece."""
    delta = ev.delta(epsilon)
    members: list[Candidate] = []
    sups: list[float] = []
    diag = {"pieces": {}, "delta": delta}
    for gamma in _pieces(game):
        key = "".join(map(str, gamma))
        Q = partition_polytope(game, ev.atlas, gamma, ev.fvals)
        sol = lp.maximize(ev.piece_gradient(gamma), Q.A, Q.c, bounds=(None, None))
        if sol is None:
            diag["pieces"][key] = {"status": "empty closure"}
            continue
        centre = None
        if Q.strict.any():
            try:
                centre = strict_feasible_point(Q)
            except EmptyPolytopeError:
                centre = None
            if centre is None:
                diag["pieces"][key] = {"status": "no strictly feasible point", "closure_sup": sol.value}
                continue
        sups.append(sol.value)
        v = sol.x
        if Q.contains(v):
            members.append(Candidate(_clean(v, game.K), gamma, v, 0.0))
            diag["pieces"][key] = {"status": "ok", "closure_sup": sol.value, "step": 0.0}
            continue
        w, step = _perturb(Q, v, centre, delta)
        if w is None:
            diag["pieces"][key] = {"status": "perturbation failed", "closure_sup": sol.value}
            continue
        members.append(Candidate(_clean(w, game.K), gamma, v, step))
        diag["pieces"][key] = {"status": "ok", "closure_sup": sol.value, "step": step}
    return CandidateSet(ev.atlas, members, delta, diag), (max(sups) if sups else -math.inf)


def solve_eps_sigbse(
    game: Game,
    epsilon: float = 1e-3,
    method: str = "lp",
    atlas: BeliefAtlas | None = None,
    cap: int = DEFAULT_CAP,
) -> SolveResult:
    """Epsilon-optimal signaling commitment when followers may misreport.

    ``method="enumerate"`` scores every candidate of :func:`build_candidate_set`;
    ``method="lp"`` keeps, per piece, only the closure vertex that maximises the
    piece's linear objective, which is where the candidate-set maximum lies.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    atlas = build_belief_atlas(game, cap=cap) if atlas is None else atlas
    ev = _AtlasEvaluator(game, atlas)
    if method == "lp":
        cands, sup_estimate = _piece_optima(game, ev, epsilon)
    elif method == "enumerate":
        cands = build_candidate_set(game, atlas, epsilon, cap)
        sup_estimate = -math.inf
        for gamma in {c.gamma for c in cands.members}:
            g = ev.piece_gradient(gamma)
            sup_estimate = max(
                sup_estimate,
                max(float(g @ c.vertex) for c in cands.members if c.gamma == gamma),
            )
    else:
        raise ValueError(f"unknown method {method!r}")
    if not cands.members:
        raise RuntimeError("no partition piece produced a candidate")

    best_val, best_idx, best_rep = -math.inf, -1, None
    mismatched = 0
    for n, cand in enumerate(cands.members):
        val, rep = ev.objective(cand.weights)
        if tuple(rep) != cand.gamma:
            mismatched += 1
        if val > best_val + 1e-12:
            best_val, best_idx, best_rep = val, n, rep
    best = cands.members[best_idx]
    pi = cands.distribution(best_idx)
    sigma = beliefs_to_commitment(game, pi)
    U = best.weights @ ev.fvals.T
    diag = dict(cands.diagnostics)
    diag.update(
        {
            "method": method,
            "atlas_size": len(atlas),
            "candidates": len(cands),
            "sup_estimate": sup_estimate,
            "gamma_mismatches": mismatched,
            "within_bound": bool(best_val >= sup_estimate - epsilon - 1e-9),
        }
    )
    return SolveResult(
        mode="eps",
        value=best_val,
        commitment=sigma,
        beliefs=pi,
        certificate={
            "reports": best_rep,
            "gamma": list(best.gamma),
            "report_utilities": U.tolist(),
            "step": best.step,
        },
        epsilon=epsilon,
        diagnostics=diag,
    )


# ---------------------------------------------------------------------------
# brute-force grid oracle


def _compositions(n: int, parts: int) -> np.ndarray:
    """All vectors of ``parts`` non-negative integers summing to ``n``."""
    out = []
    for bars in itertools.combinations(range(n + parts - 1), parts - 1):
        prev, comp = -1, []
        for b in bars:
            comp.append(b - prev - 1)
            prev = b
        comp.append(n + parts - 2 - prev)
        out.append(comp)
    return np.asarray(out, dtype=float).reshape(len(out), parts)


def brute_force_oracle(
    game: Game,
    resolution: float,
    n_signals: int | None = None,
    cap: int = 200_000_000,
) -> float:
    """Best objective over a grid of commitments.

    ``x`` ranges over the simplex grid with the given step and, for every
    report and leader action, the signal distribution ranges over the same grid
    on ``n_signals`` signals.  Nested grids give monotone results.
    """
    n = int(round(1.0 / resolution))
    if n < 1 or abs(n * resolution - 1.0) > 1e-9:
        raise ValueError("resolution must be 1/n for a positive integer n")
    M, K = game.M, game.K
    S = game.N if n_signals is None else int(n_signals)
    xs = _compositions(n, M) / n
    per_action = _compositions(n, S) / n
    P1 = per_action.shape[0]
    P = P1**M
    total = xs.shape[0] * P**K
    if total > cap:
        raise ValueError(f"grid oracle would evaluate {total} commitments, cap is {cap}")
    idx = np.array(list(itertools.product(range(P1), repeat=M)), dtype=np.intp)
    phi = per_action[idx]  # (P, M, S)

    best = -math.inf
    for x in xs:
        C = x[None, :, None] * phi  # (P, M, S)
        Q = np.transpose(C, (0, 2, 1)).reshape(P * S, M)  # unnormalised posteriors
        U = np.empty((K, P))
        V = np.empty((K, P))
        for k in range(K):
            br = best_responses(game, k, Q)
            U[k] = np.einsum("qi,iq->q", Q, game.follower_payoffs[k][:, br]).reshape(P, S).sum(axis=1)
            V[k] = np.einsum("qi,iq->q", Q, game.leader_payoff[:, br]).reshape(P, S).sum(axis=1)
        if K == 1:
            best = max(best, float(V[0].max()))
            continue
        # report l uses scheme index p_l; axes of the grids below are (p_0, ..., p_{K-1})
        shape = (P,) * K
        value = np.zeros(shape)
        for k in range(K):
            u = np.stack([U[k].reshape([P if a == l else 1 for a in range(K)]) * np.ones(shape) for l in range(K)])
            top = u.max(axis=0)
            tied = u >= top - TOL
            rep = np.where(tied[k], k, np.argmax(tied, axis=0))
            vk = np.stack([V[k].reshape([P if a == l else 1 for a in range(K)]) * np.ones(shape) for l in range(K)])
            value += game.prior[k] * np.take_along_axis(vk, rep[None], axis=0)[0]
        best = max(best, float(value.max()))
    return best


def uninformative_value(game: Game, x) -> float:
    """Leader value of announcing ``x`` with no informative signal."""
    sigma = Commitment.uninformative(game, x)
    return leader_objective(game, commitment_to_beliefs(game, sigma))
