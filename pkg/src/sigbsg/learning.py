"""Repeated play against myopic followers: FTL over the IC program and Hedge
over a finite arm set, with gap and regret accounting.

Randomness comes from three independent Philox streams spawned from the seed:
``nature`` draws follower types, ``leader`` draws the leader's action and
signal, ``hedge`` draws the arm played each round.  Every stream is consumed
in a fixed pattern, so changing one component never shifts another's draws.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import nnls
from scipy.special import logsumexp

from .equilibrium import build_candidate_set, ic_residuals, solve_sig_lp
from .game import Game, best_responses
from .geometry import BeliefAtlas, atlas_follower_values, atlas_leader_values, build_belief_atlas
from .signaling import Commitment, choose_report

IC_TOL = 1e-7
STREAMS = ("nature", "leader", "hedge")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimulationConfig:
    horizon: int
    seed: int = 0
    algorithm: str = "ftl-ic"
    eta: float | None = None
    resolve_period: int = 1

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.algorithm not in ("ftl-ic", "hedge"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.eta is not None and self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.resolve_period < 1:
            raise ValueError("resolve_period must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.Philox(ss)) for name, ss in zip(STREAMS, children)}


@dataclass
class SimulationTrace:
    K: int
    true_type: np.ndarray
    reported_type: np.ndarray
    leader_action: np.ndarray
    signal: np.ndarray
    follower_action: np.ndarray
    payoff: np.ndarray
    expected: np.ndarray  # leader's expected payoff of the round given the type
    algorithm: str = ""
    choice: np.ndarray | None = None  # commitment index (ftl-ic) or arm index (hedge)
    commitments: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.true_type.shape[0])

    @classmethod
    def empty(cls, K: int) -> "SimulationTrace":
        z = np.zeros(0, dtype=np.int64)
        return cls(K, z, z, z, z, z, np.zeros(0), np.zeros(0))


def _draw_types(mu: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(mu)
    return np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), mu.shape[0] - 1)


def _resolve_types(game: Game, mu_star, T: int, nature: np.random.Generator, types) -> np.ndarray:
    u = nature.random(T)  # drawn even when types are given, to keep stream usage fixed
    if types is not None:
        types = np.asarray(types, dtype=np.int64)
        if types.shape != (T,) or types.min() < 0 or types.max() >= game.K:
            raise ValueError("explicit type sequence must have one valid type per round")
        return types
    mu = np.asarray(mu_star, dtype=float)
    if mu.shape != (game.K,) or np.any(mu < 0) or abs(mu.sum() - 1) > 1e-9:
        raise ValueError("mu_star must be a probability vector over the types")
    return _draw_types(mu, u)


def _sample_cell(weights: np.ndarray, u: float) -> int:
    cdf = np.cumsum(weights)
    return min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), weights.size - 1)


def empirical_distribution(trace: SimulationTrace, t: int) -> np.ndarray:
    if t == 0:
        return np.full(trace.K, 1.0 / trace.K)
    counts = np.bincount(trace.true_type[:t], minlength=trace.K)
    return counts / t


# ---------------------------------------------------------------------------
# follow the IC leader


class _OptimalCommitments:
    """Caches IC-LP solutions together with priors at which they were optimal.

    The set of priors at which a fixed commitment is optimal is convex, so a
    cached solution is reused whenever the query prior lies in the convex hull
    of priors where it was verified.
    """

    def __init__(self, game: Game):
        self.game = game
        self.entries: list[tuple[Commitment, np.ndarray, list[np.ndarray]]] = []
        self.solves = 0
        self._last = 0

    def _in_hull(self, mus: list[np.ndarray], mu: np.ndarray) -> bool:
        S = np.asarray(mus)
        if S.shape[0] == 1:
            return bool(np.abs(S[0] - mu).max() <= 1e-15)
        A = np.vstack([S.T, 1e3 * np.ones(S.shape[0])])
        _, resid = nnls(A, np.concatenate([mu, [1e3]]))
        return resid <= 1e-11

    def get(self, mu: np.ndarray) -> int:
        order = [self._last] + [n for n in range(len(self.entries)) if n != self._last]
        for n in order:
            if n < len(self.entries) and self._in_hull(self.entries[n][2], mu):
                self._last = n
                return n
        res = solve_sig_lp(self.game, mu)
        self.solves += 1
        for n, (_, values, mus) in enumerate(self.entries):
            if mu @ values >= res.value - 1e-12:
                mus.append(mu)
                self._last = n
                return n
        sigma = res.commitment
        obedience, ic = ic_residuals(self.game, sigma)
        if obedience < -IC_TOL or ic < -IC_TOL:
            raise SimulationError(f"IC-LP solution violates obedience ({obedience:.3g}) or IC ({ic:.3g})")
        values = np.einsum("kij,ij->k", sigma.C, self.game.leader_payoff)
        self.entries.append((sigma, values, [mu]))
        self._last = len(self.entries) - 1
        return self._last


def simulate_ftl_ic(game: Game, mu_star, config: SimulationConfig, types: Sequence[int] | None = None) -> SimulationTrace:
    """Each round, commit to the IC-LP optimum for the empirical type distribution so far."""
    if config.algorithm != "ftl-ic":
        raise ValueError("config.algorithm must be 'ftl-ic'")
    T, K, N = config.horizon, game.K, game.N
    rng = rng_streams(config.seed)
    theta = _resolve_types(game, mu_star, T, rng["nature"], types)
    u_leader = rng["leader"].random(T)
    cache = _OptimalCommitments(game)

    i_t = np.empty(T, dtype=np.int64)
    j_t = np.empty(T, dtype=np.int64)
    choice = np.empty(T, dtype=np.int64)
    expected = np.empty(T)
    counts = np.zeros(K)
    current = -1
    for t in range(T):
        if t % config.resolve_period == 0:
            mu_prev = counts / t if t else np.full(K, 1.0 / K)
            current = cache.get(mu_prev)
        sigma, values, _ = cache.entries[current]
        k = theta[t]
        cell = _sample_cell(sigma.C[k].ravel(), u_leader[t])
        i_t[t], j_t[t] = divmod(cell, N)
        choice[t] = current
        expected[t] = values[k]
        counts[k] += 1
    payoff = game.leader_payoff[i_t, j_t]
    return SimulationTrace(
        K=K,
        true_type=theta,
        reported_type=theta.copy(),  # IC commitments make truthful reporting optimal
        leader_action=i_t,
        signal=j_t,
        follower_action=j_t.copy(),  # obedience
        payoff=payoff,
        expected=expected,
        algorithm="ftl-ic",
        choice=choice,
        commitments=[e[0] for e in cache.entries],
        info={"lp_solves": cache.solves},
    )


# ---------------------------------------------------------------------------
# hedge over a finite arm set


@dataclass
class ArmSet:
    atlas: BeliefAtlas
    weights: np.ndarray  # arms x K x |atlas|
    gammas: list[tuple[int, ...]]
    reports: np.ndarray  # arms x K: report of each true type
    rewards: np.ndarray  # arms x K: leader's expected utility against each true type

    def __len__(self) -> int:
        return self.weights.shape[0]


def arm_set_from_weights(game: Game, atlas: BeliefAtlas, weights, gammas=None) -> ArmSet:
    W = np.asarray(weights, dtype=float)
    fv = atlas_follower_values(game, atlas)
    lv = atlas_leader_values(game, atlas)
    A = W.shape[0]
    reports = np.empty((A, game.K), dtype=np.int64)
    rewards = np.empty((A, game.K))
    for a in range(A):
        U = W[a] @ fv.T
        V = W[a] @ lv.T
        for k in range(game.K):
            reports[a, k] = choose_report(U[:, k], k)
            rewards[a, k] = V[reports[a, k], k]
    gammas = [tuple(r) for r in reports] if gammas is None else list(gammas)
    return ArmSet(atlas, W, gammas, reports, rewards)


def build_arm_set(game: Game, atlas: BeliefAtlas | None = None, epsilon: float = 1e-6) -> ArmSet:
    """The finite commitment set: one point per closure vertex of every partition piece."""
    atlas = build_belief_atlas(game) if atlas is None else atlas
    cands = build_candidate_set(game, atlas, epsilon)
    kept: list[np.ndarray] = []
    gammas = []
    for c in cands.members:
        if any(np.abs(c.weights - w).max() <= 1e-9 for w in kept):
            continue
        kept.append(c.weights)
        gammas.append(c.gamma)
    if not kept:
        raise SimulationError("arm set is empty")
    return arm_set_from_weights(game, atlas, np.stack(kept), gammas)


def default_eta(n_arms: int, horizon: int) -> float:
    return math.sqrt(8.0 * math.log(max(n_arms, 2)) / horizon)


def simulate_hedge(
    game: Game,
    mu_star,
    config: SimulationConfig,
    types: Sequence[int] | None = None,
    arms: ArmSet | None = None,
) -> SimulationTrace:
    """Multiplicative weights over the arm set with full-information updates.

    The true type is revealed after each round, so every arm's counterfactual
    expected utility is known and all weights are updated.
    """
    if config.algorithm != "hedge":
        raise ValueError("config.algorithm must be 'hedge'")
    arms = build_arm_set(game) if arms is None else arms
    if len(arms) == 0:
        raise SimulationError("arm set is empty")
    T, K = config.horizon, game.K
    A = len(arms)
    eta = config.eta if config.eta is not None else default_eta(A, T)
    rng = rng_streams(config.seed)
    theta = _resolve_types(game, mu_star, T, rng["nature"], types)
    u_leader = rng["leader"].random(T)
    u_hedge = rng["hedge"].random(T)

    lo, hi = float(game.leader_payoff.min()), float(game.leader_payoff.max())
    scale = hi - lo
    gains = (arms.rewards - lo) / scale if scale > 0 else np.zeros_like(arms.rewards)

    atlas = arms.atlas
    br = np.stack([best_responses(game, k, atlas.points) for k in range(K)])  # K x |atlas|
    # joint law of (posterior, leader action) per arm and report, built lazily
    tables: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    logw = np.full(A, -math.log(A))
    arm_t = np.empty(T, dtype=np.int64)
    rep_t = np.empty(T, dtype=np.int64)
    i_t = np.empty(T, dtype=np.int64)
    s_t = np.empty(T, dtype=np.int64)
    j_t = np.empty(T, dtype=np.int64)
    expected = np.empty(T)
    drift = 0.0
    for t in range(T):
        p = np.exp(logw)
        drift = max(drift, abs(p.sum() - 1.0))
        a = _sample_cell(p, u_hedge[t])
        k = theta[t]
        rep = arms.reports[a, k]
        key = (a, rep)
        if key not in tables:
            support = np.flatnonzero(arms.weights[a, rep] > 0)
            joint = arms.weights[a, rep][support, None] * atlas.points[support]
            tables[key] = (support, joint.ravel())
        support, joint = tables[key]
        cell = _sample_cell(joint, u_leader[t])
        s, i = divmod(cell, game.M)
        arm_t[t], rep_t[t], i_t[t] = a, rep, i
        s_t[t] = support[s]
        j_t[t] = br[k, support[s]]
        expected[t] = p @ arms.rewards[:, k]
        logw += eta * gains[:, k]
        logw -= logsumexp(logw)
    payoff = game.leader_payoff[i_t, j_t]
    return SimulationTrace(
        K=K,
        true_type=theta,
        reported_type=rep_t,
        leader_action=i_t,
        signal=s_t,  # atlas index of the induced posterior
        follower_action=j_t,
        payoff=payoff,
        expected=expected,
        algorithm="hedge",
        choice=arm_t,
        info={"eta": eta, "arms": A, "weight_drift": drift, "final_log_weights": logw},
    )


def simulate(game: Game, mu_star, config: SimulationConfig, types=None, arms: ArmSet | None = None) -> SimulationTrace:
    if config.algorithm == "ftl-ic":
        return simulate_ftl_ic(game, mu_star, config, types)
    return simulate_hedge(game, mu_star, config, types, arms)


# ---------------------------------------------------------------------------
# metrics


@dataclass
class Metrics:
    gap: float
    regret: float
    avg_payoff: float
    cum_payoff: np.ndarray
    cum_gap: np.ndarray
    cum_regret: np.ndarray

    def per_round(self) -> dict:
        T = max(len(self.cum_payoff), 1)
        return {"payoff": self.avg_payoff, "gap": self.gap / T, "regret": self.regret / T}


def best_fixed_cumulative(trace: SimulationTrace, rewards: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Running best-in-hindsight cumulative reward over the arms, per round."""
    T = len(trace)
    out = np.empty(T)
    onehot_counts = np.zeros(trace.K)
    for start in range(0, T, chunk):
        stop = min(start + chunk, T)
        oh = np.zeros((stop - start, trace.K))
        oh[np.arange(stop - start), trace.true_type[start:stop]] = 1.0
        counts = onehot_counts + np.cumsum(oh, axis=0)
        out[start:stop] = (counts @ rewards.T).max(axis=1)
        onehot_counts = counts[-1]
    return out


def compute_metrics(trace: SimulationTrace, opt_value: float, arms: ArmSet | None = None) -> Metrics:
    """Gap against ``opt_value`` per round and regret against the best fixed arm.

    Regret compares expected payoffs: the best arm's cumulative expected
    utility on the realised types minus the learner's expected utility.
    """
    T = len(trace)
    if T == 0:
        z = np.zeros(0)
        return Metrics(0.0, 0.0, 0.0, z, z, z)
    cum_payoff = np.cumsum(trace.payoff)
    cum_gap = opt_value * np.arange(1, T + 1) - cum_payoff
    if arms is not None:
        cum_regret = best_fixed_cumulative(trace, arms.rewards) - np.cumsum(trace.expected)
    else:
        cum_regret = np.full(T, np.nan)
    return Metrics(
        gap=float(cum_gap[-1]),
        regret=float(cum_regret[-1]),
        avg_payoff=float(cum_payoff[-1] / T),
        cum_payoff=cum_payoff,
        cum_gap=cum_gap,
        cum_regret=cum_regret,
    )


TRACE_COLUMNS = (
    "t",
    "true_type",
    "reported_type",
    "leader_action",
    "signal",
    "follower_action",
    "payoff",
    "cum_payoff",
    "cum_gap",
    "cum_regret",
)


def _num(v: float) -> str:
    return format(float(v), ".17g")


def trace_csv(trace: SimulationTrace, metrics: Metrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for t in range(len(trace)):
        w.writerow(
            (
                t + 1,
                int(trace.true_type[t]),
                int(trace.reported_type[t]),
                int(trace.leader_action[t]),
                int(trace.signal[t]),
                int(trace.follower_action[t]),
                _num(trace.payoff[t]),
                _num(metrics.cum_payoff[t]),
                _num(metrics.cum_gap[t]),
                _num(metrics.cum_regret[t]),
            )
        )
    return buf.getvalue()
