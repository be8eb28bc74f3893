"""Version-space learning of the follower's utility parameter.

Before every episode the learner plans an optimistic margin-conservative
policy against the current version space, plays it, and cuts the version
space with a halfspace for every observed follower response.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AllInfeasible
from .game import Dsg, FollowerOracle, best_response, sample_action, step, uniform_strategy
from .opt import (
    DEFAULT_CANDIDATES,
    MarginVertices,
    anchor_thetas,
    OptimisticProblem,
    sample_version_space,
    solve_optimistic_program,
)

log = logging.getLogger(__name__)

MIN_LOCAL_EPSILON = 1e-6
DEDUP_TOL = 1e-12


def epsilon_schedule(T: int, p: int) -> float:
    """Margin ``2 T^(-1/p)`` balancing mistakes against conservatism over ``T`` episodes."""
    if T < 1 or p < 1:
        raise ValueError("T and p must be at least 1")
    return 2.0 * T ** (-1.0 / p)


def mistake_budget(epsilon: float, p: int) -> float:
    return (2.0 / epsilon) ** (p - 1)


@dataclass(frozen=True, eq=False)
class VersionSpace:
    """Unit vectors ``theta`` with ``rows @ theta >= 0``. Append-only."""

    p: int
    rows: np.ndarray = None

    def __post_init__(self):
        rows = np.zeros((0, self.p)) if self.rows is None else np.asarray(self.rows, dtype=float)
        object.__setattr__(self, "rows", rows.reshape(-1, self.p))

    def __len__(self) -> int:
        return self.rows.shape[0]

    def contains(self, theta, tol: float = 1e-9) -> bool:
        theta = np.asarray(theta, dtype=float)
        if abs(np.linalg.norm(theta) - 1.0) > 1e-9:
            return False
        return bool(len(self) == 0 or np.all(self.rows @ theta >= -tol))

    def min_slack(self, theta) -> float:
        return float(np.min(self.rows @ np.asarray(theta))) if len(self) else math.inf

    def extend(self, new_rows: np.ndarray) -> "VersionSpace":
        rows = self.rows
        fresh = []
        for r in np.asarray(new_rows, dtype=float).reshape(-1, self.p):
            if rows.shape[0] and np.any(np.all(np.abs(rows - r) <= DEDUP_TOL, axis=1)):
                continue
            if any(np.all(np.abs(f - r) <= DEDUP_TOL) for f in fresh):
                continue
            fresh.append(r)
        if not fresh:
            return self
        return VersionSpace(self.p, np.vstack([rows, fresh]))


def update(vs: VersionSpace, x, b_obs: int, features: np.ndarray) -> VersionSpace:
    """Cut ``vs`` with ``x^T (M_b_obs - M_b') theta >= 0`` for every other action ``b'``."""
    x = np.asarray(x, dtype=float)
    m = features.shape[0]
    others = [k for k in range(m) if k != b_obs]
    if not others:
        return vs
    rows = x @ (features[b_obs][None] - features[others])  # (m-1, p)
    return vs.extend(rows)


@dataclass(eq=False)
class PolicyTable:
    x: np.ndarray
    theta: np.ndarray
    b: np.ndarray
    vtilde: np.ndarray
    epsilon: np.ndarray
    fallback: np.ndarray
    events: list = field(default_factory=list)

    @property
    def epsilon_in_force(self) -> float:
        return float(self.epsilon.min())


def get_policy(
    t: int,
    vs: VersionSpace,
    dsg: Dsg,
    epsilon: float,
    k: int = DEFAULT_CANDIDATES,
    rng: np.random.Generator | None = None,
    rounds: int = 1,
    tie_tol: float = 1e-9,
    anchors: bool = True,
    anchor_cache: dict | None = None,
) -> PolicyTable:
    """Optimistic margin-conservative policy by backward induction over layers.

    States whose program is infeasible retry with a halved margin; below
    ``MIN_LOCAL_EPSILON`` they fall back to uniform play. Passing the same
    ``anchor_cache`` across episodes of one run skips re-solving anchor LPs.
    """
    S, n, p = dsg.num_states, dsg.n, dsg.p
    rng = np.random.default_rng() if rng is None else rng
    thetas = sample_version_space(vs.rows, p, k, 200 * k, rng)
    if anchors:
        thetas = np.vstack([thetas, anchor_thetas(dsg.features, vs.rows, cache=anchor_cache)])
    table = PolicyTable(
        x=np.zeros((S, n)),
        theta=np.zeros((S, p)),
        b=np.zeros(S, dtype=np.int64),
        vtilde=np.zeros(S),
        epsilon=np.full(S, float(epsilon)),
        fallback=np.zeros(S, dtype=bool),
    )
    caches: dict[tuple, MarginVertices] = {}
    for h in range(dsg.horizon, 0, -1):
        for s in dsg.layer_states(h):
            q = dsg.continuation(s, table.vtilde)
            key = tuple(dsg.available[s].tolist())
            if key not in caches:
                caches[key] = MarginVertices(dsg.features, thetas, dsg.available[s])
            eps = float(epsilon)
            sol = None
            while eps >= MIN_LOCAL_EPSILON:
                prob = OptimisticProblem(q, dsg.features, vs.rows, eps, dsg.available[s])
                try:
                    sol = solve_optimistic_program(prob, k, rng, rounds=rounds, cache=caches[key])
                    break
                except AllInfeasible:
                    eps /= 2.0
            if sol is not None:
                table.x[s], table.theta[s], table.b[s] = sol.x, sol.theta, sol.b
                table.vtilde[s] = sol.value
                table.epsilon[s] = eps
                if eps < epsilon:
                    table.events.append({"episode": t, "state": s, "kind": "epsilon_halved", "epsilon": eps})
                continue
            x = uniform_strategy(dsg, s)
            b = best_response(s, x, thetas[0], dsg, tie_tol)
            table.x[s], table.theta[s], table.b[s] = x, thetas[0], b
            table.vtilde[s] = float(q[:, b] @ x)
            table.epsilon[s] = 0.0
            table.fallback[s] = True
            table.events.append({"episode": t, "state": s, "kind": "fallback_uniform", "epsilon": 0.0})
            log.warning("episode %d state %d: optimistic program infeasible, playing uniform", t, s)
    return table


@dataclass(frozen=True)
class StepRecord:
    state: int
    x: np.ndarray
    theta: np.ndarray
    b_pred: int
    b_obs: int
    action: int
    reward: float
    mistake: bool
    epsilon: float
    fallback: bool


@dataclass
class EpisodeLog:
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def realized_return(self) -> float:
        return float(sum(st.reward for st in self.steps))

    @property
    def mistakes(self) -> int:
        return sum(st.mistake for st in self.steps)


def run_episode(
    dsg: Dsg,
    oracle: FollowerOracle,
    policy: PolicyTable,
    vs: VersionSpace,
    rng: np.random.Generator,
) -> tuple[EpisodeLog, VersionSpace]:
    episode = EpisodeLog()
    s = 0
    for h in range(1, dsg.horizon + 1):
        x = policy.x[s]
        b_obs = oracle.respond(dsg, s, x)
        vs = update(vs, x, b_obs, dsg.features)
        a = sample_action(x, rng)
        reward = float(dsg.reward[s, a, b_obs])
        episode.steps.append(
            StepRecord(
                state=s,
                x=x.copy(),
                theta=policy.theta[s].copy(),
                b_pred=int(policy.b[s]),
                b_obs=int(b_obs),
                action=a,
                reward=reward,
                mistake=bool(b_obs != policy.b[s]),
                epsilon=float(policy.epsilon[s]),
                fallback=bool(policy.fallback[s]),
            )
        )
        if h < dsg.horizon:
            s = step(s, a, b_obs, dsg, rng)
    return episode, vs


@dataclass
class LearnerConfig:
    T: int
    epsilon: float | None = None  # None: the 2 T^(-1/p) schedule
    candidates: int = DEFAULT_CANDIDATES
    seed: int = 0
    tie_tol: float = 1e-9
    rounds: int = 1
    keep_logs: bool = True

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("explicit epsilon must be positive")


@dataclass
class EpisodeRecord:
    episode: int
    realized_return: float
    vtilde_root: float
    mistakes: int
    epsilon: float
    fallback_events: int
    epsilon_in_force: float = math.nan

    def to_json(self) -> dict:
        return {
            "episode": self.episode,
            "realized_return": self.realized_return,
            "vtilde_root": self.vtilde_root,
            "mistakes": self.mistakes,
            "epsilon": self.epsilon,
            "fallback_events": self.fallback_events,
        }


@dataclass
class RunResult:
    learner: str
    p: int
    episodes: list[EpisodeRecord] = field(default_factory=list)
    logs: list[EpisodeLog] = field(default_factory=list)
    policies: list[PolicyTable] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    segments: list[dict] = field(default_factory=list)
    version_space: VersionSpace | None = None
    row_counts: list[int] = field(default_factory=list)
    q_table: list | None = None

    @property
    def returns(self) -> np.ndarray:
        return np.array([e.realized_return for e in self.episodes])

    @property
    def mistakes(self) -> np.ndarray:
        return np.array([e.mistakes for e in self.episodes], dtype=np.int64)

    @property
    def total_mistakes(self) -> int:
        return int(self.mistakes.sum())

    def mistake_checks(self) -> list[dict]:
        """Budget checks: one per segment for anytime runs, else one per run."""
        if self.learner != "version_space":
            return []
        spans = self.segments or [
            {"start": 0, "length": len(self.episodes), "epsilon": self.episodes[0].epsilon if self.episodes else 1.0}
        ]
        out = []
        for seg in spans:
            eps_rows = self.episodes[seg["start"] : seg["start"] + seg["length"]]
            realized = sum(e.mistakes for e in eps_rows)
            floor = min((e.epsilon_in_force for e in eps_rows), default=seg["epsilon"])
            floor = seg["epsilon"] if math.isnan(floor) else floor
            budget = math.inf if floor <= 0 else mistake_budget(floor, self.p)
            out.append(
                {
                    "start": seg["start"],
                    "length": seg["length"],
                    "epsilon": seg["epsilon"],
                    "epsilon_in_force": floor,
                    "budget": budget,
                    "mistakes": realized,
                    "pass": realized <= budget,
                }
            )
        return out

    @property
    def bound_ok(self) -> bool:
        return all(c["pass"] for c in self.mistake_checks())

    def to_json(self) -> dict:
        return {
            "learner": self.learner,
            "episodes": [e.to_json() for e in self.episodes],
            "segments": self.segments,
            "mistake_checks": [
                {**c, "budget": (None if math.isinf(c["budget"]) else c["budget"])}
                for c in self.mistake_checks()
            ],
        }


def _streams(seed) -> tuple[np.random.Generator, np.random.Generator]:
    plan_seq, play_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(plan_seq), np.random.default_rng(play_seq)


def _run_segment(dsg, oracle, cfg, T, epsilon, vs, result, plan_rng, play_rng, offset, anchor_cache):
    for i in range(T):
        t = offset + i + 1
        policy = get_policy(
            t, vs, dsg, epsilon, cfg.candidates, plan_rng, cfg.rounds, cfg.tie_tol, anchor_cache=anchor_cache
        )
        episode, vs = run_episode(dsg, oracle, policy, vs, play_rng)
        result.episodes.append(
            EpisodeRecord(
                episode=t,
                realized_return=episode.realized_return,
                vtilde_root=float(policy.vtilde[0]),
                mistakes=episode.mistakes,
                epsilon=float(epsilon),
                fallback_events=int(policy.fallback.sum()),
                epsilon_in_force=policy.epsilon_in_force,
            )
        )
        result.events.extend(policy.events)
        result.row_counts.append(len(vs))
        if cfg.keep_logs:
            result.logs.append(episode)
            result.policies.append(policy)
    return vs


def run_learning(dsg: Dsg, oracle: FollowerOracle, cfg: LearnerConfig) -> RunResult:
    epsilon = cfg.epsilon if cfg.epsilon is not None else epsilon_schedule(cfg.T, dsg.p)
    plan_rng, play_rng = _streams(cfg.seed)
    result = RunResult("version_space", dsg.p)
    vs = VersionSpace(dsg.p)
    vs = _run_segment(dsg, oracle, cfg, cfg.T, epsilon, vs, result, plan_rng, play_rng, 0, {})
    result.version_space = vs
    return result


def run_anytime(
    dsg: Dsg, oracle: FollowerOracle, T0: int, segments: int, cfg: LearnerConfig
) -> RunResult:
    """Doubling-trick wrapper; halfspaces learned in earlier segments are kept."""
    if T0 < 1 or segments < 1:
        raise ValueError("T0 and segments must be at least 1")
    plan_rng, play_rng = _streams(cfg.seed)
    result = RunResult("version_space", dsg.p)
    vs = VersionSpace(dsg.p)
    offset = 0
    anchor_cache: dict = {}
    for i in range(segments):
        T_i = (2**i) * T0
        eps_i = epsilon_schedule(T_i, dsg.p)
        rows_before = len(vs)
        vs = _run_segment(dsg, oracle, cfg, T_i, eps_i, vs, result, plan_rng, play_rng, offset, anchor_cache)
        result.segments.append(
            {"index": i, "start": offset, "length": T_i, "epsilon": eps_i,
             "rows_at_start": rows_before, "rows_at_end": len(vs)}
        )
        offset += T_i
    result.version_space = vs
    return result
