"""Comparison agents: tabular Q-learning over a strategy grid, and uniform random play."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SizeLimit
from .game import Dsg, FollowerOracle, sample_action, step
from .learner import EpisodeRecord, RunResult
from .scenarios import uniform_simplex

GRID_SIZE_LIMIT = 10**6


def grid_count(n: int, g: int) -> int:
    return math.comb(g + n - 1, n - 1)


def _compositions(n: int, g: int):
    if n == 1:
        yield (g,)
        return
    for first in range(g + 1):
        for rest in _compositions(n - 1, g - first):
            yield (first,) + rest


def enumerate_grid_strategies(n: int, g: int) -> np.ndarray:
    """All strategies ``z / g`` with non-negative integer ``z`` summing to ``g``, lexicographic."""
    if n < 1 or g < 1:
        raise ValueError("n and g must be at least 1")
    if grid_count(n, g) > GRID_SIZE_LIMIT:
        raise SizeLimit(f"{grid_count(n, g)} grid strategies exceed the limit {GRID_SIZE_LIMIT}")
    return np.array(list(_compositions(n, g)), dtype=float) / g


def state_grids(dsg: Dsg, g: int) -> list[np.ndarray]:
    """Grid strategies per state, embedded in the full action set."""
    cache: dict[tuple, np.ndarray] = {}
    out = []
    for acts in dsg.available:
        key = tuple(acts.tolist())
        if key not in cache:
            local = enumerate_grid_strategies(len(key), g)
            full = np.zeros((local.shape[0], dsg.n))
            full[:, list(key)] = local
            cache[key] = full
        out.append(cache[key])
    return out


@dataclass
class QConfig:
    T: int
    granularity: int = 10
    explore: float = 0.1
    alpha: float | None = None  # None: visit-count schedule
    alpha_min: float = 0.05
    seed: int = 0


def _alpha(cfg: QConfig, visits: int) -> float:
    if cfg.alpha is not None:
        return cfg.alpha
    return min(1.0, max(cfg.alpha_min, 1.0 / math.ceil(visits / 10)))


def _argmax_random(row: np.ndarray, rng: np.random.Generator) -> int:
    best = np.flatnonzero(row == row.max())
    return int(best[0]) if best.size == 1 else int(rng.choice(best))


def q_learning_run(dsg: Dsg, oracle: FollowerOracle, qcfg: QConfig, rng=None) -> RunResult:
    """Epsilon-greedy tabular Q-learning on the induced MDP over grid strategies.

    The agent sees only states, its chosen grid strategy, and sampled
    rewards; the follower's response is folded into the environment.
    """
    rng = np.random.default_rng(qcfg.seed) if rng is None else rng
    grids = state_grids(dsg, qcfg.granularity)
    q = [np.zeros(len(gr)) for gr in grids]
    visits = [np.zeros(len(gr), dtype=np.int64) for gr in grids]
    responses: dict[tuple[int, int], int] = {}
    result = RunResult("q_learning", dsg.p)
    for t in range(1, qcfg.T + 1):
        s, ret = 0, 0.0
        for h in range(1, dsg.horizon + 1):
            if rng.random() < qcfg.explore:
                i = int(rng.integers(len(grids[s])))
            else:
                i = _argmax_random(q[s], rng)
            x = grids[s][i]
            key = (s, i)
            if key not in responses:
                responses[key] = oracle.respond(dsg, s, x)
            b = responses[key]
            a = sample_action(x, rng)
            reward = float(dsg.reward[s, a, b])
            ret += reward
            if h < dsg.horizon:
                s_next = step(s, a, b, dsg, rng)
                target = reward + float(q[s_next].max())
            else:
                s_next, target = None, reward
            visits[s][i] += 1
            q[s][i] += _alpha(qcfg, int(visits[s][i])) * (target - q[s][i])
            if s_next is not None:
                s = s_next
        result.episodes.append(EpisodeRecord(t, ret, math.nan, 0, math.nan, 0))
    result.q_table = q
    return result


def greedy_grid_policy(dsg: Dsg, result: RunResult, g: int) -> np.ndarray:
    """Greedy strategy per state from a finished Q-learning run."""
    grids = state_grids(dsg, g)
    return np.array([grids[s][int(np.argmax(result.q_table[s]))] for s in range(dsg.num_states)])


def random_strategy(dsg: Dsg, s: int, rng: np.random.Generator) -> np.ndarray:
    x = np.zeros(dsg.n)
    x[dsg.available[s]] = uniform_simplex(rng, dsg.available[s].size)
    return x


def random_policy_run(dsg: Dsg, oracle: FollowerOracle, T: int, rng=None, seed: int = 0) -> RunResult:
    """Each step plays a fresh uniformly random mixed strategy over the available actions."""
    rng = np.random.default_rng(seed) if rng is None else rng
    result = RunResult("random", dsg.p)
    for t in range(1, T + 1):
        s, ret = 0, 0.0
        for h in range(1, dsg.horizon + 1):
            x = random_strategy(dsg, s, rng)
            b = oracle.respond(dsg, s, x)
            a = sample_action(x, rng)
            ret += float(dsg.reward[s, a, b])
            if h < dsg.horizon:
                s = step(s, a, b, dsg, rng)
        result.episodes.append(EpisodeRecord(t, ret, math.nan, 0, math.nan, 0))
    return result


def fixed_policy_run(dsg: Dsg, oracle: FollowerOracle, x: np.ndarray, T: int, rng=None, seed: int = 0,
                     name: str = "hindsight") -> RunResult:
    """Play one stationary policy for ``T`` episodes (used for the hindsight benchmark)."""
    rng = np.random.default_rng(seed) if rng is None else rng
    bs = [oracle.respond(dsg, s, x[s]) for s in range(dsg.num_states)]
    result = RunResult(name, dsg.p)
    for t in range(1, T + 1):
        s, ret = 0, 0.0
        for h in range(1, dsg.horizon + 1):
            a = sample_action(x[s], rng)
            ret += float(dsg.reward[s, a, bs[s]])
            if h < dsg.horizon:
                s = step(s, a, bs[s], dsg, rng)
        result.episodes.append(EpisodeRecord(t, ret, math.nan, 0, math.nan, 0))
    return result
