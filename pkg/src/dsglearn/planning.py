"""Full-information planning and policy evaluation by backward induction."""

from __future__ import annotations

import math

import numpy as np

from .errors import EpsilonInfeasible, NumericalDegeneracy
from .game import Dsg, FollowerOracle
from .opt import batch_simplex_lp

# Margin used for the best policy in hindsight. It must exceed the follower's
# tie tolerance so that the planned response is the one actually played.
HINDSIGHT_MARGIN_FACTOR = 10.0


def _as_strategies(policy) -> np.ndarray:
    return np.asarray(getattr(policy, "x", policy), dtype=float)


def plan_with_margin(dsg: Dsg, theta: np.ndarray, margin: float):
    """Backward induction with ``x^T (M_b - M_b') theta >= margin`` for the chosen ``b``.

    Returns ``(x, b, values, feasible)`` where ``feasible[s]`` is False at
    states where no follower action can be induced.
    """
    theta = np.asarray(theta, dtype=float)
    S, n, m = dsg.num_states, dsg.n, dsg.m
    x = np.zeros((S, n))
    bs = np.zeros(S, dtype=np.int64)
    values = np.zeros(S)
    feasible = np.ones(S, dtype=bool)
    # w[b, b', a] = ((M_b - M_b') theta)[a]
    u = dsg.features @ theta  # (m, n)
    others = np.array([[k for k in range(m) if k != b] for b in range(m)], dtype=np.int64).reshape(m, m - 1)
    W = u[:, None, :] - u[others]  # (m, m-1, n)
    for h in range(dsg.horizon, 0, -1):
        for s in dsg.layer_states(h):
            sup = dsg.available[s]
            q = dsg.continuation(s, values)
            c = q[sup].T  # (m, k)
            xs, vals, feas = batch_simplex_lp(c, W[:, :, sup], np.full(m - 1, margin))
            if not feas.any():
                feasible[s] = False
                continue
            b = int(np.argmax(vals))
            x[s, sup] = xs[b]
            bs[s] = b
            values[s] = float(q[:, b] @ x[s])
    return x, bs, values, feasible


def hindsight_policy(dsg: Dsg, theta_star, tie_tol: float = 1e-9):
    """The optimal leader policy under full knowledge of the follower.

    Returns ``(x, values)`` with ``x`` of shape ``(S, n)``.
    """
    x, _, values, feasible = plan_with_margin(dsg, theta_star, HINDSIGHT_MARGIN_FACTOR * tie_tol)
    if not feasible.all():
        raise NumericalDegeneracy(
            f"no follower action is inducible at states {np.flatnonzero(~feasible).tolist()}"
        )
    return x, values


def epsilon_conservative_policy(dsg: Dsg, theta_star, epsilon: float):
    """Best policy whose predicted follower response holds with margin ``epsilon``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x, _, values, feasible = plan_with_margin(dsg, theta_star, epsilon)
    if not feasible.all():
        raise EpsilonInfeasible(
            f"epsilon={epsilon:g} infeasible at states {np.flatnonzero(~feasible).tolist()}"
        )
    return x, values


def true_responses(dsg: Dsg, oracle: FollowerOracle, policy) -> np.ndarray:
    x = _as_strategies(policy)
    return np.array([oracle.respond(dsg, s, x[s]) for s in range(dsg.num_states)], dtype=np.int64)


def evaluate_policy_exact(dsg: Dsg, oracle: FollowerOracle, policy) -> np.ndarray:
    """Expected return from every state when the true follower responds."""
    x = _as_strategies(policy)
    bs = true_responses(dsg, oracle, x)
    values = np.zeros(dsg.num_states)
    for h in range(dsg.horizon, 0, -1):
        for s in dsg.layer_states(h):
            q = dsg.continuation(s, values)
            values[s] = float(x[s] @ q[:, bs[s]])
    return values


def evaluate_policy_mc(
    dsg: Dsg, oracle: FollowerOracle, policy, N: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Mean and standard error of ``N`` sampled episode returns from the root."""
    if N < 1:
        raise ValueError("N must be at least 1")
    x = _as_strategies(policy)
    bs = true_responses(dsg, oracle, x)
    cdf_x = np.cumsum(x, axis=1)
    cdf_x[:, -1] = 1.0
    states = np.zeros(N, dtype=np.int64)
    returns = np.zeros(N)
    for h in range(1, dsg.horizon + 1):
        u = rng.random(N)
        a = np.array([np.searchsorted(cdf_x[s], ui, side="right") for s, ui in zip(states, u)])
        a = np.minimum(a, dsg.n - 1)
        b = bs[states]
        returns += dsg.reward[states, a, b]
        if h == dsg.horizon:
            break
        u = rng.random(N)
        nxt = np.empty(N, dtype=np.int64)
        for i, (s, ai, bi) in enumerate(zip(states, a, b)):
            row = np.cumsum(dsg.transition[s][ai, bi])
            row[-1] = 1.0
            nxt[i] = dsg.next_offset(s) + int(np.searchsorted(row, u[i], side="right"))
        states = nxt
    mean = float(returns.mean())
    spread = N > 1 and returns.max() > returns.min()  # np.std leaves rounding noise on constant samples
    stderr = float(returns.std(ddof=1) / math.sqrt(N)) if spread else 0.0
    return mean, stderr
