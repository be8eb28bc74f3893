"""Layered dynamic Stackelberg games, the myopic follower, and game dynamics.

States are addressed by a flat integer id, layer-major and index-minor, so
state 0 is always the single root state. :class:`StateId` converts between
the flat id and the ``(layer, index)`` pair (layers are 1-based).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateFeatures, InvalidStrategy, TerminalState

DEFAULT_TIE_TOL = 1e-9
ROW_SUM_TOL = 1e-9
STRATEGY_TOL = 1e-9


class StateId(NamedTuple):
    layer: int
    index: int


@dataclass(frozen=True, eq=False)
class Dsg:
    """An episodic game with ``H`` layers of states.

    ``reward`` has shape ``(S, n, m)``. ``transition[s]`` has shape
    ``(n, m, |S_{h+1}|)`` and indexes states of the next layer locally;
    states of the last layer carry an empty trailing axis. ``features``
    has shape ``(m, n, p)`` and stacks the follower feature matrices.
    """

    layer_sizes: tuple[int, ...]
    available: tuple[np.ndarray, ...]
    reward: np.ndarray
    transition: tuple[np.ndarray, ...]
    features: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(k) for k in self.layer_sizes))
        object.__setattr__(
            self, "available", tuple(np.asarray(a, dtype=np.int64) for a in self.available)
        )
        object.__setattr__(self, "reward", np.asarray(self.reward, dtype=float))
        object.__setattr__(
            self, "transition", tuple(np.asarray(t, dtype=float) for t in self.transition)
        )
        object.__setattr__(self, "features", np.asarray(self.features, dtype=float))
        offsets = np.concatenate([[0], np.cumsum(self.layer_sizes)]).astype(np.int64)
        object.__setattr__(self, "_offsets", offsets)

    @property
    def horizon(self) -> int:
        return len(self.layer_sizes)

    @property
    def num_states(self) -> int:
        return int(self._offsets[-1])

    @property
    def n(self) -> int:
        return self.features.shape[1]

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[2]

    def layer(self, s: int) -> int:
        """1-based layer of flat state ``s``."""
        return int(np.searchsorted(self._offsets, s, side="right"))

    def layer_states(self, h: int) -> range:
        return range(int(self._offsets[h - 1]), int(self._offsets[h]))

    def state_id(self, s: int) -> StateId:
        h = self.layer(s)
        return StateId(h, s - int(self._offsets[h - 1]))

    def flat(self, sid: StateId) -> int:
        return int(self._offsets[sid.layer - 1]) + sid.index

    def next_offset(self, s: int) -> int:
        """Flat id of the first state of the layer after ``s``."""
        return int(self._offsets[self.layer(s)])

    def is_terminal(self, s: int) -> bool:
        return self.layer(s) == self.horizon

    def diffs(self, b: int) -> np.ndarray:
        """Margin matrices ``M_b - M_b'`` for every ``b' != b``, shape ``(m-1, n, p)``."""
        others = [k for k in range(self.m) if k != b]
        return self.features[b][None, :, :] - self.features[others]

    def continuation(self, s: int, values: np.ndarray) -> np.ndarray:
        """``q[a, b] = r(s,a,b) + sum_s' P(s,a,b,s') values[s']`` for every pair."""
        q = self.reward[s].copy()
        if not self.is_terminal(s):
            nxt = self.next_offset(s)
            k = self.transition[s].shape[-1]
            q += self.transition[s] @ values[nxt : nxt + k]
        return q

    def with_features(self, features: np.ndarray) -> "Dsg":
        return replace(self, features=np.asarray(features, dtype=float))

    # serialization

    def to_json(self, theta_star: np.ndarray | None = None, metadata: dict | None = None) -> dict:
        doc: dict[str, Any] = {
            "horizon": self.horizon,
            "layer_sizes": list(self.layer_sizes),
            "available": [a.tolist() for a in self.available],
            "reward": self.reward.tolist(),
            "transition": [t.tolist() for t in self.transition],
            "features": self.features.tolist(),
        }
        if theta_star is not None:
            doc["theta_star"] = np.asarray(theta_star, dtype=float).tolist()
        meta = dict(self.metadata)
        if metadata:
            meta.update(metadata)
        if meta:
            doc["metadata"] = meta
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> tuple["Dsg", np.ndarray | None]:
        layer_sizes = [int(k) for k in doc["layer_sizes"]]
        if "horizon" in doc and int(doc["horizon"]) != len(layer_sizes):
            raise ValueError("horizon does not match the number of layers")
        features = np.asarray(doc["features"], dtype=float)
        n, m = features.shape[1], features.shape[0]
        transition = []
        offsets = np.concatenate([[0], np.cumsum(layer_sizes)])
        for s, t in enumerate(doc["transition"]):
            h = int(np.searchsorted(offsets, s, side="right"))
            k = layer_sizes[h] if h < len(layer_sizes) else 0
            arr = np.asarray(t, dtype=float)
            transition.append(arr.reshape(n, m, k))
        dsg = cls(
            layer_sizes=tuple(layer_sizes),
            available=tuple(np.asarray(a, dtype=np.int64) for a in doc["available"]),
            reward=np.asarray(doc["reward"], dtype=float),
            transition=tuple(transition),
            features=features,
            metadata=dict(doc.get("metadata", {})),
        )
        theta = doc.get("theta_star")
        return dsg, (None if theta is None else np.asarray(theta, dtype=float))


def save_dsg(path: str | Path, dsg: Dsg, theta_star=None, metadata=None) -> None:
    Path(path).write_text(json.dumps(dsg.to_json(theta_star, metadata)))


def load_dsg(path: str | Path) -> tuple[Dsg, np.ndarray | None]:
    return Dsg.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class FollowerOracle:
    """The truthful myopic follower with utility ``<f(a,b), theta_star>``."""

    theta_star: np.ndarray
    tie_tol: float = DEFAULT_TIE_TOL

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float)
        if abs(np.linalg.norm(theta) - 1.0) > 1e-12:
            raise ValueError("theta_star must have unit Euclidean norm")
        if self.tie_tol <= 0:
            raise ValueError("tie_tol must be positive")
        object.__setattr__(self, "theta_star", theta)

    def respond(self, dsg: Dsg, s: int, x: np.ndarray) -> int:
        return best_response(s, x, self.theta_star, dsg, self.tie_tol)


def validate(dsg: Dsg) -> list[str]:
    """Return a human-readable violation for every broken game invariant."""
    out: list[str] = []
    S, n, m = dsg.num_states, dsg.n, dsg.m
    if dsg.horizon < 1:
        out.append("horizon must be at least 1")
    if any(k < 1 for k in dsg.layer_sizes):
        out.append("every layer must contain at least one state")
    if dsg.layer_sizes and dsg.layer_sizes[0] != 1:
        out.append("layer 1 must contain exactly one state")
    if dsg.reward.shape != (S, n, m):
        out.append(f"reward has shape {dsg.reward.shape}, expected {(S, n, m)}")
    else:
        bad = np.argwhere(~((dsg.reward >= 0.0) & (dsg.reward <= 1.0)))
        for s, a, b in bad:
            out.append(
                f"reward r({s},{a},{b})={dsg.reward[s, a, b]!r} outside [0,1] (Assumption 1)"
            )
    if len(dsg.available) != S:
        out.append(f"available has {len(dsg.available)} entries, expected {S}")
    else:
        for s, acts in enumerate(dsg.available):
            if acts.size == 0:
                out.append(f"state {s} has no available leader action")
            elif acts.min() < 0 or acts.max() >= n or len(set(acts.tolist())) != acts.size:
                out.append(f"state {s} has invalid available actions {acts.tolist()}")
    if len(dsg.transition) != S:
        out.append(f"transition has {len(dsg.transition)} entries, expected {S}")
    else:
        for s, t in enumerate(dsg.transition):
            if dsg.is_terminal(s):
                if t.size:
                    out.append(f"terminal state {s} has outgoing transitions")
                continue
            k = dsg.layer_sizes[dsg.layer(s)]
            if t.shape != (n, m, k):
                out.append(f"transition[{s}] has shape {t.shape}, expected {(n, m, k)}")
                continue
            if np.any(t < 0) or not np.all(np.isfinite(t)):
                out.append(f"transition[{s}] has negative or non-finite entries")
            sums = t.sum(axis=-1)
            for a, b in np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL):
                out.append(f"transition row ({s},{a},{b}) sums to {sums[a, b]!r}, expected 1")
    if not np.all(np.isfinite(dsg.features)):
        out.append("feature matrices contain non-finite entries")
    return out


def max_feature_gap(features: np.ndarray) -> float:
    """Largest Frobenius norm of ``M_b - M_b'`` over follower action pairs."""
    m = features.shape[0]
    best = 0.0
    for b in range(m):
        for c in range(b + 1, m):
            best = max(best, float(np.linalg.norm(features[b] - features[c])))
    return best


def normalize_features(dsg: Dsg) -> tuple[Dsg, float]:
    """Scale all feature matrices by one constant so the largest pairwise gap is 1.

    The Frobenius norm bounds the operator norm from above, so the scaled
    matrices satisfy ``||M_b - M_b'||_op <= 1``.
    """
    if not np.all(np.isfinite(dsg.features)):
        raise ValueError("features must be finite")
    gap = max_feature_gap(dsg.features)
    if gap == 0.0:
        raise DegenerateFeatures("all follower feature matrices are identical")
    if abs(gap - 1.0) <= 1e-12:
        return dsg, 1.0
    c = 1.0 / gap
    return dsg.with_features(dsg.features * c), c


def check_strategy(dsg: Dsg, s: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (dsg.n,) or not np.all(np.isfinite(x)):
        raise InvalidStrategy(f"strategy must be a finite vector of length {dsg.n}")
    if np.any(x < -STRATEGY_TOL) or abs(x.sum() - 1.0) > STRATEGY_TOL:
        raise InvalidStrategy(f"strategy {x.tolist()} is not a probability vector")
    mask = np.ones(dsg.n, dtype=bool)
    mask[dsg.available[s]] = False
    if np.any(np.abs(x[mask]) > STRATEGY_TOL):
        raise InvalidStrategy(f"strategy puts mass outside available actions at state {s}")
    return x


def best_response(
    s: int, x, theta, dsg: Dsg, tie_tol: float = DEFAULT_TIE_TOL
) -> int:
    """Follower action maximizing ``x^T M_b theta``.

    Actions within ``tie_tol`` of the best utility are resolved in the
    leader's favor by expected immediate reward, then by lowest index.
    """
    x = check_strategy(dsg, s, x)
    util = np.einsum("a,bap,p->b", x, dsg.features, np.asarray(theta, dtype=float))
    ties = np.flatnonzero(util >= util.max() - tie_tol)
    if ties.size == 1:
        return int(ties[0])
    leader = x @ dsg.reward[s][:, ties]
    return int(ties[np.argmax(leader)])


def leader_expected_reward(s: int, x, dsg: Dsg, oracle: FollowerOracle) -> float:
    b = oracle.respond(dsg, s, x)
    return float(np.asarray(x, dtype=float) @ dsg.reward[s, :, b])


def aux_transition(s: int, x, dsg: Dsg, oracle: FollowerOracle) -> np.ndarray:
    """Distribution over next-layer states induced by ``x`` and the follower's response."""
    if dsg.is_terminal(s):
        raise TerminalState(f"state {s} is in the last layer")
    b = oracle.respond(dsg, s, x)
    return np.asarray(x, dtype=float) @ dsg.transition[s][:, b, :]


def step(s: int, a: int, b: int, dsg: Dsg, rng: np.random.Generator) -> int:
    """Sample the flat id of the successor state."""
    if dsg.is_terminal(s):
        raise TerminalState(f"state {s} is in the last layer")
    row = dsg.transition[s][a, b]
    k = int(rng.choice(row.size, p=row / row.sum()))
    return dsg.next_offset(s) + k


def sample_action(x: np.ndarray, rng: np.random.Generator) -> int:
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    return int(rng.choice(x.size, p=x / x.sum()))


def uniform_strategy(dsg: Dsg, s: int) -> np.ndarray:
    x = np.zeros(dsg.n)
    x[dsg.available[s]] = 1.0 / dsg.available[s].size
    return x


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def spawn(rng: np.random.Generator, k: int) -> list[np.random.Generator]:
    """Independent child streams; deterministic given the parent's state."""
    return list(rng.spawn(k))


def layered_game(
    layer_sizes: Sequence[int],
    reward: np.ndarray,
    transition: Sequence[np.ndarray],
    features: np.ndarray,
    available: Sequence[Sequence[int]] | None = None,
    metadata: dict | None = None,
) -> Dsg:
    """Convenience constructor defaulting to full action availability."""
    reward = np.asarray(reward, dtype=float)
    n = reward.shape[1]
    if available is None:
        available = [np.arange(n)] * reward.shape[0]
    return Dsg(
        layer_sizes=tuple(layer_sizes),
        available=tuple(np.asarray(a) for a in available),
        reward=reward,
        transition=tuple(np.asarray(t, dtype=float) for t in transition),
        features=np.asarray(features, dtype=float),
        metadata=dict(metadata or {}),
    )
