"""Instance generators: random layered games and the wildlife poaching domain."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import SpecError
from .game import Dsg, normalize_features

# Table of layer sizes used for the state-space scaling experiments.
TABLE1_PRESETS: dict[int, tuple[int, ...]] = {
    1: (1, 2, 2, 2, 2),
    2: (1, 2, 4, 4, 4),
    3: (1, 2, 4, 8, 8),
    4: (1, 2, 4, 8, 16),
}


def uniform_simplex(rng: np.random.Generator, k: int, size: int | tuple = ()) -> np.ndarray:
    """Uniform points on the ``(k-1)``-simplex from sorted-uniform spacings."""
    shape = (size,) if isinstance(size, int) else tuple(size)
    u = np.sort(rng.random(shape + (k - 1,)), axis=-1)
    zeros = np.zeros(shape + (1,))
    ones = np.ones(shape + (1,))
    return np.diff(np.concatenate([zeros, u, ones], axis=-1), axis=-1)


def uniform_sphere(rng: np.random.Generator, p: int) -> np.ndarray:
    g = rng.standard_normal(p)
    return g / np.linalg.norm(g)


@dataclass
class RandomDsgSpec:
    layer_sizes: tuple[int, ...]
    n: int = 4
    m: int = 4
    p: int = 4
    seed: int = 0

    def __post_init__(self):
        self.layer_sizes = tuple(int(k) for k in self.layer_sizes)
        if not self.layer_sizes or self.layer_sizes[0] != 1:
            raise SpecError("the first layer must contain exactly one state")
        if min(self.layer_sizes) < 1 or min(self.n, self.m, self.p) < 1:
            raise SpecError("layer sizes and n, m, p must be positive")


def random_dsg(spec: RandomDsgSpec) -> tuple[Dsg, np.ndarray]:
    rng = np.random.default_rng(spec.seed)
    sizes, n, m, p = spec.layer_sizes, spec.n, spec.m, spec.p
    S = sum(sizes)
    reward = rng.random((S, n, m))
    transition = []
    for h, size in enumerate(sizes):
        k = sizes[h + 1] if h + 1 < len(sizes) else 0
        for _ in range(size):
            transition.append(uniform_simplex(rng, k, (n, m)) if k else np.zeros((n, m, 0)))
    raw = rng.uniform(-1.0, 1.0, size=(m, n, p))
    theta = uniform_sphere(rng, p)
    dsg = Dsg(
        layer_sizes=sizes,
        available=tuple(np.arange(n) for _ in range(S)),
        reward=reward,
        transition=tuple(transition),
        features=raw,
    )
    if m > 1:
        dsg, c = normalize_features(dsg)
    else:
        c = 1.0
    meta = {
        "generator": "random",
        "spec": asdict(spec),
        "feature_distribution": "uniform[-1,1] entries, scaled to unit max pairwise Frobenius gap",
        "normalization_constant": c,
    }
    return Dsg(dsg.layer_sizes, dsg.available, dsg.reward, dsg.transition, dsg.features, meta), theta


def table1_spec(row: int, p: int = 4, seed: int = 0) -> RandomDsgSpec:
    return RandomDsgSpec(TABLE1_PRESETS[row], n=4, m=4, p=p, seed=seed)


@dataclass
class PoachingSpec:
    regions: int = 4
    patrol_costs: tuple[float, ...] = (1, 1, 2, 2)
    budget: float = 6
    horizon: int = 4
    animal_types: int = 3
    catch_value: float = 1.0
    seed: int = 0
    densities: list | None = field(default=None, repr=False)
    severities: list | None = field(default=None, repr=False)

    def __post_init__(self):
        self.patrol_costs = tuple(float(c) for c in self.patrol_costs)
        if self.regions < 1:
            raise SpecError("the poaching domain needs at least one region")
        if len(self.patrol_costs) != self.regions:
            raise SpecError("one patrol cost per region is required")
        if min(self.patrol_costs) < 0 or self.budget < 0:
            raise SpecError("costs and budget must be non-negative")
        if self.horizon < 1 or self.animal_types < 1:
            raise SpecError("horizon and animal_types must be positive")

    @property
    def p(self) -> int:
        return self.animal_types + 1


def reachable_budgets(spec: PoachingSpec) -> list[list[float]]:
    """Remaining budgets per step, by forward closure of the budget dynamics."""
    layers = [[float(spec.budget)]]
    for _ in range(spec.horizon - 1):
        nxt = set()
        for rem in layers[-1]:
            nxt.add(rem)  # stand-down
            for cost in spec.patrol_costs:
                if cost <= rem:
                    nxt.add(round(rem - cost, 12))
        layers.append(sorted(nxt, reverse=True))
    return layers


def poaching_dsg(spec: PoachingSpec) -> tuple[Dsg, np.ndarray]:
    """Rangers (leader) patrol one region or stand down; poachers (follower) pick a region.

    Leader action 0 is the stand-down action; action ``i >= 1`` patrols
    region ``i - 1``. Follower action ``b`` is the region the poachers target.
    """
    rng = np.random.default_rng(spec.seed)
    N, M, H = spec.regions, spec.animal_types, spec.horizon
    D = np.asarray(spec.densities, float) if spec.densities is not None else rng.random((N, M))
    C = np.asarray(spec.severities, float) if spec.severities is not None else rng.random((H, M))
    n, m, p = N + 1, N, M + 1
    costs = np.array((0.0,) + spec.patrol_costs)

    features = np.zeros((m, n, p))
    for b in range(m):
        for a in range(n):
            if a == b + 1:
                features[b, a, -1] = -1.0
            else:
                features[b, a, :M] = D[b]

    budgets = reachable_budgets(spec)
    index = [{rem: i for i, rem in enumerate(layer)} for layer in budgets]
    raw, available, transition, states = [], [], [], []
    for h, layer in enumerate(budgets):
        for rem in layer:
            states.append((h + 1, rem))
            acts = [a for a in range(n) if costs[a] <= rem + 1e-12]
            available.append(np.array(acts))
            r = np.empty((n, m))
            for a in range(n):
                for b in range(m):
                    r[a, b] = spec.catch_value if a == b + 1 else -float(C[h] @ D[b])
            raw.append(r)
            if h + 1 < H:
                t = np.zeros((n, m, len(budgets[h + 1])))
                for a in range(n):
                    # unaffordable actions are never played; keep their rows valid
                    nxt = round(rem - costs[a], 12) if costs[a] <= rem + 1e-12 else rem
                    t[a, :, index[h + 1][nxt]] = 1.0
                transition.append(t)
            else:
                transition.append(np.zeros((n, m, 0)))
    raw = np.asarray(raw)
    lo, hi = float(raw.min()), float(raw.max())
    reward = (raw - lo) / (hi - lo) if hi > lo else np.full_like(raw, 0.5)

    theta = uniform_sphere(rng, p)
    theta[-1] = abs(theta[-1])
    theta /= np.linalg.norm(theta)

    dsg = Dsg(
        layer_sizes=tuple(len(layer) for layer in budgets),
        available=tuple(available),
        reward=reward,
        transition=tuple(transition),
        features=features,
    )
    dsg, c = normalize_features(dsg) if m > 1 else (dsg, 1.0)
    meta = {
        "generator": "poaching",
        "spec": {k: v for k, v in asdict(spec).items() if k not in ("densities", "severities")},
        "densities": D.tolist(),
        "severities": C.tolist(),
        "states": [list(s) for s in states],
        "reward_rescale": {"min": lo, "max": hi},
        "normalization_constant": c,
    }
    return Dsg(dsg.layer_sizes, dsg.available, dsg.reward, dsg.transition, dsg.features, meta), theta
