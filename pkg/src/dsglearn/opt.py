"""Small LPs over the probability simplex and the optimistic margin program.

The simplex-domain LPs that appear in planning and learning have a handful
of variables (the leader's actions) and ``m - 1`` margin rows, so they are
solved exactly by enumerating vertices of the feasible polytope, batched
across many objective/constraint sets at once. Larger problems fall back to
HiGHS through :func:`scipy.optimize.linprog`.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog

from .errors import AllInfeasible, SamplingExhausted, SolverError

SIMPLEX_TOL = 1e-10
ROW_TOL = 1e-9
HADAMARD_MIN = 1e-10
MAX_VERTEX_SYSTEMS = 200_000
DEFAULT_CANDIDATES = 128
MEMBERSHIP_TOL = 1e-12


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True, eq=False)
class SimplexLp:
    """Maximize ``c . x`` over ``x`` in the simplex on ``support`` with ``G x >= h``.

    ``c`` and the rows of ``G`` are indexed by the full action set; entries
    outside ``support`` are ignored and ``x`` is zero there.
    """

    c: np.ndarray
    support: np.ndarray
    G: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    h: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        support = np.asarray(self.support, dtype=np.int64)
        G = np.asarray(self.G, dtype=float).reshape(-1, c.size) if np.size(self.G) else np.zeros((0, c.size))
        h = np.asarray(self.h, dtype=float).reshape(-1)
        if support.size == 0:
            raise ValueError("support must be non-empty")
        if G.shape[0] != h.size:
            raise ValueError("G and h disagree on the number of rows")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(G)) and np.all(np.isfinite(h))):
            raise ValueError("LP coefficients must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)

    def add_row(self, g, h: float) -> "SimplexLp":
        return SimplexLp(self.c, self.support, np.vstack([self.G, g]), np.append(self.h, h))


@dataclass(frozen=True, eq=False)
class LpSolution:
    x: np.ndarray | None
    value: float
    status: LpStatus

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@lru_cache(maxsize=None)
def _combos(total: int, choose: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(total), choose)), dtype=np.int64).reshape(
        -1, choose
    )


def vertex_count(k: int, r: int) -> int:
    return math.comb(k + r, k - 1)


def batch_simplex_lp(c: np.ndarray, G: np.ndarray, h: np.ndarray):
    """Solve ``B`` simplex LPs in support coordinates by vertex enumeration.

    ``c`` is ``(B, k)``, ``G`` is ``(B, r, k)``, ``h`` is ``(r,)`` or ``(B, r)``.
    Returns ``(x, value, feasible)``; infeasible problems get ``value = -inf``.
    Among optimal vertices the first in lexicographic order of active sets wins.
    """
    c = np.asarray(c, dtype=float)
    B, k = c.shape
    G = np.asarray(G, dtype=float).reshape(B, -1, k)
    r = G.shape[1]
    h = np.broadcast_to(np.asarray(h, dtype=float), (B, r))
    if k == 1:
        x = np.ones((B, 1))
        feasible = np.all(G[:, :, 0] >= h - ROW_TOL, axis=1)
        value = np.where(feasible, c[:, 0], -np.inf)
        return x, value, feasible

    combos = _combos(k + r, k - 1)
    K = combos.shape[0]
    rows = np.concatenate([np.broadcast_to(np.eye(k), (B, k, k)), G], axis=1)
    rhs = np.concatenate([np.zeros((B, k)), h], axis=1)
    A = np.empty((B, K, k, k))
    A[:, :, 0, :] = 1.0
    A[:, :, 1:, :] = rows[:, combos, :]
    bvec = np.empty((B, K, k))
    bvec[:, :, 0] = 1.0
    bvec[:, :, 1:] = rhs[:, combos]

    # |det| relative to the product of row norms (Hadamard ratio) flags
    # near-parallel active sets without an SVD per system.
    det = np.abs(np.linalg.det(A))
    scale = np.prod(np.linalg.norm(A, axis=-1), axis=-1)
    regular = det > scale * HADAMARD_MIN
    A[~regular] = np.eye(k)
    X = np.linalg.solve(A, bvec[..., None])[..., 0]

    ok = regular & np.all(X >= -SIMPLEX_TOL, axis=-1)
    if r:
        slack = np.einsum("brk,bKk->bKr", G, X) - h[:, None, :]
        ok &= np.all(slack >= -ROW_TOL, axis=-1)
    vals = np.where(ok, np.einsum("bk,bKk->bK", c, X), -np.inf)
    best = np.argmax(vals, axis=1)
    idx = np.arange(B)
    x = np.clip(X[idx, best], 0.0, None)
    x /= x.sum(axis=1, keepdims=True)
    feasible = ok[idx, best]
    value = np.where(feasible, np.einsum("bk,bk->b", c, x), -np.inf)
    return x, value, feasible


def _linprog_simplex(c: np.ndarray, G: np.ndarray, h: np.ndarray):
    k = c.size
    res = linprog(
        -c,
        A_ub=-G if G.size else None,
        b_ub=-h if G.size else None,
        A_eq=np.ones((1, k)),
        b_eq=[1.0],
        bounds=[(0, None)] * k,
        method="highs-ds",
    )
    if res.status == 2:
        return None, -np.inf, False
    if res.status != 0:
        raise SolverError(f"HiGHS failed: {res.message}")
    x = np.clip(res.x, 0.0, None)
    x /= x.sum()
    return x, float(c @ x), True


def solve_simplex_lp(lp: SimplexLp) -> LpSolution:
    sup = lp.support
    c = lp.c[sup]
    G = lp.G[:, sup]
    k, r = sup.size, G.shape[0]
    if vertex_count(k, r) <= MAX_VERTEX_SYSTEMS:
        xs, vals, feas = batch_simplex_lp(c[None], G[None], lp.h)
        x, feasible = xs[0], bool(feas[0])
    else:
        x, _, feasible = _linprog_simplex(c, G, lp.h)
    if not feasible:
        return LpSolution(None, -math.inf, LpStatus.INFEASIBLE)
    full = np.zeros(lp.c.size)
    full[sup] = x
    return LpSolution(full, float(lp.c @ full), LpStatus.OPTIMAL)


# version-space sampling


def _unit_rows(C: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(C, axis=1)
    keep = norms > 0
    return C[keep] / norms[keep, None]


def max_min_margin(rows: np.ndarray, C: np.ndarray, p: int, box: float):
    """Maximize ``t`` s.t. ``rows @ theta >= t``, ``C @ theta >= 0``, ``|theta_i| <= box``.

    Returns ``(theta, t)`` or ``(None, -inf)`` when the LP fails.
    """
    rows = np.asarray(rows, dtype=float).reshape(-1, p)
    C = np.asarray(C, dtype=float).reshape(-1, p)
    obj = np.zeros(p + 1)
    obj[-1] = -1.0
    A = [np.hstack([-rows, np.ones((rows.shape[0], 1))])]
    if C.shape[0]:
        A.append(np.hstack([-C, np.zeros((C.shape[0], 1))]))
    A_ub = np.vstack(A)
    b_ub = np.zeros(A_ub.shape[0])
    bounds = [(-box, box)] * p + [(None, None)]
    res = linprog(obj, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        return None, -math.inf
    return res.x[:p], float(res.x[-1])


def _find_member(C: np.ndarray, p: int, rng: np.random.Generator) -> np.ndarray | None:
    """A unit vector with ``C theta >= 0``, or ``None`` if only ``theta = 0`` qualifies."""
    U = _unit_rows(C)
    theta, t = max_min_margin(U, np.zeros((0, p)), p, 1.0)
    if theta is not None and t > 1e-12:
        return theta / np.linalg.norm(theta)
    # empty interior: look for a nonzero point along random directions
    dirs = np.vstack([np.eye(p), -np.eye(p), rng.standard_normal((2 * p + 8, p))])
    for g in dirs:
        res = linprog(-g, A_ub=-U if U.size else None, b_ub=np.zeros(U.shape[0]) if U.size else None,
                      bounds=[(-1, 1)] * p, method="highs")
        if res.status == 0 and -res.fun > 1e-9:
            th = res.x / np.linalg.norm(res.x)
            if U.size == 0 or np.all(U @ th >= -MEMBERSHIP_TOL):
                return th
            th = _polish(th, U)
            if th is not None:
                return th
    return None


def _polish(theta: np.ndarray, U: np.ndarray) -> np.ndarray | None:
    """Project away tiny violations on a degenerate cone face."""
    for _ in range(5):
        viol = U @ theta
        bad = viol < -MEMBERSHIP_TOL
        if not bad.any():
            return theta
        theta = theta - (viol[bad] @ U[bad]) / max(1, bad.sum())
        nrm = np.linalg.norm(theta)
        if nrm == 0:
            return None
        theta = theta / nrm
    return theta if np.all(U @ theta >= -MEMBERSHIP_TOL) else None


def _hit_and_run(start: np.ndarray, U: np.ndarray, count: int, rng, thin: int = 4) -> np.ndarray:
    """Hit-and-run in ``{z : U z >= 0, |z| <= 1}``; returns normalized iterates.

    The body is a cone cut by the unit ball, so directions of its uniform
    distribution are uniform on the spherical region.
    """
    p = start.size
    z = 0.5 * start
    out = np.empty((count, p))
    taken = 0
    steps = 0
    while taken < count:
        d = rng.standard_normal(p)
        d /= np.linalg.norm(d)
        zd = z @ d
        disc = zd * zd - z @ z + 1.0
        root = math.sqrt(max(disc, 0.0))
        lo, hi = -zd - root, -zd + root
        if U.shape[0]:
            uz = U @ z
            ud = U @ d
            pos = ud > 1e-15
            neg = ud < -1e-15
            if pos.any():
                lo = max(lo, float(np.max(-uz[pos] / ud[pos])))
            if neg.any():
                hi = min(hi, float(np.min(-uz[neg] / ud[neg])))
        if hi > lo:
            z = z + rng.uniform(lo, hi) * d
        steps += 1
        if steps % thin == 0:
            nrm = np.linalg.norm(z)
            if nrm > 1e-12:
                th = z / nrm
                if U.shape[0] == 0 or np.all(U @ th >= -MEMBERSHIP_TOL):
                    out[taken] = th
                    taken += 1
        if steps > 50 * thin * count:
            break
    return out[:taken]


def sample_version_space(
    C: np.ndarray, p: int, k: int, budget: int | None, rng: np.random.Generator
) -> np.ndarray:
    """Up to ``k`` unit vectors satisfying every version-space row.

    Rejection from the uniform sphere first; when the observed acceptance
    rate cannot fill ``k`` within the proposal budget, continue by
    hit-and-run from the last accepted point.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    budget = 200 * k if budget is None else budget
    C = np.asarray(C, dtype=float).reshape(-1, p)
    U = _unit_rows(C)
    accepted: list[np.ndarray] = []
    used = 0
    batch = min(budget, max(1024, 4 * k))
    while used < budget and len(accepted) < k:
        size = min(batch, budget - used)
        g = rng.standard_normal((size, p))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        used += size
        ok = np.all(g @ U.T >= -MEMBERSHIP_TOL, axis=1) if U.shape[0] else np.ones(size, bool)
        accepted.extend(g[ok])
        rate = len(accepted) / used
        if len(accepted) < k and rate * (budget - used) < k - len(accepted):
            break
    if len(accepted) >= k:
        return np.asarray(accepted[:k])
    start = accepted[-1] if accepted else _find_member(U, p, rng)
    if start is None:
        raise SamplingExhausted(f"no unit vector satisfies the {C.shape[0]} version-space rows")
    more = _hit_and_run(np.asarray(start), U, k - len(accepted), rng)
    pts = list(accepted) + list(more)
    if not pts:
        pts = [start]
    return np.asarray(pts)


def anchor_thetas(
    features: np.ndarray, C: np.ndarray, n_actions: int | None = None, cache: dict | None = None
) -> np.ndarray:
    """Version-space thetas that best separate each follower action at simple strategies.

    For every follower action ``b`` and every pure or evenly mixed pair of
    leader actions ``x``, the theta maximizing the smallest margin of ``b``
    at ``x``. These do not depend on the state, only on the version space.

    ``cache`` carries maximizers between calls on a shrinking version space:
    a previous maximizer that still satisfies every row stays optimal.
    """
    features = np.asarray(features, dtype=float)
    m, n, p = features.shape
    if m == 1:
        return np.zeros((0, p))
    C = np.asarray(C, dtype=float).reshape(-1, p)
    n = n if n_actions is None else n_actions
    targets = [np.eye(n)[a] for a in range(n)]
    targets += [(np.eye(n)[a] + np.eye(n)[c]) / 2 for a, c in itertools.combinations(range(n), 2)]
    box = 1.0 / math.sqrt(p)
    out = []
    for b in range(m):
        D = features[b][None] - np.delete(features, b, axis=0)
        for i, x in enumerate(targets):
            hit = None if cache is None else cache.get((b, i))
            if hit is not None and (C.shape[0] == 0 or np.all(C @ hit[0] >= 0.0)):
                th, t = hit
            else:
                th, t = max_min_margin(np.einsum("a,rap->rp", x, D), C, p, box)
                if cache is not None and th is not None:
                    cache[(b, i)] = (th, t)
            if th is None or t <= 1e-12:
                continue
            th = th / np.linalg.norm(th)
            if C.shape[0] == 0 or np.all(C @ th >= -MEMBERSHIP_TOL):
                out.append(th)
    return np.asarray(out).reshape(-1, p)


# optimistic margin program


@dataclass(frozen=True, eq=False)
class OptimisticProblem:
    """One state's optimistic program.

    ``q[a, b]`` is the leader's immediate-plus-continuation value,
    ``features`` is ``(m, n, p)``, ``C`` holds version-space rows.
    """

    q: np.ndarray
    features: np.ndarray
    C: np.ndarray
    epsilon: float
    support: np.ndarray

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        C = np.asarray(self.C, dtype=float).reshape(-1, np.shape(self.features)[2])
        if not np.all(np.isfinite(C)):
            raise ValueError("version-space rows must be finite")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "features", np.asarray(self.features, dtype=float))
        object.__setattr__(self, "support", np.asarray(self.support, dtype=np.int64))

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[2]

    def diffs(self, b: int) -> np.ndarray:
        others = [k for k in range(self.m) if k != b]
        return self.features[b][None] - self.features[others]

    def all_diffs(self) -> np.ndarray:
        """``(m, m-1, n, p)`` stack of :meth:`diffs` for every ``b``."""
        if not hasattr(self, "_all_diffs"):
            object.__setattr__(self, "_all_diffs", np.stack([self.diffs(b) for b in range(self.m)]))
        return self._all_diffs


@dataclass(frozen=True, eq=False)
class OptimisticSolution:
    x: np.ndarray
    theta: np.ndarray
    b: int
    value: float


class MarginVertices:
    """Vertex systems of the x-LPs for fixed candidate thetas and support.

    With ``theta`` fixed, every margin row has right-hand side ``epsilon``,
    so each vertex is ``X0 + epsilon * X1``. Factoring once lets every state
    of a layer, and every margin retry, reuse the same linear solves.
    """

    def __init__(self, features: np.ndarray, thetas: np.ndarray, support: np.ndarray):
        features = np.asarray(features, dtype=float)
        self.thetas = np.asarray(thetas, dtype=float).reshape(-1, features.shape[2])
        self.support = np.asarray(support, dtype=np.int64)
        m = features.shape[0]
        J, k = self.thetas.shape[0], self.support.size
        self.m, self.J, self.k = m, J, k
        r = m - 1
        others = np.array([[c for c in range(m) if c != b] for b in range(m)], dtype=np.int64).reshape(m, r)
        u = features[:, self.support, :] @ self.thetas.T  # (m, k, J): x-coefficients of M_b theta_j
        G = u[:, None] - u[others]  # (m, r, k, J)
        G = np.moveaxis(G, 3, 1).reshape(m * J, r, k)
        self.G = G
        B = m * J
        if k == 1:
            self.X0 = np.ones((B, 1, 1))
            self.X1 = np.zeros((B, 1, 1))
            self.regular = np.ones((B, 1), dtype=bool)
        else:
            combos = _combos(k + r, k - 1)
            K = combos.shape[0]
            rows = np.concatenate([np.broadcast_to(np.eye(k), (B, k, k)), G], axis=1)
            A = np.empty((B, K, k, k))
            A[:, :, 0, :] = 1.0
            A[:, :, 1:, :] = rows[:, combos, :]
            rhs = np.zeros((K, k, 2))
            rhs[:, 0, 0] = 1.0
            rhs[:, 1:, 1] = combos >= k
            det = np.abs(np.linalg.det(A))
            scale = np.prod(np.linalg.norm(A, axis=-1), axis=-1)
            self.regular = det > scale * HADAMARD_MIN
            A[~self.regular] = np.eye(k)
            sol = np.linalg.solve(A, np.broadcast_to(rhs, (B, K, k, 2)))
            self.X0, self.X1 = sol[..., 0], sol[..., 1]
        if r:
            self.GX0 = np.einsum("brk,bKk->bKr", G, self.X0)
            self.GX1 = np.einsum("brk,bKk->bKr", G, self.X1) - 1.0

    def solve(self, q_sup: np.ndarray, epsilon: float):
        """Best ``(x_sup, j, b, value)`` for objective columns ``q_sup[:, b]``, or ``None``."""
        X = self.X0 + epsilon * self.X1
        ok = self.regular & np.all(X >= -SIMPLEX_TOL, axis=-1)
        if self.m > 1:
            ok &= np.all(self.GX0 + epsilon * self.GX1 >= -ROW_TOL, axis=-1)
        if not ok.any():
            return None
        c = np.repeat(np.asarray(q_sup, dtype=float).T, self.J, axis=0)  # (m*J, k), b-major
        vals = np.where(ok, np.einsum("bk,bKk->bK", c, X), -np.inf)
        flat = int(np.argmax(vals))
        i, v = divmod(flat, vals.shape[1])
        b, j = divmod(i, self.J)
        x = np.clip(X[i, v], 0.0, None)
        x /= x.sum()
        return x, j, b, float(c[i] @ x)


def _x_step(prob: OptimisticProblem, thetas: np.ndarray, cache: MarginVertices | None = None):
    """Best (x, theta index, b) over candidate thetas; ``None`` when all infeasible."""
    if cache is None:
        cache = MarginVertices(prob.features, thetas, prob.support)
    return cache.solve(prob.q[prob.support], prob.epsilon)


def _meets_contract(prob: OptimisticProblem, x_full: np.ndarray, theta: np.ndarray, b: int) -> bool:
    if abs(np.linalg.norm(theta) - 1.0) > 1e-9:
        return False
    if prob.C.shape[0] and np.any(prob.C @ theta < -1e-9):
        return False
    if prob.m > 1 and np.any(np.einsum("a,rap,p->r", x_full, prob.diffs(b), theta) < prob.epsilon - 1e-7):
        return False
    return True


def solve_optimistic_program(
    prob: OptimisticProblem,
    candidates: int = DEFAULT_CANDIDATES,
    rng: np.random.Generator | None = None,
    thetas: np.ndarray | None = None,
    rounds: int = 1,
    cache: MarginVertices | None = None,
) -> OptimisticSolution:
    """Heuristic maximizer of the optimistic program for one state.

    Candidate thetas from the version space each induce an exact x-LP per
    follower action; then alternation rounds fix the incumbent x, pick the
    theta maximizing the smallest margin, and re-solve the x-LPs there.
    The returned triple always meets the margin and membership contract.
    """
    if thetas is None and cache is None:
        if rng is None:
            raise ValueError("either thetas or rng must be given")
        thetas = sample_version_space(prob.C, prob.p, candidates, 200 * candidates, rng)
    sup = prob.support
    if cache is not None:
        thetas = cache.thetas
    thetas = np.asarray(thetas, dtype=float).reshape(-1, prob.p)
    best = _x_step(prob, thetas, cache)
    if best is None:
        raise AllInfeasible(f"no candidate theta admits an epsilon={prob.epsilon:g} margin")
    x_sup, j, b, value = best
    theta = thetas[j]

    box = 1.0 / math.sqrt(prob.p)
    for _ in range(rounds):
        if prob.m == 1:
            break
        x_full = np.zeros(prob.q.shape[0])
        x_full[sup] = x_sup
        margin_rows = np.einsum("a,rap->rp", x_full, prob.diffs(b))
        th, t = max_min_margin(margin_rows, prob.C, prob.p, box)
        if th is None or t <= 0:
            break
        th = th / np.linalg.norm(th)
        if prob.C.shape[0] and np.any(prob.C @ th < -1e-9):
            break
        cand = _x_step(prob, th[None])
        if cand is None or cand[3] <= value + 1e-12:
            break
        x_sup, _, b, value = cand
        theta = th

    x = np.zeros(prob.q.shape[0])
    x[sup] = x_sup
    if not _meets_contract(prob, x, theta, b):
        raise SolverError("optimistic solution violates the margin contract")
    return OptimisticSolution(x=x, theta=theta, b=b, value=float(prob.q[:, b] @ x))
