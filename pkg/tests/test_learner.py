import numpy as np
import pytest
from builders import TOY_FEATURES, deterministic_game, toy_game
from oracles import angle_grid_optimistic

from dsglearn.baselines import random_policy_run
from dsglearn.game import FollowerOracle, layered_game
from dsglearn.harness import average_regret
from dsglearn.learner import (
    LearnerConfig,
    PolicyTable,
    VersionSpace,
    _streams,
    epsilon_schedule,
    get_policy,
    mistake_budget,
    run_anytime,
    run_episode,
    run_learning,
    update,
)
from dsglearn.planning import hindsight_policy
from dsglearn.scenarios import RandomDsgSpec, random_dsg


@pytest.mark.parametrize("T,p,expected", [(32, 5, 1.0), (1, 3, 2.0), (10_000, 2, 0.02)])
def test_epsilon_schedule(T, p, expected):
    assert epsilon_schedule(T, p) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("eps,p,expected", [(1.0, 2, 2.0), (0.5, 3, 16.0)])
def test_mistake_budget(eps, p, expected):
    assert mistake_budget(eps, p) == pytest.approx(expected)


def _pinned(theta):
    """Version space containing only ``theta`` (p=2)."""
    perp = np.array([-theta[1], theta[0]])
    return VersionSpace(2, np.array([perp, -perp, theta]))


def test_policy_single_action_is_lp_optimum():
    reward = np.array([[[0.2], [0.7], [0.4]]])
    dsg = layered_game((1,), reward, [np.zeros((3, 1, 0))], np.ones((1, 3, 2)))
    pol = get_policy(1, VersionSpace(2), dsg, 0.5, 16, np.random.default_rng(0))
    assert pol.vtilde[0] == pytest.approx(0.7) and np.allclose(pol.x[0], [0, 1, 0])


def test_policy_toy_matches_angle_grid():
    dsg = toy_game()
    pol = get_policy(1, VersionSpace(2), dsg, 0.1, 128, np.random.default_rng(0))
    ref = angle_grid_optimistic(dsg.continuation(0, np.zeros(1)), TOY_FEATURES, np.zeros((0, 2)), 0.1, np.arange(2))
    assert abs(pol.vtilde[0] - ref) <= 1e-3


def test_policy_value_tends_to_hindsight_when_theta_known():
    for seed in range(5):
        dsg, theta = random_dsg(RandomDsgSpec((1, 2, 2), n=3, m=3, p=2, seed=70 + seed))
        _, v_star = hindsight_policy(dsg, theta)
        gaps = []
        for eps in (1e-2, 1e-4):
            pol = get_policy(1, _pinned(theta), dsg, eps, 16, np.random.default_rng(seed))
            assert not pol.fallback.any()
            gaps.append(v_star[0] - pol.vtilde[0])
        assert gaps[1] <= gaps[0] + 1e-12
        assert abs(gaps[1]) <= 1e-2


def test_policy_vtilde_consistency():
    dsg, _ = random_dsg(RandomDsgSpec((1, 2, 2), n=3, m=3, p=3, seed=8))
    pol = get_policy(1, VersionSpace(3), dsg, 0.2, 64, np.random.default_rng(1))
    for s in range(dsg.num_states):
        q = dsg.continuation(s, pol.vtilde)
        assert pol.vtilde[s] == pytest.approx(pol.x[s] @ q[:, pol.b[s]], abs=1e-6)
        assert 0 <= pol.vtilde[s] <= dsg.horizon - dsg.layer(s) + 1 + 1e-9


def test_update_appends_m_minus_one_rows():
    vs = update(VersionSpace(2), [0.5, 0.5], 0, TOY_FEATURES)
    assert len(vs) == 1


def test_update_keeps_true_theta():
    dsg, theta = random_dsg(RandomDsgSpec((1,), n=4, m=4, p=3, seed=2))
    oracle = FollowerOracle(theta)
    rng = np.random.default_rng(0)
    vs = VersionSpace(3)
    for _ in range(30):
        x = rng.dirichlet(np.ones(4))
        vs = update(vs, x, oracle.respond(dsg, 0, x), dsg.features)
    assert vs.contains(theta)


def test_mistake_cuts_planned_theta_by_margin():
    # planned b=0 with margin eps at theta_s, but the true follower plays b=1
    theta_s = np.array([1.0, 0.0])
    x = np.array([0.8, 0.2])
    u = TOY_FEATURES @ theta_s
    eps = float(x @ (u[0] - u[1]))
    vs = update(VersionSpace(2), x, 1, TOY_FEATURES)
    assert vs.rows[-1] @ theta_s <= -eps + 1e-15
    assert not vs.contains(theta_s)


def test_episode_without_mistakes_realizes_vtilde():
    dsg = deterministic_game(seed=3)
    oracle = FollowerOracle(np.array([0.6, 0.8]))
    x = np.tile([1.0, 0.0], (3, 1))  # pure strategies keep the return exact
    b = np.array([oracle.respond(dsg, s, x[s]) for s in range(3)])
    vtilde = np.zeros(3)
    for s in (2, 1, 0):
        vtilde[s] = x[s] @ dsg.continuation(s, vtilde)[:, b[s]]
    pol = PolicyTable(x, np.tile(oracle.theta_star, (3, 1)), b, vtilde, np.full(3, 0.1), np.zeros(3, bool))
    log, _ = run_episode(dsg, oracle, pol, VersionSpace(2), np.random.default_rng(0))
    assert log.mistakes == 0
    assert log.realized_return == pytest.approx(vtilde[0], abs=1e-12)


def test_forced_mistake_is_flagged():
    dsg = toy_game()
    oracle = FollowerOracle(np.array([1.0, 0.0]))
    pol = PolicyTable(
        x=np.array([[0.8, 0.2]]),
        theta=np.array([[0.0, 1.0]]),
        b=np.array([1]),
        vtilde=np.zeros(1),
        epsilon=np.array([0.1]),
        fallback=np.zeros(1, bool),
    )
    log, vs = run_episode(dsg, oracle, pol, VersionSpace(2), np.random.default_rng(0))
    assert log.steps[0].mistake and log.steps[0].b_obs == 0
    assert not vs.contains(np.array([0.0, 1.0]))


def test_learning_is_reproducible():
    dsg, theta = random_dsg(RandomDsgSpec((1, 2), n=3, m=3, p=2, seed=5))
    a = run_learning(dsg, FollowerOracle(theta), LearnerConfig(T=5, seed=4))
    b = run_learning(dsg, FollowerOracle(theta), LearnerConfig(T=5, seed=4))
    assert np.array_equal(a.returns, b.returns)
    assert [[s.b_obs for s in lg.steps] for lg in a.logs] == [[s.b_obs for s in lg.steps] for lg in b.logs]


def test_one_episode_is_policy_then_episode():
    dsg, theta = random_dsg(RandomDsgSpec((1, 2), n=3, m=3, p=2, seed=6))
    oracle = FollowerOracle(theta)
    run = run_learning(dsg, oracle, LearnerConfig(T=1, seed=11))
    plan_rng, play_rng = _streams(11)
    pol = get_policy(1, VersionSpace(2), dsg, epsilon_schedule(1, 2), 128, plan_rng, anchor_cache={})
    log, vs = run_episode(dsg, oracle, pol, VersionSpace(2), play_rng)
    assert run.returns[0] == log.realized_return
    assert np.array_equal(run.version_space.rows, vs.rows)


def test_learner_beats_random():
    dsg, theta = random_dsg(RandomDsgSpec((1, 2, 2), n=4, m=4, p=2, seed=21))
    oracle = FollowerOracle(theta)
    _, v_star = hindsight_policy(dsg, theta)
    ours, rand = [], []
    for seed in range(10):
        ours.append(average_regret(run_learning(dsg, oracle, LearnerConfig(T=50, seed=seed, keep_logs=False)), v_star[0], 3)[-1])
        rand.append(average_regret(random_policy_run(dsg, oracle, 50, seed=seed), v_star[0], 3)[-1])
    assert np.mean(ours) < np.mean(rand)


def test_anytime_segments():
    dsg, theta = random_dsg(RandomDsgSpec((1, 2), n=3, m=3, p=2, seed=7))
    run = run_anytime(dsg, FollowerOracle(theta), 1, 4, LearnerConfig(T=1, seed=0))
    assert [s["length"] for s in run.segments] == [1, 2, 4, 8]
    assert len(run.episodes) == 15
    assert all(b["rows_at_start"] >= a["rows_at_start"] for a, b in zip(run.segments, run.segments[1:]))
