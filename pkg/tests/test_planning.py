import numpy as np
import pytest
from builders import constant_game, deterministic_game, toy_game
from oracles import grid_single_state

from dsglearn.errors import EpsilonInfeasible
from dsglearn.game import FollowerOracle, layered_game
from dsglearn.planning import (
    epsilon_conservative_policy,
    evaluate_policy_exact,
    evaluate_policy_mc,
    hindsight_policy,
    plan_with_margin,
)
from dsglearn.scenarios import RandomDsgSpec, random_dsg, uniform_simplex


def test_single_action_hindsight_is_point_mass():
    reward = np.array([[[0.2], [0.9], [0.4]]])
    dsg = layered_game((1,), reward, [np.zeros((3, 1, 0))], np.ones((1, 3, 2)))
    x, v = hindsight_policy(dsg, np.array([1.0, 0.0]))
    assert np.allclose(x[0], [0, 1, 0]) and v[0] == pytest.approx(0.9)


def test_toy_hindsight_matches_grid():
    dsg = toy_game()
    theta = np.array([1.0, 0.0])
    _, v = hindsight_policy(dsg, theta)
    # b1 needs x1 >= x2, so the best is x=(0.5,0.5) with value 0.5
    assert v[0] == pytest.approx(0.5, abs=1e-7)
    assert abs(v[0] - grid_single_state(dsg, FollowerOracle(theta))) <= 1e-3


def test_constant_rewards_value():
    dsg = constant_game((1, 2, 2))
    _, v = hindsight_policy(dsg, np.array([0.6, 0.8]))
    assert v[0] == pytest.approx(1.5)


def test_epsilon_limit_approaches_hindsight():
    dsg, theta = random_dsg(RandomDsgSpec((1, 2, 2), n=3, m=3, p=3, seed=13))
    _, v_star = hindsight_policy(dsg, theta)
    gaps = [v_star[0] - epsilon_conservative_policy(dsg, theta, e)[1][0] for e in (1e-2, 1e-4, 1e-6)]
    assert gaps[0] >= gaps[1] >= gaps[2] >= -1e-12
    assert gaps[2] <= 1e-4


def test_epsilon_too_large():
    dsg, theta = random_dsg(RandomDsgSpec((1, 2), seed=1))
    with pytest.raises(EpsilonInfeasible):
        epsilon_conservative_policy(dsg, theta, 10.0)


def test_monotone_in_epsilon():
    dsg, theta = random_dsg(RandomDsgSpec((1, 2, 2), seed=14))
    assert epsilon_conservative_policy(dsg, theta, 0.01)[1][0] >= epsilon_conservative_policy(dsg, theta, 0.1)[1][0]


def test_plan_reports_infeasible_states():
    dsg, theta = random_dsg(RandomDsgSpec((1, 2), seed=2))
    _, _, _, feasible = plan_with_margin(dsg, theta, 10.0)
    assert not feasible.any()


def test_exact_evaluation_of_hindsight_policy():
    dsg, theta = random_dsg(RandomDsgSpec((1, 2, 3), n=3, m=4, p=3, seed=3))
    x, v = hindsight_policy(dsg, theta)
    assert np.allclose(evaluate_policy_exact(dsg, FollowerOracle(theta), x), v, atol=1e-9)


def test_exact_uniform_on_constant_game():
    dsg = constant_game((1, 2, 2))
    x = np.full((dsg.num_states, dsg.n), 1 / dsg.n)
    assert evaluate_policy_exact(dsg, FollowerOracle(np.array([0.6, 0.8])), x)[0] == pytest.approx(1.5)


def test_mc_deterministic_game_is_exact():
    dsg = deterministic_game(seed=5)
    oracle = FollowerOracle(np.array([0.6, 0.8]))
    x = np.tile([0.0, 1.0], (3, 1))
    mean, se = evaluate_policy_mc(dsg, oracle, x, 50, np.random.default_rng(0))
    assert se == 0.0 and mean == pytest.approx(evaluate_policy_exact(dsg, oracle, x)[0])


def test_mc_agrees_with_exact():
    dsg, theta = random_dsg(RandomDsgSpec((1, 2, 2), seed=6))
    rng = np.random.default_rng(6)
    x = uniform_simplex(rng, dsg.n, dsg.num_states)
    oracle = FollowerOracle(theta)
    mean, se = evaluate_policy_mc(dsg, oracle, x, 10_000, rng)
    assert abs(mean - evaluate_policy_exact(dsg, oracle, x)[0]) <= 3 * se


def test_mc_single_return_in_range():
    dsg, theta = random_dsg(RandomDsgSpec((1, 2, 2), seed=7))
    x = np.full((dsg.num_states, dsg.n), 0.25)
    mean, se = evaluate_policy_mc(dsg, FollowerOracle(theta), x, 1, np.random.default_rng(0))
    assert 0 <= mean <= 3 and se == 0.0
