import json

import numpy as np
import pytest
from builders import TOY_FEATURES, constant_game, toy_game

from dsglearn.errors import DegenerateFeatures, InvalidStrategy, TerminalState
from dsglearn.game import (
    Dsg,
    FollowerOracle,
    StateId,
    aux_transition,
    best_response,
    layered_game,
    leader_expected_reward,
    load_dsg,
    max_feature_gap,
    normalize_features,
    save_dsg,
    step,
    validate,
)
from dsglearn.scenarios import RandomDsgSpec, random_dsg


def test_valid_game_has_no_violations():
    dsg, _ = random_dsg(RandomDsgSpec((1, 2), n=3, m=2, p=2, seed=1))
    assert validate(dsg) == []


def test_bad_transition_row_is_named():
    dsg = constant_game((1, 2))
    t0 = dsg.transition[0].copy()
    t0[1, 2] = [0.45, 0.45]
    bad = Dsg(dsg.layer_sizes, dsg.available, dsg.reward, (t0,) + dsg.transition[1:], dsg.features)
    problems = validate(bad)
    assert len(problems) == 1 and "(0,1,2)" in problems[0]


def test_reward_out_of_range_cites_assumption():
    dsg = constant_game((1, 2))
    r = dsg.reward.copy()
    r[1, 0, 0] = 1.5
    problems = validate(Dsg(dsg.layer_sizes, dsg.available, r, dsg.transition, dsg.features))
    assert len(problems) == 1 and "Assumption 1" in problems[0]


def test_state_ids_are_layer_major():
    dsg = constant_game((1, 2, 3))
    assert dsg.num_states == 6 and dsg.horizon == 3
    assert dsg.state_id(3) == StateId(3, 0)
    assert dsg.flat(StateId(2, 1)) == 2
    assert dsg.next_offset(1) == 3
    assert dsg.is_terminal(5) and not dsg.is_terminal(2)


def test_normalize_identity_and_zero():
    F = np.stack([np.eye(2), np.zeros((2, 2))])
    dsg = layered_game((1,), np.zeros((1, 2, 2)), [np.zeros((2, 2, 0))], F)
    out, c = normalize_features(dsg)
    assert c == pytest.approx(1 / np.sqrt(2), abs=1e-15)
    assert max_feature_gap(out.features) == pytest.approx(1.0, abs=1e-12)


def test_normalize_already_normalized_is_identity():
    dsg, _ = random_dsg(RandomDsgSpec((1, 2), seed=3))
    out, c = normalize_features(dsg)
    assert c == 1.0 and np.array_equal(out.features, dsg.features)


def test_normalize_rejects_identical_matrices():
    F = np.stack([np.eye(2), np.eye(2)])
    dsg = layered_game((1,), np.zeros((1, 2, 2)), [np.zeros((2, 2, 0))], F)
    with pytest.raises(DegenerateFeatures):
        normalize_features(dsg)


def test_best_response_single_action():
    dsg = layered_game((1,), np.zeros((1, 2, 1)), [np.zeros((2, 1, 0))], np.ones((1, 2, 2)))
    assert best_response(0, [0.3, 0.7], [1.0, 0.0], dsg) == 0


def test_best_response_toy():
    dsg = toy_game()
    # utilities: b1 -> 0.75, b2 -> 0.25
    assert best_response(0, [0.75, 0.25], [1.0, 0.0], dsg) == 0


def test_ties_favor_leader():
    dsg = toy_game(r_b1=(0.1, 0.1), r_b2=(0.9, 0.9))
    # x=(0.5,0.5): both utilities equal 0.5 at theta=(1,0)
    assert best_response(0, [0.5, 0.5], [1.0, 0.0], dsg) == 1


def test_leader_expected_reward_toy():
    dsg = toy_game()
    oracle = FollowerOracle(np.array([1.0, 0.0]))
    assert leader_expected_reward(0, [0.75, 0.25], dsg, oracle) == pytest.approx(0.35, abs=1e-15)
    assert leader_expected_reward(0, [0.0, 1.0], dsg, oracle) == pytest.approx(0.0)  # b2 at the pure point


def test_leader_expected_reward_constant():
    dsg = constant_game()
    oracle = FollowerOracle(np.array([0.6, 0.8]))
    assert leader_expected_reward(0, np.full(3, 1 / 3), dsg, oracle) == pytest.approx(0.5)


def test_aux_transition_mixture():
    T = np.zeros((2, 1, 2))
    T[0, 0] = [1.0, 0.0]
    T[1, 0] = [0.0, 1.0]
    dsg = layered_game(
        (1, 2), np.zeros((3, 2, 1)), [T, np.zeros((2, 1, 0)), np.zeros((2, 1, 0))], np.ones((1, 2, 1))
    )
    oracle = FollowerOracle(np.array([1.0]))
    assert np.allclose(aux_transition(0, [0.5, 0.5], dsg, oracle), [0.5, 0.5])
    assert np.array_equal(aux_transition(0, [1.0, 0.0], dsg, oracle), [1.0, 0.0])
    with pytest.raises(TerminalState):
        aux_transition(1, [1.0, 0.0], dsg, oracle)


def _row_game(row):
    k = len(row)
    T = np.broadcast_to(np.asarray(row, float), (1, 1, k)).copy()
    return layered_game((1, k), np.zeros((1 + k, 1, 1)), [T] + [np.zeros((1, 1, 0))] * k, np.ones((1, 1, 1)))


def test_step_deterministic_and_seeded():
    assert step(0, 0, 0, _row_game([0, 1, 0]), np.random.default_rng(0)) == 2  # flat id of index 1
    dsg = _row_game([0.5, 0.5])
    a = [step(0, 0, 0, dsg, np.random.default_rng(9)) for _ in range(5)]
    b = [step(0, 0, 0, dsg, np.random.default_rng(9)) for _ in range(5)]
    assert a == b


def test_step_frequencies():
    dsg = _row_game([0.3, 0.7])
    rng = np.random.default_rng(1)
    draws = np.array([step(0, 0, 0, dsg, rng) for _ in range(100_000)])
    assert abs(np.mean(draws == 1) - 0.3) <= 0.01


def test_invalid_strategy_rejected():
    dsg = toy_game()
    with pytest.raises(InvalidStrategy):
        best_response(0, [0.7, 0.7], [1.0, 0.0], dsg)


def test_oracle_requires_unit_theta():
    with pytest.raises(ValueError):
        FollowerOracle(np.array([1.0, 1.0]))


def test_json_round_trip(tmp_path):
    dsg, theta = random_dsg(RandomDsgSpec((1, 2, 2), n=3, m=2, p=3, seed=4))
    path = tmp_path / "g.json"
    save_dsg(path, dsg, theta)
    back, th = load_dsg(path)
    assert np.array_equal(back.reward, dsg.reward) and np.array_equal(th, theta)
    assert all(np.array_equal(a, b) for a, b in zip(back.transition, dsg.transition))
    assert np.array_equal(back.features, dsg.features)
    assert json.loads(path.read_text())["horizon"] == 3


def test_toy_features_shape():
    assert TOY_FEATURES.shape == (2, 2, 2)
