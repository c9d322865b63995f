import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uavroute.env import RoutingEnv, build_scenario
from uavroute.harness.checkpoint import load_checkpoint, save_checkpoint
from uavroute.harness.experiments import rollout_greedy
from uavroute.learn.nets import Mlp
from uavroute.learn.ppo import (PolicyNet, TrainConfig, Trainer, clipped_loss, clipped_objective, gae_advantages,
                                loss_and_grads, masked_sample, train, train_bsa2c)
from uavroute.learn.qlearn import QTable, q_update, train_bsql
from uavroute.netmodel import link_table
from uavroute.screening import ScreeningParams, screen

from .conftest import line_graph
from .helpers import BanditEnv, gae_oracle, ten_node_case, toy_batch

FAST = TrainConfig(rollout_steps=256, episodes=600)


def test_gae_single_terminal_step():
    adv, ret = gae_advantages([1.0], [0.0], [True], 0.99, 0.95)
    assert adv[0] == 1.0 and ret[0] == 1.0


def test_gae_lambda_zero_is_td_error():
    r, v, d = [0.5, -1.0, 2.0], [0.1, 0.2, 0.3], [False, False, True]
    adv, _ = gae_advantages(r, v, d, 0.9, 0.0)
    assert np.allclose(adv, [0.5 + 0.9 * 0.2 - 0.1, -1.0 + 0.9 * 0.3 - 0.2, 2.0 - 0.3], atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gae_matches_direct_sum(seed):
    rng = np.random.default_rng(seed)
    r, v = rng.normal(size=10), rng.normal(size=10)
    done = rng.random(10) < 0.25
    last = float(rng.normal())
    adv, ret = gae_advantages(r, v, done, 0.99, 0.95, last)
    exp = gae_oracle(r, v, done, last, 0.99, 0.95)
    assert np.max(np.abs(adv - exp)) < 1e-10
    assert np.allclose(ret, exp + v, atol=1e-10)


def test_gae_empty_buffer():
    with pytest.raises(ValueError):
        gae_advantages([], [], [], 0.99, 0.95)


def uniform_policy(n_obs=3, n_actions=8):
    actor = Mlp.init(n_obs, n_actions, (4, 4), 0)
    actor.params[4][:] = 0.0
    return PolicyNet(actor, Mlp.init(n_obs, 1, (4, 4), 1))


def test_masked_sampling_frequencies():
    pol = uniform_policy()
    mask = np.array([1, 0, 1, 0, 0, 1, 1, 0], dtype=bool)
    rng = np.random.default_rng(0)
    counts = np.zeros(8)
    obs = np.ones(3)
    for _ in range(100_000):
        a, logp = masked_sample(pol, obs, mask, rng)
        counts[a] += 1
    freq = counts / counts.sum()
    assert np.all(freq[~mask] == 0)
    assert np.all(np.abs(freq[mask] - 0.25) <= 0.01)
    assert logp == pytest.approx(math.log(0.25))


def test_single_valid_slot_is_certain():
    pol = uniform_policy()
    mask = np.zeros(8, dtype=bool)
    mask[5] = True
    for seed in range(20):
        assert masked_sample(pol, np.ones(3), mask, np.random.default_rng(seed)) == (5, 0.0)
    with pytest.raises(ValueError):
        masked_sample(pol, np.ones(3), np.zeros(8, dtype=bool), np.random.default_rng(0))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_masked_softmax_normalised(seed):
    rng = np.random.default_rng(seed)
    pol = PolicyNet.init(6, 7, 8, rng)
    obs = rng.normal(size=(5, 6)) * 5
    mask = rng.random((5, 7)) < 0.5
    mask[np.arange(5), rng.integers(0, 7, 5)] = True
    p = pol.probs(obs, mask)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(p[~mask] == 0)


def test_clipped_objective_examples():
    assert clipped_objective(0.0, 0.0, 2.5, 0.1) == 2.5
    assert clipped_objective(math.log(1.3), 0.0, 1.0, 0.1) == pytest.approx(1.1)
    assert clipped_objective(math.log(0.8), 0.0, -1.0, 0.1) == pytest.approx(-0.9)
    assert clipped_loss([math.log(1.3), 0.0], [0.0, 0.0], [1.0, 3.0], 0.1) == pytest.approx(-(1.1 + 3.0) / 2)


@settings(max_examples=200, deadline=None)
@given(st.floats(-3, 3), st.floats(-5, 5), st.floats(0.01, 0.9))
def test_clip_envelope(dlogp, adv, eps):
    r = math.exp(dlogp)
    obj = float(clipped_objective(dlogp, 0.0, adv, eps))
    assert obj <= max(r * adv, (1 + eps) * adv, (1 - eps) * adv) + 1e-12
    assert obj == pytest.approx(min(r * adv, min(max(r, 1 - eps), 1 + eps) * adv))


@pytest.mark.parametrize("objective", ["clip", "a2c"])
@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(objective, seed):
    pol, batch = toy_batch(seed)
    obs, masks, actions, logp_old, adv, ret = batch
    ratio = np.exp(pol.log_probs(obs, masks)[np.arange(6), actions] - logp_old)
    # the clipped objective has kinks at 1 +- eps
    assert np.min(np.abs(np.abs(ratio - 1.0) - 0.1)) > 1e-3
    _, grads = loss_and_grads(pol, *batch, clip_eps=0.1, objective=objective)
    h = 1e-6
    for p, g in zip(pol.params, grads):
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up, _ = loss_and_grads(pol, *batch, clip_eps=0.1, objective=objective)
            p[idx] = orig - h
            down, _ = loss_and_grads(pol, *batch, clip_eps=0.1, objective=objective)
            p[idx] = orig
            num[idx] = (up - down) / (2 * h)
        assert np.all(np.abs(g - num) <= 1e-4 * np.maximum(np.abs(num), np.abs(g)) + 1e-8), (g, num)


def test_bandit_policy_improvement():
    cfg = TrainConfig(rollout_steps=16, minibatch_size=16, epochs=1, episodes=10**6, seed=0)
    trainer = Trainer(BanditEnv(), cfg)
    state = BanditEnv().reset()
    while trainer.updates < 200:
        trainer.run_episode()
        if len(trainer.buffer) >= cfg.rollout_steps:
            trainer.update()
        if trainer.policy.probs(state.features, state.mask)[0, 1] > 0.99:
            break
    assert trainer.policy.probs(state.features, state.mask)[0, 1] > 0.99
    assert trainer.updates <= 200


def test_a2c_equals_infinite_clip_update():
    pol, batch = toy_batch(11)
    obs, masks, actions, _, adv, ret = batch
    on_policy = pol.log_probs(obs, masks)[np.arange(6), actions]
    la, ga = loss_and_grads(pol, obs, masks, actions, on_policy, adv, ret, objective="a2c")
    lc, gc = loss_and_grads(pol, obs, masks, actions, on_policy, adv, ret, clip_eps=math.inf, objective="clip")
    assert la == lc
    for a, c in zip(ga, gc):
        assert np.array_equal(a, c)


def test_bsa2c_equals_single_epoch_unbounded_clip():
    _, _, env = ten_node_case()
    cfg = replace(FAST, episodes=120, rollout_steps=64)
    _, curve_a2c = train_bsa2c(env, cfg)
    _, curve_clip = Trainer(env, replace(cfg, epochs=1, clip_eps=math.inf)).train()
    assert curve_a2c == curve_clip


def test_chain_graph_policy_follows_chain():
    g = line_graph([0.0, 150.0, 300.0, 450.0, 600.0])
    sc = build_scenario(g, seed=0)
    env = RoutingEnv(sc, screen(g, sc.trust, link_table(g, sc.channel, 1e6), ScreeningParams()))
    policy, _ = train(env, replace(FAST, episodes=50))
    assert rollout_greedy(env, policy, 0).path == [0, 1, 2, 3, 4]


@pytest.mark.parametrize("trainer", [lambda env, cfg: train(env, cfg), train_bsa2c, train_bsql])
def test_same_seed_same_curve(trainer):
    _, _, env = ten_node_case()
    cfg = replace(FAST, episodes=150)
    assert trainer(env, cfg)[1] == trainer(env, cfg)[1]


def test_plain_ppo_equals_bsppo_when_subgraph_is_whole_graph():
    g = line_graph([0.0, 120.0])
    sc = build_scenario(g, seed=0)
    sub = screen(g, sc.trust, link_table(g, sc.channel, 1e6), ScreeningParams())
    screened, full = RoutingEnv(sc, sub), RoutingEnv(sc, None)
    assert screened.obs_dim == full.obs_dim and screened.n_slots == full.n_slots
    cfg = replace(FAST, episodes=300, rollout_steps=32)
    assert train(screened, cfg)[1] == train(full, cfg)[1]


def test_bsql_one_edge_fixed_point():
    g = line_graph([0.0, 120.0])
    sc = build_scenario(g, seed=0)
    env = RoutingEnv(sc, screen(g, sc.trust, link_table(g, sc.channel, 1e6), ScreeningParams()))
    table, curve = train_bsql(env, replace(FAST, learning_rate=0.1, episodes=200))
    assert abs(table.value(0, 1) - curve[-1][1]) < 1e-3


def test_q_update_gamma_zero_is_immediate_reward():
    table = QTable()
    for _ in range(300):
        q_update(table, 0, 1, -0.7, next_max=5.0, done=False, lr=0.1, gamma=0.0)
    assert table.value(0, 1) == pytest.approx(-0.7, abs=1e-12)
    q_update(table, 1, 2, -0.4, next_max=-2.0, done=False, lr=1.0, gamma=0.5)
    assert table.value(1, 2) == -1.4


def test_bsql_not_better_than_bsppo_on_ten_nodes():
    _, _, env = ten_node_case()
    ppo, _ = train(env, FAST)
    table, _ = train_bsql(env, FAST)
    cost_ppo = -rollout_greedy(env, ppo, 0).reward_sum
    trace_q = rollout_greedy(env, table, 0)
    assert not trace_q.success or -trace_q.reward_sum >= cost_ppo - 1e-12


def test_checkpoint_round_trip(tmp_path):
    _, _, env = ten_node_case()
    policy, _ = train(env, replace(FAST, episodes=60))
    save_checkpoint(tmp_path / "p.json", "bsppo", policy, FAST, {"seed": 3})
    algo, loaded, cfg, extra = load_checkpoint(tmp_path / "p.json")
    assert (algo, cfg, extra) == ("bsppo", FAST, {"seed": 3})
    for a, b in zip(policy.params, loaded.params):
        assert np.array_equal(a, b)
    table, _ = train_bsql(env, replace(FAST, episodes=60))
    save_checkpoint(tmp_path / "q.json", "bsql", table, FAST)
    _, q2, _, _ = load_checkpoint(tmp_path / "q.json")
    assert q2.to_dict() == table.to_dict()


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(gamma=0.0)
    with pytest.raises(ValueError):
        TrainConfig(clip_eps=0.0)
