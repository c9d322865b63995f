"""Masked actor-critic trained with the clipped surrogate objective.

The same trainer runs the unclipped advantage actor-critic baseline
(``objective="a2c"``, one epoch per batch).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .. import kernels
from .nets import Adam, Mlp, clip_by_global_norm


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    clip_eps: float = 0.1
    max_grad_norm: float = 0.15
    rollout_steps: int = 2048
    minibatch_size: int = 64
    epochs: int = 4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    episodes: int = 600
    seed: int = 0
    vf_coef: float = 0.5
    ent_coef: float = 0.01
    hidden: int = 64
    q_epsilon: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.clip_eps:
            raise ValueError("clip_eps must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.learning_rate <= 0 or self.minibatch_size < 1 or self.epochs < 1 or self.rollout_steps < 1:
            raise ValueError("learning_rate, minibatch_size, epochs and rollout_steps must be positive")

    def to_dict(self):
        return asdict(self)


class PolicyNet:
    def __init__(self, actor: Mlp, critic: Mlp):
        self.actor = actor
        self.critic = critic

    @classmethod
    def init(cls, obs_dim, n_actions, hidden=64, rng=None):
        rng = np.random.default_rng(rng)
        actor = Mlp.init(obs_dim, n_actions, (hidden, hidden), rng, out_scale=0.01)
        critic = Mlp.init(obs_dim, 1, (hidden, hidden), rng)
        return cls(actor, critic)

    @property
    def params(self):
        return self.actor.params + self.critic.params

    @property
    def obs_dim(self):
        return self.actor.params[0].shape[0]

    @property
    def n_actions(self):
        return self.actor.params[4].shape[1]

    def log_probs(self, obs, mask):
        obs = np.atleast_2d(obs)
        mask = np.atleast_2d(mask)
        return kernels.masked_log_softmax(self.actor(obs), mask)

    def probs(self, obs, mask):
        return np.exp(self.log_probs(obs, mask))

    def value(self, obs):
        return self.critic(np.atleast_2d(obs))[:, 0]

    def greedy(self, obs, mask) -> int:
        return int(np.argmax(self.log_probs(obs, mask)[0]))

    def act(self, state, rng):
        action, logp = masked_sample(self, state.features, state.mask, rng)
        return action, logp, float(self.value(state.features)[0])

    def act_greedy(self, state, node=None) -> int:
        return self.greedy(state.features, state.mask)


def masked_sample(policy: PolicyNet, obs, mask, rng):
    """Draw one action from the masked categorical; return ``(action, logprob)``."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("every action is masked out")
    logp = policy.log_probs(obs, mask)[0]
    p = np.exp(logp)
    u = rng.random()
    cum = 0.0
    action = int(np.flatnonzero(mask)[-1])
    for k in np.flatnonzero(mask):
        cum += p[k]
        if u < cum:
            action = int(k)
            break
    return action, float(logp[action])


def gae_advantages(rewards, values, dones, gamma, gae_lambda, last_value=0.0):
    """Generalised advantage estimates and value targets."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if rewards.size == 0:
        raise ValueError("empty buffer")
    adv = kernels.gae(rewards, values, dones, float(last_value), float(gamma), float(gae_lambda))
    return adv, adv + values


def clipped_objective(logprob_new, logprob_old, advantage, eps):
    """Per-sample clipped surrogate ``min(r*A, clip(r, 1-eps, 1+eps)*A)``."""
    ratio = np.exp(np.asarray(logprob_new) - np.asarray(logprob_old))
    adv = np.asarray(advantage, dtype=float)
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


def clipped_loss(logprob_new, logprob_old, advantage, eps) -> float:
    return -float(np.mean(clipped_objective(logprob_new, logprob_old, advantage, eps)))


@dataclass
class RolloutBuffer:
    obs: List[np.ndarray] = field(default_factory=list)
    masks: List[np.ndarray] = field(default_factory=list)
    actions: List[int] = field(default_factory=list)
    logprobs: List[float] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    dones: List[bool] = field(default_factory=list)

    def __len__(self):
        return len(self.actions)

    def add(self, obs, mask, action, logprob, reward, value, done):
        self.obs.append(obs)
        self.masks.append(mask)
        self.actions.append(action)
        self.logprobs.append(logprob)
        self.rewards.append(reward)
        self.values.append(value)
        self.dones.append(done)

    def clear(self):
        for lst in (self.obs, self.masks, self.actions, self.logprobs, self.rewards, self.values, self.dones):
            lst.clear()

    def arrays(self, gamma, gae_lambda, last_value=0.0):
        adv, ret = gae_advantages(self.rewards, self.values, self.dones, gamma, gae_lambda, last_value)
        return {
            "obs": np.array(self.obs, dtype=float),
            "masks": np.array(self.masks, dtype=bool),
            "actions": np.array(self.actions, dtype=np.int64),
            "logprobs": np.array(self.logprobs, dtype=float),
            "advantages": adv,
            "returns": ret,
        }


def loss_and_grads(policy: PolicyNet, obs, masks, actions, logp_old, adv, returns,
                   clip_eps=0.1, vf_coef=0.5, ent_coef=0.01, objective="clip"):
    """Total loss and its gradient for every parameter of ``policy`` (actor then critic)."""
    n = obs.shape[0]
    rows = np.arange(n)
    h1, h2, logits = policy.actor.forward(obs)
    logp_all = kernels.masked_log_softmax(logits, masks)
    p = np.where(masks, np.exp(logp_all), 0.0)
    logp = logp_all[rows, actions]
    ratio = np.exp(logp - logp_old)
    if objective == "clip":
        clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
        obj = np.minimum(ratio * adv, clipped * adv)
        # gradient flows only through the unclipped branch of the min
        g = np.where(ratio * adv <= clipped * adv, ratio * adv, 0.0)
    elif objective == "a2c":
        obj = ratio * adv
        g = ratio * adv
    else:
        raise ValueError(f"unknown objective {objective!r}")
    with np.errstate(invalid="ignore"):
        plogp = np.where(masks, p * logp_all, 0.0)
    entropy = -plogp.sum(axis=1)

    onehot = np.zeros_like(p)
    onehot[rows, actions] = 1.0
    dlogits = -(g[:, None] * (onehot - p)) / n
    dlogits += ent_coef * (plogp + p * entropy[:, None]) / n
    dlogits = np.where(masks, dlogits, 0.0)

    c1, c2, v = policy.critic.forward(obs)
    v = v[:, 0]
    dv = (2.0 * vf_coef * (v - returns) / n)[:, None]

    loss = -obj.mean() + vf_coef * np.mean((v - returns) ** 2) - ent_coef * entropy.mean()
    grads = policy.actor.backward(obs, h1, h2, dlogits) + policy.critic.backward(obs, c1, c2, dv)
    return float(loss), grads


class Trainer:
    """Collect whole episodes, update once ``rollout_steps`` transitions are buffered."""

    def __init__(self, env, cfg: TrainConfig, objective="clip", policy: Optional[PolicyNet] = None):
        self.env = env
        self.cfg = cfg
        self.objective = objective
        self.rng = np.random.default_rng([cfg.seed, 1])
        self.episode_rng = np.random.default_rng([cfg.seed, 2])
        self.policy = policy or PolicyNet.init(env.obs_dim, env.n_slots, cfg.hidden, np.random.default_rng([cfg.seed, 0]))
        self.opt = Adam(self.policy.params, cfg.learning_rate)
        self.buffer = RolloutBuffer()
        self.curve = []
        self.updates = 0

    def run_episode(self):
        env = self.env
        state = env.reset(int(self.episode_rng.integers(2**63)))
        total = 0.0
        while not env.done:
            action, logp, value = self.policy.act(state, self.rng)
            nxt, reward, done, _ = env.step(action)
            self.buffer.add(state.features, state.mask, action, logp, reward, value, done)
            total += reward
            state = nxt
        return total

    def update(self):
        cfg = self.cfg
        data = self.buffer.arrays(cfg.gamma, cfg.gae_lambda)
        adv = data["advantages"]
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = len(adv)
        epochs = cfg.epochs
        for _ in range(epochs):
            order = self.rng.permutation(n)
            for start in range(0, n, cfg.minibatch_size):
                idx = order[start:start + cfg.minibatch_size]
                _, grads = loss_and_grads(self.policy, data["obs"][idx], data["masks"][idx], data["actions"][idx],
                                          data["logprobs"][idx], adv[idx], data["returns"][idx],
                                          cfg.clip_eps, cfg.vf_coef, cfg.ent_coef, self.objective)
                grads, _ = clip_by_global_norm(grads, cfg.max_grad_norm)
                self.opt.step(grads)
                self.updates += 1
        self.buffer.clear()

    def train(self):
        for ep in range(self.cfg.episodes):
            total = self.run_episode()
            self.curve.append(curve_point(ep, total, self.env))
            if len(self.buffer) >= self.cfg.rollout_steps:
                self.update()
        return self.policy, self.curve


def curve_point(episode, reward, env):
    trace = getattr(env, "trace", None)
    if trace is None:
        return (episode, reward, math.nan, math.nan, math.nan)
    return (episode, reward, bool(trace.success), trace.total_delay_s, trace.total_energy_J)


def train(env, cfg: TrainConfig = TrainConfig(), objective="clip"):
    """Train on ``env`` (a :class:`RoutingEnv` or a factory returning one)."""
    if callable(env) and not hasattr(env, "reset"):
        env = env()
    return Trainer(env, cfg, objective).train()


def train_bsa2c(env, cfg: TrainConfig = TrainConfig()):
    """Unclipped advantage actor-critic: ``r * A`` objective, one epoch per batch."""
    from dataclasses import replace
    return train(env, replace(cfg, epochs=1), objective="a2c")
