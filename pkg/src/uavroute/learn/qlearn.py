"""Tabular Q-learning baseline on the screened subgraph.

State is the current node id; actions are successor node ids. The update
uses the trainer's learning rate as the step size.
"""
from __future__ import annotations

from collections import defaultdict

import numpy as np

from .ppo import TrainConfig, curve_point


class QTable:
    def __init__(self):
        self.q = defaultdict(dict)

    def value(self, node, nxt) -> float:
        return self.q[node].get(nxt, 0.0)

    def best_slot(self, node, slots, mask) -> int:
        valid = np.flatnonzero(mask)
        vals = [self.value(node, slots[k]) for k in valid]
        return int(valid[int(np.argmax(vals))])

    def max_value(self, node, slots, mask) -> float:
        valid = np.flatnonzero(mask)
        if len(valid) == 0:
            return 0.0
        return max(self.value(node, slots[k]) for k in valid)

    def act_greedy(self, state, node) -> int:
        return self.best_slot(node, state.slots, state.mask)

    def to_dict(self):
        return {str(s): {str(a): v for a, v in sorted(row.items())} for s, row in sorted(self.q.items())}

    @classmethod
    def from_dict(cls, d):
        t = cls()
        for s, row in d.items():
            t.q[int(s)] = {int(a): float(v) for a, v in row.items()}
        return t


def q_update(table: QTable, node, nxt, reward, next_max, done, lr, gamma) -> float:
    target = reward + (0.0 if done else gamma * next_max)
    old = table.value(node, nxt)
    new = old + lr * (target - old)
    table.q[node][nxt] = new
    return new


def train_bsql(env, cfg: TrainConfig = TrainConfig()):
    """Epsilon-greedy Q-learning for ``cfg.episodes`` episodes; returns ``(table, curve)``."""
    rng = np.random.default_rng([cfg.seed, 1])
    episode_rng = np.random.default_rng([cfg.seed, 2])
    table = QTable()
    curve = []
    for ep in range(cfg.episodes):
        state = env.reset(int(episode_rng.integers(2**63)))
        total = 0.0
        while not env.done:
            node = env.current
            if rng.random() < cfg.q_epsilon:
                action = int(rng.choice(np.flatnonzero(state.mask)))
            else:
                action = table.best_slot(node, state.slots, state.mask)
            nxt_node = state.slots[action]
            nxt, reward, done, _ = env.step(action)
            next_max = 0.0 if done else table.max_value(env.current, nxt.slots, nxt.mask)
            q_update(table, node, nxt_node, reward, next_max, done, cfg.learning_rate, cfg.gamma)
            total += reward
            state = nxt
        curve.append(curve_point(ep, total, env))
    return table, curve
