"""JSON checkpoints for trained policies.

A checkpoint carries a format/version header, the algorithm name, the
training configuration it was produced with and either the actor/critic
parameter arrays or the Q-table. Floats are written with ``repr`` so a
reload is bit-exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..learn.nets import Mlp
from ..learn.ppo import PolicyNet, TrainConfig
from ..learn.qlearn import QTable

FORMAT = "uavroute-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, algorithm: str, policy, train_cfg: TrainConfig, extra=None) -> Path:
    doc = {"format": FORMAT, "version": VERSION, "algorithm": algorithm, "train_config": train_cfg.to_dict()}
    if isinstance(policy, QTable):
        doc["q_table"] = policy.to_dict()
    else:
        doc["actor"] = [p.tolist() for p in policy.actor.params]
        doc["critic"] = [p.tolist() for p in policy.critic.params]
    if extra:
        doc["extra"] = extra
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1))
    return path


def load_checkpoint(path):
    """Return ``(algorithm, policy, train_cfg, extra)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a JSON checkpoint ({exc})") from None
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    cfg = TrainConfig(**doc["train_config"])
    if "q_table" in doc:
        policy = QTable.from_dict(doc["q_table"])
    else:
        actor = Mlp([np.array(p, dtype=float) for p in doc["actor"]])
        critic = Mlp([np.array(p, dtype=float) for p in doc["critic"]])
        policy = PolicyNet(actor, critic)
    return doc["algorithm"], policy, cfg, doc.get("extra", {})
