from .nets import Adam, Mlp
from .ppo import (PolicyNet, RolloutBuffer, TrainConfig, Trainer, clipped_loss, clipped_objective,
                  gae_advantages, loss_and_grads, masked_sample, train, train_bsa2c)
from .qlearn import QTable, train_bsql

__all__ = [
    "Adam", "Mlp", "PolicyNet", "RolloutBuffer", "TrainConfig", "Trainer", "clipped_loss",
    "clipped_objective", "gae_advantages", "loss_and_grads", "masked_sample", "train", "train_bsa2c",
    "QTable", "train_bsql",
]
