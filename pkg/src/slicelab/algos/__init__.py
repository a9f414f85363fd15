"""Gradient-based allocation policies: online SAC and offline CQL."""
from .common import ActorCritic, TrainLog, polyak_update
from .cql import conservative_penalty, cql_update, train_offline
from .replay import Batch, ReplayBuffer
from .sac import actor_step, bellman_targets, critic_bellman_step, sac_update, train_online

__all__ = [
    "ActorCritic",
    "Batch",
    "ReplayBuffer",
    "TrainLog",
    "actor_step",
    "bellman_targets",
    "conservative_penalty",
    "critic_bellman_step",
    "cql_update",
    "polyak_update",
    "sac_update",
    "train_offline",
    "train_online",
]
