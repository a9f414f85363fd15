"""Uniform-sampling transition storage for both trainers.

Online training appends into a ring buffer; offline training loads a
fixed transition set once and only ever samples.  Either way a sampled
minibatch is a ``Batch`` of float64 arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError


@dataclass
class Batch:
    obs: np.ndarray        # (B, obs_dim)
    actions: np.ndarray    # (B, action_dim)
    rewards: np.ndarray    # (B,)
    next_obs: np.ndarray   # (B, obs_dim)
    dones: np.ndarray      # (B,) float 0/1

    def __len__(self) -> int:
        return self.obs.shape[0]


class ReplayBuffer:
    """Fixed-capacity ring buffer over flat transitions."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        if capacity < 1:
            raise ConfigError("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, obs, action, reward, next_obs, done) -> None:
        i = self._next
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = float(done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def extend(self, obs, actions, rewards, next_obs, dones) -> None:
        for row in zip(obs, actions, rewards, next_obs, dones):
            self.add(*row)

    @classmethod
    def from_arrays(cls, obs, actions, rewards, next_obs, dones) -> "ReplayBuffer":
        obs = np.asarray(obs, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        if obs.ndim != 2 or actions.ndim != 2 or obs.shape[0] != actions.shape[0]:
            raise ShapeError(
                f"transition arrays disagree: obs {obs.shape}, actions {actions.shape}"
            )
        buf = cls(obs.shape[0], obs.shape[1], actions.shape[1])
        buf.obs[:] = obs
        buf.actions[:] = actions
        buf.rewards[:] = np.asarray(rewards, dtype=np.float64)
        buf.next_obs[:] = np.asarray(next_obs, dtype=np.float64)
        buf.dones[:] = np.asarray(dones, dtype=np.float64)
        buf._size = obs.shape[0]
        return buf

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._size == 0:
            raise ConfigError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return Batch(
            obs=self.obs[idx],
            actions=self.actions[idx],
            rewards=self.rewards[idx],
            next_obs=self.next_obs[idx],
            dones=self.dones[idx],
        )
