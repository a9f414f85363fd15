"""Allocation policies: two closed-form baselines and learned actors.

All policies share one calling convention: ``act(obs, raw, rng)`` where
``obs`` is the normalized observation, ``raw`` the (N, 5) matrix of the
metrics behind it, and ``rng`` a numpy Generator for any sampling.  The
baselines read raw metrics (previous-interval load / violation rates);
learned actors read the observation.
"""
from __future__ import annotations

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint
from .errors import CheckpointError, ConfigError
from .nn import mean_action, sample_squashed, split_actor_output

LOAD_DELTA = 1e-6


def load_based_action(prev_t_tx, delta: float = LOAD_DELTA) -> np.ndarray:
    """Shares proportional to each prioritized slice's previous load.

    a_i = t_tx_i / (sum_j t_tx_j + delta), summing over prioritized
    slices only.
    """
    prev = np.asarray(prev_t_tx, dtype=np.float64)
    if delta <= 0:
        raise ConfigError("delta must be > 0")
    return prev / (prev.sum() + delta)


def delay_based_action(prev_d_vio) -> np.ndarray:
    """Softmax over the prioritized slices' previous violation rates."""
    v = np.asarray(prev_d_vio, dtype=np.float64)
    e = np.exp(v - v.max())
    return e / e.sum()


class _Baseline:
    """Shared state handling: first decision of an episode is 1/N."""

    deterministic = True

    def __init__(self, num_slices: int = 3):
        self.num_slices = num_slices
        self._steps = 0

    def reset(self) -> None:
        self._steps = 0

    def act(self, obs, raw, rng=None) -> np.ndarray:
        n = self.num_slices
        if raw is not None and len(raw) != n:
            raise ConfigError(f"policy built for {n} slices, metrics have {len(raw)}")
        if self._steps == 0:
            self._steps += 1
            return np.full(n - 1, 1.0 / n)
        self._steps += 1
        return self._rule(np.asarray(raw, dtype=np.float64)[: n - 1])

    def _rule(self, pri_raw: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class LoadBasedPolicy(_Baseline):
    name = "load"

    def _rule(self, pri_raw):
        return load_based_action(pri_raw[:, 1])  # t_tx column


class DelayBasedPolicy(_Baseline):
    name = "delay"

    def _rule(self, pri_raw):
        return delay_based_action(pri_raw[:, 3])  # d_vio column


class ActorPolicy:
    """Squashed-Gaussian actor restored from a checkpoint."""

    def __init__(self, checkpoint: Checkpoint, deterministic: bool = True):
        self.checkpoint = checkpoint
        self.actor = checkpoint.actor
        self.deterministic = deterministic
        self.name = f"actor[{checkpoint.meta.get('algo', 'unknown')}]"
        expected = 2 * checkpoint.action_dim
        if self.actor.out_dim != expected:
            raise CheckpointError(
                f"actor emits {self.actor.out_dim} values, schema wants {expected}"
            )

    def reset(self) -> None:
        pass

    def act(self, obs, raw=None, rng=None) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64).reshape(-1)
        if obs.shape[0] != self.checkpoint.obs_dim:
            raise CheckpointError(
                f"observation has {obs.shape[0]} entries, checkpoint expects "
                f"{self.checkpoint.obs_dim}"
            )
        out = self.actor.forward(obs[None, :])
        mean, log_std = split_actor_output(out)
        if self.deterministic:
            return mean_action(mean)[0]
        if rng is None:
            raise ConfigError("stochastic actor needs an rng")
        eps = rng.standard_normal(mean.shape)
        action, _, _ = sample_squashed(mean, log_std, eps)
        return action[0]


def make_policy(spec: str, num_slices: int = 3, deterministic: bool = True):
    """Build a policy from its CLI name: load | delay | checkpoint:<path>."""
    if spec == "load":
        return LoadBasedPolicy(num_slices)
    if spec == "delay":
        return DelayBasedPolicy(num_slices)
    if spec.startswith("checkpoint:"):
        ckpt = load_checkpoint(spec.split(":", 1)[1])
        ckpt.check_compatible(num_slices)
        return ActorPolicy(ckpt, deterministic=deterministic)
    raise ConfigError(
        f"unknown policy {spec!r}; expected load, delay, or checkpoint:<path>"
    )
