"""Episodic decision-process wrapper around the slicing simulator.

Observations are flat 5N vectors, slice-major, every entry scaled to
[0, 1]; actions are the N-1 prioritized resource shares; the scalar
reward combines normalized throughput, delay-violation rate, and
resource usage under a fixed priority vector.  ``normalize`` and
``reward_of`` are pure functions so dataset relabeling can reuse them
without an environment instance.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .config import EpisodeConfig, NormConstants, RewardParams, SimConfig
from .errors import ProtocolError
from .sim import AllocationPlan, SliceMetrics, create_sim, step_interval

# raw per-slice metric fields, in storage order (matches SliceMetrics)
METRIC_FIELDS = ("t_rx_mbps", "t_tx_mbps", "util", "d_vio", "d_avg_ms")
# their normalized counterparts, in observation order
OBS_FIELDS = ("t_rx_norm", "t_tx_norm", "util", "d_vio", "d_avg_norm")


def observation_layout(num_slices: int) -> tuple[str, ...]:
    """Names of the 5N observation entries, slice-major."""
    return tuple(
        f"slice{i}_{f}" for i in range(num_slices) for f in OBS_FIELDS
    )


def normalize(raw, norms: NormConstants) -> np.ndarray:
    """Scale raw metric rows (..., 5) into [0, 1] observation rows.

    Throughput and load divide by ``rate_cap_mbps``, mean delay by
    ``delay_cap_ms``; util and d_vio are already fractions.  Everything
    clips at 1.
    """
    raw = np.asarray(raw, dtype=np.float64)
    out = np.empty_like(raw)
    out[..., 0] = raw[..., 0] / norms.rate_cap_mbps
    out[..., 1] = raw[..., 1] / norms.rate_cap_mbps
    out[..., 2] = raw[..., 2]
    out[..., 3] = raw[..., 3]
    out[..., 4] = raw[..., 4] / norms.delay_cap_ms
    return np.clip(out, 0.0, 1.0)


def reward_of(raw, params: RewardParams, norms: NormConstants) -> float:
    """Priority-weighted per-slice utility of one metric snapshot.

    Per slice: normalized throughput minus ``delay_weight`` times the
    delay-violation rate minus ``util_weight`` times resource usage.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] != len(METRIC_FIELDS):
        raise ValueError(f"expected (N, 5) metric matrix, got {raw.shape}")
    norm_rows = normalize(raw, norms)
    r = (
        norm_rows[:, 0]
        - params.delay_weight * raw[:, 3]
        - params.util_weight * raw[:, 2]
    )
    p = np.asarray(params.priorities, dtype=np.float64)
    return float(p @ r)


def metrics_matrix(metrics: list[SliceMetrics]) -> np.ndarray:
    return np.stack([m.as_array() for m in metrics])


def _draw_ue_counts(episode: EpisodeConfig, n_pri: int, rng) -> tuple[int, ...]:
    if episode.ue_counts is not None:
        return tuple(int(c) for c in episode.ue_counts)
    lo, hi = episode.ue_total_range
    total = int(rng.integers(lo, hi + 1))
    extra = rng.multinomial(total - n_pri, np.full(n_pri, 1.0 / n_pri))
    return tuple(int(1 + e) for e in extra)


class SliceEnv:
    """One cell, one agent; reset/step episodic protocol.

    Instances are independent and single-threaded.  ``reset`` accepts an
    ``EpisodeConfig`` whose seed controls the UE-count draw and all
    simulator randomness; the same episode config reproduces the same
    episode exactly.
    """

    def __init__(
        self,
        sim_config: SimConfig | None = None,
        reward_params: RewardParams | None = None,
        norms: NormConstants | None = None,
    ):
        self.base_config = sim_config if sim_config is not None else SimConfig()
        self.base_config.validate()
        n = self.base_config.num_slices
        self.reward_params = (
            reward_params if reward_params is not None else RewardParams.default(n)
        )
        self.reward_params.validate()
        if len(self.reward_params.priorities) != n:
            raise ValueError(
                f"priority vector has {len(self.reward_params.priorities)} "
                f"entries for {n} slices"
            )
        self.norms = norms if norms is not None else NormConstants()
        self.obs_dim = 5 * n
        self.action_dim = n - 1
        self.sim = None
        self._t = 0
        self._done = True
        self.last_raw: np.ndarray | None = None
        self.episode: EpisodeConfig | None = None

    @property
    def num_slices(self) -> int:
        return self.base_config.num_slices

    def reset(self, episode: EpisodeConfig | None = None) -> np.ndarray:
        """Start a fresh episode; returns the first observation.

        The initial observation comes from one warm-up interval under
        equal shares 1/N, so queue and delay state are defined before
        the agent acts.
        """
        if episode is None:
            episode = EpisodeConfig(seed=0)
        n = self.base_config.num_slices
        episode.validate(n - 1)
        ss = np.random.SeedSequence(episode.seed)
        draw_ss, sim_ss = ss.spawn(2)
        rng = np.random.Generator(np.random.PCG64(draw_ss))
        pri_counts = _draw_ue_counts(episode, n - 1, rng)
        ue_counts = pri_counts + (episode.background_ues,)
        thresholds = (
            tuple(episode.delay_thresholds_ms)
            if episode.delay_thresholds_ms is not None
            else self.base_config.delay_thresholds_ms
        )
        cfg = replace(
            self.base_config, ue_counts=ue_counts, delay_thresholds_ms=thresholds
        )
        self.sim = create_sim(cfg, sim_ss)
        self.episode = episode
        self._t = 0
        self._done = False
        warmup = AllocationPlan.from_action(
            np.full(n - 1, 1.0 / n), cfg.num_rbgs
        )
        metrics = step_interval(self.sim, warmup)
        self.last_raw = metrics_matrix(metrics)
        return normalize(self.last_raw, self.norms).reshape(-1)

    def step(self, action):
        """Apply prioritized shares for one interval.

        Returns ``(obs, reward, done, raw)`` where ``raw`` is the (N, 5)
        matrix of post-action slice metrics (the reward is computed from
        these same metrics).  Out-of-range action entries are clamped.
        """
        if self._done or self.sim is None:
            raise ProtocolError("step() called on a finished episode; call reset()")
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape[0] != self.action_dim:
            raise ProtocolError(
                f"action has {action.shape[0]} entries, expected {self.action_dim}"
            )
        if not np.isfinite(action).all():
            raise ProtocolError(f"non-finite action {action}")
        plan = AllocationPlan.from_action(action, self.base_config.num_rbgs)
        metrics = step_interval(self.sim, plan)
        raw = metrics_matrix(metrics)
        obs = normalize(raw, self.norms).reshape(-1)
        reward = reward_of(raw, self.reward_params, self.norms)
        self.last_raw = raw
        self._t += 1
        if self._t >= self.base_config.steps_per_episode:
            self._done = True
        return obs, reward, self._done, raw

    @property
    def steps_taken(self) -> int:
        return self._t

    @property
    def done(self) -> bool:
        return self._done

    def episode_meta(self) -> dict:
        """Provenance of the running episode, for dataset records."""
        if self.sim is None or self.episode is None:
            raise ProtocolError("no episode started")
        return {
            "ue_counts": list(int(c) for c in self.sim.cfg.ue_counts),
            "delay_thresholds_ms": list(float(t) for t in self.sim.cfg.delay_thresholds_ms),
            "seed": int(self.episode.seed),
        }
