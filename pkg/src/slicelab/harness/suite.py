"""Fixed evaluation suite: UE-count configurations crossed with seeds.

A policy is judged over the whole suite — one full episode per entry,
deterministic actions — and summarized as one table row: mean/std of
episode return, delay-violation rate, prioritized throughput, and
prioritized resource usage, with the std taken across environments.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from ..config import EpisodeConfig, EvalConfig, NormConstants, RewardParams, SimConfig
from ..env import SliceEnv
from ..errors import ConfigError


@dataclass(frozen=True)
class EvalPoint:
    """One suite entry: total prioritized UEs and an episode seed."""

    ue_total: int
    seed: int


def even_split(total: int, parts: int) -> tuple[int, ...]:
    """Split ``total`` into ``parts`` integers differing by at most one."""
    if parts < 1 or total < parts:
        raise ConfigError(f"cannot split {total} UEs across {parts} slices")
    base, rem = divmod(total, parts)
    return tuple(base + 1 if i < rem else base for i in range(parts))


@dataclass
class ResultRow:
    """Aggregate evaluation of one policy over a suite."""

    policy: str
    episodes: int
    return_mean: float
    return_std: float
    d_vio_pct_mean: float
    d_vio_pct_std: float
    throughput_mbps_mean: float
    throughput_mbps_std: float
    util_pct_mean: float
    util_pct_std: float
    slice1_d_vio_pct_mean: float
    slice1_d_vio_pct_std: float


def rows_to_csv(rows: list[ResultRow], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [f.name for f in fields(ResultRow)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in rows:
            writer.writerow([getattr(row, n) for n in names])


def rows_from_csv(path) -> list[ResultRow]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no result table at {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            rows.append(ResultRow(
                policy=rec["policy"],
                episodes=int(rec["episodes"]),
                **{k: float(v) for k, v in rec.items()
                   if k not in ("policy", "episodes")},
            ))
    return rows


class EvalResult:
    """Per-environment evaluation traces backing one ResultRow."""

    def __init__(self, policy_name: str, returns, d_vio, throughput, util):
        self.policy_name = policy_name
        self.returns = np.asarray(returns, dtype=np.float64)
        # (episodes, prioritized slices) mean delay-violation fractions
        self.d_vio = np.asarray(d_vio, dtype=np.float64)
        self.throughput = np.asarray(throughput, dtype=np.float64)
        self.util = np.asarray(util, dtype=np.float64)

    @property
    def episodes(self) -> int:
        return self.returns.shape[0]

    def row(self) -> ResultRow:
        d_vio_overall = self.d_vio.mean(axis=1)
        return ResultRow(
            policy=self.policy_name,
            episodes=self.episodes,
            return_mean=float(self.returns.mean()),
            return_std=float(self.returns.std()),
            d_vio_pct_mean=float(100.0 * d_vio_overall.mean()),
            d_vio_pct_std=float(100.0 * d_vio_overall.std()),
            throughput_mbps_mean=float(self.throughput.mean()),
            throughput_mbps_std=float(self.throughput.std()),
            util_pct_mean=float(100.0 * self.util.mean()),
            util_pct_std=float(100.0 * self.util.std()),
            slice1_d_vio_pct_mean=float(100.0 * self.d_vio[:, 0].mean()),
            slice1_d_vio_pct_std=float(100.0 * self.d_vio[:, 0].std()),
        )


def returns_eval_fn(sim_config: SimConfig | None = None,
                    reward_params: RewardParams | None = None,
                    episodes: int = 5, base_seed: int = 1000):
    """Training-cadence probe: mean deterministic return over a few
    fixed-seed episodes.  Cheaper than the full suite; used by the
    trainers' periodic evaluation hook."""
    sim = sim_config if sim_config is not None else SimConfig()
    params = (reward_params if reward_params is not None
              else RewardParams.default(sim.num_slices))

    def eval_fn(policy) -> float:
        total = 0.0
        for i in range(episodes):
            env = SliceEnv(sim, params)
            policy.reset()
            obs = env.reset(EpisodeConfig(seed=base_seed + i))
            done = False
            while not done:
                obs, reward, done, _ = env.step(policy.act(obs, env.last_raw))
                total += reward
        return total / episodes

    return eval_fn


class EvalSuite:
    """The evaluation environments a policy is scored on."""

    def __init__(self, points: list[EvalPoint],
                 sim_config: SimConfig | None = None,
                 reward_params: RewardParams | None = None,
                 norms: NormConstants | None = None,
                 delay_thresholds_ms: tuple[float, ...] | None = None):
        if len(set(points)) != len(points):
            raise ConfigError("evaluation suite entries must be distinct")
        if not points:
            raise ConfigError("evaluation suite is empty")
        self.points = list(points)
        self.sim_config = sim_config if sim_config is not None else SimConfig()
        n = self.sim_config.num_slices
        self.reward_params = (
            reward_params if reward_params is not None
            else RewardParams.default(n)
        )
        self.norms = norms if norms is not None else NormConstants()
        self.delay_thresholds_ms = delay_thresholds_ms

    @classmethod
    def default(cls, eval_cfg: EvalConfig | None = None,
                **kwargs) -> "EvalSuite":
        cfg = eval_cfg if eval_cfg is not None else EvalConfig()
        points = [EvalPoint(total, seed)
                  for total in cfg.ue_totals for seed in cfg.seeds]
        return cls(points, **kwargs)

    def __len__(self) -> int:
        return len(self.points)

    def episode_for(self, point: EvalPoint) -> EpisodeConfig:
        n_pri = self.sim_config.num_prioritized
        return EpisodeConfig(
            seed=point.seed,
            ue_counts=even_split(point.ue_total, n_pri),
            background_ues=self.sim_config.ue_counts[-1],
            delay_thresholds_ms=self.delay_thresholds_ms,
        )

    def evaluate(self, policy, name: str | None = None) -> EvalResult:
        """One deterministic episode per suite point, reduced in order."""
        n_pri = self.sim_config.num_prioritized
        returns, d_vio, throughput, util = [], [], [], []
        for point in self.points:
            env = SliceEnv(self.sim_config, self.reward_params, self.norms)
            policy.reset()
            obs = env.reset(self.episode_for(point))
            done = False
            ep_return = 0.0
            vio_sum = np.zeros(n_pri)
            thr_sum = 0.0
            util_sum = 0.0
            steps = 0
            while not done:
                action = policy.act(obs, env.last_raw)
                obs, reward, done, raw = env.step(action)
                ep_return += reward
                vio_sum += raw[:n_pri, 3]
                thr_sum += raw[:n_pri, 0].sum()
                util_sum += raw[:n_pri, 2].sum()
                steps += 1
            returns.append(ep_return)
            d_vio.append(vio_sum / steps)
            throughput.append(thr_sum / steps)
            util.append(util_sum / steps)
        label = name if name is not None else getattr(policy, "name", "policy")
        return EvalResult(label, returns, d_vio, throughput, util)
