"""Configuration dataclasses and the INI-style config file loader.

A config file is plain ``key = value`` pairs grouped into sections
([sim], [episode], [reward], [norm], [sac], [cql], [eval]).  Every field
has a default; a file only needs to list what it overrides.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError


@dataclass
class SimConfig:
    """Static parameters of the simulated cell.

    ``ue_counts`` lists users per slice, background slice last.  The last
    slice always carries background traffic and receives no prioritized
    resource share.
    """

    num_slices: int = 3
    num_rbgs: int = 20
    ue_counts: tuple[int, ...] = (5, 5, 5)
    delay_thresholds_ms: tuple[float, ...] = (100.0, 50.0, 10.0)
    area_m: tuple[float, float] = (120.0, 10.0)
    per_ue_rate_bps: float = 2e6
    ue_speed_range: tuple[float, float] = (1.0, 2.0)
    tti_ms: int = 1
    ttis_per_step: int = 100
    steps_per_episode: int = 200
    packet_size_bytes: int = 1500
    slicing_mode: str = "limited_soft"
    # channel model (log-distance path loss, deterministic)
    tx_power_dbm: float = 10.0
    noise_dbm: float = -90.0
    pathloss_ref_db: float = 38.0
    pathloss_exponent: float = 3.0
    ref_distance_m: float = 1.0
    rbg_bandwidth_hz: float = 500e3
    max_spectral_efficiency: float = 3.6
    base_pos_m: tuple[float, float] | None = None  # None -> area center

    @property
    def num_prioritized(self) -> int:
        return self.num_slices - 1

    @property
    def tti_s(self) -> float:
        return self.tti_ms / 1000.0

    @property
    def packet_bits(self) -> int:
        return self.packet_size_bytes * 8

    def base_position(self) -> tuple[float, float]:
        if self.base_pos_m is not None:
            return self.base_pos_m
        return (self.area_m[0] / 2.0, self.area_m[1] / 2.0)

    def validate(self) -> None:
        if self.num_slices < 2:
            raise ConfigError(f"num_slices must be >= 2, got {self.num_slices}")
        if self.num_rbgs < self.num_slices:
            raise ConfigError(
                f"num_rbgs ({self.num_rbgs}) must be >= num_slices ({self.num_slices})"
            )
        if len(self.ue_counts) != self.num_slices:
            raise ConfigError(
                f"ue_counts has {len(self.ue_counts)} entries for {self.num_slices} slices"
            )
        if any(k < 0 for k in self.ue_counts):
            raise ConfigError("ue_counts must be non-negative")
        if len(self.delay_thresholds_ms) != self.num_slices:
            raise ConfigError(
                f"delay_thresholds_ms has {len(self.delay_thresholds_ms)} entries "
                f"for {self.num_slices} slices"
            )
        if any(t <= 0 for t in self.delay_thresholds_ms):
            raise ConfigError("delay thresholds must be > 0")
        if self.slicing_mode not in ("limited_soft", "hard"):
            raise ConfigError(f"unknown slicing_mode {self.slicing_mode!r}")
        if self.tti_ms < 1:
            raise ConfigError("tti_ms must be >= 1")
        if self.ttis_per_step < 1 or self.steps_per_episode < 1:
            raise ConfigError("ttis_per_step and steps_per_episode must be >= 1")
        if self.packet_size_bytes <= 0:
            raise ConfigError("packet_size_bytes must be > 0")
        if self.per_ue_rate_bps < 0:
            raise ConfigError("per_ue_rate_bps must be >= 0")
        lo, hi = self.ue_speed_range
        if lo < 0 or hi < lo:
            raise ConfigError("ue_speed_range must satisfy 0 <= lo <= hi")


@dataclass
class EpisodeConfig:
    """Per-episode randomization: user counts and the episode seed.

    When ``ue_counts`` is given it fixes the prioritized slices' user
    counts exactly (used by evaluation suites).  Otherwise the total is
    drawn uniformly from ``ue_total_range`` and split randomly across the
    prioritized slices, one user minimum each.
    """

    seed: int = 0
    ue_counts: tuple[int, ...] | None = None
    ue_total_range: tuple[int, int] = (6, 20)
    background_ues: int = 5
    delay_thresholds_ms: tuple[float, ...] | None = None  # None -> sim default

    def validate(self, num_prioritized: int) -> None:
        lo, hi = self.ue_total_range
        if lo < num_prioritized or hi < lo:
            raise ConfigError(
                f"ue_total_range {self.ue_total_range} cannot place >=1 UE "
                f"on each of {num_prioritized} prioritized slices"
            )
        if self.background_ues < 0:
            raise ConfigError("background_ues must be >= 0")
        if self.ue_counts is not None and len(self.ue_counts) != num_prioritized:
            raise ConfigError(
                f"ue_counts must list the {num_prioritized} prioritized slices"
            )


@dataclass
class RewardParams:
    """Weights of the per-step allocation utility.

    Per slice: normalized throughput minus delay_weight * delay violation
    rate minus util_weight * resource usage, combined with the priority
    vector (background slice weight 0 by default).
    """

    priorities: tuple[float, ...] = (0.5, 0.5, 0.0)
    delay_weight: float = 4.0
    util_weight: float = 1.0

    @classmethod
    def default(cls, num_slices: int, delay_weight: float = 4.0,
                util_weight: float = 1.0) -> "RewardParams":
        n_pri = num_slices - 1
        p = tuple([1.0 / n_pri] * n_pri + [0.0])
        return cls(priorities=p, delay_weight=delay_weight, util_weight=util_weight)

    def validate(self) -> None:
        if any(p < 0 for p in self.priorities):
            raise ConfigError("priorities must be non-negative")
        if abs(sum(self.priorities) - 1.0) > 1e-9:
            raise ConfigError(f"priorities must sum to 1, got {sum(self.priorities)}")
        if self.delay_weight < 0 or self.util_weight < 0:
            raise ConfigError("reward weights must be >= 0")


@dataclass
class NormConstants:
    """Scaling constants mapping raw metrics into [0, 1] observations."""

    rate_cap_mbps: float = 40.0
    delay_cap_ms: float = 500.0

    def validate(self) -> None:
        if self.rate_cap_mbps <= 0 or self.delay_cap_ms <= 0:
            raise ConfigError("normalization caps must be > 0")


@dataclass
class SacConfig:
    """Online actor-critic trainer settings."""

    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    critic_lr: float = 1e-3
    actor_lr: float = 3e-4
    alpha_lr: float = 3e-4
    target_entropy: float | None = None  # None -> -(action_dim)
    replay_capacity: int = 100_000
    warmup_steps: int = 1000
    hidden_dim: int = 64
    eval_interval: int = 1000
    eval_episodes: int = 5

    def validate(self) -> None:
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError("gamma must be in (0, 1)")
        if not (0.0 < self.tau <= 1.0):
            raise ConfigError("tau must be in (0, 1]")
        if self.batch_size < 1 or self.replay_capacity < 1:
            raise ConfigError("batch_size and replay_capacity must be >= 1")
        if self.warmup_steps < self.batch_size:
            raise ConfigError("warmup_steps must cover at least one batch")


@dataclass
class CqlConfig:
    """Offline conservative Q-learning trainer settings."""

    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    critic_lr: float = 3e-4
    actor_lr: float = 5e-5
    cql_weight: float = 5.0
    num_sampled_actions: int = 10
    fixed_alpha: float = 0.05
    hidden_dim: int = 64
    eval_interval: int = 1000
    eval_episodes: int = 5

    def validate(self) -> None:
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError("gamma must be in (0, 1)")
        if not (0.0 < self.tau <= 1.0):
            raise ConfigError("tau must be in (0, 1]")
        if self.cql_weight < 0:
            raise ConfigError("cql_weight must be >= 0")
        if self.num_sampled_actions < 1:
            raise ConfigError("num_sampled_actions must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class EvalConfig:
    """Evaluation suite shape: UE totals crossed with seeds."""

    ue_totals: tuple[int, ...] = (6, 9, 12, 16, 20)
    seeds: tuple[int, ...] = (0, 1, 2, 3)


@dataclass
class LabConfig:
    """Bundle of every section a config file can carry."""

    sim: SimConfig = field(default_factory=SimConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    norm: NormConstants = field(default_factory=NormConstants)
    sac: SacConfig = field(default_factory=SacConfig)
    cql: CqlConfig = field(default_factory=CqlConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


_SECTIONS = {
    "sim": SimConfig,
    "episode": EpisodeConfig,
    "reward": RewardParams,
    "norm": NormConstants,
    "sac": SacConfig,
    "cql": CqlConfig,
    "eval": EvalConfig,
}


def _parse_value(text: str, like) -> object:
    """Parse an INI string into the type of the default value ``like``."""
    text = text.strip()
    if text.lower() in ("none", ""):
        return None
    if isinstance(like, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int) and not isinstance(like, bool):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, tuple) or like is None:
        parts = [p for p in text.replace(",", " ").split() if p]
        elem = like[0] if isinstance(like, tuple) and like else None
        if isinstance(elem, int):
            return tuple(int(p) for p in parts)
        if isinstance(elem, float):
            return tuple(float(p) for p in parts)
        # unknown element type: prefer ints when every token parses as one
        try:
            return tuple(int(p) for p in parts)
        except ValueError:
            return tuple(float(p) for p in parts)
    return text


def load_config(path: str | Path) -> LabConfig:
    """Read an INI config file, overriding defaults field by field."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(str(path))
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = LabConfig()
    for section, cls in _SECTIONS.items():
        if not parser.has_section(section):
            continue
        defaults = getattr(cfg, section)
        known = {f.name: f for f in fields(cls)}
        overrides = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key [{section}] {key}")
            overrides[key] = _parse_value(raw, getattr(defaults, key))
        setattr(cfg, section, replace(defaults, **overrides))
    return cfg


def save_config(cfg: LabConfig, path: str | Path) -> None:
    """Write every section and field, one ``key = value`` per line."""
    parser = configparser.ConfigParser()
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        parser[section] = {}
        for f in fields(obj):
            val = getattr(obj, f.name)
            if val is None:
                parser[section][f.name] = "none"
            elif isinstance(val, tuple):
                parser[section][f.name] = ", ".join(str(v) for v in val)
            else:
                parser[section][f.name] = str(val)
    with open(path, "w") as fh:
        parser.write(fh)
