"""Shared actor-critic machinery: network bundle, targets, logging."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..checkpoint import Checkpoint, observation_schema
from ..config import NormConstants
from ..errors import NumericError
from ..nn import Adam, Mlp


class ActorCritic:
    """Actor, twin critics, their targets, and the optimizers.

    Initialization is a pure function of the supplied generator, so a
    trainer seeded identically rebuilds identical networks.
    """

    def __init__(self, obs_dim: int, action_dim: int, hidden: int,
                 actor_lr: float, critic_lr: float, rng: np.random.Generator,
                 alpha_lr: float | None = None, init_log_alpha: float = 0.0):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.actor = Mlp([obs_dim, hidden, hidden, 2 * action_dim], rng,
                         final_scale=1e-2)
        self.critic1 = Mlp([obs_dim + action_dim, hidden, hidden, 1], rng)
        self.critic2 = Mlp([obs_dim + action_dim, hidden, hidden, 1], rng)
        self.target1 = self.critic1.clone()
        self.target2 = self.critic2.clone()
        self.actor_opt = Adam(self.actor.parameters(), lr=actor_lr)
        self.critic_opt = Adam(
            self.critic1.parameters() + self.critic2.parameters(), lr=critic_lr
        )
        self.log_alpha = np.zeros(1) + init_log_alpha
        self.alpha_opt = (
            Adam([self.log_alpha], lr=alpha_lr) if alpha_lr is not None else None
        )

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    def polyak_targets(self, tau: float) -> None:
        polyak_update(self.target1, self.critic1, tau)
        polyak_update(self.target2, self.critic2, tau)

    def checkpoint(self, num_slices: int, norms: NormConstants,
                   meta: dict | None = None) -> Checkpoint:
        return Checkpoint(
            actor=self.actor.clone(),
            schema=observation_schema(num_slices, obs_dim=self.obs_dim,
                                      action_dim=self.action_dim),
            norms=norms,
            critic1=self.critic1.clone(),
            critic2=self.critic2.clone(),
            target1=self.target1.clone(),
            target2=self.target2.clone(),
            log_alpha=float(self.log_alpha[0]),
            meta=dict(meta or {}),
        )


def polyak_update(target: Mlp, source: Mlp, tau: float) -> None:
    """target <- (1 - tau) * target + tau * source, in place."""
    for t, s in zip(target.parameters(), source.parameters()):
        t *= 1.0 - tau
        t += tau * s


def check_finite(name: str, value: float) -> float:
    if not np.isfinite(value):
        raise NumericError(f"{name} became non-finite ({value}); aborting training")
    return float(value)


class TrainLog:
    """Append-only training record with CSV export.

    Rows are dicts sharing the key set of the first row; ``step`` is the
    trainer's step counter (one environment sample plus one update
    online, one minibatch update offline).
    """

    def __init__(self):
        self.rows: list[dict] = []

    def append(self, **fields) -> None:
        self.rows.append(fields)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, key: str) -> list:
        return [r[key] for r in self.rows if key in r]

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        keys: list[str] = []
        for row in self.rows:
            for k in row:
                if k not in keys:
                    keys.append(k)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(self.rows)

    @classmethod
    def read_csv(cls, path) -> "TrainLog":
        log = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                parsed = {}
                for k, v in row.items():
                    if v is None or v == "":
                        continue
                    try:
                        parsed[k] = int(v)
                    except ValueError:
                        try:
                            parsed[k] = float(v)
                        except ValueError:
                            parsed[k] = v
                log.rows.append(parsed)
        return log
