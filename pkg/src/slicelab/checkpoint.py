"""Actor/critic checkpoints as self-describing ``.npz`` archives.

A checkpoint carries the networks, the observation schema they were
trained against (slice count, field order), and the normalization
constants, so a loaded policy can refuse an incompatible environment.
Saved content is a pure function of the training run — no wall-clock
fields — so identical runs produce identical checkpoints.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import NormConstants
from .env import OBS_FIELDS
from .errors import CheckpointError
from .nn import Mlp

SCHEMA_VERSION = 1


def observation_schema(num_slices: int, obs_dim: int | None = None,
                       action_dim: int | None = None) -> dict:
    """The observation contract a checkpoint is bound to.

    Defaults describe the slicing observation (5 fields per slice, one
    share per prioritized slice); overrides exist for toy problems.
    """
    return {
        "version": SCHEMA_VERSION,
        "num_slices": int(num_slices),
        "obs_dim": 5 * int(num_slices) if obs_dim is None else int(obs_dim),
        "action_dim": int(num_slices) - 1 if action_dim is None else int(action_dim),
        "obs_fields": list(OBS_FIELDS),
    }


@dataclass
class Checkpoint:
    """Everything needed to act (actor) and to resume analysis (critics)."""

    actor: Mlp
    schema: dict
    norms: NormConstants
    critic1: Mlp | None = None
    critic2: Mlp | None = None
    target1: Mlp | None = None
    target2: Mlp | None = None
    log_alpha: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def num_slices(self) -> int:
        return int(self.schema["num_slices"])

    @property
    def obs_dim(self) -> int:
        return int(self.schema["obs_dim"])

    @property
    def action_dim(self) -> int:
        return int(self.schema["action_dim"])

    def check_compatible(self, num_slices: int) -> None:
        if num_slices != self.num_slices:
            raise CheckpointError(
                f"checkpoint trained for {self.num_slices} slices "
                f"({self.obs_dim}-dim observations), environment has {num_slices}"
            )
        if self.schema.get("obs_fields") != list(OBS_FIELDS):
            raise CheckpointError(
                f"observation field order changed since this checkpoint was "
                f"written: {self.schema.get('obs_fields')} vs {list(OBS_FIELDS)}"
            )


def _pack_mlp(prefix: str, net: Mlp, payload: dict) -> None:
    payload[f"{prefix}_sizes"] = np.asarray(net.sizes, dtype=np.int64)
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        payload[f"{prefix}_w{k}"] = w
        payload[f"{prefix}_b{k}"] = b


def _unpack_mlp(prefix: str, data) -> Mlp:
    sizes = [int(s) for s in data[f"{prefix}_sizes"]]
    net = object.__new__(Mlp)
    net.sizes = sizes
    net.weights = []
    net.biases = []
    for k in range(len(sizes) - 1):
        net.weights.append(np.array(data[f"{prefix}_w{k}"], dtype=np.float64))
        net.biases.append(np.array(data[f"{prefix}_b{k}"], dtype=np.float64))
    return net


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    payload: dict = {
        "schema_json": np.frombuffer(
            json.dumps(ckpt.schema, sort_keys=True).encode(), dtype=np.uint8
        ),
        "meta_json": np.frombuffer(
            json.dumps(ckpt.meta, sort_keys=True).encode(), dtype=np.uint8
        ),
        "norms": np.asarray(
            [ckpt.norms.rate_cap_mbps, ckpt.norms.delay_cap_ms], dtype=np.float64
        ),
        "log_alpha": np.asarray(ckpt.log_alpha, dtype=np.float64),
    }
    _pack_mlp("actor", ckpt.actor, payload)
    for name in ("critic1", "critic2", "target1", "target2"):
        net = getattr(ckpt, name)
        if net is not None:
            _pack_mlp(name, net, payload)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no checkpoint at {path}")
    try:
        data = np.load(path)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    try:
        schema = json.loads(bytes(data["schema_json"]).decode())
        meta = json.loads(bytes(data["meta_json"]).decode())
        norms = NormConstants(
            rate_cap_mbps=float(data["norms"][0]), delay_cap_ms=float(data["norms"][1])
        )
        nets = {}
        for name in ("actor", "critic1", "critic2", "target1", "target2"):
            if f"{name}_sizes" in data:
                nets[name] = _unpack_mlp(name, data)
        if "actor" not in nets:
            raise CheckpointError(f"checkpoint {path} has no actor network")
        return Checkpoint(
            actor=nets["actor"],
            schema=schema,
            norms=norms,
            critic1=nets.get("critic1"),
            critic2=nets.get("critic2"),
            target1=nets.get("target1"),
            target2=nets.get("target2"),
            log_alpha=float(data["log_alpha"]),
            meta=meta,
        )
    except KeyError as exc:
        raise CheckpointError(f"checkpoint {path} missing field {exc}") from exc
