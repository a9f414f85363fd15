"""Offline transition datasets: collection, storage, relabeling, merging.

A dataset file is JSON-lines: one header object on the first line, then
one transition record per line.  Records store RAW slice metrics, never
rewards — rewards are derived at training time by ``relabel`` under
whatever reward weights the experiment wants, which is what makes the
reward-variant and SLA-transfer studies possible on fixed data.

While a collection is in flight the records stream into
``<name>.partial``; the finished file (header first, counted and
hashed) is written only at the end, so a crash leaves an obvious
partial-file marker and never a plausible-but-truncated dataset.

An optional ``.npz`` twin holds the same arrays in binary for fast
loading; the JSONL file remains the source of truth.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import EpisodeConfig, NormConstants, RewardParams, SimConfig
from .env import METRIC_FIELDS, SliceEnv, normalize
from .errors import DatasetError

SCHEMA_VERSION = 1


def schema_hash(num_slices: int, action_dim: int) -> str:
    blob = json.dumps(
        {
            "schema_version": SCHEMA_VERSION,
            "num_slices": int(num_slices),
            "metric_fields": list(METRIC_FIELDS),
            "action_dim": int(action_dim),
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class DatasetHeader:
    num_slices: int
    action_dim: int
    record_count: int
    schema_version: int = SCHEMA_VERSION
    metric_fields: tuple[str, ...] = METRIC_FIELDS
    sla_summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        return schema_hash(self.num_slices, self.action_dim)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "transition-dataset",
                "schema_version": self.schema_version,
                "num_slices": self.num_slices,
                "metric_fields": list(self.metric_fields),
                "action_dim": self.action_dim,
                "schema_hash": self.hash,
                "record_count": self.record_count,
                "sla_summary": self.sla_summary,
                "provenance": self.provenance,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetHeader":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"header is not valid JSON: {exc}") from exc
        if obj.get("kind") != "transition-dataset":
            raise DatasetError("not a transition dataset (bad header kind)")
        header = cls(
            num_slices=int(obj["num_slices"]),
            action_dim=int(obj["action_dim"]),
            record_count=int(obj["record_count"]),
            schema_version=int(obj["schema_version"]),
            metric_fields=tuple(obj["metric_fields"]),
            sla_summary=obj.get("sla_summary", {}),
            provenance=obj.get("provenance", {}),
        )
        if obj.get("schema_hash") != header.hash:
            raise DatasetError(
                f"schema hash mismatch: file says {obj.get('schema_hash')}, "
                f"recomputed {header.hash}"
            )
        return header


def _record_json(eid, sid, raw, action, next_raw, done, ue_counts,
                 thresholds, seed, policy) -> str:
    return json.dumps(
        {
            "episode_id": int(eid),
            "step_index": int(sid),
            "raw": np.asarray(raw).tolist(),
            "action": np.asarray(action).tolist(),
            "next_raw": np.asarray(next_raw).tolist(),
            "done": bool(done),
            "meta": {
                "ue_counts": list(ue_counts),
                "delay_thresholds_ms": list(thresholds),
                "seed": int(seed),
                "policy": policy,
            },
        },
        sort_keys=True,
    )


class Dataset:
    """Columnar in-memory dataset; one row per transition."""

    def __init__(self, header: DatasetHeader, episode_ids, step_indices,
                 raw, actions, next_raw, dones, ue_counts, thresholds,
                 seeds, policies):
        self.header = header
        self.episode_ids = np.asarray(episode_ids, dtype=np.int64)
        self.step_indices = np.asarray(step_indices, dtype=np.int64)
        self.raw = np.asarray(raw, dtype=np.float64)
        self.actions = np.asarray(actions, dtype=np.float64)
        self.next_raw = np.asarray(next_raw, dtype=np.float64)
        self.dones = np.asarray(dones, dtype=bool)
        self.ue_counts = np.asarray(ue_counts, dtype=np.int64)
        self.thresholds = np.asarray(thresholds, dtype=np.float64)
        self.seeds = np.asarray(seeds, dtype=np.int64)
        self.policies = list(policies)

    def __len__(self) -> int:
        return self.raw.shape[0]

    @classmethod
    def empty(cls, num_slices: int, provenance: dict | None = None) -> "Dataset":
        n = num_slices
        header = DatasetHeader(
            num_slices=n, action_dim=n - 1, record_count=0,
            provenance=provenance or {},
        )
        return cls(header, [], [], np.zeros((0, n, 5)), np.zeros((0, n - 1)),
                   np.zeros((0, n, 5)), [], np.zeros((0, n), dtype=np.int64),
                   np.zeros((0, n)), [], [])

    def record_lines(self):
        """Record payload lines, deterministic for fixed content."""
        for i in range(len(self)):
            yield _record_json(
                self.episode_ids[i], self.step_indices[i], self.raw[i],
                self.actions[i], self.next_raw[i], self.dones[i],
                self.ue_counts[i].tolist(), self.thresholds[i].tolist(),
                self.seeds[i], self.policies[i],
            )

    def save(self, path, npz_twin: bool = False) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.header.record_count = len(self)
        with open(path, "w") as fh:
            fh.write(self.header.to_json() + "\n")
            for line in self.record_lines():
                fh.write(line + "\n")
        if npz_twin:
            self.save_npz(path.with_suffix(path.suffix + ".npz"))

    def save_npz(self, path) -> None:
        with open(path, "wb") as fh:
            np.savez(
                fh,
                header_json=np.frombuffer(self.header.to_json().encode(), np.uint8),
                episode_ids=self.episode_ids,
                step_indices=self.step_indices,
                raw=self.raw,
                actions=self.actions,
                next_raw=self.next_raw,
                dones=self.dones.astype(np.int8),
                ue_counts=self.ue_counts,
                thresholds=self.thresholds,
                seeds=self.seeds,
                policies=np.array(self.policies, dtype=object),
            )


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no dataset at {path}")
    if path.suffix == ".npz":
        return _load_npz(path)
    with open(path) as fh:
        first = fh.readline()
        if not first:
            raise DatasetError(f"{path} is empty")
        header = DatasetHeader.from_json(first)
        n, a = header.num_slices, header.action_dim
        cols = {k: [] for k in ("eid", "sid", "raw", "act", "nraw", "done",
                                 "ues", "thr", "seed", "pol")}
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: bad record: {exc}") from exc
            cols["eid"].append(rec["episode_id"])
            cols["sid"].append(rec["step_index"])
            cols["raw"].append(rec["raw"])
            cols["act"].append(rec["action"])
            cols["nraw"].append(rec["next_raw"])
            cols["done"].append(rec["done"])
            meta = rec["meta"]
            cols["ues"].append(meta["ue_counts"])
            cols["thr"].append(meta["delay_thresholds_ms"])
            cols["seed"].append(meta["seed"])
            cols["pol"].append(meta["policy"])
    count = len(cols["eid"])
    raw = np.asarray(cols["raw"], dtype=np.float64).reshape(count, n, 5)
    nraw = np.asarray(cols["nraw"], dtype=np.float64).reshape(count, n, 5)
    acts = np.asarray(cols["act"], dtype=np.float64).reshape(count, a)
    ds = Dataset(header, cols["eid"], cols["sid"], raw, acts, nraw,
                 cols["done"], np.asarray(cols["ues"]).reshape(count, n),
                 np.asarray(cols["thr"]).reshape(count, n), cols["seed"],
                 cols["pol"])
    if header.record_count != count:
        raise DatasetError(
            f"{path}: header promises {header.record_count} records, found {count}"
        )
    return ds


def _load_npz(path) -> Dataset:
    data = np.load(path, allow_pickle=True)
    header = DatasetHeader.from_json(bytes(data["header_json"]).decode())
    ds = Dataset(
        header,
        data["episode_ids"], data["step_indices"], data["raw"],
        data["actions"], data["next_raw"], data["dones"].astype(bool),
        data["ue_counts"], data["thresholds"], data["seeds"],
        [str(p) for p in data["policies"]],
    )
    if header.record_count != len(ds):
        raise DatasetError(f"{path}: header/record count mismatch")
    return ds


def collect(policy, episodes: int, episode_template: EpisodeConfig,
            out_path=None, sim_config: SimConfig | None = None,
            npz_twin: bool = False) -> Dataset:
    """Roll out a behavior policy and store raw transitions.

    Episode seeds derive deterministically from the template seed, so
    the same call produces byte-identical record payloads.
    """
    env = SliceEnv(sim_config)
    n = env.num_slices
    seed_rng = np.random.default_rng(episode_template.seed)
    ep_seeds = seed_rng.integers(0, 2**31 - 1, size=episodes)
    act_rng = np.random.default_rng(seed_rng.integers(0, 2**31 - 1))

    out_path = Path(out_path) if out_path is not None else None
    partial = None
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        partial = out_path.with_name(out_path.name + ".partial")

    cols: dict[str, list] = {k: [] for k in ("eid", "sid", "raw", "act",
                                             "nraw", "done", "ues", "thr",
                                             "seed", "pol")}
    try:
        partial_fh = open(partial, "w") if partial is not None else None
        try:
            for ep in range(episodes):
                episode = EpisodeConfig(
                    seed=int(ep_seeds[ep]),
                    ue_counts=episode_template.ue_counts,
                    ue_total_range=episode_template.ue_total_range,
                    background_ues=episode_template.background_ues,
                    delay_thresholds_ms=episode_template.delay_thresholds_ms,
                )
                policy.reset()
                obs = env.reset(episode)
                meta = env.episode_meta()
                done = False
                step = 0
                while not done:
                    raw = env.last_raw.copy()
                    action = np.asarray(
                        policy.act(obs, raw, act_rng), dtype=np.float64
                    )
                    obs, _, done, next_raw = env.step(action)
                    cols["eid"].append(ep)
                    cols["sid"].append(step)
                    cols["raw"].append(raw)
                    cols["act"].append(action)
                    cols["nraw"].append(next_raw.copy())
                    cols["done"].append(done)
                    cols["ues"].append(meta["ue_counts"])
                    cols["thr"].append(meta["delay_thresholds_ms"])
                    cols["seed"].append(episode.seed)
                    cols["pol"].append(policy.name)
                    if partial_fh is not None:
                        partial_fh.write(
                            _record_json(
                                ep, step, raw, action, next_raw, done,
                                meta["ue_counts"], meta["delay_thresholds_ms"],
                                episode.seed, policy.name,
                            ) + "\n"
                        )
                    step += 1
        finally:
            if partial_fh is not None:
                partial_fh.close()
    except OSError as exc:
        raise DatasetError(f"collection write failed ({exc}); "
                           f"partial marker left at {partial}") from exc

    count = len(cols["eid"])
    header = DatasetHeader(
        num_slices=n,
        action_dim=n - 1,
        record_count=count,
        sla_summary=_sla_summary(cols["thr"]),
        provenance={
            "policy": policy.name,
            "episodes": episodes,
            "template_seed": episode_template.seed,
            "package_version": __version__,
        },
    )
    if count:
        raw = np.stack(cols["raw"])
        nraw = np.stack(cols["nraw"])
        acts = np.stack(cols["act"])
    else:
        raw = np.zeros((0, n, 5))
        nraw = np.zeros((0, n, 5))
        acts = np.zeros((0, n - 1))
    ds = Dataset(header, cols["eid"], cols["sid"], raw, acts, nraw,
                 cols["done"],
                 np.asarray(cols["ues"], dtype=np.int64).reshape(count, n),
                 np.asarray(cols["thr"], dtype=np.float64).reshape(count, n),
                 cols["seed"], cols["pol"])
    if out_path is not None:
        ds.save(out_path, npz_twin=npz_twin)
        if partial is not None and partial.exists():
            partial.unlink()
    return ds


def _sla_summary(threshold_rows) -> dict:
    uniq = sorted({tuple(t) for t in threshold_rows})
    return {"delay_thresholds_ms": [list(t) for t in uniq]}


@dataclass
class TransitionSet:
    """Training-ready flat transitions produced by ``relabel``."""

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray
    num_slices: int

    def __len__(self) -> int:
        return self.obs.shape[0]


def relabel(dataset: Dataset, params: RewardParams,
            norms: NormConstants | None = None) -> TransitionSet:
    """Materialize observations and rewards from stored raw metrics.

    Rewards follow the next-metrics convention: the reward of a record
    is computed from ``next_raw``, the metrics the action produced.
    Pure: never mutates the dataset; same inputs, same outputs.
    """
    params.validate()
    norms = norms if norms is not None else NormConstants()
    n = dataset.header.num_slices
    if len(params.priorities) != n:
        raise DatasetError(
            f"reward priorities cover {len(params.priorities)} slices, "
            f"dataset has {n}"
        )
    count = len(dataset)
    obs = normalize(dataset.raw, norms).reshape(count, n * 5)
    next_obs = normalize(dataset.next_raw, norms).reshape(count, n * 5)
    norm_next = normalize(dataset.next_raw, norms)
    per_slice = (
        norm_next[:, :, 0]
        - params.delay_weight * dataset.next_raw[:, :, 3]
        - params.util_weight * dataset.next_raw[:, :, 2]
    )
    rewards = per_slice @ np.asarray(params.priorities, dtype=np.float64)
    return TransitionSet(
        obs=obs,
        actions=dataset.actions.copy(),
        rewards=rewards,
        next_obs=next_obs,
        dones=dataset.dones.astype(np.float64),
        num_slices=n,
    )


def merge(datasets: list[Dataset]) -> Dataset:
    """Concatenate datasets with re-indexed episode ids."""
    if not datasets:
        raise DatasetError("merge needs at least one dataset")
    first = datasets[0].header
    for ds in datasets[1:]:
        if ds.header.hash != first.hash:
            raise DatasetError(
                f"schema mismatch: {ds.header.hash} vs {first.hash} "
                f"(N={ds.header.num_slices} vs {first.num_slices})"
            )
    eids = []
    offset = 0
    for ds in datasets:
        eids.append(ds.episode_ids + offset)
        offset += int(ds.episode_ids.max()) + 1 if len(ds) else 0
    thresholds = np.concatenate([ds.thresholds for ds in datasets]) if datasets else None
    header = DatasetHeader(
        num_slices=first.num_slices,
        action_dim=first.action_dim,
        record_count=sum(len(ds) for ds in datasets),
        sla_summary=_sla_summary([tuple(t) for ds in datasets for t in ds.thresholds]),
        provenance={
            "merged_from": [ds.header.provenance for ds in datasets],
            "package_version": __version__,
        },
    )
    return Dataset(
        header,
        np.concatenate(eids),
        np.concatenate([ds.step_indices for ds in datasets]),
        np.concatenate([ds.raw for ds in datasets]),
        np.concatenate([ds.actions for ds in datasets]),
        np.concatenate([ds.next_raw for ds in datasets]),
        np.concatenate([ds.dones for ds in datasets]),
        np.concatenate([ds.ue_counts for ds in datasets]),
        thresholds,
        np.concatenate([ds.seeds for ds in datasets]),
        [p for ds in datasets for p in ds.policies],
    )


def validate_file(path) -> list[tuple[str, bool, str]]:
    """Structural and range checks; returns (check, passed, detail) rows."""
    path = Path(path)
    report: list[tuple[str, bool, str]] = []

    def add(name, ok, detail=""):
        report.append((name, bool(ok), detail))

    if not path.exists():
        raise DatasetError(f"no dataset at {path}")
    try:
        ds = load_dataset(path)
    except DatasetError as exc:
        add("loadable", False, str(exc))
        return report
    add("loadable", True, f"{len(ds)} records")
    add("header_count", ds.header.record_count == len(ds),
        f"header {ds.header.record_count} vs {len(ds)}")
    add("schema_hash", True, ds.header.hash)  # from_json already verified
    if len(ds):
        d_vio = ds.raw[:, :, 3]
        util = ds.raw[:, :, 2]
        nd_vio = ds.next_raw[:, :, 3]
        nutil = ds.next_raw[:, :, 2]
        add("d_vio_range",
            bool((d_vio >= 0).all() and (d_vio <= 1).all()
                 and (nd_vio >= 0).all() and (nd_vio <= 1).all()),
            f"max {max(d_vio.max(), nd_vio.max()):.4f}")
        add("util_range",
            bool((util >= 0).all() and (util <= 1).all()
                 and (nutil >= 0).all() and (nutil <= 1).all()),
            f"max {max(util.max(), nutil.max()):.4f}")
        add("action_range",
            bool((ds.actions >= 0).all() and (ds.actions <= 1).all()),
            f"min {ds.actions.min():.4f} max {ds.actions.max():.4f}")
        add("throughput_nonnegative",
            bool((ds.raw[:, :, 0] >= 0).all() and (ds.raw[:, :, 1] >= 0).all()), "")
        monotone = True
        for eid in np.unique(ds.episode_ids):
            sel = ds.step_indices[ds.episode_ids == eid]
            if not (np.diff(sel) == 1).all() or sel[0] != 0:
                monotone = False
                break
        add("step_indices_monotone", monotone, "")
        per_episode_done = True
        for eid in np.unique(ds.episode_ids):
            flags = ds.dones[ds.episode_ids == eid]
            if flags[:-1].any() or not flags[-1]:
                per_episode_done = False
                break
        add("done_only_terminal", per_episode_done, "")
    return report
