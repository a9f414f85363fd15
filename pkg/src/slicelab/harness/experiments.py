"""Staged experiment runner with content-hash idempotence.

Every experiment is a sequence of named stages (collect, merge, train,
evaluate) whose inputs are hashed into a manifest next to the outputs;
re-running a completed experiment skips every stage whose hash still
matches and whose outputs still exist, and reproduces identical files
otherwise.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..checkpoint import load_checkpoint, save_checkpoint
from ..config import (
    CqlConfig,
    EpisodeConfig,
    EvalConfig,
    RewardParams,
    SacConfig,
    SimConfig,
)
from ..datasets import collect, load_dataset, merge
from ..env import SliceEnv
from ..errors import ConfigError
from ..algos import train_offline, train_online
from ..policies import ActorPolicy, make_policy
from .suite import EvalSuite, ResultRow, rows_from_csv, rows_to_csv


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def params_digest(obj) -> str:
    """Stable hash of a JSON-serializable parameter structure."""
    blob = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class Manifest:
    """Stage bookkeeping stored as JSON next to the experiment outputs."""

    def __init__(self, path):
        self.path = Path(path)
        if self.path.exists():
            self.data = json.loads(self.path.read_text())
        else:
            self.data = {"stages": {}, "info": {}}

    def stage_current(self, name: str, stage_hash: str, outputs) -> bool:
        entry = self.data["stages"].get(name)
        if entry is None or entry.get("hash") != stage_hash:
            return False
        return all(Path(p).exists() for p in entry.get("outputs", []))

    def record(self, name: str, stage_hash: str, outputs) -> None:
        self.data["stages"][name] = {
            "hash": stage_hash,
            "outputs": [str(p) for p in outputs],
        }
        self.save()

    def set_info(self, key: str, value) -> None:
        self.data["info"][key] = value
        self.save()

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True))


class StageRunner:
    """Runs named stages once, skipping those the manifest proves done."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest(self.out_dir / "manifest.json")
        self.executed: list[str] = []
        self.skipped: list[str] = []

    def run(self, name: str, stage_hash: str, outputs, fn) -> bool:
        """Execute ``fn`` unless the stage is already done; True if run."""
        outputs = [Path(p) for p in outputs]
        if self.manifest.stage_current(name, stage_hash, outputs):
            self.skipped.append(name)
            return False
        try:
            fn()
        except ConfigError as exc:
            raise ConfigError(f"stage '{name}': {exc}") from exc
        missing = [str(p) for p in outputs if not p.exists()]
        if missing:
            raise ConfigError(f"stage '{name}' did not produce {missing}")
        self.manifest.record(name, stage_hash, outputs)
        self.executed.append(name)
        return True


@dataclass
class CollectRecipe:
    """One behavior-policy collection stage."""

    policy: str = "load"
    episodes: int = 10
    seed: int = 0
    delay_thresholds_ms: tuple[float, ...] | None = None

    def label(self) -> str:
        thr = ("-" + "-".join(f"{t:g}" for t in self.delay_thresholds_ms)
               if self.delay_thresholds_ms else "")
        return f"{self.policy.replace(':', '_').replace('/', '_')}{thr}-s{self.seed}"


@dataclass
class ExperimentSpec:
    """Everything one staged run needs, with explicit seeds."""

    name: str
    algo: str = "cql"
    seeds: tuple[int, ...] = (0,)
    total_steps: int = 0
    recipes: tuple[CollectRecipe, ...] = ()
    dataset_paths: tuple[str, ...] = ()
    reward_params: RewardParams | None = None
    sim_config: SimConfig | None = None
    sac: SacConfig = field(default_factory=SacConfig)
    cql: CqlConfig = field(default_factory=CqlConfig)
    eval_cfg: EvalConfig = field(default_factory=EvalConfig)
    eval_thresholds: tuple[float, ...] | None = None

    def validate(self) -> None:
        if self.algo not in ("sac", "cql"):
            raise ConfigError(f"unknown algorithm {self.algo!r}")
        if not self.seeds:
            raise ConfigError("experiment needs at least one seed")
        if self.algo == "cql" and not (self.recipes or self.dataset_paths):
            raise ConfigError(
                "stage 'train' missing dependency: offline training needs "
                "datasets (recipes or dataset_paths)"
            )


def _collect_stages(runner: StageRunner, spec: ExperimentSpec,
                    sim: SimConfig) -> list[Path]:
    paths = []
    for recipe in spec.recipes:
        out = runner.out_dir / "datasets" / f"{recipe.label()}.jsonl"
        stage = f"collect-{recipe.label()}"
        stage_hash = params_digest({
            "recipe": asdict(recipe),
            "sim": asdict(sim),
        })

        def do_collect(recipe=recipe, out=out):
            template = EpisodeConfig(
                seed=recipe.seed,
                delay_thresholds_ms=recipe.delay_thresholds_ms,
            )
            collect(make_policy(recipe.policy, sim.num_slices),
                    recipe.episodes, template, out_path=out, sim_config=sim)

        runner.run(stage, stage_hash, [out], do_collect)
        paths.append(out)
    for p in spec.dataset_paths:
        p = Path(p)
        if not p.exists():
            raise ConfigError(
                f"stage 'train' missing dependency: dataset {p} not found"
            )
        paths.append(p)
    return paths


def _assemble_dataset(runner: StageRunner, paths: list[Path]) -> Path:
    if len(paths) == 1:
        return paths[0]
    out = runner.out_dir / "datasets" / "merged.jsonl"
    stage_hash = params_digest({"inputs": [file_digest(p) for p in paths]})

    def do_merge():
        merge([load_dataset(p) for p in paths]).save(out)

    runner.run("merge", stage_hash, [out], do_merge)
    return out


def _train_stages(runner: StageRunner, spec: ExperimentSpec, sim: SimConfig,
                  params: RewardParams, dataset: Path | None) -> dict[int, Path]:
    checkpoints = {}
    for seed in spec.seeds:
        ck_path = runner.out_dir / "checkpoints" / f"{spec.name}-seed{seed}.npz"
        log_path = runner.out_dir / "logs" / f"train-seed{seed}.csv"
        common = {
            "algo": spec.algo, "seed": seed, "total_steps": spec.total_steps,
            "reward": asdict(params), "sim": asdict(sim),
        }
        if spec.algo == "cql":
            stage_hash = params_digest({
                **common, "cql": asdict(spec.cql),
                "dataset": file_digest(dataset),
            })

            def do_train(seed=seed, ck_path=ck_path, log_path=log_path):
                ds = load_dataset(dataset)
                ck, log = train_offline(ds, params, spec.cql,
                                        spec.total_steps, seed=seed)
                ck_path.parent.mkdir(parents=True, exist_ok=True)
                save_checkpoint(ck, ck_path)
                log_path.parent.mkdir(parents=True, exist_ok=True)
                log.write_csv(log_path)
        else:
            stage_hash = params_digest({**common, "sac": asdict(spec.sac)})

            def do_train(seed=seed, ck_path=ck_path, log_path=log_path):
                env = SliceEnv(sim, params)
                ck, log = train_online(env, spec.sac, spec.total_steps,
                                       seed=seed)
                ck_path.parent.mkdir(parents=True, exist_ok=True)
                save_checkpoint(ck, ck_path)
                log_path.parent.mkdir(parents=True, exist_ok=True)
                log.write_csv(log_path)

        runner.run(f"train-seed{seed}", stage_hash, [ck_path, log_path],
                   do_train)
        checkpoints[seed] = ck_path
    return checkpoints


def _evaluate_stage(runner: StageRunner, spec: ExperimentSpec,
                    sim: SimConfig, params: RewardParams,
                    checkpoints: dict[int, Path]) -> list[ResultRow]:
    results_path = runner.out_dir / "results.csv"
    suite_desc = {
        "eval": asdict(spec.eval_cfg), "sim": asdict(sim),
        "reward": asdict(params), "thresholds": spec.eval_thresholds,
    }
    stage_hash = params_digest({
        **suite_desc,
        "checkpoints": {s: file_digest(p) for s, p in checkpoints.items()},
    })

    def do_evaluate():
        suite = EvalSuite.default(
            spec.eval_cfg, sim_config=sim, reward_params=params,
            delay_thresholds_ms=spec.eval_thresholds,
        )
        rows = []
        for seed, ck_path in checkpoints.items():
            policy = ActorPolicy(load_checkpoint(ck_path))
            result = suite.evaluate(policy, name=f"{spec.name}-seed{seed}")
            rows.append(result.row())
        rows_to_csv(rows, results_path)

    runner.run("evaluate", stage_hash, [results_path], do_evaluate)
    return rows_from_csv(results_path)


def run_experiment(spec: ExperimentSpec, out_dir) -> list[ResultRow]:
    """Execute (or resume) one experiment; returns its result table."""
    spec.validate()
    runner = StageRunner(out_dir)
    sim = spec.sim_config if spec.sim_config is not None else SimConfig()
    params = (spec.reward_params if spec.reward_params is not None
              else RewardParams.default(sim.num_slices))
    dataset = None
    if spec.algo == "cql":
        paths = _collect_stages(runner, spec, sim)
        dataset = _assemble_dataset(runner, paths)
    checkpoints = _train_stages(runner, spec, sim, params, dataset)
    rows = _evaluate_stage(runner, spec, sim, params, checkpoints)
    runner.manifest.set_info("spec", {
        "name": spec.name, "algo": spec.algo, "seeds": list(spec.seeds),
        "total_steps": spec.total_steps,
    })
    return rows


def _slice1_thresholds(sim: SimConfig, value: float) -> tuple[float, ...]:
    base = tuple(sim.delay_thresholds_ms)
    return (float(value),) + base[1:]


def baseline_rows(sim: SimConfig, params: RewardParams,
                  eval_cfg: EvalConfig,
                  eval_thresholds: tuple[float, ...] | None) -> list[ResultRow]:
    """Evaluate both rule-based baselines on the given suite."""
    suite = EvalSuite.default(eval_cfg, sim_config=sim, reward_params=params,
                              delay_thresholds_ms=eval_thresholds)
    rows = []
    for name in ("load", "delay"):
        policy = make_policy(name, sim.num_slices)
        rows.append(suite.evaluate(policy, name=name).row())
    return rows


def sla_transfer_experiment(out_dir,
                            train_thresholds: tuple[float, ...] = (100.0, 50.0),
                            eval_threshold: float = 30.0,
                            episodes_per_dataset: int = 10,
                            total_steps: int = 20000,
                            seeds: tuple[int, ...] = (0, 1, 2),
                            sim_config: SimConfig | None = None,
                            cql: CqlConfig | None = None,
                            eval_cfg: EvalConfig | None = None,
                            reward_params: RewardParams | None = None,
                            collect_seed: int = 0) -> list[ResultRow]:
    """Train CQL on multi-SLA data, evaluate where the SLA is unseen.

    Datasets come from both rule-based baselines at each training
    threshold (the threshold applies to slice 1; other slices keep the
    base SLA).  The returned table holds the CQL seeds plus both
    baselines, all evaluated at ``eval_threshold``.
    """
    sim = sim_config if sim_config is not None else SimConfig()
    params = (reward_params if reward_params is not None
              else RewardParams.default(sim.num_slices))
    eval_cfg = eval_cfg if eval_cfg is not None else EvalConfig()
    recipes = tuple(
        CollectRecipe(policy=pol, episodes=episodes_per_dataset,
                      seed=collect_seed + i,
                      delay_thresholds_ms=_slice1_thresholds(sim, thr))
        for i, (thr, pol) in enumerate(
            (t, p) for t in train_thresholds for p in ("load", "delay")
        )
    )
    spec = ExperimentSpec(
        name="sla-transfer", algo="cql", seeds=seeds, total_steps=total_steps,
        recipes=recipes, reward_params=params, sim_config=sim,
        cql=cql if cql is not None else CqlConfig(), eval_cfg=eval_cfg,
        eval_thresholds=_slice1_thresholds(sim, eval_threshold),
    )
    rows = run_experiment(spec, out_dir)
    runner = StageRunner(out_dir)
    runner.manifest.set_info("sla_transfer", {
        "train_thresholds_ms": [float(t) for t in train_thresholds],
        "eval_threshold_ms": float(eval_threshold),
        "eval_threshold_seen_in_training":
            float(eval_threshold) in {float(t) for t in train_thresholds},
    })
    baselines_path = Path(out_dir) / "baselines.csv"
    stage_hash = params_digest({
        "eval": asdict(eval_cfg), "sim": asdict(sim),
        "thresholds": _slice1_thresholds(sim, eval_threshold),
        "reward": asdict(params),
    })

    def do_baselines():
        rows_to_csv(
            baseline_rows(sim, params, eval_cfg,
                          _slice1_thresholds(sim, eval_threshold)),
            baselines_path,
        )

    runner.run("evaluate-baselines", stage_hash, [baselines_path], do_baselines)
    return rows + rows_from_csv(baselines_path)


def reward_variant_experiment(dataset_path, variants, out_dir,
                              total_steps: int = 20000,
                              seeds: tuple[int, ...] = (0, 1, 2),
                              sim_config: SimConfig | None = None,
                              cql: CqlConfig | None = None,
                              eval_cfg: EvalConfig | None = None):
    """Train one CQL per reward variant on the same dataset.

    ``variants`` is a list of (label, RewardParams).  Returns
    ``(rows, flags)`` where the flags report the expected ordering:
    whether the variant labeled 'throughput' has the highest throughput
    and the one labeled 'delay' the lowest violation rate (computed
    over per-variant means across seeds).
    """
    dataset_path = Path(dataset_path)
    if not dataset_path.exists():
        raise ConfigError(
            f"stage 'train' missing dependency: dataset {dataset_path} not found"
        )
    sim = sim_config if sim_config is not None else SimConfig()
    all_rows: dict[str, list[ResultRow]] = {}
    for label, params in variants:
        spec = ExperimentSpec(
            name=f"cql-{label}", algo="cql", seeds=seeds,
            total_steps=total_steps, dataset_paths=(str(dataset_path),),
            reward_params=params, sim_config=sim,
            cql=cql if cql is not None else CqlConfig(),
            eval_cfg=eval_cfg if eval_cfg is not None else EvalConfig(),
        )
        all_rows[label] = run_experiment(spec, Path(out_dir) / label)
    flags = {}
    means = {
        label: {
            "throughput": float(np.mean([r.throughput_mbps_mean for r in rows])),
            "d_vio": float(np.mean([r.d_vio_pct_mean for r in rows])),
        }
        for label, rows in all_rows.items()
    }
    if "throughput" in means:
        flags["throughput_variant_max_throughput"] = (
            means["throughput"]["throughput"]
            >= max(m["throughput"] for m in means.values())
        )
    if "delay" in means:
        flags["delay_variant_min_d_vio"] = (
            means["delay"]["d_vio"] <= min(m["d_vio"] for m in means.values())
        )
    table = [row for rows in all_rows.values() for row in rows]
    Manifest(Path(out_dir) / "manifest.json").set_info("reward_variants", {
        "labels": list(all_rows), "flags": flags,
        "dataset": file_digest(dataset_path),
    })
    rows_to_csv(table, Path(out_dir) / "results.csv")
    return table, flags
