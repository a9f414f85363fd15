"""Harness tests: evaluation suite semantics, staged experiment
idempotence, transfer/variant experiment plumbing, reports, and the CLI."""
import json
from dataclasses import replace

import numpy as np
import pytest

from slicelab.config import (
    CqlConfig,
    EpisodeConfig,
    EvalConfig,
    LabConfig,
    RewardParams,
    SimConfig,
    save_config,
)
from slicelab.datasets import collect, load_dataset
from slicelab.errors import ConfigError
from slicelab.harness import (
    CollectRecipe,
    EvalPoint,
    EvalSuite,
    ExperimentSpec,
    even_split,
    reward_variant_experiment,
    rows_from_csv,
    rows_to_csv,
    run_experiment,
    sla_transfer_experiment,
    training_curve,
    write_report,
)
from slicelab.harness.cli import main
from slicelab.policies import LoadBasedPolicy

SMALL_SIM = SimConfig(steps_per_episode=10, ttis_per_step=20)
TINY_CQL = CqlConfig(batch_size=16, hidden_dim=16, num_sampled_actions=4)
TINY_EVAL = EvalConfig(ue_totals=(6,), seeds=(0, 1))


class UniformPolicy:
    """Fixed equal-share policy, the warm-up allocation forever."""

    name = "uniform"
    deterministic = True

    def __init__(self, num_slices=3):
        self.num_slices = num_slices
        self.reset_count = 0

    def reset(self):
        self.reset_count += 1

    def act(self, obs, raw=None, rng=None):
        n = self.num_slices
        return np.full(n - 1, 1.0 / n)


class TestEvalSuite:

    def test_default_is_twenty_distinct_environments(self):
        suite = EvalSuite.default()
        assert len(suite) == 20
        assert len(set(suite.points)) == 20
        totals = {p.ue_total for p in suite.points}
        assert totals == {6, 9, 12, 16, 20}

    def test_even_split(self):
        assert even_split(6, 2) == (3, 3)
        assert even_split(9, 2) == (5, 4)
        assert even_split(20, 2) == (10, 10)
        assert even_split(7, 3) == (3, 2, 2)
        with pytest.raises(ConfigError):
            even_split(1, 2)

    def test_duplicate_points_rejected(self):
        with pytest.raises(ConfigError):
            EvalSuite([EvalPoint(6, 0), EvalPoint(6, 0)])

    def test_one_episode_per_entry(self):
        suite = EvalSuite.default(TINY_EVAL, sim_config=SMALL_SIM)
        policy = UniformPolicy()
        result = suite.evaluate(policy)
        assert result.episodes == len(suite) == 2
        assert policy.reset_count == 2

    def test_same_policy_same_row(self):
        suite = EvalSuite.default(TINY_EVAL, sim_config=SMALL_SIM)
        row_a = suite.evaluate(LoadBasedPolicy()).row()
        row_b = suite.evaluate(LoadBasedPolicy()).row()
        assert row_a == row_b

    def test_thresholds_override_reaches_env(self):
        heavy = EvalConfig(ue_totals=(24,), seeds=(0, 1))
        strict = EvalSuite.default(heavy, sim_config=SMALL_SIM,
                                   delay_thresholds_ms=(1.0, 50.0, 10.0))
        loose = EvalSuite.default(heavy, sim_config=SMALL_SIM,
                                  delay_thresholds_ms=(500.0, 50.0, 10.0))
        policy = UniformPolicy()
        vio_strict = strict.evaluate(policy).d_vio[:, 0].mean()
        vio_loose = loose.evaluate(policy).d_vio[:, 0].mean()
        assert vio_strict > 0.0
        assert vio_strict > vio_loose

    def test_uniform_policy_symmetric_slices_near_equal_d_vio(self):
        # overloaded symmetric slices under equal shares: the two
        # prioritized slices should violate at nearly the same rate
        sim = SimConfig(steps_per_episode=40, ttis_per_step=50)
        suite = EvalSuite.default(
            EvalConfig(ue_totals=(32,), seeds=(0, 1, 2, 3)),
            sim_config=sim,
            delay_thresholds_ms=(50.0, 50.0, 10.0),
        )
        result = suite.evaluate(UniformPolicy())
        slice_means = result.d_vio.mean(axis=0)
        assert slice_means.min() > 0.0
        assert abs(slice_means[0] - slice_means[1]) < 0.1

    def test_csv_round_trip(self, tmp_path):
        suite = EvalSuite.default(TINY_EVAL, sim_config=SMALL_SIM)
        rows = [suite.evaluate(LoadBasedPolicy()).row()]
        out = tmp_path / "rows.csv"
        rows_to_csv(rows, out)
        assert rows_from_csv(out) == rows


def tiny_spec(name, **overrides):
    base = dict(
        name=name, algo="cql", seeds=(0,), total_steps=15,
        recipes=(CollectRecipe("load", episodes=2, seed=1),
                 CollectRecipe("delay", episodes=2, seed=2)),
        sim_config=SMALL_SIM, cql=TINY_CQL, eval_cfg=TINY_EVAL,
    )
    base.update(overrides)
    return ExperimentSpec(**base)


class TestRunExperiment:

    def test_stages_and_results(self, tmp_path):
        out = tmp_path / "run"
        rows = run_experiment(tiny_spec("tiny"), out)
        assert [r.policy for r in rows] == ["tiny-seed0"]
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["stages"]) == {
            "collect-load-s1", "collect-delay-s2", "merge",
            "train-seed0", "evaluate",
        }
        merged = load_dataset(out / "datasets" / "merged.jsonl")
        assert len(merged) == 40  # 2 recipes x 2 episodes x 10 steps

    def test_rerun_skips_everything(self, tmp_path):
        out = tmp_path / "run"
        spec = tiny_spec("tiny")
        rows = run_experiment(spec, out)
        stamps = {p: p.stat().st_mtime_ns for p in out.rglob("*") if p.is_file()}
        rows_again = run_experiment(spec, out)
        assert rows_again == rows
        for p, stamp in stamps.items():
            if p.name != "manifest.json":
                assert p.stat().st_mtime_ns == stamp, f"{p} was rewritten"

    def test_changed_budget_retrains(self, tmp_path):
        out = tmp_path / "run"
        run_experiment(tiny_spec("tiny"), out)
        ck = out / "checkpoints" / "tiny-seed0.npz"
        stamp = ck.stat().st_mtime_ns
        run_experiment(tiny_spec("tiny", total_steps=16), out)
        assert ck.stat().st_mtime_ns != stamp

    def test_zero_steps_evaluates_initial_policy(self, tmp_path):
        rows = run_experiment(tiny_spec("init", total_steps=0),
                              tmp_path / "run")
        assert len(rows) == 1
        assert np.isfinite(rows[0].return_mean)

    def test_offline_without_datasets_rejected(self, tmp_path):
        spec = tiny_spec("nodata", recipes=())
        with pytest.raises(ConfigError, match="train"):
            run_experiment(spec, tmp_path / "run")

    def test_missing_dataset_path_names_stage(self, tmp_path):
        spec = tiny_spec("missing", recipes=(),
                         dataset_paths=(str(tmp_path / "ghost.jsonl"),))
        with pytest.raises(ConfigError, match="missing dependency"):
            run_experiment(spec, tmp_path / "run")

    def test_online_spec_trains_against_env(self, tmp_path):
        from slicelab.config import SacConfig
        spec = tiny_spec(
            "sac-tiny", algo="sac", recipes=(), total_steps=12,
            sac=SacConfig(batch_size=16, warmup_steps=20, hidden_dim=16),
        )
        rows = run_experiment(spec, tmp_path / "run")
        assert rows[0].policy == "sac-tiny-seed0"


class TestSlaTransfer:

    def test_pipeline_and_manifest(self, tmp_path):
        out = tmp_path / "sla"
        rows = sla_transfer_experiment(
            out, train_thresholds=(100.0, 50.0), eval_threshold=30.0,
            episodes_per_dataset=1, total_steps=15, seeds=(0,),
            sim_config=SMALL_SIM, cql=TINY_CQL, eval_cfg=TINY_EVAL,
        )
        assert [r.policy for r in rows] == ["sla-transfer-seed0", "load", "delay"]
        manifest = json.loads((out / "manifest.json").read_text())
        info = manifest["info"]["sla_transfer"]
        assert info["eval_threshold_ms"] == 30.0
        assert info["eval_threshold_seen_in_training"] is False
        # training data really carries the two training SLAs
        merged = load_dataset(out / "datasets" / "merged.jsonl")
        slas = {tuple(t) for t in merged.thresholds}
        assert slas == {(100.0, 50.0, 10.0), (50.0, 50.0, 10.0)}

    def test_degenerate_same_sla(self, tmp_path):
        rows = sla_transfer_experiment(
            tmp_path / "sla", train_thresholds=(50.0,), eval_threshold=50.0,
            episodes_per_dataset=1, total_steps=15, seeds=(0,),
            sim_config=SMALL_SIM, cql=TINY_CQL, eval_cfg=TINY_EVAL,
        )
        manifest = json.loads((tmp_path / "sla" / "manifest.json").read_text())
        assert manifest["info"]["sla_transfer"][
            "eval_threshold_seen_in_training"] is True
        assert len(rows) == 3


@pytest.fixture(scope="module")
def shared_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "shared.jsonl"
    collect(LoadBasedPolicy(), episodes=3,
            episode_template=EpisodeConfig(seed=9),
            sim_config=SMALL_SIM, out_path=path)
    return path


class TestRewardVariants:

    def test_one_policy_per_variant(self, shared_dataset, tmp_path):
        variants = [
            ("delay", RewardParams.default(3, delay_weight=4.0, util_weight=1.0)),
            ("throughput", RewardParams.default(3, delay_weight=0.5,
                                                util_weight=0.5)),
        ]
        rows, flags = reward_variant_experiment(
            shared_dataset, variants, tmp_path / "var", total_steps=15,
            seeds=(0,), sim_config=SMALL_SIM, cql=TINY_CQL, eval_cfg=TINY_EVAL,
        )
        assert sorted(r.policy for r in rows) == [
            "cql-delay-seed0", "cql-throughput-seed0",
        ]
        assert set(flags) == {"throughput_variant_max_throughput",
                              "delay_variant_min_d_vio"}
        assert (tmp_path / "var" / "results.csv").exists()

    def test_missing_dataset_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="missing dependency"):
            reward_variant_experiment(
                tmp_path / "ghost.jsonl",
                [("delay", RewardParams.default(3))],
                tmp_path / "var", total_steps=5, seeds=(0,),
            )


class TestReport:

    def test_summary_and_curves(self, tmp_path):
        from slicelab.config import SacConfig
        out = tmp_path / "run"
        spec = tiny_spec(
            "curvy", algo="sac", recipes=(), total_steps=12,
            sac=SacConfig(batch_size=8, warmup_steps=10, hidden_dim=8,
                          eval_interval=4, eval_episodes=1),
        )
        run_experiment(spec, out)
        report_dir = tmp_path / "report"
        summary = write_report([out], report_dir)
        text = summary.read_text()
        assert "curvy" in text or "run" in text
        assert "| policy |" in text

    def test_curve_csv_has_monotone_steps(self, tmp_path):
        from slicelab.algos import TrainLog
        log = TrainLog()
        for step in (5, 10, 15):
            log.append(step=step, critic_loss=0.1, eval_return=float(step))
        path = tmp_path / "train-seed0.csv"
        log.write_csv(path)
        out = tmp_path / "curve.csv"
        steps = training_curve([path], out)
        assert steps == sorted(steps) == [5, 10, 15]
        header = out.read_text().splitlines()[0].split(",")
        assert header == ["step", "ret_0", "mean", "std"]

    def test_multi_seed_curves_aggregate(self, tmp_path):
        from slicelab.algos import TrainLog
        for seed, offset in ((0, 0.0), (1, 2.0)):
            log = TrainLog()
            for step in (10, 20):
                log.append(step=step, eval_return=float(step) + offset)
            log.write_csv(tmp_path / f"train-seed{seed}.csv")
        out = tmp_path / "curve.csv"
        training_curve([tmp_path / "train-seed0.csv",
                        tmp_path / "train-seed1.csv"], out)
        lines = out.read_text().splitlines()
        assert lines[0] == "step,ret_0,ret_1,mean,std"
        first = lines[1].split(",")
        assert float(first[3]) == pytest.approx(11.0)  # mean of 10 and 12
        assert float(first[4]) == pytest.approx(1.0)

    def test_empty_run_dir_rejected(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(ConfigError, match="missing"):
            write_report([empty], tmp_path / "report")

    def test_no_runs_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            write_report([], tmp_path / "report")


@pytest.fixture()
def cli_config(tmp_path):
    cfg = LabConfig()
    cfg.sim = replace(cfg.sim, steps_per_episode=10, ttis_per_step=20)
    cfg.sac = replace(cfg.sac, batch_size=16, warmup_steps=20, hidden_dim=16,
                      eval_interval=10, eval_episodes=1)
    cfg.cql = replace(cfg.cql, batch_size=16, hidden_dim=16,
                      num_sampled_actions=4)
    cfg.eval = replace(cfg.eval, ue_totals=(6,), seeds=(0,))
    path = tmp_path / "lab.ini"
    save_config(cfg, path)
    return path


class TestCli:

    def test_collect_validate_merge(self, cli_config, tmp_path, capsys):
        load_path = tmp_path / "load.jsonl"
        delay_path = tmp_path / "delay.jsonl"
        assert main(["--config", str(cli_config), "collect", "--policy",
                     "load", "--episodes", "2", "--out", str(load_path)]) == 0
        assert main(["--config", str(cli_config), "collect", "--policy",
                     "delay", "--episodes", "2", "--out", str(delay_path)]) == 0
        assert main(["validate", str(load_path), str(delay_path)]) == 0
        mixed = tmp_path / "mixed.jsonl"
        assert main(["merge", "--out", str(mixed), str(load_path),
                     str(delay_path)]) == 0
        assert len(load_dataset(mixed)) == 40
        out = capsys.readouterr().out
        assert "collected 20 records" in out

    def test_validate_failure_exit_code(self, cli_config, tmp_path, capsys):
        path = tmp_path / "corrupt.jsonl"
        main(["--config", str(cli_config), "collect", "--policy", "load",
              "--episodes", "1", "--out", str(path)])
        ds = load_dataset(path)
        ds.raw[0, 0, 3] = 1.5
        ds.save(path)
        assert main(["validate", str(path)]) == 1
        err = capsys.readouterr().err
        assert "validate" in err

    def test_train_and_evaluate_checkpoint(self, cli_config, tmp_path):
        data = tmp_path / "data.jsonl"
        main(["--config", str(cli_config), "collect", "--policy", "load",
              "--episodes", "2", "--out", str(data)])
        run_dir = tmp_path / "cql"
        assert main(["--config", str(cli_config), "train-offline",
                     "--dataset", str(data), "--steps", "12",
                     "--out-dir", str(run_dir), "--no-eval"]) == 0
        assert (run_dir / "checkpoint.npz").exists()
        assert (run_dir / "train.csv").exists()
        eval_csv = tmp_path / "eval.csv"
        assert main(["--config", str(cli_config), "evaluate", "--policy",
                     f"checkpoint:{run_dir / 'checkpoint.npz'}",
                     "--out", str(eval_csv)]) == 0
        rows = rows_from_csv(eval_csv)
        assert len(rows) == 1
        assert rows[0].episodes == 1

    def test_train_online_cli(self, cli_config, tmp_path):
        run_dir = tmp_path / "sac"
        assert main(["--config", str(cli_config), "train-online", "--steps",
                     "12", "--out-dir", str(run_dir), "--no-eval"]) == 0
        assert (run_dir / "checkpoint.npz").exists()

    def test_global_out_dir_flag(self, cli_config, tmp_path):
        run_dir = tmp_path / "via-global"
        assert main(["--config", str(cli_config), "--out-dir", str(run_dir),
                     "train-online", "--steps", "12", "--no-eval"]) == 0
        assert (run_dir / "checkpoint.npz").exists()

    def test_missing_out_dir_fails_with_stage(self, cli_config, capsys):
        rc = main(["--config", str(cli_config), "train-online", "--steps",
                   "12", "--no-eval"])
        assert rc == 1
        err = capsys.readouterr().err
        assert "train-online" in err
        assert "out-dir" in err

    def test_unknown_policy_fails_with_stage(self, cli_config, tmp_path,
                                             capsys):
        rc = main(["--config", str(cli_config), "evaluate", "--policy",
                   "psychic", "--out", str(tmp_path / "x.csv")])
        assert rc == 1
        assert "evaluate" in capsys.readouterr().err

    def test_sla_transfer_cli(self, cli_config, tmp_path):
        out_dir = tmp_path / "sla"
        rc = main(["--config", str(cli_config), "sla-transfer",
                   "--out-dir", str(out_dir),
                   "--train-thresholds", "100,50", "--eval-threshold", "30",
                   "--episodes", "1", "--steps", "15", "--seeds", "0"])
        assert rc == 0
        rows = rows_from_csv(out_dir / "transfer.csv")
        assert [r.policy for r in rows] == ["sla-transfer-seed0", "load",
                                            "delay"]

    def test_report_cli(self, cli_config, tmp_path):
        # build one tiny completed run, then report on it
        out = tmp_path / "run"
        run_experiment(tiny_spec("tiny"), out)
        rc = main(["report", "--runs", str(out), "--out",
                   str(tmp_path / "rep")])
        assert rc == 0
        assert (tmp_path / "rep" / "summary.md").exists()
