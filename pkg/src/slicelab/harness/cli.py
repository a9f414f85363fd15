"""Command-line front end.

Subcommands cover the full pipeline: collect datasets, train online or
offline, evaluate policies on the fixed suite, run the transfer and
reward-variant experiments, validate/merge dataset files, and render
reports.  ``--config`` points at an INI file whose sections override
the built-in defaults; exit status is 0 on success and 1 with the
failing stage named on stderr otherwise.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from ..algos import train_offline, train_online
from ..checkpoint import save_checkpoint
from ..config import EpisodeConfig, LabConfig, RewardParams, load_config
from ..datasets import collect, load_dataset, merge, validate_file
from ..env import SliceEnv
from ..errors import SliceLabError, StageError
from ..policies import make_policy
from .experiments import reward_variant_experiment, sla_transfer_experiment
from .report import write_report
from .suite import EvalSuite, returns_eval_fn, rows_to_csv


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _lab_config(args) -> LabConfig:
    return load_config(args.config) if args.config else LabConfig()


def _out_dir(args) -> Path:
    """Subcommand --out-dir, falling back to the global one."""
    chosen = args.out_dir if args.out_dir is not None else args.root_out_dir
    if chosen is None:
        raise StageError(args.command, "no --out-dir given")
    return Path(chosen)


def _reward(cfg: LabConfig, args) -> RewardParams:
    params = cfg.reward
    if getattr(args, "delay_weight", None) is not None:
        params = replace(params, delay_weight=args.delay_weight)
    if getattr(args, "util_weight", None) is not None:
        params = replace(params, util_weight=args.util_weight)
    return params


def cmd_collect(args) -> int:
    cfg = _lab_config(args)
    template = EpisodeConfig(
        seed=args.seed,
        delay_thresholds_ms=args.thresholds,
    )
    policy = make_policy(args.policy, cfg.sim.num_slices)
    ds = collect(policy, args.episodes, template, out_path=args.out,
                 sim_config=cfg.sim, npz_twin=args.npz_twin)
    print(f"collected {len(ds)} records from {args.episodes} episodes "
          f"-> {args.out}")
    return 0


def cmd_train_online(args) -> int:
    cfg = _lab_config(args)
    out_dir = _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = _reward(cfg, args)
    env = SliceEnv(cfg.sim, params)
    eval_fn = None
    if not args.no_eval:
        eval_fn = returns_eval_fn(cfg.sim, params,
                                  episodes=cfg.sac.eval_episodes)
    ck, log = train_online(env, cfg.sac, args.steps, seed=args.seed,
                           eval_fn=eval_fn)
    save_checkpoint(ck, out_dir / "checkpoint.npz")
    log.write_csv(out_dir / "train.csv")
    print(f"trained sac for {args.steps} steps -> {out_dir}/checkpoint.npz")
    return 0


def cmd_train_offline(args) -> int:
    cfg = _lab_config(args)
    out_dir = _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    datasets = [load_dataset(p) for p in args.dataset]
    ds = datasets[0] if len(datasets) == 1 else merge(datasets)
    params = _reward(cfg, args)
    eval_fn = None
    if not args.no_eval:
        eval_fn = returns_eval_fn(cfg.sim, params,
                                  episodes=cfg.sac.eval_episodes)
    ck, log = train_offline(ds, params, cfg.cql, args.steps, seed=args.seed,
                            eval_fn=eval_fn, norms=cfg.norm)
    save_checkpoint(ck, out_dir / "checkpoint.npz")
    log.write_csv(out_dir / "train.csv")
    print(f"trained cql for {args.steps} steps on {len(ds)} transitions "
          f"-> {out_dir}/checkpoint.npz")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _lab_config(args)
    suite = EvalSuite.default(cfg.eval, sim_config=cfg.sim,
                              reward_params=_reward(cfg, args),
                              delay_thresholds_ms=args.thresholds)
    policy = make_policy(args.policy, cfg.sim.num_slices)
    row = suite.evaluate(policy).row()
    rows_to_csv([row], args.out)
    print(f"{row.policy}: return {row.return_mean:.3f} ± {row.return_std:.3f}, "
          f"d_vio {row.d_vio_pct_mean:.2f}%, "
          f"throughput {row.throughput_mbps_mean:.2f} Mb/s, "
          f"usage {row.util_pct_mean:.2f}% over {row.episodes} episodes "
          f"-> {args.out}")
    return 0


def cmd_sla_transfer(args) -> int:
    cfg = _lab_config(args)
    out_dir = _out_dir(args)
    rows = sla_transfer_experiment(
        out_dir,
        train_thresholds=args.train_thresholds,
        eval_threshold=args.eval_threshold,
        episodes_per_dataset=args.episodes,
        total_steps=args.steps,
        seeds=args.seeds,
        sim_config=cfg.sim,
        cql=cfg.cql,
        eval_cfg=cfg.eval,
        reward_params=cfg.reward,
        collect_seed=args.seed,
    )
    rows_to_csv(rows, out_dir / "transfer.csv")
    for row in rows:
        print(f"{row.policy}: slice-1 d_vio {row.slice1_d_vio_pct_mean:.2f}% "
              f"± {row.slice1_d_vio_pct_std:.2f}")
    return 0


def _parse_variants(text: str):
    variants = []
    for part in text.split(";"):
        label, alpha, delta = part.split(":")
        variants.append((label.strip(),
                         RewardParams.default(3, delay_weight=float(alpha),
                                              util_weight=float(delta))))
    return variants


def cmd_reward_variants(args) -> int:
    cfg = _lab_config(args)
    variants = _parse_variants(args.variants)
    variants = [
        (label, replace(params, priorities=cfg.reward.priorities))
        for label, params in variants
    ]
    rows, flags = reward_variant_experiment(
        args.dataset, variants, _out_dir(args), total_steps=args.steps,
        seeds=args.seeds, sim_config=cfg.sim, cql=cfg.cql, eval_cfg=cfg.eval,
    )
    for row in rows:
        print(f"{row.policy}: throughput {row.throughput_mbps_mean:.2f} Mb/s, "
              f"d_vio {row.d_vio_pct_mean:.2f}%, usage {row.util_pct_mean:.2f}%")
    for key, value in flags.items():
        print(f"{key}: {value}")
    return 0


def cmd_report(args) -> int:
    summary = write_report(args.runs, args.out)
    print(f"report -> {summary}")
    return 0


def cmd_validate(args) -> int:
    failed = False
    for path in args.paths:
        report = validate_file(path)
        for name, ok, detail in report:
            tag = "ok" if ok else "FAIL"
            line = f"{path}: {name}: {tag}"
            if detail:
                line += f" ({detail})"
            print(line)
            failed = failed or not ok
    if failed:
        raise StageError("validate", "one or more checks failed")
    return 0


def cmd_merge(args) -> int:
    merged = merge([load_dataset(p) for p in args.inputs])
    merged.save(args.out, npz_twin=args.npz_twin)
    print(f"merged {len(args.inputs)} datasets, {len(merged)} records "
          f"-> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slicelab",
        description="RAN-slicing resource-management laboratory",
    )
    parser.add_argument("--config", help="INI config file", default=None)
    parser.add_argument("--seed", type=int, default=0,
                        help="base seed for collection/training")
    parser.add_argument("--out-dir", dest="root_out_dir", default=None,
                        help="default output directory for subcommands "
                             "that write one")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="roll out a behavior policy")
    p.add_argument("--policy", required=True,
                   help="load | delay | checkpoint:<path>")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--thresholds", type=_floats, default=None,
                   help="per-slice delay SLAs in ms, comma separated")
    p.add_argument("--npz-twin", action="store_true")
    p.set_defaults(fn=cmd_collect)

    p = sub.add_parser("train-online", help="train SAC against the simulator")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--delay-weight", type=float, default=None)
    p.add_argument("--util-weight", type=float, default=None)
    p.add_argument("--no-eval", action="store_true",
                   help="skip periodic evaluation episodes")
    p.set_defaults(fn=cmd_train_online)

    p = sub.add_parser("train-offline", help="train CQL on stored datasets")
    p.add_argument("--dataset", nargs="+", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--delay-weight", type=float, default=None)
    p.add_argument("--util-weight", type=float, default=None)
    p.add_argument("--no-eval", action="store_true")
    p.set_defaults(fn=cmd_train_offline)

    p = sub.add_parser("evaluate", help="score a policy on the fixed suite")
    p.add_argument("--policy", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--thresholds", type=_floats, default=None)
    p.add_argument("--delay-weight", type=float, default=None)
    p.add_argument("--util-weight", type=float, default=None)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("sla-transfer",
                       help="train on some SLAs, evaluate on an unseen one")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--train-thresholds", type=_floats, default=(100.0, 50.0))
    p.add_argument("--eval-threshold", type=float, default=30.0)
    p.add_argument("--episodes", type=int, default=10,
                   help="episodes per (threshold, policy) dataset")
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--seeds", type=_ints, default=(0, 1, 2))
    p.set_defaults(fn=cmd_sla_transfer)

    p = sub.add_parser("reward-variants",
                       help="retrain on one dataset under reward variants")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--variants",
                   default="delay:4:1;throughput:0.5:0.5;resource:1:4",
                   help="semicolon-separated label:delay_weight:util_weight")
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--seeds", type=_ints, default=(0, 1, 2))
    p.set_defaults(fn=cmd_reward_variants)

    p = sub.add_parser("report", help="summarize completed runs")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("validate", help="check dataset files")
    p.add_argument("paths", nargs="+")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("merge", help="concatenate dataset files")
    p.add_argument("--out", required=True)
    p.add_argument("--npz-twin", action="store_true")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(fn=cmd_merge)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except StageError as exc:
        print(f"slicelab: {exc}", file=sys.stderr)
        return 1
    except SliceLabError as exc:
        print(f"slicelab: stage '{args.command}' failed: {exc}",
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"slicelab: stage '{args.command}' failed: {exc}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
