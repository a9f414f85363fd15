"""Plot-ready CSVs and a markdown digest of completed experiment runs."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..algos import TrainLog
from ..errors import ConfigError
from .suite import ResultRow, rows_from_csv


def training_curve(log_paths, out_path) -> list[int]:
    """Merge per-seed training logs into one curve table.

    Reads the evaluation-return trace of each log CSV and writes
    ``step, ret_0..ret_{k-1}, mean, std`` with one row per evaluation
    step.  Steps must agree across logs (same cadence, same budget).
    Returns the step column.
    """
    log_paths = [Path(p) for p in log_paths]
    missing = [str(p) for p in log_paths if not p.exists()]
    if missing:
        raise ConfigError(f"missing training logs: {missing}")
    traces = []
    for path in log_paths:
        log = TrainLog.read_csv(path)
        trace = [(int(row["step"]), float(row["eval_return"]))
                 for row in log.rows
                 if "eval_return" in row and row["eval_return"] != ""]
        if not trace:
            raise ConfigError(f"{path} holds no evaluation returns")
        traces.append(trace)
    steps = [s for s, _ in traces[0]]
    for path, trace in zip(log_paths[1:], traces[1:]):
        if [s for s, _ in trace] != steps:
            raise ConfigError(
                f"{path}: evaluation steps disagree with {log_paths[0]}"
            )
    values = np.array([[v for _, v in trace] for trace in traces])
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step"]
                        + [f"ret_{i}" for i in range(len(traces))]
                        + ["mean", "std"])
        for j, step in enumerate(steps):
            col = values[:, j]
            writer.writerow([step, *col.tolist(),
                             float(col.mean()), float(col.std())])
    return steps


def _markdown_table(rows: list[ResultRow]) -> str:
    head = ("| policy | episodes | return | d_vio (%) | throughput (Mb/s) "
            "| usage (%) | slice-1 d_vio (%) |")
    rule = "|" + "---|" * 7
    lines = [head, rule]
    for r in rows:
        lines.append(
            f"| {r.policy} | {r.episodes} "
            f"| {r.return_mean:.3f} ± {r.return_std:.3f} "
            f"| {r.d_vio_pct_mean:.2f} ± {r.d_vio_pct_std:.2f} "
            f"| {r.throughput_mbps_mean:.2f} ± {r.throughput_mbps_std:.2f} "
            f"| {r.util_pct_mean:.2f} ± {r.util_pct_std:.2f} "
            f"| {r.slice1_d_vio_pct_mean:.2f} ± {r.slice1_d_vio_pct_std:.2f} |"
        )
    return "\n".join(lines)


def write_report(run_dirs, out_dir) -> Path:
    """Summarize completed runs: markdown digest plus curve CSVs.

    Each run directory must hold a ``manifest.json`` and ``results.csv``
    from the experiment runner; training logs, when present, become
    per-run curve CSVs.
    """
    run_dirs = [Path(d) for d in run_dirs]
    if not run_dirs:
        raise ConfigError("no run directories given")
    absent = [str(d) for d in run_dirs
              if not (d / "manifest.json").exists()
              or not (d / "results.csv").exists()]
    if absent:
        raise ConfigError(f"runs missing manifest or results: {absent}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sections = ["# Experiment summary", ""]
    for run in run_dirs:
        manifest = json.loads((run / "manifest.json").read_text())
        rows = rows_from_csv(run / "results.csv")
        sections.append(f"## {run.name}")
        sections.append("")
        info = manifest.get("info", {})
        if "spec" in info:
            spec = info["spec"]
            sections.append(
                f"- algorithm: {spec.get('algo')}, seeds: {spec.get('seeds')}, "
                f"training steps: {spec.get('total_steps')}"
            )
        for key, value in info.items():
            if key != "spec":
                sections.append(f"- {key}: {json.dumps(value, sort_keys=True)}")
        sections.append(f"- stages recorded: {len(manifest.get('stages', {}))}")
        sections.append(f"- suite episodes per row: {rows[0].episodes}"
                        if rows else "- empty result table")
        sections.append("")
        sections.append(_markdown_table(rows))
        sections.append("")
        logs = sorted((run / "logs").glob("train-seed*.csv"))
        if logs:
            curve_path = out_dir / f"{run.name}-curves.csv"
            try:
                training_curve(logs, curve_path)
                sections.append(f"- training curves: {curve_path.name}")
            except ConfigError:
                # logs without evaluation traces have no curve to plot
                pass
            sections.append("")
    summary = out_dir / "summary.md"
    summary.write_text("\n".join(sections))
    return summary
