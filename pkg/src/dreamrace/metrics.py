"""Append-only metrics: ``metrics.jsonl`` rows, a ``summary.csv`` mirror, and ``timing.jsonl``.

Wall-clock time goes only into ``timing.jsonl`` so the metrics files of two
identical runs match byte for byte.
"""
from __future__ import annotations

import csv
import json
import math
import time
from pathlib import Path

SUMMARY_COLUMNS = (
    "kind", "env_steps", "episodes", "return_mean", "return_std", "gates_mean", "success_rate",
    "speed_mean", "gaze_mean", "wm_total", "wm_recon", "wm_reward", "wm_cont", "wm_dyn", "wm_rep", "wm_kl",
    "actor_loss", "critic_loss", "imag_return", "ppo_policy", "ppo_value", "ppo_entropy",
)


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class MetricsWriter:
    def __init__(self, run_dir, header: dict | None = None, resume_from_step: int | None = None):
        self.dir = Path(run_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.metrics_path = self.dir / "metrics.jsonl"
        self.summary_path = self.dir / "summary.csv"
        self.timing_path = self.dir / "timing.jsonl"
        self._t0 = time.perf_counter()
        if resume_from_step is not None and self.metrics_path.exists():
            self._truncate(resume_from_step)
        else:
            for p in (self.metrics_path, self.summary_path, self.timing_path):
                p.unlink(missing_ok=True)
            self._append_json(self.metrics_path, {"kind": "header", **(header or {})})
            with open(self.summary_path, "w", newline="") as fh:
                csv.writer(fh).writerow(SUMMARY_COLUMNS)

    def _truncate(self, step: int) -> None:
        """Drop rows logged after ``step`` so a resumed run neither duplicates nor skips."""
        rows = read_metrics(self.metrics_path, include_header=True)
        keep = [r for r in rows if r.get("kind") == "header" or r["env_steps"] <= step]
        with open(self.metrics_path, "w") as fh:
            fh.writelines(json.dumps(r, sort_keys=True) + "\n" for r in keep)
        with open(self.summary_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_COLUMNS)
            for r in keep:
                if r.get("kind") != "header":
                    w.writerow([r.get(c, "") for c in SUMMARY_COLUMNS])

    @staticmethod
    def _append_json(path: Path, row: dict) -> None:
        with open(path, "a") as fh:
            fh.write(json.dumps({k: _clean(v) for k, v in row.items()}, sort_keys=True) + "\n")

    def log(self, row: dict) -> None:
        if "env_steps" not in row or "kind" not in row:
            raise ValueError("metrics rows need 'kind' and 'env_steps'")
        self._append_json(self.metrics_path, row)
        with open(self.summary_path, "a", newline="") as fh:
            csv.writer(fh).writerow(["" if row.get(c) is None else row.get(c, "") for c in SUMMARY_COLUMNS])
        self._append_json(self.timing_path, {"env_steps": row["env_steps"], "kind": row["kind"],
                                             "wall_time": time.perf_counter() - self._t0})


def read_metrics(path, include_header: bool = False) -> list[dict]:
    path = Path(path)
    if path.is_dir():
        path = path / "metrics.jsonl"
    rows = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    return rows if include_header else [r for r in rows if r.get("kind") != "header"]
