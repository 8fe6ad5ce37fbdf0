# hrl_workbench/metrics.py

import csv
import logging
import math
import os
from pathlib import Path
from typing import Iterable, Literal, Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from pydantic import BaseModel, Field  # noqa: E402

from hrl_workbench.errors import CompareError  # noqa: E402

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("seed", "episode", "success", "decisions", "backend_calls_cumulative", "lambda_final")
SUMMARY_COLUMNS = ("seed", "status", "episodes", "episodes_to_threshold", "error")
DEFAULT_WINDOW = 20
DEFAULT_THRESHOLD = 0.9


class EpisodeMetrics(BaseModel):
    seed: int
    episode: int = Field(..., ge=0)
    success: int = Field(..., ge=0, le=1)
    decisions: int = Field(..., ge=0)
    backend_calls_cumulative: int = Field(..., ge=0)
    lambda_final: float = Field(..., ge=0.0, le=1.0)

    def row(self) -> list[str]:
        return [str(self.seed), str(self.episode), str(self.success), str(self.decisions),
                str(self.backend_calls_cumulative), f"{self.lambda_final:.6f}"]


class RunMetrics(BaseModel):
    """Per-episode records of one seed plus the statistics derived from them."""

    seed: int
    episodes: list[EpisodeMetrics] = Field(default_factory=list)
    status: Literal["ok", "failed"] = "ok"
    error: str | None = None

    @property
    def successes(self) -> np.ndarray:
        return np.array([e.success for e in self.episodes], dtype=np.float64)

    def moving_average(self, window: int = DEFAULT_WINDOW) -> np.ndarray:
        return moving_average(self.successes, window)

    def episodes_to_threshold(self, threshold: float = DEFAULT_THRESHOLD, window: int = DEFAULT_WINDOW) -> int | None:
        return episodes_to_threshold(self.successes, threshold, window)

    def final_success(self, last: int = DEFAULT_WINDOW) -> float:
        tail = self.successes[-last:]
        return float(tail.mean()) if tail.size else 0.0

    @property
    def total_backend_calls(self) -> int:
        return self.episodes[-1].backend_calls_cumulative if self.episodes else 0


def moving_average(values: Iterable[float], window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Trailing mean; the first window-1 entries average whatever is available."""
    x = np.asarray(list(values), dtype=np.float64)
    if x.size == 0:
        return x
    csum = np.concatenate([[0.0], np.cumsum(x)])
    ends = np.arange(1, x.size + 1)
    starts = np.maximum(0, ends - window)
    return (csum[ends] - csum[starts]) / (ends - starts)


def episodes_to_threshold(successes: Iterable[float], threshold: float = DEFAULT_THRESHOLD,
                          window: int = DEFAULT_WINDOW) -> int | None:
    """Episodes consumed before a full window first averages at least `threshold`; None if never."""
    x = np.asarray(list(successes), dtype=np.float64)
    if x.size < window:
        return None
    averages = np.convolve(x, np.ones(window) / window, mode="valid")
    hits = np.flatnonzero(averages >= threshold - 1e-12)
    return int(hits[0]) + window if hits.size else None


# --- CSV persistence ---
class MetricsWriter:
    """Appends one row per finished episode and flushes, so a crashed run keeps its prefix."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = open(self.path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._handle, lineterminator="\n")
        self._writer.writerow(METRIC_COLUMNS)

    def write(self, episode: EpisodeMetrics) -> None:
        self._writer.writerow(episode.row())
        self._handle.flush()

    def close(self) -> None:
        self._handle.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_metrics_csv(path: str | os.PathLike) -> list[EpisodeMetrics]:
    with open(path, encoding="utf-8", newline="") as handle:
        return [EpisodeMetrics(**row) for row in csv.DictReader(handle)]


def write_summary(path: str | os.PathLike, runs: Mapping[int, RunMetrics],
                  threshold: float = DEFAULT_THRESHOLD, window: int = DEFAULT_WINDOW) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for seed in sorted(runs):
            run = runs[seed]
            reached = run.episodes_to_threshold(threshold, window)
            writer.writerow([seed, run.status, len(run.episodes), "" if reached is None else reached, run.error or ""])


def read_run(run_dir: str | os.PathLike) -> dict[int, RunMetrics]:
    """Reload every seed of a run directory from its summary and per-seed CSVs."""
    run_dir = Path(run_dir)
    runs = {}
    with open(run_dir / "summary.csv", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            seed = int(row["seed"])
            seed_csv = run_dir / f"seed_{seed}.csv"
            episodes = read_metrics_csv(seed_csv) if seed_csv.exists() else []
            runs[seed] = RunMetrics(seed=seed, episodes=episodes, status=row["status"], error=row["error"] or None)
    return runs


# --- Aggregation ---
class AgentCurve(BaseModel):
    agent_kind: str
    learns: bool
    median: list[float]
    q25: list[float]
    q75: list[float]
    episodes_to_threshold: float
    final_success: float


def aggregate(agent_kind: str, runs: Mapping[int, RunMetrics], learns: bool,
              window: int = DEFAULT_WINDOW, threshold: float = DEFAULT_THRESHOLD) -> AgentCurve:
    """Median and interquartile band of moving-average success across the successful seeds."""
    ok = [r for _, r in sorted(runs.items()) if r.status == "ok" and r.episodes]
    if not ok:
        raise CompareError(f"{agent_kind} has no completed seeds to aggregate")
    length = min(len(r.episodes) for r in ok)
    curves = np.stack([r.moving_average(window)[:length] for r in ok])
    reached = [r.episodes_to_threshold(threshold, window) for r in ok]
    return AgentCurve(
        agent_kind=agent_kind,
        learns=learns,
        median=np.median(curves, axis=0).tolist(),
        q25=np.percentile(curves, 25, axis=0).tolist(),
        q75=np.percentile(curves, 75, axis=0).tolist(),
        episodes_to_threshold=float(np.median([math.inf if e is None else e for e in reached])),
        final_success=float(np.median([r.final_success(window) for r in ok])),
    )


def write_curve_csv(path: str | os.PathLike, curve: AgentCurve) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["episode", "median", "q25", "q75"])
        for i, (m, lo, hi) in enumerate(zip(curve.median, curve.q25, curve.q75)):
            writer.writerow([i, f"{m:.6f}", f"{lo:.6f}", f"{hi:.6f}"])


def write_comparison(path: str | os.PathLike, curves: list[AgentCurve]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["agent", "median_episodes_to_threshold", "final_success"])
        for curve in curves:
            ett = "inf" if math.isinf(curve.episodes_to_threshold) else f"{curve.episodes_to_threshold:g}"
            writer.writerow([curve.agent_kind, ett, f"{curve.final_success:.4f}"])


def plot_task(path: str | os.PathLike, task_id: str, curves: list[AgentCurve]) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    horizon = max(len(c.median) for c in curves)
    for curve in curves:
        if curve.learns:
            x = np.arange(len(curve.median))
            (line,) = ax.plot(x, curve.median, label=curve.agent_kind)
            ax.fill_between(x, curve.q25, curve.q75, color=line.get_color(), alpha=0.2)
        else:
            # non-learning agents plot as flat lines at their mean success
            ax.hlines(float(np.mean(curve.median)), 0, horizon - 1, linestyles="--", label=curve.agent_kind)
    ax.set_title(task_id)
    ax.set_xlabel("episode")
    ax.set_ylabel("success rate (moving average)")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
