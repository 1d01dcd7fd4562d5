"""Experiment orchestration: run configs, episode logs, success metrics, suites.

File formats written here:

* episode log (CSV): ``episode,end_frame,return,length,window_mean8,intrinsic_mean``
  with reals printed to 9 significant digits;
* run summary (text): one ``key=value`` per line (``env``, ``agent``, ``seed``,
  ``time_to_success``, ``frames``, ``status`` plus the config echo);
* aggregate curve (CSV): ``frame,mean_reward,sd_reward`` on a fixed grid of
  1000 frame ticks.
"""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .agent import AgentKind, HyperParams, run_training
from .errors import ConfigurationError, UsageError
from .grid_env import EnvKind
from .records import EpisodeRecord, RunLog

log = logging.getLogger(__name__)

TIME_TO_SUCCESS_CAP = 10_000_000
SUCCESS_TOLERANCE = 1e-9
WINDOW = 8
CURVE_TICKS = 1000

# (hidden units, latent dims, beta) of the variational models per agent and env.
MODEL_DEFAULTS = {
    (AgentKind.CURIOUS, EnvKind.MULTIROOM): (512, 256, 2e-4),
    (AgentKind.CURIOUS, EnvKind.DOORKEY): (512, 256, 1e-4),
    (AgentKind.CURIOUS, EnvKind.KEYCORRIDOR): (256, 128, 1e-4),
    (AgentKind.POWER, EnvKind.MULTIROOM): (512, 256, 1e-4),
    (AgentKind.POWER, EnvKind.DOORKEY): (32, 16, 1e-4),
    (AgentKind.POWER, EnvKind.KEYCORRIDOR): (256, 128, 0.125e-4),
}

DEFAULT_FRAMES = {
    EnvKind.MULTIROOM: 10_000_000,
    EnvKind.DOORKEY: 5_000_000,
    EnvKind.KEYCORRIDOR: 1_000_000,
}


def default_hyperparams(env: "EnvKind | str", agent: "AgentKind | str", **overrides) -> HyperParams:
    env, agent = EnvKind.parse(env), AgentKind.parse(agent)
    hidden, latent, beta = MODEL_DEFAULTS.get((agent, env), (256, 128, 0.0))
    kw = {"beta": beta, "model_hidden": hidden, "latent_dim": latent}
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return HyperParams(**kw)


@dataclass
class RunConfig:
    env: str
    agent: str
    seed: int = 0
    frame_budget: int = 0
    hp: HyperParams = field(default_factory=HyperParams)
    out_dir: str = "runs"

    def __post_init__(self):
        self.env = EnvKind.parse(self.env).value
        self.agent = AgentKind.parse(self.agent).value
        if self.frame_budget <= 0:
            raise ConfigurationError("frame_budget must be positive")

    @classmethod
    def default(cls, env: str, agent: str, seed: int = 0, frame_budget: int | None = None,
                out_dir: str = "runs", **hp_overrides) -> "RunConfig":
        budget = frame_budget or DEFAULT_FRAMES[EnvKind.parse(env)]
        return cls(env, agent, seed, budget, default_hyperparams(env, agent, **hp_overrides), out_dir)

    @property
    def stem(self) -> str:
        return f"{self.env}_{self.agent}_seed{self.seed}"


@dataclass
class RunSummary:
    env: str
    agent: str
    seed: int
    time_to_success: int
    frames: int
    status: str = "finished"
    frame_budget: int = 0
    beta: float = 0.0
    hidden: int = 0
    latent: int = 0
    rollout: int = 128


# --------------------------------------------------------------------------
# Metrics


def _returns(records: Sequence) -> np.ndarray:
    return np.array([r.episode_return if isinstance(r, EpisodeRecord) else float(r) for r in records],
                    dtype=np.float64)


def window_mean(records: Sequence, w: int = WINDOW) -> np.ndarray:
    """Mean return over each episode and the up-to ``w - 1`` episodes before it."""
    if w < 1:
        raise UsageError("window must be >= 1")
    returns = _returns(records)
    if returns.size == 0:
        return returns
    csum = np.concatenate([[0.0], np.cumsum(returns)])
    idx = np.arange(1, returns.size + 1)
    lo = np.maximum(idx - w, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def time_to_success(records: Sequence[EpisodeRecord], w: int = WINDOW, cap: int = TIME_TO_SUCCESS_CAP) -> int:
    """End frame of the first episode closing a full ``w``-episode window of successes.

    Returns ``cap`` if that never happens.  Windows shorter than ``w``
    (the first ``w - 1`` episodes) do not count.
    """
    means = window_mean(records, w)
    hits = np.nonzero(means[w - 1:] >= 1.0 - SUCCESS_TOLERANCE)[0]
    if hits.size == 0:
        return cap
    return min(int(records[hits[0] + w - 1].end_frame), cap)


# --------------------------------------------------------------------------
# File formats

EPISODE_LOG_HEADER = ["episode", "end_frame", "return", "length", "window_mean8", "intrinsic_mean"]


def _g9(x: float) -> str:
    return f"{x:.9g}"


class EpisodeLogWriter:
    """Streaming CSV sink; call it with each EpisodeRecord as it arrives."""

    def __init__(self, path: str, w: int = WINDOW):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(EPISODE_LOG_HEADER)
        self._recent: list[float] = []
        self._w = w

    def __call__(self, record: EpisodeRecord) -> None:
        self._recent.append(record.episode_return)
        del self._recent[:-self._w]
        wm = sum(self._recent) / len(self._recent)
        self._writer.writerow([record.episode, record.end_frame, _g9(record.episode_return),
                               record.length, _g9(wm), _g9(record.intrinsic_mean)])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_episode_log(path: str) -> list[EpisodeRecord]:
    with open(path, newline="") as fh:
        return [EpisodeRecord(int(row["episode"]), int(row["end_frame"]), float(row["return"]),
                              int(row["length"]), float(row["intrinsic_mean"]))
                for row in csv.DictReader(fh)]


def write_summary(path: str, summary: RunSummary) -> None:
    with open(path, "w") as fh:
        for key, val in vars(summary).items():
            fh.write(f"{key}={val!r}\n" if isinstance(val, float) else f"{key}={val}\n")


def read_summary(path: str) -> RunSummary:
    raw = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and "=" in line:
                key, val = line.split("=", 1)
                raw[key] = val
    types = {f: type(v) for f, v in vars(RunSummary("", "", 0, 0, 0)).items()}
    kw = {k: types[k](v) for k, v in raw.items() if k in types}
    return RunSummary(**kw)


def summarize(config: RunConfig, run: RunLog) -> RunSummary:
    return RunSummary(
        env=config.env, agent=config.agent, seed=config.seed,
        time_to_success=time_to_success(run.records), frames=run.completed_frames, status=run.status,
        frame_budget=config.frame_budget, beta=config.hp.beta, hidden=config.hp.model_hidden,
        latent=config.hp.latent_dim, rollout=config.hp.rollout_length,
    )


# --------------------------------------------------------------------------
# Running


def run_single(config: RunConfig) -> RunSummary:
    """Train one run, writing ``<stem>_episodes.csv`` and ``<stem>_summary.txt``."""
    os.makedirs(config.out_dir, exist_ok=True)
    base = os.path.join(config.out_dir, config.stem)
    with EpisodeLogWriter(base + "_episodes.csv") as sink:
        run = run_training(config.env, config.agent, config.hp, config.seed, config.frame_budget, sink=sink)
    summary = summarize(config, run)
    write_summary(base + "_summary.txt", summary)
    return summary


def curve_ticks(frame_budget: int, n: int = CURVE_TICKS) -> np.ndarray:
    return np.arange(1, n + 1) * (frame_budget / n)


def interpolate_curve(records: Sequence[EpisodeRecord], ticks: np.ndarray, w: int = WINDOW) -> np.ndarray:
    """Window means resampled onto ``ticks`` (0 before the first episode ends)."""
    frames = np.array([0] + [r.end_frame for r in records], dtype=np.float64)
    means = np.concatenate([[0.0], window_mean(records, w)])
    return np.interp(ticks, frames, means)


def aggregate_curves(runs: Sequence[Sequence[EpisodeRecord]], ticks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and (population) standard deviation across runs at each tick."""
    if not runs:
        raise UsageError("no runs to aggregate")
    curves = np.array([interpolate_curve(r, ticks) for r in runs])
    # Moments of deviations from the first run: identical runs give exactly 0.
    shifted = curves - curves[0]
    return curves[0] + shifted.mean(axis=0), shifted.std(axis=0)


def write_curve(path: str, ticks: np.ndarray, mean: np.ndarray, sd: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["frame", "mean_reward", "sd_reward"])
        for f, m, s in zip(ticks, mean, sd):
            writer.writerow([_g9(f), _g9(m), _g9(s)])


def run_suite(base: RunConfig, seeds: Iterable[int], workers: int = 1) -> list[RunSummary]:
    """One run per seed plus ``<env>_<agent>_curve.csv`` over the finished runs.

    Results are keyed and returned by ascending seed, whatever the input order.
    """
    seeds = sorted(set(int(s) for s in seeds))
    if not seeds:
        raise UsageError("run_suite needs at least one seed")
    configs = [replace(base, seed=s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(run_single, configs))
    else:
        summaries = [run_single(c) for c in configs]

    finished = []
    for config, summary in zip(configs, summaries):
        if summary.status != "finished":
            log.warning("seed %d failed; excluded from the aggregate curve", summary.seed)
            continue
        finished.append(read_episode_log(os.path.join(config.out_dir, config.stem + "_episodes.csv")))
    if finished:
        ticks = curve_ticks(base.frame_budget)
        mean, sd = aggregate_curves(finished, ticks)
        write_curve(os.path.join(base.out_dir, f"{base.env}_{base.agent}_curve.csv"), ticks, mean, sd)
    return summaries


def load_summaries(directory: str) -> list[RunSummary]:
    names = sorted(n for n in os.listdir(directory) if n.endswith("_summary.txt"))
    return [read_summary(os.path.join(directory, n)) for n in names]
