"""Per-episode and per-run records shared by the training loop and the harness."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    end_frame: int
    episode_return: float
    length: int
    intrinsic_mean: float


@dataclass
class RunLog:
    env: str
    agent: str
    seed: int
    records: list[EpisodeRecord] = field(default_factory=list)
    completed_frames: int = 0
    status: str = "finished"
    error: str = ""
