"""
Training the three agents
=========================

The baseline learns from the task reward alone.  The curious and the
control-seeking agents add a scaled intrinsic reward.  Budgets here are tiny;
``intrinsic-explore suite`` runs the real thing.
"""

# %%
import numpy as np

from intrinsic_explore.harness import RunConfig, run_single, time_to_success, window_mean
from intrinsic_explore.agent import run_training

FRAMES = 100_000

# %%
# KeyCorridor is the quickest task.  Defaults for model size and reward scale
# come from the per-environment table in ``harness.MODEL_DEFAULTS``.
for agent in ("a2c", "curious", "power"):
    config = RunConfig.default("keycorridor-s3r1", agent, seed=0, frame_budget=FRAMES)
    run = run_training(config.env, config.agent, config.hp, config.seed, config.frame_budget)
    wm = window_mean(run.records)
    late = np.mean([r.episode_return for r in run.records[-200:]])
    print(f"{agent:8s} episodes {len(run.records):5d}  late success {late:.2f}  "
          f"best window {wm.max():.2f}  time-to-success {time_to_success(run.records)}")

# %%
# ``run_single`` does the same and writes an episode log and a summary.
summary = run_single(RunConfig.default("keycorridor-s3r1", "power", seed=1, frame_budget=20_000,
                                       out_dir="runs/notebook"))
print(summary)
print(open("runs/notebook/keycorridor-s3r1_power_seed1_episodes.csv").read()[:300])
