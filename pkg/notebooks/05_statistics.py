"""
Comparing agents by time-to-success
===================================

A run's time-to-success is the frame at which its last eight episodes were
all successful (ten million if that never happens).  Agents are compared
with one-sided two-sample t-tests.
"""

# %%
import os

import numpy as np

from intrinsic_explore.harness import RunSummary, load_summaries
from intrinsic_explore.stats import analyze, one_sided_t_from_summary, t_sf

# %%
# From published summary statistics alone: mean and SD of ten runs per agent.
res = one_sided_t_from_summary(6.7e6, 4.3e6, 10, 3.3e5, 0.8e5, 10)
print(f"t = {res.t_statistic:.2f}, df = {res.degrees_of_freedom:.0f}, p = {res.p_value:.1e}")
print("upper tail at t = 4.65:", t_sf(4.65, 18))

# %%
# A synthetic experiment where one baseline run never solves the task.
rng = np.random.default_rng(0)
summaries = []
for agent, centre in (("a2c", 2.5e6), ("curious", 1.2e6), ("power", 2.4e6)):
    for seed in range(10):
        tts = int(rng.normal(centre, 0.3 * centre))
        summaries.append(RunSummary("doorkey-8x8", agent, seed, 10_000_000 if seed == 2 else tts, 5_000_000))
report = analyze(summaries, drop_runs=[2])
print(report.to_text())

# %%
# If the desk-scale MultiRoom runs exist, analyze them as well.
if os.path.isdir("runs/acceptance_c7"):
    print(analyze(load_summaries("runs/acceptance_c7")).to_text())
