"""
Novelty and control signals from variational models
===================================================

A VAE's loss on a state measures how unfamiliar it is.  The difference
between a predictor that ignores the action and one that sees it measures
how much the action controls what comes next.
"""

# %%
import math

import numpy as np

from intrinsic_explore import agent as ag
from intrinsic_explore import grid_env as g
from intrinsic_explore import variational as var

rng = np.random.default_rng(0)

# %%
# Collect observations from a random walk in DoorKey.
states, actions, next_states = [], [], []
state, obs = g.reset("doorkey-8x8", 0)
while len(states) < 256:
    a = int(rng.integers(g.NUM_ACTIONS))
    s = g.encode_flat(obs)
    state, obs, _, done = g.step(state, a)
    states.append(s), actions.append(a), next_states.append(g.encode_flat(obs))
    if done:
        state, obs = g.reset("doorkey-8x8", len(states))
states, actions, next_states = map(np.array, (states, actions, next_states))

# %%
# An untrained, all-zero VAE assigns every state probability 1/2 per bit.
vae = var.VariationalModel.create("autoencoder", hidden=64, latent=16)
print(ag.intrinsic_reward_curious(vae, states[0], rng), g.OBS_DIM * math.log(2))

# %%
# After training on the walk the loss falls by an order of magnitude, also on
# fresh walks through new layouts.  States a random walk hardly ever reaches
# (key in hand, door open, goal in sight) stay comparatively expensive.
vae = var.VariationalModel.create("autoencoder", hidden=64, latent=16, rng=rng)
for epoch in range(30):
    for i in range(0, len(states), 32):
        var.train_batch(vae, states[i:i + 32], states[i:i + 32], rng)

fresh_walk = []
state, obs = g.reset("doorkey-8x8", 10_000)
while len(fresh_walk) < 64:
    fresh_walk.append(g.encode_flat(obs))
    state, obs, _, done = g.step(state, int(rng.integers(g.NUM_ACTIONS)))
    if done:
        state, obs = g.reset("doorkey-8x8", 10_000 + len(fresh_walk))

near_goal = []
for seed in range(100, 120):
    state, obs = g.reset("doorkey-8x8", seed)
    for a in g.solve_bfs(state)[:-1]:
        state, obs, _, _ = g.step(state, a)
    near_goal.append(g.encode_flat(obs))

print(f"fresh walk {ag.intrinsic_reward_curious(vae, np.array(fresh_walk), rng).mean():.1f}  "
      f"near the goal {ag.intrinsic_reward_curious(vae, np.array(near_goal), rng).mean():.1f}")

# %%
# Two predictors of the next observation.  Only one of them is told the action.
sp = var.VariationalModel.create("state_predictor", hidden=64, latent=16, rng=rng)
ap = var.VariationalModel.create("action_predictor", hidden=64, latent=16, rng=rng)
for epoch in range(30):
    for i in range(0, len(states), 32):
        sl = slice(i, i + 32)
        var.train_batch(sp, states[sl], next_states[sl], rng)
        var.train_batch(ap, states[sl], next_states[sl], rng, actions=actions[sl])
reward = ag.intrinsic_reward_power(sp, ap, states, actions, next_states, rng)
for a in range(g.NUM_ACTIONS):
    print(f"{g.Action(a).name.lower():8s} mean control reward {reward[actions == a].mean():7.2f}")
