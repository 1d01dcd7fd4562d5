"""
Gridworlds, partial views and binary encodings
==============================================

Three sparse-reward tasks: a chain of three small rooms, a locked two-room
square, and a short corridor with a key and a ball behind doors.
"""

# %%
# Each layout is a pure function of (environment, seed).
import numpy as np

from intrinsic_explore import grid_env as g

for name in ("multiroom-n3-s4", "doorkey-8x8", "keycorridor-s3r1"):
    state, obs = g.reset(name, seed=3)
    print(name, f"({state.width}x{state.height}, {state.max_steps} steps)")
    print(g.render_grid(state))
    print()

# %%
# The agent sees a 7x7 window in front of it.  Walls and closed doors block
# the view; hidden cells show as '?'.
state, obs = g.reset("doorkey-8x8", seed=3)
print(g.render_view(obs))

# %%
# Turning left rotates the window.
state, obs, reward, done = g.step(state, g.Action.LEFT)
print(g.render_view(obs))

# %%
# Networks get a one-hot cube: 7 x 7 cells, 11 object kinds, 3 door states.
bits = g.encode_binary(obs)
print(bits.shape, bits.sum(), g.encode_flat(obs).shape)

# %%
# A breadth-first search over (position, heading, carried item, doors)
# shows that every layout can be solved.  Replaying the plan earns the reward.
plan = g.solve_bfs(state)
print(len(plan), "actions:", " ".join(g.Action(a).name.lower() for a in plan))
for a in plan:
    state, obs, reward, done = g.step(state, a)
print("reward", reward, "done", done)

# %%
# A uniformly random policy rarely succeeds, which is why these tasks need
# directed exploration.
rng = np.random.default_rng(0)
for name in ("multiroom-n3-s4", "doorkey-8x8", "keycorridor-s3r1"):
    wins = 0
    for seed in range(300):
        state, _ = g.reset(name, seed)
        while not state.done:
            _, _, r, _ = g.step(state, int(rng.integers(g.NUM_ACTIONS)))
            wins += r > 0
    print(f"{name:18s} random success rate {wins / 300:.3f}")
