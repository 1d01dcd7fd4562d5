"""
Dense networks with hand-written gradients
==========================================

Forward passes keep a trace; ``backward`` walks it in reverse.  The gradient
checker compares against central differences.
"""

# %%
import numpy as np

from intrinsic_explore import autodiff_nn as nn

rng = np.random.default_rng(0)
spec = nn.DenseNetSpec((3, 16, 2))
params = nn.init_params(spec, rng)
print(spec.num_params, "parameters")

# %%
# Fit y = (sin x0, x1 * x2) on random points with a squared loss.
x = rng.uniform(-1, 1, (256, 3))
y = np.stack([np.sin(x[:, 0]), x[:, 1] * x[:, 2]], axis=1)


def loss_fn(out):
    diff = out - y
    return float(np.mean(np.sum(diff * diff, axis=1))), 2 * diff / len(y)


print("max relative gradient error:", nn.finite_diff_check(spec, params, x, loss_fn))

# %%
# Adam with the usual defaults.
adam = nn.AdamState.for_params(params, learning_rate=1e-2)
for step in range(1, 1501):
    out, trace = nn.forward(spec, params, x)
    loss, g_out = loss_fn(out)
    grads, _ = nn.backward(spec, params, trace, g_out, input_grad=False)
    nn.adam_step(params, grads, adam)
    if step in (1, 10, 100, 1500):
        print(f"step {step:5d}  loss {loss:.5f}")

# %%
# Parameters serialize to a small binary format.
blob = nn.dumps_params(spec, params)
spec2, params2, _ = nn.loads_params(blob)
print(len(blob), "bytes;", spec2 == spec, np.array_equal(params2.weights[0], params.weights[0]))
