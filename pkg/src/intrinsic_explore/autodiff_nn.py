"""Small dense networks in float64: forward, reverse-mode backward, Adam.

A network is a ``DenseNetSpec`` (layer sizes and activations) plus a
``ParamSet`` holding one ``(fan_in, fan_out)`` weight matrix and one bias
vector per layer.  Inputs may be a single vector or a ``(batch, features)``
matrix; ``backward`` sums parameter gradients over the batch rows, so a loss
that averages over the batch should scale its output gradient by ``1/batch``.

Inputs can carry a trailing one-hot block given as integer indices
(``onehot=``) instead of dense columns.  The block's rows of the first weight
matrix are looked up rather than multiplied, which is both cheaper and keeps
the dense part of the computation bit-identical to a network without the
block.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import NumericError, UsageError

HIDDEN_ACTIVATIONS = ("relu",)
OUTPUT_ACTIVATIONS = ("linear", "sigmoid", "softmax")


@dataclass(frozen=True)
class DenseNetSpec:
    layer_sizes: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "linear"

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or any(n <= 0 for n in sizes):
            raise UsageError(f"need at least two positive layer sizes, got {sizes}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise UsageError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise UsageError(f"unsupported output activation {self.output_activation!r}")

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def num_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))


@dataclass
class ParamSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        """Weights then biases, in layer order (the serialization order)."""
        return [*self.weights, *self.biases]

    def copy(self) -> "ParamSet":
        return ParamSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "ParamSet":
        return ParamSet([np.zeros_like(w) for w in self.weights],
                        [np.zeros_like(b) for b in self.biases])

    def check(self, spec: DenseNetSpec) -> None:
        if len(self.weights) != spec.num_layers or len(self.biases) != spec.num_layers:
            raise UsageError("parameter set does not match network depth")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (spec.layer_sizes[i], spec.layer_sizes[i + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise UsageError(f"layer {i}: expected weight {shape}, got {w.shape}")


def init_params(spec: DenseNetSpec, rng: np.random.Generator) -> ParamSet:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero."""
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ParamSet(weights, biases)


def zero_params(spec: DenseNetSpec) -> ParamSet:
    return ParamSet([np.zeros((a, b)) for a, b in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])],
                    [np.zeros(b) for b in spec.layer_sizes[1:]])


sigmoid = expit


def softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


@dataclass
class Trace:
    """Intermediates of one forward pass, consumed by ``backward``."""

    spec: DenseNetSpec
    inputs: list[np.ndarray]          # input to each layer (post-activation of the previous)
    preacts: list[np.ndarray]         # affine outputs of each layer
    output: np.ndarray
    single: bool
    onehot: np.ndarray | None = None
    _param_ids: tuple = field(default=(), repr=False)


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise UsageError(f"input must be 1-D or 2-D, got shape {x.shape}")


def forward(spec: DenseNetSpec, params: ParamSet, x: np.ndarray,
            onehot: np.ndarray | int | None = None) -> tuple[np.ndarray, Trace]:
    h, single = _as_batch(x)
    first = spec.layer_sizes[0]
    if onehot is None:
        if h.shape[1] != first:
            raise UsageError(f"input has {h.shape[1]} features, network expects {first}")
    else:
        onehot = np.atleast_1d(np.asarray(onehot, dtype=np.intp))
        width = first - h.shape[1]
        if width <= 0 or onehot.shape != (h.shape[0],) or onehot.min() < 0 or onehot.max() >= width:
            raise UsageError("one-hot indices do not fit the network input")

    inputs, preacts = [], []
    last = spec.num_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        if i == 0 and onehot is not None:
            dense = h.shape[1]
            a = h @ w[:dense] + w[dense + onehot] + b
        else:
            a = h @ w + b
        preacts.append(a)
        if i < last:
            h = np.maximum(a, 0.0)
        elif spec.output_activation == "sigmoid":
            h = sigmoid(a)
        elif spec.output_activation == "softmax":
            h = softmax(a)
        else:
            h = a
    trace = Trace(spec, inputs, preacts, h, single, onehot, tuple(id(w) for w in params.weights))
    return (h[0] if single else h), trace


def backward(spec: DenseNetSpec, params: ParamSet, trace: Trace, output_gradient: np.ndarray,
             input_grad: bool = True) -> tuple[ParamSet, np.ndarray | None]:
    """Gradients of ``sum(output_gradient * output)`` w.r.t. parameters and dense input.

    Pass ``input_grad=False`` to skip the (large) input-gradient product when
    the input is data; the second return value is then None.
    """
    if trace.spec != spec or trace._param_ids != tuple(id(w) for w in params.weights):
        raise UsageError("trace was produced by a different network")
    g = np.asarray(output_gradient, dtype=np.float64)
    if trace.single:
        g = g[None, :]
    if g.shape != trace.output.shape:
        raise UsageError(f"output gradient shape {g.shape} != output shape {trace.output.shape}")

    y = trace.output
    if spec.output_activation == "sigmoid":
        g = g * y * (1.0 - y)
    elif spec.output_activation == "softmax":
        g = y * (g - (g * y).sum(axis=-1, keepdims=True))

    grad_w: list[np.ndarray] = [None] * spec.num_layers  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * spec.num_layers  # type: ignore[list-item]
    for i in range(spec.num_layers - 1, -1, -1):
        if i < spec.num_layers - 1:
            g = g * (trace.preacts[i] > 0.0)  # ReLU subgradient at 0 is 0
        h = trace.inputs[i]
        w = params.weights[i]
        grad_b[i] = g.sum(axis=0)
        if i == 0 and trace.onehot is not None:
            dense = h.shape[1]
            gw = np.zeros_like(w)
            gw[:dense] = h.T @ g
            np.add.at(gw, dense + trace.onehot, g)
            grad_w[i] = gw
            w = w[:dense]
        else:
            grad_w[i] = h.T @ g
        if i == 0 and not input_grad:
            return ParamSet(grad_w, grad_b), None
        g = g @ w.T
    grad_input = g[0] if trace.single else g
    return ParamSet(grad_w, grad_b), grad_input


# --------------------------------------------------------------------------
# Optimizer


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: ParamSet, learning_rate: float = 1e-3, **kw) -> "AdamState":
        return cls([np.zeros_like(a) for a in params.arrays()],
                   [np.zeros_like(a) for a in params.arrays()],
                   learning_rate=learning_rate, **kw)


def adam_step(params: ParamSet, grads: ParamSet, state: AdamState) -> tuple[ParamSet, AdamState]:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or any(p.shape != g.shape for p, g in zip(p_arrays, g_arrays)):
        raise UsageError("gradient shapes do not match parameters")
    if not all(np.isfinite(g).all() for g in g_arrays):
        raise NumericError("non-finite gradient passed to adam_step")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    step_size = state.learning_rate / (1.0 - b1 ** t)
    v_correction = 1.0 / np.sqrt(1.0 - b2 ** t)
    for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
        # In-place arithmetic: the VAE layers hold millions of entries.
        tmp = np.subtract(g, m)
        tmp *= 1.0 - b1
        m += tmp                      # m <- b1 m + (1 - b1) g
        np.multiply(g, g, out=tmp)
        tmp -= v
        tmp *= 1.0 - b2
        v += tmp                      # v <- b2 v + (1 - b2) g^2
        np.sqrt(v, out=tmp)
        tmp *= v_correction
        tmp += state.epsilon          # sqrt(v_hat) + eps
        np.divide(m, tmp, out=tmp)
        tmp *= step_size              # lr * m_hat / (sqrt(v_hat) + eps)
        p -= tmp
    return params, state


def global_norm(grad_sets: list[ParamSet]) -> float:
    return float(np.sqrt(sum(float((a * a).sum()) for gs in grad_sets for a in gs.arrays())))


def clip_by_global_norm(grad_sets: list[ParamSet], max_norm: float) -> float:
    """Scale gradients in place so their joint norm is at most ``max_norm``."""
    norm = global_norm(grad_sets)
    if norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        for gs in grad_sets:
            for a in gs.arrays():
                a *= factor
    return norm


# --------------------------------------------------------------------------
# Gradient checking
#
# The default step sits near the cube root of machine epsilon, where central
# differences balance truncation against rounding.  At 1e-6 rounding in an
# O(1) loss already costs ~1e-4 relative accuracy on gradients of size ~1e-6;
# much above 1e-5 the step starts crossing ReLU kinks.

FD_EPSILON = 1e-5


def max_relative_error(loss: Callable[[], float], arrays: list[np.ndarray],
                       analytic: list[np.ndarray], epsilon: float = FD_EPSILON) -> float:
    """Central differences on every entry of ``arrays`` against ``analytic``.

    ``loss`` is re-evaluated after perturbing each entry in place.
    """
    if not epsilon > 0:
        raise UsageError("epsilon must be positive")
    worst = 0.0
    for arr, grad in zip(arrays, analytic):
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss()
            flat[i] = orig - epsilon
            down = loss()
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            err = abs(numeric - gflat[i]) / max(abs(numeric), abs(gflat[i]), 1e-8)
            worst = max(worst, err)
    return worst


def finite_diff_check(spec: DenseNetSpec, params: ParamSet, x: np.ndarray,
                      loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
                      epsilon: float = FD_EPSILON) -> float:
    """Max relative error between ``backward`` and central differences.

    ``loss_fn(output)`` returns ``(loss, dloss/doutput)``.
    """
    if not epsilon > 0:
        raise UsageError("epsilon must be positive")
    out, trace = forward(spec, params, x)
    _, g_out = loss_fn(out)
    grads, _ = backward(spec, params, trace, g_out)

    def loss() -> float:
        return float(loss_fn(forward(spec, params, x)[0])[0])

    return max_relative_error(loss, params.arrays(), grads.arrays(), epsilon)


# --------------------------------------------------------------------------
# Serialization
#
# Layout (little-endian):
#   b"PSET"                 magic
#   u32 version (=1)
#   u32 n                   number of layers
#   u32 * (n + 1)           layer sizes
#   u8 hidden, u8 output    activation codes (index into the tuples above)
#   f64 ...                 weights of each layer (row-major), then biases

_MAGIC = b"PSET"
_VERSION = 1


def dumps_params(spec: DenseNetSpec, params: ParamSet) -> bytes:
    params.check(spec)
    sizes = spec.layer_sizes
    header = _MAGIC + struct.pack(f"<II{len(sizes)}IBB", _VERSION, spec.num_layers, *sizes,
                                  HIDDEN_ACTIVATIONS.index(spec.hidden_activation),
                                  OUTPUT_ACTIVATIONS.index(spec.output_activation))
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    return header + body


def loads_params(data: bytes) -> tuple[DenseNetSpec, ParamSet, int]:
    """Parse one parameter blob; returns ``(spec, params, bytes_consumed)``."""
    if data[:4] != _MAGIC:
        raise UsageError("not a parameter blob (bad magic)")
    version, n = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise UsageError(f"unsupported parameter blob version {version}")
    off = 12
    sizes = struct.unpack_from(f"<{n + 1}I", data, off)
    off += 4 * (n + 1)
    hidden, output = struct.unpack_from("<BB", data, off)
    off += 2
    spec = DenseNetSpec(sizes, HIDDEN_ACTIVATIONS[hidden], OUTPUT_ACTIVATIONS[output])

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(shape)
        off += 8 * count
        return arr

    weights = [take((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [take((b,)) for b in sizes[1:]]
    return spec, ParamSet(weights, biases), off


def save_params(path, spec: DenseNetSpec, params: ParamSet) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_params(spec, params))


def load_params(path) -> tuple[DenseNetSpec, ParamSet]:
    with open(path, "rb") as fh:
        spec, params, _ = loads_params(fh.read())
    return spec, params
