"""Variational autoencoder and variational predictors over binary observations.

All three model kinds share one shape: a one-hidden-layer ReLU encoder with a
linear bottleneck emitting ``[mean, log_variance]``, and a one-hidden-layer
ReLU decoder with sigmoid (Bernoulli) outputs.  They differ only in what goes
in and what is reconstructed:

==================  =============================  ===========
kind                input                          target
==================  =============================  ===========
autoencoder         s_t                            s_t
state_predictor     s_t                            s_{t+1}
action_predictor    (s_t, one-hot a_t)             s_{t+1}
==================  =============================  ===========

The loss is the usual negative ELBO with unit weights, estimated with one
reparameterized sample per evaluation.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .autodiff_nn import (
    AdamState,
    DenseNetSpec,
    ParamSet,
    adam_step,
    backward,
    dumps_params,
    forward,
    init_params,
    loads_params,
    zero_params,
)
from .errors import NumericError, UsageError
from .grid_env import NUM_ACTIONS, OBS_DIM

PROB_CLAMP = 1e-7


class PredictorKind(str, Enum):
    AUTOENCODER = "autoencoder"
    STATE_PREDICTOR = "state_predictor"
    ACTION_PREDICTOR = "action_predictor"


@dataclass
class GaussianCode:
    mean: np.ndarray
    log_variance: np.ndarray


@dataclass
class GradBundle:
    encoder: ParamSet
    decoder: ParamSet


class VariationalModel:
    """Encoder/decoder pair plus one Adam state per network."""

    def __init__(self, kind: PredictorKind, encoder_spec: DenseNetSpec, encoder: ParamSet,
                 decoder_spec: DenseNetSpec, decoder: ParamSet, learning_rate: float = 1e-3,
                 num_actions: int = NUM_ACTIONS):
        self.kind = PredictorKind(kind)
        self.encoder_spec, self.encoder = encoder_spec, encoder
        self.decoder_spec, self.decoder = decoder_spec, decoder
        self.num_actions = num_actions if self.kind is PredictorKind.ACTION_PREDICTOR else 0
        if encoder_spec.layer_sizes[-1] != 2 * decoder_spec.layer_sizes[0]:
            raise UsageError("encoder output must be twice the latent dimension")
        encoder.check(encoder_spec)
        decoder.check(decoder_spec)
        self.encoder_adam = AdamState.for_params(encoder, learning_rate)
        self.decoder_adam = AdamState.for_params(decoder, learning_rate)

    @classmethod
    def create(cls, kind: "PredictorKind | str", hidden: int, latent: int,
               rng: np.random.Generator | None = None, obs_dim: int = OBS_DIM,
               num_actions: int = NUM_ACTIONS, learning_rate: float = 1e-3) -> "VariationalModel":
        """Fresh model; ``rng=None`` gives all-zero parameters."""
        kind = PredictorKind(kind)
        extra = num_actions if kind is PredictorKind.ACTION_PREDICTOR else 0
        enc_spec = DenseNetSpec((obs_dim + extra, hidden, 2 * latent), "relu", "linear")
        dec_spec = DenseNetSpec((latent, hidden, obs_dim), "relu", "sigmoid")
        make = zero_params if rng is None else (lambda spec: init_params(spec, rng))
        return cls(kind, enc_spec, make(enc_spec), dec_spec, make(dec_spec), learning_rate, num_actions)

    @property
    def latent_dim(self) -> int:
        return self.decoder_spec.layer_sizes[0]

    @property
    def obs_dim(self) -> int:
        return self.decoder_spec.layer_sizes[-1]

    @property
    def input_dim(self) -> int:
        return self.encoder_spec.layer_sizes[0]

    @property
    def learning_rate(self) -> float:
        return self.encoder_adam.learning_rate

    @learning_rate.setter
    def learning_rate(self, value: float) -> None:
        self.encoder_adam.learning_rate = self.decoder_adam.learning_rate = float(value)


def _split_input(model: VariationalModel, x: np.ndarray, action) -> tuple[np.ndarray, np.ndarray | None]:
    """Dense state part and one-hot action indices (None for action-free kinds)."""
    x = np.asarray(x, dtype=np.float64)
    if model.kind is not PredictorKind.ACTION_PREDICTOR:
        if action is not None:
            raise UsageError(f"{model.kind.value} takes no action input")
        if x.shape[-1] != model.input_dim:
            raise UsageError(f"input length {x.shape[-1]} != {model.input_dim}")
        return x, None
    if action is not None:
        if x.shape[-1] != model.obs_dim:
            raise UsageError(f"state length {x.shape[-1]} != {model.obs_dim}")
        return x, np.asarray(action, dtype=np.intp)
    # Concatenated (s_t, one-hot a_t) input.
    if x.shape[-1] != model.input_dim:
        raise UsageError(f"input length {x.shape[-1]} != {model.input_dim}")
    return x[..., :model.obs_dim], np.argmax(x[..., model.obs_dim:], axis=-1)


def _encode(model: VariationalModel, x: np.ndarray, action):
    state, onehot = _split_input(model, x, action)
    out, trace = forward(model.encoder_spec, model.encoder, state, onehot=onehot)
    d = model.latent_dim
    return GaussianCode(out[..., :d], out[..., d:]), trace


def encode(model: VariationalModel, x: np.ndarray, action=None) -> GaussianCode:
    return _encode(model, x, action)[0]


def sample_latent(code: GaussianCode, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(np.shape(code.mean))
    return code.mean + np.exp(0.5 * code.log_variance) * noise


def kl_to_standard_normal(code: GaussianCode) -> float | np.ndarray:
    """KL(N(mean, exp(log_variance)) || N(0, I)), summed over the last axis."""
    mu, lv = np.asarray(code.mean), np.asarray(code.log_variance)
    kl = 0.5 * np.sum(mu * mu + np.expm1(lv) - lv, axis=-1)
    return float(kl) if np.ndim(kl) == 0 else kl


def reconstruction_nll(probs: np.ndarray, target: np.ndarray) -> float | np.ndarray:
    """Bernoulli negative log-likelihood, summed over the last axis."""
    probs = np.asarray(probs, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64).reshape(np.shape(probs)[:-1] + (-1,))
    if target.shape != probs.shape:
        raise UsageError(f"target length {target.shape[-1]} != probability length {probs.shape[-1]}")
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    nll = -np.sum(target * np.log(p) + (1.0 - target) * np.log1p(-p), axis=-1)
    return float(nll) if np.ndim(nll) == 0 else nll


def loss_and_grads(model: VariationalModel, x: np.ndarray, target: np.ndarray,
                   noise: np.ndarray, action=None, need_grads: bool = True):
    """Per-sample losses with explicit reparameterization noise.

    Returns ``(mean_loss, per_sample_losses, grads)`` where ``grads`` is the
    gradient of the mean loss (None when ``need_grads`` is False).  Inputs may
    be single vectors or batches.
    """
    code, etrace = _encode(model, x, action)
    std = np.exp(0.5 * code.log_variance)
    z = code.mean + std * noise
    probs, dtrace = forward(model.decoder_spec, model.decoder, z)
    target = np.asarray(target, dtype=np.float64).reshape(np.shape(probs))
    losses = np.asarray(reconstruction_nll(probs, target) + kl_to_standard_normal(code))
    mean_loss = float(np.mean(losses))
    if not np.isfinite(mean_loss):
        raise NumericError("variational loss is not finite")
    if not need_grads:
        return mean_loss, losses, None

    batch = 1 if np.ndim(probs) == 1 else probs.shape[0]
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    unclamped = (probs > PROB_CLAMP) & (probs < 1.0 - PROB_CLAMP)
    g_probs = np.where(unclamped, (p - target) / (p * (1.0 - p)), 0.0) / batch
    dec_grads, g_z = backward(model.decoder_spec, model.decoder, dtrace, g_probs)
    g_mean = g_z + code.mean / batch
    g_logvar = g_z * 0.5 * std * noise + 0.5 * (np.exp(code.log_variance) - 1.0) / batch
    enc_grads, _ = backward(model.encoder_spec, model.encoder, etrace,
                            np.concatenate([g_mean, g_logvar], axis=-1), input_grad=False)
    return mean_loss, losses, GradBundle(enc_grads, dec_grads)


def _draw_noise(model: VariationalModel, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    shape = (model.latent_dim,) if np.ndim(x) == 1 else (np.shape(x)[0], model.latent_dim)
    return rng.standard_normal(shape)


def predictor_loss(model: VariationalModel, x: np.ndarray, x_prime: np.ndarray,
                   rng: np.random.Generator, action=None) -> tuple[float, GradBundle]:
    """Single-sample loss of predicting ``x_prime`` from ``x`` (and its gradients)."""
    loss, _, grads = loss_and_grads(model, x, x_prime, _draw_noise(model, x, rng), action)
    return loss, grads


def vae_loss(model: VariationalModel, x: np.ndarray, rng: np.random.Generator) -> tuple[float, GradBundle]:
    return predictor_loss(model, x, x, rng)


def evaluate_losses(model: VariationalModel, x: np.ndarray, target: np.ndarray,
                    rng: np.random.Generator, action=None) -> np.ndarray:
    """Per-sample losses without gradients; one noise draw per sample."""
    _, losses, _ = loss_and_grads(model, x, target, _draw_noise(model, x, rng), action, need_grads=False)
    return losses


def train_batch(model: VariationalModel, inputs: Sequence, targets: Sequence,
                rng: np.random.Generator, actions: Sequence[int] | None = None) -> float:
    """One Adam step on the batch-mean loss; returns the loss before the step."""
    if len(inputs) == 0 or len(inputs) != len(targets):
        raise UsageError("train_batch needs equal-length, non-empty inputs and targets")
    x = np.asarray(inputs, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64).reshape(len(targets), -1)
    loss, _, grads = loss_and_grads(model, x, t, _draw_noise(model, x, rng), actions)
    adam_step(model.encoder, grads.encoder, model.encoder_adam)
    adam_step(model.decoder, grads.decoder, model.decoder_adam)
    return loss


# --------------------------------------------------------------------------
# Checkpoints: b"VMOD", u8 kind, u32 latent_dim, u32 num_actions,
# u64 encoder blob length, encoder blob, decoder blob.

_KINDS = list(PredictorKind)


def dumps_model(model: VariationalModel) -> bytes:
    enc = dumps_params(model.encoder_spec, model.encoder)
    dec = dumps_params(model.decoder_spec, model.decoder)
    header = b"VMOD" + struct.pack("<BIIQ", _KINDS.index(model.kind), model.latent_dim,
                                   model.num_actions, len(enc))
    return header + enc + dec


def loads_model(data: bytes, learning_rate: float = 1e-3) -> VariationalModel:
    if data[:4] != b"VMOD":
        raise UsageError("not a variational model checkpoint")
    kind, latent, num_actions, enc_len = struct.unpack_from("<BIIQ", data, 4)
    off = 4 + struct.calcsize("<BIIQ")
    enc_spec, enc, _ = loads_params(data[off:off + enc_len])
    dec_spec, dec, _ = loads_params(data[off + enc_len:])
    model = VariationalModel(_KINDS[kind], enc_spec, enc, dec_spec, dec, learning_rate,
                             num_actions or NUM_ACTIONS)
    if model.latent_dim != latent:
        raise UsageError("checkpoint header disagrees with stored networks")
    return model
