"""Advantage actor-critic with optional variational intrinsic rewards.

Three agent kinds share one training loop:

* ``a2c``: extrinsic reward only.
* ``curious``: a VAE's loss on the current observation is the intrinsic
  reward (large loss = unfamiliar observation).
* ``power``: the loss of a state-only next-observation predictor minus the
  loss of a predictor that also sees the action.  The gap is large where the
  action carries information about what comes next.

Every ``rollout_length`` frames the collected transitions are turned into
GAE advantages on the total reward ``r_ex + beta * r_in``, the actor and
critic take one Adam step, and the variational models take one Adam step on
the same frames.  Critic values and intrinsic rewards for a rollout are
evaluated in one batch when it closes; none of the networks change while a
rollout is being collected, so this is the same as evaluating them frame by
frame.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .autodiff_nn import (
    AdamState,
    DenseNetSpec,
    ParamSet,
    adam_step,
    backward,
    clip_by_global_norm,
    forward,
    init_params,
    save_params,
    zero_params,
)
from .errors import ConfigurationError, GenerationError, NumericError, UsageError
from .grid_env import NUM_ACTIONS, OBS_DIM, EnvKind, GridEnv, encode_flat
from .records import EpisodeRecord, RunLog
from .variational import PredictorKind, VariationalModel, dumps_model, evaluate_losses, train_batch

log = logging.getLogger(__name__)


class AgentKind(str, Enum):
    A2C = "a2c"
    CURIOUS = "curious"
    POWER = "power"

    @classmethod
    def parse(cls, name: "str | AgentKind") -> "AgentKind":
        try:
            return cls(name)
        except ValueError:
            raise ConfigurationError(f"unknown agent kind {name!r}") from None


@dataclass
class HyperParams:
    beta: float = 0.0
    gamma: float = 0.99
    gae_lambda: float = 0.95
    entropy_coefficient: float = 0.01
    value_coefficient: float = 0.5
    max_gradient_norm: float = 0.5
    rollout_length: int = 128
    learning_rate: float = 1e-3
    model_learning_rate: float = 1e-3
    ac_hidden: tuple[int, ...] = (64, 64)
    model_hidden: int = 256
    latent_dim: int = 128
    max_steps: int | None = None

    def __post_init__(self):
        self.ac_hidden = tuple(int(h) for h in self.ac_hidden)
        checks = [
            (self.beta >= 0, "beta must be >= 0"),
            (0 < self.gamma <= 1, "gamma must be in (0, 1]"),
            (0 <= self.gae_lambda <= 1, "gae_lambda must be in [0, 1]"),
            (self.entropy_coefficient >= 0, "entropy_coefficient must be >= 0"),
            (self.value_coefficient >= 0, "value_coefficient must be >= 0"),
            (self.max_gradient_norm > 0, "max_gradient_norm must be > 0"),
            (self.rollout_length >= 1, "rollout_length must be >= 1"),
            (self.learning_rate >= 0 and self.model_learning_rate >= 0, "learning rates must be >= 0"),
            (self.model_hidden >= 1 and self.latent_dim >= 1, "model sizes must be positive"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigurationError(message)


# --------------------------------------------------------------------------
# Networks


@dataclass
class ActorCritic:
    actor_spec: DenseNetSpec
    actor: ParamSet
    critic_spec: DenseNetSpec
    critic: ParamSet
    actor_adam: AdamState = field(init=False)
    critic_adam: AdamState = field(init=False)
    learning_rate: float = 1e-3

    def __post_init__(self):
        self.actor_adam = AdamState.for_params(self.actor, self.learning_rate)
        self.critic_adam = AdamState.for_params(self.critic, self.learning_rate)

    @classmethod
    def create(cls, rng: np.random.Generator | None, obs_dim: int = OBS_DIM,
               hidden: tuple[int, ...] = (64, 64), num_actions: int = NUM_ACTIONS,
               learning_rate: float = 1e-3) -> "ActorCritic":
        """Separate actor (softmax) and critic (linear) MLPs; ``rng=None`` zeroes all weights."""
        actor_spec = DenseNetSpec((obs_dim, *hidden, num_actions), "relu", "softmax")
        critic_spec = DenseNetSpec((obs_dim, *hidden, 1), "relu", "linear")
        if rng is None:
            actor, critic = zero_params(actor_spec), zero_params(critic_spec)
        else:
            actor, critic = init_params(actor_spec, rng), init_params(critic_spec, rng)
        return cls(actor_spec, actor, critic_spec, critic, learning_rate=learning_rate)


def policy(ac: ActorCritic, state: np.ndarray) -> np.ndarray:
    """Action probabilities for one state (or a batch of states)."""
    return forward(ac.actor_spec, ac.actor, state)[0]


def value(ac: ActorCritic, state: np.ndarray) -> float | np.ndarray:
    out = forward(ac.critic_spec, ac.critic, state)[0]
    return float(out[0]) if out.ndim == 1 else out[:, 0]


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(probs) - 1)


# --------------------------------------------------------------------------
# Intrinsic rewards


def intrinsic_reward_curious(vae: VariationalModel, s_t: np.ndarray, rng: np.random.Generator):
    """VAE loss on ``s_t`` (scalar for one state, array for a batch)."""
    losses = evaluate_losses(vae, s_t, s_t, rng)
    return float(losses) if np.ndim(losses) == 0 else losses


def intrinsic_reward_power(state_predictor: VariationalModel, action_predictor: VariationalModel,
                           s_t: np.ndarray, a_t, s_next: np.ndarray, rng: np.random.Generator,
                           action_rng: np.random.Generator | None = None):
    """State-only predictor loss minus action-aware predictor loss.

    The state predictor draws its noise from ``rng`` first; the action
    predictor then draws from ``action_rng`` (``rng`` again by default).
    """
    without_action = evaluate_losses(state_predictor, s_t, s_next, rng)
    with_action = evaluate_losses(action_predictor, s_t, s_next,
                                  rng if action_rng is None else action_rng, action=a_t)
    reward = without_action - with_action
    return float(reward) if np.ndim(reward) == 0 else reward


# --------------------------------------------------------------------------
# Rollouts and the A2C update


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    next_state: np.ndarray
    extrinsic_reward: float
    intrinsic_reward: float
    done: bool
    value_estimate: float
    log_action_probability: float


@dataclass
class RolloutBatch:
    states: np.ndarray          # (N, obs_dim)
    actions: np.ndarray         # (N,)
    next_states: np.ndarray     # (N, obs_dim)
    extrinsic: np.ndarray       # (N,)
    intrinsic: np.ndarray       # (N,)
    dones: np.ndarray           # (N,) bool
    values: np.ndarray          # (N,)
    log_probs: np.ndarray       # (N,)
    bootstrap_value: float = 0.0

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def from_transitions(cls, transitions: list[Transition], bootstrap_value: float = 0.0) -> "RolloutBatch":
        if not transitions:
            raise UsageError("empty rollout")
        return cls(
            states=np.array([t.state for t in transitions], dtype=np.float64),
            actions=np.array([t.action for t in transitions], dtype=np.intp),
            next_states=np.array([t.next_state for t in transitions], dtype=np.float64),
            extrinsic=np.array([t.extrinsic_reward for t in transitions], dtype=np.float64),
            intrinsic=np.array([t.intrinsic_reward for t in transitions], dtype=np.float64),
            dones=np.array([t.done for t in transitions], dtype=bool),
            values=np.array([t.value_estimate for t in transitions], dtype=np.float64),
            log_probs=np.array([t.log_action_probability for t in transitions], dtype=np.float64),
            bootstrap_value=float(bootstrap_value),
        )

    def transitions(self) -> list[Transition]:
        return [
            Transition(self.states[i], int(self.actions[i]), self.next_states[i], float(self.extrinsic[i]),
                       float(self.intrinsic[i]), bool(self.dones[i]), float(self.values[i]),
                       float(self.log_probs[i]))
            for i in range(len(self))
        ]


def compute_returns_and_advantages(batch: RolloutBatch, hp: HyperParams) -> tuple[np.ndarray, np.ndarray]:
    """GAE(gamma, lambda) on ``r_ex + beta * r_in``; returns = advantages + values."""
    n = len(batch)
    if n == 0:
        raise UsageError("empty rollout")
    rewards = batch.extrinsic + hp.beta * batch.intrinsic
    advantages = np.zeros(n)
    next_value = batch.bootstrap_value
    running = 0.0
    for t in range(n - 1, -1, -1):
        alive = 0.0 if batch.dones[t] else 1.0
        delta = rewards[t] + hp.gamma * next_value * alive - batch.values[t]
        running = delta + hp.gamma * hp.gae_lambda * alive * running
        advantages[t] = running
        next_value = batch.values[t]
    return advantages + batch.values, advantages


def a2c_loss_and_grads(ac: ActorCritic, states: np.ndarray, actions: np.ndarray, returns: np.ndarray,
                       advantages: np.ndarray, hp: HyperParams) -> tuple[dict, ParamSet, ParamSet]:
    """Batch-mean loss ``-A log pi(a|s) + c_v (G - V)^2 - c_e H(pi)`` and its gradients."""
    n = len(actions)
    rows = np.arange(n)
    probs, atrace = forward(ac.actor_spec, ac.actor, states)
    values_out, ctrace = forward(ac.critic_spec, ac.critic, states)
    v = values_out[:, 0]
    log_p = np.log(probs)
    entropy = -np.sum(probs * log_p, axis=1)
    policy_loss = -float(np.mean(advantages * log_p[rows, actions]))
    value_loss = float(np.mean((returns - v) ** 2))
    mean_entropy = float(np.mean(entropy))
    total = policy_loss + hp.value_coefficient * value_loss - hp.entropy_coefficient * mean_entropy
    if not np.isfinite(total):
        raise NumericError("A2C loss is not finite")

    g_probs = np.zeros_like(probs)
    g_probs[rows, actions] = -advantages / (n * probs[rows, actions])
    # d(-c_e * mean H)/dp = c_e * (log p + 1) / n
    g_probs += hp.entropy_coefficient * (log_p + 1.0) / n
    actor_grads, _ = backward(ac.actor_spec, ac.actor, atrace, g_probs, input_grad=False)
    g_v = (2.0 * hp.value_coefficient / n) * (v - returns)
    critic_grads, _ = backward(ac.critic_spec, ac.critic, ctrace, g_v[:, None], input_grad=False)
    diagnostics = {"policy_loss": policy_loss, "value_loss": value_loss,
                   "entropy": mean_entropy, "loss": total}
    return diagnostics, actor_grads, critic_grads


def a2c_update(ac: ActorCritic, batch: RolloutBatch, returns: np.ndarray, advantages: np.ndarray,
               hp: HyperParams) -> dict:
    """One clipped Adam step on actor and critic; returns loss diagnostics."""
    diagnostics, actor_grads, critic_grads = a2c_loss_and_grads(
        ac, batch.states, batch.actions, returns, advantages, hp)
    diagnostics["grad_norm"] = clip_by_global_norm([actor_grads, critic_grads], hp.max_gradient_norm)
    adam_step(ac.actor, actor_grads, ac.actor_adam)
    adam_step(ac.critic, critic_grads, ac.critic_adam)
    return diagnostics


# --------------------------------------------------------------------------
# Training loop


def episode_seed(run_seed: int, episode: int) -> int:
    """Layout seed for one episode, independent of what the agent did before."""
    ss = np.random.SeedSequence([run_seed % 2**64, episode])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class Agent:
    """Networks, optimizers and random streams of one training run."""

    def __init__(self, kind: "AgentKind | str", hp: HyperParams, seed: int, obs_dim: int = OBS_DIM):
        self.kind = AgentKind.parse(kind)
        self.hp = hp
        init_ss, act_ss, noise_ss = np.random.SeedSequence(seed % 2**64).spawn(3)
        init_rng = np.random.default_rng(init_ss)
        self.action_rng = np.random.default_rng(act_ss)
        self.noise_rng = np.random.default_rng(noise_ss)
        self.ac = ActorCritic.create(init_rng, obs_dim, hp.ac_hidden, NUM_ACTIONS, hp.learning_rate)
        self.models: dict[str, VariationalModel] = {}
        make = lambda kind: VariationalModel.create(kind, hp.model_hidden, hp.latent_dim, init_rng,
                                                    obs_dim=obs_dim, learning_rate=hp.model_learning_rate)
        if self.kind is AgentKind.CURIOUS:
            self.models["vae"] = make(PredictorKind.AUTOENCODER)
        elif self.kind is AgentKind.POWER:
            self.models["state_predictor"] = make(PredictorKind.STATE_PREDICTOR)
            self.models["action_predictor"] = make(PredictorKind.ACTION_PREDICTOR)

    def act(self, state: np.ndarray) -> tuple[int, float]:
        probs = policy(self.ac, state)
        action = sample_action(probs, self.action_rng)
        return action, float(np.log(probs[action]))

    def intrinsic_rewards(self, states, actions, next_states) -> np.ndarray:
        if self.kind is AgentKind.CURIOUS:
            return intrinsic_reward_curious(self.models["vae"], states, self.noise_rng)
        if self.kind is AgentKind.POWER:
            return intrinsic_reward_power(self.models["state_predictor"], self.models["action_predictor"],
                                          states, actions, next_states, self.noise_rng)
        return np.zeros(len(states))

    def train_models(self, batch: RolloutBatch) -> dict:
        losses = {}
        if self.kind is AgentKind.CURIOUS:
            losses["vae"] = train_batch(self.models["vae"], batch.states, batch.states, self.noise_rng)
        elif self.kind is AgentKind.POWER:
            losses["state_predictor"] = train_batch(self.models["state_predictor"], batch.states,
                                                    batch.next_states, self.noise_rng)
            losses["action_predictor"] = train_batch(self.models["action_predictor"], batch.states,
                                                     batch.next_states, self.noise_rng, actions=batch.actions)
        return losses

    def save_checkpoint(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        save_params(os.path.join(directory, "actor.pset"), self.ac.actor_spec, self.ac.actor)
        save_params(os.path.join(directory, "critic.pset"), self.ac.critic_spec, self.ac.critic)
        for name, model in self.models.items():
            with open(os.path.join(directory, f"{name}.vmod"), "wb") as fh:
                fh.write(dumps_model(model))


def run_training(env_kind: "EnvKind | str", agent_kind: "AgentKind | str", hp: HyperParams, seed: int,
                 frame_budget: int, sink: Callable[[EpisodeRecord], None] | None = None,
                 checkpoint_every: int = 0, checkpoint_dir: str | None = None,
                 on_update: Callable[[int, dict], None] | None = None) -> RunLog:
    """Train one agent for ``frame_budget`` environment frames.

    Episode records are appended to the returned log and passed to ``sink``
    once the rollout containing the episode's last frame has been processed.
    Numeric and generation errors end the run with ``status="failed"``.
    """
    env_kind = EnvKind.parse(env_kind)
    agent_kind = AgentKind.parse(agent_kind)
    run = RunLog(env=env_kind.value, agent=agent_kind.value, seed=seed)
    if frame_budget <= 0:
        return run

    agent = Agent(agent_kind, hp, seed)
    env = GridEnv(env_kind, hp.max_steps)
    n = hp.rollout_length
    episode = 0
    x = encode_flat(env.reset(episode_seed(seed, episode)))
    buf_states, buf_next, buf_actions, buf_rewards, buf_dones, buf_logp, buf_episode = [], [], [], [], [], [], []
    ep_return, ep_length = 0.0, 0
    finished: list[tuple[int, int, float, int]] = []   # episodes awaiting their intrinsic means
    intrinsic_sums: dict[int, float] = {}

    def close_rollout(frame: int) -> None:
        states = np.array(buf_states)
        next_states = np.array(buf_next)
        actions = np.array(buf_actions, dtype=np.intp)
        batch = RolloutBatch(
            states=states,
            actions=actions,
            next_states=next_states,
            extrinsic=np.array(buf_rewards),
            intrinsic=np.asarray(agent.intrinsic_rewards(states, actions, next_states), dtype=np.float64),
            dones=np.array(buf_dones, dtype=bool),
            values=value(agent.ac, states),
            log_probs=np.array(buf_logp),
            bootstrap_value=value(agent.ac, x),
        )
        returns, advantages = compute_returns_and_advantages(batch, hp)
        diagnostics = a2c_update(agent.ac, batch, returns, advantages, hp)
        diagnostics.update(agent.train_models(batch))
        if on_update is not None:
            on_update(frame, diagnostics)

        for ep, r_in in zip(buf_episode, batch.intrinsic):
            intrinsic_sums[ep] = intrinsic_sums.get(ep, 0.0) + float(r_in)
        for ep, end_frame, ret, length in finished:
            record = EpisodeRecord(ep, end_frame, ret, length, intrinsic_sums.pop(ep) / length)
            run.records.append(record)
            if sink is not None:
                sink(record)
        finished.clear()
        for buf in (buf_states, buf_next, buf_actions, buf_rewards, buf_dones, buf_logp, buf_episode):
            buf.clear()

    frame = 0
    try:
        for frame in range(1, frame_budget + 1):
            action, logp = agent.act(x)
            obs, reward, done = env.step(action)
            x_next = encode_flat(obs)
            buf_states.append(x)
            buf_next.append(x_next)
            buf_actions.append(action)
            buf_rewards.append(reward)
            buf_dones.append(done)
            buf_logp.append(logp)
            buf_episode.append(episode)
            ep_return += reward
            ep_length += 1
            if done:
                finished.append((episode, frame, ep_return, ep_length))
                episode += 1
                ep_return, ep_length = 0.0, 0
                x = encode_flat(env.reset(episode_seed(seed, episode)))
            else:
                x = x_next
            if len(buf_states) == n or frame == frame_budget:
                close_rollout(frame)
            run.completed_frames = frame
            if checkpoint_every and checkpoint_dir and frame % checkpoint_every == 0:
                agent.save_checkpoint(os.path.join(checkpoint_dir, f"frame_{frame:09d}"))
    except (NumericError, GenerationError, FloatingPointError) as exc:
        log.warning("run %s/%s seed %d failed at frame %d: %s", run.env, run.agent, seed, frame, exc)
        run.status = "failed"
        run.error = str(exc)
    return run
