import math

import numpy as np
import pytest

from intrinsic_explore import agent as ag
from intrinsic_explore import variational as var
from intrinsic_explore.errors import ConfigurationError
from intrinsic_explore.grid_env import NUM_ACTIONS, OBS_DIM
from intrinsic_explore.variational import VariationalModel

SMALL = dict(ac_hidden=(8,), model_hidden=8, latent_dim=4, rollout_length=16)


def batch_from(rewards, values=None, dones=None, bootstrap=0.0, intrinsic=None):
    n = len(rewards)
    return ag.RolloutBatch(
        states=np.zeros((n, 2)), actions=np.zeros(n, np.intp), next_states=np.zeros((n, 2)),
        extrinsic=np.asarray(rewards, float),
        intrinsic=np.zeros(n) if intrinsic is None else np.asarray(intrinsic, float),
        dones=np.zeros(n, bool) if dones is None else np.asarray(dones, bool),
        values=np.zeros(n) if values is None else np.asarray(values, float),
        log_probs=np.zeros(n), bootstrap_value=bootstrap)


# -- hyperparameters -------------------------------------------------------------


def test_hyperparams_validation():
    with pytest.raises(ConfigurationError):
        ag.HyperParams(beta=-1.0)
    with pytest.raises(ConfigurationError):
        ag.HyperParams(gamma=0.0)
    with pytest.raises(ConfigurationError):
        ag.HyperParams(rollout_length=0)


def test_agent_kind_parse():
    assert ag.AgentKind.parse("power") is ag.AgentKind.POWER
    with pytest.raises(ConfigurationError):
        ag.AgentKind.parse("random")


# -- policy and value -------------------------------------------------------------


def test_zero_actor_is_uniform():
    ac = ag.ActorCritic.create(None)
    probs = ag.policy(ac, np.random.default_rng(0).random(OBS_DIM))
    assert np.allclose(probs, 1 / 7, atol=1e-15)
    assert ag.value(ac, np.ones(OBS_DIM)) == 0.0


def test_policy_is_a_distribution():
    ac = ag.ActorCritic.create(np.random.default_rng(0), obs_dim=20)
    states = np.random.default_rng(1).random((50, 20))
    probs = ag.policy(ac, states)
    assert np.all(probs >= 0) and np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_sampling_is_reproducible_and_matches_probs():
    probs = np.array([0.1, 0.0, 0.6, 0.3])
    draws = [ag.sample_action(probs, np.random.default_rng(5)) for _ in range(3)]
    assert len(set(draws)) == 1
    rng = np.random.default_rng(0)
    counts = np.bincount([ag.sample_action(probs, rng) for _ in range(20_000)], minlength=4) / 20_000
    assert counts[1] == 0 and np.allclose(counts, probs, atol=0.015)


def test_hand_set_critic():
    ac = ag.ActorCritic.create(None, obs_dim=2, hidden=(2,))
    ac.critic.weights[0][:] = [[1.0, 0.0], [0.0, -1.0]]
    ac.critic.weights[1][:] = [[2.0], [5.0]]
    ac.critic.biases[1][:] = 0.25
    # hidden relu([3, -4]) = [3, 0]; value = 6.25
    assert ag.value(ac, np.array([3.0, 4.0])) == pytest.approx(6.25)


# -- intrinsic rewards --------------------------------------------------------------


def test_curious_reward_of_zero_vae():
    vae = VariationalModel.create("autoencoder", 8, 4)
    r = ag.intrinsic_reward_curious(vae, np.ones(OBS_DIM), np.random.default_rng(0))
    assert r == pytest.approx(OBS_DIM * math.log(2), abs=1e-6)


def test_curious_reward_drops_on_trained_state():
    rng = np.random.default_rng(0)
    vae = VariationalModel.create("autoencoder", 16, 4, rng=rng, obs_dim=40, learning_rate=0.01)
    s = (rng.random(40) < 0.3).astype(float)
    before = ag.intrinsic_reward_curious(vae, s, np.random.default_rng(1))
    for _ in range(200):
        var.train_batch(vae, [s], [s], rng)
    after = ag.intrinsic_reward_curious(vae, s, np.random.default_rng(1))
    assert 0.0 <= after < before


def test_power_reward_of_zero_models():
    sp = VariationalModel.create("state_predictor", 8, 4)
    ap = VariationalModel.create("action_predictor", 8, 4)
    s = np.ones(OBS_DIM)
    assert ag.intrinsic_reward_power(sp, ap, s, 3, s, np.random.default_rng(0)) == pytest.approx(0.0, abs=1e-9)


def action_blind_copy(sp):
    """Action predictor equal to ``sp`` with zero weights on the action inputs."""
    ap = VariationalModel.create("action_predictor", sp.encoder_spec.layer_sizes[1], sp.latent_dim,
                                 obs_dim=sp.obs_dim)
    ap.encoder.weights[0][:sp.obs_dim] = sp.encoder.weights[0]
    ap.encoder.weights[0][sp.obs_dim:] = 0.0
    ap.encoder.biases[0][:] = sp.encoder.biases[0]
    for dst, src in zip(ap.encoder.weights[1:] + ap.encoder.biases[1:] + ap.decoder.arrays(),
                        sp.encoder.weights[1:] + sp.encoder.biases[1:] + sp.decoder.arrays()):
        dst[:] = src
    return ap


@pytest.mark.parametrize("seed", range(5))
def test_power_reward_zero_for_action_blind_copy(seed):
    rng = np.random.default_rng(seed)
    sp = VariationalModel.create("state_predictor", 32, 8, rng=rng)
    ap = action_blind_copy(sp)
    s, s_next = (rng.random((2, OBS_DIM)) < 0.05).astype(float)
    r = ag.intrinsic_reward_power(sp, ap, s, int(rng.integers(NUM_ACTIONS)), s_next,
                                  np.random.default_rng(seed + 100), np.random.default_rng(seed + 100))
    assert r == 0.0


def test_power_reward_positive_on_controllable_channel():
    # two-state toy channel: the next state is the one-hot of the action
    rng = np.random.default_rng(0)
    sp = VariationalModel.create("state_predictor", 16, 2, rng=rng, obs_dim=2, num_actions=2, learning_rate=0.01)
    ap = VariationalModel.create("action_predictor", 16, 2, rng=rng, obs_dim=2, num_actions=2, learning_rate=0.01)
    for _ in range(600):
        actions = rng.integers(2, size=32)
        states = np.eye(2)[rng.integers(2, size=32)]
        targets = np.eye(2)[actions]
        var.train_batch(sp, states, targets, rng)
        var.train_batch(ap, states, targets, rng, actions=actions)
    actions = rng.integers(2, size=2000)
    states = np.eye(2)[rng.integers(2, size=2000)]
    rewards = ag.intrinsic_reward_power(sp, ap, states, actions, np.eye(2)[actions], rng)
    assert np.isfinite(rewards).all() and rewards.mean() > 0.5


# -- returns and the A2C update -----------------------------------------------------


def test_returns_all_zero():
    returns, adv = ag.compute_returns_and_advantages(batch_from([0, 0, 0]), ag.HyperParams())
    assert not returns.any() and not adv.any()


def test_returns_hand_computed():
    hp = ag.HyperParams(gae_lambda=1.0)
    returns, adv = ag.compute_returns_and_advantages(batch_from([0, 0, 1]), hp)
    assert np.allclose(returns, [0.9801, 0.99, 1.0])
    assert np.allclose(adv, returns)


def test_returns_respect_episode_ends_and_bootstrap():
    hp = ag.HyperParams(gae_lambda=1.0, gamma=0.5)
    returns, _ = ag.compute_returns_and_advantages(batch_from([1, 0, 0], dones=[1, 0, 0], bootstrap=8.0), hp)
    assert np.allclose(returns, [1.0, 2.0, 4.0])


def test_gae_with_values_matches_reference():
    hp = ag.HyperParams()
    rng = np.random.default_rng(0)
    r, v, d = rng.random(10), rng.random(10), rng.random(10) < 0.2
    returns, adv = ag.compute_returns_and_advantages(batch_from(r, v, d, bootstrap=0.3), hp)
    ref = np.zeros(10)
    for t in range(10):  # forward-looking sum of discounted TD errors
        acc, decay = 0.0, 1.0
        for k in range(t, 10):
            nv = 0.3 if k == 9 else v[k + 1]
            acc += decay * (r[k] + hp.gamma * nv * (not d[k]) - v[k])
            if d[k]:
                break
            decay *= hp.gamma * hp.gae_lambda
        ref[t] = acc
    assert np.allclose(adv, ref) and np.allclose(returns, ref + v)


def test_beta_scales_intrinsic():
    base = batch_from([0, 1, 0], intrinsic=[2.0, 3.0, 5.0])
    r0, _ = ag.compute_returns_and_advantages(base, ag.HyperParams(beta=0.0))
    r_ex, _ = ag.compute_returns_and_advantages(batch_from([0, 1, 0]), ag.HyperParams())
    assert np.array_equal(r0, r_ex)
    r1, _ = ag.compute_returns_and_advantages(base, ag.HyperParams(beta=0.5, gae_lambda=1.0))
    r_tot, _ = ag.compute_returns_and_advantages(batch_from([1.0, 2.5, 2.5]), ag.HyperParams(gae_lambda=1.0))
    assert np.allclose(r1, r_tot)


def test_uniform_policy_entropy():
    ac = ag.ActorCritic.create(None, obs_dim=3)
    diag, _, _ = ag.a2c_loss_and_grads(ac, np.ones((4, 3)), np.zeros(4, np.intp), np.zeros(4), np.zeros(4),
                                       ag.HyperParams())
    assert diag["entropy"] == pytest.approx(math.log(7))


def test_zero_advantage_no_entropy_leaves_actor():
    ac = ag.ActorCritic.create(np.random.default_rng(0), obs_dim=3, hidden=(4,))
    before = [a.copy() for a in ac.actor.arrays()]
    batch = batch_from([1.0, 0.0])
    batch.states = np.random.default_rng(1).random((2, 3))
    ag.a2c_update(ac, batch, np.ones(2), np.zeros(2), ag.HyperParams(entropy_coefficient=0.0))
    assert all(np.array_equal(a, b) for a, b in zip(before, ac.actor.arrays()))


def test_value_regression_converges():
    ac = ag.ActorCritic.create(np.random.default_rng(0), obs_dim=3, hidden=(8,), learning_rate=0.01)
    batch = batch_from(np.zeros(6))
    batch.states = np.random.default_rng(1).random((6, 3))
    hp = ag.HyperParams(learning_rate=0.01, max_gradient_norm=10.0)
    first = ag.a2c_update(ac, batch, np.full(6, 2.0), np.zeros(6), hp)["value_loss"]
    for _ in range(1000):
        last = ag.a2c_update(ac, batch, np.full(6, 2.0), np.zeros(6), hp)["value_loss"]
    assert first > 1.0 and last < 1e-2 * first


def test_a2c_gradients_match_finite_differences():
    from intrinsic_explore.autodiff_nn import max_relative_error
    rng = np.random.default_rng(3)
    ac = ag.ActorCritic.create(rng, obs_dim=3, hidden=(3,))
    for p in ac.actor.biases + ac.critic.biases:
        p[:] = rng.uniform(-0.5, 0.5, p.shape)
    states, actions = rng.random((4, 3)), rng.integers(7, size=4)
    returns, adv = rng.normal(size=4), rng.normal(size=4)
    hp = ag.HyperParams()
    _, ga, gc = ag.a2c_loss_and_grads(ac, states, actions, returns, adv, hp)

    def loss():
        return ag.a2c_loss_and_grads(ac, states, actions, returns, adv, hp)[0]["loss"]

    assert max_relative_error(loss, ac.actor.arrays() + ac.critic.arrays(), ga.arrays() + gc.arrays()) < 1e-5


def test_rollout_batch_round_trip():
    batch = batch_from([0, 1], dones=[0, 1])
    again = ag.RolloutBatch.from_transitions(batch.transitions(), batch.bootstrap_value)
    assert np.array_equal(again.dones, batch.dones) and np.array_equal(again.extrinsic, batch.extrinsic)


# -- training loop --------------------------------------------------------------------


def test_zero_frame_budget():
    run = ag.run_training("doorkey-8x8", "a2c", ag.HyperParams(**SMALL), 0, 0)
    assert run.records == [] and run.completed_frames == 0


def test_episode_seed_is_stable():
    assert ag.episode_seed(1, 2) == ag.episode_seed(1, 2) != ag.episode_seed(1, 3)


@pytest.mark.parametrize("kind", ["a2c", "curious", "power"])
def test_run_training_is_deterministic(kind):
    hp = ag.HyperParams(beta=1e-3, **SMALL)
    a = ag.run_training("keycorridor-s3r1", kind, hp, 7, 600)
    b = ag.run_training("keycorridor-s3r1", kind, hp, 7, 600)
    assert a.records == b.records and a.status == "finished" and a.completed_frames == 600
    assert a.records and a.records[-1].end_frame <= 600
    assert [r.episode for r in a.records] == list(range(len(a.records)))


def test_a2c_intrinsic_is_zero_and_curious_is_positive():
    hp = ag.HyperParams(**SMALL)
    assert all(r.intrinsic_mean == 0.0 for r in ag.run_training("doorkey-8x8", "a2c", hp, 1, 400).records)
    assert all(r.intrinsic_mean > 0.0 for r in ag.run_training("doorkey-8x8", "curious", hp, 1, 400).records)


def test_beta_zero_agents_match_a2c():
    hp = ag.HyperParams(beta=0.0, **SMALL)
    runs = [ag.run_training("keycorridor-s3r1", k, hp, 3, 500).records for k in ("a2c", "curious", "power")]
    key = lambda recs: [(r.end_frame, r.episode_return, r.length) for r in recs]
    assert key(runs[0]) == key(runs[1]) == key(runs[2])


def test_sink_sees_every_record_in_order():
    seen = []
    run = ag.run_training("keycorridor-s3r1", "a2c", ag.HyperParams(**SMALL), 0, 500, sink=seen.append)
    assert seen == run.records


def test_checkpoints_written(tmp_path):
    updates = []
    ag.run_training("doorkey-8x8", "power", ag.HyperParams(**SMALL), 0, 64, checkpoint_every=32,
                    checkpoint_dir=str(tmp_path), on_update=lambda f, d: updates.append(f))
    names = sorted(p.name for p in (tmp_path / "frame_000000064").iterdir())
    assert names == ["action_predictor.vmod", "actor.pset", "critic.pset", "state_predictor.vmod"]
    assert updates == [16, 32, 48, 64]


def test_nonfinite_loss_marks_run_failed(monkeypatch):
    def boom(*args, **kwargs):
        raise ag.NumericError("diverged")
    monkeypatch.setattr(ag, "a2c_update", boom)
    run = ag.run_training("doorkey-8x8", "a2c", ag.HyperParams(**SMALL), 0, 100)
    assert run.status == "failed" and "diverged" in run.error
