"""Acceptance suite: one test (or parametrized group) per criterion.

Each test records a pass/fail line that is printed in the terminal summary.
Criterion 7 trains 15 runs of 1e6 frames; finished runs are cached under
``runs/acceptance_c7`` (override with ``INTRINSIC_EXPLORE_C7_DIR``) and reused
when their summary echoes the same configuration.
"""
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from intrinsic_explore import agent as ag
from intrinsic_explore import grid_env as g
from intrinsic_explore import variational as var
from intrinsic_explore.autodiff_nn import max_relative_error
from intrinsic_explore.harness import (TIME_TO_SUCCESS_CAP, EpisodeLogWriter, RunConfig, read_summary,
                                       run_single)
from intrinsic_explore.stats import one_sided_t_from_summary, t_sf
from intrinsic_explore.variational import GaussianCode, VariationalModel

# -- 1. t-test reproduction ----------------------------------------------------------

# Reference (mean, SD) of time-to-success, n = 10 runs each.
REFERENCE_TTS = {
    "multiroom": {"a2c": (6.7e6, 4.3e6), "curious": (3.3e5, 0.8e5), "power": (6.7e5, 2.4e5)},
    "doorkey": {"a2c": (2.8e6, 2.6e6), "curious": (1.2e6, 0.5e6), "power": (2.7e6, 2.9e6)},
    "keycorridor": {"a2c": (2.5e5, 0.7e5), "curious": (2.8e5, 0.6e5), "power": (2.1e5, 0.4e5)},
}
# (env, faster agent, slower agent, published t, tolerance)
PUBLISHED_T = [
    ("multiroom", "curious", "a2c", 4.65, 0.15),
    ("multiroom", "power", "a2c", 4.39, 0.15),
    ("multiroom", "curious", "power", 4.19, 0.15),
    ("doorkey", "curious", "a2c", 1.68, 0.35),
    ("doorkey", "curious", "power", 1.52, 0.35),
    ("doorkey", "power", "a2c", 0.11, 0.35),
    ("keycorridor", "a2c", "curious", 1.1, 0.35),
    ("keycorridor", "power", "a2c", 1.86, 0.35),
    ("keycorridor", "power", "curious", 3.5, 0.35),
]


@pytest.mark.parametrize("env,fast,slow,published,tol", PUBLISHED_T,
                         ids=[f"{e}-{a}-vs-{b}" for e, a, b, _, _ in PUBLISHED_T])
def test_criterion_1_t_values(criterion, env, fast, slow, published, tol):
    (m_slow, sd_slow), (m_fast, sd_fast) = REFERENCE_TTS[env][slow], REFERENCE_TTS[env][fast]
    t = one_sided_t_from_summary(m_slow, sd_slow, 10, m_fast, sd_fast, 10).t_statistic
    ok = abs(t - published) <= tol
    criterion(1, ok, f"{env} {fast}<{slow}: t={t:.3f} vs {published} (|dt|={abs(t - published):.3f}, tol {tol})")
    assert ok


# -- 2. statistical kernel ------------------------------------------------------------


def test_criterion_2_t_distribution(criterion):
    import mpmath
    mpmath.mp.dps = 30

    def oracle(t, df):
        nu = mpmath.mpf(df)
        c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
        pdf = lambda x: c * (1 + x * x / nu) ** (-(nu + 1) / 2)
        return float(mpmath.quad(pdf, [t, 0, mpmath.inf]) if t < 0 else mpmath.quad(pdf, [t, mpmath.inf]))

    p = t_sf(4.65, 18)
    worst = max(abs(t_sf(t, df) - oracle(t, df))
                for df in (1, 5, 18, 50) for t in np.linspace(-10, 10, 41))
    ok = p < 1e-3 and worst < 1e-8
    criterion(2, ok, f"p(t=4.65, df=18)={p:.3e}; max |sf - quadrature| = {worst:.1e}")
    assert ok


# -- 3. gradient integrity -------------------------------------------------------------


def _random_biases(params, rng):
    for b in params.biases:
        b[:] = rng.uniform(-0.5, 0.5, b.shape)


def _actor_critic_errors(rng):
    ac = ag.ActorCritic.create(rng, obs_dim=2, hidden=(2, 2))
    _random_biases(ac.actor, rng)
    _random_biases(ac.critic, rng)
    assert ac.actor_spec.num_params <= 40 and ac.critic_spec.num_params <= 40
    states, actions = rng.normal(size=(5, 2)), rng.integers(7, size=5)
    returns, adv = rng.normal(size=5), rng.normal(size=5)
    hp = ag.HyperParams()
    _, ga, gc = ag.a2c_loss_and_grads(ac, states, actions, returns, adv, hp)

    def loss():
        return ag.a2c_loss_and_grads(ac, states, actions, returns, adv, hp)[0]["loss"]

    return (max_relative_error(loss, ac.actor.arrays(), ga.arrays()),
            max_relative_error(loss, ac.critic.arrays(), gc.arrays()))


def _variational_error(kind, rng):
    obs_dim = 3 if kind == "action_predictor" else 4
    model = VariationalModel.create(kind, hidden=2, latent=1, rng=rng, obs_dim=obs_dim, num_actions=2)
    _random_biases(model.encoder, rng)
    _random_biases(model.decoder, rng)
    assert model.encoder_spec.num_params + model.decoder_spec.num_params <= 40
    x = (rng.random((3, obs_dim)) < 0.5).astype(float)
    target = x if kind == "autoencoder" else (rng.random(x.shape) < 0.5).astype(float)
    action = rng.integers(2, size=3) if kind == "action_predictor" else None
    noise = rng.normal(size=(3, 1))  # frozen
    _, _, grads = var.loss_and_grads(model, x, target, noise, action)

    def loss():
        return var.loss_and_grads(model, x, target, noise, action, need_grads=False)[0]

    return max_relative_error(loss, model.encoder.arrays() + model.decoder.arrays(),
                              grads.encoder.arrays() + grads.decoder.arrays())


def test_criterion_3_gradients(criterion):
    worst = dict.fromkeys(["actor", "critic", "autoencoder", "state_predictor", "action_predictor"], 0.0)
    for trial in range(100):
        rng = np.random.default_rng(trial)
        a, c = _actor_critic_errors(rng)
        worst["actor"] = max(worst["actor"], a)
        worst["critic"] = max(worst["critic"], c)
        for kind in ("autoencoder", "state_predictor", "action_predictor"):
            worst[kind] = max(worst[kind], _variational_error(kind, rng))
    ok = max(worst.values()) < 1e-4
    criterion(3, ok, "max rel. error over 100 trials: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


# -- 4. loss identities ------------------------------------------------------------------


def test_criterion_4_loss_identities(criterion):
    rng = np.random.default_rng(0)
    zero_vae = VariationalModel.create("autoencoder", hidden=64, latent=16)
    vae_err = max(abs(var.vae_loss(zero_vae, (rng.random(g.OBS_DIM) < p).astype(float), rng)[0]
                      - g.OBS_DIM * math.log(2)) for p in (0.0, 0.03, 0.5, 1.0))
    kl = var.kl_to_standard_normal(GaussianCode(np.zeros(16), np.zeros(16)))

    sp = VariationalModel.create("state_predictor", hidden=64, latent=16, rng=rng)
    ap = VariationalModel.create("action_predictor", hidden=64, latent=16)
    ap.encoder.weights[0][:g.OBS_DIM] = sp.encoder.weights[0]
    ap.encoder.weights[0][g.OBS_DIM:] = 0.0
    for dst, src in zip(ap.encoder.biases + ap.encoder.weights[1:] + ap.decoder.arrays(),
                        sp.encoder.biases + sp.encoder.weights[1:] + sp.decoder.arrays()):
        dst[:] = src
    rewards = []
    for k in range(20):
        s, s_next = (rng.random((2, g.OBS_DIM)) < 0.05).astype(float)
        pinned = lambda: np.random.default_rng(1000 + k)
        rewards.append(ag.intrinsic_reward_power(sp, ap, s, k % g.NUM_ACTIONS, s_next, pinned(), pinned()))
    ok = vae_err <= 1e-6 and kl == 0.0 and all(r == 0.0 for r in rewards)
    criterion(4, ok, f"|vae_loss - 1617 ln2| = {vae_err:.1e}; KL(0,0) = {kl}; "
                     f"identical-predictor power reward max |r| = {max(abs(r) for r in rewards)}")
    assert ok


# -- 5. encoding ----------------------------------------------------------------------------


def test_criterion_5_encoding(criterion):
    rng = np.random.default_rng(0)
    bad = 0
    for _ in range(10_000):
        obs = g.Observation(rng.integers(0, g.NUM_KINDS, (7, 7)).astype(np.int8),
                            rng.integers(0, g.NUM_STATES, (7, 7)).astype(np.int8))
        bits = g.encode_binary(obs)
        if bits.sum() != 49 or not (bits.sum(axis=(2, 3)) == 1).all():
            bad += 1
    criterion(5, bad == 0, f"{bad} of 10000 random observations violate the one-hot invariant")
    assert bad == 0


# -- 6. determinism ---------------------------------------------------------------------------


@pytest.mark.parametrize("agent_kind", ["a2c", "curious", "power"])
def test_criterion_6_determinism(criterion, tmp_path, agent_kind):
    config = RunConfig.default("multiroom-n3-s4", agent_kind, seed=11, frame_budget=50_000)
    logs = []
    for attempt in range(2):
        path = tmp_path / f"run{attempt}.csv"
        with EpisodeLogWriter(str(path)) as sink:
            run = ag.run_training(config.env, config.agent, config.hp, config.seed, config.frame_budget, sink=sink)
        assert run.status == "finished"
        logs.append(path.read_bytes())
    ok = logs[0] == logs[1]
    criterion(6, ok, f"{agent_kind}: 50k-frame logs {'identical' if ok else 'DIFFER'} ({len(logs[0])} bytes)")
    assert ok


# -- 7. desk-scale directional reproduction ------------------------------------------------------

C7_SEEDS = (0, 1, 2, 3, 4)
C7_FRAMES = 1_000_000
C7_DIR = Path(os.environ.get("INTRINSIC_EXPLORE_C7_DIR", Path(__file__).resolve().parents[1] / "runs" / "acceptance_c7"))


def _cached_or_run(config: RunConfig):
    path = Path(config.out_dir) / f"{config.stem}_summary.txt"
    if path.exists():
        s = read_summary(str(path))
        if (s.frame_budget, s.beta, s.hidden, s.latent, s.rollout, s.status) == (
                config.frame_budget, config.hp.beta, config.hp.model_hidden, config.hp.latent_dim,
                config.hp.rollout_length, "finished"):
            return s
    return run_single(config)


@pytest.mark.slow
def test_criterion_7_multiroom_ordering(criterion):
    started = time.time()
    tts = {}
    for agent_kind in ("a2c", "curious", "power"):
        tts[agent_kind] = [
            _cached_or_run(RunConfig.default("multiroom-n3-s4", agent_kind, seed=s, frame_budget=C7_FRAMES,
                                             out_dir=str(C7_DIR))).time_to_success
            for s in C7_SEEDS]
    med = {k: float(np.median(v)) for k, v in tts.items()}
    solved = {k: sum(t < TIME_TO_SUCCESS_CAP for t in v) for k, v in tts.items()}
    ordered = med["curious"] <= med["power"] < med["a2c"]
    enough = solved["curious"] >= 3 and solved["power"] >= 3
    ok = ordered and enough
    criterion(7, ok, f"seeds {list(C7_SEEDS)}; median TTS " + ", ".join(f"{k} {v:.3g}" for k, v in med.items())
              + "; solved/5 " + ", ".join(f"{k} {v}" for k, v in solved.items())
              + f"; per-seed {tts}; {time.time() - started:.0f}s")
    assert ordered, f"median ordering curious <= power < a2c violated: {med}"
    assert enough, f"fewer than 3 of 5 seeds solved: {solved}"


# -- 8. solvability ------------------------------------------------------------------------------------


@pytest.mark.parametrize("env", [k.value for k in g.EnvKind])
def test_criterion_8_solvable(criterion, env):
    unsolved = [seed for seed in range(1000) if g.solve_bfs(g.reset(env, seed)[0]) is None]
    criterion(8, not unsolved, f"{env}: {1000 - len(unsolved)}/1000 seeds certified solvable")
    assert not unsolved


# -- 9. VAE learning sanity ----------------------------------------------------------------------------


def test_criterion_9_vae_learns(criterion):
    rng = np.random.default_rng(0)
    batch = []
    state, obs = g.reset("multiroom-n3-s4", 0)
    while len(batch) < 32:
        batch.append(g.encode_flat(obs))
        if state.done:
            state, obs = g.reset("multiroom-n3-s4", len(batch))
        else:
            state, obs, _, _ = g.step(state, int(rng.integers(g.NUM_ACTIONS)))
    x = np.array(batch)
    model = VariationalModel.create("autoencoder", hidden=256, latent=128, rng=np.random.default_rng(1))
    eval_rng = np.random.default_rng(2)
    initial = float(var.evaluate_losses(model, x, x, eval_rng).mean())
    for _ in range(200):
        var.train_batch(model, x, x, rng)
    final = float(var.evaluate_losses(model, x, x, eval_rng).mean())
    ok = final < 0.8 * initial
    criterion(9, ok, f"mean loss {initial:.1f} -> {final:.1f} ({100 * (1 - final / initial):.1f}% lower)")
    assert ok
