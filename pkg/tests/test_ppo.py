"""Trainer tests: GAE against brute force, update invariants, toy learning."""

import json

import numpy as np
import pytest

from wheelquad.mlp import ActorCritic
from wheelquad.pointmass import EPISODE_STEPS, OPTIMAL_RETURN, PointMassEnv
from wheelquad.ppo import (
    Adam,
    PpoConfig,
    TrainResult,
    collect_rollout,
    compute_gae,
    ppo_update,
    train,
)


def brute_force_gae(rewards, values, dones, bootstrap, gamma, lam):
    """O(T^2) expansion: A_t = sum_l (gamma*lam)^l delta_{t+l} up to a done."""
    T = len(rewards)
    ext_values = np.append(values, bootstrap)
    adv = np.zeros(T)
    for t in range(T):
        acc = 0.0
        coef = 1.0
        for k in range(t, T):
            delta = rewards[k] + gamma * ext_values[k + 1] * (1 - dones[k]) \
                - ext_values[k]
            acc += coef * delta
            if dones[k]:
                break
            coef *= gamma * lam
        adv[t] = acc
    return adv


def random_trajectory(rng, T=50):
    rewards = rng.normal(size=T)
    values = rng.normal(size=T)
    dones = (rng.random(T) < 0.15).astype(float)
    bootstrap = rng.normal()
    return rewards, values, dones, bootstrap


def test_gae_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        rewards, values, dones, bootstrap = random_trajectory(rng)
        adv, ret = compute_gae(rewards, values, dones, bootstrap, 0.99, 0.95)
        ref = brute_force_gae(rewards, values, dones, bootstrap, 0.99, 0.95)
        np.testing.assert_allclose(adv, ref, rtol=0, atol=1e-10)
        np.testing.assert_allclose(ret, ref + values, rtol=0, atol=1e-10)


def test_gae_lambda_zero_is_one_step_td():
    rng = np.random.default_rng(1)
    rewards, values, dones, bootstrap = random_trajectory(rng)
    adv, _ = compute_gae(rewards, values, dones, bootstrap, 0.99, 0.0)
    ext = np.append(values, bootstrap)
    delta = rewards + 0.99 * ext[1:] * (1 - dones) - ext[:-1]
    np.testing.assert_array_equal(adv, delta)


def test_gae_lambda_one_is_discounted_return_minus_value():
    rng = np.random.default_rng(2)
    rewards, values, dones, bootstrap = random_trajectory(rng)
    adv, _ = compute_gae(rewards, values, dones, bootstrap, 0.99, 1.0)
    T = len(rewards)
    returns = np.zeros(T)
    nxt = bootstrap
    for t in range(T - 1, -1, -1):
        returns[t] = rewards[t] + 0.99 * nxt * (1 - dones[t])
        nxt = returns[t]
    np.testing.assert_allclose(adv, returns - values, rtol=0, atol=1e-10)


def test_gae_batched_matches_per_env():
    rng = np.random.default_rng(3)
    T, n = 30, 5
    rewards = rng.normal(size=(T, n))
    values = rng.normal(size=(T, n))
    dones = (rng.random((T, n)) < 0.2).astype(float)
    bootstrap = rng.normal(size=n)
    adv, _ = compute_gae(rewards, values, dones, bootstrap, 0.98, 0.9)
    for i in range(n):
        ref, _ = compute_gae(rewards[:, i], values[:, i], dones[:, i],
                             bootstrap[i], 0.98, 0.9)
        np.testing.assert_array_equal(adv[:, i], ref)


def test_gae_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        compute_gae(np.zeros(5), np.zeros(6), np.zeros(5), 0.0, 0.99, 0.95)


def test_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(gamma=0.0)
    with pytest.raises(ValueError):
        PpoConfig(clip=-0.1)
    with pytest.raises(ValueError):
        PpoConfig(minibatches=0)


def test_adam_single_step_hand_formula():
    adam = Adam(3)
    params = np.array([1.0, -2.0, 0.5])
    grad = np.array([0.1, -0.3, 0.0])
    new = adam.step(params, grad, lr=0.01)
    # t=1: m_hat = grad, v_hat = grad^2, step = lr * g / (|g| + eps)
    expect = params - 0.01 * grad / (np.abs(grad) + 1e-8)
    np.testing.assert_allclose(new, expect, atol=1e-12)


def make_rollout_batch(seed=0, steps=8, n=6):
    env = PointMassEnv(num_envs=n, seed=seed)
    ac = ActorCritic(actor_in=4, critic_in=4, action_dim=2,
                     hidden=(16,), seed=seed)
    rng = np.random.default_rng(seed)
    raw, _, _ = collect_rollout(env, ac, rng, steps, env.reset())
    adv, ret = compute_gae(raw["rewards"], raw["values"], raw["dones"],
                           raw["bootstrap_value"], 0.99, 0.95)
    T = steps
    batch = {
        "obs_actor": raw["obs_actor"].reshape(T * n, -1),
        "obs_critic": raw["obs_critic"].reshape(T * n, -1),
        "actions": raw["actions"].reshape(T * n, -1),
        "log_prob": raw["log_prob"].ravel(),
        "advantages": adv.ravel(),
        "returns": ret.ravel(),
    }
    return ac, batch


def test_ratio_is_one_before_any_update():
    ac, batch = make_rollout_batch()
    ev = ac.evaluate(batch["obs_actor"], batch["obs_critic"], batch["actions"])
    ratio = np.exp(ev["log_prob"] - batch["log_prob"])
    assert np.max(np.abs(ratio - 1.0)) < 1e-6


def test_update_changes_parameters():
    ac, batch = make_rollout_batch()
    before = ac.params_flat()
    adam = Adam(before.size)
    lr, stats = ppo_update(ac, batch, PpoConfig(), adam,
                           1e-3, np.random.default_rng(0))
    assert not stats["aborted"]
    assert not np.array_equal(before, ac.params_flat())
    assert np.isfinite(stats["kl"])


def test_nonfinite_loss_restores_parameters():
    ac, batch = make_rollout_batch()
    batch["advantages"] = batch["advantages"].copy()
    batch["advantages"][0] = np.nan
    before = ac.params_flat()
    adam = Adam(before.size)
    lr, stats = ppo_update(ac, batch, PpoConfig(), adam,
                           1e-3, np.random.default_rng(0))
    assert stats["aborted"]
    np.testing.assert_array_equal(ac.params_flat(), before)
    assert lr == 1e-3


def test_lr_grows_when_kl_small():
    # zero advantages kill the policy gradient, so KL stays near zero and
    # the adaptive rule raises the lr each epoch
    ac, batch = make_rollout_batch()
    batch["advantages"] = np.zeros_like(batch["advantages"])
    adam = Adam(ac.params_flat().size)
    cfg = PpoConfig()
    lr, stats = ppo_update(ac, batch, cfg, adam, cfg.lr, np.random.default_rng(0))
    assert lr > cfg.lr
    assert lr <= cfg.lr_max


def test_lr_stays_within_bounds():
    ac, batch = make_rollout_batch()
    batch["advantages"] = np.zeros_like(batch["advantages"])
    adam = Adam(ac.params_flat().size)
    cfg = PpoConfig()
    lr = cfg.lr_max
    for _ in range(4):
        lr, _ = ppo_update(ac, batch, cfg, adam, lr, np.random.default_rng(0))
    assert lr <= cfg.lr_max


class DivergingEnv(PointMassEnv):
    """Stub that reports most envs as diverged on every step."""

    def step(self, actions):
        out = super().step(actions)
        self.last_diverged = np.ones(self.n, dtype=bool)
        return out


def test_training_aborts_on_mass_divergence():
    with pytest.raises(RuntimeError, match="diverged"):
        train(lambda: DivergingEnv(num_envs=8, seed=0), PpoConfig(),
              seed=0, iterations=3, hidden=(8,))


def test_toy_training_improves_return():
    res = train(lambda: PointMassEnv(num_envs=64, seed=0), PpoConfig(),
                seed=0, iterations=60, hidden=(32, 32))
    rows = [r for r in res.stats if r["mean_return"] is not None]
    assert rows[-1]["mean_return"] > 2.0 * rows[0]["mean_return"]
    assert rows[-1]["mean_return"] > 0.5 * OPTIMAL_RETURN


def test_training_log_hash_reproducible():
    runs = [
        train(lambda: PointMassEnv(num_envs=32, seed=5), PpoConfig(),
              seed=5, iterations=12, hidden=(16,))
        for _ in range(2)
    ]
    assert runs[0].log_hash == runs[1].log_hash
    other = train(lambda: PointMassEnv(num_envs=32, seed=6), PpoConfig(),
                  seed=6, iterations=12, hidden=(16,))
    assert other.log_hash != runs[0].log_hash


def test_training_writes_log_and_checkpoints(tmp_path):
    res = train(lambda: PointMassEnv(num_envs=16, seed=2), PpoConfig(),
                seed=2, iterations=6, hidden=(16,), out_dir=tmp_path,
                checkpoint_every=3)
    assert (tmp_path / "policy.wqck").exists()
    assert (tmp_path / "ckpt_000003.wqck").exists()
    assert (tmp_path / "ckpt_000006.wqck").exists()
    lines = (tmp_path / "train_log.jsonl").read_text().strip().split("\n")
    assert len(lines) == 6
    rows = [json.loads(x) for x in lines]
    assert rows[0]["iter"] == 0 and rows[-1]["iter"] == 5
    for key in ("kl", "lr", "policy_loss", "value_loss", "entropy"):
        assert key in rows[0]
    # the reported hash covers exactly the written log bytes
    import hashlib

    digest = hashlib.sha256((tmp_path / "train_log.jsonl").read_bytes())
    assert res.log_hash == digest.hexdigest()
    loaded = ActorCritic.load(tmp_path / "policy.wqck")
    np.testing.assert_array_equal(loaded.params_flat(), res.policy.params_flat())


def test_pointmass_optimal_policy_hits_bound():
    from wheelquad.pointmass import optimal_action

    env = PointMassEnv(num_envs=128, seed=9)
    obs, _ = env.reset()
    total = np.zeros(env.n)
    for _ in range(EPISODE_STEPS):
        v, c = obs[:, :2], obs[:, 2:]
        obs, _, r, _, _ = env.step(optimal_action(v, c))
        total += r
    np.testing.assert_allclose(total, OPTIMAL_RETURN, atol=1e-9)


def test_pointmass_validation():
    with pytest.raises(ValueError):
        PointMassEnv(num_envs=0)
    env = PointMassEnv(num_envs=4, seed=0)
    env.reset()
    with pytest.raises(ValueError):
        env.step(np.zeros((3, 2)))
