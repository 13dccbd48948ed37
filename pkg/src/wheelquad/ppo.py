"""PPO: clipped surrogate, GAE, asymmetric critic, KL-adaptive learning rate.

The update path is fully analytic (no autodiff): the loss gradients w.r.t.
the Gaussian head and the value output are written out in closed form and
pushed through the MLP backward passes.
"""

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mlp import ActorCritic


@dataclass
class PpoConfig:
    lr: float = 1e-3  # initial; adapted towards the KL target
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    entropy_coef: float = 0.005
    value_coef: float = 1.0
    epochs: int = 5
    minibatches: int = 4
    rollout_steps: int = 24
    kl_target: float = 0.01
    lr_min: float = 1e-5
    lr_max: float = 1e-2

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0 or not 0.0 < self.lam <= 1.0:
            raise ValueError("gamma and lam must be in (0, 1]")
        if self.clip <= 0.0:
            raise ValueError("clip must be positive")
        if self.epochs < 1 or self.minibatches < 1:
            raise ValueError("epochs and minibatches must be >= 1")


def compute_gae(rewards, values, dones, bootstrap_value, gamma, lam):
    """Generalized advantage estimation over a (T, ...) rollout.

    dones mask the bootstrap across episode boundaries:
    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t,
    A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1}.
    Returns (advantages, returns) with returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    not_done = 1.0 - np.asarray(dones, dtype=np.float64)
    if rewards.shape != values.shape or rewards.shape != not_done.shape:
        raise ValueError("rewards, values and dones must have matching shapes")
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_value = np.asarray(bootstrap_value, dtype=np.float64)
    next_adv = 0.0
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * not_done[t] - values[t]
        next_adv = delta + gamma * lam * not_done[t] * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values


class Adam:
    """Flat-vector Adam with bias correction."""

    def __init__(self, size, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self, params, grad, lr):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _flatten_grads(ac: ActorCritic, actor_grads, critic_grads, dlog_std):
    parts = []
    for dw, db in actor_grads:
        parts.append(dw.ravel())
        parts.append(db.ravel())
    for dw, db in critic_grads:
        parts.append(dw.ravel())
        parts.append(db.ravel())
    parts.append(np.asarray(dlog_std).ravel())
    return np.concatenate(parts)


def gaussian_kl(mean1, log_std1, mean2, log_std2):
    """Mean diagonal-Gaussian KL(p1 || p2) over a batch of state means."""
    var1 = np.exp(2.0 * log_std1)
    var2 = np.exp(2.0 * log_std2)
    per_dim = (log_std2 - log_std1
               + (var1 + (mean1 - mean2) ** 2) / (2.0 * var2) - 0.5)
    return float(np.mean(np.sum(per_dim, axis=-1)))


def ppo_update(ac: ActorCritic, batch, cfg: PpoConfig, adam: Adam, lr, rng):
    """One PPO update phase: epochs x minibatches over a rollout batch.

    Returns (new_lr, stats).  On a non-finite loss the parameters are
    restored to their pre-update values and the stats carry aborted=True.
    The lr adapts after each epoch on the closed-form Gaussian KL between
    the pre- and post-epoch policies, which measures exactly the drift one
    epoch at the current lr produces.
    """
    obs_a = batch["obs_actor"]
    obs_c = batch["obs_critic"]
    actions = batch["actions"]
    old_logp = batch["log_prob"]
    adv = batch["advantages"]
    returns = batch["returns"]
    B = obs_a.shape[0]
    backup = ac.params_flat()

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
             "kl": 0.0, "clip_frac": 0.0, "aborted": False}
    n_passes = 0

    for _ in range(cfg.epochs):
        mean_ref, _ = ac.actor.forward(obs_a)
        log_std_ref = ac.log_std.copy()
        perm = rng.permutation(B)
        for mb in np.array_split(perm, cfg.minibatches):
            n = mb.size
            ev = ac.evaluate(obs_a[mb], obs_c[mb], actions[mb])
            logp = ev["log_prob"]
            ratio = np.exp(logp - old_logp[mb])
            a = adv[mb]
            unclipped = ratio * a
            clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * a
            policy_loss = -np.mean(np.minimum(unclipped, clipped))
            v_err = ev["values"] - returns[mb]
            value_loss = np.mean(v_err**2)
            entropy = ev["entropy"]
            total = policy_loss + cfg.value_coef * value_loss \
                - cfg.entropy_coef * entropy
            if not np.isfinite(total):
                ac.set_params_flat(backup)
                stats["aborted"] = True
                return lr, stats

            # gradient of the clipped surrogate flows only where the
            # unclipped branch is the active minimum
            active = unclipped <= clipped
            dlogp = -(active * ratio * a) / n
            std = np.exp(ac.log_std)
            z = (actions[mb] - ev["mean"]) / std
            dmean = dlogp[:, None] * z / std
            dlog_std = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0) \
                - cfg.entropy_coef
            dvalues = cfg.value_coef * 2.0 * v_err / n
            a_grads, _ = ac.actor.backward(ev["actor_cache"], dmean)
            c_grads, _ = ac.critic.backward(ev["critic_cache"], dvalues[:, None])
            grad = _flatten_grads(ac, a_grads, c_grads, dlog_std)
            ac.set_params_flat(adam.step(ac.params_flat(), grad, lr))

            stats["policy_loss"] += float(policy_loss)
            stats["value_loss"] += float(value_loss)
            stats["entropy"] += float(entropy)
            stats["clip_frac"] += float(np.mean(~active))
            n_passes += 1

        mean_new, _ = ac.actor.forward(obs_a)
        kl = gaussian_kl(mean_ref, log_std_ref, mean_new, ac.log_std)
        if kl > 2.0 * cfg.kl_target:
            lr = max(cfg.lr_min, lr * 0.5)
        elif kl < cfg.kl_target / 2.0:
            lr = min(cfg.lr_max, lr * 1.5)
        stats["kl"] = kl

    for k in ("policy_loss", "value_loss", "entropy", "clip_frac"):
        stats[k] /= max(n_passes, 1)
    return lr, stats


# -- training loop ---------------------------------------------------------


@dataclass
class TrainResult:
    policy: ActorCritic
    stats: list
    log_hash: str
    log_path: str | None = None


def collect_rollout(env, ac: ActorCritic, rng, steps, obs, gamma=0.99):
    """Run the policy for `steps` control steps across all envs.

    obs is the (actor, critic_extra) pair for the current env state; the
    return value carries the batch arrays plus the final observation pair.
    Envs that expose `last_truncated` and the pre-reset `final_actor_obs`
    get time-limit bootstrapping: gamma * V(final state) is folded into the
    reward at truncation so the cutoff is not mistaken for a real terminal.
    """
    actor_obs, critic_extra = obs
    n = env.n
    da = actor_obs.shape[1]
    dc = da + (critic_extra.shape[1] if critic_extra is not None else 0)
    out = {
        "obs_actor": np.empty((steps, n, da)),
        "obs_critic": np.empty((steps, n, dc)),
        "actions": np.empty((steps, n, ac.action_dim)),
        "log_prob": np.empty((steps, n)),
        "rewards": np.empty((steps, n)),
        "dones": np.empty((steps, n)),
        "values": np.empty((steps, n)),
    }
    diverged_frac = 0.0
    for t in range(steps):
        critic_obs = actor_obs if critic_extra is None \
            else np.concatenate([actor_obs, critic_extra], axis=1)
        action, logp, _ = ac.act(actor_obs, rng)
        values = ac.value(critic_obs)
        out["obs_actor"][t] = actor_obs
        out["obs_critic"][t] = critic_obs
        out["actions"][t] = action
        out["log_prob"][t] = logp
        out["values"][t] = values
        actor_obs, critic_extra, rewards, dones, _ = env.step(action)
        out["rewards"][t] = rewards
        out["dones"][t] = dones
        diverged = getattr(env, "last_diverged", None)
        if diverged is not None:
            diverged_frac = max(diverged_frac, float(np.mean(diverged)))
    critic_obs = actor_obs if critic_extra is None \
        else np.concatenate([actor_obs, critic_extra], axis=1)
    out["bootstrap_value"] = ac.value(critic_obs)
    return out, (actor_obs, critic_extra), diverged_frac


def train(
    env_factory,
    cfg: PpoConfig,
    seed: int,
    iterations: int,
    hidden=(128, 64, 32),
    out_dir=None,
    checkpoint_every: int = 0,
    log_name: str = "train_log.jsonl",
    progress=None,
) -> TrainResult:
    """Full PPO run: rollouts, GAE, updates, JSONL log, checkpoints.

    Everything is seeded from `seed`: network init, action sampling and
    minibatch shuffling each use their own named substream, so a rerun
    with the same arguments reproduces the log byte for byte.
    """
    env = env_factory()
    obs = env.reset()
    actor_obs, critic_extra = obs
    da = actor_obs.shape[1]
    dc = da + (critic_extra.shape[1] if critic_extra is not None else 0)
    ac = ActorCritic(actor_in=da, critic_in=dc, action_dim=env.action_dim,
                     hidden=hidden, seed=seed)
    ss = np.random.SeedSequence([int(seed), 0x9901])
    act_rng, shuffle_rng = [np.random.default_rng(s) for s in ss.spawn(2)]
    adam = Adam(ac.params_flat().size)
    lr = cfg.lr

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    log_file = (out_path / log_name).open("w") if out_path is not None else None

    stats_rows = []
    hasher = hashlib.sha256()
    try:
        for it in range(iterations):
            batch_raw, obs, diverged_frac = collect_rollout(
                env, ac, act_rng, cfg.rollout_steps, obs)
            if diverged_frac > 0.5:
                raise RuntimeError(
                    f"simulation diverged in {diverged_frac:.0%} of envs at "
                    f"iteration {it}; aborting training")
            adv, returns = compute_gae(
                batch_raw["rewards"], batch_raw["values"], batch_raw["dones"],
                batch_raw["bootstrap_value"], cfg.gamma, cfg.lam)
            T, n = batch_raw["rewards"].shape
            batch = {
                "obs_actor": batch_raw["obs_actor"].reshape(T * n, -1),
                "obs_critic": batch_raw["obs_critic"].reshape(T * n, -1),
                "actions": batch_raw["actions"].reshape(T * n, -1),
                "log_prob": batch_raw["log_prob"].ravel(),
                "advantages": adv.ravel(),
                "returns": returns.ravel(),
            }
            lr, up_stats = ppo_update(ac, batch, cfg, adam, lr, shuffle_rng)

            records = env.pop_episode_records()
            finished = [r for r in records if "return" in r]
            mean_return = (sum(r["return"] for r in finished) / len(finished)
                           if finished else None)
            successes = [r for r in records if r.get("status") == "success"]
            success_rate = (len(successes) / len(records)) if records else None
            row = {
                "iter": it,
                "mean_return": mean_return,
                "success_rate": success_rate,
                "mean_reward": float(np.mean(batch_raw["rewards"])),
                "kl": up_stats["kl"],
                "lr": lr,
                "policy_loss": up_stats["policy_loss"],
                "value_loss": up_stats["value_loss"],
                "entropy": up_stats["entropy"],
                "aborted": up_stats["aborted"],
            }
            stats_rows.append(row)
            line = json.dumps(row, sort_keys=True)
            hasher.update(line.encode())
            hasher.update(b"\n")
            if log_file is not None:
                log_file.write(line + "\n")
            if progress is not None:
                progress(row)
            if (checkpoint_every and out_path is not None
                    and (it + 1) % checkpoint_every == 0):
                ac.save(out_path / f"ckpt_{it + 1:06d}.wqck",
                        meta={"iteration": it + 1})
    finally:
        if log_file is not None:
            log_file.close()

    if out_path is not None:
        ac.save(out_path / "policy.wqck", meta={"iteration": iterations})
    return TrainResult(
        policy=ac,
        stats=stats_rows,
        log_hash=hasher.hexdigest(),
        log_path=str(out_path / log_name) if out_path is not None else None,
    )
