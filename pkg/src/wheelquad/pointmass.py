"""Point-mass velocity tracking: a tiny env with a known optimal return.

Dynamics: v' = 0.5 v + 0.5 a, reward exp(-||v' - c||^2) for a fixed
per-episode command c.  The action a = 2c - v reaches v' = c in a single
step from any start, so the optimal return is exactly one reward unit per
step: EPISODE_STEPS.  That closed form is what trainer sanity checks are
measured against.
"""

import numpy as np

EPISODE_STEPS = 50
ACTION_LIMIT = 3.0
# wide kernel: keeps a useful gradient at spawn-scale errors
TRACK_SIGMA_SQ = 1.0

OPTIMAL_RETURN = float(EPISODE_STEPS)


def optimal_action(v, c):
    """Deadbeat control: cancels the carried velocity in one step."""
    return np.clip(2.0 * c - v, -ACTION_LIMIT, ACTION_LIMIT)


class PointMassEnv:
    """Vectorized 2-D velocity tracking with fixed-length episodes.

    Observation is [v, c] (4-dim) for both actor and critic; there is no
    privileged extra, so reset/step return None in the critic slot.
    """

    def __init__(self, num_envs=64, seed=0):
        if num_envs < 1:
            raise ValueError("num_envs must be >= 1")
        self.n = num_envs
        self.action_dim = 2
        self._rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9D]))
        self.v = np.zeros((num_envs, 2))
        self.c = np.zeros((num_envs, 2))
        self.steps = np.zeros(num_envs, dtype=np.int64)
        self.returns = np.zeros(num_envs)
        self._records = []

    def _spawn(self, idx):
        k = len(idx)
        self.v[idx] = self._rng.uniform(-1.0, 1.0, size=(k, 2))
        self.c[idx] = self._rng.uniform(-1.0, 1.0, size=(k, 2))
        self.steps[idx] = 0
        self.returns[idx] = 0.0

    def reset(self):
        self._spawn(np.arange(self.n))
        self._records = []
        return self._obs(), None

    def _obs(self):
        return np.concatenate([self.v, self.c], axis=1)

    def step(self, actions):
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.n, 2):
            raise ValueError(f"actions must have shape ({self.n}, 2)")
        a = np.clip(actions, -ACTION_LIMIT, ACTION_LIMIT)
        self.v = 0.5 * self.v + 0.5 * a
        err = self.v - self.c
        rewards = np.exp(-np.sum(err**2, axis=1) / TRACK_SIGMA_SQ)
        self.steps += 1
        self.returns += rewards
        dones = self.steps >= EPISODE_STEPS
        for i in np.flatnonzero(dones):
            self._records.append({
                "env": int(i),
                "status": "timeout",
                "steps": int(self.steps[i]),
                "return": float(self.returns[i]),
            })
        if dones.any():
            self._spawn(np.flatnonzero(dones))
        return self._obs(), None, rewards, dones, []

    def pop_episode_records(self):
        out = self._records
        self._records = []
        return out
