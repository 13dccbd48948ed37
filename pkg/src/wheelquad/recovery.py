"""Fall-recovery environment: pose-bank resets, noisy observations, shaped reward.

The environment is vectorized: one instance owns N robots in one batched
simulator, steps them together at the control rate (physics decimation 4),
and reports per-env rewards, terminations and episode outcomes.
"""

import enum
from dataclasses import dataclass, field as dc_field

import numpy as np

from .geometry import project_gravity, rotate_world_to_base, yaw_of
from .robot import LEG_ACTION_SCALE, LEG_SLICE, NUM_JOINTS, RobotModel, WHEEL_SLICE
from .sim import PoseBank, RobotState, WheeledQuadSim
from .terrain import (
    GRID_SAMPLES,
    HeightField,
    HeightFieldStack,
    sample_terrain_grid,
    sample_terrain_grid_batch,
)

EPSILON = 0.1  # clearance tolerance for success and the standing bonus
CONTROL_DECIMATION = 4
TIMEOUT_STEPS = 250  # 5 s at 50 Hz

ACTOR_OBS_DIM = 57
CRITIC_OBS_DIM = ACTOR_OBS_DIM + GRID_SAMPLES

# additive uniform observation noise, one half-range per block
NOISE_LIN_VEL = 0.1
NOISE_ANG_VEL = 0.2
NOISE_GRAVITY = 0.05
NOISE_Q = 0.01
NOISE_QD = 1.5
NOISE_TERRAIN = 0.1

REWARD_WEIGHTS = {
    "dof_torque": -1.0e-5,
    "dof_acc": -2.5e-7,
    "action_rate": -0.1,
    "wheel_vel": -0.01,
    "orientation": 0.5,
    "joint_track": 1.0,
    "standing": 50.0,
}


# -- clearance and success (Eq. 1 logic) -----------------------------------


def clearance(z, g_bz, h_star, feet_z_in_contact):
    """Contact-aware height error: zero when the base sits at nominal height.

    c = z + g_bz * h_star - mean(contact feet z).  The g_bz factor projects
    the nominal standing height onto world vertical, which keeps the metric
    valid on slopes.  Returns NaN when no feet are in contact.
    """
    if h_star <= 0.0:
        raise ValueError("h_star must be positive")
    feet = np.asarray(feet_z_in_contact, dtype=np.float64)
    if feet.size == 0:
        return float("nan")
    return float(z + g_bz * h_star - feet.mean())


def clearance_of_state(state: RobotState, h_star: float) -> float:
    g_bz = float(project_gravity(state.orientation)[2])
    return clearance(float(state.position[2]), g_bz, h_star,
                     state.feet_z[state.contacts])


def is_recovered(state: RobotState, h_star: float, eps: float = EPSILON) -> bool:
    """Success predicate: finite clearance within eps, exactly four feet in
    contact, and the base close to upright (g_bz <= -1 + eps/2)."""
    c = clearance_of_state(state, h_star)
    g_bz = float(project_gravity(state.orientation)[2])
    return bool(
        np.isfinite(c)
        and abs(c) < eps
        and int(state.contacts.sum()) == 4
        and g_bz <= -1.0 + eps / 2.0
    )


def _clearance_batch(z, g_bz, feet_z, contacts, h_star):
    n_contact = contacts.sum(axis=1)
    feet_sum = np.where(contacts, feet_z, 0.0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_feet = np.where(n_contact > 0, feet_sum / np.maximum(n_contact, 1), np.nan)
    return z + g_bz * h_star - mean_feet


# -- observations ----------------------------------------------------------


@dataclass
class RecoveryObservation:
    """Actor view (57) plus the critic-only terrain samples (187)."""

    actor: np.ndarray
    critic_extra: np.ndarray

    def __post_init__(self):
        self.actor = np.asarray(self.actor, dtype=np.float64)
        self.critic_extra = np.asarray(self.critic_extra, dtype=np.float64)
        if self.actor.shape != (ACTOR_OBS_DIM,):
            raise ValueError(f"actor observation must have {ACTOR_OBS_DIM} entries")
        if self.critic_extra.shape != (GRID_SAMPLES,):
            raise ValueError(f"critic extra must have {GRID_SAMPLES} entries")

    @property
    def critic(self) -> np.ndarray:
        return np.concatenate([self.actor, self.critic_extra])


def observe(
    state: RobotState,
    last_action: np.ndarray,
    field: HeightField,
    noise_rng: np.random.Generator | None = None,
) -> RecoveryObservation:
    """Build the observation for one robot.

    Base velocities are expressed in the base frame; the previous action is
    passed through without noise.  With noise_rng None the observation is
    exact and deterministic.
    """
    v_lin = rotate_world_to_base(state.orientation, state.linear_velocity)
    omega = state.angular_velocity.copy()  # already body frame
    g_b = project_gravity(state.orientation)
    terrain = sample_terrain_grid(field, state.position, state.orientation)
    if noise_rng is not None:
        v_lin = v_lin + noise_rng.uniform(-NOISE_LIN_VEL, NOISE_LIN_VEL, 3)
        omega = omega + noise_rng.uniform(-NOISE_ANG_VEL, NOISE_ANG_VEL, 3)
        g_b = g_b + noise_rng.uniform(-NOISE_GRAVITY, NOISE_GRAVITY, 3)
        q = state.q + noise_rng.uniform(-NOISE_Q, NOISE_Q, NUM_JOINTS)
        qd = state.qd + noise_rng.uniform(-NOISE_QD, NOISE_QD, NUM_JOINTS)
        terrain = terrain + noise_rng.uniform(-NOISE_TERRAIN, NOISE_TERRAIN, GRID_SAMPLES)
    else:
        q = state.q.copy()
        qd = state.qd.copy()
    actor = np.concatenate([v_lin, omega, g_b, q, qd,
                            np.asarray(last_action, dtype=np.float64)])
    return RecoveryObservation(actor, terrain)


# -- reward ----------------------------------------------------------------


@dataclass
class RewardBreakdown:
    """Unweighted term values, their weighted contributions, and the total."""

    terms: dict
    weighted: dict
    total: float

    @classmethod
    def from_terms(cls, terms: dict, weights: dict | None = None) -> "RewardBreakdown":
        weights = REWARD_WEIGHTS if weights is None else weights
        weighted = {k: weights[k] * v for k, v in terms.items()}
        return cls(terms, weighted, float(sum(weighted.values())))


def regularizer_arrays(tau, qdd, action, last_action):
    """The three effort regularizers shared with the locomotion reward."""
    return {
        "dof_torque": np.sum(tau**2, axis=-1),
        "dof_acc": np.sum(qdd**2, axis=-1),
        "action_rate": np.sum((action - last_action) ** 2, axis=-1),
    }


def _reward_arrays(tau, qdd, qd, q, g_bz, c, contacts, action, last_action, model):
    """Vectorized Table-of-terms evaluation; every input batched over envs."""
    n_contact = contacts.sum(axis=1)
    q_def_legs = model.q_def[LEG_SLICE]
    standing = (
        np.isfinite(c)
        & (np.abs(c) < EPSILON)
        & (n_contact == 4)
        & (g_bz < -1.0 + EPSILON)
    )
    return {
        **regularizer_arrays(tau, qdd, action, last_action),
        "wheel_vel": np.sum(np.abs(qd[..., WHEEL_SLICE]), axis=-1),
        "orientation": np.exp(-g_bz - 1.0),
        # the default-pose prior only covers the legs: wheel angles are
        # cyclic and carry no posture information
        "joint_track": np.where(
            g_bz < -0.75,
            np.exp(-np.sum(np.abs(q[..., LEG_SLICE] - q_def_legs), axis=-1)),
            0.0,
        ),
        "standing": standing.astype(np.float64),
    }


def reward(
    prev_state: RobotState,
    state: RobotState,
    action: np.ndarray,
    last_action: np.ndarray,
    h_star: float,
    model: RobotModel | None = None,
) -> RewardBreakdown:
    """Evaluate every reward term for one control step.

    The acceleration term uses the finite-difference qdd recorded by the
    simulator in `state`, so prev_state is kept only for interface symmetry
    with the stepping loop.
    """
    model = model or RobotModel()
    g_bz = float(project_gravity(state.orientation)[2])
    c = clearance_of_state(state, h_star)
    arrays = _reward_arrays(
        state.tau[None, :],
        state.qdd[None, :],
        state.qd[None, :],
        state.q[None, :],
        np.array([g_bz]),
        np.array([c]),
        state.contacts[None, :],
        np.asarray(action, dtype=np.float64)[None, :],
        np.asarray(last_action, dtype=np.float64)[None, :],
        model,
    )
    return RewardBreakdown.from_terms({k: float(v[0]) for k, v in arrays.items()})


# -- episodes --------------------------------------------------------------


class EpisodeStatus(enum.Enum):
    SUCCESS = "success"
    TIMEOUT = "timeout"


@dataclass
class EpisodeOutcome:
    status: EpisodeStatus
    steps: int
    recovery_time: float | None = None  # seconds, set on success


@dataclass
class TerrainChoice:
    """One entry of the terrain pool an episode can draw from."""

    kind: str
    field: HeightField


class RecoveryEnv:
    """Vectorized fall-recovery task.

    Every reset seats a stored pose-bank state on a freshly drawn terrain
    from the pool; every control step applies the scaled action, runs
    `CONTROL_DECIMATION` physics steps, and checks the Eq. 1 success
    predicate.  Per-env RNG streams keep resets independent of env count.
    """

    def __init__(
        self,
        model: RobotModel,
        pool,
        bank: PoseBank,
        num_envs: int,
        seed: int = 0,
        noise: bool = True,
        timeout_steps: int = TIMEOUT_STEPS,
        dt: float = 0.005,
    ):
        pool = list(pool)
        if not pool:
            raise ValueError("terrain pool must not be empty")
        if len(bank) < 1:
            raise ValueError("pose bank must not be empty")
        self.model = model
        self.pool = [p if isinstance(p, TerrainChoice) else TerrainChoice("flat", p)
                     for p in pool]
        self.bank = bank
        self.n = num_envs
        self.noise = noise
        self.timeout_steps = int(timeout_steps)
        self.control_dt = dt * CONTROL_DECIMATION

        first = self.pool[0].field
        self.sim = WheeledQuadSim(model, HeightFieldStack.uniform(first, num_envs),
                                  num_envs, dt=dt)
        self._reset_rngs = [
            np.random.default_rng(np.random.SeedSequence([seed, 1, i]))
            for i in range(num_envs)
        ]
        self._noise_rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
        self.episode_steps = np.zeros(num_envs, dtype=np.int64)
        self.episode_return = np.zeros(num_envs)
        self.last_action = np.zeros((num_envs, NUM_JOINTS))
        self.last_diverged = np.zeros(num_envs, dtype=bool)
        self.action_dim = NUM_JOINTS
        self.terrain_kind = [""] * num_envs
        self._episode_records = []

    # -- resets ------------------------------------------------------------

    def reset(self) -> tuple[np.ndarray, np.ndarray]:
        for i in range(self.n):
            self.reset_env(i)
        return self.observations()

    def reset_env(self, i: int) -> None:
        rng = self._reset_rngs[i]
        choice = self.pool[int(rng.integers(len(self.pool)))]
        self.sim.fields.replace(i, choice.field)
        st = self.bank.get_state(int(rng.integers(len(self.bank))))
        self.sim.set_state(i, st)
        # the stored pose settled on its own terrain; re-seat its deepest
        # contact sphere at the nominal equilibrium depth on the newly drawn
        # surface, which leaves a same-terrain pose untouched
        seat_depth = self.model.base_mass * self.model.gravity \
            / (4 * self.model.contact_stiffness)
        st.position[2] += self.sim.support_shift([i])[0] - seat_depth
        self.sim.set_state(i, st)
        self.terrain_kind[i] = choice.kind
        self.episode_steps[i] = 0
        self.episode_return[i] = 0.0
        self.last_action[i] = 0.0

    # -- observations ------------------------------------------------------

    def observations(self) -> tuple[np.ndarray, np.ndarray]:
        """(actor (N, 57), critic_extra (N, 187)) for the current states."""
        sim = self.sim
        v_lin = rotate_world_to_base(sim.orientation, sim.linear_velocity)
        omega = sim.angular_velocity.copy()
        g_b = project_gravity(sim.orientation)
        q = sim.q.copy()
        qd = sim.qd.copy()
        terrain = sample_terrain_grid_batch(
            sim.fields, np.arange(self.n), sim.position,
            np.atleast_1d(yaw_of(sim.orientation)),
        )
        if self.noise:
            r = self._noise_rng
            v_lin += r.uniform(-NOISE_LIN_VEL, NOISE_LIN_VEL, v_lin.shape)
            omega += r.uniform(-NOISE_ANG_VEL, NOISE_ANG_VEL, omega.shape)
            g_b += r.uniform(-NOISE_GRAVITY, NOISE_GRAVITY, g_b.shape)
            q += r.uniform(-NOISE_Q, NOISE_Q, q.shape)
            qd += r.uniform(-NOISE_QD, NOISE_QD, qd.shape)
            terrain += r.uniform(-NOISE_TERRAIN, NOISE_TERRAIN, terrain.shape)
        actor = np.concatenate([v_lin, omega, g_b, q, qd, self.last_action], axis=1)
        return actor, terrain

    # -- stepping ----------------------------------------------------------

    def step(self, actions: np.ndarray):
        """Advance one control step.

        Returns (actor_obs, critic_extra, reward_totals, dones, outcomes)
        where outcomes[i] is an EpisodeOutcome for envs that finished this
        step and None otherwise.  Finished envs are reset in place; the
        returned observation is the first of the next episode.
        """
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.n, NUM_JOINTS):
            raise ValueError(f"actions must have shape ({self.n}, {NUM_JOINTS})")
        # NaN actions pass through on purpose: they surface as simulator
        # divergence, which ends the episode instead of crashing the rollout
        actions = np.clip(actions, -10.0, 10.0)
        sim = self.sim
        m = self.model

        leg_targets = m.q_def[LEG_SLICE] + LEG_ACTION_SCALE * actions[:, :12]
        wheel_targets = actions[:, 12:]
        for _ in range(CONTROL_DECIMATION):
            sim.step(leg_targets, wheel_targets)
        self.episode_steps += 1

        g_bz = project_gravity(sim.orientation)[:, 2]
        c = _clearance_batch(sim.position[:, 2], g_bz, sim.feet_z, sim.contacts,
                             m.h_star)
        terms = _reward_arrays(sim.tau, sim.qdd, sim.qd, sim.q, g_bz, c,
                               sim.contacts, actions, self.last_action, m)
        totals = sum(REWARD_WEIGHTS[k] * v for k, v in terms.items())
        self.episode_return += totals
        self.last_breakdown = terms

        recovered = (
            np.isfinite(c)
            & (np.abs(c) < EPSILON)
            & (sim.contacts.sum(axis=1) == 4)
            & (g_bz <= -1.0 + EPSILON / 2.0)
        )
        timeout = self.episode_steps >= self.timeout_steps
        diverged = sim.diverged.copy()
        self.last_diverged = diverged
        dones = recovered | timeout | diverged

        outcomes = [None] * self.n
        for i in np.flatnonzero(dones):
            if recovered[i] and not diverged[i]:
                steps = int(self.episode_steps[i])
                out = EpisodeOutcome(EpisodeStatus.SUCCESS, steps,
                                     steps * self.control_dt)
            else:
                out = EpisodeOutcome(EpisodeStatus.TIMEOUT,
                                     int(self.episode_steps[i]))
            outcomes[i] = out
            self._episode_records.append({
                "env": int(i),
                "terrain": self.terrain_kind[i],
                "status": out.status.value,
                "steps": out.steps,
                "recovery_time": out.recovery_time,
                "return": float(self.episode_return[i]),
            })
            self.reset_env(i)

        self.last_action = np.where(dones[:, None], 0.0, actions)
        actor, critic_extra = self.observations()
        return actor, critic_extra, totals, dones, outcomes

    def pop_episode_records(self):
        """Drain the per-episode log records accumulated since the last call."""
        out = self._episode_records
        self._episode_records = []
        return out
