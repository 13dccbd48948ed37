"""Velocity-command tracking with a terrain difficulty curriculum.

Shares the simulator, observation layout and effort regularizers with the
recovery task; adds exponential tracking terms, a base-collision penalty
and per-env difficulty that ratchets between flat and rough ground.
"""

import enum
from dataclasses import dataclass, replace

import numpy as np

from .geometry import project_gravity, rotate_world_to_base, yaw_of
from .recovery import (
    NOISE_ANG_VEL,
    NOISE_GRAVITY,
    NOISE_LIN_VEL,
    NOISE_Q,
    NOISE_QD,
    NOISE_TERRAIN,
    RewardBreakdown,
    regularizer_arrays,
)
from .robot import LEG_ACTION_SCALE, LEG_SLICE, NUM_JOINTS, RobotModel
from .sim import RobotState, WheeledQuadSim
from .terrain import (
    GRID_SAMPLES,
    HeightFieldStack,
    TerrainKind,
    TerrainSpec,
    generate,
    sample_terrain_grid_batch,
)

MAX_SPEED = 2.0  # training envelope, m/s
MAX_YAW_RATE = 1.5  # rad/s
TRACK_SIGMA_SQ = 0.25

COMMAND_DIM = 3
ACTOR_OBS_DIM = 57 + COMMAND_DIM
CRITIC_OBS_DIM = ACTOR_OBS_DIM + GRID_SAMPLES

CONTROL_DECIMATION = 4
TIMEOUT_STEPS = 400  # 8 s at 50 Hz
CURRICULUM_STEP = 0.1
TRACK_TOLERANCE = 0.5  # mean |v - cmd| below this counts as tracked, m/s

LOCO_REWARD_WEIGHTS = {
    "track_lin": 1.0,
    "track_ang": 0.5,
    "dof_torque": -1.0e-5,
    "dof_acc": -2.5e-7,
    "action_rate": -0.1,
    "base_collision": -1.0,
}


@dataclass(frozen=True)
class VelocityCommand:
    v_x: float
    v_y: float
    omega_z: float

    def __post_init__(self):
        if not np.isfinite([self.v_x, self.v_y, self.omega_z]).all():
            raise ValueError("command components must be finite")
        if float(np.hypot(self.v_x, self.v_y)) > MAX_SPEED + 1e-9:
            raise ValueError(f"planar speed exceeds the {MAX_SPEED} m/s envelope")

    def as_array(self) -> np.ndarray:
        return np.array([self.v_x, self.v_y, self.omega_z])


def sample_command(rng: np.random.Generator, max_speed: float = MAX_SPEED) -> VelocityCommand:
    """Uniform square sample with the planar norm clamped to max_speed."""
    v = rng.uniform(-max_speed, max_speed, 2)
    speed = float(np.hypot(v[0], v[1]))
    if speed > max_speed:
        v *= max_speed / speed
    omega = float(rng.uniform(-MAX_YAW_RATE, MAX_YAW_RATE))
    return VelocityCommand(float(v[0]), float(v[1]), omega)


def locomotion_reward(
    state: RobotState,
    command: VelocityCommand,
    action: np.ndarray,
    last_action: np.ndarray,
    base_contact: bool = False,
    model: RobotModel | None = None,
) -> RewardBreakdown:
    """Tracking terms plus the recovery-env effort regularizers."""
    v_b = rotate_world_to_base(state.orientation, state.linear_velocity)
    lin_err = (v_b[0] - command.v_x) ** 2 + (v_b[1] - command.v_y) ** 2
    ang_err = (state.angular_velocity[2] - command.omega_z) ** 2
    action = np.asarray(action, dtype=np.float64)
    last_action = np.asarray(last_action, dtype=np.float64)
    regs = regularizer_arrays(state.tau, state.qdd, action, last_action)
    terms = {
        "track_lin": float(np.exp(-lin_err / TRACK_SIGMA_SQ)),
        "track_ang": float(np.exp(-ang_err / TRACK_SIGMA_SQ)),
        **{k: float(v) for k, v in regs.items()},
        "base_collision": 1.0 if base_contact else 0.0,
    }
    return RewardBreakdown.from_terms(terms, LOCO_REWARD_WEIGHTS)


# -- curriculum ------------------------------------------------------------


@dataclass(frozen=True)
class CurriculumState:
    difficulty: float = 0.0
    promotions: int = 0
    demotions: int = 0

    def __post_init__(self):
        if not 0.0 <= self.difficulty <= 1.0:
            raise ValueError("difficulty must stay in [0, 1]")


@dataclass(frozen=True)
class EpisodeResult:
    tracked: bool
    body_contact: bool

    @property
    def success(self) -> bool:
        return self.tracked and not self.body_contact


def curriculum_update(cur: CurriculumState, result: EpisodeResult) -> CurriculumState:
    if result.success:
        return replace(cur,
                       difficulty=min(1.0, cur.difficulty + CURRICULUM_STEP),
                       promotions=cur.promotions + 1)
    return replace(cur,
                   difficulty=max(0.0, cur.difficulty - CURRICULUM_STEP),
                   demotions=cur.demotions + 1)


# -- environment -----------------------------------------------------------


DEFAULT_KINDS = (TerrainKind.SLOPE, TerrainKind.STAIRS, TerrainKind.DISCRETE)


def standing_state(model: RobotModel, z_ground: float, yaw: float = 0.0) -> RobotState:
    """Default-pose state with the base at nominal height over z_ground."""
    half = yaw / 2.0
    quat = np.array([np.cos(half), 0.0, 0.0, np.sin(half)])
    return RobotState(
        position=np.array([0.0, 0.0, z_ground + model.h_star]),
        orientation=quat,
        q=model.q_def.copy(),
    )


class LocomotionEnv:
    """Vectorized velocity-tracking task with per-env terrain difficulty.

    Every episode spawns the robot standing at the arena center on terrain
    generated at the env's current difficulty, with a freshly sampled
    command.  Episodes fail on base contact or tipping; surviving to the
    timeout while tracking within tolerance promotes the difficulty.
    """

    def __init__(
        self,
        model: RobotModel,
        num_envs: int,
        seed: int = 0,
        noise: bool = True,
        timeout_steps: int = TIMEOUT_STEPS,
        kinds=DEFAULT_KINDS,
        dt: float = 0.005,
    ):
        if num_envs < 1:
            raise ValueError("num_envs must be >= 1")
        self.model = model
        self.n = num_envs
        self.noise = noise
        self.timeout_steps = timeout_steps
        self.kinds = tuple(kinds)
        self.control_dt = dt * CONTROL_DECIMATION
        self.action_dim = NUM_JOINTS
        flat = generate(TerrainSpec(TerrainKind.FLAT, 0.0))
        self.sim = WheeledQuadSim(model, HeightFieldStack.uniform(flat, num_envs),
                                  num_envs, dt=dt)
        self._reset_rngs = [
            np.random.default_rng(np.random.SeedSequence([seed, 1, i]))
            for i in range(num_envs)
        ]
        self._noise_rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
        self._field_cache = {}
        self.curriculum = [CurriculumState() for _ in range(num_envs)]
        self.commands = np.zeros((num_envs, COMMAND_DIM))
        self.episode_steps = np.zeros(num_envs, dtype=np.int64)
        self.episode_return = np.zeros(num_envs)
        self.track_err_sum = np.zeros(num_envs)
        self.contact_events = np.zeros(num_envs, dtype=np.int64)
        self.last_action = np.zeros((num_envs, NUM_JOINTS))
        self.last_diverged = np.zeros(num_envs, dtype=bool)
        self.terrain_kind = [""] * num_envs
        self._episode_records = []

    def _field_for(self, kind: TerrainKind, difficulty: float, variant: int):
        key = (kind, round(difficulty, 3), variant)
        if key not in self._field_cache:
            self._field_cache[key] = generate(
                TerrainSpec(kind, difficulty, seed=variant))
        return self._field_cache[key]

    def reset(self):
        for i in range(self.n):
            self.reset_env(i)
        return self.observations()

    def reset_env(self, i: int) -> None:
        rng = self._reset_rngs[i]
        kind = self.kinds[i % len(self.kinds)]
        difficulty = self.curriculum[i].difficulty
        field = self._field_for(kind, difficulty, int(rng.integers(8)))
        self.sim.fields.replace(i, field)
        yaw = float(rng.uniform(-np.pi, np.pi))
        st = standing_state(self.model, float(field.height_at(0.0, 0.0)), yaw)
        self.sim.set_state(i, st)
        # seat the deepest foot at the equilibrium penetration depth
        seat_depth = self.model.base_mass * self.model.gravity \
            / (4 * self.model.contact_stiffness)
        st.position[2] += self.sim.support_shift([i])[0] - seat_depth
        self.sim.set_state(i, st)
        cmd = sample_command(rng)
        self.commands[i] = cmd.as_array()
        self.terrain_kind[i] = kind.value
        self.episode_steps[i] = 0
        self.episode_return[i] = 0.0
        self.track_err_sum[i] = 0.0
        self.contact_events[i] = 0
        self.last_action[i] = 0.0

    def observations(self):
        """(actor (N, 60), critic_extra (N, 187)); command appended unnoised."""
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
        actor = np.concatenate(
            [v_lin, omega, g_b, q, qd, self.last_action, self.commands], axis=1)
        return actor, terrain

    def step(self, actions):
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.n, NUM_JOINTS):
            raise ValueError(f"actions must have shape ({self.n}, {NUM_JOINTS})")
        actions = np.clip(actions, -10.0, 10.0)
        sim = self.sim
        m = self.model

        leg_targets = m.q_def[LEG_SLICE] + LEG_ACTION_SCALE * actions[:, :12]
        wheel_targets = actions[:, 12:]
        for _ in range(CONTROL_DECIMATION):
            sim.step(leg_targets, wheel_targets)
        self.episode_steps += 1

        v_b = rotate_world_to_base(sim.orientation, sim.linear_velocity)
        lin_err_sq = np.sum((v_b[:, :2] - self.commands[:, :2]) ** 2, axis=1)
        ang_err_sq = (sim.angular_velocity[:, 2] - self.commands[:, 2]) ** 2
        regs = regularizer_arrays(sim.tau, sim.qdd, actions, self.last_action)
        base_contact = sim.base_contact.copy()
        terms = {
            "track_lin": np.exp(-lin_err_sq / TRACK_SIGMA_SQ),
            "track_ang": np.exp(-ang_err_sq / TRACK_SIGMA_SQ),
            **regs,
            "base_collision": base_contact.astype(np.float64),
        }
        totals = sum(LOCO_REWARD_WEIGHTS[k] * v for k, v in terms.items())
        self.episode_return += totals
        self.track_err_sum += np.sqrt(lin_err_sq)
        self.contact_events += base_contact
        self.last_breakdown = terms

        g_bz = project_gravity(sim.orientation)[:, 2]
        tipped = g_bz > -0.5
        diverged = sim.diverged.copy()
        self.last_diverged = diverged
        failed = base_contact | tipped | diverged
        timeout = self.episode_steps >= self.timeout_steps
        dones = failed | timeout

        outcomes = [None] * self.n
        for i in np.flatnonzero(dones):
            tracked = (self.track_err_sum[i] / self.episode_steps[i]) \
                < TRACK_TOLERANCE
            result = EpisodeResult(
                tracked=bool(tracked and not failed[i]),
                body_contact=bool(self.contact_events[i] > 0),
            )
            self.curriculum[i] = curriculum_update(self.curriculum[i], result)
            outcomes[i] = result
            self._episode_records.append({
                "env": int(i),
                "terrain": self.terrain_kind[i],
                "difficulty": float(round(self.curriculum[i].difficulty, 3)),
                "status": "success" if result.success else "failure",
                "steps": int(self.episode_steps[i]),
                "return": float(self.episode_return[i]),
            })
            self.reset_env(i)

        self.last_action = np.where(dones[:, None], 0.0, actions)
        actor, critic_extra = self.observations()
        return actor, critic_extra, totals, dones, outcomes

    def pop_episode_records(self):
        out = self._episode_records
        self._episode_records = []
        return out


# -- traverse trials -------------------------------------------------------


class Direction(enum.Enum):
    ASCENT = "ascent"
    DESCENT = "descent"


@dataclass(frozen=True)
class TraverseResult:
    success: bool
    time: float
    base_contacts: int

    def __bool__(self) -> bool:
        return self.success


def terrain_traverse_trial(
    policy,
    spec: TerrainSpec,
    direction: Direction,
    model: RobotModel | None = None,
    timeout: float = 10.0,
    speed: float = MAX_SPEED,
    dt: float = 0.005,
) -> TraverseResult:
    """Drive straight across the arena; pass iff it exits with no base hits.

    The robot spawns standing at the center facing +x for ascents and -x
    for descents (generated slopes and stairs rise along +x), commanded
    `speed` m/s forward.  `policy` maps a (1, 60) actor observation to a
    (1, 16) action.
    """
    model = model or RobotModel()
    field = generate(spec)
    yaw = 0.0 if direction is Direction.ASCENT else np.pi
    sim = WheeledQuadSim(model, HeightFieldStack.uniform(field, 1), 1, dt=dt)
    st = standing_state(model, float(field.height_at(0.0, 0.0)), yaw)
    sim.set_state(0, st)
    seat_depth = model.base_mass * model.gravity / (4 * model.contact_stiffness)
    st.position[2] += sim.support_shift([0])[0] - seat_depth
    sim.set_state(0, st)

    command = np.array([speed, 0.0, 0.0])
    x_min, y_min, x_max, y_max = field.extent
    last_action = np.zeros((1, NUM_JOINTS))
    steps = int(timeout / (dt * CONTROL_DECIMATION))
    contacts = 0
    for k in range(steps):
        v_lin = rotate_world_to_base(sim.orientation, sim.linear_velocity)
        g_b = project_gravity(sim.orientation)
        actor = np.concatenate(
            [v_lin, sim.angular_velocity, g_b, sim.q, sim.qd, last_action,
             command[None, :]], axis=1)
        action = np.clip(np.asarray(policy(actor), dtype=np.float64), -10.0, 10.0)
        if action.shape != (1, NUM_JOINTS):
            raise ValueError("policy must return a (1, 16) action")
        leg_targets = model.q_def[LEG_SLICE] + LEG_ACTION_SCALE * action[:, :12]
        for _ in range(CONTROL_DECIMATION):
            sim.step(leg_targets, action[:, 12:])
        contacts += int(sim.base_contact[0])
        last_action = action
        x, y = float(sim.position[0, 0]), float(sim.position[0, 1])
        if sim.diverged[0]:
            return TraverseResult(False, (k + 1) * dt * CONTROL_DECIMATION, contacts)
        if not (x_min <= x <= x_max and y_min <= y <= y_max):
            t = (k + 1) * dt * CONTROL_DECIMATION
            return TraverseResult(contacts == 0, t, contacts)
    return TraverseResult(False, timeout, contacts)
