"""Reduced-order physics for the wheeled quadruped on a height field.

One rigid base carries four massless legs with point-contact wheels; leg
inertia is folded into the base and each joint keeps a reflected rotor
inertia.  Contacts are penalty springs (vertical penetration against the
height field) with viscous, friction-capped tangential forces; wheels add
a rolling term from their spin.  Integration is semi-implicit Euler.

The simulator is vectorized over environments: every state field carries a
leading env dimension, and stepping N robots costs a handful of array ops.
Single-robot helpers wrap the N=1 case for the value-type API.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from .geometry import (
    IDENTITY_QUAT,
    quat_integrate,
    quat_normalize,
    quat_rotate,
    quat_to_matrix,
    random_quaternion,
)
from .robot import LEG_ACTION_SCALE, LEG_SLICE, NUM_JOINTS, RobotModel, WHEEL_SLICE, leg_forward_kinematics
from .terrain import HeightField, HeightFieldStack

STATE_DIM = 85  # flattened RobotState layout, see RobotState.to_vector


class SimulationDivergedError(RuntimeError):
    """Raised when integration produced non-finite state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass
class ActionCommand:
    """Joint-space command: leg position targets plus wheel velocity targets."""

    leg_targets: np.ndarray  # (12,) rad
    wheel_velocity_targets: np.ndarray  # (4,) rad/s


def apply_action(raw_action: np.ndarray, model: RobotModel) -> ActionCommand:
    """Scale a raw 16-dim policy action into joint commands.

    Leg targets are the default pose plus 0.5 times the action; wheel
    velocity targets pass through at unit scale.
    """
    raw = np.asarray(raw_action, dtype=np.float64)
    if raw.shape[-1] != NUM_JOINTS:
        raise ValueError(f"action must have {NUM_JOINTS} entries")
    if not np.all(np.isfinite(raw)):
        raise ValueError("action must be finite")
    leg_targets = model.q_def[LEG_SLICE] + LEG_ACTION_SCALE * raw[..., :12]
    return ActionCommand(leg_targets, raw[..., 12:16].copy())


@dataclass
class RobotState:
    """Single-robot snapshot; the vectorized sim stores the batched version."""

    position: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = dc_field(default_factory=lambda: IDENTITY_QUAT.copy())
    linear_velocity: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))  # body frame
    q: np.ndarray = dc_field(default_factory=lambda: np.zeros(NUM_JOINTS))
    qd: np.ndarray = dc_field(default_factory=lambda: np.zeros(NUM_JOINTS))
    qdd: np.ndarray = dc_field(default_factory=lambda: np.zeros(NUM_JOINTS))
    tau: np.ndarray = dc_field(default_factory=lambda: np.zeros(NUM_JOINTS))
    contacts: np.ndarray = dc_field(default_factory=lambda: np.zeros(4, dtype=bool))
    feet_z: np.ndarray = dc_field(default_factory=lambda: np.zeros(4))

    def to_vector(self) -> np.ndarray:
        """Flatten to the 85-float bank layout.

        Layout: position[0:3], orientation[3:7], linear_velocity[7:10],
        angular_velocity[10:13], q[13:29], qd[29:45], qdd[45:61],
        tau[61:77], contacts[77:81], feet_z[81:85].
        """
        return np.concatenate(
            [
                self.position,
                self.orientation,
                self.linear_velocity,
                self.angular_velocity,
                self.q,
                self.qd,
                self.qdd,
                self.tau,
                self.contacts.astype(np.float64),
                self.feet_z,
            ]
        )

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "RobotState":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (STATE_DIM,):
            raise ValueError(f"state vector must have {STATE_DIM} entries")
        return cls(
            position=v[0:3].copy(),
            orientation=v[3:7].copy(),
            linear_velocity=v[7:10].copy(),
            angular_velocity=v[10:13].copy(),
            q=v[13:29].copy(),
            qd=v[29:45].copy(),
            qdd=v[45:61].copy(),
            tau=v[61:77].copy(),
            contacts=v[77:81] > 0.5,
            feet_z=v[81:85].copy(),
        )


class WheeledQuadSim:
    """Vectorized simulator: N robots, one shared model, stacked terrains."""

    def __init__(
        self,
        model: RobotModel,
        fields: HeightFieldStack,
        num_envs: int,
        dt: float = 0.005,
        substeps: int = 4,
    ):
        if not 0.0 < dt <= 0.01:
            raise ValueError("dt must be in (0, 0.01]")
        if substeps < 1:
            raise ValueError("substeps must be >= 1")
        if fields.num_fields != num_envs:
            raise ValueError("need one height field per environment")
        self.model = model
        self.fields = fields
        self.n = num_envs
        self.dt = float(dt)
        self.substeps = int(substeps)
        self._env_ids = np.arange(num_envs)

        self.position = np.zeros((num_envs, 3))
        self.orientation = np.tile(IDENTITY_QUAT, (num_envs, 1))
        self.linear_velocity = np.zeros((num_envs, 3))
        self.angular_velocity = np.zeros((num_envs, 3))
        self.q = np.tile(model.q_def, (num_envs, 1))
        self.qd = np.zeros((num_envs, NUM_JOINTS))
        self.qdd = np.zeros((num_envs, NUM_JOINTS))
        self.tau = np.zeros((num_envs, NUM_JOINTS))
        self.contacts = np.zeros((num_envs, 4), dtype=bool)
        self.feet_z = np.zeros((num_envs, 4))
        self.base_contact = np.zeros(num_envs, dtype=bool)
        self.diverged = np.zeros(num_envs, dtype=bool)
        # accumulated tangential slip per contact sphere (4 feet + base spheres),
        # the elastic part of the friction model; cleared when contact breaks
        n_spheres = 4 + model.base_collision_points.shape[0]
        self._tan_disp = np.zeros((num_envs, n_spheres, 2))

        lo, hi = model.joint_limits()
        self._leg_lo, self._leg_hi = lo, hi
        self._joint_inertia = np.concatenate(
            [np.full(12, model.leg_inertia), np.full(4, model.wheel_inertia)]
        )
        self._refresh_contacts()

    # -- state access ------------------------------------------------------

    def get_state(self, i: int) -> RobotState:
        return RobotState(
            position=self.position[i].copy(),
            orientation=self.orientation[i].copy(),
            linear_velocity=self.linear_velocity[i].copy(),
            angular_velocity=self.angular_velocity[i].copy(),
            q=self.q[i].copy(),
            qd=self.qd[i].copy(),
            qdd=self.qdd[i].copy(),
            tau=self.tau[i].copy(),
            contacts=self.contacts[i].copy(),
            feet_z=self.feet_z[i].copy(),
        )

    def set_state(self, i: int, st: RobotState) -> None:
        self.position[i] = st.position
        self.orientation[i] = quat_normalize(st.orientation)
        self.linear_velocity[i] = st.linear_velocity
        self.angular_velocity[i] = st.angular_velocity
        self.q[i] = st.q
        self.qd[i] = st.qd
        self.qdd[i] = st.qdd
        self.tau[i] = st.tau
        self.diverged[i] = False
        self._tan_disp[i] = 0.0
        self._refresh_contacts()

    # -- contact geometry --------------------------------------------------

    def _foot_kinematics(self):
        q_legs = self.q[:, LEG_SLICE].reshape(self.n, 4, 3)
        foot_b, jac, axle_b = leg_forward_kinematics(self.model, q_legs)
        R = quat_to_matrix(self.orientation)  # (N,3,3)
        foot_w = self.position[:, None, :] + np.einsum("nij,nkj->nki", R, foot_b)
        axle_w = np.einsum("nij,nkj->nki", R, axle_b)
        return foot_b, foot_w, jac, axle_w, R

    def _contact_points(self, foot_w, R):
        """World positions of all contact spheres' lowest points."""
        m = self.model
        base_w = self.position[:, None, :] + np.einsum(
            "nij,kj->nki", R, m.base_collision_points
        )
        foot_low = foot_w.copy()
        foot_low[..., 2] -= m.wheel_radius
        base_low = base_w.copy()
        base_low[..., 2] -= m.base_collision_radius
        return foot_low, base_low

    def _refresh_contacts(self):
        _, foot_w, _, _, R = self._foot_kinematics()
        foot_low, base_low = self._contact_points(foot_w, R)
        self.feet_z = foot_low[..., 2].copy()
        e4 = np.repeat(self._env_ids[:, None], 4, axis=1)
        h_feet = self.fields.heights_at(e4, foot_low[..., 0], foot_low[..., 1])
        pen = h_feet - foot_low[..., 2]
        self.contacts = pen >= self.model.contact_threshold
        nb = base_low.shape[1]
        eb = np.repeat(self._env_ids[:, None], nb, axis=1)
        h_base = self.fields.heights_at(eb, base_low[..., 0], base_low[..., 1])
        self.base_contact = np.any(h_base - base_low[..., 2] > 0.0, axis=1)

    def support_shift(self, env_ids=None) -> np.ndarray:
        """Vertical shift that would place the deepest contact sphere on the surface.

        Used when re-seating a stored pose on a different terrain.
        """
        _, foot_w, _, _, R = self._foot_kinematics()
        foot_low, base_low = self._contact_points(foot_w, R)
        pts = np.concatenate([foot_low, base_low], axis=1)
        e = np.repeat(self._env_ids[:, None], pts.shape[1], axis=1)
        h = self.fields.heights_at(e, pts[..., 0], pts[..., 1])
        shift = np.max(h - pts[..., 2], axis=1)
        if env_ids is None:
            return shift
        return shift[env_ids]

    # -- dynamics ----------------------------------------------------------

    def step(self, leg_targets: np.ndarray, wheel_velocity_targets: np.ndarray) -> None:
        """Advance every environment by one physics step of dt seconds.

        Internally the dynamics run at dt / substeps; the stiff contact and
        actuator couplings need the smaller step to integrate stably.
        """
        sub_dt = self.dt / self.substeps
        # overflow on a diverging env is expected; the finite check below flags it
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(self.substeps):
                self._substep(leg_targets, wheel_velocity_targets, sub_dt)

        bad = ~(
            np.isfinite(self.position).all(axis=1)
            & np.isfinite(self.orientation).all(axis=1)
            & np.isfinite(self.linear_velocity).all(axis=1)
            & np.isfinite(self.angular_velocity).all(axis=1)
            & np.isfinite(self.q).all(axis=1)
            & np.isfinite(self.qd).all(axis=1)
        )
        if np.any(bad):
            self.diverged |= bad
            np.nan_to_num(self.position, copy=False)
            np.nan_to_num(self.orientation, copy=False)
            self.orientation[bad] = IDENTITY_QUAT
            np.nan_to_num(self.linear_velocity, copy=False)
            np.nan_to_num(self.angular_velocity, copy=False)
            np.nan_to_num(self.q, copy=False)
            np.nan_to_num(self.qd, copy=False)
            np.nan_to_num(self.qdd, copy=False)
        self._refresh_contacts()

    def _substep(self, leg_targets, wheel_velocity_targets, dt) -> None:
        m = self.model
        n = self.n

        foot_b, foot_w, jac, axle_w, R = self._foot_kinematics()

        # PD torques with hard caps; the wheel velocity loop is integrated
        # implicitly further down, so here only the leg torques are final
        q_legs = self.q[:, LEG_SLICE]
        qd_legs = self.qd[:, LEG_SLICE]
        tau_legs = np.clip(
            m.kp_leg * (leg_targets - q_legs) - m.kd_leg * qd_legs,
            -m.leg_torque_cap,
            m.leg_torque_cap,
        )
        qd_wheels = self.qd[:, WHEEL_SLICE]

        # contact kinematics
        foot_low, base_low = self._contact_points(foot_w, R)
        omega_w = np.einsum("nij,nj->ni", R, self.angular_velocity)
        jv = np.einsum("nkij,nkj->nki", jac, qd_legs.reshape(n, 4, 3))
        v_foot = (
            self.linear_velocity[:, None, :]
            + np.cross(omega_w[:, None, :], foot_w - self.position[:, None, :])
            + np.einsum("nij,nkj->nki", R, jv)
        )
        # wheel spin adds surface speed at the contact point
        spin = qd_wheels[..., None] * axle_w  # (N,4,3)
        r_contact = np.zeros_like(foot_w)
        r_contact[..., 2] = -m.wheel_radius
        v_surf_feet = v_foot + np.cross(omega_w[:, None, :] + spin, r_contact)

        nb = base_low.shape[1]
        v_base_pts = self.linear_velocity[:, None, :] + np.cross(
            omega_w[:, None, :], base_low - self.position[:, None, :]
        )

        pts_low = np.concatenate([foot_low, base_low], axis=1)
        v_pts = np.concatenate([v_surf_feet, v_base_pts], axis=1)
        idx = np.repeat(self._env_ids[:, None], 4 + nb, axis=1)
        f_all = self._contact_forces(pts_low, v_pts, idx, dt)
        f_feet, f_base = f_all[:, :4], f_all[:, 4:]

        # wrench on the base: contact forces at the contact points, plus gravity.
        # Massless legs transmit the contact wrench unchanged, so actuator
        # reaction torques are already accounted for and must not be re-added.
        force = f_feet.sum(axis=1) + f_base.sum(axis=1)
        force[:, 2] -= m.base_mass * m.gravity
        torque_w = np.cross(foot_low - self.position[:, None, :], f_feet).sum(axis=1)
        torque_w += np.cross(base_low - self.position[:, None, :], f_base).sum(axis=1)

        # joint-side contact reactions
        f_feet_b = np.einsum("nji,nkj->nki", R, f_feet)  # world -> base
        tau_contact_legs = np.einsum("nkji,nkj->nki", jac, f_feet_b).reshape(n, 12)
        tau_contact_wheels = np.einsum(
            "nki,nki->nk", np.cross(r_contact, f_feet), axle_w
        )

        # wheel velocity loop, implicit in the new wheel speed (the loop rate
        # kd/I is too fast for a stable explicit update); if the implied motor
        # torque exceeds the cap, fall back to an explicit step at the cap
        iw = m.wheel_inertia
        qd_w_impl = (qd_wheels + dt * (m.kd_wheel * wheel_velocity_targets + tau_contact_wheels) / iw) / (
            1.0 + dt * m.kd_wheel / iw
        )
        tau_wheels = m.kd_wheel * (wheel_velocity_targets - qd_w_impl)
        sat = np.abs(tau_wheels) > m.wheel_torque_cap
        tau_wheels = np.clip(tau_wheels, -m.wheel_torque_cap, m.wheel_torque_cap)
        qd_w_expl = qd_wheels + dt * (tau_wheels + tau_contact_wheels) / iw
        new_qd_wheels = np.where(sat, qd_w_expl, qd_w_impl)

        tau = np.concatenate([tau_legs, tau_wheels], axis=1)

        # velocity update (semi-implicit)
        new_v = self.linear_velocity + dt * force / m.base_mass
        I = m.base_inertia
        w = self.angular_velocity
        torque_b = np.einsum("nji,nj->ni", R, torque_w)
        wdot = (torque_b - np.cross(w, I * w)) / I
        new_w = w + dt * wdot
        new_qd = np.empty_like(self.qd)
        new_qd[:, LEG_SLICE] = qd_legs + dt * (
            tau_legs + tau_contact_legs
        ) / m.leg_inertia
        new_qd[:, WHEEL_SLICE] = new_qd_wheels

        # position update with the new velocities
        self.position = self.position + dt * new_v
        self.orientation = quat_integrate(self.orientation, new_w, dt)
        new_q = self.q + dt * new_qd

        # hard joint limits on legs: clamp and kill outward velocity
        legs = new_q[:, LEG_SLICE]
        below = legs < self._leg_lo
        above = legs > self._leg_hi
        legs = np.clip(legs, self._leg_lo, self._leg_hi)
        qd_new_legs = new_qd[:, LEG_SLICE]
        qd_new_legs = np.where(below & (qd_new_legs < 0), 0.0, qd_new_legs)
        qd_new_legs = np.where(above & (qd_new_legs > 0), 0.0, qd_new_legs)
        new_q[:, LEG_SLICE] = legs
        new_qd[:, LEG_SLICE] = qd_new_legs

        self.qdd = (new_qd - self.qd) / dt
        self.q = new_q
        self.qd = new_qd
        self.linear_velocity = new_v
        self.angular_velocity = new_w
        self.tau = tau

    def _contact_forces(self, pts_low, v_pts, env_idx, dt):
        """Per-sphere contact force and friction-state update.

        Normal: spring-damper on penetration, clamped to push only.
        Tangential: spring on the accumulated slip displacement plus viscous
        damping, capped at mu * Fn; when the cap binds the displacement slides
        back so the stored elastic force stays on the friction cone.  Rolling
        wheels accumulate no slip, so rolling stays free while static contacts
        hold their ground.
        """
        m = self.model
        h = self.fields.heights_at(env_idx, pts_low[..., 0], pts_low[..., 1])
        pen = h - pts_low[..., 2]
        active = pen > 0.0
        # damping fades in with penetration so the touchdown force is continuous
        ramp = np.clip(pen / m.damping_ramp, 0.0, 1.0)
        fn = np.where(
            active,
            np.maximum(0.0, m.contact_stiffness * pen - m.contact_damping * ramp * v_pts[..., 2]),
            0.0,
        )
        slip_v = v_pts[..., :2]
        disp = np.where(active[..., None], self._tan_disp + dt * slip_v, 0.0)
        cap = m.friction_coeff * fn
        # slide: clamp the stored elastic displacement to the friction cone
        el_norm = m.tangent_stiffness * np.linalg.norm(disp, axis=-1)
        shrink = np.where(el_norm > np.maximum(cap, 1e-12),
                          cap / np.maximum(el_norm, 1e-12), 1.0)
        disp = disp * shrink[..., None]
        ft = -(m.tangent_stiffness * disp + m.tangent_damping * slip_v)
        ft *= active[..., None]
        ft_norm = np.linalg.norm(ft, axis=-1)
        over = ft_norm > np.maximum(cap, 1e-12)
        scale = np.where(over, cap / np.maximum(ft_norm, 1e-12), 1.0)
        ft = ft * scale[..., None]
        self._tan_disp = disp
        f = np.zeros_like(v_pts)
        f[..., :2] = ft
        f[..., 2] = fn
        return f

    # -- diagnostics -------------------------------------------------------

    def kinetic_energy(self) -> np.ndarray:
        m = self.model
        lin = 0.5 * m.base_mass * np.sum(self.linear_velocity**2, axis=1)
        rot = 0.5 * np.sum(m.base_inertia * self.angular_velocity**2, axis=1)
        joints = 0.5 * np.sum(self._joint_inertia * self.qd**2, axis=1)
        return lin + rot + joints

    def mechanical_energy(self) -> np.ndarray:
        """Kinetic + gravitational + contact-spring energy, for sanity tests."""
        m = self.model
        e = self.kinetic_energy() + m.base_mass * m.gravity * self.position[:, 2]
        _, foot_w, _, _, R = self._foot_kinematics()
        foot_low, base_low = self._contact_points(foot_w, R)
        for pts in (foot_low, base_low):
            idx = np.repeat(self._env_ids[:, None], pts.shape[1], axis=1)
            h = self.fields.heights_at(idx, pts[..., 0], pts[..., 1])
            pen = np.maximum(0.0, h - pts[..., 2])
            e += 0.5 * m.contact_stiffness * np.sum(pen**2, axis=1)
        e += 0.5 * m.tangent_stiffness * np.sum(self._tan_disp**2, axis=(1, 2))
        return e


def step_state(
    state: RobotState,
    cmd: ActionCommand,
    field: HeightField,
    dt: float,
    model: RobotModel | None = None,
) -> RobotState:
    """Single-robot step: value in, value out.

    Raises SimulationDivergedError (carrying the offending state) if the
    integration produced non-finite numbers.
    """
    model = model or RobotModel()
    sim = WheeledQuadSim(model, HeightFieldStack([field]), 1, dt)
    sim.set_state(0, state)
    sim.step(cmd.leg_targets[None, :], cmd.wheel_velocity_targets[None, :])
    out = sim.get_state(0)
    if sim.diverged[0]:
        raise SimulationDivergedError("simulation diverged", out)
    return out


# -- episode initialization ------------------------------------------------

DROP_HEIGHT_RANGE = (1.0, 2.0)


def drop_reset(model: RobotModel, field: HeightField, rng_seed: int) -> RobotState:
    """Random mid-air state: uniform orientation, 1-2 m above local terrain."""
    rng = np.random.default_rng(rng_seed)
    return _drop_state(model, field, rng)


def _drop_state(model: RobotModel, field: HeightField, rng: np.random.Generator) -> RobotState:
    x_min, y_min, x_max, y_max = field.extent
    cx, cy = (x_min + x_max) / 2.0, (y_min + y_max) / 2.0
    x = cx + rng.uniform(-1.5, 1.5)
    y = cy + rng.uniform(-1.5, 1.5)
    h = field.height_at(x, y)
    z = h + rng.uniform(*DROP_HEIGHT_RANGE)
    quat = random_quaternion(rng)
    lo, hi = model.joint_limits()
    q = np.zeros(NUM_JOINTS)
    q[LEG_SLICE] = rng.uniform(lo, hi)
    q[WHEEL_SLICE] = rng.uniform(-np.pi, np.pi, size=4)
    return RobotState(position=np.array([x, y, z]), orientation=quat, q=q)


SETTLE_TIME_LIMIT = 4.0
SETTLE_KE_THRESHOLD = 0.05  # J; implies base speed < 0.1 m/s
SETTLE_MAX_ATTEMPTS = 3


class PoseBank:
    """Settled reset states for recovery episodes, persisted as flat binary.

    File layout: magic b'WQPB', u32 version, u64 count, u32 state_dim,
    then count * state_dim little-endian float64 values.
    """

    MAGIC = b"WQPB"
    VERSION = 1

    def __init__(self, states: np.ndarray):
        states = np.asarray(states, dtype=np.float64)
        if states.ndim != 2 or states.shape[1] != STATE_DIM:
            raise ValueError(f"pose bank states must be (n, {STATE_DIM})")
        self.states = states

    def __len__(self) -> int:
        return self.states.shape[0]

    def get_state(self, i: int) -> RobotState:
        return RobotState.from_vector(self.states[i])

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.integers(0, len(self), size=n)

    def save(self, path) -> None:
        header = struct.pack(
            "<4sIQI", self.MAGIC, self.VERSION, self.states.shape[0], STATE_DIM
        )
        with open(path, "wb") as f:
            f.write(header)
            f.write(self.states.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "PoseBank":
        with open(path, "rb") as f:
            header = f.read(struct.calcsize("<4sIQI"))
            magic, version, count, dim = struct.unpack("<4sIQI", header)
            if magic != cls.MAGIC:
                raise ValueError("not a pose bank file")
            if version != cls.VERSION:
                raise ValueError(f"unsupported pose bank version {version}")
            if dim != STATE_DIM:
                raise ValueError("pose bank state layout mismatch")
            data = np.frombuffer(f.read(count * dim * 8), dtype="<f8")
        return cls(data.reshape(count, dim).astype(np.float64))


def settle_pose_bank(
    model: RobotModel,
    field_set,
    n: int,
    seed: int = 0,
    dt: float = 0.005,
    batch_size: int = 256,
) -> PoseBank:
    """Drop robots over the field set and record their passive resting states.

    Each pose: uniform random drop, then zero-action settling (PD toward the
    default pose) until kinetic energy falls below threshold or 2 s elapse.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    fields = list(field_set)
    states = np.empty((n, STATE_DIM))
    max_steps = int(SETTLE_TIME_LIMIT / dt)
    leg_def = model.q_def[LEG_SLICE]
    done = 0
    batch_idx = 0
    while done < n:
        b = min(batch_size, n - done)
        batch_fields = [fields[(done + i) % len(fields)] for i in range(b)]
        sim = WheeledQuadSim(model, HeightFieldStack(batch_fields), b, dt)
        rng = np.random.default_rng(np.random.SeedSequence([seed, batch_idx]))
        for i in range(b):
            sim.set_state(i, _drop_state(model, batch_fields[i], rng))
        leg_targets = np.tile(leg_def, (b, 1))
        wheel_targets = np.zeros((b, 4))
        for attempt in range(SETTLE_MAX_ATTEMPTS):
            for _ in range(max_steps):
                sim.step(leg_targets, wheel_targets)
                if np.all(sim.kinetic_energy() < SETTLE_KE_THRESHOLD):
                    break
            moving = sim.kinetic_energy() >= SETTLE_KE_THRESHOLD
            if not moving.any():
                break
            # a pose still tumbling after the time limit gets a fresh drop
            for i in np.flatnonzero(moving):
                sim.set_state(i, _drop_state(model, batch_fields[i], rng))
        if np.any(sim.kinetic_energy() >= SETTLE_KE_THRESHOLD):
            raise RuntimeError("pose bank generation failed to settle a drop")
        for i in range(b):
            states[done + i] = sim.get_state(i).to_vector()
        done += b
        batch_idx += 1
    return PoseBank(states)
