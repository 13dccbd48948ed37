"""Robot model: morphology, actuator limits, gains and leg kinematics.

The platform is a wheeled quadruped with 16 actuated joints: per leg an
abduction, hip and knee joint (position controlled, torque capped at
25 N m) plus a wheel at each foot (velocity controlled, capped at 6 N m).
Joint vector layout: indices 0..11 are (abduction, hip, knee) for legs
FL, FR, RL, RR; indices 12..15 are the four wheels in the same leg order.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

NUM_JOINTS = 16
NUM_LEGS = 4
LEG_SLICE = slice(0, 12)
WHEEL_SLICE = slice(12, 16)
WHEEL_INDICES = (12, 13, 14, 15)

LEG_ACTION_SCALE = 0.5  # leg targets = q_def + 0.5 * action
LEG_TORQUE_CAP = 25.0
WHEEL_TORQUE_CAP = 6.0


def _default_hips() -> np.ndarray:
    # FL, FR, RL, RR
    return np.array(
        [
            [0.19, 0.12, 0.0],
            [0.19, -0.12, 0.0],
            [-0.19, 0.12, 0.0],
            [-0.19, -0.12, 0.0],
        ]
    )


def _default_q() -> np.ndarray:
    q = np.zeros(NUM_JOINTS)
    for leg in range(NUM_LEGS):
        q[3 * leg + 1] = 0.6  # hip pitch
        q[3 * leg + 2] = -1.2  # knee pitch (foot directly below hip)
    return q


def _default_base_spheres() -> np.ndarray:
    # four corner spheres plus a large spine pair: the rounded back makes
    # the inverted rest capsize sideways instead of lying flat, which is what
    # lets a robot with massless legs roll itself over at all
    return np.array(
        [
            [0.20, 0.12, 0.0],
            [0.20, -0.12, 0.0],
            [-0.20, 0.12, 0.0],
            [-0.20, -0.12, 0.0],
            [0.12, 0.0, 0.05],
            [-0.12, 0.0, 0.05],
        ]
    )


def _default_base_radii() -> np.ndarray:
    return np.array([0.065, 0.065, 0.065, 0.065, 0.17, 0.17])


@dataclass
class RobotModel:
    """Physical parameters of the reduced-order wheeled quadruped.

    Morphology numbers are free configuration (desk-scale defaults); the
    torque caps and action scaling are part of the control contract.
    """

    base_mass: float = 12.0
    base_inertia: np.ndarray = dc_field(default_factory=lambda: np.array([0.11, 0.27, 0.34]))
    hip_offsets: np.ndarray = dc_field(default_factory=_default_hips)
    abduction_offset: float = 0.06
    thigh_length: float = 0.165
    shank_length: float = 0.165
    wheel_radius: float = 0.05
    q_def: np.ndarray = dc_field(default_factory=_default_q)
    leg_torque_cap: float = LEG_TORQUE_CAP
    wheel_torque_cap: float = WHEEL_TORQUE_CAP
    kp_leg: float = 60.0
    kd_leg: float = 4.0
    kd_wheel: float = 3.0
    leg_inertia: float = 0.04  # reflected rotor inertia per leg joint
    wheel_inertia: float = 0.005
    joint_limit_span: float = 1.5  # legs move within q_def +/- span
    base_collision_points: np.ndarray = dc_field(default_factory=_default_base_spheres)
    base_collision_radius: np.ndarray = dc_field(default_factory=_default_base_radii)
    contact_stiffness: float = 1500.0
    contact_damping: float = 150.0
    damping_ramp: float = 0.005  # penetration over which contact damping fades in
    friction_coeff: float = 0.8
    tangent_stiffness: float = 400.0  # accumulated-slip spring (static friction)
    tangent_damping: float = 60.0
    contact_threshold: float = 0.01  # penetration needed for the contact flag
    gravity: float = 9.81
    h_star: float = 0.0  # nominal standing height; derived from q_def if 0

    def __post_init__(self):
        self.base_inertia = np.asarray(self.base_inertia, dtype=np.float64)
        self.hip_offsets = np.asarray(self.hip_offsets, dtype=np.float64)
        self.q_def = np.asarray(self.q_def, dtype=np.float64)
        self.base_collision_points = np.asarray(self.base_collision_points, dtype=np.float64)
        # scalar radius configs broadcast to one radius per collision point
        self.base_collision_radius = np.broadcast_to(
            np.asarray(self.base_collision_radius, dtype=np.float64),
            (self.base_collision_points.shape[0],),
        ).copy()
        if self.leg_torque_cap <= 0 or self.wheel_torque_cap <= 0:
            raise ValueError("torque caps must be positive")
        if self.q_def.shape != (NUM_JOINTS,):
            raise ValueError("q_def must have 16 entries")
        if self.h_star == 0.0:
            foot = leg_forward_kinematics(self, self.q_def[None, LEG_SLICE].reshape(1, 4, 3))[0]
            self.h_star = float(self.wheel_radius - foot[0, 0, 2])

    @property
    def wheel_indices(self):
        return np.array(WHEEL_INDICES)

    @property
    def side_signs(self) -> np.ndarray:
        return np.sign(self.hip_offsets[:, 1])

    def joint_limits(self):
        """(lower, upper) for the 12 leg joints; wheels are unbounded."""
        legs = self.q_def[LEG_SLICE]
        return legs - self.joint_limit_span, legs + self.joint_limit_span

    @classmethod
    def from_dict(cls, d: dict) -> "RobotModel":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown robot config keys: {sorted(unknown)}")
        kwargs = {}
        for k, v in d.items():
            kwargs[k] = np.asarray(v, dtype=np.float64) if isinstance(v, list) else v
        return cls(**kwargs)


def leg_forward_kinematics(model: RobotModel, q_legs: np.ndarray):
    """Foot positions, Jacobians and wheel axle axes in the base frame.

    q_legs: (N, 4, 3) joint angles (abduction, hip, knee) per leg.
    Returns (foot (N,4,3), jac (N,4,3,3), axle (N,4,3)); jac columns are
    d foot / d (abduction, hip, knee).
    """
    q_legs = np.asarray(q_legs, dtype=np.float64)
    alpha = q_legs[..., 0]
    th1 = q_legs[..., 1]
    th2 = q_legs[..., 2]
    l1, l2 = model.thigh_length, model.shank_length
    side = model.side_signs  # (4,)

    s1, c1 = np.sin(th1), np.cos(th1)
    s12, c12 = np.sin(th1 + th2), np.cos(th1 + th2)
    ca, sa = np.cos(alpha), np.sin(alpha)

    # leg-plane position relative to the hip, before abduction roll
    px = -l1 * s1 - l2 * s12
    py = np.broadcast_to(side * model.abduction_offset, px.shape)
    pz = -l1 * c1 - l2 * c12

    # roll the leg plane about the base x axis by the abduction angle
    ry = ca * py - sa * pz
    rz = sa * py + ca * pz
    foot = np.stack(
        [model.hip_offsets[:, 0] + px, model.hip_offsets[:, 1] + ry, model.hip_offsets[:, 2] + rz],
        axis=-1,
    )

    zeros = np.zeros_like(px)
    # d/d alpha = x_hat x (rotated leg vector)
    col_a = np.stack([zeros, -rz, ry], axis=-1)
    # d/d theta1 and d/d theta2 in the leg plane, then rolled by alpha
    d1x = -l1 * c1 - l2 * c12
    d1z = l1 * s1 + l2 * s12
    col_1 = np.stack([d1x, -sa * d1z, ca * d1z], axis=-1)
    d2x = -l2 * c12
    d2z = l2 * s12
    col_2 = np.stack([d2x, -sa * d2z, ca * d2z], axis=-1)
    jac = np.stack([col_a, col_1, col_2], axis=-1)

    axle = np.stack([zeros, ca, sa], axis=-1)
    return foot, jac, axle


def default_model() -> RobotModel:
    return RobotModel()
