"""Rotation and pose math shared by every other module.

Quaternions are scalar-first ``(w, x, y, z)`` unit arrays describing active,
right-handed rotations in a z-up world.  ``quat_rotate(q, v)`` maps a
base-frame vector into the world frame; ``rotate_world_to_base`` is its
inverse.  All functions broadcast over leading dimensions so the vectorized
simulator can pass ``(N, 4)`` / ``(N, 3)`` batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WORLD_DOWN = np.array([0.0, 0.0, -1.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Normalize to unit length and canonicalize the double cover (w >= 0)."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    out = q / n
    flip = out[..., 0:1] < 0.0
    return np.where(flip, -out, out)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b, broadcasting over leading axes."""
    aw, ax, ay, az = (a[..., i] for i in range(4))
    bw, bx, by, bz = (b[..., i] for i in range(4))
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    out = np.array(q, dtype=np.float64, copy=True)
    out[..., 1:] *= -1.0
    return out


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate base-frame vector(s) v into the world frame."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = q[..., 0:1]
    u = q[..., 1:]
    # v' = v + 2w (u x v) + 2 u x (u x v)
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_rotate_inverse(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate world-frame vector(s) v into the base frame."""
    return quat_rotate(quat_conjugate(np.asarray(q, dtype=np.float64)), v)


def rotate_world_to_base(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """World -> base change of coordinates (inverse of the active rotation)."""
    return quat_rotate_inverse(quat_normalize(q), v)


def project_gravity(q: np.ndarray) -> np.ndarray:
    """World down-vector (0, 0, -1) expressed in the base frame.

    Unit norm by construction; the z component is -1 exactly when the base
    z axis points at world up.
    """
    return rotate_world_to_base(q, WORLD_DOWN)


def quat_from_axis_angle(axis: np.ndarray, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle, dtype=np.float64)
    half = 0.5 * angle
    return np.concatenate(
        [np.cos(half)[..., None], np.sin(half)[..., None] * axis], axis=-1
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix for the same active rotation (base -> world)."""
    w, x, y, z = (q[..., i] for i in range(4))
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def quat_integrate(q: np.ndarray, omega_body: np.ndarray, dt: float) -> np.ndarray:
    """Advance orientation by a body-frame angular velocity over dt.

    Uses the exact exponential of the rotation increment, then renormalizes.
    """
    omega_body = np.asarray(omega_body, dtype=np.float64)
    rot = omega_body * dt
    angle = np.linalg.norm(rot, axis=-1, keepdims=True)
    small = angle < 1e-12
    axis = np.where(small, np.array([1.0, 0.0, 0.0]), rot / np.where(small, 1.0, angle))
    dq = quat_from_axis_angle(axis, angle[..., 0])
    return quat_normalize(quat_multiply(q, dq))


def yaw_of(q: np.ndarray) -> np.ndarray:
    """Heading angle of the base x axis projected onto the world xy plane."""
    fwd = quat_rotate(q, np.array([1.0, 0.0, 0.0]))
    return np.arctan2(fwd[..., 1], fwd[..., 0])


def random_quaternion(rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Uniform random rotation(s) via Shoemake's subgroup algorithm."""
    shape = () if n is None else (n,)
    u1, u2, u3 = rng.random(shape), rng.random(shape), rng.random(shape)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    q = np.stack(
        [
            a * np.sin(2 * np.pi * u2),
            a * np.cos(2 * np.pi * u2),
            b * np.sin(2 * np.pi * u3),
            b * np.cos(2 * np.pi * u3),
        ],
        axis=-1,
    )
    return quat_normalize(q)


IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass
class Pose:
    """World position (m) plus base orientation quaternion."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.orientation = quat_normalize(self.orientation)
        if not np.all(np.isfinite(self.position)):
            raise ValueError("pose position must be finite")


@dataclass
class Twist:
    """Linear (m/s) and angular (rad/s) velocity."""

    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=np.float64)
        self.angular = np.asarray(self.angular, dtype=np.float64)
        if not (np.all(np.isfinite(self.linear)) and np.all(np.isfinite(self.angular))):
            raise ValueError("twist components must be finite")
