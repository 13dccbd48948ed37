import numpy as np
import pytest
from hypothesis import given, strategies as st

from wheelquad.geometry import (
    Pose,
    Twist,
    project_gravity,
    quat_from_axis_angle,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_to_matrix,
    random_quaternion,
    rotate_world_to_base,
    yaw_of,
)

RNG = np.random.default_rng(1234)


def random_unit_quats(n):
    return random_quaternion(np.random.default_rng(99), n)


def test_project_gravity_identity():
    g = project_gravity(np.array([1.0, 0.0, 0.0, 0.0]))
    assert np.allclose(g, [0.0, 0.0, -1.0], atol=1e-12)


def test_project_gravity_inverted():
    q = quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), np.pi)  # 180 deg roll
    g = project_gravity(q)
    assert np.allclose(g, [0.0, 0.0, 1.0], atol=1e-12)


def test_project_gravity_nose_down():
    # +90 deg pitch about y maps the base x axis onto world down, so gravity
    # points along the base nose: (+1, 0, 0) in this convention.
    q = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), np.pi / 2)
    g = project_gravity(q)
    assert np.allclose(np.abs(g), [1.0, 0.0, 0.0], atol=1e-12)
    assert g[0] == pytest.approx(1.0, abs=1e-12)


def test_project_gravity_unit_norm_many():
    qs = random_unit_quats(500)
    g = project_gravity(qs)
    assert np.allclose(np.linalg.norm(g, axis=1), 1.0, atol=1e-9)
    assert np.all(np.abs(g[:, 2]) <= 1.0 + 1e-12)


def test_rotate_world_to_base_identity_and_zero():
    q = np.array([1.0, 0.0, 0.0, 0.0])
    v = np.array([1.0, 2.0, 3.0])
    assert np.allclose(rotate_world_to_base(q, v), v, atol=1e-12)
    q2 = random_unit_quats(1)[0]
    assert np.allclose(rotate_world_to_base(q2, np.zeros(3)), 0.0, atol=1e-15)


def test_rotate_matches_matrix_oracle():
    qs = random_unit_quats(200)
    vs = RNG.normal(size=(200, 3))
    got = rotate_world_to_base(qs, vs)
    # oracle: R^T v with R built element-by-element from the same quaternion
    for q, v, g in zip(qs, vs, got):
        R = quat_to_matrix(q)
        assert np.allclose(g, R.T @ v, atol=1e-12)


def test_rotation_round_trip():
    qs = random_unit_quats(300)
    vs = RNG.normal(size=(300, 3))
    back = quat_rotate(qs, rotate_world_to_base(qs, vs))
    assert np.allclose(back, vs, atol=1e-9)
    assert np.allclose(
        np.linalg.norm(rotate_world_to_base(qs, vs), axis=1),
        np.linalg.norm(vs, axis=1),
        atol=1e-9,
    )


def test_gravity_z_is_minus_one_iff_upright():
    yaw_only = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), 1.234)
    assert project_gravity(yaw_only)[2] == pytest.approx(-1.0, abs=1e-12)
    tilted = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), 0.2)
    assert project_gravity(tilted)[2] > -1.0 + 1e-4


def test_normalize_canonicalizes_sign():
    q = np.array([-0.5, 0.5, 0.5, 0.5])
    out = quat_normalize(q)
    assert out[0] >= 0.0
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_quat_multiply_preserves_norm(seed):
    r = np.random.default_rng(seed)
    a = quat_normalize(r.normal(size=4))
    b = quat_normalize(r.normal(size=4))
    assert np.linalg.norm(quat_multiply(a, b)) == pytest.approx(1.0, abs=1e-9)


def test_yaw_of_pure_yaw():
    q = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), 0.7)
    assert yaw_of(q) == pytest.approx(0.7, abs=1e-12)


def test_pose_twist_validation():
    with pytest.raises(ValueError):
        Pose(position=np.array([np.nan, 0.0, 0.0]))
    with pytest.raises(ValueError):
        Twist(linear=np.array([np.inf, 0.0, 0.0]))
    p = Pose(position=np.array([1.0, 2.0, 3.0]), orientation=np.array([2.0, 0.0, 0.0, 0.0]))
    assert np.linalg.norm(p.orientation) == pytest.approx(1.0, abs=1e-12)
