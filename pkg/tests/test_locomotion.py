"""Locomotion task tests: commands, rewards, curriculum, traverse trials."""

import numpy as np
import pytest
from scipy import stats

from wheelquad import recovery
from wheelquad.locomotion import (
    ACTOR_OBS_DIM,
    CurriculumState,
    Direction,
    EpisodeResult,
    LocomotionEnv,
    MAX_SPEED,
    MAX_YAW_RATE,
    VelocityCommand,
    curriculum_update,
    locomotion_reward,
    sample_command,
    terrain_traverse_trial,
)
from wheelquad.robot import default_model
from wheelquad.sim import RobotState
from wheelquad.terrain import TerrainKind, TerrainSpec

MODEL = default_model()


# -- commands --------------------------------------------------------------


def test_command_validation():
    VelocityCommand(2.0, 0.0, 1.0)
    VelocityCommand(1.2, 1.2, 0.0)  # norm 1.697
    with pytest.raises(ValueError):
        VelocityCommand(1.5, 1.5, 0.0)  # norm 2.12
    with pytest.raises(ValueError):
        VelocityCommand(np.nan, 0.0, 0.0)


def test_sample_command_stays_in_envelope():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        c = sample_command(rng)
        assert np.hypot(c.v_x, c.v_y) <= MAX_SPEED + 1e-12
        assert abs(c.omega_z) <= MAX_YAW_RATE


def test_sample_command_seeded_repeatable():
    a = sample_command(np.random.default_rng(42))
    b = sample_command(np.random.default_rng(42))
    assert a == b


def test_sample_command_matches_clamped_uniform_oracle():
    # below the clamp the speed of a uniform square sample has CDF (s/m)^2
    # conditioned on landing inside the disc; the clamped mass is 1 - pi/4
    rng = np.random.default_rng(7)
    n = 20_000
    speeds = np.array([
        np.hypot(c.v_x, c.v_y) for c in (sample_command(rng) for _ in range(n))
    ])
    clamped = speeds >= MAX_SPEED - 1e-9
    frac = clamped.mean()
    expect = 1.0 - np.pi / 4.0
    assert abs(frac - expect) < 4.0 * np.sqrt(expect * (1 - expect) / n)
    inside = speeds[~clamped] / MAX_SPEED
    res = stats.kstest(inside, lambda s: s**2)
    assert res.pvalue > 0.01


def test_sample_command_omega_uniform():
    rng = np.random.default_rng(8)
    om = np.array([sample_command(rng).omega_z for _ in range(20_000)])
    res = stats.kstest(om, stats.uniform(loc=-1.5, scale=3.0).cdf)
    assert res.pvalue > 0.01


# -- reward ----------------------------------------------------------------


def tracking_state(v_world=(0.0, 0.0, 0.0), omega_z=0.0):
    st = RobotState(
        position=np.array([0.0, 0.0, MODEL.h_star]),
        q=MODEL.q_def.copy(),
    )
    st.linear_velocity = np.asarray(v_world, dtype=np.float64)
    st.angular_velocity = np.array([0.0, 0.0, omega_z])
    return st


def test_perfect_tracking_terms_are_one():
    st = tracking_state(v_world=(1.0, -0.5, 0.0), omega_z=0.7)
    br = locomotion_reward(st, VelocityCommand(1.0, -0.5, 0.7),
                           np.zeros(16), np.zeros(16), model=MODEL)
    assert br.terms["track_lin"] == 1.0
    assert br.terms["track_ang"] == 1.0


def test_zero_velocity_against_unit_command():
    st = tracking_state()
    br = locomotion_reward(st, VelocityCommand(1.0, 0.0, 0.0),
                           np.zeros(16), np.zeros(16), model=MODEL)
    assert br.terms["track_lin"] == pytest.approx(np.exp(-4.0), abs=1e-12)


def test_tracking_terms_bounded_and_tight():
    rng = np.random.default_rng(3)
    for _ in range(50):
        v = rng.uniform(-2, 2, 3)
        st = tracking_state(v_world=v, omega_z=rng.uniform(-1.5, 1.5))
        cmd = sample_command(rng)
        br = locomotion_reward(st, cmd, np.zeros(16), np.zeros(16), model=MODEL)
        for k in ("track_lin", "track_ang"):
            assert 0.0 < br.terms[k] <= 1.0


def test_regularizers_match_recovery_reward():
    rng = np.random.default_rng(11)
    for _ in range(20):
        st = tracking_state(v_world=rng.normal(size=3))
        st.tau = rng.normal(size=16) * 5
        st.qdd = rng.normal(size=16) * 50
        st.contacts = np.ones(4, dtype=bool)
        st.feet_z = np.zeros(4)
        action = rng.normal(size=16)
        last = rng.normal(size=16)
        loco = locomotion_reward(st, VelocityCommand(0, 0, 0), action, last,
                                 model=MODEL)
        rec = recovery.reward(st, st, action, last, MODEL.h_star, MODEL)
        for k in ("dof_torque", "dof_acc", "action_rate"):
            assert loco.terms[k] == rec.terms[k]
            assert loco.weighted[k] == rec.weighted[k]


def test_base_collision_penalty():
    st = tracking_state()
    clean = locomotion_reward(st, VelocityCommand(0, 0, 0),
                              np.zeros(16), np.zeros(16), model=MODEL)
    hit = locomotion_reward(st, VelocityCommand(0, 0, 0),
                            np.zeros(16), np.zeros(16), base_contact=True,
                            model=MODEL)
    assert hit.total == pytest.approx(clean.total - 1.0, abs=1e-12)


# -- curriculum ------------------------------------------------------------


def test_curriculum_promotion_and_clamp():
    cur = CurriculumState()
    cur = curriculum_update(cur, EpisodeResult(tracked=True, body_contact=False))
    assert cur.difficulty == pytest.approx(0.1)
    assert cur.promotions == 1
    cur = curriculum_update(cur, EpisodeResult(tracked=False, body_contact=False))
    cur = curriculum_update(cur, EpisodeResult(tracked=False, body_contact=True))
    assert cur.difficulty == pytest.approx(0.0)
    assert cur.demotions == 2
    cur = curriculum_update(cur, EpisodeResult(tracked=False, body_contact=False))
    assert cur.difficulty == 0.0  # clamp at the bottom


def test_curriculum_monotone_under_successes():
    cur = CurriculumState()
    win = EpisodeResult(tracked=True, body_contact=False)
    prev = cur.difficulty
    for _ in range(15):
        cur = curriculum_update(cur, win)
        assert cur.difficulty >= prev
        prev = cur.difficulty
    assert cur.difficulty == pytest.approx(1.0)


def test_curriculum_alternating_bounded():
    cur = CurriculumState()
    for k in range(20):
        if k % 2 == 0:
            cur = curriculum_update(cur, EpisodeResult(True, False))
        else:
            cur = curriculum_update(cur, EpisodeResult(False, False))
        assert -1e-12 <= cur.difficulty <= 0.1 + 1e-12


def test_curriculum_state_validation():
    with pytest.raises(ValueError):
        CurriculumState(difficulty=1.2)
    assert not EpisodeResult(tracked=True, body_contact=True).success


# -- environment -----------------------------------------------------------


def test_env_observation_shapes():
    env = LocomotionEnv(MODEL, num_envs=4, seed=0)
    actor, extra = env.reset()
    assert actor.shape == (4, ACTOR_OBS_DIM)
    assert extra.shape == (4, 187)


def test_env_command_block_matches_sampled_commands():
    env = LocomotionEnv(MODEL, num_envs=4, seed=0, noise=False)
    actor, _ = env.reset()
    np.testing.assert_array_equal(actor[:, 57:], env.commands)


def test_env_timeout_with_zero_command_promotes():
    env = LocomotionEnv(MODEL, num_envs=4, seed=0, timeout_steps=3)
    env.reset()
    env.commands[:] = 0.0  # standing still now tracks perfectly
    for _ in range(3):
        _, _, _, dones, _ = env.step(np.zeros((4, 16)))
    records = env.pop_episode_records()
    assert dones.all()
    assert len(records) == 4
    assert all(r["status"] == "success" for r in records)
    assert all(c.difficulty == pytest.approx(0.1) for c in env.curriculum)


def test_env_untracked_timeout_demotes():
    env = LocomotionEnv(MODEL, num_envs=4, seed=1, timeout_steps=3)
    env.reset()
    env.commands[:] = np.array([2.0, 0.0, 0.0])  # cannot track while frozen
    for _ in range(3):
        env.step(np.zeros((4, 16)))
    records = env.pop_episode_records()
    assert all(r["status"] == "failure" for r in records)
    assert all(c.difficulty == 0.0 for c in env.curriculum)


def test_env_deterministic_given_seed():
    runs = []
    for _ in range(2):
        env = LocomotionEnv(MODEL, num_envs=4, seed=9)
        actor, extra = env.reset()
        a2, e2, r, d, _ = env.step(np.full((4, 16), 0.1))
        runs.append((actor, extra, a2, r))
    for x, y in zip(runs[0], runs[1]):
        np.testing.assert_array_equal(x, y)


def test_env_rejects_bad_action_shape():
    env = LocomotionEnv(MODEL, num_envs=2, seed=0)
    env.reset()
    with pytest.raises(ValueError):
        env.step(np.zeros((2, 12)))


# -- traverse trials -------------------------------------------------------


def rolling_policy(obs):
    a = np.zeros((obs.shape[0], 16))
    a[:, 12:] = 10.0
    return a


def test_traverse_flat_with_rolling_policy_succeeds():
    res = terrain_traverse_trial(rolling_policy,
                                 TerrainSpec(TerrainKind.FLAT, 0.0),
                                 Direction.ASCENT, MODEL, timeout=15.0)
    assert res.success
    assert res.base_contacts == 0
    assert 0.0 < res.time < 15.0


def test_traverse_descent_exits_other_side():
    res = terrain_traverse_trial(rolling_policy,
                                 TerrainSpec(TerrainKind.FLAT, 0.0),
                                 Direction.DESCENT, MODEL, timeout=15.0)
    assert res.success


def test_traverse_zero_policy_times_out():
    res = terrain_traverse_trial(lambda obs: np.zeros((1, 16)),
                                 TerrainSpec(TerrainKind.FLAT, 0.0),
                                 Direction.ASCENT, MODEL, timeout=1.0)
    assert not res.success
    assert res.time == pytest.approx(1.0)


def test_traverse_random_policy_fails_steep_slope():
    rng = np.random.default_rng(0)
    res = terrain_traverse_trial(
        lambda obs: rng.normal(size=(1, 16)),
        TerrainSpec(TerrainKind.SLOPE, 1.0),  # 45 degrees
        Direction.ASCENT, MODEL, timeout=6.0)
    assert not res.success
