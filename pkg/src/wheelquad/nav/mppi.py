"""MPPI local planner on a unicycle model.

Samples K noisy control sequences around a nominal plan, rolls them out
over the horizon, scores goal progress, obstacle proximity from both
costmaps and control smoothness, then blends first controls with softmax
weights.  If every rollout collides the planner emits a rotate-in-place
recovery command instead.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .costmap import COST_INFLATED_MAX, COST_INSCRIBED, Costmap2D
from .voxels import VoxelGrid3D

COLLISION_COST = 1.0e6


@dataclass
class MppiConfig:
    horizon: int = 30
    dt: float = 0.1
    samples: int = 512
    temperature: float = 0.3
    sigma_v: float = 0.2
    sigma_omega: float = 0.4
    v_max: float = 0.7
    omega_max: float = 1.5
    goal_weight: float = 1.0
    obstacle_weight: float = 5.0
    smooth_weight: float = 0.1
    robot_radius: float = 0.3

    def __post_init__(self):
        if self.samples < 1 or self.horizon < 1:
            raise ValueError("samples and horizon must be >= 1")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.v_max <= 0.0 or self.omega_max <= 0.0:
            raise ValueError("command limits must be positive")


@dataclass(frozen=True)
class PlanarState:
    x: float
    y: float
    yaw: float
    v: float = 0.0
    omega: float = 0.0


@dataclass
class MppiResult:
    v: float
    omega: float
    recovery: bool
    nominal: np.ndarray  # (H, 2) warm start for the next cycle
    expected_cost: float


def softmax_weights(costs, temperature):
    """exp(-(c - min c) / T), normalized; shift-invariant by construction."""
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 1 or costs.size < 1:
        raise ValueError("costs must be a non-empty vector")
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    w = np.exp(-(costs - costs.min()) / temperature)
    return w / w.sum()


def rollout_unicycle(state: PlanarState, controls, dt):
    """Integrate (K, H, 2) controls; returns (K, H, 3) poses after each step."""
    controls = np.asarray(controls, dtype=np.float64)
    K, H, _ = controls.shape
    poses = np.empty((K, H, 3))
    x = np.full(K, state.x)
    y = np.full(K, state.y)
    yaw = np.full(K, state.yaw)
    for t in range(H):
        v = controls[:, t, 0]
        om = controls[:, t, 1]
        x = x + v * np.cos(yaw) * dt
        y = y + v * np.sin(yaw) * dt
        yaw = yaw + om * dt
        poses[:, t, 0] = x
        poses[:, t, 1] = y
        poses[:, t, 2] = yaw
    return poses


def footprint_mask(cfg: MppiConfig, local_grid: VoxelGrid3D) -> np.ndarray | None:
    """2D occupancy dilated by the robot radius, or None when nothing is set.

    Cached against the grid version so repeated plans between scans reuse
    the dilation.
    """
    key = (local_grid.version, cfg.robot_radius)
    cached = getattr(local_grid, "_footprint_cache", None)
    if cached is not None and cached[0] == key:
        return cached[1]
    occ = local_grid.occupancy_2d()
    if not occ.any():
        mask = None
    else:
        r = int(np.ceil(cfg.robot_radius / local_grid.voxel_size))
        yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
        disc = (xx**2 + yy**2) * local_grid.voxel_size**2 <= cfg.robot_radius**2
        mask = ndimage.binary_dilation(occ, structure=disc)
    local_grid._footprint_cache = (key, mask)
    return mask


def obstacle_costs(cfg: MppiConfig, poses, global_map: Costmap2D,
                   local_grid: VoxelGrid3D | None):
    """(K, H) per-step obstacle cost in [0, 1] plus a (K, H) collision mask.

    Reads the max of the normalized global-costmap cost and the local
    voxel footprint: any occupied voxel column within the robot radius of
    a step counts as a collision there.
    """
    K, H, _ = poses.shape
    flat_x = poses[..., 0].ravel()
    flat_y = poses[..., 1].ravel()
    cost = global_map.cost_at(flat_x, flat_y).astype(np.float64)
    collision = cost >= COST_INSCRIBED
    cost = np.minimum(cost, COST_INFLATED_MAX) / COST_INFLATED_MAX
    if local_grid is not None:
        mask = footprint_mask(cfg, local_grid)
        if mask is not None:
            ix = np.floor((flat_x - local_grid.origin[0])
                          / local_grid.voxel_size).astype(np.int64)
            iy = np.floor((flat_y - local_grid.origin[1])
                          / local_grid.voxel_size).astype(np.int64)
            nx, ny = mask.shape
            inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
            near = np.zeros(flat_x.shape, dtype=bool)
            near[inside] = mask[ix[inside], iy[inside]]
            collision = collision | near
            cost = np.maximum(cost, near.astype(np.float64))
    return cost.reshape(K, H), collision.reshape(K, H)


def mppi_plan(
    cfg: MppiConfig,
    state: PlanarState,
    goal,
    global_map: Costmap2D,
    local_grid: VoxelGrid3D | None,
    rng: np.random.Generator,
    nominal: np.ndarray | None = None,
) -> MppiResult:
    """One planning cycle; returns the blended command and next warm start."""
    goal = np.asarray(goal, dtype=np.float64)
    if nominal is None:
        nominal = np.zeros((cfg.horizon, 2))
    if nominal.shape != (cfg.horizon, 2):
        raise ValueError(f"nominal must have shape ({cfg.horizon}, 2)")
    noise = rng.normal(size=(cfg.samples, cfg.horizon, 2)) \
        * np.array([cfg.sigma_v, cfg.sigma_omega])
    noise[0] = 0.0  # always evaluate the nominal plan itself
    controls = nominal[None, :, :] + noise
    controls[..., 0] = np.clip(controls[..., 0], -cfg.v_max, cfg.v_max)
    controls[..., 1] = np.clip(controls[..., 1], -cfg.omega_max, cfg.omega_max)

    poses = rollout_unicycle(state, controls, cfg.dt)
    dist = np.hypot(poses[..., 0] - goal[0], poses[..., 1] - goal[1])
    obs_cost, collision = obstacle_costs(cfg, poses, global_map, local_grid)
    du = np.diff(controls, axis=1, prepend=np.array(
        [[[state.v, state.omega]]]).repeat(cfg.samples, axis=0))
    smooth = np.sum(du**2, axis=-1)
    step_cost = (cfg.goal_weight * dist
                 + cfg.obstacle_weight * obs_cost
                 + cfg.smooth_weight * smooth)
    costs = step_cost.sum(axis=1) + COLLISION_COST * collision.any(axis=1)

    collided = collision.any(axis=1)
    if collided.all():
        bearing = np.arctan2(goal[1] - state.y, goal[0] - state.x)
        err = np.arctan2(np.sin(bearing - state.yaw), np.cos(bearing - state.yaw))
        omega = float(np.clip(np.sign(err) * cfg.omega_max, -cfg.omega_max,
                              cfg.omega_max))
        return MppiResult(0.0, omega, True, np.zeros((cfg.horizon, 2)),
                          float(costs.min()))

    w = softmax_weights(costs, cfg.temperature)
    blended = np.einsum("k,khu->hu", w, controls)
    v = float(np.clip(blended[0, 0], -cfg.v_max, cfg.v_max))
    omega = float(np.clip(blended[0, 1], -cfg.omega_max, cfg.omega_max))
    next_nominal = np.vstack([blended[1:], blended[-1:]])
    return MppiResult(v, omega, False, next_nominal, float(w @ costs))
