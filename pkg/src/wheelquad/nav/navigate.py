"""Goal-seeking loop: sense, map, plan, track, log.

The default tracker integrates the commanded (v, omega) on an ideal
unicycle, which isolates planner behavior from policy quality.  Localization
noise, when enabled, perturbs only the pose the planner sees; collision and
goal checks always use the true pose.
"""

import io
from dataclasses import dataclass, field as dc_field

import numpy as np

from .costmap import Costmap2D, inflate
from .mppi import MppiConfig, MppiResult, PlanarState, mppi_plan
from .raycast import Pose2D, raycast_depth
from .voxels import VoxelGrid3D, integrate_scan
from .world import NavWorld

GOAL_RADIUS = 0.5
INFLATION_DECAY = 0.6


@dataclass
class NoiseModel:
    """Additive Gaussian pose noise emulating visual-inertial drift."""

    sigma_xy: float = 0.0
    sigma_yaw: float = 0.0

    def apply(self, pose: Pose2D, rng) -> Pose2D:
        if self.sigma_xy == 0.0 and self.sigma_yaw == 0.0:
            return pose
        dx, dy = rng.normal(0.0, self.sigma_xy, 2)
        dyaw = rng.normal(0.0, self.sigma_yaw)
        return Pose2D(pose.x + dx, pose.y + dy, pose.yaw + dyaw)


@dataclass
class NavTrialResult:
    success: bool
    reason: str
    time: float
    path: np.ndarray  # (N, 2) true positions
    min_clearance: float
    rows: list = dc_field(default_factory=list)  # (t, x, y, yaw, v, omega)

    @property
    def path_length(self) -> float:
        if len(self.path) < 2:
            return 0.0
        return float(np.sum(np.hypot(*np.diff(self.path, axis=0).T)))


def trajectory_csv(result: NavTrialResult) -> str:
    buf = io.StringIO()
    buf.write("t,x,y,yaw,v,omega\n")
    for row in result.rows:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def build_global_costmap(world: NavWorld, robot_radius: float,
                         decay: float = INFLATION_DECAY) -> Costmap2D:
    return inflate(world.to_costmap(), robot_radius, decay)


def navigate(
    world: NavWorld,
    cfg: MppiConfig | None = None,
    seed: int = 0,
    start=None,
    goal=None,
    timeout: float = 90.0,
    noise: NoiseModel | None = None,
    use_local_map: bool = True,
    scan_rays: int = 121,
    scan_range: float = 4.0,
) -> NavTrialResult:
    """Run one trial from world.start to world.goal (overridable).

    Ends with success inside GOAL_RADIUS of the goal, or failure on
    timeout, leaving the world extent, or touching an obstacle.  A goal
    inside the inflated lethal region fails immediately with a diagnostic.
    """
    cfg = cfg or MppiConfig()
    noise = noise or NoiseModel()
    start = world.start if start is None else np.asarray(start, dtype=np.float64)
    goal = world.goal if goal is None else np.asarray(goal, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7AB]))

    global_map = build_global_costmap(world, cfg.robot_radius)
    if global_map.is_lethal(goal[0], goal[1]):
        return NavTrialResult(False, "goal_in_lethal", 0.0,
                              np.asarray([start[:2]]), np.inf)
    if global_map.is_lethal(start[0], start[1]):
        return NavTrialResult(False, "start_in_lethal", 0.0,
                              np.asarray([start[:2]]), np.inf)

    local = None
    if use_local_map:
        x_min, y_min, x_max, y_max = world.extent
        local = VoxelGrid3D(
            origin=(x_min, y_min, 0.0),
            voxel_size=0.1,
            dims=(int(np.ceil((x_max - x_min) / 0.1)),
                  int(np.ceil((y_max - y_min) / 0.1)), 10),
        )

    yaw0 = float(np.arctan2(goal[1] - start[1], goal[0] - start[0]))
    true = Pose2D(float(start[0]), float(start[1]), yaw0)
    v_cmd, om_cmd = 0.0, 0.0
    nominal = None
    path = [np.array([true.x, true.y])]
    rows = [(0.0, true.x, true.y, true.yaw, 0.0, 0.0)]
    min_clear = float(np.min(world.obstacle_distance(true.x, true.y)))

    steps = int(round(timeout / cfg.dt))
    for k in range(steps):
        t = (k + 1) * cfg.dt
        # sensor runs at half the planner rate
        if use_local_map and k % 2 == 0:
            scan = raycast_depth(world, true, rays=scan_rays,
                                 max_range=scan_range)
            integrate_scan(local, scan, true, now=t)
        believed = noise.apply(true, rng)
        plan = mppi_plan(
            cfg,
            PlanarState(believed.x, believed.y, believed.yaw, v_cmd, om_cmd),
            goal, global_map, local, rng, nominal,
        )
        v_cmd, om_cmd = plan.v, plan.omega
        nominal = plan.nominal

        # ideal unicycle tracking of the commanded twist
        true = Pose2D(
            true.x + v_cmd * np.cos(true.yaw) * cfg.dt,
            true.y + v_cmd * np.sin(true.yaw) * cfg.dt,
            true.yaw + om_cmd * cfg.dt,
        )
        path.append(np.array([true.x, true.y]))
        rows.append((t, true.x, true.y, true.yaw, v_cmd, om_cmd))
        clear = float(np.min(world.obstacle_distance(true.x, true.y)))
        min_clear = min(min_clear, clear)

        if clear <= 0.0:
            return NavTrialResult(False, "collision", t, np.asarray(path),
                                  min_clear, rows)
        if not world.in_extent(true.x, true.y):
            return NavTrialResult(False, "left_extent", t, np.asarray(path),
                                  min_clear, rows)
        if np.hypot(true.x - goal[0], true.y - goal[1]) <= GOAL_RADIUS:
            return NavTrialResult(True, "goal", t, np.asarray(path),
                                  min_clear, rows)
    return NavTrialResult(False, "timeout", timeout, np.asarray(path),
                          min_clear, rows)
