"""Navigation stack: costmaps, depth sensing, MPPI planning, trial runner."""

from .costmap import (
    COST_FREE,
    COST_INFLATED_MAX,
    COST_INSCRIBED,
    COST_LETHAL,
    COST_UNKNOWN,
    Costmap2D,
    inflate,
)
from .mppi import (
    MppiConfig,
    MppiResult,
    PlanarState,
    mppi_plan,
    rollout_unicycle,
    softmax_weights,
)
from .navigate import (
    GOAL_RADIUS,
    NavTrialResult,
    NoiseModel,
    build_global_costmap,
    navigate,
    trajectory_csv,
)
from .raycast import SENSOR_HEIGHT, DepthScan, Pose2D, raycast_depth
from .voxels import T_DECAY, VoxelGrid3D, integrate_scan
from .world import Box, Cylinder, NavWorld, WorldParseError

__all__ = [
    "COST_FREE",
    "COST_INFLATED_MAX",
    "COST_INSCRIBED",
    "COST_LETHAL",
    "COST_UNKNOWN",
    "Costmap2D",
    "inflate",
    "MppiConfig",
    "MppiResult",
    "PlanarState",
    "mppi_plan",
    "rollout_unicycle",
    "softmax_weights",
    "GOAL_RADIUS",
    "NavTrialResult",
    "NoiseModel",
    "build_global_costmap",
    "navigate",
    "trajectory_csv",
    "SENSOR_HEIGHT",
    "DepthScan",
    "Pose2D",
    "raycast_depth",
    "T_DECAY",
    "VoxelGrid3D",
    "integrate_scan",
    "Box",
    "Cylinder",
    "NavWorld",
    "WorldParseError",
]
