"""Planar depth scans against analytic obstacles and marched terrain."""

from dataclasses import dataclass

import numpy as np

from .world import NavWorld

SENSOR_HEIGHT = 0.25  # sensor sits this far above local ground


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    yaw: float


@dataclass
class DepthScan:
    """Fan of ray depths; angles are offsets from the pose yaw."""

    angles: np.ndarray
    depths: np.ndarray
    max_range: float
    height: float  # absolute z of the sensor plane

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=np.float64)
        self.depths = np.asarray(self.depths, dtype=np.float64)
        if self.angles.shape != self.depths.shape:
            raise ValueError("angles and depths must align")


def raycast_depth(
    world: NavWorld,
    pose: Pose2D,
    fov: float = np.deg2rad(270.0),
    rays: int = 181,
    max_range: float = 5.0,
) -> DepthScan:
    """First-hit distances along a horizontal fan at sensor height.

    Obstacles are intersected analytically; terrain (when the world has a
    height field) is marched at half the terrain resolution and counts as a
    hit where it rises above the sensor plane.  Rays that hit nothing
    report max_range.  Deterministic: no sampling anywhere.
    """
    if rays < 1:
        raise ValueError("rays must be >= 1")
    if fov < 0.0 or max_range <= 0.0:
        raise ValueError("fov must be >= 0 and max_range positive")
    angles = np.linspace(-fov / 2.0, fov / 2.0, rays) if rays > 1 \
        else np.zeros(1)
    z = float(world.ground_height(pose.x, pose.y)) + SENSOR_HEIGHT
    dx = np.cos(pose.yaw + angles)
    dy = np.sin(pose.yaw + angles)
    depths = np.full(rays, max_range)
    for ob in world.obstacles:
        if z > ob.height:
            continue
        t = ob.ray_hit(pose.x, pose.y, dx, dy)
        depths = np.minimum(depths, t)
    if world.terrain is not None:
        step = world.terrain.resolution / 2.0
        ts = np.arange(step, max_range + step, step)
        xs = pose.x + ts[None, :] * dx[:, None]
        ys = pose.y + ts[None, :] * dy[:, None]
        high = world.terrain.height_at(xs.ravel(), ys.ravel()) \
            .reshape(rays, ts.size) >= z
        any_hit = high.any(axis=1)
        t_hit = ts[np.argmax(high, axis=1)]
        depths = np.where(any_hit, np.minimum(depths, t_hit), depths)
    return DepthScan(angles, np.minimum(depths, max_range), max_range, z)
