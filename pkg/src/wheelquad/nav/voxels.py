"""Local 3D voxel map fed by depth scans, with time-based decay.

Voxels are marked only at scan hit endpoints (always within sensor range),
cleared along the ray before a hit, and expire T_DECAY seconds after their
last observation so moving obstacles fade out.
"""

from dataclasses import dataclass, field

import numpy as np

T_DECAY = 2.0  # seconds a hit stays occupied without re-observation


@dataclass
class VoxelGrid3D:
    origin: np.ndarray
    voxel_size: float
    dims: tuple
    occupied: np.ndarray = field(default=None)
    last_seen: np.ndarray = field(default=None)
    version: int = 0  # bumped by integrate_scan; lets planners cache views

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.dims = tuple(int(d) for d in self.dims)
        if self.voxel_size <= 0.0:
            raise ValueError("voxel_size must be positive")
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError("dims must be three positive counts")
        if self.occupied is None:
            self.occupied = np.zeros(self.dims, dtype=bool)
        if self.last_seen is None:
            self.last_seen = np.full(self.dims, -np.inf)

    def voxel_index(self, points):
        """(N, 3) world points -> (N, 3) integer voxel indices (may be outside)."""
        return np.floor(
            (np.asarray(points, dtype=np.float64) - self.origin) / self.voxel_size
        ).astype(np.int64)

    def in_bounds(self, idx):
        idx = np.asarray(idx)
        return np.all((idx >= 0) & (idx < np.array(self.dims)), axis=-1)

    def occupied_at(self, points) -> np.ndarray:
        idx = self.voxel_index(np.atleast_2d(points))
        ok = self.in_bounds(idx)
        out = np.zeros(len(idx), dtype=bool)
        sub = idx[ok]
        out[ok] = self.occupied[sub[:, 0], sub[:, 1], sub[:, 2]]
        return out

    def occupancy_2d(self) -> np.ndarray:
        """Column-wise footprint: True where any voxel in the z column is set."""
        return self.occupied.any(axis=2)

    def expire(self, now: float) -> None:
        self.occupied &= self.last_seen > now - T_DECAY


def integrate_scan(grid: VoxelGrid3D, scan, pose, now: float = 0.0) -> VoxelGrid3D:
    """Fold one depth scan into the grid (in place; the grid is returned).

    Every ray clears the voxels it passes through before its hit and marks
    the endpoint voxel when the ray actually hit something (depth below
    max_range).  Finally stale voxels older than T_DECAY expire.
    """
    origin3 = np.array([pose.x, pose.y, scan.height])
    step = grid.voxel_size / 2.0
    dirs = np.stack([np.cos(pose.yaw + scan.angles),
                     np.sin(pose.yaw + scan.angles),
                     np.zeros_like(scan.angles)], axis=1)
    hit = scan.depths < scan.max_range - 1e-9
    # free-space samples stop short of the endpoint voxel
    free_len = np.where(hit, np.maximum(scan.depths - grid.voxel_size, 0.0),
                        scan.depths)
    ts = np.arange(0.0, float(scan.depths.max()) + step, step)
    pts = origin3 + ts[None, :, None] * dirs[:, None, :]
    keep = ts[None, :] < free_len[:, None]
    idx = grid.voxel_index(pts[keep])
    sub = idx[grid.in_bounds(idx)]
    grid.occupied[sub[:, 0], sub[:, 1], sub[:, 2]] = False
    if hit.any():
        ends = origin3 + scan.depths[hit, None] * dirs[hit]
        idx = grid.voxel_index(ends)
        sub = idx[grid.in_bounds(idx)]
        grid.occupied[sub[:, 0], sub[:, 1], sub[:, 2]] = True
        grid.last_seen[sub[:, 0], sub[:, 1], sub[:, 2]] = now
    grid.expire(now)
    grid.version += 1
    return grid
