"""2D global costmap with exponential obstacle inflation.

Cost convention (one byte per cell): 0 free, 1..252 inflated gradient,
253 inscribed (within the robot radius of an obstacle), 254 lethal
obstacle seed, 255 unknown.  Planners treat >= 253 as untraversable.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

COST_FREE = 0
COST_INFLATED_MAX = 252
COST_INSCRIBED = 253
COST_LETHAL = 254
COST_UNKNOWN = 255

# gradient value at distance robot_radius + decay rounds to zero
_DECAY_GAIN = float(np.log(2.0 * COST_INFLATED_MAX + 1.0))


@dataclass
class Costmap2D:
    """Regular planar cost grid; cells[ix, iy] covers origin + i * resolution."""

    origin: np.ndarray
    resolution: float
    cells: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")
        if self.cells.ndim != 2:
            raise ValueError("cells must be 2-D")

    @classmethod
    def empty(cls, origin, resolution, shape) -> "Costmap2D":
        return cls(origin, resolution, np.zeros(shape, dtype=np.uint8))

    @property
    def shape(self):
        return self.cells.shape

    @property
    def extent(self):
        nx, ny = self.cells.shape
        return (
            float(self.origin[0]),
            float(self.origin[1]),
            float(self.origin[0] + nx * self.resolution),
            float(self.origin[1] + ny * self.resolution),
        )

    def cell_index(self, x, y):
        ix = np.floor((np.asarray(x) - self.origin[0]) / self.resolution)
        iy = np.floor((np.asarray(y) - self.origin[1]) / self.resolution)
        return ix.astype(np.int64), iy.astype(np.int64)

    def cost_at(self, x, y):
        """Cost of the containing cell; out-of-bounds reads as lethal."""
        ix, iy = self.cell_index(x, y)
        nx, ny = self.cells.shape
        inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        out = np.full(np.shape(ix), COST_LETHAL, dtype=np.uint8)
        out[inside] = self.cells[ix[inside], iy[inside]]
        if out.ndim == 0:
            return int(out)
        return out

    def is_lethal(self, x, y):
        return self.cost_at(x, y) >= COST_INSCRIBED

    def mark_lethal_disc(self, x, y, radius) -> None:
        """Stamp a filled disc of lethal seed cells (world coordinates)."""
        nx, ny = self.cells.shape
        xs = self.origin[0] + (np.arange(nx) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(ny) + 0.5) * self.resolution
        d2 = (xs[:, None] - x) ** 2 + (ys[None, :] - y) ** 2
        self.cells[d2 <= radius**2] = COST_LETHAL

    def mark_lethal_box(self, x_min, y_min, x_max, y_max) -> None:
        nx, ny = self.cells.shape
        xs = self.origin[0] + (np.arange(nx) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(ny) + 0.5) * self.resolution
        mask = ((xs[:, None] >= x_min) & (xs[:, None] <= x_max)
                & (ys[None, :] >= y_min) & (ys[None, :] <= y_max))
        self.cells[mask] = COST_LETHAL

    def copy(self) -> "Costmap2D":
        return Costmap2D(self.origin.copy(), self.resolution, self.cells.copy())


def inflate(costmap: Costmap2D, robot_radius: float, decay: float) -> Costmap2D:
    """Expand lethal seeds: inscribed disc, then an exponential gradient.

    Distance d from the nearest lethal seed maps to
      d <= robot_radius                  -> inscribed (253)
      robot_radius < d < radius + decay  -> 252 * exp(-g * (d - radius) / decay)
      d >= radius + decay                -> free
    Idempotent because only seed cells (254) anchor the distance field and
    the transform never creates new seeds.
    """
    if robot_radius < 0.0 or decay <= 0.0:
        raise ValueError("robot_radius must be >= 0 and decay positive")
    seeds = costmap.cells == COST_LETHAL
    out = costmap.copy()
    if not seeds.any():
        out.cells[out.cells != COST_UNKNOWN] = COST_FREE
        out.cells[seeds] = COST_LETHAL
        return out
    dist = ndimage.distance_transform_edt(~seeds, sampling=costmap.resolution)
    unknown = costmap.cells == COST_UNKNOWN
    grad = np.rint(
        COST_INFLATED_MAX
        * np.exp(-_DECAY_GAIN * np.maximum(dist - robot_radius, 0.0) / decay)
    ).astype(np.uint8)
    grad[dist >= robot_radius + decay] = COST_FREE
    cells = np.where(dist <= robot_radius, COST_INSCRIBED, grad).astype(np.uint8)
    cells[seeds] = COST_LETHAL
    cells[unknown & ~seeds & (dist > robot_radius + decay)] = COST_UNKNOWN
    out.cells = cells
    return out
