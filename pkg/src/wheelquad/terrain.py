"""Procedural height-field terrains and the privileged sampling grid.

Four generators (flat, slope, stairs, discrete plateaus) parameterized by a
difficulty scalar in [0, 1].  At difficulty 1 the slope incline is 45 deg,
the stair riser is 0.4 m and discrete plateau offsets reach +/- 0.2 m.
The critic's terrain observation samples a yaw-aligned 17 x 11 grid
(1.6 m x 1.0 m at 0.1 m spacing, 187 points) of heights relative to the
base.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass

import numpy as np

from .geometry import yaw_of

# Privileged grid layout: 1.6 m along heading x 1.0 m lateral, 0.1 m spacing.
GRID_LENGTH = 1.6
GRID_WIDTH = 1.0
GRID_RESOLUTION = 0.1
GRID_NX = 17
GRID_NY = 11
GRID_SAMPLES = GRID_NX * GRID_NY  # 187

MAX_SLOPE_DEG = 45.0
MAX_STEP_HEIGHT = 0.4
MAX_DISCRETE_OFFSET = 0.2

_FILE_MAGIC = "# wheelquad heightfield v1"


class TerrainKind(enum.Enum):
    FLAT = "flat"
    SLOPE = "slope"
    STAIRS = "stairs"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class TerrainSpec:
    kind: TerrainKind
    difficulty: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.difficulty <= 1.0:
            raise ValueError(f"difficulty must be in [0, 1], got {self.difficulty}")


class HeightField:
    """Regular-grid elevation map with clamped bilinear queries.

    heights[ix, iy] is the elevation at (origin_x + ix * res,
    origin_y + iy * res).  Immutable after generation; share freely.
    """

    def __init__(self, origin, resolution: float, heights: np.ndarray):
        heights = np.asarray(heights, dtype=np.float64)
        if resolution <= 0.0:
            raise ValueError("resolution must be positive")
        if heights.ndim != 2 or heights.shape[0] < 2 or heights.shape[1] < 2:
            raise ValueError("heights must be a grid of at least 2 x 2 cells")
        if not np.all(np.isfinite(heights)):
            raise ValueError("heights must be finite")
        self.origin = np.asarray(origin, dtype=np.float64).copy()
        self.resolution = float(resolution)
        self.heights = heights
        self.heights.setflags(write=False)

    @property
    def width(self) -> int:
        return self.heights.shape[0]

    @property
    def length(self) -> int:
        return self.heights.shape[1]

    @property
    def extent(self):
        """(x_min, y_min, x_max, y_max) covered by the grid."""
        nx, ny = self.heights.shape
        return (
            self.origin[0],
            self.origin[1],
            self.origin[0] + (nx - 1) * self.resolution,
            self.origin[1] + (ny - 1) * self.resolution,
        )

    def in_bounds(self, x, y):
        x_min, y_min, x_max, y_max = self.extent
        return (x >= x_min) & (x <= x_max) & (y >= y_min) & (y <= y_max)

    def height_at(self, x, y):
        """Bilinear height, clamped to the grid edge for out-of-bounds points."""
        return _bilinear(self.heights[None, ...], self.origin, self.resolution,
                         np.zeros_like(np.asarray(x, dtype=np.int64)), x, y)

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.dumps())

    def dumps(self) -> str:
        buf = io.StringIO()
        nx, ny = self.heights.shape
        buf.write(f"{_FILE_MAGIC}\n")
        buf.write(f"{float(self.origin[0])!r} {float(self.origin[1])!r} "
                  f"{float(self.resolution)!r} {nx} {ny}\n")
        for row in self.heights:
            buf.write(" ".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def load(cls, path) -> "HeightField":
        with open(path) as f:
            return cls.loads(f.read())

    @classmethod
    def loads(cls, text: str) -> "HeightField":
        lines = text.strip().splitlines()
        if not lines or lines[0].strip() != _FILE_MAGIC:
            raise ValueError("not a wheelquad heightfield file")
        ox, oy, res, nx, ny = lines[1].split()
        heights = np.array([[float(v) for v in line.split()] for line in lines[2:]])
        if heights.shape != (int(nx), int(ny)):
            raise ValueError("heightfield dims do not match header")
        return cls((float(ox), float(oy)), float(res), heights)


def _bilinear(heights3, origin, resolution, env_ids, x, y):
    """Clamped bilinear interpolation on stacked (N, nx, ny) grids."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = heights3.shape[1], heights3.shape[2]
    gx = np.clip((x - origin[0]) / resolution, 0.0, nx - 1.0)
    gy = np.clip((y - origin[1]) / resolution, 0.0, ny - 1.0)
    # NaN coordinates (diverging sim states) read cell 0; the caller flags them
    gx = np.where(np.isnan(gx), 0.0, gx)
    gy = np.where(np.isnan(gy), 0.0, gy)
    ix = np.minimum(gx.astype(np.int64), nx - 2)
    iy = np.minimum(gy.astype(np.int64), ny - 2)
    fx = gx - ix
    fy = gy - iy
    e = env_ids
    h00 = heights3[e, ix, iy]
    h10 = heights3[e, ix + 1, iy]
    h01 = heights3[e, ix, iy + 1]
    h11 = heights3[e, ix + 1, iy + 1]
    return (
        h00 * (1 - fx) * (1 - fy)
        + h10 * fx * (1 - fy)
        + h01 * (1 - fx) * fy
        + h11 * fx * fy
    )


def generate(
    spec: TerrainSpec,
    size: float = 8.0,
    resolution: float = 0.1,
    tread_depth: float = 0.3,
) -> HeightField:
    """Build a square arena height field for the given spec.

    Deterministic for a fixed spec: the same (kind, difficulty, seed) always
    yields a bit-identical grid.  The arena is centered on the origin.
    """
    n = int(round(size / resolution)) + 1
    half = (n - 1) * resolution / 2.0
    origin = (-half, -half)
    xs = origin[0] + resolution * np.arange(n)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, _kind_tag(spec.kind)]))

    if spec.kind is TerrainKind.FLAT:
        heights = np.zeros((n, n))
    elif spec.kind is TerrainKind.SLOPE:
        slope = np.tan(np.deg2rad(spec.difficulty * MAX_SLOPE_DEG))
        heights = np.tile((slope * (xs - origin[0]))[:, None], (1, n))
    elif spec.kind is TerrainKind.STAIRS:
        riser = spec.difficulty * MAX_STEP_HEIGHT
        step_idx = np.floor((xs - origin[0]) / tread_depth + 1e-9)
        heights = np.tile((step_idx * riser)[:, None], (1, n))
    elif spec.kind is TerrainKind.DISCRETE:
        amp = spec.difficulty * MAX_DISCRETE_OFFSET
        heights = np.zeros((n, n))
        n_plateaus = 40
        for _ in range(n_plateaus):
            w = rng.integers(3, max(4, n // 5))
            l = rng.integers(3, max(4, n // 5))
            i0 = rng.integers(0, max(1, n - w))
            j0 = rng.integers(0, max(1, n - l))
            heights[i0 : i0 + w, j0 : j0 + l] = rng.uniform(-amp, amp)
    else:  # pragma: no cover - exhaustive enum
        raise ValueError(f"unknown terrain kind {spec.kind}")
    return HeightField(origin, resolution, heights)


def _kind_tag(kind: TerrainKind) -> int:
    return list(TerrainKind).index(kind) + 1


class HeightFieldStack:
    """Per-environment height fields sharing one grid layout.

    Backs the vectorized simulator: all environments use the same origin,
    resolution and dims so height queries batch into a single gather.
    """

    def __init__(self, fields):
        fields = list(fields)
        first = fields[0]
        for f in fields[1:]:
            if (
                f.heights.shape != first.heights.shape
                or f.resolution != first.resolution
                or not np.array_equal(f.origin, first.origin)
            ):
                raise ValueError("stacked height fields must share grid layout")
        self.origin = first.origin.copy()
        self.resolution = first.resolution
        self.heights = np.stack([f.heights for f in fields])

    @classmethod
    def uniform(cls, field: HeightField, n: int) -> "HeightFieldStack":
        return cls([field] * n)

    @property
    def num_fields(self) -> int:
        return self.heights.shape[0]

    def replace(self, idx: int, f: HeightField) -> None:
        if f.heights.shape != self.heights.shape[1:] or f.resolution != self.resolution:
            raise ValueError("replacement field must share grid layout")
        self.heights[idx] = f.heights

    def field(self, idx: int) -> HeightField:
        return HeightField(self.origin, self.resolution, self.heights[idx].copy())

    def heights_at(self, env_ids, x, y):
        return _bilinear(self.heights, self.origin, self.resolution, env_ids, x, y)


def grid_offsets() -> np.ndarray:
    """(187, 2) sample offsets in the heading frame, x-major ordering."""
    dx = np.linspace(-GRID_LENGTH / 2, GRID_LENGTH / 2, GRID_NX)
    dy = np.linspace(-GRID_WIDTH / 2, GRID_WIDTH / 2, GRID_NY)
    gx, gy = np.meshgrid(dx, dy, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=-1)


_GRID_OFFSETS = grid_offsets()


def sample_terrain_grid(field: HeightField, base_pos, base_quat) -> np.ndarray:
    """187 terrain heights around the base, relative to base height.

    The grid is centered on the base xy, rotated to the base yaw (long axis
    along heading), and each sample is terrain height minus base z, making
    the encoding invariant to rigid translations of robot plus terrain.
    """
    stack = HeightFieldStack([field])
    out = sample_terrain_grid_batch(
        stack,
        np.zeros(1, dtype=np.int64),
        np.asarray(base_pos, dtype=np.float64)[None, :],
        np.atleast_1d(yaw_of(np.asarray(base_quat, dtype=np.float64))),
    )
    return out[0]


def sample_terrain_grid_batch(stack: HeightFieldStack, env_ids, base_pos, yaw) -> np.ndarray:
    """Vectorized grid sampling: (N, 187) for N poses."""
    c, s = np.cos(yaw), np.sin(yaw)
    off = _GRID_OFFSETS  # (187, 2)
    px = base_pos[:, 0:1] + c[:, None] * off[:, 0] - s[:, None] * off[:, 1]
    py = base_pos[:, 1:2] + s[:, None] * off[:, 0] + c[:, None] * off[:, 1]
    e = np.repeat(env_ids[:, None], GRID_SAMPLES, axis=1)
    h = _bilinear(stack.heights, stack.origin, stack.resolution, e, px, py)
    return h - base_pos[:, 2:3]
