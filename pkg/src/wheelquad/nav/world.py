"""Navigation worlds: planar obstacle layouts in a small text format.

A world file is line-oriented; `#` starts a comment.  Directives:

    extent x_min y_min x_max y_max
    resolution r
    start x y
    goal x y
    terrain kind difficulty [seed]
    cylinder x y radius [height]
    box x_min y_min x_max y_max [height]

extent, resolution, start and goal are required.  Parse failures raise
WorldParseError carrying the offending line number.
"""

from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from ..terrain import HeightField, TerrainKind, TerrainSpec, generate
from .costmap import Costmap2D


class WorldParseError(ValueError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Cylinder:
    x: float
    y: float
    radius: float
    height: float = 1.0

    def __post_init__(self):
        if self.radius <= 0.0 or self.height <= 0.0:
            raise ValueError("cylinder radius and height must be positive")

    def distance(self, x, y):
        return np.hypot(x - self.x, y - self.y) - self.radius

    def ray_hit(self, ox, oy, dx, dy):
        """Smallest non-negative ray parameter hitting the circle, else inf.

        Accepts scalars or aligned arrays of directions.
        """
        fx, fy = self.x - ox, self.y - oy
        b = fx * dx + fy * dy
        disc = b * b - (fx * fx + fy * fy - self.radius**2)
        with np.errstate(invalid="ignore"):
            root = np.sqrt(disc)
        near = b - root
        far = b + root
        t = np.where(near >= 0.0, near, np.where(far >= 0.0, far, np.inf))
        t = np.where(disc >= 0.0, t, np.inf)
        if t.ndim == 0:
            return float(t)
        return t


@dataclass(frozen=True)
class Box:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    height: float = 1.0

    def __post_init__(self):
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError("box must have positive extent")

    def distance(self, x, y):
        dx = np.maximum(np.maximum(self.x_min - x, x - self.x_max), 0.0)
        dy = np.maximum(np.maximum(self.y_min - y, y - self.y_max), 0.0)
        outside = np.hypot(dx, dy)
        inner = np.maximum(
            np.maximum(self.x_min - x, x - self.x_max),
            np.maximum(self.y_min - y, y - self.y_max),
        )
        return np.where(outside > 0.0, outside, inner)

    def ray_hit(self, ox, oy, dx, dy):
        """Slab test; accepts scalars or aligned arrays of directions."""
        dx = np.asarray(dx, dtype=np.float64)
        dy = np.asarray(dy, dtype=np.float64)
        t_lo = np.full(dx.shape, -np.inf)
        t_hi = np.full(dx.shape, np.inf)
        hit = np.ones(dx.shape, dtype=bool)
        for o, d, lo, hi in ((ox, dx, self.x_min, self.x_max),
                             (oy, dy, self.y_min, self.y_max)):
            parallel = np.abs(d) < 1e-15
            hit &= ~parallel | ((o >= lo) & (o <= hi))
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (lo - o) / d
                t2 = (hi - o) / d
            t_lo = np.where(parallel, t_lo, np.maximum(t_lo, np.minimum(t1, t2)))
            t_hi = np.where(parallel, t_hi, np.minimum(t_hi, np.maximum(t1, t2)))
        hit &= t_hi >= np.maximum(t_lo, 0.0)
        t = np.where(hit, np.maximum(t_lo, 0.0), np.inf)
        if t.ndim == 0:
            return float(t)
        return t


@dataclass
class NavWorld:
    extent: tuple  # (x_min, y_min, x_max, y_max)
    resolution: float
    start: np.ndarray
    goal: np.ndarray
    obstacles: list = dc_field(default_factory=list)
    terrain: HeightField | None = None

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=np.float64)
        self.goal = np.asarray(self.goal, dtype=np.float64)
        x_min, y_min, x_max, y_max = self.extent
        if x_min >= x_max or y_min >= y_max:
            raise ValueError("extent must have positive area")
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")

    def in_extent(self, x, y):
        x_min, y_min, x_max, y_max = self.extent
        return (x >= x_min) & (x <= x_max) & (y >= y_min) & (y <= y_max)

    def obstacle_distance(self, x, y):
        """Signed distance to the nearest obstacle surface (inf when none)."""
        if not self.obstacles:
            return np.full(np.shape(np.asarray(x)), np.inf) \
                if np.ndim(x) else np.inf
        dists = [ob.distance(x, y) for ob in self.obstacles]
        return np.minimum.reduce(dists)

    def ground_height(self, x, y):
        if self.terrain is None:
            return np.zeros(np.shape(np.asarray(x))) if np.ndim(x) else 0.0
        return self.terrain.height_at(x, y)

    def to_costmap(self) -> Costmap2D:
        """Rasterize obstacles as lethal seeds on an empty grid."""
        x_min, y_min, x_max, y_max = self.extent
        nx = int(np.ceil((x_max - x_min) / self.resolution))
        ny = int(np.ceil((y_max - y_min) / self.resolution))
        cm = Costmap2D.empty((x_min, y_min), self.resolution, (nx, ny))
        for ob in self.obstacles:
            if isinstance(ob, Cylinder):
                cm.mark_lethal_disc(ob.x, ob.y, ob.radius)
            else:
                cm.mark_lethal_box(ob.x_min, ob.y_min, ob.x_max, ob.y_max)
        return cm

    @classmethod
    def load(cls, path) -> "NavWorld":
        return cls.loads(Path(path).read_text())

    @classmethod
    def loads(cls, text: str) -> "NavWorld":
        extent = resolution = start = goal = terrain = None
        obstacles = []
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            key, args = parts[0], parts[1:]
            try:
                if key == "extent":
                    extent = tuple(_floats(args, 4))
                elif key == "resolution":
                    (resolution,) = _floats(args, 1)
                elif key == "start":
                    start = _floats(args, 2)
                elif key == "goal":
                    goal = _floats(args, 2)
                elif key == "terrain":
                    terrain = _parse_terrain(args)
                elif key == "cylinder":
                    vals = _floats(args, 3, 4)
                    obstacles.append(Cylinder(*vals))
                elif key == "box":
                    vals = _floats(args, 4, 5)
                    obstacles.append(Box(*vals))
                else:
                    raise ValueError(f"unknown directive {key!r}")
            except WorldParseError:
                raise
            except (ValueError, TypeError) as exc:
                raise WorldParseError(line_no, str(exc)) from exc
        for name, val in (("extent", extent), ("resolution", resolution),
                          ("start", start), ("goal", goal)):
            if val is None:
                raise WorldParseError(0, f"missing required directive {name!r}")
        return cls(extent, resolution, start, goal, obstacles, terrain)


def _floats(args, *counts):
    if len(args) not in counts:
        raise ValueError(f"expected {' or '.join(map(str, counts))} values, "
                         f"got {len(args)}")
    try:
        return [float(a) for a in args]
    except ValueError:
        raise ValueError(f"non-numeric value in {args!r}") from None


def _parse_terrain(args):
    if len(args) not in (2, 3):
        raise ValueError("terrain needs: kind difficulty [seed]")
    kind = TerrainKind(args[0])
    difficulty = float(args[1])
    seed = int(args[2]) if len(args) == 3 else 0
    return generate(TerrainSpec(kind, difficulty, seed))
