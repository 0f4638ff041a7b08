"""Cost grid substrate: geometry, distance transform, layer composition, PGM I/O.

Cost convention (one byte per cell):
    FREE=0 < LIGHT=80 < HEAVY=180 < LETHAL=254, UNKNOWN=255.
The spacing keeps exponential inflation tails of different levels ordered.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt

FREE = 0
LIGHT = 80
HEAVY = 180
LETHAL = 254
UNKNOWN = 255


class GridError(Exception):
    pass


class OutOfBounds(GridError):
    """World point lies outside the grid rectangle."""


class MetaMismatch(GridError):
    """Grids passed to a composition do not share one GridMeta."""


@dataclass(frozen=True)
class GridMeta:
    """Grid geometry: size in cells, meters per cell, world origin of cell (0,0) corner.

    Storage is row-major with the origin at the lower-left corner; cells are
    addressed as (col, row).
    """

    width: int
    height: int
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise GridError(f"grid size must be positive, got {self.width}x{self.height}")
        if self.resolution <= 0:
            raise GridError(f"resolution must be positive, got {self.resolution}")

    @property
    def world_width(self) -> float:
        return self.width * self.resolution

    @property
    def world_height(self) -> float:
        return self.height * self.resolution

    def contains(self, x: float, y: float) -> bool:
        ox, oy = self.origin
        return ox <= x < ox + self.world_width and oy <= y < oy + self.world_height

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        ox, oy = self.origin
        return (ox + (col + 0.5) * self.resolution, oy + (row + 0.5) * self.resolution)


def world_to_cell(p: tuple[float, float], meta: GridMeta) -> tuple[int, int]:
    """Map a world point (meters) to its (col, row) cell index.

    Raises OutOfBounds when the point lies outside the grid rectangle.
    """
    x, y = p
    if not meta.contains(x, y):
        raise OutOfBounds(f"point ({x}, {y}) outside grid")
    col = int(np.floor((x - meta.origin[0]) / meta.resolution))
    row = int(np.floor((y - meta.origin[1]) / meta.resolution))
    # floating point at the far edge can land one past the end
    return min(col, meta.width - 1), min(row, meta.height - 1)


def cells_world_to_grid(xs: np.ndarray, ys: np.ndarray, meta: GridMeta):
    """Vectorized world->cell with an in-bounds mask (no exception)."""
    cols = np.floor((np.asarray(xs) - meta.origin[0]) / meta.resolution).astype(np.int64)
    rows = np.floor((np.asarray(ys) - meta.origin[1]) / meta.resolution).astype(np.int64)
    ok = (cols >= 0) & (cols < meta.width) & (rows >= 0) & (rows < meta.height)
    return cols, rows, ok


@dataclass
class CostGrid:
    """A fixed-resolution 2D grid of byte cost values.

    ``cells`` has shape (height, width) and is indexed ``cells[row, col]``.
    """

    meta: GridMeta
    cells: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.cells is None:
            self.cells = np.zeros((self.meta.height, self.meta.width), dtype=np.uint8)
        else:
            self.cells = np.asarray(self.cells, dtype=np.uint8)
            if self.cells.shape != (self.meta.height, self.meta.width):
                raise GridError(
                    f"cells shape {self.cells.shape} != (height={self.meta.height}, width={self.meta.width})"
                )

    def copy(self) -> "CostGrid":
        return CostGrid(self.meta, self.cells.copy())

    def at(self, col: int, row: int) -> int:
        return int(self.cells[row, col])

    def set(self, col: int, row: int, value: int) -> None:
        self.cells[row, col] = value


@dataclass
class DistanceField:
    """Euclidean distance (meters) from each cell center to the nearest LETHAL cell."""

    meta: GridMeta
    dist: np.ndarray

    def at(self, col: int, row: int) -> float:
        return float(self.dist[row, col])


def distance_transform(static_grid: CostGrid) -> DistanceField:
    """Exact Euclidean distance to the nearest LETHAL (wall) cell, in meters.

    A wall-free grid gets a uniform sentinel at least the grid diagonal.
    """
    meta = static_grid.meta
    walls = static_grid.cells == LETHAL
    if not walls.any():
        sentinel = float(np.hypot(meta.width, meta.height)) * meta.resolution
        return DistanceField(meta, np.full((meta.height, meta.width), sentinel))
    dist = distance_transform_edt(~walls) * meta.resolution
    return DistanceField(meta, dist)


def compose_layers(
    static: CostGrid,
    obstacle: CostGrid,
    movable_overrides: dict[tuple[int, int], int],
    inflated: CostGrid,
) -> CostGrid:
    """Max-compose the layer stack into the master grid.

    Cells present in ``movable_overrides`` have their obstacle-layer LETHAL
    marking replaced by the override level before the max, so provisionally
    movable detections are downgraded while walls stay lethal.
    """
    if not (static.meta == obstacle.meta == inflated.meta):
        raise MetaMismatch("layers disagree on GridMeta")
    obs = obstacle.cells.copy()
    for (col, row), cost in movable_overrides.items():
        if obs[row, col] == LETHAL:
            obs[row, col] = cost
    master = np.maximum(np.maximum(static.cells, obs), inflated.cells)
    return CostGrid(static.meta, master)


def read_pgm(path, resolution: float, origin: tuple[float, float] = (0.0, 0.0)) -> CostGrid:
    """Read a binary (P5) PGM occupancy map: 255=free, 0=wall, anything else unknown.

    The top image row is the highest-y grid row (origin is lower-left).
    """
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    i = 0
    while len(tokens) < 4:
        if data[i : i + 1] == b"#":  # comment to end of line
            i = data.index(b"\n", i) + 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j > i:
            tokens.append(data[i:j])
        i = j + 1
    if tokens[0] != b"P5":
        raise GridError(f"not a binary PGM: magic {tokens[0]!r}")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise GridError(f"unsupported maxval {maxval}")
    pixels = np.frombuffer(data[i : i + width * height], dtype=np.uint8).reshape(height, width)
    cells = np.full((height, width), UNKNOWN, dtype=np.uint8)
    cells[pixels == 255] = FREE
    cells[pixels == 0] = LETHAL
    return CostGrid(GridMeta(width, height, resolution, origin), np.flipud(cells))


def write_pgm(grid: CostGrid, path) -> None:
    """Write a static map as binary PGM (255=free, 0=wall, 205=anything else)."""
    pixels = np.full_like(grid.cells, 205)
    pixels[grid.cells == FREE] = 255
    pixels[grid.cells == LETHAL] = 0
    with open(path, "wb") as f:
        f.write(f"P5\n{grid.meta.width} {grid.meta.height}\n255\n".encode())
        f.write(np.flipud(pixels).tobytes())
