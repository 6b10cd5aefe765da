"""World/grid coordinate mapping, grid containers, rasterization and 2D rigid transforms."""

from __future__ import annotations

import dataclasses
import math
from collections.abc import Iterable

import numpy as np

type Cell = tuple[int, int]

# Slack (in cells) so that points lying on a bin edge up to float noise land in
# the upper bin, e.g. 0.6 / 0.05 == 11.999999999999998.
_EDGE_EPS = 1e-9


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """
    Square grid centred on the lidar.

    Cell (n/2, n/2) holds the lidar/robot origin. Rows follow the robot x axis
    (forward), columns the y axis (left). Each cell covers [k*s, (k+1)*s) per axis.
    """

    n: int = 200
    s: float = 0.05

    def __post_init__(self) -> None:
        if self.n <= 0 or self.n % 2 != 0:
            raise ValueError(f"Grid side n must be positive and even, got {self.n}")
        if not self.s > 0:
            raise ValueError(f"Cell size s must be positive, got {self.s}")

    @property
    def center(self) -> int:
        """Index of the origin cell along either axis."""
        return self.n // 2

    def in_bounds(self, r: int, c: int) -> bool:
        """True if (r, c) indexes a cell of this grid."""
        return 0 <= r < self.n and 0 <= c < self.n


@dataclasses.dataclass(frozen=True)
class Grid2D:
    """An n x n array of finite, non-negative values tied to a GridSpec."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (self.spec.n, self.spec.n):
            raise ValueError(
                f"Grid values have shape {self.values.shape}, expected "
                f"({self.spec.n}, {self.spec.n})"
            )
        if self.values.dtype != np.bool_ and (
            not np.all(np.isfinite(self.values)) or np.any(self.values < 0)
        ):
            raise ValueError("Grid values must be finite and non-negative")
        self.values.setflags(write=False)

    @classmethod
    def zeros(cls, spec: GridSpec, dtype: type = np.float64) -> Grid2D:
        """An all-zero grid."""
        return cls(spec, np.zeros((spec.n, spec.n), dtype=dtype))

    def cells(self) -> set[Cell]:
        """Set of cells holding a nonzero value."""
        rows, cols = np.nonzero(self.values)
        return set(zip(rows.tolist(), cols.tolist()))


@dataclasses.dataclass(frozen=True)
class RigidTransform2D:
    """Rotation by `rotation` radians followed by translation (dx, dy) meters."""

    rotation: float = 0.0
    dx: float = 0.0
    dy: float = 0.0

    @classmethod
    def identity(cls) -> RigidTransform2D:
        return cls()

    @classmethod
    def from_pose(cls, x: float, y: float, theta: float) -> RigidTransform2D:
        """The transform taking robot-frame coordinates to world coordinates."""
        return cls(theta, x, y)

    @property
    def translation(self) -> tuple[float, float]:
        return (self.dx, self.dy)

    def compose(self, other: RigidTransform2D) -> RigidTransform2D:
        """self after other: (self o other)(p) = self(other(p))."""
        cos_a, sin_a = math.cos(self.rotation), math.sin(self.rotation)
        return RigidTransform2D(
            _wrap_angle(self.rotation + other.rotation),
            cos_a * other.dx - sin_a * other.dy + self.dx,
            sin_a * other.dx + cos_a * other.dy + self.dy,
        )

    def __matmul__(self, other: RigidTransform2D) -> RigidTransform2D:
        return self.compose(other)

    def inverse(self) -> RigidTransform2D:
        cos_a, sin_a = math.cos(self.rotation), math.sin(self.rotation)
        return RigidTransform2D(
            _wrap_angle(-self.rotation),
            -(cos_a * self.dx + sin_a * self.dy),
            -(-sin_a * self.dx + cos_a * self.dy),
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transforms an (N, 2) array of points."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        cos_a, sin_a = math.cos(self.rotation), math.sin(self.rotation)
        out = np.empty_like(points)
        out[:, 0] = cos_a * points[:, 0] - sin_a * points[:, 1] + self.dx
        out[:, 1] = sin_a * points[:, 0] + cos_a * points[:, 1] + self.dy
        return out

    def is_close(self, other: RigidTransform2D, tol: float = 1e-9) -> bool:
        return (
            abs(_wrap_angle(self.rotation - other.rotation)) <= tol
            and abs(self.dx - other.dx) <= tol
            and abs(self.dy - other.dy) <= tol
        )


def _wrap_angle(angle: float) -> float:
    """Wraps an angle into [-pi, pi)."""
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def wrap_angle(angle: float) -> float:
    """Public alias of the angle wrap used by transforms."""
    return _wrap_angle(angle)


def relative_transform(
    past_pose: RigidTransform2D, current_pose: RigidTransform2D
) -> RigidTransform2D:
    """Maps coordinates in the robot frame at a past pose to the current robot frame."""
    return current_pose.inverse() @ past_pose


def world_to_grid(p: tuple[float, float], spec: GridSpec) -> Cell | None:
    """
    Bins a point (meters, grid frame) into its cell.

    Returns:
        (r, c) with r = n/2 + floor(x/s), c = n/2 + floor(y/s), or None when the
        point falls outside the grid.
    """
    r = spec.center + math.floor(p[0] / spec.s + _EDGE_EPS)
    c = spec.center + math.floor(p[1] / spec.s + _EDGE_EPS)
    if not spec.in_bounds(r, c):
        return None
    return (r, c)


def world_to_grid_array(
    xy: np.ndarray, spec: GridSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorised world_to_grid.

    Args:
        xy: (N, 2) array of points in meters.
        spec: The grid.

    Returns:
        (rows, cols, inside) integer index arrays and the in-bounds mask.
    """
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    rows = spec.center + np.floor(xy[:, 0] / spec.s + _EDGE_EPS).astype(np.int64)
    cols = spec.center + np.floor(xy[:, 1] / spec.s + _EDGE_EPS).astype(np.int64)
    inside = (rows >= 0) & (rows < spec.n) & (cols >= 0) & (cols < spec.n)
    return rows, cols, inside


def grid_to_world(r: float, c: float, spec: GridSpec) -> tuple[float, float]:
    """World coordinates of the centre of cell (r, c); fractional indices allowed."""
    return ((r - spec.center + 0.5) * spec.s, (c - spec.center + 0.5) * spec.s)


def grid_to_world_array(cells: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Vectorised grid_to_world for an (N, 2) array of (r, c)."""
    cells = np.asarray(cells, dtype=np.float64).reshape(-1, 2)
    return (cells - spec.center + 0.5) * spec.s


def rasterize_segment(a: Cell, b: Cell) -> list[Cell]:
    """
    8-connected integer line from a to b, both inclusive.

    The cells are always generated from the lexicographically smaller endpoint so
    that rasterize_segment(b, a) is exactly the reverse of rasterize_segment(a, b).
    """
    if (b[0], b[1]) < (a[0], a[1]):
        return list(reversed(rasterize_segment(b, a)))

    r0, c0 = a
    r1, c1 = b
    steep = abs(c1 - c0) > abs(r1 - r0)
    if steep:
        r0, c0, r1, c1 = c0, r0, c1, r1
    swapped = r0 > r1
    if swapped:
        r0, c0, r1, c1 = r1, c1, r0, c0

    dr = r1 - r0
    dc = abs(c1 - c0)
    error = dr // 2
    cstep = 1 if c0 < c1 else -1
    c = c0
    cells: list[Cell] = []
    for r in range(r0, r1 + 1):
        cells.append((c, r) if steep else (r, c))
        error -= dc
        if error < 0:
            c += cstep
            error += dr
    if swapped:
        cells.reverse()
    return cells


def apply_transform(
    cells: Iterable[Cell], transform: RigidTransform2D, spec: GridSpec
) -> set[Cell]:
    """
    Moves cells by a rigid transform.

    Each cell centre is mapped to world coordinates, transformed and re-binned;
    cells leaving the grid are dropped and duplicates collapse.
    """
    cell_array = np.array(list(cells), dtype=np.float64).reshape(-1, 2)
    if cell_array.shape[0] == 0:
        return set()
    moved = transform.apply(grid_to_world_array(cell_array, spec))
    rows, cols, inside = world_to_grid_array(moved, spec)
    return set(zip(rows[inside].tolist(), cols[inside].tolist()))
