"""Bins lidar point clouds into the three-layer intensity map and extracts the ROIs."""

from __future__ import annotations

import dataclasses
import enum
import logging

import numpy as np

from topgn.grid_geometry import GridSpec, RigidTransform2D, world_to_grid_array

logger = logging.getLogger(__name__)

LOW, MID, HIGH = 0, 1, 2


class Normalization(enum.StrEnum):
    """How the intensities falling in one cell are aggregated."""

    MEAN = "mean"
    SUM = "sum"
    SUM_OVER_S2 = "sum_over_s2"


@dataclasses.dataclass(frozen=True)
class LidarPoint:
    """One lidar return in the robot frame (z measured from the ground)."""

    x: float
    y: float
    z: float
    intensity: float


@dataclasses.dataclass(frozen=True)
class PointCloudFrame:
    """
    One lidar sweep.

    `points` is an (N, 4) float array of x, y, z, intensity. `robot_pose` is the
    robot's (possibly odometry-estimated) pose in the world frame.
    """

    points: np.ndarray
    timestamp: float = 0.0
    robot_pose: RigidTransform2D = RigidTransform2D()

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)
        object.__setattr__(self, "points", points)

    @classmethod
    def from_points(
        cls,
        points: list[LidarPoint],
        timestamp: float = 0.0,
        robot_pose: RigidTransform2D = RigidTransform2D(),
    ) -> PointCloudFrame:
        array = np.array(
            [(p.x, p.y, p.z, p.intensity) for p in points], dtype=np.float64
        ).reshape(-1, 4)
        return cls(array, timestamp, robot_pose)

    def __len__(self) -> int:
        return self.points.shape[0]

    def lidar_points(self) -> list[LidarPoint]:
        return [LidarPoint(*row) for row in self.points.tolist()]


@dataclasses.dataclass(frozen=True)
class LayerConfig:
    """Height intervals of the three layers and the intensity scale."""

    h_lid: float = 0.5
    delta: float = 0.2
    i_max: float = 255.0
    normalization: Normalization = Normalization.MEAN

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ValueError(f"Layer half-height delta must be positive, got {self.delta}")
        if not self.h_lid - self.delta > 0:
            raise ValueError(
                f"h_lid - delta must be positive (got h_lid={self.h_lid}, "
                f"delta={self.delta}); the low layer would be empty"
            )
        if not self.i_max > 0:
            raise ValueError(f"i_max must be positive, got {self.i_max}")
        object.__setattr__(self, "normalization", Normalization(self.normalization))

    def layer_of(self, z: np.ndarray) -> np.ndarray:
        """
        Layer index per height: 0 low, 1 mid, 2 high, -1 none.

        A point on an interval boundary belongs to the lower layer:
        low (0, h-D], mid (h-D, h+D], high (h+D, h+2D).
        """
        z = np.asarray(z, dtype=np.float64)
        lower = self.h_lid - self.delta
        upper = self.h_lid + self.delta
        top = self.h_lid + 2.0 * self.delta
        layer = np.full(z.shape, -1, dtype=np.int64)
        layer[(z > 0.0) & (z <= lower)] = LOW
        layer[(z > lower) & (z <= upper)] = MID
        layer[(z > upper) & (z < top)] = HIGH
        return layer


@dataclasses.dataclass(frozen=True)
class RoiView:
    """Read-only centred m x m windows of the three layers."""

    low: np.ndarray
    mid: np.ndarray
    high: np.ndarray
    m: int
    offset: int
    s: float = 0.05

    @property
    def spec(self) -> GridSpec:
        """The ROI is itself a grid centred on the lidar."""
        return GridSpec(self.m, self.s)


@dataclasses.dataclass(frozen=True)
class MultiLayerIntensityMap:
    """Low, mid and high n x n layers sharing one GridSpec."""

    low: np.ndarray
    mid: np.ndarray
    high: np.ndarray
    spec: GridSpec
    config: LayerConfig
    skipped: int = 0

    def __post_init__(self) -> None:
        for layer in (self.low, self.mid, self.high):
            if layer.shape != (self.spec.n, self.spec.n):
                raise ValueError(
                    f"Layer shape {layer.shape} does not match grid n={self.spec.n}"
                )
            layer.setflags(write=False)

    def layer_sum(self) -> np.ndarray:
        """low + mid + high."""
        return self.low + self.mid + self.high


def build_layers(
    frame: PointCloudFrame, spec: GridSpec, config: LayerConfig
) -> MultiLayerIntensityMap:
    """
    Bins a frame into the three-layer intensity map.

    Non-finite points and intensities outside [0, i_max] are skipped and
    counted. Within one cell the summation order is canonical (points sorted
    by cell, then intensity), which makes the result independent of the order
    of frame.points.

    Args:
        frame: The point cloud.
        spec: Grid geometry.
        config: Layer heights and aggregation mode.

    Returns:
        The three layers; empty cells hold 0.
    """
    points = frame.points
    valid = np.all(np.isfinite(points), axis=1)
    valid[valid] = (points[valid, 3] >= 0.0) & (points[valid, 3] <= config.i_max)
    skipped = int(points.shape[0] - np.count_nonzero(valid))
    if skipped:
        logger.warning("Skipped %d invalid points at t=%.3f", skipped, frame.timestamp)
    points = points[valid]

    layer = config.layer_of(points[:, 2])
    rows, cols, inside = world_to_grid_array(points[:, :2], spec)
    keep = inside & (layer >= 0)
    n_cells = spec.n * spec.n
    flat = layer[keep] * n_cells + rows[keep] * spec.n + cols[keep]
    intensity = points[keep, 3]

    order = np.lexsort((intensity, flat))
    flat = flat[order]
    intensity = intensity[order]

    sums = np.bincount(flat, weights=intensity, minlength=3 * n_cells)
    match config.normalization:
        case Normalization.MEAN:
            counts = np.bincount(flat, minlength=3 * n_cells)
            values = np.divide(
                sums, counts, out=np.zeros_like(sums), where=counts > 0
            )
        case Normalization.SUM:
            values = sums
        case Normalization.SUM_OVER_S2:
            values = sums / (spec.s * spec.s)

    values = values.reshape(3, spec.n, spec.n)
    return MultiLayerIntensityMap(
        low=values[LOW].copy(),
        mid=values[MID].copy(),
        high=values[HIGH].copy(),
        spec=spec,
        config=config,
        skipped=skipped,
    )


def extract_roi(layers: MultiLayerIntensityMap, m: int) -> RoiView:
    """
    Centred m x m windows of the three layers.

    RoiView(r, c) equals the parent layer at (r + offset, c + offset) with
    offset = n/2 - m/2.
    """
    n = layers.spec.n
    if m <= 0 or m % 2 != 0:
        raise ValueError(f"ROI side m must be positive and even, got {m}")
    if m >= n:
        raise ValueError(f"ROI side m={m} must be smaller than grid side n={n}")
    offset = n // 2 - m // 2
    window = np.s_[offset : offset + m, offset : offset + m]
    return RoiView(
        low=layers.low[window],
        mid=layers.mid[window],
        high=layers.high[window],
        m=m,
        offset=offset,
        s=layers.spec.s,
    )
