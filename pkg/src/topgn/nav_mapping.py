"""Navigation grid composition, TON history and the accumulated transparent map."""

from __future__ import annotations

import collections
import dataclasses
import functools
import logging

import numpy as np
from scipy import ndimage

from topgn.extrapolation import ExtrapolationSet, Vec2
from topgn.grid_geometry import (
    Cell,
    Grid2D,
    GridSpec,
    RigidTransform2D,
    apply_transform,
    relative_transform,
)
from topgn.intensity_map import MultiLayerIntensityMap
from topgn.ton_detection import TonMask

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class NavConfig:
    """Weights and thresholds for composing the navigation and mapping grids."""

    occupancy_threshold: float = 50.0
    extrap_weight: float = 255.0
    mapping_weight: float = 255.0
    segment_memory: int = 30

    def __post_init__(self) -> None:
        if self.occupancy_threshold < 0:
            raise ValueError(
                f"occupancy_threshold must be non-negative, got {self.occupancy_threshold}"
            )
        if self.extrap_weight <= self.occupancy_threshold:
            raise ValueError(
                f"extrap_weight {self.extrap_weight} must exceed occupancy_threshold "
                f"{self.occupancy_threshold}"
            )
        if self.mapping_weight < 0:
            raise ValueError(f"mapping_weight must be non-negative, got {self.mapping_weight}")
        if self.segment_memory < 0:
            raise ValueError(f"segment_memory must be non-negative, got {self.segment_memory}")


@dataclasses.dataclass(frozen=True)
class NavMap:
    """
    Layer sum plus extrapolated segments in the centred window.

    `offset` is the row/column of ROI cell (0, 0) in the n x n grid.
    """

    grid: Grid2D
    extrap: ExtrapolationSet
    occupancy_threshold: float
    offset: int

    @property
    def spec(self) -> GridSpec:
        return self.grid.spec

    @functools.cached_property
    def obstacle_mask(self) -> np.ndarray:
        mask = self.grid.values > self.occupancy_threshold
        mask.setflags(write=False)
        return mask

    @property
    def obstacle_cells(self) -> set[Cell]:
        """Obstacle cells above the occupancy threshold."""
        rows, cols = np.nonzero(self.obstacle_mask)
        return set(zip(rows.tolist(), cols.tolist()))

    @functools.cached_property
    def clearance(self) -> np.ndarray:
        """Euclidean distance in cells from every cell to the nearest obstacle cell."""
        if not self.obstacle_mask.any():
            return np.full(self.obstacle_mask.shape, np.inf)
        distance = ndimage.distance_transform_edt(~self.obstacle_mask)
        distance.setflags(write=False)
        return distance

    def segments_in_grid(self) -> list[tuple[Vec2, Vec2]]:
        """Real-valued segment endpoints shifted from ROI to grid indices."""
        shift = float(self.offset)
        return [
            ((a[0] + shift, a[1] + shift), (b[0] + shift, b[1] + shift))
            for a, b in (segment.endpoints for segment in self.extrap.segments)
        ]


def _window(n: int, m: int) -> tuple[int, tuple[slice, slice]]:
    if m >= n:
        raise ValueError(f"ROI side m={m} must be smaller than grid side n={n}")
    offset = n // 2 - m // 2
    return offset, np.s_[offset : offset + m, offset : offset + m]


def compose_nav_map(
    layers: MultiLayerIntensityMap,
    extrap: ExtrapolationSet,
    occupancy_threshold: float = 50.0,
    extrap_weight: float = 255.0,
) -> NavMap:
    """
    Adds the extrapolation mask into the centred window of low + mid + high.

    Args:
        layers: Current three-layer map.
        extrap: The frame's extrapolated segments (ROI coordinates).
        occupancy_threshold: Cells strictly above this are obstacles.
        extrap_weight: Value added per extrapolated cell.
    """
    offset, window = _window(layers.spec.n, extrap.m)
    values = layers.layer_sum()
    values[window] += extrap_weight * extrap.mask
    return NavMap(Grid2D(layers.spec, values), extrap, occupancy_threshold, offset)


@dataclasses.dataclass(frozen=True)
class HistoryEntry:
    mask: TonMask
    pose: RigidTransform2D
    timestamp: float


class TonHistory:
    """Ring buffer of the last t_past TON masks with the poses they were seen from."""

    def __init__(self, t_past: int = 10):
        if t_past < 0:
            raise ValueError(f"t_past must be non-negative, got {t_past}")
        self.t_past = t_past
        self._entries: collections.deque[HistoryEntry] = collections.deque(maxlen=t_past)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def check_timestamp(self, timestamp: float) -> None:
        """Raises ValueError unless `timestamp` is newer than the latest entry."""
        if self._entries and timestamp <= self._entries[-1].timestamp:
            raise ValueError(
                f"History timestamps must increase: {timestamp} after "
                f"{self._entries[-1].timestamp}"
            )

    def push(self, mask: TonMask, pose: RigidTransform2D, timestamp: float) -> None:
        """Appends a mask; timestamps must strictly increase."""
        self.check_timestamp(timestamp)
        if self.t_past:
            self._entries.append(HistoryEntry(mask, pose, timestamp))

    def clear(self) -> None:
        self._entries.clear()


def transformed_history_cells(
    history: TonHistory, current_pose: RigidTransform2D, roi_spec: GridSpec
) -> list[set[Cell]]:
    """Every history mask re-binned into the current frame, newest last."""
    return [
        apply_transform(
            entry.mask.cells(), relative_transform(entry.pose, current_pose), roi_spec
        )
        for entry in history
    ]


def accumulate_mapping(
    current: MultiLayerIntensityMap,
    history: TonHistory,
    current_pose: RigidTransform2D,
    m: int,
    mapping_weight: float = 255.0,
) -> Grid2D:
    """
    Mapping grid: the current layer sum with every transformed past TON mask added
    into the mid layer's window.
    """
    offset, _ = _window(current.spec.n, m)
    mid = current.mid.copy()
    roi_spec = GridSpec(m, current.spec.s)
    for cells in transformed_history_cells(history, current_pose, roi_spec):
        if not cells:
            continue
        index = np.array(sorted(cells), dtype=np.int64) + offset
        mid[index[:, 0], index[:, 1]] += mapping_weight
    return Grid2D(current.spec, current.low + mid + current.high)


def accumulate_ton_mask(
    current: TonMask, history: TonHistory, current_pose: RigidTransform2D, s: float
) -> TonMask:
    """Binary union of the current TON mask and every transformed past mask."""
    grid = current.grid.copy()
    for cells in transformed_history_cells(history, current_pose, GridSpec(current.m, s)):
        if cells:
            index = np.array(sorted(cells), dtype=np.int64)
            grid[index[:, 0], index[:, 1]] = True
    return TonMask(grid)


class SegmentMemory:
    """
    Extrapolated segments of recent frames, kept in world coordinates.

    Recalled segments are re-projected into the current robot frame so that a
    barrier stays in place after its TON leaves the detection band.
    """

    def __init__(self, max_frames: int = 30):
        if max_frames < 0:
            raise ValueError(f"max_frames must be non-negative, got {max_frames}")
        self.max_frames = max_frames
        self._frames: collections.deque[np.ndarray] = collections.deque(maxlen=max_frames)

    def __len__(self) -> int:
        return sum(frame.shape[0] for frame in self._frames)

    def remember(
        self, extrap: ExtrapolationSet, pose: RigidTransform2D, s: float
    ) -> None:
        """Stores the segments of one frame seen from `pose`."""
        if not self.max_frames:
            return
        endpoints = np.array(
            [segment.endpoints for segment in extrap.segments], dtype=np.float64
        ).reshape(-1, 2, 2)
        # Real-valued ROI indices to robot-frame meters (cell centres at idx + 0.5).
        robot_xy = (endpoints.reshape(-1, 2) - extrap.m / 2 + 0.5) * s
        self._frames.append(pose.apply(robot_xy).reshape(-1, 2, 2))

    def recall(self, pose: RigidTransform2D, m: int, s: float) -> ExtrapolationSet:
        """Remembered segments in the ROI frame of `pose`."""
        if not self._frames:
            return ExtrapolationSet.empty(m)
        world = np.concatenate(list(self._frames), axis=0)
        robot_xy = pose.inverse().apply(world.reshape(-1, 2))
        index = (robot_xy / s + m / 2 - 0.5).reshape(-1, 2, 2)
        pairs = [
            ((float(a[0]), float(a[1])), (float(b[0]), float(b[1]))) for a, b in index
        ]
        return ExtrapolationSet.from_endpoints(pairs, m, first_index=-len(pairs))

    def clear(self) -> None:
        self._frames.clear()
