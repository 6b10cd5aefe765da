"""Isolates transparent obstacle neighborhoods (TONs) in the ROIs."""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy import ndimage

from topgn.grid_geometry import Cell
from topgn.intensity_map import RoiView


@dataclasses.dataclass(frozen=True)
class TonCondition:
    """
    Intensity band R and suppression for the transparent-obstacle condition.

    A cell is a TON cell when its mid value lies in [r_low, r_high] and both the
    low and high values stay below r_high / suppression_ratio.
    """

    r_low: float = 100.0
    r_high: float = 130.0
    suppression_ratio: float = 3.0
    min_contour_area: int = 3
    connectivity: int = 8

    def __post_init__(self) -> None:
        if not 0 <= self.r_low <= self.r_high:
            raise ValueError(
                f"Intensity band must satisfy 0 <= r_low <= r_high, got "
                f"[{self.r_low}, {self.r_high}]"
            )
        if not self.suppression_ratio > 1:
            raise ValueError(
                f"suppression_ratio must exceed 1, got {self.suppression_ratio}"
            )
        if self.min_contour_area < 1:
            raise ValueError(
                f"min_contour_area must be at least 1, got {self.min_contour_area}"
            )
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")

    @property
    def suppression_threshold(self) -> float:
        """max(R) / suppression_ratio."""
        return self.r_high / self.suppression_ratio

    @property
    def structure(self) -> np.ndarray:
        """Neighbourhood used for component labelling."""
        if self.connectivity == 8:
            return np.ones((3, 3), dtype=bool)
        return ndimage.generate_binary_structure(2, 1)


@dataclasses.dataclass(frozen=True)
class TonMask:
    """m x m binary grid of TON cells."""

    grid: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=bool)
        if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
            raise ValueError(f"TON mask must be square, got shape {grid.shape}")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)

    @property
    def m(self) -> int:
        return self.grid.shape[0]

    def cells(self) -> set[Cell]:
        rows, cols = np.nonzero(self.grid)
        return set(zip(rows.tolist(), cols.tolist()))

    def count(self) -> int:
        return int(np.count_nonzero(self.grid))


@dataclasses.dataclass(frozen=True)
class Ton:
    """
    One transparent obstacle neighborhood.

    `cells` is a (k, 2) integer array of (r, c); the centroid is their mean and
    the bounding radius the largest centroid-to-cell distance.
    """

    cells: np.ndarray
    centroid: tuple[float, float]
    bound_radius: float

    @classmethod
    def from_cells(cls, cells: np.ndarray) -> Ton:
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        if cells.shape[0] == 0:
            raise ValueError("A TON needs at least one cell")
        centroid = cells.mean(axis=0)
        radius = float(np.max(np.hypot(*(cells - centroid).T)))
        cells.setflags(write=False)
        return cls(cells, (float(centroid[0]), float(centroid[1])), radius)

    @property
    def size(self) -> int:
        return int(self.cells.shape[0])


def apply_condition(roi: RoiView, cond: TonCondition) -> TonMask:
    """Evaluates the transparent-obstacle condition on every ROI cell."""
    threshold = cond.suppression_threshold
    grid = (
        (roi.mid >= cond.r_low)
        & (roi.mid <= cond.r_high)
        & (roi.low < threshold)
        & (roi.high < threshold)
    )
    return TonMask(grid)


def _label(mask: TonMask, cond: TonCondition) -> tuple[np.ndarray, int]:
    labels, count = ndimage.label(mask.grid, structure=cond.structure)
    return labels, int(count)


def denoise(mask: TonMask, cond: TonCondition) -> TonMask:
    """Zeroes every connected component with fewer than min_contour_area cells."""
    labels, count = _label(mask, cond)
    if count == 0:
        return mask
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    keep = sizes >= cond.min_contour_area
    keep[0] = False
    return TonMask(keep[labels])


def extract_tons(mask: TonMask, cond: TonCondition | None = None) -> list[Ton]:
    """
    One Ton per connected component.

    Ordered by size descending; ties broken by the component's smallest row,
    then smallest column.
    """
    cond = cond or TonCondition()
    labels, count = _label(mask, cond)
    if count == 0:
        return []
    tons: list[tuple[int, int, int, Ton]] = []
    for index, window in enumerate(ndimage.find_objects(labels), start=1):
        if window is None:
            continue
        rows, cols = np.nonzero(labels[window] == index)
        cells = np.column_stack((rows + window[0].start, cols + window[1].start))
        ton = Ton.from_cells(cells)
        tons.append((-ton.size, window[0].start, window[1].start, ton))
    tons.sort(key=lambda item: item[:3])
    return [item[3] for item in tons]


def detect_tons(roi: RoiView, cond: TonCondition) -> tuple[TonMask, list[Ton]]:
    """apply_condition, denoise and extract_tons in one call."""
    mask = denoise(apply_condition(roi, cond), cond)
    return mask, extract_tons(mask, cond)
