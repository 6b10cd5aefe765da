"""Tangent-line extrapolation of TONs into barrier segments."""

from __future__ import annotations

import dataclasses
import logging
import math

import numpy as np

from topgn.grid_geometry import Cell, rasterize_segment
from topgn.ton_detection import Ton

logger = logging.getLogger(__name__)

type Vec2 = tuple[float, float]


class DegenerateTonError(ValueError):
    """The TON centroid coincides with the lidar cell, so no light ray exists."""


@dataclasses.dataclass(frozen=True)
class ExtrapolatedSegment:
    """
    E^j: the tangent segment through the light/bounding-circle intersection.

    Coordinates are real-valued ROI cell indices; `raster` holds the integer
    cells of the segment clipped to the ROI.
    """

    ton_index: int
    p_int: Vec2
    endpoints: tuple[Vec2, Vec2]
    raster: tuple[Cell, ...]


@dataclasses.dataclass(frozen=True)
class ExtrapolationSet:
    """All extrapolated segments of a frame and their union mask."""

    segments: tuple[ExtrapolatedSegment, ...]
    mask: np.ndarray
    degenerate: int = 0

    def __post_init__(self) -> None:
        self.mask.setflags(write=False)

    @property
    def m(self) -> int:
        return self.mask.shape[0]

    @classmethod
    def empty(cls, m: int) -> ExtrapolationSet:
        return cls((), np.zeros((m, m), dtype=bool))

    @classmethod
    def from_segments(
        cls, segments: list[ExtrapolatedSegment], m: int, degenerate: int = 0
    ) -> ExtrapolationSet:
        mask = np.zeros((m, m), dtype=bool)
        for segment in segments:
            if segment.raster:
                cells = np.array(segment.raster, dtype=np.int64)
                mask[cells[:, 0], cells[:, 1]] = True
        return cls(tuple(segments), mask, degenerate)

    @classmethod
    def from_endpoints(
        cls, endpoint_pairs: list[tuple[Vec2, Vec2]], m: int, first_index: int = 0
    ) -> ExtrapolationSet:
        """Rebuilds segments from real-valued endpoints (e.g. remembered barriers)."""
        segments = []
        for index, (start, end) in enumerate(endpoint_pairs, start=first_index):
            p_int = ((start[0] + end[0]) / 2.0, (start[1] + end[1]) / 2.0)
            raster = _clipped_raster(start, end, m)
            segments.append(ExtrapolatedSegment(index, p_int, (start, end), raster))
        return cls.from_segments(segments, m)

    def merged(self, other: ExtrapolationSet) -> ExtrapolationSet:
        """Union of two sets over the same ROI."""
        if other.m != self.m:
            raise ValueError(f"Cannot merge extrapolations of sizes {self.m} and {other.m}")
        return ExtrapolationSet(
            self.segments + other.segments,
            self.mask | other.mask,
            self.degenerate + other.degenerate,
        )


def light_and_tangent(ton: Ton, m: int) -> tuple[Vec2, Vec2]:
    """
    Incident-light and tangent vectors of a TON.

    light = [r_cen - m/2, c_cen - m/2], tangent = [c_cen - m/2, -(r_cen - m/2)].
    """
    dr = ton.centroid[0] - m / 2
    dc = ton.centroid[1] - m / 2
    if dr == 0 and dc == 0:
        raise DegenerateTonError(f"TON centroid {ton.centroid} is at the lidar cell")
    return (dr, dc), (dc, -dr)


def intersect_ray_circle(ton: Ton, m: int) -> Vec2:
    """
    Near intersection of the light ray with the TON's bounding circle.

    The ray from the map centre passes through the circle centre, so the near
    intersection lies bound_radius before the centroid along the ray.
    """
    if ton.bound_radius <= 0:
        return ton.centroid
    (dr, dc), _ = light_and_tangent(ton, m)
    length = math.hypot(dr, dc)
    # Circle encloses the lidar: the ray starts inside, only the far hit exists.
    scale = ton.bound_radius if ton.bound_radius < length else -ton.bound_radius
    return (
        ton.centroid[0] - scale * dr / length,
        ton.centroid[1] - scale * dc / length,
    )


def _integerize(p: Vec2) -> Cell:
    return (math.floor(p[0] + 0.5), math.floor(p[1] + 0.5))


def _clipped_raster(start: Vec2, end: Vec2, m: int) -> tuple[Cell, ...]:
    cells = rasterize_segment(_integerize(start), _integerize(end))
    return tuple((r, c) for r, c in cells if 0 <= r < m and 0 <= c < m)


def extrapolate(
    ton: Ton, m: int, r_rob: float, s: float, ton_index: int = 0
) -> ExtrapolatedSegment:
    """
    Extends the tangent from p_int by r_rob/s cells on either side.

    Raises:
        DegenerateTonError: the TON sits on the lidar cell.
    """
    if r_rob < 0 or not s > 0:
        raise ValueError(f"Need r_rob >= 0 and s > 0, got r_rob={r_rob}, s={s}")
    _, (tr, tc) = light_and_tangent(ton, m)
    p_int = intersect_ray_circle(ton, m)
    half = r_rob / s
    norm = math.hypot(tr, tc)
    ur, uc = tr / norm, tc / norm
    start = (p_int[0] - half * ur, p_int[1] - half * uc)
    end = (p_int[0] + half * ur, p_int[1] + half * uc)
    return ExtrapolatedSegment(ton_index, p_int, (start, end), _clipped_raster(start, end, m))


def build_extrapolation_set(
    tons: list[Ton], m: int, r_rob: float, s: float
) -> ExtrapolationSet:
    """Extrapolates every TON; degenerate TONs are skipped and counted."""
    segments = []
    degenerate = 0
    for index, ton in enumerate(tons):
        try:
            segments.append(extrapolate(ton, m, r_rob, s, ton_index=index))
        except DegenerateTonError as e:
            degenerate += 1
            logger.warning("Skipping TON %d: %s", index, e)
    return ExtrapolationSet.from_segments(segments, m, degenerate)
