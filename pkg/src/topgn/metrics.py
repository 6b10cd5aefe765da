"""Detection scores between binary grids and navigation run statistics."""

from __future__ import annotations

import dataclasses
import enum
from collections.abc import Iterable

import numpy as np

from topgn.grid_geometry import Grid2D


@dataclasses.dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError(f"Confusion counts must be non-negative, got {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


@dataclasses.dataclass(frozen=True)
class Scores:
    miou: float
    pa: float
    f1: float
    mae: float
    precision: float
    recall: float


class Outcome(enum.StrEnum):
    SUCCESS = "success"
    COLLISION = "collision"
    FROZEN = "frozen"
    TIMEOUT = "timeout"


@dataclasses.dataclass(frozen=True)
class RunRecord:
    """Outcome of one closed-loop run."""

    outcome: Outcome
    time_to_goal: float
    min_clearance: float
    freeze_duration: float
    scene: str = ""
    seed: int = 0
    barrier_crossings: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "outcome", Outcome(self.outcome))


def _as_bool(grid: Grid2D | np.ndarray) -> np.ndarray:
    values = grid.values if isinstance(grid, Grid2D) else np.asarray(grid)
    return values.astype(bool)


def confusion(pred: Grid2D | np.ndarray, gt: Grid2D | np.ndarray) -> ConfusionCounts:
    """
    Per-cell counts of a predicted mask against the ground truth.

    Raises:
        ValueError: the two grids differ in shape.
    """
    p, g = _as_bool(pred), _as_bool(gt)
    if p.shape != g.shape:
        raise ValueError(f"Cannot compare grids of shapes {p.shape} and {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, fn, p.size - tp - fp - fn)


def _ratio(num: int, den: int, empty: float) -> float:
    return num / den if den else empty


def scores(c: ConfusionCounts) -> Scores:
    """
    mIoU over the foreground and background classes, pixel accuracy, F1 and MAE.

    A class whose IoU denominator is zero scores 1; F1 is 0 when precision
    plus recall is 0.
    """
    total = c.total
    if total <= 0:
        raise ValueError("Cannot score an empty comparison")
    iou_fg = _ratio(c.tp, c.tp + c.fp + c.fn, 1.0)
    iou_bg = _ratio(c.tn, c.tn + c.fp + c.fn, 1.0)
    precision = _ratio(c.tp, c.tp + c.fp, 1.0 if c.fn == 0 else 0.0)
    recall = _ratio(c.tp, c.tp + c.fn, 1.0 if c.fp == 0 else 0.0)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Scores(
        miou=(iou_fg + iou_bg) / 2.0,
        pa=(c.tp + c.tn) / total,
        f1=f1,
        mae=(c.fp + c.fn) / total,
        precision=precision,
        recall=recall,
    )


def aggregate_runs(records: Iterable[RunRecord]) -> float:
    """Success rate in percent."""
    records = list(records)
    if not records:
        raise ValueError("Cannot aggregate an empty set of runs")
    successes = sum(1 for r in records if r.outcome is Outcome.SUCCESS)
    return 100.0 * successes / len(records)
