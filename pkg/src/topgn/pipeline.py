"""Per-frame perception and planning: layers, TONs, barriers, nav map and mapping."""

from __future__ import annotations

import dataclasses
import logging

import numpy as np

from topgn.config import PipelineConfig
from topgn.extrapolation import ExtrapolationSet, build_extrapolation_set
from topgn.grid_geometry import Grid2D, RigidTransform2D
from topgn.intensity_map import (
    MultiLayerIntensityMap,
    PointCloudFrame,
    RoiView,
    build_layers,
    extract_roi,
)
from topgn.nav_mapping import (
    NavMap,
    SegmentMemory,
    TonHistory,
    accumulate_mapping,
    accumulate_ton_mask,
    compose_nav_map,
)
from topgn.planner import Planner, VelocityPair
from topgn.ton_detection import Ton, TonMask, detect_tons

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class FrameResult:
    """
    Everything computed for one frame.

    `extrap` holds only this frame's segments; `nav.extrap` also contains the
    recalled ones. `transparent` is the accumulated binary TON map.
    """

    timestamp: float
    pose: RigidTransform2D
    layers: MultiLayerIntensityMap
    roi: RoiView
    mask: TonMask
    tons: list[Ton]
    extrap: ExtrapolationSet
    nav: NavMap
    mapping: Grid2D
    transparent: TonMask


def goal_in_robot_frame(pose: RigidTransform2D, goal: tuple[float, float]) -> tuple[float, float]:
    """World goal expressed in the robot frame of `pose`."""
    x, y = pose.inverse().apply(np.array([goal], dtype=np.float64))[0]
    return float(x), float(y)


class Pipeline:
    """
    Stateful frame processor.

    Keeps the TON history for mapping, the segment memory for barriers and the
    planner's current velocity; `reset` clears all three.
    """

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.history = TonHistory(config.t_past)
        self.memory = SegmentMemory(config.nav.segment_memory)
        self.planner = Planner(config.robot, config.weights, config.sampling)

    def reset(self) -> None:
        self.history.clear()
        self.memory.clear()
        self.planner.reset()

    def process(self, frame: PointCloudFrame, pose: RigidTransform2D | None = None) -> FrameResult:
        """
        Runs perception on one frame.

        Args:
            frame: The sweep, in the robot frame.
            pose: Pose estimate to register the frame with; defaults to
                frame.robot_pose.
        """
        cfg = self.config
        pose = frame.robot_pose if pose is None else pose
        m, s = cfg.roi_m, cfg.grid.s
        self.history.check_timestamp(frame.timestamp)

        layers = build_layers(frame, cfg.grid, cfg.layers)
        roi = extract_roi(layers, m)
        mask, tons = detect_tons(roi, cfg.ton)
        extrap = build_extrapolation_set(tons, m, cfg.robot.r_rob, s)
        barriers = extrap.merged(self.memory.recall(pose, m, s))
        nav = compose_nav_map(
            layers, barriers, cfg.nav.occupancy_threshold, cfg.nav.extrap_weight
        )
        mapping = accumulate_mapping(layers, self.history, pose, m, cfg.nav.mapping_weight)
        transparent = accumulate_ton_mask(mask, self.history, pose, s)

        self.memory.remember(extrap, pose, s)
        self.history.push(mask, pose, frame.timestamp)
        logger.debug(
            "t=%.3f: %d points, %d TONs, %d segments (%d recalled)",
            frame.timestamp,
            len(frame),
            len(tons),
            len(extrap.segments),
            len(barriers.segments) - len(extrap.segments),
        )
        return FrameResult(
            frame.timestamp, pose, layers, roi, mask, tons, extrap, nav, mapping, transparent
        )

    def plan(self, result: FrameResult, goal: tuple[float, float]) -> VelocityPair | None:
        """Next command toward `goal` (robot frame, meters); None when frozen."""
        return self.planner.plan(result.nav, goal)
