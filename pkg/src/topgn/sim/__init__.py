"""Deterministic simulator: world, lidar and robot motion."""

from topgn.sim.lidar import LIDAR_PRESETS, LidarModel, cast_beam, lidar_preset, scan, scan_detailed
from topgn.sim.motion import OdometryModel, RobotState, step
from topgn.sim.world import (
    MATERIAL_PRESETS,
    Arc,
    MaterialKind,
    MaterialModel,
    MovingDisc,
    Polyline,
    World,
    material_preset,
)

__all__ = [
    "LIDAR_PRESETS",
    "MATERIAL_PRESETS",
    "Arc",
    "LidarModel",
    "MaterialKind",
    "MaterialModel",
    "MovingDisc",
    "OdometryModel",
    "Polyline",
    "RobotState",
    "World",
    "cast_beam",
    "lidar_preset",
    "material_preset",
    "scan",
    "scan_detailed",
    "step",
]
