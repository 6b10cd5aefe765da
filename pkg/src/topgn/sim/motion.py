"""Differential-drive robot motion with collision freezing and odometry noise."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from topgn.grid_geometry import RigidTransform2D, wrap_angle
from topgn.planner import RobotConfig, VelocityPair
from topgn.sim.world import World

_BISECTIONS = 30


@dataclasses.dataclass(frozen=True)
class RobotState:
    """Pose (x, y, theta) in the world, the commanded velocity and the sim clock."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    velocity: VelocityPair = VelocityPair(0.0, 0.0)
    clock: float = 0.0

    @property
    def pose(self) -> RigidTransform2D:
        return RigidTransform2D.from_pose(self.x, self.y, self.theta)


def _advance(state: RobotState, cmd: VelocityPair, h: float) -> RobotState:
    theta = state.theta + cmd.omega * h
    return RobotState(
        state.x + cmd.v * math.cos(theta) * h,
        state.y + cmd.v * math.sin(theta) * h,
        wrap_angle(theta),
        cmd,
        state.clock + h,
    )


def _clamp(cmd: VelocityPair, cfg: RobotConfig) -> VelocityPair:
    return VelocityPair(
        min(max(cmd.v, 0.0), cfg.v_max),
        min(max(cmd.omega, -cfg.omega_max), cfg.omega_max),
    )


def step(
    robot: RobotState,
    cmd: VelocityPair,
    dt: float,
    world: World,
    cfg: RobotConfig,
    substeps: int = 10,
) -> tuple[RobotState, bool]:
    """
    Integrates a command for dt seconds in substeps.

    The command is clamped to the robot's limits. When the robot disc touches
    an obstacle footprint the state is frozen at the contact point (found by
    bisection) and the collision flag is set.
    """
    if not dt > 0:
        raise ValueError(f"Time step must be positive, got {dt}")
    cmd = _clamp(cmd, cfg)
    if world.min_distance((robot.x, robot.y), robot.clock) <= cfg.r_rob:
        return dataclasses.replace(robot, velocity=VelocityPair(0.0, 0.0)), True

    h = dt / substeps
    state = robot
    for _ in range(substeps):
        candidate = _advance(state, cmd, h)
        if world.min_distance((candidate.x, candidate.y), candidate.clock) > cfg.r_rob:
            state = candidate
            continue
        lo, hi = 0.0, h
        for _ in range(_BISECTIONS):
            mid = (lo + hi) / 2.0
            trial = _advance(state, cmd, mid)
            if world.min_distance((trial.x, trial.y), trial.clock) > cfg.r_rob:
                lo = mid
            else:
                hi = mid
        contact = _advance(state, cmd, hi)
        stopped = dataclasses.replace(
            contact, velocity=VelocityPair(0.0, 0.0), clock=robot.clock + dt
        )
        return stopped, True
    return state, False


class OdometryModel:
    """
    Dead-reckoned pose estimate.

    Each true motion increment, expressed in the previous robot frame, is
    perturbed by Gaussian noise before being composed onto the estimate.
    """

    def __init__(self, std_xy: float = 0.0, std_theta: float = 0.0, seed: int = 0):
        if std_xy < 0 or std_theta < 0:
            raise ValueError(f"Noise std must be non-negative, got ({std_xy}, {std_theta})")
        self.std_xy = std_xy
        self.std_theta = std_theta
        self.rng = np.random.default_rng(seed)
        self.estimate: RigidTransform2D | None = None
        self._last_true: RigidTransform2D | None = None

    def update(self, true_pose: RigidTransform2D) -> RigidTransform2D:
        """Feeds the next true pose and returns the estimated one."""
        if self._last_true is None or self.estimate is None:
            self.estimate = true_pose
        else:
            delta = self._last_true.inverse() @ true_pose
            dx, dy, dtheta = delta.dx, delta.dy, delta.rotation
            if self.std_xy or self.std_theta:
                noise = self.rng.normal(0.0, 1.0, 3) * (self.std_xy, self.std_xy, self.std_theta)
                dx, dy, dtheta = dx + noise[0], dy + noise[1], dtheta + noise[2]
            self.estimate = self.estimate @ RigidTransform2D(wrap_angle(dtheta), dx, dy)
        self._last_true = true_pose
        return self.estimate
