"""Dynamic-window velocity planner over the navigation grid."""

from __future__ import annotations

import dataclasses
import logging
import math

import numpy as np

from topgn.grid_geometry import Cell, GridSpec, world_to_grid_array
from topgn.nav_mapping import NavMap

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class RobotConfig:
    """
    Robot footprint and kinematic limits.

    d_thresh defaults to 2 * r_rob + 0.5 when left unset.
    """

    r_rob: float = 0.3
    h_rob: float = 0.5
    v_max: float = 0.5
    omega_max: float = 1.0
    a_v: float = 0.5
    a_omega: float = 1.0
    d_thresh: float | None = None

    def __post_init__(self) -> None:
        if self.d_thresh is None:
            object.__setattr__(self, "d_thresh", 2.0 * self.r_rob + 0.5)
        for name in ("r_rob", "h_rob", "v_max", "omega_max", "a_v", "a_omega", "d_thresh"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"RobotConfig.{name} must be positive, got {value}")


@dataclasses.dataclass(frozen=True)
class VelocityPair:
    v: float
    omega: float


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """
    Rolled-out motion of one velocity pair, starting at the robot origin.

    `states` is a (K+1, 3) array of (x, y, theta) in the robot frame; `cells`
    holds the in-bounds grid cells of those positions with repeats removed.
    """

    cells: tuple[Cell, ...]
    states: np.ndarray
    horizon: float

    @property
    def end(self) -> tuple[float, float, float]:
        x, y, theta = self.states[-1]
        return float(x), float(y), float(theta)


@dataclasses.dataclass(frozen=True)
class PlannerWeights:
    """gamma_1 (heading), gamma_2 (obstacle) and gamma_3 (velocity)."""

    heading: float = 1.0
    obstacle: float = 1.0
    velocity: float = 1.0

    def __post_init__(self) -> None:
        terms = (self.heading, self.obstacle, self.velocity)
        if any(w < 0 for w in terms) or not any(w > 0 for w in terms):
            raise ValueError(f"Planner weights must be non-negative and not all zero, got {terms}")

    def normalized(self) -> np.ndarray:
        """Weights scaled to sum to one, which makes the argmin scale-free."""
        terms = np.array([self.heading, self.obstacle, self.velocity], dtype=np.float64)
        return terms / terms.sum()


@dataclasses.dataclass(frozen=True)
class SamplingConfig:
    n_v: int = 11
    n_omega: int = 21
    window_dt: float = 0.2
    horizon: float = 2.0
    dt: float = 0.1

    def __post_init__(self) -> None:
        if self.n_v < 1 or self.n_omega < 1:
            raise ValueError(f"Need at least one sample per axis, got ({self.n_v}, {self.n_omega})")
        if not self.window_dt > 0:
            raise ValueError(f"window_dt must be positive, got {self.window_dt}")
        if not self.horizon >= self.dt > 0:
            raise ValueError(f"Need horizon >= dt > 0, got horizon={self.horizon}, dt={self.dt}")

    @property
    def steps(self) -> int:
        return max(1, round(self.horizon / self.dt))


def _samples(lo: float, hi: float, count: int) -> np.ndarray:
    if count == 1:
        return np.array([(lo + hi) / 2.0])
    return np.linspace(lo, hi, count)


def dynamic_window(
    current: VelocityPair, cfg: RobotConfig, dt: float, samples: tuple[int, int]
) -> list[VelocityPair]:
    """
    Uniform n_v x n_omega grid over V_s intersected with V_d.

    V_d = [v +- a_v*dt] x [omega +- a_omega*dt]; pairs are ordered by v, then omega.
    """
    if not dt > 0:
        raise ValueError(f"Window time step must be positive, got {dt}")
    n_v, n_omega = samples
    if n_v < 1 or n_omega < 1:
        raise ValueError(f"Need at least one sample per axis, got {samples}")
    v_lo = max(0.0, current.v - cfg.a_v * dt)
    v_hi = min(cfg.v_max, current.v + cfg.a_v * dt)
    w_lo = max(-cfg.omega_max, current.omega - cfg.a_omega * dt)
    w_hi = min(cfg.omega_max, current.omega + cfg.a_omega * dt)
    if v_lo > v_hi:
        v_lo = v_hi = min(max(current.v, 0.0), cfg.v_max)
    if w_lo > w_hi:
        w_lo = w_hi = min(max(current.omega, -cfg.omega_max), cfg.omega_max)
    return [
        VelocityPair(float(v), float(w))
        for v in _samples(v_lo, v_hi, n_v)
        for w in _samples(w_lo, w_hi, n_omega)
    ]


def rollout_states(
    v: np.ndarray, omega: np.ndarray, steps: int, dt: float
) -> np.ndarray:
    """
    Unicycle integration of many constant commands from the origin.

    theta += omega*dt, then x += v*cos(theta)*dt, y += v*sin(theta)*dt.

    Returns:
        (C, steps + 1, 3) array; index 0 is the origin pose.
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1, 1)
    omega = np.asarray(omega, dtype=np.float64).reshape(-1, 1)
    k = np.arange(1, steps + 1, dtype=np.float64)
    theta = omega * dt * k
    x = np.cumsum(v * np.cos(theta) * dt, axis=1)
    y = np.cumsum(v * np.sin(theta) * dt, axis=1)
    states = np.zeros((v.shape[0], steps + 1, 3))
    states[:, 1:, 0] = x
    states[:, 1:, 1] = y
    states[:, 1:, 2] = theta
    return states


def _cells_of(states: np.ndarray, spec: GridSpec) -> tuple[Cell, ...]:
    rows, cols, inside = world_to_grid_array(states[:, :2], spec)
    return tuple(dict.fromkeys(zip(rows[inside].tolist(), cols[inside].tolist())))


def rollout(vw: VelocityPair, horizon: float, dt: float, spec: GridSpec) -> Trajectory:
    """Trajectory of one velocity pair over the horizon."""
    if not horizon >= dt > 0:
        raise ValueError(f"Need horizon >= dt > 0, got horizon={horizon}, dt={dt}")
    steps = max(1, round(horizon / dt))
    states = rollout_states(np.array([vw.v]), np.array([vw.omega]), steps, dt)[0]
    return Trajectory(_cells_of(states, spec), states, horizon)


def _orientation(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
        b[..., 1] - a[..., 1]
    ) * (c[..., 0] - a[..., 0])


def segments_intersect(
    p1: np.ndarray, p2: np.ndarray, q1: np.ndarray, q2: np.ndarray
) -> np.ndarray:
    """
    Broadcasting closed-segment intersection test (touching counts).

    All arguments are (..., 2) arrays of endpoints.
    """
    d1 = _orientation(q1, q2, p1)
    d2 = _orientation(q1, q2, p2)
    d3 = _orientation(p1, p2, q1)
    d4 = _orientation(p1, p2, q2)
    straddle = (d1 * d2 <= 0) & (d3 * d4 <= 0)
    collinear = (d1 == 0) & (d2 == 0)
    overlap = np.ones_like(straddle)
    for axis in (0, 1):
        overlap &= np.maximum(p1[..., axis], p2[..., axis]) >= np.minimum(
            q1[..., axis], q2[..., axis]
        )
        overlap &= np.maximum(q1[..., axis], q2[..., axis]) >= np.minimum(
            p1[..., axis], p2[..., axis]
        )
    return straddle & (~collinear | overlap)


def _crosses_segments(states: np.ndarray, nav: NavMap) -> np.ndarray:
    """Per candidate: does the rolled-out polyline meet any extrapolated segment?"""
    segments = nav.segments_in_grid()
    if not segments:
        return np.zeros(states.shape[0], dtype=bool)
    spec = nav.spec
    # Continuous grid indices with cell centres on integers.
    points = states[..., :2] / spec.s + spec.center - 0.5
    p1 = points[:, :-1, None, :]
    p2 = points[:, 1:, None, :]
    seg = np.array(segments, dtype=np.float64)
    q1 = seg[None, None, :, 0, :]
    q2 = seg[None, None, :, 1, :]
    return segments_intersect(p1, p2, q1, q2).any(axis=(1, 2))


def _clearance_of(states: np.ndarray, nav: NavMap) -> np.ndarray:
    """Minimum clearance (cells) along each candidate; out-of-bounds cells are free."""
    spec = nav.spec
    flat = states[..., :2].reshape(-1, 2)
    rows, cols, inside = world_to_grid_array(flat, spec)
    field = np.full(flat.shape[0], np.inf)
    field[inside] = nav.clearance[rows[inside], cols[inside]]
    return field.reshape(states.shape[:2]).min(axis=1)


def clearance(traj: Trajectory, nav: NavMap) -> float:
    """Distance in cells from the trajectory to the nearest obstacle cell."""
    return float(_clearance_of(traj.states[None], nav)[0])


def obstacle_cost(traj: Trajectory, nav: NavMap, inflation_cells: float = 0.0) -> float:
    """
    1/d for the trajectory's clearance d in cells.

    Returns math.inf (collision) when d <= inflation_cells or the trajectory
    crosses an extrapolated segment; 0 when there are no obstacles at all.
    """
    d = clearance(traj, nav)
    if d <= inflation_cells or _crosses_segments(traj.states[None], nav)[0]:
        return math.inf
    return 0.0 if math.isinf(d) else 1.0 / d


@dataclasses.dataclass(frozen=True)
class CandidateScores:
    """Per-candidate planner terms, parallel to the candidate list."""

    clearance: np.ndarray
    obstacle: np.ndarray
    heading: np.ndarray
    velocity: np.ndarray
    collision: np.ndarray
    admissible: np.ndarray
    q: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return ~self.collision & self.admissible


def _minmax(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    if not valid.any():
        return out
    lo = values[valid].min()
    hi = values[valid].max()
    if hi > lo:
        out[valid] = (values[valid] - lo) / (hi - lo)
    return out


def evaluate_candidates(
    candidates: list[VelocityPair],
    nav: NavMap,
    goal: tuple[float, float],
    weights: PlannerWeights,
    robot: RobotConfig,
    sampling: SamplingConfig,
    inflation_cells: float = 0.0,
) -> CandidateScores:
    """
    Rolls out every candidate and computes the terms of Q.

    head is the heading error to the goal at the trajectory end over pi, obs
    the inverse clearance and vel the speed deficit (v_max - v) / v_max. Each
    term is min-max normalised over the valid candidates before weighting.
    """
    if not candidates:
        raise ValueError("Cannot evaluate an empty candidate set")
    v = np.array([c.v for c in candidates], dtype=np.float64)
    omega = np.array([c.omega for c in candidates], dtype=np.float64)
    states = rollout_states(v, omega, sampling.steps, sampling.dt)

    d = _clearance_of(states, nav)
    collision = (d <= inflation_cells) | _crosses_segments(states, nav)
    with np.errstate(divide="ignore"):
        obs = np.where(np.isinf(d), 0.0, 1.0 / d)
    obs[collision] = np.inf

    stopping = np.sqrt(2.0 * robot.a_v * np.maximum(d - inflation_cells, 0.0) * nav.spec.s)
    admissible = v <= stopping

    end = states[:, -1, :]
    bearing = np.arctan2(goal[1] - end[:, 1], goal[0] - end[:, 0])
    error = (bearing - end[:, 2] + np.pi) % (2.0 * np.pi) - np.pi
    head = np.abs(error) / np.pi
    vel = (robot.v_max - v) / robot.v_max

    valid = ~collision & admissible
    gamma = weights.normalized()
    q = (
        gamma[0] * _minmax(head, valid)
        + gamma[1] * _minmax(np.where(valid, obs, 0.0), valid)
        + gamma[2] * _minmax(vel, valid)
    )
    q[~valid] = np.inf
    return CandidateScores(d, obs, head, vel, collision, admissible, q)


def select_velocity(
    candidates: list[VelocityPair],
    nav: NavMap,
    goal: tuple[float, float],
    weights: PlannerWeights,
    robot: RobotConfig,
    sampling: SamplingConfig,
    inflation_cells: float = 0.0,
) -> VelocityPair | None:
    """
    argmin Q over the valid candidates, lowest index on ties.

    Returns:
        The selected pair, or None when every candidate collides or is
        inadmissible (the robot is frozen).
    """
    scores = evaluate_candidates(
        candidates, nav, goal, weights, robot, sampling, inflation_cells
    )
    if not scores.valid.any():
        return None
    return candidates[int(np.argmin(scores.q))]


class Planner:
    """
    Holds the commanded velocity between frames and plans the next one.

    The collision inflation defaults to the robot radius in cells.
    """

    def __init__(
        self,
        robot: RobotConfig,
        weights: PlannerWeights,
        sampling: SamplingConfig,
        inflation_cells: float | None = None,
    ):
        self.robot = robot
        self.weights = weights
        self.sampling = sampling
        self.inflation_cells = inflation_cells
        self.current = VelocityPair(0.0, 0.0)

    def reset(self) -> None:
        self.current = VelocityPair(0.0, 0.0)

    def plan(self, nav: NavMap, goal: tuple[float, float]) -> VelocityPair | None:
        """Selects the next command; a frozen planner commands zero velocity."""
        inflation = self.inflation_cells
        if inflation is None:
            inflation = self.robot.r_rob / nav.spec.s
        candidates = dynamic_window(
            self.current,
            self.robot,
            self.sampling.window_dt,
            (self.sampling.n_v, self.sampling.n_omega),
        )
        chosen = select_velocity(
            candidates, nav, goal, self.weights, self.robot, self.sampling, inflation
        )
        if chosen is None:
            logger.info("Planner frozen: no admissible candidate out of %d", len(candidates))
            self.current = VelocityPair(0.0, 0.0)
        else:
            self.current = chosen
        return chosen
