"""
Closed-loop scenarios, detection replays, log mapping and throughput benchmarks.
"""

from __future__ import annotations

import collections
import contextlib
import dataclasses
import enum
import json
import logging
import math
import pathlib
import platform
import time
from collections.abc import Iterable, Iterator
from importlib import metadata
from typing import Any

import numpy as np
from scipy import ndimage
from tqdm import tqdm

from topgn.config import PipelineConfig, config_to_dict, load_profile
from topgn.export import TrajectoryWriter, read_pgm, write_csv, write_pgm
from topgn.frames import FrameFormatError
from topgn.grid_geometry import Grid2D
from topgn.intensity_map import PointCloudFrame
from topgn.metrics import ConfusionCounts, Outcome, RunRecord, confusion, scores
from topgn.pipeline import FrameResult, Pipeline, goal_in_robot_frame
from topgn.planner import VelocityPair, rollout_states, segments_intersect
from topgn.scene import Scene
from topgn.sim.lidar import scan
from topgn.sim.motion import OdometryModel, RobotState, step
from topgn.sim.world import Polyline, World, material_preset
from topgn.ton_detection import TonMask

logger = logging.getLogger(__name__)

RUN_COLUMNS = (
    "scene",
    "seed",
    "outcome",
    "time_to_goal",
    "min_clearance",
    "freeze_duration",
    "barrier_crossings",
)
METRIC_COLUMNS = (
    "granularity",
    "frame",
    "timestamp",
    "tp",
    "fp",
    "fn",
    "tn",
    "miou",
    "pa",
    "f1",
    "mae",
    "precision",
    "recall",
)
VERSIONED_PACKAGES = ("topgn", "numpy", "scipy", "lxml", "jsonpath-ng", "tqdm")


class Prediction(enum.StrEnum):
    """Which perception output a replay scores against the ground truth."""

    TON = "ton"
    EXTRAP = "extrap"
    BOTH = "both"


class Region(enum.StrEnum):
    """Which cells of the ROI a replay scores."""

    ROI = "roi"
    SWEPT = "swept"


# Transparent returns only pass the TON condition near normal incidence.
SWEPT_INCIDENCE_DEG = 2.0


def resolve_config(
    profile: str, scene: Scene | None = None, overrides: list[tuple[str, Any]] | None = None
) -> PipelineConfig:
    """Profile values, then the scene's `<set>` overrides, then command-line ones."""
    scene_overrides = list(scene.overrides) if scene is not None else []
    return load_profile(profile, scene_overrides + list(overrides or []))


@dataclasses.dataclass(frozen=True)
class ControlStep:
    """One perceive-plan-act cycle of the closed loop."""

    index: int
    before: RobotState
    after: RobotState
    command: VelocityPair
    frame: PointCloudFrame
    result: FrameResult
    frozen: bool
    collided: bool
    crossed_barrier: bool


def _crossed_barrier(
    result: FrameResult, command: VelocityPair, dt: float, substeps: int = 10
) -> bool:
    """
    Does the commanded arc cross one of the frame's extrapolated segments?

    The arc is sampled in the robot frame the segments were registered in,
    which is the odometry estimate and not the true pose.
    """
    segments = result.nav.segments_in_grid()
    if not segments:
        return False
    states = rollout_states(
        np.array([command.v]), np.array([command.omega]), substeps, dt / substeps
    )[0]
    spec = result.nav.spec
    path = states[:, :2] / spec.s + spec.center - 0.5
    seg = np.array(segments, dtype=np.float64)
    hits = segments_intersect(
        path[:-1, None], path[1:, None], seg[None, :, 0], seg[None, :, 1]
    )
    return bool(hits.any())


def closed_loop(scene: Scene, config: PipelineConfig, seed: int) -> Iterator[ControlStep]:
    """
    Endless simulate-perceive-plan-act loop at the configured frame rate.

    The pipeline registers frames with the odometry estimate while the
    simulator moves the true robot. Frozen cycles command zero velocity.
    """
    dt = 1.0 / config.frame_rate
    pipeline = Pipeline(config)
    odometry = OdometryModel(config.odometry.std_xy, config.odometry.std_theta, seed)
    state = scene.start
    index = 0
    while True:
        frame = scan(state, config.lidar, scene.world)
        estimate = odometry.update(state.pose)
        result = pipeline.process(frame, estimate)
        chosen = pipeline.plan(result, goal_in_robot_frame(estimate, scene.goal))
        command = VelocityPair(0.0, 0.0) if chosen is None else chosen
        after, collided = step(state, command, dt, scene.world, config.robot)
        yield ControlStep(
            index,
            state,
            after,
            command,
            frame,
            result,
            chosen is None,
            collided,
            _crossed_barrier(result, command, dt),
        )
        state = after
        index += 1


def package_versions() -> dict[str, str]:
    versions = {"python": platform.python_version(), "platform": platform.platform()}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def _write_json(path: pathlib.Path, data: Any) -> None:
    with open(path, "w", encoding="UTF-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def write_run_snapshot(
    output_dir: pathlib.Path, scene: Scene, config: PipelineConfig, seed: int
) -> None:
    """Config, scene, versions and seeds needed to re-run."""
    output_dir.mkdir(parents=True, exist_ok=True)
    _write_json(output_dir / "config.json", config_to_dict(config))
    (output_dir / "scene.xml").write_text(scene.text, encoding="UTF-8")
    _write_json(output_dir / "versions.json", package_versions())
    _write_json(
        output_dir / "seeds.json",
        {"scene": scene.name, "seed": seed, "odometry_seed": seed},
    )


def _nav_scale(values: np.ndarray) -> float:
    return max(float(values.max(initial=0.0)) / 255.0, 1.0)


def dump_frame_grids(grids_dir: pathlib.Path, index: int, result: FrameResult) -> None:
    nav = result.nav.grid.values
    write_pgm(grids_dir / f"nav_{index:05d}.pgm", nav, _nav_scale(nav))
    write_pgm(grids_dir / f"ton_{index:05d}.pgm", result.mask.grid)


class OutcomeTracker:
    """
    Decides the outcome of a closed-loop run step by step.

    Outcomes: success within 2 * r_rob of the goal; collision on any contact;
    frozen after freeze_timeout seconds of consecutive frozen cycles; timeout
    when the sim clock reaches scenario_timeout or the wall clock wall_timeout.
    """

    def __init__(self, scene: Scene, config: PipelineConfig):
        self.scene = scene
        self.config = config
        self.dt = 1.0 / config.frame_rate
        start = scene.start
        self.min_clearance = max(
            scene.world.min_distance((start.x, start.y), start.clock) - config.robot.r_rob, 0.0
        )
        self.freeze_streak = 0.0
        self.freeze_total = 0.0
        self.crossings = 0
        self.clock = start.clock
        self.outcome: Outcome | None = None
        self.started = time.monotonic()

    def update(self, control: ControlStep) -> list[str]:
        """Accounts for one control step; returns the step's events."""
        cfg = self.config
        now = control.after
        self.clock = now.clock
        clearance = self.scene.world.min_distance((now.x, now.y), now.clock) - cfg.robot.r_rob
        self.min_clearance = min(self.min_clearance, max(clearance, 0.0))
        events: list[str] = []
        if control.frozen:
            self.freeze_streak += self.dt
            self.freeze_total += self.dt
            events.append("frozen")
        else:
            self.freeze_streak = 0.0
        if control.crossed_barrier:
            self.crossings += 1
            events.append("barrier")

        goal = self.scene.goal
        if control.collided:
            self.outcome = Outcome.COLLISION
        elif math.hypot(goal[0] - now.x, goal[1] - now.y) <= 2.0 * cfg.robot.r_rob:
            self.outcome = Outcome.SUCCESS
        elif self.freeze_streak >= cfg.freeze_timeout - 1e-9:
            self.outcome = Outcome.FROZEN
        elif now.clock >= cfg.scenario_timeout - 1e-9:
            self.outcome = Outcome.TIMEOUT
        elif time.monotonic() - self.started > cfg.wall_timeout:
            logger.warning("%s: wall-clock timeout after %.1f s", self.scene.name, cfg.wall_timeout)
            self.outcome = Outcome.TIMEOUT
        if self.outcome is not None:
            events.append(str(self.outcome))
        return events

    def record(self, seed: int) -> RunRecord:
        if self.outcome is None:
            raise RuntimeError("The run has not finished")
        return RunRecord(
            outcome=self.outcome,
            time_to_goal=self.clock if self.outcome is Outcome.SUCCESS else math.nan,
            min_clearance=self.min_clearance,
            freeze_duration=self.freeze_total,
            scene=self.scene.name,
            seed=seed,
            barrier_crossings=self.crossings,
        )


def run_scenario(
    scene: Scene,
    config: PipelineConfig,
    output_dir: str | pathlib.Path | None = None,
    seed: int | None = None,
    dump_grids: bool = False,
    progress: bool = False,
) -> RunRecord:
    """
    Drives the robot from the scene's start until an outcome is reached.

    Args:
        scene: The scene to run.
        config: Resolved pipeline configuration.
        output_dir: Artifact directory; nothing is written when None.
        seed: Odometry noise seed; defaults to config.seed.
        dump_grids: Also write per-frame nav and TON grids as PGM.
        progress: Show a progress bar over control steps.

    Returns:
        The run's RunRecord (also written as run_record.csv).
    """
    seed = config.seed if seed is None else seed
    out = pathlib.Path(output_dir) if output_dir is not None else None
    if out is not None:
        write_run_snapshot(out, scene, config, seed)
        if dump_grids:
            (out / "grids").mkdir(exist_ok=True)

    tracker = OutcomeTracker(scene, config)
    with contextlib.ExitStack() as stack:
        log = (
            stack.enter_context(TrajectoryWriter(out / "trajectory.log"))
            if out is not None
            else None
        )
        bar = stack.enter_context(
            tqdm(
                total=math.ceil(config.scenario_timeout * config.frame_rate),
                desc=scene.name,
                unit="step",
                leave=False,
                disable=not progress,
            )
        )
        for control in closed_loop(scene, config, seed):
            events = tracker.update(control)
            if out is not None and dump_grids:
                dump_frame_grids(out / "grids", control.index, control.result)
            if log is not None:
                log.write(control.after, control.command, events)
            bar.update(1)
            if tracker.outcome is not None:
                break

    record = tracker.record(seed)
    logger.info("%s seed %d: %s at t=%.2f", scene.name, seed, record.outcome, tracker.clock)
    if out is not None:
        write_csv(out / "run_record.csv", [record_row(record)], RUN_COLUMNS)
    return record


def record_row(record: RunRecord) -> dict[str, Any]:
    row = dataclasses.asdict(record)
    row["outcome"] = str(record.outcome)
    return row


def record_frames(
    scene: Scene, config: PipelineConfig, seed: int | None = None
) -> Iterator[PointCloudFrame]:
    """
    Frames seen along a closed-loop run, until the run's outcome.

    Each frame carries the true robot pose, so a replay can be scored against
    the scene's ground truth.
    """
    seed = config.seed if seed is None else seed
    tracker = OutcomeTracker(scene, config)
    for control in closed_loop(scene, config, seed):
        yield control.frame
        tracker.update(control)
        if tracker.outcome is not None:
            return


@dataclasses.dataclass(frozen=True)
class ReplayReport:
    """Per-frame metric rows plus the pooled `map` row."""

    rows: list[dict[str, Any]]
    totals: ConfusionCounts
    skipped: int


def _prediction(result: FrameResult, predict: Prediction, accumulate: bool) -> np.ndarray:
    ton = result.transparent.grid if accumulate else result.mask.grid
    extrap = result.nav.extrap.mask if accumulate else result.extrap.mask
    match predict:
        case Prediction.TON:
            return ton
        case Prediction.EXTRAP:
            return np.asarray(extrap)
        case Prediction.BOTH:
            return ton | extrap


def _metric_row(
    granularity: str, frame: int | str, timestamp: float, counts: ConfusionCounts
) -> dict[str, Any]:
    return {
        "granularity": granularity,
        "frame": frame,
        "timestamp": timestamp,
        "tp": counts.tp,
        "fp": counts.fp,
        "fn": counts.fn,
        "tn": counts.tn,
        **dataclasses.asdict(scores(counts)),
    }


def _ground_truth(
    frame: PointCloudFrame,
    index: int,
    config: PipelineConfig,
    scene: Scene | None,
    gt_dir: pathlib.Path | None,
) -> np.ndarray:
    if scene is not None:
        return scene.world.ground_truth_grid(
            config.roi_spec, frame.robot_pose, t=frame.timestamp
        ).values
    pixels, _ = read_pgm(gt_dir / f"gt_{index:05d}.pgm")
    return pixels > 0


def _swept_truth(
    frame: PointCloudFrame,
    viewpoints: Iterable[tuple[float, float]],
    config: PipelineConfig,
    scene: Scene,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Ground truth and scoring region restricted to what the path has swept.

    The truth is the transparent footprint seen near normal incidence from the
    accumulation window's poses. The region adds the non-transparent cells
    around it, so stray detections next to the footprint still count.
    """
    spec = config.roi_spec
    full = scene.world.ground_truth_grid(spec, frame.robot_pose, t=frame.timestamp).values
    seen = scene.world.footprint_grid(
        spec,
        frame.robot_pose,
        np.array(list(viewpoints)),
        SWEPT_INCIDENCE_DEG,
        t=frame.timestamp,
    ).values
    around = ndimage.binary_dilation(seen, structure=np.ones((3, 3), dtype=bool))
    return seen, seen | (around & ~full)


def detect_replay(
    frames: Iterable[PointCloudFrame],
    config: PipelineConfig,
    scene: Scene | None = None,
    gt_dir: str | pathlib.Path | None = None,
    predict: Prediction | str = Prediction.TON,
    accumulate: bool = False,
    output_dir: str | pathlib.Path | None = None,
    dump_grids: bool = False,
    progress: bool = False,
    region: Region | str = Region.ROI,
) -> ReplayReport:
    """
    Scores the perception output of every frame against the ground truth.

    The ground truth comes from the scene's transparent primitives seen from
    each frame's pose, or from `gt_XXXXX.pgm` files in gt_dir. With
    `accumulate`, frames are scored on the accumulated transparent map instead
    of the single-frame mask. The final `map` row pools the counts of all
    frames.

    With the `swept` region only the transparent cells the poses of the
    accumulation window saw near normal incidence are ground truth, and only
    those cells and their non-transparent neighbours are scored.

    Raises:
        FrameFormatError: from the frame reader, after the frames before it
            are scored and metrics.csv is written.
        ValueError: neither a scene nor a ground-truth directory given, or a
            swept region without a scene.
    """
    if scene is None and gt_dir is None:
        raise ValueError("A replay needs a ground-truth scene or grid directory")
    predict = Prediction(predict)
    region = Region(region)
    if region is Region.SWEPT and scene is None:
        raise ValueError("Scoring the swept region needs a ground-truth scene")
    viewpoints: collections.deque[tuple[float, float]] = collections.deque(
        maxlen=config.t_past + 1 if accumulate else 1
    )
    gt_path = pathlib.Path(gt_dir) if gt_dir is not None else None
    out = pathlib.Path(output_dir) if output_dir is not None else None
    if out is not None and dump_grids:
        (out / "grids").mkdir(parents=True, exist_ok=True)

    pipeline = Pipeline(config)
    rows: list[dict[str, Any]] = []
    totals = ConfusionCounts(0, 0, 0, 0)
    skipped = 0
    failure: FrameFormatError | None = None
    iterator = iter(tqdm(frames, desc="Replaying", unit="frame", disable=not progress))
    index = 0
    while True:
        try:
            frame = next(iterator)
        except StopIteration:
            break
        except FrameFormatError as e:
            logger.error("Frame log unreadable after %d frames: %s", index, e)
            failure = e
            break
        try:
            result = pipeline.process(frame)
            viewpoints.append((frame.robot_pose.dx, frame.robot_pose.dy))
            predicted = _prediction(result, predict, accumulate)
            if region is Region.SWEPT:
                truth, scored = _swept_truth(frame, viewpoints, config, scene)
                predicted = predicted & scored
            else:
                truth = _ground_truth(frame, index, config, scene, gt_path)
            counts = confusion(predicted, truth)
        except (OSError, ValueError) as e:
            skipped += 1
            logger.warning("Frame %d (t=%.3f) skipped: %s", index, frame.timestamp, e)
            index += 1
            continue
        totals = totals + counts
        rows.append(_metric_row("frame", index, frame.timestamp, counts))
        if out is not None and dump_grids:
            dump_frame_grids(out / "grids", index, result)
        index += 1

    if totals.total:
        rows.append(_metric_row("map", "all", math.nan, totals))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "metrics.csv", rows, METRIC_COLUMNS)
    if failure is not None:
        raise failure
    return ReplayReport(rows, totals, skipped)


@dataclasses.dataclass(frozen=True)
class MapResult:
    mapping: Grid2D
    transparent: TonMask
    frames: int


def accumulate_log(
    frames: Iterable[PointCloudFrame], config: PipelineConfig, progress: bool = False
) -> MapResult:
    """Runs a frame log through the pipeline and keeps the final accumulated maps."""
    pipeline = Pipeline(config)
    result: FrameResult | None = None
    count = 0
    for frame in tqdm(frames, desc="Mapping", unit="frame", disable=not progress):
        result = pipeline.process(frame)
        count += 1
    if result is None:
        raise ValueError("Cannot build a map from an empty frame log")
    return MapResult(result.mapping, result.transparent, count)


@dataclasses.dataclass(frozen=True)
class BenchReport:
    """Latency in milliseconds and rate in Hz."""

    frames: int
    points_per_frame: float
    perception_mean_ms: float
    perception_p99_ms: float
    perception_hz: float
    cycle_mean_ms: float
    cycle_p99_ms: float
    cycle_hz: float


def bench_world() -> World:
    """A glass pane inside a small walled room, so that nearly every beam returns."""
    wall = material_preset("wall")
    glass = material_preset("glass")
    room = Polyline(((-1.6, -1.6), (1.6, -1.6), (1.6, 1.6), (-1.6, 1.6), (-1.6, -1.6)), wall, -1.0)
    pane = Polyline(((1.1, -0.8), (1.1, 0.8)), glass)
    return World((room, pane))


def bench(
    config: PipelineConfig, n_frames: int = 100, distinct: int = 8, progress: bool = False
) -> BenchReport:
    """
    Times the perception pipeline (layers through nav map) and the full cycle
    (plus planning) on synthesized frames.

    `distinct` scans are simulated once, outside the timed region, and cycled.
    """
    if n_frames < 100:
        raise ValueError(f"A benchmark needs at least 100 frames, got {n_frames}")
    world = bench_world()
    scans = [
        scan(RobotState(0.05 * k, 0.0, 0.0), config.lidar, world) for k in range(max(distinct, 1))
    ]
    dt = 1.0 / config.frame_rate
    goal = (3.0, 0.0)
    pipeline = Pipeline(config)
    perception = np.empty(n_frames)
    cycle = np.empty(n_frames)
    for k in tqdm(range(n_frames), desc="Benchmark", unit="frame", disable=not progress):
        base = scans[k % len(scans)]
        frame = dataclasses.replace(base, timestamp=k * dt)
        t0 = time.perf_counter()
        result = pipeline.process(frame)
        t1 = time.perf_counter()
        pipeline.plan(result, goal)
        t2 = time.perf_counter()
        perception[k] = t1 - t0
        cycle[k] = t2 - t0

    def ms(values: np.ndarray) -> tuple[float, float, float]:
        mean = float(values.mean())
        return 1000.0 * mean, 1000.0 * float(np.percentile(values, 99)), 1.0 / mean

    return BenchReport(
        n_frames,
        float(np.mean([len(f) for f in scans])),
        *ms(perception),
        *ms(cycle),
    )
