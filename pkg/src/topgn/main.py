"""
Command line entry point: scenario runs, detection replays, mapping,
benchmarks and grid rendering.
"""

from __future__ import annotations

import argparse
import json
import logging
import pathlib
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Any

from tqdm import tqdm

from topgn.config import (
    ConfigError,
    PipelineConfig,
    config_to_dict,
    get_output_dir,
    get_profile_name,
    load_config,
    parse_override,
    save_config,
)
from topgn.export import read_pgm, render_png, write_csv, write_pgm
from topgn.frames import FrameFormatError, read_frames
from topgn.grid_geometry import RigidTransform2D
from topgn.metrics import Outcome, RunRecord, aggregate_runs, scores
from topgn.runner import (
    RUN_COLUMNS,
    Prediction,
    Region,
    accumulate_log,
    bench,
    detect_replay,
    record_row,
    resolve_config,
    run_scenario,
)
from topgn.scene import Scene, SceneError, bundled_scene_names, load_scene

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FAILED = 3


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--profile",
        default=None,
        help="Parameter profile name or JSON file (default: saved profile or 'default')",
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="PATH=VALUE",
        help="Override a parameter, e.g. --set robot.v_max=0.4 (repeatable)",
    )
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topgn",
        description="Transparent-obstacle perception and navigation on simulated lidar.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run closed-loop scenarios")
    run.add_argument(
        "scenes",
        nargs="+",
        help=f"Scene files or bundled scene names ({', '.join(bundled_scene_names())})",
    )
    run.add_argument("--runs", type=int, default=1, help="Runs per scene")
    run.add_argument("--seed", type=int, default=None, help="Base seed (default: profile seed)")
    run.add_argument("--out", type=pathlib.Path, default=None, help="Artifact directory")
    run.add_argument("--dump-grids", action="store_true", help="Write per-frame PGM grids")
    run.add_argument("--strict", action="store_true", help="Exit 3 if any run fails")
    run.add_argument("--jobs", type=int, default=1, help="Parallel scenario processes")
    _common(run)

    replay = sub.add_parser("replay", help="Score detection on a frame log")
    replay.add_argument("frames", type=pathlib.Path, help="Frame log file")
    truth = replay.add_mutually_exclusive_group(required=True)
    truth.add_argument("--scene", help="Ground-truth scene file or bundled name")
    truth.add_argument(
        "--gt-dir", type=pathlib.Path, help="Directory of gt_XXXXX.pgm ground-truth grids"
    )
    replay.add_argument(
        "--predict",
        choices=[str(p) for p in Prediction],
        default=str(Prediction.TON),
        help="Perception output to score",
    )
    replay.add_argument(
        "--accumulate", action="store_true", help="Score the accumulated transparent map"
    )
    replay.add_argument(
        "--region",
        choices=[str(r) for r in Region],
        default=str(Region.ROI),
        help="Score the whole ROI or only the transparent footprint swept by the path",
    )
    replay.add_argument("--out", type=pathlib.Path, default=None, help="Output directory")
    replay.add_argument("--dump-grids", action="store_true", help="Write per-frame PGM grids")
    _common(replay)

    mapping = sub.add_parser("map", help="Accumulate a frame log into mapping grids")
    mapping.add_argument("frames", type=pathlib.Path, help="Frame log file")
    mapping.add_argument("--out", type=pathlib.Path, default=None, help="Output directory")
    _common(mapping)

    bench_parser = sub.add_parser("bench", help="Measure pipeline throughput")
    bench_parser.add_argument("--frames", type=int, default=200, help="Timed frames (>= 100)")
    _common(bench_parser)

    render = sub.add_parser("render", help="Render a PGM grid or a scene's ground truth")
    render.add_argument("input", help="PGM file, scene file or bundled scene name")
    render.add_argument(
        "--out", type=pathlib.Path, required=True, help="Output file (.png or .pgm)"
    )
    _common(render)

    settings = sub.add_parser("config", help="Show or save user settings")
    settings.add_argument("--output-dir", default=None, help="Save the default artifact root")
    settings.add_argument("--default-profile", default=None, help="Save the default profile")
    settings.add_argument(
        "--show-profile", action="store_true", help="Print the resolved parameter profile"
    )
    _common(settings)
    return parser


def _error(message: str) -> int:
    print(f"Error: {message}", file=sys.stderr)
    return EXIT_INPUT


def _profile(args: argparse.Namespace) -> str:
    return args.profile or get_profile_name()


def _overrides(args: argparse.Namespace) -> list[tuple[str, Any]]:
    return [parse_override(text) for text in args.overrides]


def _run_job(
    scene: Scene, config: PipelineConfig, out: pathlib.Path, seed: int, dump_grids: bool
) -> RunRecord:
    return run_scenario(scene, config, out, seed, dump_grids)


def cmd_run(args: argparse.Namespace) -> int:
    if args.runs < 1:
        return _error(f"--runs must be at least 1, got {args.runs}")
    out_root = args.out or get_output_dir()
    jobs = []
    for name in args.scenes:
        scene = load_scene(name)
        config = resolve_config(_profile(args), scene, _overrides(args))
        base_seed = config.seed if args.seed is None else args.seed
        for run in range(args.runs):
            seed = scene.seed_for(run, base_seed) if args.seed is None else base_seed + run
            out = out_root / scene.name / f"run_{run:02d}_seed{seed}"
            jobs.append((scene, config, out, seed, args.dump_grids))

    records: list[RunRecord] = []
    failed_jobs = 0
    progress = tqdm(total=len(jobs), desc="Running scenarios", unit="run")
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {pool.submit(_run_job, *job): job for job in jobs}
            for future in as_completed(futures):
                scene, _, _, seed, _ = futures[future]
                try:
                    records.append(future.result())
                except Exception as e:  # pylint: disable=broad-exception-caught
                    failed_jobs += 1
                    tqdm.write(f"Error: {scene.name} seed {seed}: {e}", file=sys.stderr)
                progress.update(1)
    else:
        for job in jobs:
            scene, _, _, seed, _ = job
            try:
                records.append(_run_job(*job))
            except Exception as e:  # pylint: disable=broad-exception-caught
                failed_jobs += 1
                tqdm.write(f"Error: {scene.name} seed {seed}: {e}", file=sys.stderr)
            progress.update(1)
    progress.close()

    records.sort(key=lambda r: (r.scene, r.seed))
    out_root.mkdir(parents=True, exist_ok=True)
    write_csv(out_root / "summary.csv", [record_row(r) for r in records], RUN_COLUMNS)
    for name in dict.fromkeys(r.scene for r in records):
        scene_records = [r for r in records if r.scene == name]
        outcomes = ", ".join(
            f"{o}={sum(1 for r in scene_records if r.outcome is o)}" for o in Outcome
        )
        print(
            f"{name}: success rate {aggregate_runs(scene_records):.1f}% "
            f"over {len(scene_records)} runs ({outcomes})"
        )
    print(f"Artifacts in {out_root}")

    failed = failed_jobs + sum(1 for r in records if r.outcome is not Outcome.SUCCESS)
    if args.strict and failed:
        print(f"Error: {failed} of {len(jobs)} runs failed", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    scene = load_scene(args.scene) if args.scene else None
    config = resolve_config(_profile(args), scene, _overrides(args))
    out = args.out or get_output_dir() / "replay"
    report = detect_replay(
        read_frames(args.frames),
        config,
        scene=scene,
        gt_dir=args.gt_dir,
        predict=args.predict,
        accumulate=args.accumulate,
        output_dir=out,
        dump_grids=args.dump_grids,
        progress=True,
        region=args.region,
    )
    frames = sum(1 for row in report.rows if row["granularity"] == "frame")
    print(f"Scored {frames} frames ({report.skipped} skipped); metrics in {out / 'metrics.csv'}")
    if report.totals.total:
        pooled = scores(report.totals)
        print(
            f"map: mIoU {pooled.miou:.4f}  PA {pooled.pa:.4f}  "
            f"F1 {pooled.f1:.4f}  MAE {pooled.mae:.4f}"
        )
    return EXIT_OK


def cmd_map(args: argparse.Namespace) -> int:
    config = resolve_config(_profile(args), None, _overrides(args))
    out = args.out or get_output_dir() / "map"
    result = accumulate_log(read_frames(args.frames), config, progress=True)
    out.mkdir(parents=True, exist_ok=True)
    mapping = result.mapping.values
    write_pgm(out / "mapping.pgm", mapping, max(float(mapping.max(initial=0.0)) / 255.0, 1.0))
    write_pgm(out / "transparent.pgm", result.transparent.grid)
    print(
        f"Accumulated {result.frames} frames: {result.transparent.count()} transparent cells; "
        f"grids in {out}"
    )
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    config = resolve_config(_profile(args), None, _overrides(args))
    report = bench(config, args.frames, progress=True)
    print(f"frames: {report.frames} ({report.points_per_frame:.0f} points each)")
    print(
        f"perception: mean {report.perception_mean_ms:.2f} ms  "
        f"p99 {report.perception_p99_ms:.2f} ms  {report.perception_hz:.1f} Hz"
    )
    print(
        f"full cycle: mean {report.cycle_mean_ms:.2f} ms  "
        f"p99 {report.cycle_p99_ms:.2f} ms  {report.cycle_hz:.1f} Hz"
    )
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    source = pathlib.Path(args.input)
    if source.suffix == ".pgm":
        pixels, scale = read_pgm(source)
        values = pixels * scale
        title = source.name
    else:
        scene = load_scene(args.input)
        config = resolve_config(_profile(args), scene, _overrides(args))
        start = scene.start
        values = scene.world.ground_truth_grid(
            config.grid, RigidTransform2D.from_pose(start.x, start.y, start.theta)
        ).values
        title = f"{scene.name}: transparent ground truth"
    match args.out.suffix:
        case ".png":
            render_png(args.out, values, title)
        case ".pgm":
            write_pgm(args.out, values)
        case _:
            return _error(f"Unsupported output format '{args.out.suffix}'; use .png or .pgm")
    print(f"Wrote {args.out}")
    return EXIT_OK


def cmd_config(args: argparse.Namespace) -> int:
    settings = load_config()
    if args.output_dir is not None or args.default_profile is not None:
        if args.output_dir is not None:
            settings["output_dir"] = str(pathlib.Path(args.output_dir).resolve())
        if args.default_profile is not None:
            resolve_config(args.default_profile)
            settings["profile"] = args.default_profile
        save_config(settings)
        print(f"Saved settings: {json.dumps(settings, sort_keys=True)}")
    if args.show_profile:
        config = resolve_config(_profile(args), None, _overrides(args))
        print(json.dumps(config_to_dict(config), indent=2, sort_keys=True))
    elif args.output_dir is None and args.default_profile is None:
        print(json.dumps(settings, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "replay": cmd_replay,
    "map": cmd_map,
    "bench": cmd_bench,
    "render": cmd_render,
    "config": cmd_config,
}


def run_cli(argv: list[str] | None = None) -> int:
    """Parses arguments and runs a subcommand; returns the exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SceneError, FrameFormatError, OSError, ValueError) as e:
        return _error(str(e))


def main() -> None:
    """Main function."""
    sys.exit(run_cli())

