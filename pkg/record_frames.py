"""
Command line tool to record the lidar frames of simulated scenario runs.
Writes one frame log per run for `topgn replay` and `topgn map`.
"""

import argparse
import pathlib
import sys

from tqdm import tqdm

from topgn.config import ConfigError, get_profile_name, parse_override
from topgn.frames import write_frames
from topgn.runner import record_frames, resolve_config
from topgn.scene import SceneError, load_scene


def main() -> None:
    parser = argparse.ArgumentParser(
        description="Record simulated lidar frames along closed-loop scenario runs."
    )
    parser.add_argument("scene", help="Scene file or bundled scene name")
    parser.add_argument(
        "destination",
        nargs="?",
        default=".",
        help="Directory for the frame logs (default: current directory)",
    )
    parser.add_argument("--runs", type=int, default=1, help="Number of runs to record")
    parser.add_argument("--profile", default=None, help="Parameter profile")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="PATH=VALUE",
        help="Override a parameter (repeatable)",
    )
    args = parser.parse_args()

    try:
        scene = load_scene(args.scene)
        overrides = [parse_override(text) for text in args.overrides]
        config = resolve_config(args.profile or get_profile_name(), scene, overrides)
    except (ConfigError, SceneError) as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(2)

    dest = pathlib.Path(args.destination)
    dest.mkdir(parents=True, exist_ok=True)
    for run in tqdm(range(args.runs), desc="Recording runs", unit="run"):
        seed = scene.seed_for(run, config.seed)
        path = dest / f"{scene.name}_seed{seed}.frames"
        count = write_frames(path, record_frames(scene, config, seed))
        tqdm.write(f"{path}: {count} frames")


if __name__ == "__main__":
    main()
