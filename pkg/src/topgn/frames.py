"""
Text frame logs.

Each frame starts with `FRAME <timestamp> <pose_x> <pose_y> <pose_theta>`,
followed by one `x y z intensity` line per point. Lines starting with `#` and
blank lines are ignored.
"""

from __future__ import annotations

import pathlib
from collections.abc import Iterable, Iterator

import numpy as np

from topgn.grid_geometry import RigidTransform2D
from topgn.intensity_map import PointCloudFrame


class FrameFormatError(ValueError):
    """A malformed line in a frame log."""

    def __init__(self, message: str, line: int, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"{where}: {message}")


def _floats(fields: list[str], line: int, path: str | None) -> list[float]:
    try:
        return [float(f) for f in fields]
    except ValueError:
        raise FrameFormatError(f"Expected numbers, got {' '.join(fields)!r}", line, path) from None


def parse_frames(lines: Iterable[str], path: str | None = None) -> Iterator[PointCloudFrame]:
    """Parses frame-log lines lazily, one frame at a time."""
    header: tuple[float, RigidTransform2D] | None = None
    points: list[list[float]] = []
    for number, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        fields = text.split()
        if fields[0] == "FRAME":
            if len(fields) != 5:
                raise FrameFormatError(
                    "FRAME header needs timestamp, pose_x, pose_y and pose_theta", number, path
                )
            if header is not None:
                yield _frame(header, points)
            t, x, y, theta = _floats(fields[1:], number, path)
            header = (t, RigidTransform2D.from_pose(x, y, theta))
            points = []
            continue
        if header is None:
            raise FrameFormatError("Point before the first FRAME header", number, path)
        if len(fields) != 4:
            raise FrameFormatError(
                f"Expected 'x y z intensity', got {len(fields)} fields", number, path
            )
        points.append(_floats(fields, number, path))
    if header is not None:
        yield _frame(header, points)


def _frame(header: tuple[float, RigidTransform2D], points: list[list[float]]) -> PointCloudFrame:
    timestamp, pose = header
    return PointCloudFrame(np.array(points, dtype=np.float64).reshape(-1, 4), timestamp, pose)


def read_frames(path: str | pathlib.Path) -> Iterator[PointCloudFrame]:
    """
    Streams the frames of a log file.

    Raises:
        FrameFormatError: on the first malformed line, with its line number.
    """
    with open(path, "r", encoding="UTF-8") as f:
        yield from parse_frames(f, str(path))


def format_frame(frame: PointCloudFrame) -> str:
    pose = frame.robot_pose
    lines = [f"FRAME {frame.timestamp:.6f} {pose.dx:.6f} {pose.dy:.6f} {pose.rotation:.9f}"]
    lines.extend(
        f"{x:.4f} {y:.4f} {z:.4f} {i:.3f}" for x, y, z, i in frame.points.tolist()
    )
    return "\n".join(lines) + "\n"


def write_frames(path: str | pathlib.Path, frames: Iterable[PointCloudFrame]) -> int:
    """Writes frames with fixed formatting; returns the number written."""
    count = 0
    with open(path, "w", encoding="UTF-8") as f:
        f.write("# topgn frame log: x y z intensity, robot frame\n")
        for frame in frames:
            f.write(format_frame(frame))
            count += 1
    return count
