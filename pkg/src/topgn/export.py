"""Artifact writers: PGM grid dumps, trajectory logs, CSV tables and PNG renders."""

from __future__ import annotations

import csv
import pathlib
from collections.abc import Iterable, Mapping, Sequence
from typing import Any

import numpy as np

from topgn.grid_geometry import Grid2D
from topgn.planner import VelocityPair
from topgn.sim.motion import RobotState


def write_pgm(path: str | pathlib.Path, values: Grid2D | np.ndarray, scale: float = 1.0) -> None:
    """
    Writes a grid as binary PGM (P5), row 0 first.

    Pixels are round(value / scale) clamped to 0..255; the scale is recorded in
    a `# scale` comment so that `read_pgm` can undo it. Boolean masks are
    written as 0/255.
    """
    array = values.values if isinstance(values, Grid2D) else np.asarray(values)
    if array.ndim != 2:
        raise ValueError(f"PGM export needs a 2D grid, got shape {array.shape}")
    if not scale > 0:
        raise ValueError(f"PGM scale must be positive, got {scale}")
    if array.dtype == bool:
        pixels = array.astype(np.uint8) * 255
        scale = 1.0 / 255.0
    else:
        pixels = np.clip(np.rint(np.asarray(array, dtype=np.float64) / scale), 0, 255).astype(
            np.uint8
        )
    rows, cols = pixels.shape
    header = f"P5\n# scale {scale:.9g}\n{cols} {rows}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(pixels.tobytes())


def read_pgm(path: str | pathlib.Path) -> tuple[np.ndarray, float]:
    """Reads a P5 file written by `write_pgm`; returns (pixels, scale)."""
    data = pathlib.Path(path).read_bytes()
    tokens: list[bytes] = []
    scale = 1.0
    pos = 0
    while len(tokens) < 4:
        end = data.index(b"\n", pos)
        line = data[pos:end]
        pos = end + 1
        if line.startswith(b"#"):
            fields = line[1:].split()
            if len(fields) == 2 and fields[0] == b"scale":
                scale = float(fields[1])
            continue
        tokens.extend(line.split())
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported, got maxval {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=rows * cols, offset=pos)
    return pixels.reshape(rows, cols).copy(), scale


class TrajectoryWriter:
    """
    Plain-text trajectory log, one line per control step:
    `t x y theta v omega events`, with `-` when a step has no events.
    """

    def __init__(self, path: str | pathlib.Path):
        self.path = pathlib.Path(path)
        self._file = None

    def __enter__(self) -> TrajectoryWriter:
        self._file = open(self.path, "w", encoding="UTF-8")
        self._file.write("# t x y theta v omega events\n")
        return self

    def __exit__(self, *exc_info) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None

    def write(self, state: RobotState, cmd: VelocityPair, events: Sequence[str] = ()) -> None:
        if self._file is None:
            raise RuntimeError("TrajectoryWriter used outside its context")
        self._file.write(
            f"{state.clock:.3f} {state.x:.6f} {state.y:.6f} {state.theta:.6f} "
            f"{cmd.v:.6f} {cmd.omega:.6f} {','.join(events) or '-'}\n"
        )


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return f"{value:.6f}"
    return value


def write_csv(
    path: str | pathlib.Path, rows: Iterable[Mapping[str, Any]], columns: Sequence[str]
) -> int:
    """Writes rows under a mandatory header; floats use fixed formatting."""
    if not columns:
        raise ValueError("A CSV table needs at least one column")
    count = 0
    with open(path, "w", encoding="UTF-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _cell(row[key]) for key in columns})
            count += 1
    return count


def render_png(
    path: str | pathlib.Path,
    values: np.ndarray,
    title: str = "",
    overlay: np.ndarray | None = None,
) -> None:
    """
    Renders a grid as a grayscale PNG, optionally with a binary mask in red.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt  # pylint: disable=import-outside-toplevel

    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(values, cmap="gray", origin="upper", interpolation="nearest")
    if overlay is not None and np.any(overlay):
        masked = np.ma.masked_where(~overlay.astype(bool), overlay.astype(float))
        ax.imshow(masked, cmap="autumn", alpha=0.7, origin="upper", interpolation="nearest")
    if title:
        ax.set_title(title)
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    fig.savefig(path, dpi=160, bbox_inches="tight")
    plt.close(fig)
