"""
Tests for parameter profiles, scene files and artifact formats using unittest framework.
"""
import csv
import json
import math
import pathlib
import sys
import tempfile
import unittest
from unittest import mock

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).parent / "src"))

from topgn.config import (
    ConfigError,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    get_output_dir,
    get_profile_name,
    load_profile,
    parse_override,
    save_config,
)
from topgn.export import TrajectoryWriter, read_pgm, render_png, write_csv, write_pgm
from topgn.frames import FrameFormatError, parse_frames, read_frames, write_frames
from topgn.grid_geometry import RigidTransform2D
from topgn.intensity_map import PointCloudFrame
from topgn.planner import VelocityPair
from topgn.scene import SceneError, bundled_scene_names, load_scene
from topgn.sim import MaterialKind, MovingDisc, RobotState

SCENE_TEMPLATE = """<?xml version="1.0" encoding="UTF-8"?>
<!DOCTYPE scene SYSTEM "scene.dtd">
<scene version="{version}" name="custom">
{body}
</scene>
"""

FULL_BODY = """  <description>  Custom   test scene. </description>
  <material name="frosted" preset="glass" peak="170"/>
  <polyline material="frosted" zmax="1.5">
    <point x="2" y="-1"/>
    <point x="2" y="1"/>
  </polyline>
  <arc material="wall" cx="0" cy="0" radius="4" start="-90" span="180"/>
  <mover material="wall" radius="0.3">
    <waypoint t="0" x="3" y="-2"/>
    <waypoint t="4" x="3" y="2"/>
  </mover>
  <robot x="0.5" y="-0.5" theta="90"/>
  <goal x="3.5" y="0"/>
  <lidar azimuth_step="1.0" channels="16"/>
  <set path="robot.v_max" value="0.4"/>
  <set path="lidar.preset" value="vlp16"/>
  <seeds><seed value="11"/><seed value="12"/></seeds>"""


class TestProfiles(unittest.TestCase):
    """Test cases for parameter profiles and overrides."""

    def test_default_profile(self):
        """Test the bundled default parameters."""
        config = load_profile()
        self.assertEqual(config.grid.n, 200)
        self.assertEqual(config.roi_m, 80)
        self.assertEqual(config.ton.r_low, 100.0)
        self.assertEqual(config.lidar.mount_height, 0.5)
        self.assertAlmostEqual(config.robot.d_thresh, 1.1)
        self.assertEqual(config.roi_spec.n, 80)

    def test_appendix_profile_extends_default(self):
        """Test that a profile inherits what it does not set."""
        config = load_profile("appendix")
        self.assertEqual(config.roi_m, 100)
        self.assertEqual(config.robot.r_rob, 0.25)
        self.assertEqual(config.lidar.mount_height, 0.48)
        self.assertEqual(config.sampling.n_omega, 21)

    def test_overrides(self):
        """Test short and full jsonpath overrides."""
        config = load_profile("default", [("robot.v_max", 0.8), ("$.ton.r_low", 95.0)])
        self.assertEqual(config.robot.v_max, 0.8)
        self.assertEqual(config.ton.r_low, 95.0)

    def test_apply_overrides_creates_keys(self):
        """Test that overriding a missing key creates it without touching the input."""
        data = {"robot": {"r_rob": 0.3}}
        updated = apply_overrides(data, [("robot.v_max", 0.7), ("t_past", 4)])
        self.assertEqual(updated, {"robot": {"r_rob": 0.3, "v_max": 0.7}, "t_past": 4})
        self.assertEqual(data, {"robot": {"r_rob": 0.3}})

    def test_parse_override(self):
        """Test splitting PATH=VALUE arguments."""
        self.assertEqual(parse_override("robot.v_max=0.8"), ("robot.v_max", 0.8))
        self.assertEqual(parse_override("lidar.preset=os1_32"), ("lidar.preset", "os1_32"))
        self.assertEqual(parse_override("layers.normalization = sum"), ("layers.normalization", "sum"))
        with self.assertRaises(ConfigError):
            parse_override("robot.v_max")
        with self.assertRaises(ConfigError):
            parse_override("=3")

    def test_unknown_keys_rejected(self):
        """Test that misspelled parameters fail loudly."""
        with self.assertRaises(ConfigError):
            load_profile("default", [("robot.speed", 1.0)])
        with self.assertRaises(ConfigError):
            load_profile("default", [("framerate", 5.0)])

    def test_invalid_values_rejected(self):
        """Test cross-field validation."""
        for override in (
            ("roi_m", 81),
            ("roi_m", 200),
            ("lidar.mount_height", 0.6),
            ("robot.h_rob", 0.4),
            ("lidar.channels", 1),
            ("freeze_timeout", 0),
            ("ton.r_low", 150.0),
            ("t_past", -1),
        ):
            with self.assertRaises(ConfigError, msg=str(override)):
                load_profile("default", [override])

    def test_unknown_profile(self):
        """Test a profile that is neither bundled nor a file."""
        with self.assertRaises(ConfigError):
            load_profile("no_such_profile")

    def test_profile_from_file(self):
        """Test loading a profile from a JSON path."""
        with tempfile.TemporaryDirectory() as tmp:
            path = pathlib.Path(tmp) / "mine.json"
            path.write_text(json.dumps({"extends": "default", "t_past": 3}), encoding="UTF-8")
            self.assertEqual(load_profile(str(path)).t_past, 3)
            path.write_text("[1, 2]", encoding="UTF-8")
            with self.assertRaises(ConfigError):
                load_profile(str(path))

    def test_dict_round_trip(self):
        """Test that the serialised tree rebuilds the same configuration."""
        config = load_profile("appendix")
        data = config_to_dict(config)
        self.assertEqual(data["lidar"]["preset"], "vlp16")
        self.assertEqual(data["layers"]["normalization"], "mean")
        json.dumps(data)
        self.assertEqual(config_from_dict(data), config)


class TestSettings(unittest.TestCase):
    """Test cases for the persistent settings file."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        patcher = mock.patch("pathlib.Path.home", return_value=pathlib.Path(self.tmp.name))
        patcher.start()
        self.addCleanup(patcher.stop)
        self.addCleanup(self.tmp.cleanup)

    def test_defaults_without_file(self):
        """Test the fallbacks when nothing is saved."""
        self.assertEqual(get_output_dir(), pathlib.Path("runs"))
        self.assertEqual(get_profile_name(), "default")

    def test_saved_values(self):
        """Test reading back saved settings."""
        save_config({"output_dir": "/data/topgn", "profile": "appendix"})
        self.assertEqual(get_output_dir(), pathlib.Path("/data/topgn"))
        self.assertEqual(get_profile_name(), "appendix")

    def test_saved_profile_resolves(self):
        """Test that the saved profile name selects the parameters a command loads."""
        save_config({"profile": "appendix"})
        config = load_profile(get_profile_name())
        self.assertEqual(config.roi_m, 100)
        self.assertEqual(config.robot.r_rob, 0.25)

    def test_corrupt_file_ignored(self):
        """Test that an unreadable settings file acts as empty."""
        path = pathlib.Path(self.tmp.name) / ".topgn" / "config.json"
        path.parent.mkdir(parents=True)
        path.write_text("{not json", encoding="UTF-8")
        self.assertEqual(get_profile_name(), "default")


class TestScenes(unittest.TestCase):
    """Test cases for scene files."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def _write(self, body: str, version: str = "1") -> pathlib.Path:
        path = pathlib.Path(self.tmp.name) / "custom.xml"
        path.write_text(SCENE_TEMPLATE.format(version=version, body=body), encoding="UTF-8")
        return path

    def test_bundled_scenes_load(self):
        """Test that every bundled scene validates and builds."""
        names = bundled_scene_names()
        self.assertIn("straight_glass", names)
        self.assertIn("empty", names)
        for name in names:
            scene = load_scene(name)
            self.assertEqual(scene.name, name)

    def test_empty_scene(self):
        """Test the open-floor scene."""
        scene = load_scene("empty")
        self.assertEqual(scene.goal, (3.0, 0.0))
        self.assertEqual(scene.start, RobotState())
        self.assertEqual(scene.world.primitives, ())

    def test_straight_glass(self):
        """Test that the glass wall is a transparent primitive."""
        scene = load_scene("straight_glass")
        (wall,) = scene.world.primitives
        self.assertIs(wall.material.kind, MaterialKind.TRANSPARENT)
        self.assertEqual(wall.vertices, ((1.52, -4.0), (1.52, 4.0)))

    def test_full_scene(self):
        """Test every element of the scene format."""
        scene = load_scene(self._write(FULL_BODY))
        self.assertEqual(scene.description, "Custom test scene.")
        glass, arc = scene.world.primitives
        self.assertEqual(glass.material.peak_intensity, 170.0)
        self.assertIs(glass.material.kind, MaterialKind.TRANSPARENT)
        self.assertEqual(glass.z_max, 1.5)
        self.assertAlmostEqual(arc.start, -math.pi / 2)
        self.assertAlmostEqual(arc.span, math.pi)
        (mover,) = scene.world.movers
        self.assertIsInstance(mover, MovingDisc)
        self.assertEqual(mover.position_at(2.0), (3.0, 0.0))
        self.assertAlmostEqual(scene.start.theta, math.pi / 2)
        self.assertEqual((scene.start.x, scene.start.y), (0.5, -0.5))
        self.assertEqual(scene.goal, (3.5, 0.0))
        self.assertEqual(
            scene.overrides,
            (
                ("lidar.channels", 16),
                ("lidar.azimuth_step", 1.0),
                ("robot.v_max", 0.4),
                ("lidar.preset", "vlp16"),
            ),
        )
        self.assertEqual(scene.seeds, (11, 12))
        self.assertEqual(scene.seed_for(1, 100), 12)
        self.assertEqual(scene.seed_for(2, 100), 102)

    def test_missing_file(self):
        """Test a path that is neither a file nor a bundled scene."""
        with self.assertRaises(SceneError):
            load_scene("no_such_scene")

    def test_syntax_error_reports_line(self):
        """Test that malformed XML points at the offending line."""
        path = self._write('  <robot x="0" y="0">\n  <goal x="1" y="0"/>')
        with self.assertRaises(SceneError) as cm:
            load_scene(path)
        self.assertIsNotNone(cm.exception.line)
        self.assertEqual(cm.exception.path, str(path))

    def test_dtd_violation(self):
        """Test that a scene without a goal fails validation."""
        with self.assertRaises(SceneError):
            load_scene(self._write('  <robot x="0" y="0"/>'))

    def test_unsupported_version(self):
        """Test the version check."""
        with self.assertRaises(SceneError):
            load_scene(self._write('  <robot x="0" y="0"/>\n  <goal x="1" y="0"/>', version="2"))

    def test_unknown_material_reports_line(self):
        """Test that an undeclared material names its element's line."""
        body = (
            '  <polyline material="granite">\n'
            '    <point x="1" y="0"/>\n'
            '    <point x="1" y="1"/>\n'
            "  </polyline>\n"
            '  <robot x="0" y="0"/>\n'
            '  <goal x="1" y="0"/>'
        )
        with self.assertRaises(SceneError) as cm:
            load_scene(self._write(body))
        self.assertEqual(cm.exception.line, 4)

    def test_bad_number(self):
        """Test a non-numeric coordinate."""
        with self.assertRaises(SceneError) as cm:
            load_scene(self._write('  <robot x="zero" y="0"/>\n  <goal x="1" y="0"/>'))
        self.assertIn("not a number", str(cm.exception))


class TestFrameLogs(unittest.TestCase):
    """Test cases for the text frame log."""

    def test_write_then_read(self):
        """Test that logged frames keep their points, timestamps and poses."""
        frames = [
            PointCloudFrame(
                np.array([[1.02, -0.3, 0.5, 120.0], [2.0, 0.25, 0.61, 99.5]]),
                0.1,
                RigidTransform2D.from_pose(0.5, -0.25, 0.125),
            ),
            PointCloudFrame(np.empty((0, 4)), 0.2, RigidTransform2D()),
        ]
        with tempfile.TemporaryDirectory() as tmp:
            path = pathlib.Path(tmp) / "log.frames"
            self.assertEqual(write_frames(path, frames), 2)
            back = list(read_frames(path))
        self.assertEqual(len(back), 2)
        np.testing.assert_allclose(back[0].points, frames[0].points, atol=1e-3)
        self.assertEqual(back[0].timestamp, 0.1)
        self.assertTrue(back[0].robot_pose.is_close(frames[0].robot_pose, tol=1e-6))
        self.assertEqual(len(back[1]), 0)

    def test_comments_and_blank_lines(self):
        """Test that comments and blank lines are skipped."""
        lines = ["# log", "", "FRAME 0 0 0 0", "  # note", "1 2 0.5 100", ""]
        (frame,) = parse_frames(lines)
        self.assertEqual(frame.points.tolist(), [[1.0, 2.0, 0.5, 100.0]])

    def test_errors_report_line(self):
        """Test malformed lines."""
        cases = [
            (["1 2 3 4"], 1),
            (["FRAME 0 0 0"], 1),
            (["FRAME 0 0 0 0", "1 2 3"], 2),
            (["FRAME 0 0 0 0", "", "1 2 x 4"], 3),
        ]
        for lines, line in cases:
            with self.assertRaises(FrameFormatError) as cm:
                list(parse_frames(lines, "log.frames"))
            self.assertEqual(cm.exception.line, line)
            self.assertTrue(str(cm.exception).startswith(f"log.frames:{line}:"))


class TestExport(unittest.TestCase):
    """Test cases for PGM, CSV, trajectory and PNG artifacts."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = pathlib.Path(self.tmp.name)

    def test_pgm_mask(self):
        """Test that boolean masks are written as 0/255."""
        mask = np.zeros((3, 5), dtype=bool)
        mask[1, 4] = True
        write_pgm(self.dir / "mask.pgm", mask)
        pixels, scale = read_pgm(self.dir / "mask.pgm")
        self.assertEqual(pixels.shape, (3, 5))
        self.assertEqual(pixels[1, 4], 255)
        self.assertEqual(int(pixels.sum()), 255)
        self.assertAlmostEqual(scale, 1.0 / 255.0)

    def test_pgm_scaled_values(self):
        """Test rounding and clamping of scaled values."""
        write_pgm(self.dir / "grid.pgm", np.array([[0.0, 3.0], [600.0, -4.0]]), scale=2.0)
        pixels, scale = read_pgm(self.dir / "grid.pgm")
        self.assertEqual(pixels.tolist(), [[0, 2], [255, 0]])
        self.assertEqual(scale, 2.0)

    def test_pgm_rejects_bad_input(self):
        """Test invalid shapes and scales."""
        with self.assertRaises(ValueError):
            write_pgm(self.dir / "bad.pgm", np.zeros((2, 2, 2)))
        with self.assertRaises(ValueError):
            write_pgm(self.dir / "bad.pgm", np.zeros((2, 2)), scale=0.0)

    def test_csv(self):
        """Test the header and fixed float formatting."""
        rows = [{"scene": "empty", "seed": 3, "time": 12.5, "extra": "ignored"}, {"scene": "x", "seed": 4, "time": math.nan}]
        count = write_csv(self.dir / "t.csv", rows, ["scene", "seed", "time"])
        self.assertEqual(count, 2)
        with open(self.dir / "t.csv", encoding="UTF-8", newline="") as f:
            read = list(csv.DictReader(f))
        self.assertEqual(read[0], {"scene": "empty", "seed": "3", "time": "12.500000"})
        self.assertEqual(read[1]["time"], "nan")
        with self.assertRaises(ValueError):
            write_csv(self.dir / "e.csv", rows, [])

    def test_trajectory(self):
        """Test trajectory lines and the event column."""
        path = self.dir / "trajectory.txt"
        with TrajectoryWriter(path) as writer:
            writer.write(RobotState(1.0, 2.0, 0.5, clock=0.1), VelocityPair(0.25, -0.5))
            writer.write(RobotState(clock=0.2), VelocityPair(0.0, 0.0), ["frozen", "collision"])
        lines = path.read_text(encoding="UTF-8").splitlines()
        self.assertEqual(lines[0], "# t x y theta v omega events")
        self.assertEqual(lines[1], "0.100 1.000000 2.000000 0.500000 0.250000 -0.500000 -")
        self.assertTrue(lines[2].endswith(" frozen,collision"))
        with self.assertRaises(RuntimeError):
            writer.write(RobotState(), VelocityPair(0.0, 0.0))

    def test_png(self):
        """Test that a render produces a PNG file."""
        overlay = np.zeros((20, 20), dtype=bool)
        overlay[5, 5:10] = True
        render_png(self.dir / "grid.png", np.random.default_rng(0).random((20, 20)), "grid", overlay)
        self.assertEqual((self.dir / "grid.png").read_bytes()[:8], b"\x89PNG\r\n\x1a\n")


if __name__ == "__main__":
    unittest.main()
