"""
Tests for grid geometry using unittest framework.
"""
import math
import pathlib
import sys
import unittest

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).parent / "src"))

from topgn.grid_geometry import (
    Grid2D,
    GridSpec,
    RigidTransform2D,
    apply_transform,
    grid_to_world,
    rasterize_segment,
    relative_transform,
    world_to_grid,
    world_to_grid_array,
)


def _adjacent(a, b) -> bool:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1


class TestGridSpec(unittest.TestCase):
    """Test cases for grid construction."""

    def test_rejects_odd_side(self):
        """Test rejects odd side."""
        with self.assertRaises(ValueError):
            GridSpec(199, 0.05)

    def test_rejects_non_positive_cell(self):
        """Test rejects non positive cell."""
        with self.assertRaises(ValueError):
            GridSpec(200, 0.0)

    def test_grid_shape_checked(self):
        """Test grid shape checked."""
        with self.assertRaises(ValueError):
            Grid2D(GridSpec(4, 0.1), np.zeros((4, 5)))

    def test_grid_rejects_negative_values(self):
        """Test grid rejects negative values."""
        values = np.zeros((4, 4))
        values[1, 1] = -1.0
        with self.assertRaises(ValueError):
            Grid2D(GridSpec(4, 0.1), values)

    def test_cells_of_nonzero_values(self):
        """Test cells of nonzero values."""
        values = np.zeros((4, 4))
        values[0, 3] = 2.0
        values[2, 1] = 0.5
        self.assertEqual(Grid2D(GridSpec(4, 0.1), values).cells(), {(0, 3), (2, 1)})


class TestWorldToGrid(unittest.TestCase):
    """Test cases for binning points into cells."""

    def setUp(self):
        self.spec = GridSpec(200, 0.05)

    def test_hand_evaluated_point(self):
        """Test hand evaluated point."""
        self.assertEqual(world_to_grid((1.02, -0.30), self.spec), (120, 94))

    def test_origin_is_center(self):
        """Test origin is center."""
        self.assertEqual(world_to_grid((0.0, 0.0), self.spec), (100, 100))

    def test_out_of_bounds(self):
        """Test out of bounds."""
        self.assertIsNone(world_to_grid((5.1, 0.0), self.spec))
        self.assertIsNone(world_to_grid((0.0, -5.01), self.spec))

    def test_array_matches_scalar(self):
        """Test array matches scalar."""
        rng = np.random.default_rng(7)
        points = rng.uniform(-6.0, 6.0, size=(500, 2))
        rows, cols, inside = world_to_grid_array(points, self.spec)
        for k, p in enumerate(points):
            cell = world_to_grid((float(p[0]), float(p[1])), self.spec)
            if cell is None:
                self.assertFalse(inside[k])
            else:
                self.assertTrue(inside[k])
                self.assertEqual((int(rows[k]), int(cols[k])), cell)

    def test_round_trip_every_cell(self):
        """Test round trip every cell."""
        spec = GridSpec(40, 0.05)
        for r in range(spec.n):
            for c in range(spec.n):
                self.assertEqual(world_to_grid(grid_to_world(r, c, spec), spec), (r, c))

    def test_cell_center_within_half_cell(self):
        """Test cell center within half cell."""
        rng = np.random.default_rng(3)
        for p in rng.uniform(-4.9, 4.9, size=(200, 2)):
            r, c = world_to_grid((float(p[0]), float(p[1])), self.spec)
            x, y = grid_to_world(r, c, self.spec)
            self.assertLessEqual(abs(x - p[0]), self.spec.s / 2 + 1e-9)
            self.assertLessEqual(abs(y - p[1]), self.spec.s / 2 + 1e-9)


class TestRasterizeSegment(unittest.TestCase):
    """Test cases for 8-connected line rasterization."""

    def test_degenerate(self):
        """Test degenerate."""
        self.assertEqual(rasterize_segment((0, 0), (0, 0)), [(0, 0)])

    def test_axis_aligned(self):
        """Test axis aligned."""
        self.assertEqual(rasterize_segment((0, 0), (3, 0)), [(0, 0), (1, 0), (2, 0), (3, 0)])

    def test_steep_line(self):
        """Test steep line."""
        cells = rasterize_segment((0, 0), (2, 5))
        self.assertEqual(len(cells), 6)
        self.assertEqual(cells[0], (0, 0))
        self.assertEqual(cells[-1], (2, 5))
        for a, b in zip(cells, cells[1:]):
            self.assertTrue(_adjacent(a, b))

    def test_reversal_and_connectivity(self):
        """Test reversal and connectivity."""
        rng = np.random.default_rng(11)
        for _ in range(300):
            a = tuple(int(v) for v in rng.integers(-20, 20, size=2))
            b = tuple(int(v) for v in rng.integers(-20, 20, size=2))
            cells = rasterize_segment(a, b)
            self.assertEqual(cells[0], a)
            self.assertEqual(cells[-1], b)
            self.assertEqual(cells, list(reversed(rasterize_segment(b, a))))
            self.assertLessEqual(len(cells), max(abs(a[0] - b[0]), abs(a[1] - b[1])) + 1)
            for p, q in zip(cells, cells[1:]):
                self.assertTrue(_adjacent(p, q))


class TestRigidTransform(unittest.TestCase):
    """Test cases for 2D rigid transforms."""

    def test_compose_with_inverse_is_identity(self):
        """Test compose with inverse is identity."""
        rng = np.random.default_rng(5)
        for _ in range(100):
            t = RigidTransform2D(*rng.uniform(-3.0, 3.0, size=3))
            self.assertTrue((t @ t.inverse()).is_close(RigidTransform2D.identity()))
            self.assertTrue((t.inverse() @ t).is_close(RigidTransform2D.identity()))

    def test_composition_is_associative(self):
        """Test composition is associative."""
        rng = np.random.default_rng(6)
        a, b, c = (RigidTransform2D(*rng.uniform(-2.0, 2.0, size=3)) for _ in range(3))
        self.assertTrue(((a @ b) @ c).is_close(a @ (b @ c)))

    def test_apply_matches_compose(self):
        """Test apply matches compose."""
        a = RigidTransform2D(0.4, 1.0, -2.0)
        b = RigidTransform2D(-1.1, 0.3, 0.7)
        p = np.array([[0.5, -0.25], [2.0, 1.0]])
        np.testing.assert_allclose((a @ b).apply(p), a.apply(b.apply(p)), atol=1e-12)

    def test_relative_transform_maps_past_frame_to_current(self):
        """Test relative transform maps past frame to current."""
        past = RigidTransform2D.from_pose(1.0, 0.0, 0.0)
        current = RigidTransform2D.from_pose(2.0, 0.0, math.pi / 2)
        # A point 1 m ahead of the past pose is at world (2, 0), i.e. the
        # current robot's origin.
        moved = relative_transform(past, current).apply(np.array([[1.0, 0.0]]))
        np.testing.assert_allclose(moved, [[0.0, 0.0]], atol=1e-12)


class TestApplyTransform(unittest.TestCase):
    """Test cases for moving cell sets."""

    def setUp(self):
        self.spec = GridSpec(200, 0.05)

    def test_identity(self):
        """Test identity."""
        cells = {(0, 0), (50, 120), (199, 199), (100, 100)}
        self.assertEqual(apply_transform(cells, RigidTransform2D.identity(), self.spec), cells)

    def test_translation_shifts_rows(self):
        """Test translation shifts rows."""
        cells = {(100, 100), (120, 80), (150, 10)}
        moved = apply_transform(cells, RigidTransform2D(0.0, 0.5, 0.0), self.spec)
        self.assertEqual(moved, {(r + 10, c) for r, c in cells})

    def test_translation_drops_cells_leaving_grid(self):
        """Test translation drops cells leaving grid."""
        moved = apply_transform({(195, 100), (100, 100)}, RigidTransform2D(0.0, 0.5, 0.0), self.spec)
        self.assertEqual(moved, {(110, 100)})

    def test_half_turn_reflects_cell_centre(self):
        """Test half turn reflects cell centre."""
        # Cell centres sit half a cell off the origin, so a half turn lands on
        # the mirrored cell one further out.
        moved = apply_transform({(110, 100)}, RigidTransform2D(math.pi, 0.0, 0.0), self.spec)
        self.assertEqual(moved, {(89, 99)})

    def test_empty_set(self):
        """Test empty set."""
        self.assertEqual(apply_transform(set(), RigidTransform2D(0.3, 1.0, 1.0), self.spec), set())

    def test_round_trip_recovers_most_cells(self):
        """Test round trip recovers most cells."""
        rng = np.random.default_rng(21)
        recovered = total = 0
        for _ in range(20):
            t = RigidTransform2D(
                float(rng.uniform(-math.pi, math.pi)), *rng.uniform(-0.7, 0.7, size=2)
            )
            cells = {tuple(int(v) for v in rng.integers(60, 140, size=2)) for _ in range(100)}
            back = apply_transform(apply_transform(cells, t, self.spec), t.inverse(), self.spec)
            recovered += len(cells & back)
            total += len(cells)
            for cell in cells:
                self.assertTrue(any(max(abs(cell[0] - b[0]), abs(cell[1] - b[1])) <= 1 for b in back))
        self.assertGreaterEqual(recovered / total, 0.5)


if __name__ == "__main__":
    unittest.main()
