"""
Tests for tangent-line extrapolation using unittest framework.
"""
import math
import pathlib
import sys
import unittest

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).parent / "src"))

from topgn.extrapolation import (
    DegenerateTonError,
    ExtrapolationSet,
    build_extrapolation_set,
    extrapolate,
    intersect_ray_circle,
    light_and_tangent,
)
from topgn.grid_geometry import rasterize_segment
from topgn.planner import segments_intersect
from topgn.ton_detection import Ton

M = 80


def _ton(centroid, radius=0.0) -> Ton:
    return Ton(np.array([[int(centroid[0]), int(centroid[1])]]), centroid, radius)


def _random_ton(rng: np.random.Generator) -> Ton:
    while True:
        anchor = rng.integers(5, M - 5, size=2)
        if math.hypot(*(anchor - M / 2)) >= 15:
            break
    offsets = rng.integers(-3, 4, size=(int(rng.integers(1, 12)), 2))
    cells = np.unique(anchor + offsets, axis=0)
    return Ton.from_cells(cells)


class TestLightAndTangent(unittest.TestCase):
    """Test cases for the incident light and tangent vectors."""

    def test_ahead(self):
        """Test ahead."""
        self.assertEqual(light_and_tangent(_ton((60.0, 40.0)), M), ((20.0, 0.0), (0.0, -20.0)))

    def test_left(self):
        """Test left."""
        self.assertEqual(light_and_tangent(_ton((40.0, 60.0)), M), ((0.0, 20.0), (20.0, -0.0)))

    def test_perpendicular(self):
        """Test perpendicular."""
        rng = np.random.default_rng(12)
        for _ in range(200):
            light, tangent = light_and_tangent(_ton(tuple(rng.uniform(0, M, 2))), M)
            self.assertEqual(light[0] * tangent[0] + light[1] * tangent[1], 0.0)

    def test_degenerate(self):
        """Test degenerate."""
        with self.assertRaises(DegenerateTonError):
            light_and_tangent(_ton((40.0, 40.0)), M)


class TestIntersectRayCircle(unittest.TestCase):
    """Test cases for the light ray and bounding circle intersection."""

    def test_near_intersection_on_axis(self):
        """Test near intersection on axis."""
        p = intersect_ray_circle(_ton((60.0, 40.0), 2.0), M)
        self.assertAlmostEqual(p[0], 58.0)
        self.assertAlmostEqual(p[1], 40.0)

    def test_zero_radius(self):
        """Test zero radius."""
        self.assertEqual(intersect_ray_circle(_ton((61.5, 33.0)), M), (61.5, 33.0))

    def test_oblique(self):
        """Test oblique."""
        p = intersect_ray_circle(_ton((43.0, 44.0), 1.0), M)
        self.assertAlmostEqual(p[0], 42.4)
        self.assertAlmostEqual(p[1], 43.2)

    def test_circle_around_lidar_uses_far_side(self):
        """Test circle around lidar uses far side."""
        p = intersect_ray_circle(_ton((43.0, 44.0), 6.0), M)
        self.assertAlmostEqual(p[0], 43.0 + 6.0 * 0.6)
        self.assertAlmostEqual(p[1], 44.0 + 6.0 * 0.8)


class TestExtrapolate(unittest.TestCase):
    """Test cases for extrapolated segments."""

    def test_axis_aligned_segment(self):
        """Test axis aligned segment."""
        segment = extrapolate(_ton((60.0, 40.0), 2.0), M, r_rob=0.3, s=0.05)
        (r0, c0), (r1, c1) = segment.endpoints
        self.assertAlmostEqual(r0, 58.0)
        self.assertAlmostEqual(c0, 46.0)
        self.assertAlmostEqual(r1, 58.0)
        self.assertAlmostEqual(c1, 34.0)
        self.assertEqual(sorted(segment.raster), [(58, c) for c in range(34, 47)])

    def test_zero_radius_robot_gives_single_cell(self):
        """Test zero radius robot gives single cell."""
        segment = extrapolate(_ton((60.0, 40.0), 2.0), M, r_rob=0.0, s=0.05)
        self.assertEqual(segment.raster, ((58, 40),))

    def test_clipped_at_grid_edge(self):
        """Test clipped at grid edge."""
        segment = extrapolate(_ton((77.0, 2.0)), M, r_rob=0.3, s=0.05)
        start, end = segment.endpoints
        full = rasterize_segment(
            (math.floor(start[0] + 0.5), math.floor(start[1] + 0.5)),
            (math.floor(end[0] + 0.5), math.floor(end[1] + 0.5)),
        )
        inside = [(r, c) for r, c in full if 0 <= r < M and 0 <= c < M]
        self.assertEqual(list(segment.raster), inside)
        self.assertLess(len(segment.raster), len(full))

    def test_rejects_negative_radius(self):
        """Test rejects negative radius."""
        with self.assertRaises(ValueError):
            extrapolate(_ton((60.0, 40.0)), M, r_rob=-0.1, s=0.05)

    def test_random_geometry(self):
        """Test random geometry."""
        rng = np.random.default_rng(13)
        for _ in range(1000):
            ton = _random_ton(rng)
            r_rob = float(rng.uniform(0.0, 0.5))
            segment = extrapolate(ton, M, r_rob, 0.05)
            (lr, lc), _ = light_and_tangent(ton, M)
            (r0, c0), (r1, c1) = segment.endpoints
            pr, pc = segment.p_int
            self.assertAlmostEqual(lr * (r1 - r0) + lc * (c1 - c0), 0.0, delta=1e-9)
            self.assertAlmostEqual(math.hypot(r0 - pr, c0 - pc), r_rob / 0.05, delta=1e-9)
            self.assertAlmostEqual(math.hypot(r1 - pr, c1 - pc), r_rob / 0.05, delta=1e-9)
            # Every TON cell lies on the far side of the barrier line.
            norm = math.hypot(lr, lc)
            along = ((ton.cells[:, 0] - pr) * lr + (ton.cells[:, 1] - pc) * lc) / norm
            self.assertGreaterEqual(float(along.min()), -math.sqrt(2.0) / 2.0)

    def test_random_shielding(self):
        """Test that every ray from the lidar through a TON cell meets the barrier."""
        rng = np.random.default_rng(14)
        lidar = np.array([M / 2, M / 2])
        for _ in range(1000):
            ton = _random_ton(rng)
            # A barrier at least as wide as the TON's bounding circle.
            r_rob = max(float(rng.uniform(0.0, 0.5)), ton.bound_radius * 0.05)
            segment = extrapolate(ton, M, r_rob, 0.05)
            start, end = (np.array(p) for p in segment.endpoints)
            beyond = lidar + 2.0 * (ton.cells - lidar)
            hits = segments_intersect(lidar, beyond, start, end)
            self.assertTrue(hits.all(), f"{ton.centroid} r={ton.bound_radius}")

    def test_rotation_equivariant(self):
        """Test that rotating a TON about the lidar rotates its barrier the same way."""
        rng = np.random.default_rng(15)
        center = np.array([M / 2, M / 2])
        for _ in range(200):
            ton = _random_ton(rng)
            angle = float(rng.uniform(-math.pi, math.pi))
            rotation = np.array(
                [[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]]
            )
            centroid = rotation @ (np.array(ton.centroid) - center) + center
            turned = Ton(ton.cells, (float(centroid[0]), float(centroid[1])), ton.bound_radius)
            original = extrapolate(ton, M, 0.3, 0.05)
            rotated = extrapolate(turned, M, 0.3, 0.05)
            expected = (np.array(original.endpoints) - center) @ rotation.T + center
            np.testing.assert_allclose(np.array(rotated.endpoints), expected, atol=1e-9)
            np.testing.assert_allclose(
                np.array(rotated.p_int), rotation @ (np.array(original.p_int) - center) + center,
                atol=1e-9,
            )

    def test_quarter_turn_of_cells(self):
        """Test that a quarter turn of the cells themselves gives the turned raster."""
        rng = np.random.default_rng(16)
        for _ in range(200):
            ton = _random_ton(rng)
            cells = np.column_stack((ton.cells[:, 1], M - ton.cells[:, 0]))
            turned = Ton.from_cells(cells)
            original = extrapolate(ton, M, 0.3, 0.05)
            rotated = extrapolate(turned, M, 0.3, 0.05)
            (r0, c0), (r1, c1) = original.endpoints
            np.testing.assert_allclose(
                np.array(rotated.endpoints), [[c0, M - r0], [c1, M - r1]], atol=1e-9
            )


class TestBuildExtrapolationSet(unittest.TestCase):
    """Test cases for the union mask of all segments."""

    def test_empty(self):
        """Test empty."""
        extrap = build_extrapolation_set([], M, 0.3, 0.05)
        self.assertEqual(extrap.segments, ())
        self.assertFalse(extrap.mask.any())

    def test_single_ton(self):
        """Test single ton."""
        extrap = build_extrapolation_set([_ton((60.0, 40.0), 2.0)], M, 0.3, 0.05)
        self.assertEqual(int(extrap.mask.sum()), 13)
        self.assertTrue(extrap.mask[58, 34:47].all())

    def test_overlap_is_union(self):
        """Test overlap is union."""
        tons = [_ton((60.0, 40.0)), _ton((60.0, 41.0))]
        extrap = build_extrapolation_set(tons, M, 0.3, 0.05)
        cells = set(extrap.segments[0].raster) | set(extrap.segments[1].raster)
        self.assertEqual(int(extrap.mask.sum()), len(cells))
        self.assertEqual(extrap.mask.dtype, np.bool_)

    def test_degenerate_skipped_and_counted(self):
        """Test degenerate skipped and counted."""
        tons = [_ton((40.0, 40.0)), _ton((60.0, 40.0))]
        with self.assertLogs("topgn.extrapolation", level="WARNING"):
            extrap = build_extrapolation_set(tons, M, 0.3, 0.05)
        self.assertEqual(extrap.degenerate, 1)
        self.assertEqual([s.ton_index for s in extrap.segments], [1])

    def test_from_endpoints_and_merge(self):
        """Test from endpoints and merge."""
        a = ExtrapolationSet.from_endpoints([((10.0, 10.0), (10.0, 14.0))], M)
        b = ExtrapolationSet.from_endpoints([((20.0, 5.0), (24.0, 5.0))], M, first_index=-1)
        merged = a.merged(b)
        self.assertEqual(int(merged.mask.sum()), 10)
        self.assertEqual([s.ton_index for s in merged.segments], [0, -1])
        with self.assertRaises(ValueError):
            a.merged(ExtrapolationSet.empty(40))


if __name__ == "__main__":
    unittest.main()
