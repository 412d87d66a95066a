# coding=utf-8
"""Unit tests for :mod:`mask_fpan.raster`."""
from __future__ import division, unicode_literals

import numpy as np

from mask_fpan import raster
from mask_fpan.compat import unittest

_SQUARE = np.array([[0.0, 0.0], [7.0, 0.0], [7.0, 7.0], [0.0, 7.0]])
_SQUARE_TRIANGLES = np.array([[0, 1, 2], [0, 2, 3]])


class CoverageTestCase(unittest.TestCase):
    """Rasterise a square made of two triangles."""

    @classmethod
    def setUpClass(cls):
        """Rasterise the square into a 10x10 image."""
        cls.fragments = raster.rasterize_triangles(
            _SQUARE, np.zeros(4), _SQUARE_TRIANGLES, 10, 10
        )

    def test_inside(self):
        """Assert every pixel centre in the closed square is covered."""
        self.assertTrue(np.all(self.fragments.triangle[:8, :8] >= 0))

    def test_outside(self):
        """Assert no pixel outside the square is covered."""
        covered = self.fragments.triangle >= 0
        self.assertEqual(int(covered.sum()), 64)

    def test_both_triangles(self):
        """Assert both halves of the square win some pixels."""
        owners = set(self.fragments.triangle[self.fragments.triangle >= 0])
        self.assertEqual(owners, {0, 1})

    def test_barycentric_sum(self):
        """Assert barycentric weights of covered pixels sum to one."""
        covered = self.fragments.triangle >= 0
        sums = self.fragments.barycentric[covered].sum(axis=1)
        self.assertTrue(np.allclose(sums, 1.0))

    def test_uncovered_depth(self):
        """Assert uncovered pixels keep an infinitely far depth."""
        self.assertTrue(np.all(np.isneginf(self.fragments.depth[8:, :])))

    def test_interpolate_positions(self):
        """Assert interpolating vertex positions recovers pixel centres."""
        positions = raster.interpolate(
            self.fragments, _SQUARE, _SQUARE_TRIANGLES, fill=-1.0
        )
        rows, cols = np.mgrid[:8, :8]
        self.assertTrue(np.allclose(positions[:8, :8, 0], cols))
        self.assertTrue(np.allclose(positions[:8, :8, 1], rows))
        self.assertTrue(np.all(positions[9, 9] == -1.0))


class DepthTestCase(unittest.TestCase):
    """Rasterise two coincident triangles at different depths."""

    @staticmethod
    def rasterize(near_depth, keep=None):
        """Draw triangle 0 at depth 1 and triangle 1 at ``near_depth``."""
        points = np.concatenate([_SQUARE, _SQUARE])
        depth = np.array([1.0] * 4 + [near_depth] * 4)
        triangles = np.array([[0, 1, 2], [4, 5, 6]])
        return raster.rasterize_triangles(points, depth, triangles, 8, 8, keep)

    def test_closer_wins(self):
        """Assert the larger depth is closer to the camera."""
        fragments = self.rasterize(2.0)
        covered = fragments.triangle >= 0
        self.assertTrue(np.all(fragments.triangle[covered] == 1))

    def test_tie(self):
        """Assert equal depths resolve to the lower triangle index."""
        fragments = self.rasterize(1.0)
        covered = fragments.triangle >= 0
        self.assertTrue(np.all(fragments.triangle[covered] == 0))

    def test_keep(self):
        """Assert triangles left out of ``keep`` are not drawn."""
        fragments = self.rasterize(2.0, keep=[True, False])
        covered = fragments.triangle >= 0
        self.assertTrue(np.all(fragments.triangle[covered] == 0))

    def test_depth_value(self):
        """Assert the depth buffer holds the winning depth."""
        fragments = self.rasterize(2.0)
        covered = fragments.triangle >= 0
        self.assertTrue(np.allclose(fragments.depth[covered], 2.0))


class DegenerateTestCase(unittest.TestCase):
    """Rasterise triangles that cannot cover any pixel."""

    def test_zero_area(self):
        """Assert a collinear triangle is skipped."""
        points = np.array([[0.0, 0.0], [2.0, 2.0], [4.0, 4.0]])
        fragments = raster.rasterize_triangles(
            points, np.zeros(3), np.array([[0, 1, 2]]), 6, 6
        )
        self.assertTrue(np.all(fragments.triangle == -1))

    def test_off_screen(self):
        """Assert a triangle outside the image covers nothing."""
        points = np.array([[20.0, 20.0], [25.0, 20.0], [20.0, 25.0]])
        fragments = raster.rasterize_triangles(
            points, np.zeros(3), np.array([[0, 1, 2]]), 6, 6
        )
        self.assertTrue(np.all(fragments.triangle == -1))


class LabelsTestCase(unittest.TestCase):
    """Test :func:`mask_fpan.raster.majority_labels`."""

    def test_agreeing_vertices(self):
        """Assert each half of the square takes its vertices' label."""
        points = np.concatenate([_SQUARE, _SQUARE])
        triangles = np.array([[0, 1, 2], [4, 6, 7]])
        fragments = raster.rasterize_triangles(
            points, np.zeros(8), triangles, 10, 10
        )
        labels = raster.majority_labels(
            fragments, [3, 3, 3, 3, 5, 5, 5, 5], triangles, background=9
        )
        expected = np.where(fragments.triangle == 0, 3, 5)
        expected[fragments.triangle < 0] = 9
        self.assertTrue(np.array_equal(labels, expected))


class SampleTestCase(unittest.TestCase):
    """Test the image sampling helpers."""

    @classmethod
    def setUpClass(cls):
        """Create a 2x2 colour image."""
        cls.image = np.array([
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            [[0.0, 1.0, 0.0], [1.0, 1.0, 0.0]],
        ])

    def test_bilinear_pixel(self):
        """Assert sampling a pixel centre returns that pixel."""
        value = raster.bilinear_sample(self.image, np.array([1.0]),
                                       np.array([0.0]))
        self.assertTrue(np.allclose(value, [[1.0, 0.0, 0.0]]))

    def test_bilinear_middle(self):
        """Assert the middle of the image averages all four pixels."""
        value = raster.bilinear_sample(self.image, np.array([0.5]),
                                       np.array([0.5]))
        self.assertTrue(np.allclose(value, [[0.5, 0.5, 0.0]]))

    def test_bilinear_clamp(self):
        """Assert coordinates outside the image are clamped."""
        value = raster.bilinear_sample(self.image, np.array([-3.0]),
                                       np.array([9.0]))
        self.assertTrue(np.allclose(value, [[0.0, 1.0, 0.0]]))

    def test_nearest(self):
        """Assert nearest sampling rounds and clamps."""
        labels = np.array([[1, 2], [3, 4]])
        values = raster.nearest_sample(
            labels, np.array([0.2, 0.8, 5.0]), np.array([0.4, 0.6, -1.0])
        )
        self.assertEqual(values.tolist(), [1, 4, 2])
