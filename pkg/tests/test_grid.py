import unittest
import sys
import os

import numpy as np

# Add parent directory to path so we can import the modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from grid import (
    FreqGrid, GridFn, SpaceGrid, axis_values, dual_grid, forward_transform, grid_derivative,
    grid_points, inverse_transform, is_hermitian, make_grids, mirror, mirror_values, parseval_sides,
    pointwise, spatial_taper,
)


class TestGrids(unittest.TestCase):
    def test_make_grids_spacing(self):
        """ds = 2 s_max / N and dx ds N = 2 pi"""
        freq, space = make_grids(1, 1024, 20.0)
        self.assertIsInstance(freq, FreqGrid)
        self.assertIsInstance(space, SpaceGrid)
        self.assertAlmostEqual(freq.spacing, 40.0 / 1024)
        self.assertAlmostEqual(freq.spacing * space.spacing * 1024, 2 * np.pi)
        self.assertAlmostEqual(freq.s_max, 20.0)
        self.assertEqual(freq.axis()[512], 0.0)
        self.assertTrue(dual_grid(freq).same_as(space))
        self.assertTrue(dual_grid(space).same_as(freq))

    def test_make_grids_rejects_bad_input(self):
        """Odd, tiny, oversized grids and bad dimensions are refused"""
        for args in ((1, 1023, 20.0), (1, 4, 20.0), (4, 16, 20.0), (1, 64, -1.0), (3, 1024, 20.0)):
            with self.assertRaises(ValueError):
                make_grids(*args)

    def test_points_and_axes(self):
        freq, _ = make_grids(2, 8, 4.0)
        points = grid_points(freq)
        self.assertEqual(points.shape, (64, 2))
        np.testing.assert_allclose(points[0], [-4.0, -4.0])
        np.testing.assert_allclose(axis_values(freq, 1)[0], freq.axis())
        with self.assertRaises(ValueError):
            axis_values(freq, 2)


class TestGridFn(unittest.TestCase):
    def setUp(self):
        self.freq, self.space = make_grids(1, 1024, 20.0)
        self.s = self.freq.axis()

    def test_hermitian_claim_checked(self):
        GridFn(self.freq, np.exp(1j * self.s), True)
        with self.assertRaises(ValueError):
            GridFn(self.freq, self.s.astype(complex), True)
        self.assertTrue(GridFn.auto(self.freq, np.exp(-self.s ** 2)).hermitian)
        self.assertFalse(GridFn.auto(self.freq, 1j * np.exp(-self.s ** 2)).hermitian)

    def test_values_frozen(self):
        fn = GridFn(self.freq, np.zeros(1024))
        with self.assertRaises(ValueError):
            fn.values[0] = 1.0

    def test_wrong_size(self):
        with self.assertRaises(ValueError):
            GridFn(self.freq, np.zeros(10))

    def test_mirror(self):
        """Reflection maps index j to N - j; the first row has no partner"""
        fn = GridFn(self.freq, self.s)
        np.testing.assert_allclose(mirror(fn).values.real[1:], -self.s[1:])
        np.testing.assert_allclose(mirror_values(np.arange(8.0)), [0, 7, 6, 5, 4, 3, 2, 1])

    def test_origin_value(self):
        fn = GridFn.auto(self.freq, np.exp(-self.s ** 2))
        self.assertEqual(fn.origin_value, 1.0)

    def test_pointwise(self):
        a = GridFn.auto(self.freq, np.exp(-self.s ** 2))
        b = GridFn.auto(self.freq, np.cos(self.s))
        prod = pointwise("mul", a, b)
        self.assertTrue(prod.hermitian)
        np.testing.assert_allclose(prod.values, np.exp(-self.s ** 2) * np.cos(self.s))
        zero = GridFn.constant(self.freq, 0.0)
        blown = pointwise("div_unchecked", a, zero)
        self.assertFalse(blown.hermitian)
        self.assertFalse(np.any(np.isfinite(blown.values)))
        with self.assertRaises(ValueError):
            pointwise("mul", a, GridFn(self.space, np.zeros(1024)))
        with self.assertRaises(ValueError):
            pointwise("pow", a, b)


class TestTransforms(unittest.TestCase):
    def setUp(self):
        self.freq, self.space = make_grids(1, 1024, 20.0)

    def test_gaussian_density_transform(self):
        """The standard normal density transforms to exp(-s^2/2)"""
        x = self.space.axis()
        f = GridFn(self.space, np.exp(-0.5 * x ** 2) / np.sqrt(2 * np.pi))
        phi = forward_transform(f)
        self.assertTrue(phi.hermitian)
        self.assertTrue(phi.grid.same_as(self.freq))
        np.testing.assert_allclose(phi.values, np.exp(-0.5 * self.freq.axis() ** 2), atol=1e-10)

    def test_sign_convention(self):
        """A shifted density picks up e^{+i s mu}"""
        x = self.space.axis()
        f = GridFn(self.space, np.exp(-0.5 * (x - 1.0) ** 2) / np.sqrt(2 * np.pi))
        s = self.freq.axis()
        np.testing.assert_allclose(forward_transform(f).values,
                                   np.exp(1j * s - 0.5 * s ** 2), atol=1e-10)

    def test_round_trip(self):
        x = self.space.axis()
        f = GridFn(self.space, np.exp(-np.abs(x)) * (1 + 0.3 * np.sin(x)))
        back = inverse_transform(forward_transform(f))
        np.testing.assert_allclose(back.values, f.values, atol=1e-12)

    def test_two_dimensional(self):
        freq, space = make_grids(2, 64, 8.0)
        x1, x2 = space.coords()
        f = GridFn(space, np.exp(-0.5 * (x1 ** 2 + x2 ** 2)) / (2 * np.pi))
        s1, s2 = freq.coords()
        np.testing.assert_allclose(forward_transform(f).values,
                                   np.exp(-0.5 * (s1 ** 2 + s2 ** 2)), atol=1e-8)

    def test_wrong_grid_kind(self):
        with self.assertRaises(ValueError):
            forward_transform(GridFn(self.freq, np.zeros(1024)))
        with self.assertRaises(ValueError):
            inverse_transform(GridFn(self.space, np.zeros(1024)))

    def test_parseval(self):
        x = self.space.axis()
        left, right = parseval_sides(GridFn(self.space, np.exp(-x ** 2)))
        self.assertAlmostEqual(left, right, places=10)
        self.assertAlmostEqual(left, np.sqrt(np.pi / 2), places=8)


class TestDerivativeAndTaper(unittest.TestCase):
    def test_derivative_of_gaussian(self):
        freq, _ = make_grids(1, 1024, 20.0)
        s = freq.axis()
        d = grid_derivative(GridFn(freq, np.exp(-0.5 * s ** 2)), 0)
        np.testing.assert_allclose(d.values.real, -s * np.exp(-0.5 * s ** 2), atol=2e-3)
        with self.assertRaises(ValueError):
            grid_derivative(GridFn(freq, np.zeros(1024)), 1)

    def test_derivative_second_order(self):
        """Halving the spacing divides the central-difference error by about four"""
        errors = []
        for N in (256, 512):
            freq, _ = make_grids(1, N, 20.0)
            s = freq.axis()
            d = grid_derivative(GridFn(freq, np.exp(-0.5 * s ** 2)), 0)
            errors.append(np.max(np.abs(d.values.real + s * np.exp(-0.5 * s ** 2))))
        ratio = errors[1] / errors[0]
        self.assertGreater(ratio, 0.2)
        self.assertLess(ratio, 0.3)

    def test_taper(self):
        _, space = make_grids(1, 1024, 20.0)
        window = spatial_taper(space, -1.0, 1.0, 0.1).values.real
        x = space.axis()
        self.assertAlmostEqual(window[np.argmin(np.abs(x))], 1.0, places=10)
        self.assertLess(window[np.argmin(np.abs(x - 3.0))], 1e-10)
        self.assertTrue(is_hermitian(window))
        with self.assertRaises(ValueError):
            spatial_taper(space, 1.0, -1.0, 0.1)


if __name__ == '__main__':
    unittest.main()
