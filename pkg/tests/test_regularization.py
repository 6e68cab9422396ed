import unittest
import sys
import os

import numpy as np

# Add parent directory to path so we can import the modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from grid import GridFn, make_grids
from regularization import (
    BOUNDED, INCONCLUSIVE, MASS_POINT, ORDINARY, SUPERSMOOTH, apply_cutoff, check_phi_class,
    classify_smoothness, heuristic_cutoff, lemma2_cutoff,
)
from utils.config import DEFAULTS

V = DEFAULTS["phi_class_V"]


class TestPhiClass(unittest.TestCase):
    def test_cauchy_kernel_integral(self):
        """The integral of 1/(1+t^2) over the line is pi"""
        freq, _ = make_grids(1, 1024, 20.0)
        s = freq.axis()
        ok, value = check_phi_class(GridFn.auto(freq, 1.0 / (1.0 + s ** 2)), 0, V)
        self.assertTrue(ok)
        self.assertAlmostEqual(value, np.pi, delta=1e-6)

    def test_weight_lowers_integral(self):
        freq, _ = make_grids(1, 1024, 20.0)
        s = freq.axis()
        b = GridFn.auto(freq, 1.0 / (1.0 + s ** 2))
        _, v0 = check_phi_class(b, 0, V)
        _, v1 = check_phi_class(b, 1, V)
        # integral of (1+t^2)^-2 is pi/2
        self.assertAlmostEqual(v1, np.pi / 2, delta=1e-5)
        self.assertLess(v1, v0)

    def test_growing_function_never_in_class(self):
        """exp(t^2) escapes every polynomial weight on every grid"""
        for s_max in (10.0, 20.0, 40.0):
            freq, _ = make_grids(1, 1024, s_max)
            s = freq.axis()
            with np.errstate(over="ignore"):
                b = GridFn(freq, np.exp(s ** 2).astype(complex))
            for m in range(9):
                ok, value = check_phi_class(b, m, V)
                self.assertFalse(ok, f"s_max={s_max}, m={m}")
                self.assertGreater(value, V)

    def test_bound_is_strict(self):
        freq, _ = make_grids(1, 1024, 20.0)
        s = freq.axis()
        b = GridFn.auto(freq, 1.0 / (1.0 + s ** 2))
        self.assertFalse(check_phi_class(b, 0, 3.0)[0])
        self.assertTrue(check_phi_class(b, 0, 3.5)[0])

    def test_monotone_in_weight_power(self):
        """A larger weight power never raises the integral, so membership is kept"""
        freq, _ = make_grids(1, 1024, 20.0)
        s = freq.axis()
        functions = (
            1.0 / (1.0 + s ** 2),
            np.exp(-0.5 * s ** 2),
            np.sinc(s / np.pi),
            np.exp(-np.abs(s)) * np.cos(3.0 * s),
        )
        for values in functions:
            results = [check_phi_class(GridFn.auto(freq, values), m, V) for m in range(7)]
            for (ok_lo, v_lo), (ok_hi, v_hi) in zip(results, results[1:]):
                self.assertLessEqual(v_hi, v_lo + 1e-12)
                self.assertTrue(ok_hi or not ok_lo)
        freq2, _ = make_grids(2, 64, 8.0)
        s1, s2 = freq2.coords()
        b = GridFn.auto(freq2, 1.0 / ((1.0 + s1 ** 2) * (1.0 + s2 ** 2)))
        values = [check_phi_class(b, m, V)[1] for m in range(4)]
        self.assertTrue(all(hi <= lo for lo, hi in zip(values, values[1:])))

    def test_two_dimensional(self):
        freq, _ = make_grids(2, 64, 8.0)
        s1, s2 = freq.coords()
        ok, value = check_phi_class(GridFn.auto(freq, np.exp(-0.5 * (s1 ** 2 + s2 ** 2))), 0, V)
        self.assertTrue(ok)
        self.assertAlmostEqual(value, 2 * np.pi, delta=1e-3)

    def test_bad_multi_index(self):
        freq, _ = make_grids(2, 16, 4.0)
        b = GridFn.constant(freq, 1.0)
        with self.assertRaises(ValueError):
            check_phi_class(b, (1, 2, 3), V)
        with self.assertRaises(ValueError):
            check_phi_class(b, -1, V)


class TestSmoothness(unittest.TestCase):
    def setUp(self):
        self.freq, _ = make_grids(1, 1024, 10.0)
        self.s = self.freq.axis()

    def test_gaussian_is_supersmooth(self):
        cls = classify_smoothness(GridFn.auto(self.freq, np.exp(-0.5 * self.s ** 2)))
        self.assertEqual(cls.kind, SUPERSMOOTH)
        self.assertEqual(cls.order, 2.0)
        self.assertAlmostEqual(cls.scale, 0.5, places=6)
        self.assertEqual(cls.p_or_k, 2.0)

    def test_laplace_is_ordinary_smooth(self):
        cls = classify_smoothness(GridFn.auto(self.freq, 1.0 / (1.0 + self.s ** 2)))
        self.assertEqual(cls.kind, ORDINARY)
        self.assertAlmostEqual(cls.order, 2.0, delta=0.1)

    def test_mass_point_floor(self):
        phi = GridFn.auto(self.freq, 0.3 + 0.7 * np.exp(-0.5 * self.s ** 2))
        cls = classify_smoothness(phi)
        self.assertEqual(cls.kind, MASS_POINT)
        self.assertAlmostEqual(cls.floor, 0.3, places=6)

    def test_bounded_support(self):
        phi = GridFn.auto(self.freq, np.clip(1.0 - np.abs(self.s) / 2.0, 0.0, None))
        cls = classify_smoothness(phi)
        self.assertEqual(cls.kind, BOUNDED)
        self.assertGreater(cls.scale, 2.0 - 2 * self.freq.spacing)
        self.assertLess(cls.scale, 2.0)

    def test_tail_in_noise(self):
        cls = classify_smoothness(GridFn.auto(self.freq, np.exp(-0.5 * self.s ** 2)), noise=0.5)
        self.assertEqual(cls.kind, INCONCLUSIVE)


class TestCutoffs(unittest.TestCase):
    def setUp(self):
        self.freq, _ = make_grids(1, 1024, 20.0)
        self.s = self.freq.axis()

    def test_lemma2_radius(self):
        rule = lemma2_cutoff(1e4, 2, 0.9)
        self.assertAlmostEqual(rule.B_bar, 0.9 * np.sqrt(np.log(1e4)))
        self.assertEqual(rule.k, 2)
        self.assertEqual(rule.label, "lemma2")
        self.assertIsNone(rule.B_n)
        ruled = lemma2_cutoff(1e4, 1, 0.5, self.freq)
        self.assertAlmostEqual(ruled.B_bar, 0.5 * np.log(1e4))
        np.testing.assert_array_equal(ruled.B_n.mask, np.abs(self.s) < ruled.B_bar)

    def test_lemma2_rejects_bad_arguments(self):
        for args in ((1.0, 2, 0.9), (100.0, 0, 0.9), (100.0, 1.5, 0.9), (100.0, 2, 1.0), (100.0, 2, 0.0)):
            with self.assertRaises(ValueError):
                lemma2_cutoff(*args)

    def test_radius_grows_with_rate(self):
        radii = [lemma2_cutoff(np.sqrt(n), 2).B_bar for n in (1e3, 1e4, 1e5)]
        self.assertEqual(radii, sorted(radii))

    def test_heuristic_radius(self):
        """First radius where exp(-s^2/2) falls to 3 sigma"""
        rule = heuristic_cutoff(GridFn.auto(self.freq, np.exp(-0.5 * self.s ** 2)), 0.01)
        edge = np.sqrt(2 * np.log(1.0 / 0.03))
        self.assertEqual(rule.label, "heuristic")
        self.assertGreaterEqual(rule.B_bar, edge)
        self.assertLess(rule.B_bar, edge + self.freq.spacing)

    def test_heuristic_without_low_values(self):
        rule = heuristic_cutoff(GridFn.constant(self.freq, 1.0), 0.01)
        self.assertGreater(rule.B_bar, 20.0)
        self.assertTrue(np.all(rule.B_n.mask))

    def test_apply_cutoff(self):
        phi = GridFn.auto(self.freq, np.exp(-0.5 * self.s ** 2))
        cut = apply_cutoff(phi, lemma2_cutoff(1e4, 2, 0.9))
        inside = np.abs(self.s) < 0.9 * np.sqrt(np.log(1e4))
        np.testing.assert_array_equal(cut.values[~inside], 0.0)
        np.testing.assert_array_equal(cut.values[inside], phi.values[inside])
        self.assertTrue(cut.hermitian)


if __name__ == '__main__':
    unittest.main()
