import unittest
import sys
import os
import tempfile

import numpy as np

# Add parent directory to path so we can import the modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from estimator import (
    EstimateOptions, estimate, estimate_exact, load_sweep, medians, run_experiment, run_replication,
    run_sweep,
)
from simulator import generate, load_model_spec
from utils.config import SPEC_KEYS, read_config

DATA = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")
FULL = os.environ.get("CONVLAB_FULL") == "1"
JOBS = int(os.environ.get("CONVLAB_JOBS", "0"))


def data_spec(name):
    return load_model_spec(read_config(os.path.join(DATA, name), SPEC_KEYS))


def median_metric(name, metric):
    table = medians(run_sweep(load_sweep(os.path.join(DATA, name)), JOBS))
    return {n: row[metric] for n, row in table.items()}


def reduced_medians(text, metric):
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "reduced.cfg")
        with open(path, "w") as f:
            f.write(text)
        table = medians(run_sweep(load_sweep(path), JOBS))
    return {n: row[metric] for n, row in table.items()}


MODEL1_GAUSSIAN = ("model = 1\nxstar = gaussian(0, 1)\nu = gaussian(0, 1)\n"
                   "n = 400, 4000, 40000\nreplications = 5\nseed = 1\ngrid = 256:10\n")


class TestDeskScale(unittest.TestCase):
    def test_uniform_error_through_zeros(self):
        """Model 1 with sin(s)/s error is solved across its zeros"""
        solution = estimate_exact(data_spec("model1_uniform.cfg"), EstimateOptions())
        s = solution.phi_xstar.grid.axis()
        ds = solution.phi_xstar.grid.spacing
        k = np.round(s / np.pi)
        away = (k == 0) | (np.abs(s - k * np.pi) > 3 * ds)
        keep = solution.identified_mask.mask & away
        self.assertTrue(np.all(solution.identified_mask.mask[np.abs(s) <= 10.0]))
        self.assertGreater(solution.diagnostics["filled_zero_points"], 0)
        err = np.abs(solution.phi_xstar.values[keep] - np.exp(-0.5 * s[keep] ** 2))
        self.assertLess(np.max(err), 1e-3)

    def test_sampled_reconstruction_residual(self):
        spec = data_spec("model3_gaussian.cfg")
        sample, _ = generate(spec, 5000, 21)
        solution = estimate(sample, spec, EstimateOptions(256, 10.0))
        self.assertLess(solution.diagnostics["reconstruction_residual"], 1e-8)

    def test_exact_rho(self):
        report = run_replication(data_spec("ar1.cfg"), EstimateOptions(), 0, 0, exact=True)
        self.assertEqual(report.status, "ok")
        self.assertLess(report.metrics["rho_error"], 1e-8)

    def test_csvs_identical_across_worker_counts(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "det.cfg")
            with open(path, "w") as f:
                f.write("model = 3\nxstar = gaussian(0, 1)\nu = laplace(0.5)\nu_x = gaussian(0, 0.5)\n"
                        "variant = B\nn = 500, 1000\nreplications = 4\nseed = 11\ngrid = 256:10\n")
            run_experiment(path, 1, os.path.join(tmp, "one"))
            run_experiment(path, 8, os.path.join(tmp, "eight"))
            for name in ("summary.csv", "medians.csv"):
                with open(os.path.join(tmp, "one", name), "rb") as a, open(os.path.join(tmp, "eight", name), "rb") as b:
                    self.assertEqual(a.read(), b.read(), name)


class TestReducedSweeps(unittest.TestCase):
    """The replication sweeps at a size that runs with every test pass."""

    def test_ordinary_smooth_error_converges(self):
        ise = reduced_medians("model = 1\nxstar = gaussian(0, 1)\nu = laplace(0.5)\n"
                              "n = 400, 4000, 40000\nreplications = 5\nseed = 1\ngrid = 256:10\n"
                              "cutoff = none\n", "cf_ise")
        self.assertLess(ise[4000], ise[400])
        self.assertLess(ise[40000], ise[4000])

    def test_supersmooth_error_needs_cutoff(self):
        """A hundred times more data leaves the unregularized error far above the cut-off error"""
        raw = reduced_medians(MODEL1_GAUSSIAN + "cutoff = none\n", "cf_ise")
        cut = reduced_medians(MODEL1_GAUSSIAN + "cutoff = lemma2:2\nsafety = 0.9\n", "cf_ise")
        self.assertLess(cut[4000], cut[400])
        self.assertLess(cut[40000], cut[4000])
        for n in (400, 4000, 40000):
            self.assertGreater(raw[n], 1.0)
            self.assertGreater(raw[n], 1e3 * cut[n])
        self.assertGreater(raw[40000], 1e3 * cut[400])

    def test_mass_point(self):
        mass = reduced_medians("model = 1\nxstar = mixture(0.3, 0, gaussian(0, 1))\nu = laplace(0.25)\n"
                               "n = 20000\nreplications = 5\nseed = 7\ngrid = 2048:40\n",
                               "mass_point_estimate")
        self.assertAlmostEqual(mass[20000], 0.3, delta=0.08)

    def test_sampled_rho(self):
        err = reduced_medians("model = ar1\nrho = 0.5\nxstar = gaussian(0, 1)\nu = gaussian(0, 0.5)\n"
                              "eta = gaussian(0, 0.5)\neta1 = gaussian(0, 0.5)\n"
                              "n = 20000\nreplications = 5\nseed = 3\n", "rho_error")
        self.assertLess(err[20000], 0.1)


@unittest.skipUnless(FULL, "set CONVLAB_FULL=1 for the replication sweeps")
class TestSweeps(unittest.TestCase):
    def test_ordinary_smooth_error_converges(self):
        ise = median_metric("sweep_model1_laplace.cfg", "cf_ise")
        self.assertLess(ise[10000], ise[1000])
        self.assertLess(ise[100000], ise[10000])

    def test_supersmooth_error_needs_cutoff(self):
        """Without a cut-off the Gaussian plug-in error stays astronomically large"""
        raw = median_metric("sweep_model1_gaussian.cfg", "cf_ise")
        cut = median_metric("sweep_model1_gaussian_lemma2.cfg", "cf_ise")
        self.assertLess(cut[10000], cut[1000])
        self.assertLess(cut[100000], cut[10000])
        for n in (1000, 10000, 100000):
            self.assertGreater(raw[n], 1e3)
            self.assertGreater(raw[n], 1e3 * cut[n])

    def test_mass_point(self):
        mass = median_metric("sweep_mass_point.cfg", "mass_point_estimate")
        self.assertAlmostEqual(mass[100000], 0.3, delta=0.05)

    def test_sampled_rho(self):
        err = median_metric("sweep_ar1.cfg", "rho_error")
        self.assertLess(err[100000], 0.05)


if __name__ == '__main__':
    unittest.main()
