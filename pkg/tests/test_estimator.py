import unittest
import sys
import os
import tempfile
from unittest import mock

import numpy as np

# Add parent directory to path so we can import the modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from estimator import (
    EstimateOptions, EstimationReport, cutoff_rule, diagnose, estimate, estimate_exact, load_sweep,
    medians, parse_cutoff, run_experiment, run_replication, run_sweep, write_sweep,
)
from grid import GridFn, make_grids
from regularization import SUPERSMOOTH
from simulator import generate, load_model_spec, true_cf
from utils.config import SPEC_KEYS, parse_config_text
from utils.errors import ConfigError, NumericalError
from utils.io import read_report

MODEL1 = "model = 1\nxstar = gaussian(0, 1)\nu = gaussian(0, 0.5)\n"
MODEL3 = "model = 3\nxstar = gaussian(0, 1)\nu = gaussian(0, 1)\nu_x = gaussian(0, 0.5)\n"


def spec_from(text):
    return load_model_spec(parse_config_text(text, SPEC_KEYS))


def write_file(directory, name, text):
    path = os.path.join(directory, name)
    with open(path, "w") as f:
        f.write(text)
    return path


class TestCutoffOptions(unittest.TestCase):
    def test_parse_cutoff(self):
        self.assertIsNone(parse_cutoff("none"))
        self.assertIsNone(parse_cutoff(None))
        self.assertEqual(parse_cutoff("heuristic"), "heuristic")
        self.assertEqual(parse_cutoff("lemma2:2"), ("lemma2", 2))
        for text in ("lemma2:x", "lemma2:0", "sharp"):
            with self.assertRaises(ConfigError, msg=text):
                parse_cutoff(text)

    def test_cutoff_rule(self):
        freq, _ = make_grids(1, 256, 10.0)
        self.assertIsNone(cutoff_rule(("lemma2", 2), None, 0.9, freq))
        self.assertIsNone(cutoff_rule(None, 1000, 0.9, freq))
        self.assertEqual(cutoff_rule("heuristic", 1000, 0.9, freq), "heuristic")
        rule = cutoff_rule(("lemma2", 2), 10000, 0.9, freq)
        self.assertAlmostEqual(rule.B_bar, 0.9 * np.sqrt(np.log(100.0)))


class TestEstimate(unittest.TestCase):
    def test_exact_inputs_recover_gaussians(self):
        solution = estimate_exact(spec_from(MODEL3), EstimateOptions())
        s = solution.phi_xstar.grid.axis()
        central = np.abs(s) <= 3.0
        np.testing.assert_allclose(solution.phi_xstar.values[central], np.exp(-0.5 * s[central] ** 2), atol=1e-5)

    def test_sampled_model1(self):
        spec = spec_from(MODEL1)
        sample, _ = generate(spec, 4000, 3)
        solution = estimate(sample, spec, EstimateOptions(256, 10.0))
        self.assertEqual(solution.diagnostics["n"], 4000)
        self.assertGreater(solution.diagnostics["sigma_ecf"], 0.0)
        s = solution.phi_xstar.grid.axis()
        central = (np.abs(s) <= 2.0) & solution.identified_mask.mask
        err = np.abs(solution.phi_xstar.values[central] - np.exp(-0.5 * s[central] ** 2))
        self.assertLess(np.max(err), 0.15)

    def test_lemma2_cutoff_truncates(self):
        spec = spec_from(MODEL1)
        sample, _ = generate(spec, 1000, 4)
        solution = estimate(sample, spec, EstimateOptions(256, 10.0, cutoff=("lemma2", 2)))
        s = solution.phi_xstar.grid.axis()
        radius = 0.9 * np.sqrt(np.log(np.sqrt(1000)))
        np.testing.assert_array_equal(solution.phi_xstar.values[np.abs(s) >= radius], 0.0)


class TestReplications(unittest.TestCase):
    def test_exact_replication_scores(self):
        report = run_replication(spec_from(MODEL3), EstimateOptions(), 0, 0, exact=True)
        self.assertEqual(report.status, "ok")
        self.assertIsNone(report.n)
        self.assertLess(report.metrics["cf_sup_error"], 1e-5)
        self.assertLess(report.metrics["phi_u_sup_error"], 1e-5)
        self.assertGreater(report.metrics["identified_points"], 0)

    def test_failed_replication_is_recorded(self):
        with mock.patch("estimator.estimate_exact", side_effect=NumericalError("no support")):
            report = run_replication(spec_from(MODEL3), EstimateOptions(), 0, 0, exact=True)
        self.assertEqual(report.status, "failed")
        self.assertEqual(report.metrics, {})

    def test_degenerate_sample_is_recorded(self):
        with mock.patch("estimator.estimate_exact", side_effect=ValueError("window outside the grid")):
            report = run_replication(spec_from(MODEL3), EstimateOptions(), 0, 0, exact=True)
        self.assertEqual(report.status, "failed")
        self.assertEqual(report.metrics, {})

    def test_config_error_propagates(self):
        with mock.patch("estimator.estimate_exact", side_effect=ConfigError("unknown law")):
            with self.assertRaises(ConfigError):
                run_replication(spec_from(MODEL3), EstimateOptions(), 0, 0, exact=True)

    def test_sweep_independent_of_workers(self):
        """Replication i always uses seed + i, whatever the worker count"""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_file(tmp, "sweep.cfg", MODEL1 + "n = 300, 600\nreplications = 2\nseed = 5\ngrid = 128:8\n")
            plan = load_sweep(path)
            serial = run_sweep(plan, 1)
            pooled = run_sweep(plan, 2)
        self.assertEqual([(r.n, r.seed) for r in serial], [(300, 5), (300, 6), (600, 5), (600, 6)])
        self.assertEqual([r.metrics for r in serial], [r.metrics for r in pooled])
        self.assertTrue(all(r.status == "ok" for r in serial))

    def test_medians_skip_failures(self):
        spec = spec_from(MODEL1)
        reports = [
            EstimationReport(spec, 100, 0, metrics={"cf_ise": 1.0}),
            EstimationReport(spec, 100, 1, metrics={"cf_ise": 3.0}),
            EstimationReport(spec, 100, 2, metrics={"cf_ise": 100.0}, status="failed"),
            EstimationReport(spec, 200, 0, metrics={"cf_ise": 0.5}),
        ]
        table = medians(reports)
        self.assertEqual(table[100]["cf_ise"], 2.0)
        self.assertEqual(table[200]["cf_ise"], 0.5)


class TestSweepFiles(unittest.TestCase):
    def test_load_sweep_defaults(self):
        with tempfile.TemporaryDirectory() as tmp:
            plan = load_sweep(write_file(tmp, "plain.cfg", MODEL1))
        self.assertEqual(plan.sizes, (1000,))
        self.assertEqual(plan.replications, 1)
        self.assertEqual((plan.options.N, plan.options.s_max), (1024, 20.0))
        self.assertFalse(plan.exact)
        self.assertTrue(plan.out.endswith("plain_out"))

    def test_load_sweep_errors_name_the_line(self):
        cases = {
            "safety = 1.5\n": "bad.cfg:4:",
            "cutoff = lemma2:x\n": "bad.cfg:4:",
            "n = 1\n": "bad.cfg:4:",
            "grid = 1023:20\n": "bad.cfg:4:",
            "bandwidth = -1\n": "bad.cfg:4:",
            "colour = red\n": "bad.cfg:4:",
        }
        with tempfile.TemporaryDirectory() as tmp:
            for extra, where in cases.items():
                path = write_file(tmp, "bad.cfg", MODEL1 + extra)
                with self.assertRaises(ConfigError, msg=extra) as ctx:
                    load_sweep(path)
                self.assertIn(where, str(ctx.exception))

    def test_write_sweep(self):
        spec = spec_from(MODEL1)
        reports = [EstimationReport(spec, 100, 7, metrics={"cf_ise": 0.25, "cf_sup_error": 0.5})]
        with tempfile.TemporaryDirectory() as tmp:
            path = write_file(tmp, "s.cfg", MODEL1 + "cutoff = lemma2:2\n")
            plan = load_sweep(path)
            files = write_sweep(os.path.join(tmp, "out"), plan, reports)
            self.assertEqual([os.path.basename(f) for f in files], ["summary.csv", "medians.csv", "report.txt"])
            with open(files[0]) as f:
                lines = f.read().splitlines()
            self.assertEqual(lines[0], "replication,n,seed,ok,cf_ise,cf_sup_error")
            self.assertEqual(lines[1], "0,100,7,1,0.25,0.5")
            report = read_report(files[2])
        self.assertEqual(report["cutoff"], "lemma2:2")
        self.assertEqual(report["median_cf_ise_n100"], "0.25")
        self.assertEqual(report["failed"], "0")

    def test_run_experiment_exact(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_file(tmp, "exact.cfg", MODEL3 + "exact = true\nreplications = 1\n")
            reports = run_experiment(path, 1, os.path.join(tmp, "out"))
            self.assertEqual(len(reports), 1)
            self.assertTrue(os.path.exists(os.path.join(tmp, "out", "medians.csv")))
        self.assertLess(reports[0].metrics["cf_sup_error"], 1e-5)

    def test_zero_replications(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_file(tmp, "none.cfg", MODEL1 + "replications = 0\n")
            self.assertEqual(run_experiment(path, 1, os.path.join(tmp, "out")), [])


class TestDiagnose(unittest.TestCase):
    def setUp(self):
        self.freq, _ = make_grids(1, 1024, 20.0)

    def test_gaussian_error(self):
        regularity, rows = diagnose(true_cf(load_model_spec(parse_config_text(
            MODEL1, SPEC_KEYS)).law("u"), self.freq))
        self.assertEqual(regularity.kind, SUPERSMOOTH)
        self.assertEqual([r[0] for r in rows], [0, 1, 2])
        m, ok, value, inv_ok, _ = rows[0]
        self.assertTrue(ok)
        self.assertAlmostEqual(value, 2 * np.sqrt(2 * np.pi), places=6)
        self.assertFalse(inv_ok)

    def test_laplace_error(self):
        s = self.freq.axis()
        _, rows = diagnose(GridFn.auto(self.freq, 1.0 / (1.0 + 0.25 * s ** 2)))
        self.assertAlmostEqual(rows[0][2], 2 * np.pi, delta=1e-4)
        self.assertTrue(rows[2][3])

    def test_noise_floor_blocks_inverse(self):
        s = self.freq.axis()
        _, rows = diagnose(GridFn.auto(self.freq, np.exp(-0.5 * s ** 2)), n=1000)
        self.assertTrue(all(not r[3] and r[4] == float("inf") for r in rows))


if __name__ == '__main__':
    unittest.main()
