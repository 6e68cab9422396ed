import unittest
import sys
import os
import io
import tempfile
from contextlib import redirect_stderr, redirect_stdout

# Add parent directory to path so we can import the modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from convlab import main
from utils.errors import EXIT_CONFIG, EXIT_IO, EXIT_OK
from utils.io import read_gridfn, read_report, read_sample

DATA = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")


def run(*argv):
    """Run the command line quietly and return (exit code, stdout)."""
    out = io.StringIO()
    with redirect_stdout(out), redirect_stderr(io.StringIO()):
        code = main(["-q"] + list(argv))
    return code, out.getvalue()


class TestCommandLine(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name

    def tearDown(self):
        self._tmp.cleanup()

    def path(self, *parts):
        return os.path.join(self.tmp, *parts)

    def simulate(self, spec, model, n=2000, seed=1, out="run"):
        return run("simulate", "--model", model, "--spec", spec, "--n", str(n),
                   "--seed", str(seed), "--out", self.path(out))

    def test_simulate_estimate_diagnose(self):
        code, _ = self.simulate(os.path.join(DATA, "model3_gaussian.cfg"), "3")
        self.assertEqual(code, EXIT_OK)
        for name in ("sample.csv", "spec.cfg", "report.txt", os.path.join("truth", "latents.csv"),
                     os.path.join("truth", "phi_xstar.csv"), os.path.join("truth", "truth.txt")):
            self.assertTrue(os.path.exists(self.path("run", name)), name)
        self.assertEqual(read_sample(self.path("run", "sample.csv")).n, 2000)
        self.assertEqual(read_report(self.path("run", "report.txt"))["seed"], "1")

        code, _ = run("estimate", "--model", "3", "--in", self.path("run"), "--grid", "256:10",
                      "--out", self.path("est"))
        self.assertEqual(code, EXIT_OK)
        phi = read_gridfn(self.path("est", "phi_xstar.csv"))
        self.assertEqual(phi.grid.size, 256)
        self.assertAlmostEqual(phi.origin_value.real, 1.0, places=10)
        report = read_report(self.path("est", "report.txt"))
        self.assertEqual(report["grid"], "256:10")
        self.assertEqual(report["variant"], "A")
        self.assertTrue(os.path.exists(self.path("est", "mask.csv")))

        code, text = run("diagnose", "--in", self.path("est"))
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(text.startswith("class: "))
        self.assertIn("phi_u_in_class", text)
        self.assertTrue(os.path.exists(self.path("est", "diagnose.txt")))

    def test_simulation_is_reproducible(self):
        spec = os.path.join(DATA, "model1_laplace.cfg")
        self.simulate(spec, "1", n=50, seed=9, out="a")
        self.simulate(spec, "1", n=50, seed=9, out="b")
        with open(self.path("a", "sample.csv")) as fa, open(self.path("b", "sample.csv")) as fb:
            self.assertEqual(fa.read(), fb.read())

    def test_diagnose_known_error_law(self):
        self.simulate(os.path.join(DATA, "model1_laplace.cfg"), "1", n=50)
        code, text = run("diagnose", "--in", self.path("run"), "--out", self.path("diag"))
        self.assertEqual(code, EXIT_OK)
        self.assertIn("class: ordinary_smooth", text)
        self.assertTrue(os.path.exists(self.path("diag", "diagnose.txt")))

    def test_spec_without_model_key(self):
        spec = self.path("bare.cfg")
        with open(spec, "w") as f:
            f.write("xstar = gaussian(0, 1)\nu = gaussian(0, 0.5)\n")
        code, _ = self.simulate(spec, "1", n=20)
        self.assertEqual(code, EXIT_OK)
        with open(self.path("run", "spec.cfg")) as f:
            self.assertEqual(f.readline().strip(), "model = 1")

    def test_ar1_truth_in_report(self):
        self.simulate(os.path.join(DATA, "ar1.cfg"), "ar1", n=20)
        self.assertEqual(read_report(self.path("run", "truth", "truth.txt"))["rho"], "0.5")

    def test_config_errors(self):
        spec = os.path.join(DATA, "model3_gaussian.cfg")
        self.simulate(spec, "3", n=100)
        self.assertEqual(self.simulate(spec, "1", n=100, out="x")[0], EXIT_CONFIG)
        self.assertEqual(self.simulate(spec, "3", n=1, out="x")[0], EXIT_CONFIG)
        base = ["estimate", "--model", "3", "--in", self.path("run"), "--out", self.path("e")]
        self.assertEqual(run(*base, "--grid", "1023:20")[0], EXIT_CONFIG)
        self.assertEqual(run(*base, "--grid", "256:10", "--safety", "1.5")[0], EXIT_CONFIG)
        self.assertEqual(run(*base, "--grid", "256:10", "--bandwidth", "0")[0], EXIT_CONFIG)
        self.assertEqual(run(*base, "--grid", "256:10", "--cutoff", "lemma2:x")[0], EXIT_CONFIG)
        self.assertEqual(run()[0], EXIT_CONFIG)

    def test_missing_input(self):
        code, _ = run("estimate", "--model", "1", "--in", self.path("nowhere"), "--grid", "64:5",
                      "--out", self.path("e"))
        self.assertEqual(code, EXIT_IO)
        code, _ = run("diagnose", "--in", self.path("nowhere"))
        self.assertEqual(code, EXIT_IO)

    def test_sweep(self):
        config = self.path("sweep.cfg")
        with open(config, "w") as f:
            f.write("model = 3\nxstar = gaussian(0, 1)\nu = gaussian(0, 1)\n"
                    "u_x = gaussian(0, 0.5)\nexact = true\n")
        code, text = run("sweep", "--config", config, "--out", self.path("sweep"))
        self.assertEqual(code, EXIT_OK)
        self.assertIn("Summary: 1/1 replications succeeded", text)
        for name in ("summary.csv", "medians.csv", "report.txt"):
            self.assertTrue(os.path.exists(self.path("sweep", name)), name)


if __name__ == '__main__':
    unittest.main()
