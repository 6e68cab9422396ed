import unittest
import sys
import os
import tempfile

import numpy as np

# Add parent directory to path so we can import the modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from grid import GridFn, make_grids
from moments import Sample
from support import mask_from_array
from utils.config import SPEC_KEYS, SWEEP_KEYS, parse_config_text, parse_grid, parse_matrix, read_config, split_call
from utils.errors import (
    EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, ConfigError, CurlGateError, NumericalError, exit_code_for,
)
from utils.io import (
    fmt, read_columns, read_gridfn, read_report, read_sample, write_gridfn, write_latents, write_mask,
    write_report, write_sample,
)
from utils.parallel import parallel_execute, resolve_jobs, split_workload


def add(a, b):
    return a + b


class TestConfig(unittest.TestCase):
    def test_parse_with_comments(self):
        config = parse_config_text("# model\nmodel = 3   # trailing\n\nu = laplace(0.5)\n", SPEC_KEYS)
        self.assertEqual(config.get_str("model"), "3")
        self.assertEqual(config.raw("u"), "laplace(0.5)")
        self.assertEqual(config.line_of("u"), 4)
        self.assertEqual(config.get_str("variant"), "A")
        self.assertEqual(config.get_int("d"), 1)

    def test_rejections_carry_line_numbers(self):
        cases = {
            "model = 1\nmodel = 2\n": "<config>:2: duplicate key 'model'",
            "model 1\n": "<config>:1:",
            "colour = red\n": "<config>:1: unknown key 'colour'",
            "model =\n": "<config>:1: empty value",
        }
        for text, message in cases.items():
            with self.assertRaises(ConfigError, msg=text) as ctx:
                parse_config_text(text, SPEC_KEYS)
            self.assertIn(message, str(ctx.exception))

    def test_typed_getters(self):
        config = parse_config_text("d = two\nswap_labels = maybe\nrho = x\nn = 100, 1e3\n", SWEEP_KEYS)
        with self.assertRaises(ConfigError):
            config.get_int("d")
        with self.assertRaises(ConfigError):
            config.get_bool("swap_labels")
        with self.assertRaises(ConfigError):
            config.get_float("rho")
        self.assertEqual(config.get_int_list("n"), [100, 1000])

    def test_read_config_uses_file_name(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "m.cfg")
            with open(path, "w") as f:
                f.write("model = 1\nwidth = 3\n")
            with self.assertRaises(ConfigError) as ctx:
                read_config(path, SPEC_KEYS)
        self.assertIn("m.cfg:2:", str(ctx.exception))

    def test_parse_grid(self):
        self.assertEqual(parse_grid("1024:20"), (1024, 20.0))
        for text in ("1024", "1023:20", "4:20", "64:-1", "a:b"):
            with self.assertRaises(ValueError, msg=text):
                parse_grid(text)

    def test_split_call(self):
        self.assertEqual(split_call("mixture(0.3, 0, gaussian(0, 1))"),
                         ("mixture", ["0.3", "0", "gaussian(0, 1)"]))
        self.assertEqual(split_call("cantor"), ("cantor", []))
        self.assertEqual(split_call("cantor()"), ("cantor", []))
        for text in ("f(1, )", "f(1))", "f((1)", "two words"):
            with self.assertRaises(ValueError, msg=text):
                split_call(text)

    def test_parse_matrix(self):
        self.assertEqual(parse_matrix("1, 0; 0, 1; 1, 1"), [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        with self.assertRaises(ValueError):
            parse_matrix("1, 0; 1")


class TestErrors(unittest.TestCase):
    def test_exit_codes(self):
        self.assertEqual(exit_code_for(ConfigError("bad")), EXIT_CONFIG)
        self.assertEqual(exit_code_for(CurlGateError(0.5, 1e-4)), EXIT_NUMERICAL)
        self.assertEqual(exit_code_for(NumericalError("x")), EXIT_NUMERICAL)
        self.assertEqual(exit_code_for(FileNotFoundError("gone")), EXIT_IO)
        with self.assertRaises(KeyError):
            exit_code_for(KeyError("other"))

    def test_messages(self):
        self.assertEqual(str(ConfigError("bad", "a.cfg", 3)), "a.cfg:3: bad")
        self.assertEqual(str(ConfigError("bad", "a.cfg")), "a.cfg: bad")
        self.assertIn("exceeds tolerance", str(CurlGateError(0.5, 1e-4)))
        self.assertIsInstance(ConfigError("bad"), ValueError)


class TestFiles(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name

    def tearDown(self):
        self._tmp.cleanup()

    def path(self, name):
        return os.path.join(self.tmp, name)

    def test_fmt(self):
        self.assertEqual(fmt(True), "1")
        self.assertEqual(fmt(np.int64(3)), "3")
        self.assertEqual(fmt(0.1), "0.10000000000000001")
        self.assertEqual(fmt("lemma2:2"), "lemma2:2")

    def test_gridfn_file_is_exact(self):
        freq, space = make_grids(1, 64, 5.0)
        s = freq.axis()
        phi = GridFn.auto(freq, np.exp(0.3j * s - 0.5 * s ** 2))
        write_gridfn(self.path("phi.csv"), phi)
        back = read_gridfn(self.path("phi.csv"))
        self.assertTrue(back.grid.same_as(freq))
        self.assertTrue(back.hermitian)
        np.testing.assert_array_equal(back.values, phi.values)
        with open(self.path("phi.csv")) as f:
            self.assertTrue(f.readline().startswith("# kind=freq d=1 N=64"))
            self.assertEqual(f.readline().strip(), "i1,re,im")
            self.assertTrue(f.readline().startswith("-32,"))
        f_x = GridFn(space, np.exp(-space.axis() ** 2))
        write_gridfn(self.path("f.csv"), f_x)
        self.assertTrue(read_gridfn(self.path("f.csv")).grid.same_as(space))

    def test_gridfn_two_dimensional(self):
        freq, _ = make_grids(2, 8, 2.0)
        s1, s2 = freq.coords()
        fn = GridFn(freq, s1 + 2j * s2)
        write_gridfn(self.path("two.csv"), fn)
        np.testing.assert_array_equal(read_gridfn(self.path("two.csv")).values, fn.values)

    def test_truncated_gridfn_file(self):
        with open(self.path("bad.csv"), "w") as f:
            f.write("# kind=freq d=1 N=8 ds=0.5 hermitian=0\ni1,re,im\n-4,1,0\n")
        with self.assertRaises(ValueError):
            read_gridfn(self.path("bad.csv"))
        with open(self.path("nohead.csv"), "w") as f:
            f.write("i1,re,im\n")
        with self.assertRaises(ValueError):
            read_gridfn(self.path("nohead.csv"))

    def test_sample_file(self):
        rng = np.random.default_rng(0)
        sample = Sample(z=rng.normal(size=(20, 2)), x=rng.normal(size=(20, 2)), y=rng.normal(size=20))
        write_sample(self.path("sample.csv"), sample)
        back = read_sample(self.path("sample.csv"))
        np.testing.assert_array_equal(back.z, sample.z)
        np.testing.assert_array_equal(back.x, sample.x)
        np.testing.assert_array_equal(back.y, sample.y)
        self.assertIsNone(back.y2)
        self.assertEqual(list(read_columns(self.path("sample.csv"))), ["z1", "z2", "x1", "x2", "y"])

    def test_sample_without_z(self):
        with open(self.path("noz.csv"), "w") as f:
            f.write("x1\n1\n2\n")
        with self.assertRaises(ValueError):
            read_sample(self.path("noz.csv"))

    def test_latents_and_mask(self):
        write_latents(self.path("lat.csv"), {"xstar": np.zeros((3, 1)), "eta": np.ones(3)})
        self.assertEqual(list(read_columns(self.path("lat.csv"))), ["xstar1", "eta1"])
        freq, _ = make_grids(1, 8, 4.0)
        write_mask(self.path("mask.csv"), mask_from_array(freq, [0, 0, 1, 1, 1, 0, 0, 0]))
        with open(self.path("mask.csv")) as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], "i1,in_mask,component")
        self.assertEqual(len(lines), 9)
        self.assertTrue(lines[5].startswith("0,1,"))

    def test_report(self):
        write_report(self.path("report.txt"), {"model": "3", "grid": "1024:20", "rho_hat": 0.5, "exact": False})
        report = read_report(self.path("report.txt"))
        self.assertEqual(report, {"model": "3", "grid": "1024:20", "rho_hat": "0.5", "exact": "0"})


class TestParallel(unittest.TestCase):
    def test_split_workload(self):
        self.assertEqual(split_workload(10, 3), [(0, 4), (4, 7), (7, 10)])
        self.assertEqual(split_workload(2, 4), [(0, 1), (1, 2)])
        with self.assertRaises(ValueError):
            split_workload(5, 0)

    def test_resolve_jobs(self):
        self.assertEqual(resolve_jobs(3), 3)
        self.assertGreaterEqual(resolve_jobs(0), 1)
        self.assertGreaterEqual(resolve_jobs(None), 1)
        with self.assertRaises(ValueError):
            resolve_jobs(-2)

    def test_results_keep_input_order(self):
        args = [(i, i) for i in range(12)]
        self.assertEqual(parallel_execute(add, args, 1), [2 * i for i in range(12)])
        self.assertEqual(parallel_execute(add, args, 5), [2 * i for i in range(12)])
        self.assertEqual(parallel_execute(add, [(1, 2), (3, 4)], 2), [3, 7])
        self.assertEqual(parallel_execute(add, [], 4), [])


if __name__ == '__main__':
    unittest.main()
