"""
Tests for the pbmix command-line driver and run configuration.
"""

import io
import json
import os
import sys
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from unittest.mock import patch

import pandas as pd

# Add project root to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.cli import main
from src.config import RunConfig, env_threads, load_config
from src.errors import ConfigError
from src.mesh import read_mesh


def run(*argv):
    """main() with captured stdout/stderr; returns (code, stdout)."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue()


class TestConfig(unittest.TestCase):

    def test_defaults(self):
        """Test the default run configuration."""
        cfg = RunConfig().validate()
        self.assertEqual(cfg.k, 0)
        self.assertTrue(cfg.use_q)
        self.assertIsNone(cfg.levels)

    def test_json_and_overrides(self):
        """Test command-line overrides win over the JSON config."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "run.json")
            with open(path, "w", encoding="utf-8") as f:
                json.dump({"case": "ex2", "levels": 4}, f)
            cfg = load_config(path).merged({"levels": 5, "out": None})
        self.assertEqual(cfg.case, "ex2")
        self.assertEqual(cfg.levels, 5)

    def test_unknown_key(self):
        """Test an unknown configuration key is rejected."""
        with self.assertRaises(ConfigError):
            RunConfig().merged({"bogus": 1})

    def test_missing_file(self):
        """Test a missing config file raises ConfigError."""
        with self.assertRaises(ConfigError):
            load_config("/nonexistent/run.json")

    @patch.dict(os.environ, {"PBMIX_THREADS": "3"})
    def test_threads_from_environment(self):
        """Test the thread count is read from PBMIX_THREADS."""
        self.assertEqual(env_threads(), 3)
        self.assertEqual(RunConfig().threads, 3)

    @patch.dict(os.environ, {"PBMIX_THREADS": "many"})
    def test_bad_threads(self):
        """Test a non-integer PBMIX_THREADS is rejected."""
        with self.assertRaises(ConfigError):
            env_threads()


class TestMeshCommand(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_structured_mesh(self):
        """Test writing a 2×2 structured mesh."""
        path = os.path.join(self.tmp.name, "m.txt")
        code, _ = run("mesh", "--nx", "2", "--out", path)
        self.assertEqual(code, 0)
        mesh = read_mesh(path)
        self.assertEqual(mesh.n_vertices, 9)
        self.assertEqual(mesh.n_cells, 8)

    def test_zero_cells_is_usage_error(self):
        """Test nx = 0 exits with a usage error."""
        code, _ = run("mesh", "--nx", "0", "--out", os.path.join(self.tmp.name, "m.txt"))
        self.assertEqual(code, 2)

    def test_missing_out(self):
        """Test the mesh command requires --out."""
        self.assertEqual(run("mesh", "--nx", "2")[0], 2)

    def test_unknown_case(self):
        """Test an unknown case exits with a usage error."""
        self.assertEqual(run("mesh", "--case", "ex9", "--nx", "2")[0], 2)

    def test_fixture_case_level(self):
        """Test the ex3 fixture refined to level 2."""
        path = os.path.join(self.tmp.name, "ex3.txt")
        code, _ = run("mesh", "--case", "ex3-line", "--level", "2", "--out", path)
        self.assertEqual(code, 0)
        self.assertEqual(read_mesh(path).n_cells, 112)

    def test_mesh_then_solve(self):
        """Test a written mesh can be solved on."""
        path = os.path.join(self.tmp.name, "m.txt")
        self.assertEqual(run("mesh", "--case", "constant", "--nx", "3", "--out", path)[0], 0)
        dump = os.path.join(self.tmp.name, "fields.csv")
        code, _ = run("solve", "--case", "constant", "--mesh", path, "--out", dump, "--quiet")
        self.assertEqual(code, 0)
        self.assertEqual(len(pd.read_csv(dump)), 18)


class TestSolveCommand(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_constant_dump(self):
        """Test the per-cell field dump of the constant case."""
        dump = os.path.join(self.tmp.name, "fields.csv")
        code, stdout = run("solve", "--case", "constant", "--level", "2", "--out", dump)
        self.assertEqual(code, 0)
        self.assertTrue(stdout.startswith("u_h_L4 0"))
        df = pd.read_csv(dump)
        self.assertEqual(list(df.columns), ["cell", "cx", "cy", "psi_h", "psi_sharp", "zeta_x", "zeta_y"])
        self.assertEqual(len(df), 8)
        self.assertLess((df["psi_h"] - 1.0).abs().max(), 1e-10)
        self.assertLess((df["psi_sharp"] - 1.0).abs().max(), 1e-10)

    def test_deterministic(self):
        """Test two identical solves write identical files."""
        paths = [os.path.join(self.tmp.name, f"run{i}.csv") for i in range(2)]
        for path in paths:
            self.assertEqual(run("solve", "--case", "ex1-smooth", "--level", "2", "--out", path)[0], 0)
        with open(paths[0], "rb") as a, open(paths[1], "rb") as b:
            self.assertEqual(a.read(), b.read())

    def test_dump_to_stdout(self):
        """Test the dump goes to stdout without --out."""
        code, stdout = run("solve", "--case", "constant", "--quiet")
        self.assertEqual(code, 0)
        lines = stdout.splitlines()
        self.assertTrue(lines[0].startswith("u_h_L4"))
        self.assertEqual(lines[1].split(",")[0], "cell")
        self.assertEqual(len(lines), 4)

    def test_missing_mesh_file(self):
        """Test a missing mesh file exits with a runtime error."""
        self.assertEqual(run("solve", "--case", "constant", "--mesh", "/nonexistent/m.txt")[0], 1)


class TestConvergenceCommand(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_report_csv(self):
        """Test the convergence report CSV for ex1-smooth."""
        path = os.path.join(self.tmp.name, "report.csv")
        code, _ = run("convergence", "--case", "ex1-smooth", "--levels", "2", "--out", path, "--quiet")
        self.assertEqual(code, 0)
        df = pd.read_csv(path)
        self.assertEqual(len(df), 2)
        self.assertEqual(df["dofs"].tolist(), [24, 88])
        self.assertAlmostEqual(df["h"][1], 0.3536, places=4)

    def test_direct_path(self):
        """Test the --no-q study on ex2."""
        path = os.path.join(self.tmp.name, "ex2.csv")
        code, _ = run("convergence", "--case", "ex2", "--no-q", "--levels", "2", "--out", path, "--quiet")
        self.assertEqual(code, 0)
        self.assertEqual(len(pd.read_csv(path)), 2)

    def test_direct_path_rejected_for_weak_load(self):
        """Test --no-q is refused for a weak-form load."""
        self.assertEqual(run("convergence", "--case", "ex1-rough", "--no-q", "--levels", "2")[0], 2)

    def test_config_file(self):
        """Test a study driven by a JSON config file."""
        cfg = os.path.join(self.tmp.name, "run.json")
        out = os.path.join(self.tmp.name, "report.csv")
        with open(cfg, "w", encoding="utf-8") as f:
            json.dump({"case": "constant", "levels": 2, "out": out}, f)
        self.assertEqual(run("convergence", "--config", cfg, "--quiet")[0], 0)
        self.assertTrue(os.path.exists(out))

    def test_bad_config_key(self):
        """Test a bad config key exits with a usage error."""
        cfg = os.path.join(self.tmp.name, "run.json")
        with open(cfg, "w", encoding="utf-8") as f:
            json.dump({"bogus": 1}, f)
        self.assertEqual(run("convergence", "--config", cfg)[0], 2)


class TestSelftestCommand(unittest.TestCase):

    def test_all_checks_pass(self):
        """Test every built-in self check passes."""
        code, stdout = run("selftest")
        self.assertEqual(code, 0)
        self.assertIn("10/10", stdout)


if __name__ == '__main__':
    unittest.main()
