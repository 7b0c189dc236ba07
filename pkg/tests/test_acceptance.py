"""
End-to-end convergence studies on the manufactured cases.

These run the full seven-level hierarchies (up to ~82k DOFs) and take a few
minutes; each study is solved once per class.
"""

import os
import sys
import unittest

# Add project root to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.analysis import builtin_case, run_convergence


class TestSmoothMixedBoundary(unittest.TestCase):
    """ex1-smooth, k = 0, regularised load, 7 levels."""

    @classmethod
    def setUpClass(cls):
        cls.report = run_convergence(builtin_case("ex1-smooth"), levels=7)

    def test_l4_rate_settles_at_one(self):
        """Test the L⁴ rate of ψ_h is one on levels 4 to 7."""
        rates = self.report.eoc("e_psi_l4")
        for level in (4, 5, 6, 7):
            self.assertAlmostEqual(rates[level - 1], 1.0, delta=0.05)

    def test_l4_rate_history(self):
        """Test the L⁴ errors fall at every level and the rate is positive before it settles."""
        col = self.report.column("e_psi_l4")
        self.assertTrue(all(b < a for a, b in zip(col, col[1:])))
        rates = self.report.eoc("e_psi_l4")
        # levels 2-3 are pre-asymptotic on this mesh family
        self.assertTrue(all(r > 0.5 for r in rates[1:3]), rates)

    def test_postprocess_superconverges(self):
        """Test the postprocessed field converges at second order."""
        self.assertAlmostEqual(self.report.eoc("e_post_l2")[6], 2.0, delta=0.1)

    def test_div_norm_rate(self):
        """Test the L^{4/3} divergence-norm flux rate on the finest level."""
        rate = self.report.eoc("e_flux_div43")[6]
        self.assertTrue(0.70 <= rate <= 1.05, rate)

    def test_absolute_l4_error(self):
        """Test the level-4 mesh size and L⁴ error magnitude."""
        record = self.report.records[3]
        self.assertAlmostEqual(record.h, 0.0884, places=4)
        self.assertAlmostEqual(record.e_psi_l4, 4.36e-2, delta=4.36e-3)

    def test_errors_decrease(self):
        """Test all error columns are positive and fall from level 3 on."""
        for name in ("e_flux_l2", "e_flux_div43", "e_psi_l4", "e_post_l2"):
            col = self.report.column(name)
            self.assertTrue(all(e > 0 for e in col))
            self.assertTrue(all(b <= a for a, b in zip(col[2:], col[3:])), name)


class TestRoughLoad(unittest.TestCase):
    """ex1-rough: H⁻¹ load through the weak form."""

    @classmethod
    def setUpClass(cls):
        cls.report = run_convergence(builtin_case("ex1-rough"), levels=7)

    def test_flux_rate(self):
        """Test the reduced L² flux rate under an H⁻¹ load."""
        rate = self.report.eoc("e_flux_l2")[6]
        self.assertTrue(0.20 <= rate <= 0.35, rate)

    def test_l4_rate(self):
        """Test the L⁴ rate of ψ_h stays near one under an H⁻¹ load."""
        rate = self.report.eoc("e_psi_l4")[6]
        self.assertTrue(0.90 <= rate <= 1.05, rate)

    def test_postprocess_rate(self):
        """Test the postprocessed rate under an H⁻¹ load."""
        rate = self.report.eoc("e_post_l2")[6]
        self.assertTrue(1.0 <= rate <= 1.5, rate)

    def test_div_norm_undefined(self):
        """Test the divergence-norm column is left empty for an H⁻¹ load."""
        self.assertTrue(all(d is None for d in self.report.column("e_flux_div43")))
        self.assertEqual(self.report.flux_column, "e_flux_l2")


class TestRoughDensity(unittest.TestCase):
    """ex2 with Qg and with the plain density g."""

    @classmethod
    def setUpClass(cls):
        case = builtin_case("ex2")
        cls.with_q = run_convergence(case, levels=7, use_q=True)
        cls.direct = run_convergence(case, levels=7, use_q=False)

    def test_regularised_postprocess_rate(self):
        """Test the regularised load restores second-order postprocessing."""
        rates = self.with_q.eoc("e_post_l2")
        self.assertGreaterEqual(rates[5], 1.90)
        self.assertGreaterEqual(rates[6], 1.90)

    def test_direct_postprocess_rate(self):
        """Test the plain density limits the postprocessed rate."""
        rate = self.direct.eoc("e_post_l2")[6]
        self.assertTrue(1.50 <= rate <= 1.75, rate)

    def test_l4_rates(self):
        """Test the L⁴ rate is one with and without the regulariser."""
        for report in (self.with_q, self.direct):
            self.assertAlmostEqual(report.eoc("e_psi_l4")[6], 1.0, delta=0.05)


class TestConstantPipeline(unittest.TestCase):

    def test_exact_through_every_stage(self):
        """Test a constant solution is reproduced exactly at every level."""
        report = run_convergence(builtin_case("constant"), levels=3)
        for r in report.records:
            self.assertLess(max(r.e_flux_l2, r.e_flux_div43, r.e_psi_l4, r.e_post_l2), 1e-10)


class TestLineSource(unittest.TestCase):
    """ex3-line from the 28-cell starting mesh against a reference two levels finer."""

    @classmethod
    def setUpClass(cls):
        cls.report = run_convergence(builtin_case("ex3-line"), levels=4)

    def test_starting_mesh(self):
        """Test the study starts at 75 DOFs with h = 0.5."""
        first = self.report.records[0]
        self.assertEqual(first.dofs, 75)
        self.assertAlmostEqual(first.h, 0.5, places=12)

    def test_errors_shrink(self):
        """Test every reported error is positive and the postprocessed error falls at each level."""
        for name in ("e_flux_l2", "e_psi_l4", "e_post_l2"):
            col = self.report.column(name)
            self.assertTrue(all(e > 0 for e in col), name)
            self.assertLess(col[-1], col[0], name)
        col = self.report.column("e_post_l2")
        self.assertTrue(all(b < a for a, b in zip(col, col[1:])), col)

    def test_postprocess_rate(self):
        """Test the final postprocessed rate under the line source lies in [1.0, 1.4]."""
        rate = self.report.eoc("e_post_l2")[-1]
        self.assertTrue(1.0 <= rate <= 1.4, rate)


if __name__ == '__main__':
    unittest.main()
