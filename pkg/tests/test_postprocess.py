"""
Tests for the element-local postprocess ψ♯.
"""

import os
import sys
import unittest

import numpy as np

# Add project root to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.analysis import builtin_case, solve_level
from src.errors import LocalSingular
from src.fem_core import (
    FluxField,
    ScalarField,
    VectorField,
    eval_pk,
    interpolate_rt0,
    map_points,
    triangle_rule,
)
from src.mesh import all_dirichlet, build_mesh, generate_structured, uniform_refine
from src.postprocess import stenberg
from src.system import CoefficientSet


def constant(value):
    return lambda X: np.full(X.shape[:-1], float(value))


def random_triangle(rng):
    while True:
        pts = rng.uniform(-1.0, 1.0, size=(3, 2))
        e1, e2 = pts[1] - pts[0], pts[2] - pts[0]
        area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
        if abs(area) > 0.1:
            return pts if area > 0 else pts[[0, 2, 1]]


def single_cell(pts=((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))):
    return build_mesh(pts, [[0, 1, 2]], all_dirichlet)


class TestSingleCell(unittest.TestCase):

    def test_constant_flux_gives_linear_field(self):
        """ε = 1, u = 0, constant ζ: ∇ψ♯ = ζ and the mean is kept."""
        mesh = single_cell()
        c = np.array([0.4, -1.3])
        zeta = interpolate_rt0(mesh, lambda X: np.broadcast_to(c, X.shape))
        psi = ScalarField(mesh, 0, [[2.0]])
        post = stenberg(mesh, CoefficientSet(constant(1), constant(1), VectorField.zero(mesh)), zeta, psi, 0)
        X = mesh.centroids[:, None, :]
        np.testing.assert_allclose(post.field.gradient(X)[0, 0], c, atol=1e-12)
        self.assertAlmostEqual(post.field.cell_means()[0], 2.0, places=12)

    def test_dense_oracle(self):
        """Batched solve against a per-cell elimination of the multiplier."""
        rng = np.random.default_rng(11)
        for _ in range(10):
            mesh = single_cell(random_triangle(rng))
            eps = rng.uniform(0.5, 2.0)
            u_h = VectorField(mesh, 1, rng.normal(size=(1, 3, 2)))
            zeta = FluxField(mesh, rng.normal(size=3))
            psi = ScalarField(mesh, 0, rng.normal(size=(1, 1)))
            post = stenberg(mesh, CoefficientSet(constant(eps), constant(1), u_h), zeta, psi, 0)

            X, W = map_points(mesh, triangle_rule(8))
            P, dP = eval_pk(mesh, 1, X)
            drive = zeta.evaluate(X) + u_h.evaluate(X) * psi.evaluate(X)[..., None]
            S = eps * np.einsum("q,qid,qjd->ij", W[0], dP[0], dP[0])
            r = np.einsum("q,qd,qid->i", W[0], drive[0], dP[0])
            grad_part = np.linalg.solve(S[1:, 1:], r[1:])
            means = np.einsum("q,qi->i", W[0], P[0]) / mesh.areas[0]
            c0 = psi.coeffs[0, 0] - means[1:] @ grad_part
            np.testing.assert_allclose(post.field.coeffs[0], np.concatenate([[c0], grad_part]), atol=1e-11)


class TestMeshwide(unittest.TestCase):

    def setUp(self):
        self.mesh = uniform_refine(generate_structured(2))
        rng = np.random.default_rng(5)
        self.zeta = FluxField(self.mesh, rng.normal(size=self.mesh.n_facets))
        self.psi = ScalarField(self.mesh, 0, rng.normal(size=(self.mesh.n_cells, 1)))
        self.u_h = VectorField(self.mesh, 1, rng.normal(size=(self.mesh.n_cells, 3, 2)))

    def test_zero_flux_gives_cell_means(self):
        """Test zero flux returns the cell means with a flat gradient."""
        coeffs = CoefficientSet(constant(1), constant(1), VectorField.zero(self.mesh))
        post = stenberg(self.mesh, coeffs, FluxField(self.mesh, np.zeros(self.mesh.n_facets)), self.psi, 0)
        np.testing.assert_allclose(post.field.coeffs[:, 0], self.psi.coeffs[:, 0], atol=1e-13)
        np.testing.assert_allclose(post.field.coeffs[:, 1:], 0.0, atol=1e-13)

    def test_means_preserved(self):
        """Test the postprocess keeps every cell mean of ψ_h."""
        coeffs = CoefficientSet(lambda X: 1.0 + X[..., 0], constant(1), self.u_h, (1.0, 2.0))
        post = stenberg(self.mesh, coeffs, self.zeta, self.psi, 0)
        self.assertLess(post.mean_residual, 1e-12)
        np.testing.assert_allclose(post.field.cell_means(), self.psi.coeffs[:, 0], atol=1e-12)
        self.assertEqual(post.degree, 1)

    def test_gradient_identity(self):
        """Constant ε and u_h per cell: ε∇ψ♯ equals the cell mean of ζ + u_h ψ."""
        eps = 2.5
        u_const = VectorField.zero(self.mesh)
        u_const.coeffs[:, 0, :] = self.u_h.coeffs[:, 0, :]
        coeffs = CoefficientSet(constant(eps), constant(1), u_const, (eps, eps))
        post = stenberg(self.mesh, coeffs, self.zeta, self.psi, 0)
        X = self.mesh.centroids[:, None, :]
        expected = (self.zeta.evaluate(X)[:, 0] + u_const.coeffs[:, 0, :] * self.psi.coeffs) / eps
        np.testing.assert_allclose(post.field.gradient(X)[:, 0], expected, atol=1e-11)

    def test_locality(self):
        """Test changing one cell value only changes that cell's postprocess."""
        coeffs = CoefficientSet(constant(1), constant(1), self.u_h)
        before = stenberg(self.mesh, coeffs, self.zeta, self.psi, 0).field.coeffs
        changed = self.psi.coeffs.copy()
        changed[3] += 1.0
        after = stenberg(self.mesh, coeffs, self.zeta, ScalarField(self.mesh, 0, changed), 0).field.coeffs
        others = np.setdiff1d(np.arange(self.mesh.n_cells), [3])
        np.testing.assert_allclose(after[others], before[others], rtol=0, atol=1e-14)
        self.assertGreater(np.abs(after[3] - before[3]).max(), 0.0)

    def test_nonpositive_eps(self):
        """Test a non-positive ε makes the local problems singular."""
        coeffs = CoefficientSet(constant(-1), constant(1), self.u_h)
        with self.assertRaises(LocalSingular):
            stenberg(self.mesh, coeffs, self.zeta, self.psi, 0)


class TestPipeline(unittest.TestCase):

    def test_mean_residual_on_solution(self):
        """Test the postprocess of a real solve keeps the cell means."""
        case = builtin_case("ex1-smooth")
        sol = solve_level(case, uniform_refine(case.initial_mesh()))
        self.assertLess(sol.post.mean_residual, 1e-12)
        np.testing.assert_allclose(sol.post.field.cell_means(), sol.psi.coeffs[:, 0], atol=1e-12)


if __name__ == '__main__':
    unittest.main()
