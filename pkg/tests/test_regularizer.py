"""
Tests for the Clément weights and the load regulariser Q and its adjoint.
"""

import os
import sys
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

# Add project root to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.analysis import eoc
from src.fem_core import DualBubbles, ScalarField, integrate, norm_lp, pk_dim
from src.loads import DensityL2, LineDirac, PointDirac
from src.mesh import generate_structured, neumann_where, read_mesh, uniform_refine
from src.regularizer import apply_Q, apply_Q_adjoint, compute_weights

RIGHT_EDGE = neumann_where(lambda m: m[0] > 1.0 - 1e-12)
BOTTOM_EDGE = neumann_where(lambda m: m[1] < 1e-12)
FIXTURE = os.path.join(os.path.dirname(__file__), "..", "data", "meshes", "ex3_coarse.txt")

MESHES = [
    uniform_refine(generate_structured(2)),
    uniform_refine(generate_structured(2, marker=RIGHT_EDGE)),
    uniform_refine(generate_structured(3, diagonal="left", marker=BOTTOM_EDGE)),
]


def sine_product(X):
    return np.sin(np.pi * X[..., 0]) * np.sin(np.pi * X[..., 1])


class TestClementWeights(unittest.TestCase):

    def test_symmetric_star_has_uniform_weights(self):
        """Test a symmetric six-cell star gets equal weights."""
        mesh = generate_structured(2)
        weights = compute_weights(mesh)
        self.assertEqual(weights.n_patches, 1)
        np.testing.assert_allclose(weights.alpha[0], 1.0 / 6.0, atol=1e-14)

    def test_constraints_hold(self):
        """Test the weights satisfy their moment constraints."""
        for mesh in MESHES + [uniform_refine(read_mesh(FIXTURE))]:
            residuals = compute_weights(mesh).constraint_residuals()
            self.assertLess(residuals.max(), 1e-12)

    def test_neumann_vertex_reproduces_itself(self):
        """Test redirected patches reproduce their own vertex."""
        mesh = MESHES[1]
        weights = compute_weights(mesh)
        for patch, alpha in zip(weights.patches, weights.alpha):
            if patch.interior:
                continue
            target = alpha @ mesh.centroids[list(patch.cells)]
            np.testing.assert_allclose(target, mesh.vertices[patch.vertex], atol=1e-12)

    def test_weight_field_moments(self):
        """Test a weight field integrates to one on its patch only."""
        mesh = MESHES[0]
        weights = compute_weights(mesh)
        z = weights.patches[0].vertex
        psi_z = weights.weight_field(z)
        self.assertAlmostEqual(integrate(mesh, lambda X, c: psi_z.evaluate(X, c)), 1.0, places=12)
        self.assertTrue(np.all(psi_z.coeffs[np.setdiff1d(np.arange(mesh.n_cells), mesh.vertex_cells(z))] == 0))

    def test_dirichlet_vertex_has_no_weight(self):
        """Test Dirichlet vertices have no weight field."""
        weights = compute_weights(MESHES[0])
        with self.assertRaises(ValueError):
            weights.weight_field(0)


class TestApplyQ(unittest.TestCase):

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=10_000), k=st.sampled_from([0, 1]),
           which=st.integers(min_value=0, max_value=len(MESHES) - 1))
    def test_projection_on_discrete_space(self, seed, k, which):
        """Test Q reproduces discrete Pk densities."""
        mesh = MESHES[which]
        rng = np.random.default_rng(seed)
        phi = ScalarField(mesh, k, rng.normal(size=(mesh.n_cells, pk_dim(k))))
        q = apply_Q(DensityL2(phi), mesh, k, compute_weights(mesh))
        self.assertLess(np.abs(q.coeffs - phi.coeffs).max(), 1e-11)

    def test_constant_density(self):
        """Test Q reproduces a constant density."""
        mesh = MESHES[1]
        q = apply_Q(DensityL2(lambda X: np.ones(X.shape[:-1])), mesh, 0, compute_weights(mesh))
        np.testing.assert_allclose(q.coeffs, 1.0, atol=1e-12)

    def test_point_dirac_at_vertex_gives_weight(self):
        """Test a vertex Dirac maps to that vertex's weight field."""
        mesh = MESHES[0]
        weights = compute_weights(mesh)
        for patch in weights.patches[:4]:
            z = patch.vertex
            q = apply_Q(PointDirac(tuple(mesh.vertices[z])), mesh, 0, weights)
            expected = weights.weight_field(z).coeffs
            np.testing.assert_allclose(q.coeffs, expected, atol=1e-12 * np.abs(expected).max())
            outside = np.setdiff1d(np.arange(mesh.n_cells), mesh.vertex_cells(z))
            np.testing.assert_allclose(q.coeffs[outside], 0.0, atol=1e-12)

    def test_line_dirac_keeps_mass_on_interior_fracture(self):
        """Test Q keeps the mass of an interior line source."""
        mesh = uniform_refine(uniform_refine(read_mesh(FIXTURE)))
        weights = compute_weights(mesh)
        line = LineDirac((0.4, 0.25), (0.6, 0.85))
        q = apply_Q(line, mesh, 0, weights)
        # hats away from Γ_D sum to one near the fracture
        self.assertAlmostEqual(float(q.cell_integrals().sum()), line.length, places=10)

    def test_l2_stability(self):
        """Test ‖Qf‖ stays comparable to ‖f‖ across refinement for ten random smooth loads."""
        rng = np.random.default_rng(11)
        meshes = [generate_structured(2, marker=RIGHT_EDGE)]
        for _ in range(3):
            meshes.append(uniform_refine(meshes[-1]))
        weights = [compute_weights(mesh) for mesh in meshes]
        for trial in range(10):
            amp = rng.normal(size=(3, 3))
            phase = rng.uniform(0.0, 2.0 * np.pi, size=(3, 3, 2))

            def f(X, amp=amp, phase=phase):
                out = np.full(X.shape[:-1], 1.0 + abs(amp[0, 0]))
                for i in range(3):
                    for j in range(3):
                        out += amp[i, j] * np.cos(i * np.pi * X[..., 0] + phase[i, j, 0]) \
                            * np.cos(j * np.pi * X[..., 1] + phase[i, j, 1])
                return out

            ratios = []
            for mesh, w in zip(meshes, weights):
                q = apply_Q(DensityL2(f), mesh, 0, w)
                ratios.append(norm_lp(mesh, lambda X, c: q.evaluate(X, c), 2)
                              / norm_lp(mesh, lambda X, c: f(X), 2))
            self.assertTrue(all(0.3 <= r <= 2.0 for r in ratios), (trial, ratios))


class TestAdjoint(unittest.TestCase):

    def test_duality(self):
        """Test Q and its adjoint are dual."""
        rng = np.random.default_rng(7)
        for k in (0, 1):
            mesh = MESHES[0]
            weights = compute_weights(mesh)
            f = ScalarField(mesh, k, rng.normal(size=(mesh.n_cells, pk_dim(k))))

            def v(X):
                return sine_product(X) * (1.0 + X[..., 0])

            image = apply_Q_adjoint(v, mesh, k, weights)
            qf = apply_Q(DensityL2(f), mesh, k, weights)
            lhs = integrate(mesh, lambda X, c: image.evaluate(X, c) * f.evaluate(X, c))
            rhs = integrate(mesh, lambda X, c: v(X) * qf.evaluate(X, c))
            self.assertLess(abs(lhs - rhs), 1e-10)

    def test_zero(self):
        """Test the adjoint of zero is zero."""
        mesh = MESHES[1]
        image = apply_Q_adjoint(lambda X: np.zeros(X.shape[:-1]), mesh, 0, compute_weights(mesh))
        self.assertEqual(np.abs(image.nodal).max(), 0.0)
        self.assertEqual(np.abs(image.moments).max(), 0.0)

    def test_preserves_moments(self):
        """Test the adjoint keeps the P1 moments of smooth data."""
        mesh = MESHES[1]
        weights = compute_weights(mesh)
        image = apply_Q_adjoint(sine_product, mesh, 1, weights)
        one = ScalarField(mesh, 1, np.tile([1.0, 0.3, -0.2], (mesh.n_cells, 1)))
        lhs = integrate(mesh, lambda X, c: image.evaluate(X, c) * one.evaluate(X, c))
        rhs = integrate(mesh, lambda X, c: sine_product(X) * one.evaluate(X, c))
        self.assertAlmostEqual(lhs, rhs, places=10)

    def test_approximation_rate(self):
        """Test the adjoint approximates smooth data at first order or better."""
        mesh = generate_structured(8)
        errors, hs = [], []
        for _ in range(3):
            image = apply_Q_adjoint(sine_product, mesh, 0, compute_weights(mesh), DualBubbles(mesh, 0))
            errors.append(norm_lp(mesh, lambda X, c: sine_product(X) - image.evaluate(X, c), 2))
            hs.append(mesh.h_max)
            mesh = uniform_refine(mesh)
        self.assertLessEqual(errors[1] / errors[0], 0.6)
        self.assertLessEqual(errors[2] / errors[1], 0.6)
        self.assertTrue(all(r >= 0.9 for r in eoc(errors, hs)[1:]))


if __name__ == '__main__':
    unittest.main()
