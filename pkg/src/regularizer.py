"""
regularizer.py — Load regularisation Q = J_h′ + (1 − J_h)′ B_h′ onto P_k(𝒯_h).

Workflow
--------
  1. compute_weights(mesh)          → ClementWeights: α_{z,K} per vertex patch
  2. apply_Q(g, mesh, k, weights)   → ScalarField Qg (the regularised load)
  3. apply_Q_adjoint(v, ...)        → AdjointImage Q′v = J_h v + B_h(1 − J_h)v

J_h is the weighted Clément quasi-interpolator J_h v = Σ_z (∫ v ψ_z) η_z over
V₀ ∪ V_N, with piecewise constant weights ψ_z = α_{z,K}/|K| on T_z whose
patch moments reproduce the vertex: Σ α_{z,K} = 1 and Σ α_{z,K} s_K = z.
B_h is the dual-bubble correction B_h r = Σ_{K,j} (∫_K r p_j) χ_{K,j}.

Usage
-----
    from src.regularizer import apply_Q, compute_weights

    weights = compute_weights(mesh, verbose=True)
    Qg = apply_Q(LineDirac((0.4, 0.25), (0.6, 0.85)), mesh, 0, weights)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import sparse

from src.config import LOAD_DEGREE
from src.errors import CollinearCentroids
from src.fem_core import (
    DualBubbles,
    PointFunction,
    ScalarField,
    barycentric,
    eval_pk,
    map_points,
    triangle_rule,
)
from src.loads import BubbleFamily, HatFamily, LoadFunctional, eval_load
from src.mesh import Mesh, VertexPatch, vertex_patches

CONSTRAINT_TOL = 1e-12


@dataclass
class ClementWeights:
    """Per-patch coefficients α_{z,K} and the sparse weight matrix ψ (P × M)."""
    mesh:      Mesh
    patches:   List[VertexPatch]
    alpha:     List[np.ndarray]
    hat_index: np.ndarray        # vertex → patch row, −1 on Dirichlet vertices
    psi:       sparse.csr_matrix

    @property
    def n_patches(self) -> int:
        return len(self.patches)

    def constraint_residuals(self) -> np.ndarray:
        """Rows (|Σα s_K − z| / h_z, |Σα − 1|) per patch."""
        out = np.empty((self.n_patches, 2))
        for row, (patch, alpha) in enumerate(zip(self.patches, self.alpha)):
            cells = np.asarray(patch.cells)
            z = self.mesh.vertices[patch.vertex]
            h = self.mesh.diameters[cells].max()
            out[row, 0] = np.linalg.norm(alpha @ self.mesh.centroids[cells] - z) / h
            out[row, 1] = abs(alpha.sum() - 1.0)
        return out

    def sup_ratio(self) -> np.ndarray:
        """‖ψ_z‖_∞ · |Ω_z| per patch (≃ 1 for well-shaped weights)."""
        ratios = np.empty(self.n_patches)
        for row, (patch, alpha) in enumerate(zip(self.patches, self.alpha)):
            areas = self.mesh.areas[np.asarray(patch.cells)]
            ratios[row] = np.max(np.abs(alpha) / areas) * areas.sum()
        return ratios

    def weight_field(self, vertex: int) -> ScalarField:
        """ψ_z as a P₀ field."""
        row = self.hat_index[vertex]
        if row < 0:
            raise ValueError(f"vertex {vertex} is a Dirichlet vertex and has no weight")
        return ScalarField(self.mesh, 0, self.psi.getrow(row).toarray().ravel())


def compute_weights(mesh: Mesh, verbose: bool = False) -> ClementWeights:
    """
    Minimum-norm α_{z,K} for every z ∈ V₀ ∪ V_N.

    Raises:
        CollinearCentroids:       a patch's centroids cannot reproduce z.
        MissingInteriorNeighbour: from vertex_patches.
    """
    patches = vertex_patches(mesh)
    alphas: List[np.ndarray] = []
    rows, cols, data = [], [], []
    hat_index = np.full(mesh.n_vertices, -1, dtype=np.int64)

    for row, patch in enumerate(patches):
        cells = np.asarray(patch.cells, dtype=np.int64)
        z = mesh.vertices[patch.vertex]
        h = mesh.diameters[cells].max()
        offsets = (mesh.centroids[cells] - z) / h
        A = np.vstack([offsets.T, np.ones(len(cells))])               # (3, m)
        b = np.array([0.0, 0.0, 1.0])
        if np.linalg.matrix_rank(A, tol=1e-10) < 3:
            raise CollinearCentroids(f"patch of vertex {patch.vertex}: centroids of cells "
                                     f"{list(patch.cells)} are collinear")
        alpha = np.linalg.lstsq(A, b, rcond=None)[0]
        alphas.append(alpha)
        hat_index[patch.vertex] = row
        rows.extend([row] * len(cells))
        cols.extend(cells.tolist())
        data.extend((alpha / mesh.areas[cells]).tolist())

    psi = sparse.csr_matrix(
        (np.asarray(data, dtype=float), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(len(patches), mesh.n_cells))
    weights = ClementWeights(mesh, patches, alphas, hat_index, psi)

    if verbose:
        ratios = weights.sup_ratio()
        redirected = sum(1 for p in patches if not p.interior)
        print(f"   ⚖️  Clément weights: {len(patches)} patches ({redirected} redirected), "
              f"‖ψ_z‖∞·|Ω_z| in [{ratios.min():.3f}, {ratios.max():.3f}]")
        worst = weights.constraint_residuals().max()
        if worst > CONSTRAINT_TOL:
            print(f"   ⚠️  weight constraint residual {worst:.2e}")
    return weights


def _hat_moments(mesh: Mesh, field: ScalarField, hat_index: np.ndarray, n_hat: int) -> np.ndarray:
    """∫_Ω w η_z for every hat z (exact quadrature of degree k + 1)."""
    rule = triangle_rule(max(2, field.degree + 1))
    X, W = map_points(mesh, rule)
    w = field.evaluate(X)
    local = np.einsum("cq,cq,qi->ci", W, w, rule.points)
    dofs = hat_index[mesh.cells]
    mask = dofs >= 0
    return np.bincount(dofs[mask], weights=local[mask], minlength=n_hat)


def apply_Q(
    g: LoadFunctional,
    mesh: Mesh,
    k: int,
    weights: ClementWeights,
    bubbles: Optional[DualBubbles] = None,
    degree: int = LOAD_DEGREE,
) -> ScalarField:
    """
    Qg = J_h′g + w − J_h′w with w = B_h′g ∈ P_k(𝒯_h).

    Args:
        g:       load functional.
        k:       target polynomial degree.
        bubbles: precomputed dual bubbles for (mesh, k).
        degree:  quadrature degree for volume loads.
    """
    bubbles = bubbles or DualBubbles(mesh, k)
    hats = HatFamily(mesh)
    a = eval_load(g, hats, mesh, degree)
    b = eval_load(g, BubbleFamily(bubbles), mesh, degree).reshape(mesh.n_cells, bubbles.dim)
    w = ScalarField(mesh, k, b)
    c = _hat_moments(mesh, w, weights.hat_index, weights.n_patches)
    coeffs = b.copy()
    coeffs[:, 0] += weights.psi.T @ (a - c)
    return ScalarField(mesh, k, coeffs)


@dataclass
class AdjointImage:
    """Q′v = Σ_z nodal_z η_z + Σ_{K,j} moments_{K,j} χ_{K,j}."""
    mesh:    Mesh
    nodal:   np.ndarray          # (Nv,), zero on Dirichlet vertices
    moments: np.ndarray          # (M, dim P_k)
    bubbles: DualBubbles

    def evaluate(self, X: np.ndarray, cells: Optional[np.ndarray] = None) -> np.ndarray:
        cells = np.arange(self.mesh.n_cells) if cells is None else cells
        lam = barycentric(self.mesh, X, cells)
        jv = np.einsum("cqi,ci->cq", lam, self.nodal[self.mesh.cells[cells]])
        chi, _ = self.bubbles.evaluate(X, cells)
        return jv + np.einsum("cqj,cj->cq", chi, self.moments[cells])

    def interpolant(self, X: np.ndarray, cells: Optional[np.ndarray] = None) -> np.ndarray:
        """The J_h v part only."""
        cells = np.arange(self.mesh.n_cells) if cells is None else cells
        lam = barycentric(self.mesh, X, cells)
        return np.einsum("cqi,ci->cq", lam, self.nodal[self.mesh.cells[cells]])


def apply_Q_adjoint(
    v: PointFunction,
    mesh: Mesh,
    k: int,
    weights: ClementWeights,
    bubbles: Optional[DualBubbles] = None,
    degree: int = LOAD_DEGREE,
) -> AdjointImage:
    """Q′v = J_h v + B_h (v − J_h v) for pointwise v vanishing on Γ_D."""
    bubbles = bubbles or DualBubbles(mesh, k)
    X, W = map_points(mesh, triangle_rule(degree))
    values = np.asarray(v(X), dtype=float)

    nodal = np.zeros(mesh.n_vertices)
    owned = weights.hat_index >= 0
    nodal[owned] = (weights.psi @ (W * values).sum(axis=1))[weights.hat_index[owned]]

    lam = barycentric(mesh, X, np.arange(mesh.n_cells))
    residual = values - np.einsum("cqi,ci->cq", lam, nodal[mesh.cells])
    P, _ = eval_pk(mesh, k, X)
    moments = np.einsum("cq,cq,cqj->cj", W, residual, P)
    return AdjointImage(mesh, nodal, moments, bubbles)
