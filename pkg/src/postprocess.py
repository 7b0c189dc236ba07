"""
postprocess.py — Element-local recovery ψ♯_h ∈ P_{k+1}(𝒯_h) from (ζ_h, ψ_h).

On every cell K find ψ♯ ∈ P_{k+1}(K) and a multiplier μ with

    ∫_K ε ∇ψ♯·∇v + μ ∫_K v = ∫_K ζ_h·∇v + ∫_K (u_h·∇v) ψ_h   for all v ∈ P_{k+1}(K)
    ∫_K ψ♯                    = ∫_K ψ_h

All cells are solved in one batched dense solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.config import ASSEMBLY_DEGREE
from src.errors import LocalSingular
from src.fem_core import FluxField, ScalarField, eval_pk, map_points, pk_dim, triangle_rule
from src.mesh import Mesh

LOCAL_CONDITION_LIMIT = 1e14


@dataclass
class PostprocessedField:
    field:         ScalarField
    mean_residual: float         # max over cells of |mean diff| / max(|mean ψ_h|, 1)

    def evaluate(self, X: np.ndarray, cells: Optional[np.ndarray] = None) -> np.ndarray:
        return self.field.evaluate(X, cells)

    @property
    def degree(self) -> int:
        return self.field.degree


def local_systems(mesh: Mesh, coeffs, zeta: FluxField, psi: ScalarField, k: int,
                  degree: int = ASSEMBLY_DEGREE):
    """Batched local matrices (M, n+1, n+1) and right-hand sides (M, n+1)."""
    n = pk_dim(k + 1)
    X, W = map_points(mesh, triangle_rule(degree))
    eps = np.broadcast_to(np.asarray(coeffs.eps(X), dtype=float), W.shape)
    bad = np.flatnonzero((eps <= 0.0).any(axis=1))
    if len(bad):
        raise LocalSingular(f"ε ≤ 0 on cell {int(bad[0])}")
    P, dP = eval_pk(mesh, k + 1, X)
    psi_vals = psi.evaluate(X)
    drive = zeta.evaluate(X) + coeffs.u_h.evaluate(X) * psi_vals[..., None]

    mat = np.zeros((mesh.n_cells, n + 1, n + 1))
    mat[:, :n, :n] = np.einsum("cq,cqid,cqjd->cij", W * eps, dP, dP)
    moments = np.einsum("cq,cqi->ci", W, P) / mesh.areas[:, None]      # cell means of v
    mat[:, :n, n] = moments
    mat[:, n, :n] = moments
    rhs = np.empty((mesh.n_cells, n + 1))
    rhs[:, :n] = np.einsum("cq,cqd,cqid->ci", W, drive, dP)
    rhs[:, n] = (W * psi_vals).sum(axis=1) / mesh.areas
    return mat, rhs


def stenberg(mesh: Mesh, coeffs, zeta: FluxField, psi: ScalarField, k: int,
             degree: int = ASSEMBLY_DEGREE) -> PostprocessedField:
    """
    Raises:
        LocalSingular: a local saddle matrix is singular (degenerate cell, ε ≤ 0).
    """
    n = pk_dim(k + 1)
    mat, rhs = local_systems(mesh, coeffs, zeta, psi, k, degree)
    cond = np.linalg.cond(mat)
    bad = np.flatnonzero(~np.isfinite(cond) | (cond > LOCAL_CONDITION_LIMIT))
    if len(bad):
        raise LocalSingular(f"local postprocess system of cell {int(bad[0])} is singular")
    try:
        sol = np.linalg.solve(mat, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as e:
        raise LocalSingular(f"local postprocess solve failed: {e}")

    field = ScalarField(mesh, k + 1, sol[:, :n])
    target = rhs[:, n]
    got = np.einsum("ci,ci->c", mat[:, n, :n], sol[:, :n])
    scale = np.maximum(np.abs(target), 1.0)
    return PostprocessedField(field, float((np.abs(got - target) / scale).max()))
