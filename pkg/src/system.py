"""
system.py — Assembly and sparse direct solution of the mixed saddle-point system.

Forms (RT₀ × P_k, unknowns ζ_h, ψ_h)
------------------------------------
    a(ζ, ξ) = ∫ (1/ε) ζ·ξ            b(ξ, φ) = ∫ φ div ξ
    c(ψ, φ) = ∫ κ ψ φ                d(ξ, φ) = ∫ (1/ε)(u_h·ξ) φ
    F(ξ)    = ⟨ξ·n, ψ_D⟩_{Γ_D}       G(φ)    = −∫ (Qg) φ

    [ A   Bᵀ + D ] [ζ]   [F]
    [ B    −C    ] [ψ] = [G]

Neumann facets carry the essential condition ζ·n = ζ_N; their DOFs are
eliminated with a lifting before the LU factorisation.

Workflow
--------
    system = assemble(mesh, coeffs, Qg, bdata)
    system = apply_bc(system, bdata)
    zeta_h, psi_h = solve(system)
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from src.config import ASSEMBLY_DEGREE, ERROR_DEGREE, LOAD_DEGREE, RESIDUAL_TOL
from src.errors import CoefficientBoundViolation, SingularSystem, UnsupportedDegree
from src.fem_core import (
    FluxField,
    PointFunction,
    ScalarField,
    VectorField,
    eval_pk,
    eval_rt0,
    map_points,
    norm_lp,
    pk_dim,
    triangle_rule,
)
from src.loads import BoundaryData, DensityL2, LoadFunctional, dirichlet_moment, neumann_moment
from src.mesh import DIRICHLET, NEUMANN, Mesh


@dataclass
class CoefficientSet:
    """ε with bounds (ε̲, ε̄), κ ≥ 0, discrete velocity u_h and optionally u."""
    eps:        PointFunction
    kappa:      PointFunction
    u_h:        VectorField
    eps_bounds: Tuple[float, float] = (1.0, 1.0)
    u_exact:    Optional[PointFunction] = None

    def check(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """ε and κ at X, validated against the standing bounds."""
        eps = np.broadcast_to(np.asarray(self.eps(X), dtype=float), X.shape[:-1])
        kappa = np.broadcast_to(np.asarray(self.kappa(X), dtype=float), X.shape[:-1])
        lo, hi = self.eps_bounds
        slack = 1e-12 * max(1.0, abs(hi))
        if lo <= 0.0 or np.any(eps < lo - slack) or np.any(eps > hi + slack):
            raise CoefficientBoundViolation(
                f"ε leaves [{lo:g}, {hi:g}] (observed range [{eps.min():.6g}, {eps.max():.6g}])")
        if np.any(kappa < 0.0):
            raise CoefficientBoundViolation(f"κ is negative (min {kappa.min():.6g})")
        return eps, kappa


@dataclass
class SaddleSystem:
    """Assembled blocks, right-hand sides and the Neumann elimination record."""
    mesh:        Mesh
    k:           int
    A:           sparse.csr_matrix
    B:           sparse.csr_matrix
    D:           sparse.csr_matrix
    C:           sparse.csr_matrix
    F:           np.ndarray
    G:           np.ndarray
    constrained: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    values:      np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def n_flux(self) -> int:
        return self.A.shape[0]

    @property
    def n_scalar(self) -> int:
        return self.C.shape[0]

    @property
    def size(self) -> int:
        return self.n_flux + self.n_scalar

    @property
    def matrix(self) -> sparse.csc_matrix:
        return sparse.bmat([[self.A, self.B.T + self.D], [self.B, -self.C]], format="csc")

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.F, self.G])


# ── Assembly ──────────────────────────────────────────────────────────────────

def _coo(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sparse.csr_matrix:
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    return sparse.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()


def assemble(
    mesh: Mesh,
    coeffs: CoefficientSet,
    rhs: Union[ScalarField, LoadFunctional],
    bdata: BoundaryData,
    k: int = 0,
    degree: int = ASSEMBLY_DEGREE,
    load_degree: int = LOAD_DEGREE,
    verbose: bool = False,
) -> SaddleSystem:
    """
    Build the blocks A, B, D, C and the vectors F, G.

    Args:
        rhs:    the regularised load Qg, or a DensityL2 g for the direct path.
        degree: quadrature degree of the bilinear forms.

    Raises:
        UnsupportedDegree:         k ≠ 0 (only RT₀ fluxes are provided).
        CoefficientBoundViolation: ε or κ out of range at a quadrature point.
    """
    if k != 0:
        raise UnsupportedDegree(f"flux space RT_{k} is not available; use k=0")
    n = pk_dim(k)
    M, E = mesh.n_cells, mesh.n_facets

    X, W = map_points(mesh, triangle_rule(degree))
    eps, kappa = coeffs.check(X)
    phi, divs = eval_rt0(mesh, X)
    P, _ = eval_pk(mesh, k, X)
    uh = coeffs.u_h.evaluate(X)
    scalar_dofs = np.arange(M * n).reshape(M, n)

    A_loc = np.einsum("cq,cqid,cqjd->cij", W / eps, phi, phi)
    B_loc = np.einsum("cq,cqn,ci->cni", W, P, divs)
    D_loc = np.einsum("cq,cqid,cqd,cqn->cin", W / eps, phi, uh, P)
    C_loc = np.einsum("cq,cqm,cqn->cmn", W * kappa, P, P)

    A = _coo(A_loc, mesh.cell_facets, mesh.cell_facets, (E, E))
    B = _coo(B_loc, scalar_dofs, mesh.cell_facets, (M * n, E))
    D = _coo(D_loc, mesh.cell_facets, scalar_dofs, (E, M * n))
    C = _coo(C_loc, scalar_dofs, scalar_dofs, (M * n, M * n))

    F = np.zeros(E)
    dirichlet = mesh.facets_marked(DIRICHLET)
    if len(dirichlet):
        F[dirichlet] = dirichlet_moment(bdata.psi_D, mesh, dirichlet) / mesh.facet_lengths[dirichlet]

    G = -_scalar_load(mesh, rhs, k, load_degree).ravel()

    if verbose:
        print(f"   🧮 Assembled {E} flux + {M * n} scalar DOFs "
              f"(nnz A={A.nnz}, B={B.nnz}, D={D.nnz}, C={C.nnz})")
    return SaddleSystem(mesh, k, A, B, D, C, F, G)


def _scalar_load(mesh: Mesh, rhs, k: int, degree: int) -> np.ndarray:
    """∫_K rhs p_j per cell (M, dim P_k)."""
    if isinstance(rhs, ScalarField):
        X, W = map_points(mesh, triangle_rule(degree))
        values = rhs.evaluate(X)
    elif isinstance(rhs, DensityL2):
        X, W = rhs.quadrature(mesh, degree)
        values = rhs.values(X, np.arange(mesh.n_cells))
    else:
        raise ValueError(f"{type(rhs).__name__} loads must be regularised with Q before assembly")
    P, _ = eval_pk(mesh, k, X)
    return np.einsum("cq,cq,cqn->cn", W, values, P)


def apply_bc(system: SaddleSystem, bdata: BoundaryData) -> SaddleSystem:
    """Record Neumann facet DOFs as constrained to ∫_F ζ_N ds."""
    neumann = system.mesh.facets_marked(NEUMANN)
    values = neumann_moment(bdata.zeta_N, system.mesh, neumann) if len(neumann) else np.empty(0)
    return replace(system, constrained=neumann.astype(np.int64), values=np.asarray(values, dtype=float))


# ── Solve ─────────────────────────────────────────────────────────────────────

def _relative_residual(M, x, b) -> float:
    norm_b = np.linalg.norm(b)
    r = np.linalg.norm(M @ x - b)
    return r / norm_b if norm_b > 0 else r


def solve(system: SaddleSystem, verbose: bool = False) -> Tuple[FluxField, ScalarField]:
    """
    Row-pivoted sparse LU of the reduced block matrix.

    Raises:
        SingularSystem: factorisation breakdown, or relative residual above
                        RESIDUAL_TOL after one refinement step.
    """
    Mfull = system.matrix
    b = system.rhs
    x = np.zeros(system.size)
    free = np.setdiff1d(np.arange(system.size), system.constrained)
    x[system.constrained] = system.values

    Mff = Mfull[free][:, free].tocsc()
    bf = b[free] - Mfull[free][:, system.constrained] @ system.values
    try:
        lu = splu(Mff)
    except RuntimeError as e:
        raise SingularSystem(f"sparse LU failed on {len(free)} free DOFs: {e}")
    xf = lu.solve(bf)
    if not np.all(np.isfinite(xf)):
        raise SingularSystem("sparse LU produced non-finite values")

    res = _relative_residual(Mff, xf, bf)
    if res > RESIDUAL_TOL:
        xf = xf + lu.solve(bf - Mff @ xf)
        res = _relative_residual(Mff, xf, bf)
        if res > RESIDUAL_TOL:
            raise SingularSystem(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:.0e}")
    x[free] = xf

    if verbose:
        print(f"   ✅ Solved {system.size} DOFs ({len(system.constrained)} constrained), "
              f"relative residual {res:.2e}")
    zeta = FluxField(system.mesh, x[:system.n_flux])
    psi = ScalarField(system.mesh, system.k, x[system.n_flux:])
    return zeta, psi


def system_residual(system: SaddleSystem, zeta: FluxField, psi: ScalarField) -> float:
    """Relative residual of the free rows of the block system."""
    x = np.concatenate([zeta.coeffs, psi.vector])
    free = np.setdiff1d(np.arange(system.size), system.constrained)
    r = (system.matrix @ x - system.rhs)[free]
    norm_b = np.linalg.norm(system.rhs[free])
    return float(np.linalg.norm(r) / norm_b) if norm_b > 0 else float(np.linalg.norm(r))


# ── Diagnostics ───────────────────────────────────────────────────────────────

def advection_smallness_report(coeffs: CoefficientSet, degree: int = ERROR_DEGREE) -> float:
    """‖u_h‖_{0,4;Ω}; reported only, never enforced."""
    u_h = coeffs.u_h
    return norm_lp(u_h.mesh, lambda X, cells: u_h.evaluate(X, cells), p=4, degree=degree)


@dataclass
class DiscreteResiduals:
    flux:   np.ndarray           # per free facet DOF
    scalar: np.ndarray           # per scalar DOF

    @property
    def max_flux(self) -> float:
        return float(np.abs(self.flux).max()) if len(self.flux) else 0.0

    @property
    def max_scalar(self) -> float:
        return float(np.abs(self.scalar).max()) if len(self.scalar) else 0.0


def discrete_residuals(
    mesh: Mesh,
    coeffs: CoefficientSet,
    zeta: FluxField,
    psi: ScalarField,
    rhs: Union[ScalarField, LoadFunctional],
    bdata: BoundaryData,
    degree: int = LOAD_DEGREE,
) -> DiscreteResiduals:
    """
    Both discrete equations re-evaluated from the fields by quadrature:

        a(ζ_h, φ_f) + b(φ_f, ψ_h) + d(φ_f, ψ_h) − F(φ_f)   for free facets f
        b(ζ_h, η_m) − c(ψ_h, η_m) − G(η_m)                  for all scalar η_m
    """
    k = psi.degree
    cells = np.arange(mesh.n_cells)
    X, W = map_points(mesh, triangle_rule(degree))
    eps, kappa = coeffs.check(X)
    phi, divs = eval_rt0(mesh, X)
    P, _ = eval_pk(mesh, k, X)
    zeta_vals = zeta.evaluate(X)
    psi_vals = psi.evaluate(X)
    uh = coeffs.u_h.evaluate(X)

    local = np.einsum("cq,cqd,cqid->ci", W / eps, zeta_vals, phi) \
        + np.einsum("cq,ci->ci", W * psi_vals, divs) \
        + np.einsum("cq,cqid,cqd->ci", W * psi_vals / eps, phi, uh)
    flux = np.bincount(mesh.cell_facets.ravel(), weights=local.ravel(), minlength=mesh.n_facets)
    dirichlet = mesh.facets_marked(DIRICHLET)
    if len(dirichlet):
        flux[dirichlet] -= dirichlet_moment(bdata.psi_D, mesh, dirichlet) / mesh.facet_lengths[dirichlet]
    free = np.setdiff1d(np.arange(mesh.n_facets), mesh.facets_marked(NEUMANN))

    div_zeta = zeta.divergence(cells)
    scalar = np.einsum("cq,cqn->cn", W * div_zeta[:, None], P) \
        - np.einsum("cq,cqn->cn", W * kappa * psi_vals, P) \
        + _scalar_load(mesh, rhs, k, degree)
    return DiscreteResiduals(flux=flux[free], scalar=scalar.ravel())
