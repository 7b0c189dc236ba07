"""
loads.py — Right-hand-side functionals g ∈ H⁻¹_D and boundary data.

Load variants
-------------
  DensityL2    v ↦ ∫_Ω f v                       (pointwise f or a ScalarField)
  WeakForm     v ↦ ∫_Ω κψv + (ε∇ψ − uψ)·∇v − ∫_{Γ_N} ζ_N v
  LineDirac    v ↦ intensity · ∫_γ v ds           (straight segment γ)
  PointDirac   v ↦ weight · v(x₀)

Loads act on test-function families: a family hands out, per cell, the
values and gradients of the family members living there together with
their global indices, so one call returns the whole action vector.

Usage
-----
    from src.loads import DensityL2, HatFamily, eval_load

    a = eval_load(DensityL2(lambda X: np.ones(X.shape[:-1])), HatFamily(mesh), mesh)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from src.config import GEOMETRY_TOL, LINE_POINTS, LOAD_DEGREE, SINGULAR_GRADING
from src.errors import MarkerMismatch, PointOnDirichletBoundary
from src.fem_core import (
    DualBubbles,
    ScalarField,
    barycentric,
    facet_points,
    gauss_line,
    hat_gradients,
    map_points,
    singular_line_points,
    triangle_rule,
)
from src.mesh import DIRICHLET, NEUMANN, Mesh, dirichlet_vertices

PointFunction = Callable[[np.ndarray], np.ndarray]
FacetFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]   # (X, normals) -> values


# ── Load variants ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class DensityL2:
    """
    `singular_line` is an affine function vanishing where the density blows
    up (integrably); cells touching that line are integrated with rules
    graded by s ↦ s^grading toward it.
    """
    density:       Union[PointFunction, ScalarField]
    singular_line: Optional[PointFunction] = None
    grading:       float = SINGULAR_GRADING

    def values(self, X: np.ndarray, cells: np.ndarray) -> np.ndarray:
        if isinstance(self.density, ScalarField):
            return self.density.evaluate(X, cells)
        return np.asarray(self.density(X), dtype=float)

    def quadrature(self, mesh: Mesh, degree: int) -> Tuple[np.ndarray, np.ndarray]:
        """Points X (M, q, 2) and weights W (M, q) for integrals against the density."""
        if self.singular_line is None:
            return map_points(mesh, triangle_rule(degree))
        return singular_line_points(mesh, degree, self.singular_line, beta=self.grading)


@dataclass(frozen=True)
class WeakForm:
    """Integrated-by-parts manufactured load, exact for H⁻¹ right-hand sides."""
    psi:      PointFunction
    grad_psi: PointFunction
    u:        PointFunction
    eps:      PointFunction
    kappa:    PointFunction
    zeta_N:   Optional[FacetFunction] = None


@dataclass(frozen=True)
class LineDirac:
    p0: Tuple[float, float]
    p1: Tuple[float, float]
    intensity: float = 1.0

    @property
    def length(self) -> float:
        return float(np.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]))


@dataclass(frozen=True)
class PointDirac:
    x0: Tuple[float, float]
    weight: float = 1.0


LoadFunctional = Union[DensityL2, WeakForm, LineDirac, PointDirac]


@dataclass(frozen=True)
class BoundaryData:
    """ψ_D on Γ_D and ζ_N on Γ_N; None means homogeneous."""
    psi_D:  Optional[PointFunction] = None
    zeta_N: Optional[FacetFunction] = None


# ── Test-function families ────────────────────────────────────────────────────

class HatFamily:
    """Continuous P₁ hats of V₀ ∪ V_N (Dirichlet vertices carry index −1)."""

    def __init__(self, mesh: Mesh) -> None:
        self.mesh = mesh
        on_dirichlet = dirichlet_vertices(mesh)
        self.hat_index = np.full(mesh.n_vertices, -1, dtype=np.int64)
        self.hat_index[~on_dirichlet] = np.arange(int((~on_dirichlet).sum()))
        self.n_global = int((~on_dirichlet).sum())
        self.cell_dofs = self.hat_index[mesh.cells]

    def evaluate(self, X: np.ndarray, cells: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        vals = barycentric(self.mesh, X, cells)
        grads = np.broadcast_to(hat_gradients(self.mesh, cells)[:, None], vals.shape + (2,))
        return vals, grads


class BubbleFamily:
    """Dual bubbles χ_{K,j}, global index K·dim P_k + j."""

    def __init__(self, bubbles: DualBubbles) -> None:
        self.mesh = bubbles.mesh
        self.bubbles = bubbles
        n = bubbles.dim
        self.n_global = self.mesh.n_cells * n
        self.cell_dofs = np.arange(self.n_global).reshape(self.mesh.n_cells, n)

    def evaluate(self, X: np.ndarray, cells: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.bubbles.evaluate(X, cells)


class P1Function:
    """A single continuous P₁ function given by nodal values (one global member)."""

    def __init__(self, mesh: Mesh, nodal: np.ndarray) -> None:
        self.mesh = mesh
        self.nodal = np.asarray(nodal, dtype=float)
        self.n_global = 1
        self.cell_dofs = np.zeros((mesh.n_cells, 1), dtype=np.int64)

    def evaluate(self, X: np.ndarray, cells: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        local = self.nodal[self.mesh.cells[cells]]                     # (C, 3)
        vals = np.einsum("cqi,ci->cq", barycentric(self.mesh, X, cells), local)
        grad = np.einsum("cid,ci->cd", hat_gradients(self.mesh, cells), local)
        grads = np.broadcast_to(grad[:, None, :], X.shape)
        return vals[..., None], grads[..., None, :]


def _scatter(family, cells: np.ndarray, local: np.ndarray) -> np.ndarray:
    """Sum per-cell contributions (C, n_loc) into the global action vector."""
    dofs = family.cell_dofs[cells]
    mask = dofs >= 0
    return np.bincount(dofs[mask], weights=local[mask], minlength=family.n_global)


# ── Evaluation ────────────────────────────────────────────────────────────────

def eval_load(g: LoadFunctional, family, mesh: Mesh, degree: int = LOAD_DEGREE) -> np.ndarray:
    """
    Action of g on every member of `family`.

    For WeakForm the members must vanish on Γ_D; for PointDirac they must
    be continuous at x₀.

    Raises:
        PointOnDirichletBoundary: point Dirac on Γ_D.
    """
    if isinstance(g, DensityL2):
        cells = np.arange(mesh.n_cells)
        X, W = g.quadrature(mesh, degree)
        vals, _ = family.evaluate(X, cells)
        local = np.einsum("cq,cq,cqi->ci", W, g.values(X, cells), vals)
        return _scatter(family, cells, local)

    if isinstance(g, WeakForm):
        return _eval_weak_form(g, family, mesh, degree)

    if isinstance(g, LineDirac):
        cells, t0, t1 = clip_segment(mesh, g.p0, g.p1)
        if len(cells) == 0:
            return np.zeros(family.n_global)
        t, w = gauss_line(LINE_POINTS)
        p0 = np.asarray(g.p0, dtype=float)
        d = np.asarray(g.p1, dtype=float) - p0
        ts = t0[:, None] + (t1 - t0)[:, None] * t[None, :]            # (S, n)
        X = p0 + ts[..., None] * d
        W = g.intensity * g.length * (t1 - t0)[:, None] * w[None, :]
        vals, _ = family.evaluate(X, cells)
        return _scatter(family, cells, np.einsum("sq,sqi->si", W, vals))

    if isinstance(g, PointDirac):
        x0 = np.asarray(g.x0, dtype=float)
        if on_dirichlet_boundary(mesh, x0):
            raise PointOnDirichletBoundary(
                f"point Dirac at ({x0[0]:.6g}, {x0[1]:.6g}) lies on the Dirichlet boundary")
        owners = mesh.locate(x0, GEOMETRY_TOL)
        if len(owners) == 0:
            raise ValueError(f"point ({x0[0]:.6g}, {x0[1]:.6g}) lies outside the mesh")
        cells = owners[:1]
        vals, _ = family.evaluate(x0.reshape(1, 1, 2), cells)
        return _scatter(family, cells, g.weight * vals[:, 0, :])

    raise TypeError(f"unsupported load type {type(g).__name__}")


def _eval_weak_form(g: WeakForm, family, mesh: Mesh, degree: int) -> np.ndarray:
    cells = np.arange(mesh.n_cells)
    X, W = map_points(mesh, triangle_rule(degree))
    psi = g.psi(X)
    flux = g.eps(X)[..., None] * g.grad_psi(X) - g.u(X) * psi[..., None]
    vals, grads = family.evaluate(X, cells)
    local = np.einsum("cq,cq,cqi->ci", W, g.kappa(X) * psi, vals) \
        + np.einsum("cq,cqd,cqid->ci", W, flux, grads)
    action = _scatter(family, cells, local)

    neumann = mesh.facets_marked(NEUMANN)
    if g.zeta_N is not None and len(neumann):
        Xf, Wf = facet_points(mesh, LINE_POINTS, neumann)
        normals = np.broadcast_to(mesh.facet_normals[neumann][:, None, :], Xf.shape)
        owners = mesh.facet_cells[neumann, 0]
        fvals, _ = family.evaluate(Xf, owners)
        local = np.einsum("fq,fq,fqi->fi", Wf, g.zeta_N(Xf, normals), fvals)
        action -= _scatter(family, owners, local)
    return action


# ── Geometry helpers ──────────────────────────────────────────────────────────

def clip_segment(mesh: Mesh, p0, p1,
                 tol: float = GEOMETRY_TOL) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Split the segment p0→p1 into pieces lying in single cells.

    Returns:
        (cells, t_start, t_end) with parameters in [0, 1]; pieces are
        ordered along the segment and a piece on a shared facet is given
        to the lower-index cell.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    lo = np.minimum(p0, p1) - tol
    hi = np.maximum(p0, p1) + tol
    xy = mesh.vertices[mesh.cells]
    near = np.flatnonzero(np.all(xy.max(axis=1) >= lo, axis=1) & np.all(xy.min(axis=1) <= hi, axis=1))
    if len(near) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0), np.empty(0)

    ends = np.stack([p0, p1])[None].repeat(len(near), axis=0)         # (C, 2, 2)
    lam = barycentric(mesh, ends, near)                                # (C, 2, 3)
    start, slope = lam[:, 0], lam[:, 1] - lam[:, 0]
    tmin = np.zeros(len(near))
    tmax = np.ones(len(near))
    for i in range(3):
        s, m = start[:, i], slope[:, i]
        flat = np.abs(m) <= tol
        tmax[flat & (s < -tol)] = -1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = -s / m
        rising = ~flat & (m > 0)
        falling = ~flat & (m < 0)
        tmin[rising] = np.maximum(tmin[rising], cross[rising])
        tmax[falling] = np.minimum(tmax[falling], cross[falling])
    hit = tmax - tmin > tol
    near, tmin, tmax = near[hit], tmin[hit], tmax[hit]

    breaks = np.unique(np.concatenate([tmin, tmax]))
    merged = [breaks[0]] if len(breaks) else []
    for b in breaks[1:]:
        if b - merged[-1] > tol:
            merged.append(b)
    merged = np.asarray(merged)

    out_cells, out_t0, out_t1 = [], [], []
    for a, b in zip(merged[:-1], merged[1:]):
        mid = 0.5 * (a + b)
        owners = near[(tmin <= mid + tol) & (tmax >= mid - tol)]
        if len(owners) == 0:
            continue
        out_cells.append(int(owners.min()))
        out_t0.append(a)
        out_t1.append(b)
    return np.asarray(out_cells, dtype=np.int64), np.asarray(out_t0), np.asarray(out_t1)


def on_dirichlet_boundary(mesh: Mesh, x, tol: float = GEOMETRY_TOL) -> bool:
    """True when x lies on the closure of Γ_D."""
    x = np.asarray(x, dtype=float)
    facets = mesh.facets_marked(DIRICHLET)
    if len(facets) == 0:
        return False
    a = mesh.vertices[mesh.facets[facets, 0]]
    b = mesh.vertices[mesh.facets[facets, 1]]
    t = np.clip(np.einsum("fd,fd->f", x - a, b - a) / mesh.facet_lengths[facets] ** 2, 0.0, 1.0)
    dist = np.linalg.norm(a + t[:, None] * (b - a) - x, axis=1)
    return bool(np.any(dist <= tol * max(1.0, mesh.h_max)))


# ── Boundary moments ──────────────────────────────────────────────────────────

def _check_markers(mesh: Mesh, facets: np.ndarray, marker: str) -> None:
    wrong = facets[mesh.markers[facets] != marker]
    if len(wrong):
        got = mesh.markers[wrong[0]] or "interior"
        raise MarkerMismatch(f"facet {int(wrong[0])} is {got}, expected {marker}")


def dirichlet_moment(psi_D: Optional[PointFunction], mesh: Mesh, facets,
                     n: int = LINE_POINTS):
    """∫_F ψ_D ds on Dirichlet facet(s); scalar for a single facet index."""
    idx = np.atleast_1d(np.asarray(facets, dtype=np.int64))
    _check_markers(mesh, idx, DIRICHLET)
    if psi_D is None:
        values = np.zeros(len(idx))
    else:
        X, W = facet_points(mesh, n, idx)
        values = (W * psi_D(X)).sum(axis=1)
    return float(values[0]) if np.ndim(facets) == 0 else values


def neumann_moment(zeta_N: Optional[FacetFunction], mesh: Mesh, facets,
                   n: int = LINE_POINTS):
    """∫_F ζ_N ds on Neumann facet(s), outward normal; scalar for a single index."""
    idx = np.atleast_1d(np.asarray(facets, dtype=np.int64))
    _check_markers(mesh, idx, NEUMANN)
    if zeta_N is None:
        values = np.zeros(len(idx))
    else:
        X, W = facet_points(mesh, n, idx)
        normals = np.broadcast_to(mesh.facet_normals[idx][:, None, :], X.shape)
        values = (W * zeta_N(X, normals)).sum(axis=1)
    return float(values[0]) if np.ndim(facets) == 0 else values
