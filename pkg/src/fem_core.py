"""
fem_core.py — Quadrature, local bases, DOF maps, discrete fields and L² projections.

Bases
-----
  RT₀        φ_i = s_i (x − p_i) / (2|K|)   (p_i the vertex opposite local facet i,
             s_i the cell's orientation sign); ∫_F φ_F·n ds = 1, div φ_i = s_i/|K|.
  P_k        scaled monomials ((x − s_K)/h_K)^a ((y − s_K)/h_K)^b ordered by
             total degree, so basis 0 is the constant 1.
  hats       continuous P₁, i.e. barycentric coordinates λ_i per cell.
  bubbles    η_K = λ₀λ₁λ₂ and dual functions χ_{K,j} ∈ η_K·P_k(K) with
             ∫_K χ_{K,j} p_i = δ_{ji}.

Every evaluator works on batches: points X of shape (C, q, 2) together with
the C cell indices they belong to.

Usage
-----
    from src.fem_core import l2_project_scalar, norm_lp, triangle_rule

    rule = triangle_rule(6)
    psi0 = l2_project_scalar(lambda X: X[..., 0], 0, mesh)
    err  = norm_lp(mesh, lambda X, c: psi0.evaluate(X, c) - X[..., 0], p=2)
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from src.config import ERROR_DEGREE, GEOMETRY_TOL, LINE_POINTS, LOAD_DEGREE, SINGULAR_GRADING
from src.errors import DegenerateCell, SingularGram
from src.mesh import Mesh, dirichlet_vertices

# Callable conventions: scalar f(X) -> X.shape[:-1]; vector u(X) -> X.shape
PointFunction = Callable[[np.ndarray], np.ndarray]
CellFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]

GRAM_CONDITION_LIMIT = 1e12


# ── Quadrature ────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points (q, 3) and weights (q,) on the reference triangle."""
    points:  np.ndarray
    weights: np.ndarray
    degree:  int

    @property
    def size(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """
    Collapsed Gauss rule exact for polynomials of total degree ≤ `degree`.
    Gauss–Jacobi(α=1) in the collapsed direction absorbs the Duffy Jacobian.
    """
    n = max(1, int(np.ceil((degree + 1) / 2)))
    tj, wj = roots_jacobi(n, 1.0, 0.0)
    tl, wl = roots_legendre(n)
    xi = 0.5 * (1.0 + tj)
    eta = 0.5 * (1.0 + tl)
    x = np.repeat(xi, n)
    y = (1.0 - x) * np.tile(eta, n)
    weights = np.outer(wj, wl).ravel() / 8.0
    points = np.column_stack([1.0 - x - y, x, y])
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, degree)


_SUBCELLS = np.array([
    [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5]],
    [[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.5, 0.5]],
    [[0.5, 0.0, 0.5], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]],
    [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]],
])


@lru_cache(maxsize=None)
def refined_rule(degree: int) -> QuadratureRule:
    """`triangle_rule(degree)` copied onto the four red-refinement children."""
    base = triangle_rule(degree)
    points = np.concatenate([base.points @ sub for sub in _SUBCELLS])
    weights = np.tile(base.weights / 4.0, 4)
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, degree)


@lru_cache(maxsize=None)
def gauss_line(n: int = LINE_POINTS) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss–Legendre points/weights on [0, 1] (weights sum to 1)."""
    t, w = roots_legendre(n)
    return 0.5 * (1.0 + t), 0.5 * w


@lru_cache(maxsize=None)
def graded_rule(degree: int, toward: str, beta: float = SINGULAR_GRADING) -> QuadratureRule:
    """
    Collapsed rule with the λ₁ direction graded by s ↦ s^β.

    toward="edge" clusters points at the edge λ₁ = 0, toward="vertex" at the
    vertex λ₁ = 1. Integrands behaving like dist^(−γ), γ < 1, to that edge or
    vertex become polynomial-like in s once β(1 − γ) is close to an integer.
    """
    if toward not in ("edge", "vertex"):
        raise ValueError(f"toward must be 'edge' or 'vertex', got {toward!r}")
    n = max(1, int(np.ceil((degree + 1) / 2)))
    s, ws = gauss_line(n)
    eta, we = gauss_line(n)
    if toward == "edge":
        x = s ** beta
        jac = beta * s ** (beta - 1.0) * (1.0 - x)
    else:
        x = 1.0 - s ** beta
        jac = beta * s ** (2.0 * beta - 1.0)
    xs = np.repeat(x, n)
    ys = (1.0 - xs) * np.tile(eta, n)
    weights = np.outer(ws * jac, we).ravel()
    points = np.column_stack([1.0 - xs - ys, xs, ys])
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, degree)


# ── Geometry ──────────────────────────────────────────────────────────────────

def _cells(mesh: Mesh, cells: Optional[np.ndarray]) -> np.ndarray:
    return np.arange(mesh.n_cells) if cells is None else np.asarray(cells, dtype=np.int64)


def map_points(mesh: Mesh, rule: QuadratureRule,
               cells: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Physical points X (C, q, 2) and weights W (C, q) with Σ W = |K| per cell."""
    cells = _cells(mesh, cells)
    xy = mesh.vertices[mesh.cells[cells]]                  # (C, 3, 2)
    X = np.einsum("qi,cij->cqj", rule.points, xy)
    W = 2.0 * mesh.areas[cells][:, None] * rule.weights[None, :]
    return X, W


def singular_line_points(mesh: Mesh, degree: int, line: PointFunction,
                         cells: Optional[np.ndarray] = None, beta: float = SINGULAR_GRADING,
                         tol: float = GEOMETRY_TOL) -> Tuple[np.ndarray, np.ndarray]:
    """
    Like map_points(mesh, triangle_rule(degree)) but graded toward the zero
    set of the affine function `line` on cells that touch it.

    A cell with two vertices on the line gets the edge-graded rule, a cell
    with one vertex on it the vertex-graded rule; all rules share one size.
    The mesh must conform to the line (no cell is cut by it).
    """
    cells = _cells(mesh, cells)
    xy = mesh.vertices[mesh.cells[cells]]                  # (C, 3, 2)
    on = np.abs(np.asarray(line(xy), dtype=float)) < tol    # (C, 3)
    n_on = on.sum(axis=1)

    plain = triangle_rule(degree)
    P = np.broadcast_to(plain.points, (len(cells),) + plain.points.shape).copy()
    w = np.broadcast_to(plain.weights, (len(cells), plain.size)).copy()
    for count, toward, pick in ((2, "edge", np.argmin), (1, "vertex", np.argmax)):
        rule = graded_rule(degree, toward, beta)
        for c in np.flatnonzero(n_on == count):
            v = int(pick(on[c]))                            # off-line vertex for edges
            order = [0, 1, 2]
            order[1], order[v] = order[v], order[1]
            P[c] = rule.points[:, order]
            w[c] = rule.weights

    X = np.einsum("cqi,cij->cqj", P, xy)
    W = 2.0 * mesh.areas[cells][:, None] * w
    return X, W


def barycentric(mesh: Mesh, X: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Barycentric coordinates (C, q, 3) of X with respect to `cells`."""
    xy = mesh.vertices[mesh.cells[cells]]
    e1 = xy[:, 1] - xy[:, 0]
    e2 = xy[:, 2] - xy[:, 0]
    det = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])[:, None]
    d = X - xy[:, None, 0]
    l1 = (d[..., 0] * e2[:, None, 1] - d[..., 1] * e2[:, None, 0]) / det
    l2 = (e1[:, None, 0] * d[..., 1] - e1[:, None, 1] * d[..., 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def hat_gradients(mesh: Mesh, cells: Optional[np.ndarray] = None) -> np.ndarray:
    """Constant gradients ∇λ_i (C, 3, 2) of the barycentric coordinates."""
    cells = _cells(mesh, cells)
    xy = mesh.vertices[mesh.cells[cells]]
    opposite = np.stack([xy[:, 2] - xy[:, 1], xy[:, 0] - xy[:, 2], xy[:, 1] - xy[:, 0]], axis=1)
    perp = np.stack([-opposite[..., 1], opposite[..., 0]], axis=-1)
    return perp / (2.0 * mesh.areas[cells])[:, None, None]


# ── Local bases ───────────────────────────────────────────────────────────────

@lru_cache(maxsize=None)
def monomial_exponents(k: int) -> Tuple[Tuple[int, int], ...]:
    return tuple((d - b, b) for d in range(k + 1) for b in range(d + 1))


def pk_dim(k: int) -> int:
    return (k + 1) * (k + 2) // 2


def eval_pk(mesh: Mesh, k: int, X: np.ndarray,
            cells: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Local P_k basis values (C, q, n) and gradients (C, q, n, 2)."""
    cells = _cells(mesh, cells)
    h = mesh.diameters[cells][:, None]
    xi = (X[..., 0] - mesh.centroids[cells][:, None, 0]) / h
    eta = (X[..., 1] - mesh.centroids[cells][:, None, 1]) / h
    exps = monomial_exponents(k)
    vals = np.empty(X.shape[:-1] + (len(exps),))
    grads = np.zeros(X.shape[:-1] + (len(exps), 2))
    for j, (a, b) in enumerate(exps):
        vals[..., j] = xi ** a * eta ** b
        if a:
            grads[..., j, 0] = a * xi ** (a - 1) * eta ** b / h
        if b:
            grads[..., j, 1] = b * xi ** a * eta ** (b - 1) / h
    return vals, grads


def eval_rt0(mesh: Mesh, X: np.ndarray,
             cells: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    RT₀ basis values (C, q, 3, 2) and constant divergences (C, 3).
    Local basis i belongs to global facet mesh.cell_facets[c, i].
    """
    cells = _cells(mesh, cells)
    area = mesh.areas[cells]
    if np.any(area <= 0.0):
        bad = int(cells[np.flatnonzero(area <= 0.0)[0]])
        raise DegenerateCell(f"cell {bad} has non-positive area")
    xy = mesh.vertices[mesh.cells[cells]]                  # (C, 3, 2)
    signs = mesh.cell_signs[cells].astype(float)           # (C, 3)
    scale = signs / (2.0 * area)[:, None]
    vals = (X[:, :, None, :] - xy[:, None, :, :]) * scale[:, None, :, None]
    divs = signs / area[:, None]
    return vals, divs


def eval_hat(mesh: Mesh, vertex: int, X: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Continuous P₁ hat of `vertex` at X (C, q); zero on cells not containing it."""
    lam = barycentric(mesh, X, cells)
    local = mesh.cells[cells] == vertex                    # (C, 3)
    return np.einsum("cqi,ci->cq", lam, local.astype(float))


class DualBubbles:
    """
    Dual bubble functions χ_{K,j} = η_K Σ_l C_K[j, l] p_l for every cell,
    with C_K the inverse of the Gram matrix ∫_K η_K p_l p_i.
    """

    def __init__(self, mesh: Mesh, k: int) -> None:
        self.mesh = mesh
        self.k = k
        rule = triangle_rule(2 * k + 3)
        X, W = map_points(mesh, rule)
        lam = np.broadcast_to(rule.points, X.shape[:-1] + (3,))
        bubble = lam.prod(axis=-1)
        P, _ = eval_pk(mesh, k, X)
        gram = np.einsum("cq,cq,cql,cqi->cli", W, bubble, P, P)
        try:
            cond = np.linalg.cond(gram)
            if np.any(~np.isfinite(cond)) or np.any(cond > GRAM_CONDITION_LIMIT):
                bad = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
                raise SingularGram(f"bubble Gram matrix of cell {bad} is singular "
                                   f"(condition {cond[bad]:.3e})")
            self.coeffs = np.linalg.inv(gram)              # (M, n, n), rows index j
        except np.linalg.LinAlgError as e:
            raise SingularGram(f"bubble Gram inversion failed: {e}")
        self.gram = gram

    @property
    def dim(self) -> int:
        return pk_dim(self.k)

    def evaluate(self, X: np.ndarray,
                 cells: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """χ values (C, q, n) and gradients (C, q, n, 2); X must lie in the cells."""
        cells = _cells(self.mesh, cells)
        lam = barycentric(self.mesh, X, cells)
        glam = hat_gradients(self.mesh, cells)             # (C, 3, 2)
        bubble = lam.prod(axis=-1)
        gbubble = (lam[..., 1] * lam[..., 2])[..., None] * glam[:, None, 0] \
            + (lam[..., 0] * lam[..., 2])[..., None] * glam[:, None, 1] \
            + (lam[..., 0] * lam[..., 1])[..., None] * glam[:, None, 2]
        P, dP = eval_pk(self.mesh, self.k, X, cells)
        C = self.coeffs[cells]
        Pt = np.einsum("cjl,cql->cqj", C, P)
        dPt = np.einsum("cjl,cqld->cqjd", C, dP)
        vals = bubble[..., None] * Pt
        grads = gbubble[:, :, None, :] * Pt[..., None] + bubble[..., None, None] * dPt
        return vals, grads


def dual_bubble(mesh: Mesh, k: int) -> DualBubbles:
    return DualBubbles(mesh, k)


# ── DOF maps ──────────────────────────────────────────────────────────────────

class DofMap:
    """RT₀ facet DOFs, discontinuous P_k cell DOFs and hat DOFs on V₀ ∪ V_N."""

    def __init__(self, mesh: Mesh, k: int = 0) -> None:
        self.mesh = mesh
        self.k = k
        self.n_local = pk_dim(k)
        self.n_flux = mesh.n_facets
        self.n_scalar = mesh.n_cells * self.n_local
        on_dirichlet = dirichlet_vertices(mesh)
        self.hat_index = np.full(mesh.n_vertices, -1, dtype=np.int64)
        self.hat_index[~on_dirichlet] = np.arange(int((~on_dirichlet).sum()))
        self.n_hat = int((~on_dirichlet).sum())

    @property
    def n_total(self) -> int:
        return self.n_flux + self.n_scalar

    def scalar_dofs(self, cells: Optional[np.ndarray] = None) -> np.ndarray:
        """Global scalar DOF indices (C, n_local)."""
        cells = _cells(self.mesh, cells)
        return cells[:, None] * self.n_local + np.arange(self.n_local)[None, :]


# ── Discrete fields ───────────────────────────────────────────────────────────

@dataclass
class ScalarField:
    """Discontinuous P_degree field, coefficients (M, dim P_degree)."""
    mesh:   Mesh
    degree: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(self.mesh.n_cells, pk_dim(self.degree))

    def evaluate(self, X: np.ndarray, cells: Optional[np.ndarray] = None) -> np.ndarray:
        cells = _cells(self.mesh, cells)
        P, _ = eval_pk(self.mesh, self.degree, X, cells)
        return np.einsum("cqn,cn->cq", P, self.coeffs[cells])

    def gradient(self, X: np.ndarray, cells: Optional[np.ndarray] = None) -> np.ndarray:
        cells = _cells(self.mesh, cells)
        _, dP = eval_pk(self.mesh, self.degree, X, cells)
        return np.einsum("cqnd,cn->cqd", dP, self.coeffs[cells])

    def cell_integrals(self, degree: Optional[int] = None) -> np.ndarray:
        X, W = map_points(self.mesh, triangle_rule(degree or max(2, self.degree)))
        return (W * self.evaluate(X)).sum(axis=1)

    def cell_means(self) -> np.ndarray:
        return self.cell_integrals() / self.mesh.areas

    def embed(self, degree: int) -> "ScalarField":
        """Same function in a P_degree basis (degree ≥ self.degree)."""
        if degree < self.degree:
            raise ValueError(f"cannot embed P{self.degree} into P{degree}")
        coeffs = np.zeros((self.mesh.n_cells, pk_dim(degree)))
        coeffs[:, :pk_dim(self.degree)] = self.coeffs
        return ScalarField(self.mesh, degree, coeffs)

    @property
    def vector(self) -> np.ndarray:
        return self.coeffs.ravel()


@dataclass
class FluxField:
    """RT₀ field, one coefficient ∫_F ζ·n ds per facet (global normal)."""
    mesh:   Mesh
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(self.mesh.n_facets)

    def evaluate(self, X: np.ndarray, cells: Optional[np.ndarray] = None) -> np.ndarray:
        cells = _cells(self.mesh, cells)
        vals, _ = eval_rt0(self.mesh, X, cells)
        return np.einsum("cqid,ci->cqd", vals, self.coeffs[self.mesh.cell_facets[cells]])

    def divergence(self, cells: Optional[np.ndarray] = None) -> np.ndarray:
        """Cellwise constant divergence (C,)."""
        cells = _cells(self.mesh, cells)
        return (self.mesh.cell_signs[cells] * self.coeffs[self.mesh.cell_facets[cells]]).sum(axis=1) \
            / self.mesh.areas[cells]


@dataclass
class VectorField:
    """Componentwise discontinuous P_degree field, coefficients (M, n, 2)."""
    mesh:   Mesh
    degree: int
    coeffs: np.ndarray

    def evaluate(self, X: np.ndarray, cells: Optional[np.ndarray] = None) -> np.ndarray:
        cells = _cells(self.mesh, cells)
        P, _ = eval_pk(self.mesh, self.degree, X, cells)
        return np.einsum("cqn,cnd->cqd", P, self.coeffs[cells])

    @classmethod
    def zero(cls, mesh: Mesh, degree: int = 1) -> "VectorField":
        return cls(mesh, degree, np.zeros((mesh.n_cells, pk_dim(degree), 2)))


# ── Projections and norms ─────────────────────────────────────────────────────

def _local_mass(mesh: Mesh, k: int, degree: int):
    X, W = map_points(mesh, triangle_rule(degree))
    P, _ = eval_pk(mesh, k, X)
    mass = np.einsum("cq,cqi,cqj->cij", W, P, P)
    return X, W, P, mass


def l2_project_scalar(f: PointFunction, k: int, mesh: Mesh,
                      degree: int = LOAD_DEGREE) -> ScalarField:
    """Cellwise L² projection of f onto discontinuous P_k."""
    X, W, P, mass = _local_mass(mesh, k, degree)
    rhs = np.einsum("cq,cq,cqi->ci", W, np.asarray(f(X), dtype=float), P)
    return ScalarField(mesh, k, np.linalg.solve(mass, rhs[..., None])[..., 0])


def l2_project_vector(u: PointFunction, mesh: Mesh,
                      degree: int = LOAD_DEGREE, k: int = 1) -> VectorField:
    """Componentwise L² projection of u onto discontinuous [P_k]² (u_h)."""
    X, W, P, mass = _local_mass(mesh, k, degree)
    rhs = np.einsum("cq,cqd,cqi->cid", W, np.asarray(u(X), dtype=float), P)
    return VectorField(mesh, k, np.linalg.solve(mass, rhs))


def facet_points(mesh: Mesh, n: int = LINE_POINTS,
                 facets: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss points (F, n, 2) on facets and weights (F, n) scaled by |F|."""
    facets = np.arange(mesh.n_facets) if facets is None else np.asarray(facets, dtype=np.int64)
    t, w = gauss_line(n)
    a = mesh.vertices[mesh.facets[facets, 0]]
    b = mesh.vertices[mesh.facets[facets, 1]]
    X = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    return X, mesh.facet_lengths[facets][:, None] * w[None, :]


def interpolate_rt0(mesh: Mesh, zeta: PointFunction, n: int = LINE_POINTS) -> FluxField:
    """Canonical RT₀ interpolant: DOF_F = ∫_F ζ·n ds."""
    X, W = facet_points(mesh, n)
    flux = np.einsum("fqd,fd->fq", np.asarray(zeta(X), dtype=float), mesh.facet_normals)
    return FluxField(mesh, (W * flux).sum(axis=1))


def integrate(mesh: Mesh, fn: CellFunction, degree: int = ERROR_DEGREE) -> float:
    """∫_Ω fn for fn(X, cells) -> (C, q)."""
    X, W = map_points(mesh, triangle_rule(degree))
    return float((W * fn(X, np.arange(mesh.n_cells))).sum())


def norm_lp(mesh: Mesh, fn: CellFunction, p: float, degree: int = ERROR_DEGREE,
            refine_mask: Optional[np.ndarray] = None) -> float:
    """
    (Σ_K ∫_K |fn|^p)^{1/p}; vector values use the Euclidean magnitude.

    Args:
        fn:          fn(X, cells) -> (C, q) or (C, q, 2).
        refine_mask: cells integrated with the 4-subcell composite rule.
    """
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    if degree < 2:
        raise ValueError("quadrature degree must be >= 2")
    all_cells = np.arange(mesh.n_cells)
    groups: List[Tuple[np.ndarray, QuadratureRule]] = []
    if refine_mask is None or not np.any(refine_mask):
        groups.append((all_cells, triangle_rule(degree)))
    else:
        refine_mask = np.asarray(refine_mask, dtype=bool)
        groups.append((all_cells[~refine_mask], triangle_rule(degree)))
        groups.append((all_cells[refine_mask], refined_rule(degree)))
    total = 0.0
    for cells, rule in groups:
        if len(cells) == 0:
            continue
        X, W = map_points(mesh, rule, cells)
        v = np.asarray(fn(X, cells), dtype=float)
        mag = np.linalg.norm(v, axis=-1) if v.ndim == 3 else np.abs(v)
        total += float((W * mag ** p).sum())
    return total ** (1.0 / p)
