"""
analysis.py — Manufactured cases, error norms, EoC and convergence studies.

Cases
-----
  ex1-smooth  unit square, x = 1 Neumann, ψ = sin(πx) sin(πy), L² density
  ex1-rough   same setup, ψ = |x − y|^{3/4} sin(πx) sin(πy), H⁻¹ load (weak form)
  ex2         (−1,1)², all Dirichlet, ψ = x|x|^{65/128}(1 − x²)(1 − y²),
              ε = exp(−xy), κ = ½ + sin²(xy), L² density singular at x = 0
  ex3-line    fracture-conforming pentagon, line Dirac source, ε = 1e-3,
              no closed form (errors against a finer reference solution)
  constant    ε = κ = 1, u = 0, ψ_D = 1, g = 1, exact ψ = 1

Workflow (per level)
--------------------
  1. u → u_h (componentwise discontinuous P₁ projection)
  2. Qg (or g itself on the direct path)
  3. assemble → apply_bc → solve
  4. Stenberg postprocess
  5. errors against the exact fields, or against the reference level

Usage
-----
    from src.analysis import builtin_case, run_convergence

    report = run_convergence(builtin_case("ex1-smooth"), levels=5, verbose=True)
    report.print()
    report.to_csv("results/ex1_smooth.csv")
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.config import (
    ASSEMBLY_DEGREE,
    CASE_NAMES,
    DEFAULT_LEVELS,
    ERROR_DEGREE,
    LOAD_DEGREE,
    REFERENCE_EXTRA,
)
from src.errors import ConfigError, InconsistentCase, UndefinedNorm, UnknownCase
from src.fem_core import FluxField, ScalarField, l2_project_vector, norm_lp
from src.loads import BoundaryData, DensityL2, LineDirac, LoadFunctional, WeakForm
from src.mesh import (
    Mesh,
    MarkerRule,
    all_dirichlet,
    generate_structured,
    neumann_where,
    read_mesh,
    uniform_refine,
)
from src.postprocess import PostprocessedField, stenberg
from src.regularizer import apply_Q, compute_weights
from src.system import CoefficientSet, SaddleSystem, apply_bc, assemble, solve

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
EX3_MESH = os.path.join(ROOT, "data", "meshes", "ex3_initial.txt")

SMOOTH, H_MINUS_ONE, L2_ROUGH, NO_EXACT = "smooth", "H-1", "L2-rough", "no-exact"

EX2_EXPONENT = 65.0 / 128.0
EX3_SIGMA = 0.08
EX3_THETA = 0.12
EX3_EPS = 1e-3


# ── Case catalogue ────────────────────────────────────────────────────────────

@dataclass
class ManufacturedCase:
    name:        str
    domain:      Tuple[float, float, float, float]
    marker:      MarkerRule
    eps:         Callable
    kappa:       Callable
    eps_bounds:  Tuple[float, float]
    u:           Callable
    load:        LoadFunctional
    bdata:       BoundaryData
    regularity:  str
    psi:         Optional[Callable] = None
    grad_psi:    Optional[Callable] = None
    zeta:        Optional[Callable] = None
    div_zeta:    Optional[Callable] = None
    density:     Optional[Callable] = None
    mesh_path:   Optional[str] = None
    nx0:         int = 2
    diagonal:    str = "right"
    default_levels: int = DEFAULT_LEVELS
    refine_cells: Optional[Callable[[Mesh], np.ndarray]] = None
    note:        str = ""

    @property
    def has_exact(self) -> bool:
        return self.psi is not None

    def initial_mesh(self) -> Mesh:
        if self.mesh_path is not None:
            return read_mesh(self.mesh_path)
        return generate_structured(self.nx0, self.domain, self.diagonal, self.marker)


def _ones(X):
    return np.ones(X.shape[:-1])


def _zeros(X):
    return np.zeros(X.shape[:-1])


def _zero_vector(X):
    return np.zeros(X.shape)


def _normal_trace(zeta: Callable) -> Callable:
    def zeta_N(X, normals):
        return np.einsum("...d,...d->...", zeta(X), normals)
    return zeta_N


def _ex1_velocity(X):
    x, y = X[..., 0], X[..., 1]
    return np.stack([np.cos(np.pi * x) * np.sin(np.pi * y),
                     -np.sin(np.pi * x) * np.cos(np.pi * y)], axis=-1)


def _ex1_common(name: str, psi, grad_psi, regularity: str, load_kind: str) -> ManufacturedCase:
    u = _ex1_velocity

    def zeta(X):
        return grad_psi(X) - u(X) * psi(X)[..., None]

    case = ManufacturedCase(
        name=name, domain=(0.0, 1.0, 0.0, 1.0),
        marker=neumann_where(lambda m: m[0] > 1.0 - 1e-12),
        eps=_ones, kappa=_ones, eps_bounds=(1.0, 1.0), u=u,
        load=None, bdata=BoundaryData(psi_D=psi, zeta_N=_normal_trace(zeta)),
        regularity=regularity, psi=psi, grad_psi=grad_psi, zeta=zeta,
    )
    if load_kind == "weak":
        case.load = WeakForm(psi, grad_psi, u, _ones, _ones, case.bdata.zeta_N)
    return case


def _ex1_smooth() -> ManufacturedCase:
    def psi(X):
        return np.sin(np.pi * X[..., 0]) * np.sin(np.pi * X[..., 1])

    def grad_psi(X):
        x, y = X[..., 0], X[..., 1]
        return np.pi * np.stack([np.cos(np.pi * x) * np.sin(np.pi * y),
                                 np.sin(np.pi * x) * np.cos(np.pi * y)], axis=-1)

    def div_zeta(X):
        # Δψ − u·∇ψ (u is divergence free)
        return -2.0 * np.pi ** 2 * psi(X) - np.einsum("...d,...d->...", _ex1_velocity(X), grad_psi(X))

    def density(X):
        return psi(X) - div_zeta(X)

    case = _ex1_common("ex1-smooth", psi, grad_psi, SMOOTH, "density")
    case.div_zeta = div_zeta
    case.density = density
    case.load = DensityL2(density)
    return case


def _ex1_rough() -> ManufacturedCase:
    def parts(X):
        x, y = X[..., 0], X[..., 1]
        r = np.abs(x - y)
        s = np.sin(np.pi * x) * np.sin(np.pi * y)
        return x, y, r, s

    def psi(X):
        _, _, r, s = parts(X)
        return r ** 0.75 * s

    def grad_psi(X):
        x, y, r, s = parts(X)
        with np.errstate(divide="ignore", invalid="ignore"):
            dr = np.where(r > 0.0, 0.75 * r ** -0.25 * np.sign(x - y), 0.0)
        ds = np.pi * np.stack([np.cos(np.pi * x) * np.sin(np.pi * y),
                               np.sin(np.pi * x) * np.cos(np.pi * y)], axis=-1)
        direction = np.stack([dr, -dr], axis=-1)
        return direction * s[..., None] + (r ** 0.75)[..., None] * ds

    case = _ex1_common("ex1-rough", psi, grad_psi, H_MINUS_ONE, "weak")
    case.refine_cells = touches_diagonal
    case.note = "load in H⁻¹ only; div ζ_ex ∉ L^{4/3}"
    return case


def touches_diagonal(mesh: Mesh) -> np.ndarray:
    """Cells with a vertex on x = y."""
    xy = mesh.vertices[mesh.cells]
    return np.any(np.abs(xy[..., 0] - xy[..., 1]) < 1e-12, axis=1)


def _on_axis(X):
    """Zero on x = 0, where the ex2 density behaves like |x|^(a − 1)."""
    return X[..., 0]


def _ex2() -> ManufacturedCase:
    a = EX2_EXPONENT

    def profile(x):
        ax = np.abs(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            X0 = x * ax ** a * (1.0 - x ** 2)
            X1 = ax ** a * ((1.0 + a) - (3.0 + a) * x ** 2)
            X2 = np.where(ax > 0.0,
                          a * np.sign(x) * ax ** (a - 1.0) * ((1.0 + a) - (3.0 + a) * x ** 2),
                          0.0) - 2.0 * (3.0 + a) * x * ax ** a
        return X0, X1, X2

    def eps(X):
        return np.exp(-X[..., 0] * X[..., 1])

    def kappa(X):
        return 0.5 + np.sin(X[..., 0] * X[..., 1]) ** 2

    def u(X):
        hx, hy = 0.5 * np.pi * X[..., 0], 0.5 * np.pi * X[..., 1]
        return np.stack([np.cos(hx) * np.sin(hy), -np.sin(hx) * np.cos(hy)], axis=-1)

    def psi(X):
        X0, _, _ = profile(X[..., 0])
        return X0 * (1.0 - X[..., 1] ** 2)

    def grad_psi(X):
        X0, X1, _ = profile(X[..., 0])
        y = X[..., 1]
        return np.stack([X1 * (1.0 - y ** 2), -2.0 * y * X0], axis=-1)

    def zeta(X):
        return eps(X)[..., None] * grad_psi(X) - u(X) * psi(X)[..., None]

    def div_zeta(X):
        x, y = X[..., 0], X[..., 1]
        X0, _, X2 = profile(x)
        e = eps(X)
        grad_eps = np.stack([-y * e, -x * e], axis=-1)
        lap = X2 * (1.0 - y ** 2) - 2.0 * X0
        g = grad_psi(X)
        return np.einsum("...d,...d->...", grad_eps, g) + e * lap \
            - np.einsum("...d,...d->...", u(X), g)

    def density(X):
        return kappa(X) * psi(X) - div_zeta(X)

    case = ManufacturedCase(
        name="ex2", domain=(-1.0, 1.0, -1.0, 1.0), marker=all_dirichlet,
        eps=eps, kappa=kappa, eps_bounds=(math.exp(-1.0), math.exp(1.0)), u=u,
        load=DensityL2(density, singular_line=_on_axis, grading=2.0 / a),
        bdata=BoundaryData(psi_D=_zeros),
        regularity=L2_ROUGH, psi=psi, grad_psi=grad_psi, zeta=zeta,
        div_zeta=div_zeta, density=density,
        note="g_ex ∈ L² but g_ex ∉ H^s for s ≥ 1/128",
    )
    check_density(case)
    return case


def ex3_velocity(U0: float) -> Callable:
    """u = rot η with η = U0 σ tanh((y − ½)/σ)(1 + θ sin 2πx)."""
    def u(X):
        x, y = X[..., 0], X[..., 1]
        t = np.tanh((y - 0.5) / EX3_SIGMA)
        wave = 1.0 + EX3_THETA * np.sin(2.0 * np.pi * x)
        eta_y = U0 * (1.0 - t ** 2) * wave
        eta_x = U0 * EX3_SIGMA * t * EX3_THETA * 2.0 * np.pi * np.cos(2.0 * np.pi * x)
        return np.stack([eta_y, -eta_x], axis=-1)
    return u


def _ex3(U0: float) -> ManufacturedCase:
    return ManufacturedCase(
        name="ex3-line", domain=(-0.25, 1.25, 0.0, 1.25), marker=all_dirichlet,
        eps=lambda X: np.full(X.shape[:-1], EX3_EPS), kappa=_ones,
        eps_bounds=(EX3_EPS, EX3_EPS), u=ex3_velocity(U0),
        load=LineDirac((0.4, 0.25), (0.6, 0.85)), bdata=BoundaryData(psi_D=_zeros),
        regularity=NO_EXACT, mesh_path=EX3_MESH, default_levels=4,
        note=f"U0 = {U0:g}; errors against a reference {REFERENCE_EXTRA} levels finer",
    )


def _constant() -> ManufacturedCase:
    return ManufacturedCase(
        name="constant", domain=(0.0, 1.0, 0.0, 1.0), marker=all_dirichlet,
        eps=_ones, kappa=_ones, eps_bounds=(1.0, 1.0), u=_zero_vector,
        load=DensityL2(_ones), bdata=BoundaryData(psi_D=_ones),
        regularity=SMOOTH, psi=_ones, grad_psi=_zero_vector, zeta=_zero_vector,
        div_zeta=_zeros, density=_ones, nx0=1, default_levels=3,
    )


def builtin_case(name: str, u0: float = 0.25) -> ManufacturedCase:
    """
    Raises:
        UnknownCase: `name` not in CASE_NAMES.
    """
    builders = {
        "ex1-smooth": _ex1_smooth,
        "ex1-rough":  _ex1_rough,
        "ex2":        _ex2,
        "ex3-line":   lambda: _ex3(u0),
        "constant":   _constant,
    }
    if name not in builders:
        raise UnknownCase(f"unknown case {name!r}; choose from {', '.join(CASE_NAMES)}")
    return builders[name]()


def check_density(case: ManufacturedCase, n_points: int = 20, step: float = 1e-5,
                  rtol: float = 1e-4, seed: int = 0) -> float:
    """
    Compare the closed-form density with κψ − div ζ by central differences of
    ζ at random interior points away from x = 0.

    Returns the worst relative deviation.

    Raises:
        InconsistentCase: deviation above rtol.
    """
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = case.domain
    pts = []
    while len(pts) < n_points:
        p = rng.uniform([x0 + 0.05, y0 + 0.05], [x1 - 0.05, y1 - 0.05])
        if abs(p[0]) > 0.05:
            pts.append(p)
    X = np.asarray(pts)
    ex = np.array([step, 0.0])
    ey = np.array([0.0, step])
    div_fd = (case.zeta(X + ex)[:, 0] - case.zeta(X - ex)[:, 0]
              + case.zeta(X + ey)[:, 1] - case.zeta(X - ey)[:, 1]) / (2.0 * step)
    g_fd = case.kappa(X) * case.psi(X) - div_fd
    g = case.density(X)
    dev = np.abs(g - g_fd) / np.maximum(np.abs(g), 1.0)
    worst = float(dev.max())
    if worst > rtol:
        raise InconsistentCase(f"{case.name}: closed-form density deviates from the "
                               f"finite-difference check by {worst:.2e}")
    return worst


# ── Errors ────────────────────────────────────────────────────────────────────

@dataclass
class ErrorRecord:
    e_flux_l2:    float
    e_flux_div43: Optional[float]
    e_psi_l4:     float
    e_post_l2:    float
    level:        int = 0
    h:            float = float("nan")
    dofs:         int = 0

    def to_dict(self) -> dict:
        return {"level": self.level, "h": self.h, "dofs": self.dofs,
                "e_flux_l2": self.e_flux_l2, "e_flux_div43": self.e_flux_div43,
                "e_psi_l4": self.e_psi_l4, "e_post_l2": self.e_post_l2}


def compute_errors(
    case: ManufacturedCase,
    zeta: FluxField,
    psi: ScalarField,
    post: PostprocessedField,
    degree: int = ERROR_DEGREE,
    div_norm: Optional[bool] = None,
) -> ErrorRecord:
    """
    Errors against the exact fields.

    Args:
        div_norm: True requests e_div43, False skips it, None computes it
                  whenever the case's regularity allows.

    Raises:
        UndefinedNorm: no exact solution, or div norm requested on an H⁻¹ case.
    """
    if not case.has_exact:
        raise UndefinedNorm(f"{case.name} has no exact solution; use compare_to_reference")
    if div_norm and case.div_zeta is None:
        raise UndefinedNorm(f"{case.name}: div ζ_ex is not in L^(4/3) "
                            f"(regularity {case.regularity})")
    mesh = zeta.mesh
    refine = case.refine_cells(mesh) if case.refine_cells else None

    e_flux = norm_lp(mesh, lambda X, c: zeta.evaluate(X, c) - case.zeta(X), 2, degree, refine)
    e_div = None
    if div_norm is not False and case.div_zeta is not None:
        e_div = e_flux + norm_lp(
            mesh, lambda X, c: zeta.divergence(c)[:, None] - case.div_zeta(X), 4.0 / 3.0, degree, refine)
    e_psi = norm_lp(mesh, lambda X, c: psi.evaluate(X, c) - case.psi(X), 4, degree, refine)
    e_post = norm_lp(mesh, lambda X, c: post.evaluate(X, c) - case.psi(X), 2, degree, refine)
    return ErrorRecord(e_flux, e_div, e_psi, e_post)


# ── Level solves ──────────────────────────────────────────────────────────────

@dataclass
class LevelSolution:
    mesh:   Mesh
    coeffs: CoefficientSet
    rhs:    object
    system: SaddleSystem
    zeta:   FluxField
    psi:    ScalarField
    post:   PostprocessedField

    @property
    def dofs(self) -> int:
        return self.system.size


def solve_level(
    case: ManufacturedCase,
    mesh: Mesh,
    k: int = 0,
    use_q: bool = True,
    assembly_degree: int = ASSEMBLY_DEGREE,
    load_degree: int = LOAD_DEGREE,
    verbose: bool = False,
) -> LevelSolution:
    """u_h, Qg (or g), assemble, solve and postprocess on one mesh."""
    u_h = l2_project_vector(case.u, mesh, load_degree, k=1)
    coeffs = CoefficientSet(case.eps, case.kappa, u_h, case.eps_bounds, case.u)
    if use_q:
        weights = compute_weights(mesh, verbose=verbose)
        rhs = apply_Q(case.load, mesh, k, weights, degree=load_degree)
    else:
        if not isinstance(case.load, DensityL2):
            raise ConfigError(f"{case.name}: the direct path without Q needs an L² density load")
        rhs = case.load
    system = apply_bc(assemble(mesh, coeffs, rhs, case.bdata, k, assembly_degree,
                               load_degree, verbose=verbose), case.bdata)
    zeta, psi = solve(system, verbose=verbose)
    post = stenberg(mesh, coeffs, zeta, psi, k, assembly_degree)
    if verbose and post.mean_residual > 1e-12:
        print(f"   ⚠️  postprocess mean residual {post.mean_residual:.2e}")
    return LevelSolution(mesh, coeffs, rhs, system, zeta, psi, post)


def compare_to_reference(
    coarse: LevelSolution,
    reference: LevelSolution,
    degree: int = ERROR_DEGREE,
) -> ErrorRecord:
    """
    Errors of a coarse solution measured on the reference mesh. Coarse fields
    are evaluated exactly at reference quadrature points through the cell
    ancestry; the div norm is left undefined.

    Raises:
        MeshMismatch: coarse mesh is not an ancestor of the reference mesh.
    """
    mesh = reference.mesh
    anc = mesh.ancestor_cells(coarse.mesh)

    def diff(a, b):
        return lambda X, c: a.evaluate(X, anc[c]) - b.evaluate(X, c)

    return ErrorRecord(
        e_flux_l2=norm_lp(mesh, diff(coarse.zeta, reference.zeta), 2, degree),
        e_flux_div43=None,
        e_psi_l4=norm_lp(mesh, diff(coarse.psi, reference.psi), 4, degree),
        e_post_l2=norm_lp(mesh, diff(coarse.post, reference.post), 2, degree),
    )


# ── Reports ───────────────────────────────────────────────────────────────────

def eoc(errors: List[Optional[float]], hs: List[float]) -> List[Optional[float]]:
    """log(e_i/e_{i−1}) / log(h_i/h_{i−1}); None for the first level or gaps."""
    out: List[Optional[float]] = [None]
    for i in range(1, len(errors)):
        e0, e1 = errors[i - 1], errors[i]
        if e0 is None or e1 is None or e0 <= 0.0 or e1 <= 0.0 or hs[i] == hs[i - 1]:
            out.append(None)
        else:
            out.append(math.log(e1 / e0) / math.log(hs[i] / hs[i - 1]))
    return out


CSV_COLUMNS = ["level", "h", "dofs", "e_flux_l2", "e_flux_div43", "e_psi_l4",
               "e_post_l2", "eoc_flux", "eoc_psi", "eoc_post"]


@dataclass
class ConvergenceReport:
    case:    str
    k:       int
    use_q:   bool
    records: List[ErrorRecord] = field(default_factory=list)

    @property
    def hs(self) -> List[float]:
        return [r.h for r in self.records]

    def column(self, name: str) -> List[Optional[float]]:
        return [getattr(r, name) for r in self.records]

    @property
    def flux_column(self) -> str:
        """e_flux_div43 when defined on every level, else e_flux_l2."""
        divs = self.column("e_flux_div43")
        return "e_flux_div43" if divs and all(d is not None for d in divs) else "e_flux_l2"

    def eoc(self, name: str) -> List[Optional[float]]:
        return eoc(self.column(name), self.hs)

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame([r.to_dict() for r in self.records], columns=CSV_COLUMNS[:7])
        df["eoc_flux"] = self.eoc(self.flux_column)
        df["eoc_psi"] = self.eoc("e_psi_l4")
        df["eoc_post"] = self.eoc("e_post_l2")
        return df[CSV_COLUMNS]

    def to_csv(self, path: str) -> None:
        folder = os.path.dirname(path)
        if folder:
            os.makedirs(folder, exist_ok=True)
        self.to_dataframe().to_csv(path, index=False, float_format="%.17g", na_rep="")

    def to_dict(self) -> dict:
        return {"case": self.case, "k": self.k, "use_q": self.use_q,
                "rows": self.to_dataframe().to_dict(orient="records")}

    # ── pretty print ─────────────────────────────────────────────────────────
    def print(self) -> None:
        def cell(v, fmt):
            return "★".center(7) if v is None or (isinstance(v, float) and math.isnan(v)) else format(v, fmt)

        flux = self.flux_column
        label = "e_div43(ζ)" if flux == "e_flux_div43" else "e_0(ζ)"
        print(f"\n{'='*96}")
        print(f"📊 {self.case}  (k={self.k}, {'with Q' if self.use_q else 'with load g'})")
        print(f"{'DoFs':>8} {'h':>7}  {label:>10} {'EoC':>7}  {'e_0(ζ)':>9}  "
              f"{'e_0,4(ψ)':>9} {'EoC':>7}  {'e_0(ψ♯)':>9} {'EoC':>7}")
        eoc_flux, eoc_psi, eoc_post = self.eoc(flux), self.eoc("e_psi_l4"), self.eoc("e_post_l2")
        for i, r in enumerate(self.records):
            fval = getattr(r, flux)
            print(f"{r.dofs:>8} {r.h:7.4f}  {fval:10.2e} {cell(eoc_flux[i], '7.3f')}  "
                  f"{r.e_flux_l2:9.2e}  {r.e_psi_l4:9.2e} {cell(eoc_psi[i], '7.3f')}  "
                  f"{r.e_post_l2:9.2e} {cell(eoc_post[i], '7.3f')}")
        print(f"{'='*96}")


def run_convergence(
    case: ManufacturedCase,
    levels: Optional[int] = None,
    k: int = 0,
    use_q: bool = True,
    mesh: Optional[Mesh] = None,
    assembly_degree: int = ASSEMBLY_DEGREE,
    error_degree: int = ERROR_DEGREE,
    load_degree: int = LOAD_DEGREE,
    verbose: bool = False,
) -> ConvergenceReport:
    """
    Uniformly refined study starting from `mesh` (default: the case's own
    initial mesh). Cases without an exact solution are measured against a
    reference solve REFERENCE_EXTRA levels beyond the finest level.
    """
    levels = levels or case.default_levels
    if levels < 2:
        raise ConfigError("a convergence study needs at least 2 levels")
    if not use_q and not isinstance(case.load, DensityL2):
        raise ConfigError(f"{case.name}: the direct path without Q needs an L² density load")
    mesh = mesh or case.initial_mesh()
    report = ConvergenceReport(case.name, k, use_q)
    solutions: List[LevelSolution] = []

    for level in range(1, levels + 1):
        if level > 1:
            mesh = uniform_refine(mesh)
        if verbose:
            print(f"\n📐 {case.name} level {level}: {mesh.n_cells} cells, h = {mesh.h_max:.4f}")
        sol = solve_level(case, mesh, k, use_q, assembly_degree, load_degree, verbose)
        if case.has_exact:
            rec = compute_errors(case, sol.zeta, sol.psi, sol.post, error_degree)
        else:
            solutions.append(sol)
            rec = ErrorRecord(float("nan"), None, float("nan"), float("nan"))
        rec.level, rec.h, rec.dofs = level, mesh.h_max, sol.dofs
        report.records.append(rec)

    if not case.has_exact:
        ref_mesh = mesh
        for _ in range(REFERENCE_EXTRA):
            ref_mesh = uniform_refine(ref_mesh)
        if verbose:
            print(f"\n📐 {case.name} reference: {ref_mesh.n_cells} cells, h = {ref_mesh.h_max:.4f}")
        reference = solve_level(case, ref_mesh, k, use_q, assembly_degree, load_degree, verbose)
        for rec, sol in zip(report.records, solutions):
            errs = compare_to_reference(sol, reference, error_degree)
            rec.e_flux_l2, rec.e_psi_l4, rec.e_post_l2 = errs.e_flux_l2, errs.e_psi_l4, errs.e_post_l2

    if verbose:
        print(f"✅ {case.name}: {levels} levels done")
    return report
