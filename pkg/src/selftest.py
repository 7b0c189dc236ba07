"""
selftest.py — Invariant suite behind `pbmix selftest`.

Each check is small enough to run in seconds and prints PASS/FAIL with the
observed value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np


@dataclass
class CheckResult:
    name:   str
    passed: bool
    detail: str = ""

    def print(self) -> None:
        icon = "✅ PASS" if self.passed else "❌ FAIL"
        note = f"  ({self.detail})" if self.detail else ""
        print(f"{icon}  {self.name}{note}")


# ── Checks (each returns (passed, detail)) ───────────────────────────────────

def check_mesh_topology(rng) -> Tuple[bool, str]:
    from src.mesh import generate_structured, uniform_refine

    mesh = generate_structured(2)
    fine = uniform_refine(uniform_refine(mesh))
    euler = [m.euler_characteristic() for m in (mesh, fine)]
    area = abs(fine.areas.sum() - 1.0)
    return euler == [1, 1] and area < 1e-12, f"V−E+C={euler}, area error {area:.1e}"


def check_quadrature(rng) -> Tuple[bool, str]:
    from src.fem_core import triangle_rule

    worst = 0.0
    for degree in (2, 6, 12):
        rule = triangle_rule(degree)
        x, y = rule.points[:, 1], rule.points[:, 2]
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
                got = float(rule.weights @ (x ** a * y ** b))
                worst = max(worst, abs(got - exact) / exact)
    return worst < 1e-13, f"max relative error {worst:.1e}"


def check_rt0_constant(rng) -> Tuple[bool, str]:
    from src.fem_core import interpolate_rt0, map_points, triangle_rule
    from src.mesh import generate_structured

    mesh = generate_structured(3, diagonal="left")
    c = rng.normal(size=2)
    field = interpolate_rt0(mesh, lambda X: np.broadcast_to(c, X.shape))
    X, _ = map_points(mesh, triangle_rule(4))
    err = float(np.abs(field.evaluate(X) - c).max())
    return err < 1e-12, f"max pointwise error {err:.1e}"


def check_dual_bubbles(rng) -> Tuple[bool, str]:
    from src.fem_core import DualBubbles, eval_pk, map_points, triangle_rule
    from src.mesh import generate_structured

    mesh = generate_structured(2)
    worst = 0.0
    for k in (0, 1, 2):
        bub = DualBubbles(mesh, k)
        X, W = map_points(mesh, triangle_rule(2 * k + 3))
        chi, _ = bub.evaluate(X)
        P, _ = eval_pk(mesh, k, X)
        gram = np.einsum("cq,cqj,cqi->cji", W, chi, P)
        worst = max(worst, float(np.abs(gram - np.eye(bub.dim)).max()))
    return worst < 1e-12, f"duality residual {worst:.1e}"


def check_weights(rng) -> Tuple[bool, str]:
    from src.mesh import generate_structured, neumann_where, uniform_refine
    from src.regularizer import compute_weights

    mesh = uniform_refine(generate_structured(2, marker=neumann_where(lambda m: m[0] > 1 - 1e-12)))
    worst = float(compute_weights(mesh).constraint_residuals().max())
    return worst < 1e-12, f"constraint residual {worst:.1e}"


def check_q_projection(rng) -> Tuple[bool, str]:
    from src.fem_core import ScalarField, pk_dim
    from src.loads import DensityL2
    from src.mesh import generate_structured, neumann_where, uniform_refine
    from src.regularizer import apply_Q, compute_weights

    mesh = uniform_refine(generate_structured(2, marker=neumann_where(lambda m: m[1] < 1e-12)))
    weights = compute_weights(mesh)
    worst = 0.0
    for k in (0, 1):
        phi = ScalarField(mesh, k, rng.normal(size=(mesh.n_cells, pk_dim(k))))
        q = apply_Q(DensityL2(phi), mesh, k, weights)
        worst = max(worst, float(np.abs(q.coeffs - phi.coeffs).max()))
    return worst < 1e-11, f"coefficient error {worst:.1e}"


def check_q_adjoint(rng) -> Tuple[bool, str]:
    from src.fem_core import ScalarField, integrate
    from src.loads import DensityL2
    from src.mesh import generate_structured, uniform_refine
    from src.regularizer import apply_Q, apply_Q_adjoint, compute_weights

    mesh = uniform_refine(generate_structured(2))
    weights = compute_weights(mesh)
    f = ScalarField(mesh, 0, rng.normal(size=(mesh.n_cells, 1)))

    def v(X):
        return np.sin(np.pi * X[..., 0]) * np.sin(np.pi * X[..., 1]) * (1.0 + X[..., 0])

    image = apply_Q_adjoint(v, mesh, 0, weights)
    qf = apply_Q(DensityL2(f), mesh, 0, weights)
    lhs = integrate(mesh, lambda X, c: image.evaluate(X, c) * f.evaluate(X, c))
    rhs = integrate(mesh, lambda X, c: v(X) * qf.evaluate(X, c))
    gap = abs(lhs - rhs)
    return gap < 1e-10, f"|⟨Q′v,f⟩ − ⟨v,Qf⟩| = {gap:.1e}"


def check_constant_pipeline(rng) -> Tuple[bool, str]:
    from src.analysis import builtin_case, compute_errors, solve_level

    case = builtin_case("constant")
    mesh = case.initial_mesh()
    sol = solve_level(case, mesh)
    errs = compute_errors(case, sol.zeta, sol.psi, sol.post)
    worst = max(errs.e_flux_l2, errs.e_flux_div43, errs.e_psi_l4, errs.e_post_l2)
    return worst < 1e-10, f"largest error {worst:.1e}"


def check_dense_oracle(rng) -> Tuple[bool, str]:
    from src.analysis import builtin_case, solve_level
    from src.mesh import generate_structured

    case = builtin_case("ex2")
    mesh = generate_structured(1, case.domain)
    sol = solve_level(case, mesh, use_q=False)
    dense = np.linalg.solve(sol.system.matrix.toarray(), sol.system.rhs)
    got = np.concatenate([sol.zeta.coeffs, sol.psi.vector])
    err = float(np.abs(got - dense).max() / max(1.0, np.abs(dense).max()))
    return err < 1e-10, f"sparse vs dense {err:.1e}"


def check_postprocess_mean(rng) -> Tuple[bool, str]:
    from src.analysis import builtin_case, solve_level
    from src.mesh import uniform_refine

    case = builtin_case("ex1-smooth")
    sol = solve_level(case, uniform_refine(case.initial_mesh()))
    return sol.post.mean_residual < 1e-12, f"mean residual {sol.post.mean_residual:.1e}"


CHECKS: List[Tuple[str, Callable]] = [
    ("mesh: Euler relation and area", check_mesh_topology),
    ("fem_core: quadrature exactness", check_quadrature),
    ("fem_core: RT0 reproduces constants", check_rt0_constant),
    ("fem_core: dual bubble duality", check_dual_bubbles),
    ("regularizer: Clément weight constraints", check_weights),
    ("regularizer: Q is a projection on Q_h", check_q_projection),
    ("regularizer: adjoint duality", check_q_adjoint),
    ("system: constant solution reproduced", check_constant_pipeline),
    ("system: sparse LU matches dense oracle", check_dense_oracle),
    ("postprocess: cell-mean constraint", check_postprocess_mean),
]


def run_selftest(seed: int = 0, verbose: bool = True) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    results: List[CheckResult] = []
    for name, check in CHECKS:
        try:
            passed, detail = check(rng)
        except Exception as e:                   # a crashing check is a failed check
            passed, detail = False, f"{type(e).__name__}: {e}"
        result = CheckResult(name, bool(passed), detail)
        results.append(result)
        if verbose:
            result.print()
    if verbose:
        n_pass = sum(r.passed for r in results)
        print(f"\n{'='*60}\n{n_pass}/{len(results)} invariants hold\n{'='*60}")
    return results
