"""
Example 3: line Dirac source along a fracture, advecting velocity from left
to right, ε = 1e-3, no closed-form solution.

Steps:
  1. Load the bundled fracture-conforming starting mesh (28 cells)
  2. Run LEVELS uniform refinements for each velocity intensity U0
  3. Measure errors against a reference solution two levels finer
"""

import os
import sys

# Add project root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.analysis import builtin_case, run_convergence

# ── Config ────────────────────────────────────────────────────────────────────
U0_VALUES   = [0.25, 0.0025]
LEVELS      = 4
RESULTS_DIR = os.path.join(os.path.dirname(__file__), "..", "results")
# ─────────────────────────────────────────────────────────────────────────────


def main():
    print("=" * 60)
    print("Example 3: line source δ_γ, reference-solution errors")
    print("=" * 60)

    for u0 in U0_VALUES:
        print(f"\n🌊 U0 = {u0:g}")
        report = run_convergence(builtin_case("ex3-line", u0=u0), levels=LEVELS, verbose=True)
        report.print()
        out = os.path.join(RESULTS_DIR, f"ex3_u0_{u0:g}.csv")
        report.to_csv(out)
        print(f"💾 Saved → {out}")


if __name__ == "__main__":
    main()
