"""
Example 1: smooth and rough manufactured solutions on the unit square,
Neumann on x = 1 and Dirichlet elsewhere, lowest order with Qg.

Steps:
  1. Solve both ex1 cases on 7 uniform levels starting from nx = 2
  2. Print the error tables (flux, potential, postprocessed potential)
  3. Save one CSV per case under results/
"""

import os
import sys

# Add project root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.analysis import builtin_case, run_convergence

# ── Config ────────────────────────────────────────────────────────────────────
CASES       = ["ex1-smooth", "ex1-rough"]
LEVELS      = 7
K           = 0
RESULTS_DIR = os.path.join(os.path.dirname(__file__), "..", "results")
# ─────────────────────────────────────────────────────────────────────────────


def main():
    print("=" * 60)
    print("Example 1: mixed boundary conditions, smooth and H⁻¹ loads")
    print("=" * 60)

    for name in CASES:
        report = run_convergence(builtin_case(name), levels=LEVELS, k=K, verbose=True)
        report.print()
        out = os.path.join(RESULTS_DIR, f"{name}.csv")
        report.to_csv(out)
        print(f"💾 Saved {len(report.records)} levels → {out}")


if __name__ == "__main__":
    main()
