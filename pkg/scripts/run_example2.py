"""
Example 2: rough L² load on (−1,1)² with variable ε and κ, all Dirichlet.
Compares the regularised load Qg with the plain load g.

Steps:
  1. Run 7 levels with Qg
  2. Run 7 levels with g used directly
  3. Print both tables and the final postprocess rates side by side
"""

import os
import sys

# Add project root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.analysis import builtin_case, run_convergence

# ── Config ────────────────────────────────────────────────────────────────────
LEVELS      = 7
RESULTS_DIR = os.path.join(os.path.dirname(__file__), "..", "results")
# ─────────────────────────────────────────────────────────────────────────────


def main():
    print("=" * 60)
    print("Example 2: load g_ex ∈ L², with and without Q")
    print("=" * 60)

    case = builtin_case("ex2")
    reports = {}
    for use_q in (True, False):
        report = run_convergence(case, levels=LEVELS, use_q=use_q, verbose=True)
        report.print()
        tag = "q" if use_q else "no_q"
        out = os.path.join(RESULTS_DIR, f"ex2_{tag}.csv")
        report.to_csv(out)
        print(f"💾 Saved → {out}")
        reports[tag] = report

    print("\n📊 Final EoC of e_0(ψ♯):")
    for tag, report in reports.items():
        print(f"   {tag:<5}: {report.eoc('e_post_l2')[-1]:.3f}")


if __name__ == "__main__":
    main()
