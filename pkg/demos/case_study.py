"""Ticlopidine case: screen t_half, then compare TOST and alpha-TOST.

Run with ``python3 demos/case_study.py`` (about 15 s).
"""

import numpy as np

from mvtost import EquivalenceSpec, atost_decide, existence_check, load_ticlopidine, summarize, tost_decide


def main():
    spec = EquivalenceSpec()
    stats, report = summarize(load_ticlopidine(), screen_outcome="t_half")
    print(f"removed subjects {', '.join(report.removed)}; n = {stats.nu + 1}, nu = {stats.nu}")

    ex = existence_check(float(np.max(stats.se)), stats.m, spec)
    print(f"sigma_max = {ex.sigma_max:.4f} vs bound {ex.bound:.4f}")

    tost = tost_decide(stats, spec)
    at = atost_decide(stats, spec, rng=0)
    print(f"{'outcome':<10}{'TOST CI':>20}{'alpha-TOST CI':>22}")
    for j, name in enumerate(stats.names):
        a = f"({tost.ci_lower[j]:.3f}, {tost.ci_upper[j]:.3f})"
        b = f"({at.decision.ci_lower[j]:.3f}, {at.decision.ci_upper[j]:.3f})"
        print(f"{name:<10}{a:>20}{b:>22}")
    print(f"TOST at {spec.alpha}: {'Yes' if tost.equivalence_declared else 'No'}")
    print(f"alpha-TOST at {at.decision.level_used:.4f}: {'Yes' if at.decision.equivalence_declared else 'No'}")


if __name__ == "__main__":
    main()
