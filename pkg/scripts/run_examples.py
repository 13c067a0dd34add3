#!/usr/bin/env python3
"""Solve every bundled example at one mesh level and print a summary table."""
import argparse
import time

from cutfrac.fem import solve_domain
from cutfrac.post import energy_error, exact_solution, point_balance
from cutfrac.presets import load_preset

CASES = [("example1", None), ("example2", None), ("example3", None), ("example3", "beta01"),
         ("example3", "beta02"), ("example3_nocrack", None), ("example4", None),
         ("example4", "diff"), ("example5", None)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nx", type=int, default=10)
    ap.add_argument("--tau1", type=float, default=1e-2)
    ap.add_argument("--tau2", type=float, default=1e-3)
    args = ap.parse_args(argv)
    print(f"{'case':<22} {'dofs':>6} {'time':>7} {'L2 error':>11} {'max balance':>12}")
    for name, variant in CASES:
        domain = load_preset(name, variant)
        t0 = time.perf_counter()
        u = solve_domain(domain, args.nx, args.tau1, args.tau2)
        elapsed = time.perf_counter() - t0
        exact = exact_solution(domain)
        err = "-"
        if len(exact) == len(list(domain.components())):
            err = f"{energy_error(u, exact, args.tau1, args.tau2).l2:.3e}"
        bal = max((point_balance(u, p.cid) for p in domain.points), default=0.0)
        label = name + (f"/{variant}" if variant else "")
        print(f"{label:<22} {u.dofmap.n:>6} {elapsed:>6.2f}s {err:>11} {bal:>12.2e}")


if __name__ == "__main__":
    main()
