#!/usr/bin/env python3
"""Mesh convergence study on a preset with a known exact solution.

Writes a CSV table and, with --plot, a log-log figure of both error norms.
"""
import argparse
import sys

from cutfrac.cli import RunConfig, convergence_table
from cutfrac.post import export_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("preset", nargs="?", default="example2")
    ap.add_argument("--nx", default="5,10,20,40", help="comma separated mesh levels")
    ap.add_argument("--tau1", type=float, default=1e-2)
    ap.add_argument("--tau2", type=float, default=1e-3)
    ap.add_argument("--out", default=None)
    ap.add_argument("--plot", action="store_true", help="save a log-log plot (needs matplotlib)")
    args = ap.parse_args(argv)
    cfg = RunConfig(source=args.preset, nx=[int(s) for s in args.nx.split(",")],
                    tau1=args.tau1, tau2=args.tau2, out=args.out)
    rows, l2, en = convergence_table(cfg.load_domain(), cfg)
    for r in rows:
        print(f"nx={r['nx']:>3}  h={r['h']:.4g}  L2={r['l2']:.4e}  energy={r['energy']:.4e}"
              f"  rates {r['rate_l2']:.2f} / {r['rate_energy']:.2f}")
    print(f"least-squares slopes: L2 {l2.slope:.3f}, energy {en.slope:.3f}")
    outdir = cfg.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    export_csv(rows, outdir / f"study_{args.preset}.csv")
    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        h = [r["h"] for r in rows]
        plt.loglog(h, [r["l2"] for r in rows], "o-", label=f"L2 (slope {l2.slope:.2f})")
        plt.loglog(h, [r["energy"] for r in rows], "s-", label=f"energy (slope {en.slope:.2f})")
        plt.xlabel("h")
        plt.legend()
        plt.savefig(outdir / f"study_{args.preset}.png", dpi=120)
    return 0


if __name__ == "__main__":
    sys.exit(main())
