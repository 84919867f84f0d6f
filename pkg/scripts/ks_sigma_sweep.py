"""Sweep the KS coercivity constant sigma(rho) across the buckling threshold 4 pi^2."""

import argparse
import csv
import math
import sys

import numpy as np

from tviss.pde import Grid1D, KSConfig, ks_sigma


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--rho-max", type=float, default=60.0)
    p.add_argument("--steps", type=int, default=31)
    p.add_argument("--n", type=int, nargs="+", default=[64, 128, 256])
    p.add_argument("--out", default="-", help="CSV path ('-' for stdout)")
    args = p.parse_args(argv)

    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["rho"] + [f"sigma_n{n}" for n in args.n])
    for rho in np.linspace(0.0, args.rho_max, args.steps):
        w.writerow([f"{rho:.6g}"] + [f"{ks_sigma(KSConfig(rho, grid=Grid1D(1.0, n))):.10g}" for n in args.n])
    for n in args.n:
        # locate the sign change by bisection on the discrete operator
        lo, hi = 0.0, 2 * 4 * math.pi ** 2
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if ks_sigma(KSConfig(mid, grid=Grid1D(1.0, n))) > 0 else (lo, mid)
        print(f"# n={n}: sigma changes sign at rho={lo:.6f} (4 pi^2 = {4 * math.pi ** 2:.6f})", file=sys.stderr)
    if fh is not sys.stdout:
        fh.close()


if __name__ == "__main__":
    main()
