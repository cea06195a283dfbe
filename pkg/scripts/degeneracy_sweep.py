"""Sweep z0(sigma) on a fine sigma grid and write sigma,z0,c_star,F_residual[,det ratio].

    python scripts/degeneracy_sweep.py --n 91 --det --out z0_curve.csv
"""
import argparse
import csv

import numpy as np

from gdnls.acceptance import degeneracy_curve


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--smin", type=float, default=1.01)
    ap.add_argument("--smax", type=float, default=1.99)
    ap.add_argument("--n", type=int, default=99)
    ap.add_argument("--omega", type=float, default=1.0)
    ap.add_argument("--det", action="store_true", help="also compare |det d''| at z0 and z0 -/+ 0.1")
    ap.add_argument("--out", default="z0_curve.csv")
    a = ap.parse_args()
    sig = np.linspace(a.smin, a.smax, a.n)
    rows = degeneracy_curve(sig, a.omega, with_det=a.det)
    cols = ["sigma", "z0", "F_residual"] + (["det_ratio"] if a.det else [])
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols + ["c_star"])
        for r in rows:
            w.writerow([repr(float(r[c])) for c in cols] + [repr(float(2 * r["z0"] * np.sqrt(a.omega)))])
    z = np.array([r["z0"] for r in rows])
    print(f"{len(rows)} points, z0 from {z[0]:.6f} to {z[-1]:.6f}, "
          f"monotone decreasing: {bool(np.all(np.diff(z) < 0))}, wrote {a.out}")


if __name__ == "__main__":
    main()
