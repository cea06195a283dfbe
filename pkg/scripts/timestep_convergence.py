"""H1 error of the transported soliton against the exact travelling solution for a ladder of dt.

    python scripts/timestep_convergence.py --T 5 --dts 2e-3 1e-3 5e-4 2.5e-4
"""
import argparse

import numpy as np

from gdnls.acceptance import Context
from gdnls.dynamics import SimConfig, evolve, exact_soliton, orbital_distance
from gdnls.grid import h1_norm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=float, default=5.0)
    ap.add_argument("--dts", type=float, nargs="+", default=[2e-3, 1e-3, 5e-4, 2.5e-4])
    a = ap.parse_args()
    ctx = Context()
    prof, g = ctx.profile, ctx.grid
    prev = None
    print("dt        h1_error    orbital     mass_rel    energy_rel  order")
    for dt in a.dts:
        cfg = SimConfig(L=g.L, N=g.N, params=prof.params, dt=dt, T=a.T, sample_dt=0.1, tol_mass=1.0)
        tr = evolve(cfg, prof.Q)
        err = max(h1_norm(u - exact_soliton(prof, t), g) for t, u in zip(tr.field_times, tr.fields))
        dist = max(orbital_distance(u, prof) for u in tr.fields)
        d = tr.drift()
        order = np.log2(prev / err) if prev else float("nan")
        print(f"{dt:<9.3g} {err:<11.3e} {dist:<11.3e} {d['mass_rel']:<11.3e} "
              f"{d['energy_rel']:<11.3e} {order:.2f}")
        prev = err


if __name__ == "__main__":
    main()
