"""Perturbed degenerate-soliton run with the full verdict, for one or several lambda0.

    python scripts/instability_run.py --lambda0 0.05 0.02 -0.05 --T 200 --dt 2e-4
"""
import argparse
import json
import time

from gdnls.acceptance import Context, instability_config
from gdnls.dynamics import run_instability


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambda0", type=float, nargs="+", default=[0.05])
    ap.add_argument("--T", type=float, default=200.0)
    ap.add_argument("--dt", type=float, default=2e-4)
    ap.add_argument("--sigma", type=float, default=1.5)
    ap.add_argument("--transient", type=float, default=1.0)
    a = ap.parse_args()
    ctx = Context(sigma=a.sigma)
    cfg = instability_config(ctx, a.T, a.dt)
    kappa = ctx.coercivity.kappa
    print(f"c*={ctx.degeneracy.c_star:.10f}  d3={ctx.degeneracy.d3:.6g}  kappa={kappa:.5f}")
    for lam0 in a.lambda0:
        t = time.perf_counter()
        res = run_instability(cfg, ctx.frame, ctx.degeneracy.d3, kappa, lambda0=lam0,
                              transient=a.transient)
        v = dict(res.verdict, seconds=round(time.perf_counter() - t, 1))
        print(json.dumps(v, indent=1, default=float))


if __name__ == "__main__":
    main()
