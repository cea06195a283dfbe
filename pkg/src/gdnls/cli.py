"""Command-line front end: ``gdnls <command> [--config PATH] [--out DIR] [--seed N] [--threads N]``.

Exit status: 0 when every gate of the command passes, 1 on a numerical gate
failure (diagnostics are printed as JSON), 2 on an invalid configuration.
Flags override ``GDNLS_CONFIG``, ``GDNLS_OUT``, ``GDNLS_SEED`` and
``GDNLS_THREADS``, which override the built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import CHECKS, Context, degeneracy_curve, run_check
from .degeneracy import DegeneracyError, analyze, null_vector
from .dynamics import (SimConfig, build_unstable_data, evolve, orbital_distance, run_instability,
                       virial_coefficients, virial_series, ModulationTracker)
from .functionals import d_surface, d_third_directional, d_third_identity
from .grid import GridSpec, read_field_csv, write_field_csv
from .modulation import coercivity_estimate, decompose, make_frame
from .soliton import SolitonParams, build_profile, soliton_residual, tangent_vector

log = logging.getLogger("gdnls")

COMMANDS = ("profile", "degeneracy", "hessian", "decompose", "simulate", "instability", "verify")
ENV_PREFIX = "GDNLS_"


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------- config schema

def _num(positive=False, nonneg=False, integer=False, allow_none=False):
    def check(key, v):
        if v is None and allow_none:
            return v
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{key} must be a number, got {v!r}")
        if integer and int(v) != v:
            raise ConfigError(f"{key} must be an integer, got {v!r}")
        if not math.isfinite(v):
            raise ConfigError(f"{key} must be finite")
        if positive and not v > 0:
            raise ConfigError(f"{key} must be positive, got {v!r}")
        if nonneg and v < 0:
            raise ConfigError(f"{key} must be nonnegative, got {v!r}")
        return int(v) if integer else float(v)
    return check


def _num_list(key, v):
    if not isinstance(v, list):
        raise ConfigError(f"{key} must be a list of numbers")
    return [_num()(f"{key}[{i}]", x) for i, x in enumerate(v)]


def _str(key, v):
    if v is not None and not isinstance(v, str):
        raise ConfigError(f"{key} must be a string")
    return v


def _int_list(key, v):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{key} must be a nonempty list of integers")
    return [_num(integer=True)(f"{key}[{i}]", x) for i, x in enumerate(v)]


POS, NONNEG, INT = _num(positive=True), _num(nonneg=True), _num(positive=True, integer=True)
OPT = _num(allow_none=True)

COMMON = {"L": (POS, 80.0), "N": (INT, 2048), "sigma": (POS, 1.5), "omega": (POS, 1.0),
          "c": (OPT, None)}
TOL = {"tol_mass": (POS, 1e-8), "tol_energy": (POS, 1e-8), "tol_momentum": (POS, 1e-8)}
SIM = {"dt": (POS, 1e-3), "T": (POS, 5.0), "sample_dt": (POS, 0.05), "dealias": (POS, 2.0 / 3.0),
       "store_every": (INT, 1), "lambda0": (NONNEG, 0.0), "snapshot_times": (_num_list, [0.0])}

SCHEMAS = {
    "profile": {**COMMON, "center": (_num(), 0.0), "phase": (_num(), 0.0),
                "residual_tol": (POS, 1e-8)},
    "degeneracy": {"omega": (POS, 1.0), "L": (POS, 80.0), "N": (INT, 2048),
                   "sigma_min": (POS, 1.05), "sigma_max": (POS, 1.95), "sigma_step": (POS, 0.05),
                   "offset": (POS, 0.1), "with_det": (None, False), "F_tol": (POS, 1e-10)},
    "hessian": {**COMMON, "h": (POS, 1e-4), "d3_step": (POS, 1e-2), "rel_tol": (POS, 0.02)},
    "decompose": {**COMMON, "field": (_str, None), "lambda": (_num(), 0.05), "y": (_num(), 0.0),
                  "gamma": (_num(), 0.0), "noise": (NONNEG, 0.0), "tol": (POS, 1e-11)},
    "simulate": {**COMMON, **TOL, **SIM},
    "instability": {**COMMON, **TOL, **SIM, "dt": (POS, 2e-4), "T": (POS, 200.0),
                    "sample_dt": (POS, 0.1), "store_every": (INT, 100), "lambda0": (NONNEG, 0.05),
                    "branches": (_int_list, [1, -1]), "alpha_factor": (POS, 10.0),
                    "distance_floor": (POS, 1e-4), "transient": (NONNEG, 1.0),
                    "ratio_window": (_num_list, [0.5, 1.5]), "eet_margin": (NONNEG, 0.5),
                    "kappa_N": (INT, 512), "kappa_L": (POS, 60.0), "snapshot_times": (_num_list, [])},
    "verify": {"checks": (_int_list, list(range(1, 11)))},
}


def _bool(key, v):
    if not isinstance(v, bool):
        raise ConfigError(f"{key} must be true or false")
    return v


def validate(command: str, raw: dict, seed: int) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    schema = SCHEMAS[command]
    unknown = sorted(set(raw) - set(schema) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown keys for {command}: {unknown}")
    cfg = {}
    for key, (check, default) in schema.items():
        v = raw.get(key, default)
        cfg[key] = (check or _bool)(key, v) if v is not None else v
    try:
        if "N" in cfg:
            GridSpec(cfg["L"], cfg["N"])
        if command == "instability":
            GridSpec(cfg["kappa_L"], cfg["kappa_N"])
        if cfg.get("c") is not None:
            SolitonParams(cfg["sigma"], cfg["omega"], cfg["c"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if command == "verify" and not set(cfg["checks"]) <= set(CHECKS):
        raise ConfigError(f"checks must be drawn from {sorted(CHECKS)}")
    if command == "degeneracy":
        if not 1 < cfg["sigma_min"] <= cfg["sigma_max"] < 2:
            raise ConfigError("need 1 < sigma_min <= sigma_max < 2")
    elif "sigma" in cfg and not 1 < cfg["sigma"] < 2:
        raise ConfigError("sigma must lie in (1, 2)")
    if command in ("simulate", "instability"):
        if cfg["sample_dt"] < cfg["dt"] or cfg["T"] < cfg["sample_dt"]:
            raise ConfigError("need dt <= sample_dt <= T")
        if not 0 < cfg["dealias"] <= 1:
            raise ConfigError("dealias must lie in (0, 1]")
    if command == "instability":
        if any(b not in (1, -1) for b in cfg["branches"]):
            raise ConfigError("branches entries must be +1 or -1")
        lo_hi = cfg["ratio_window"]
        if len(lo_hi) != 2 or not lo_hi[0] < lo_hi[1]:
            raise ConfigError("ratio_window must be [low, high] with low < high")
    cfg["seed"] = seed
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ------------------------------------------------------------------- outputs

def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


class Outputs:
    def __init__(self, out: Path, cfg: dict, command: str):
        self.out = out
        self.meta = {"command": command, "config": cfg, "config_hash": config_hash(cfg),
                     "version": __version__, "seed": cfg["seed"]}
        out.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, payload: dict) -> Path:
        path = self.out / name
        body = dict(_clean(payload))
        body.update(_clean(self.meta))
        path.write_text(json.dumps(body, sort_keys=True, indent=1) + "\n")
        return path

    def csv(self, name: str, header, rows) -> Path:
        path = self.out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
        return path


# ------------------------------------------------------------------ commands

def _params(cfg) -> tuple[SolitonParams, object]:
    """Soliton parameters; c defaults to the degenerate speed (analysis returned too)."""
    if cfg["c"] is None:
        dd = analyze(cfg["sigma"], cfg["omega"], GridSpec(cfg["L"], cfg["N"]))
        return dd.params, dd
    return SolitonParams(cfg["sigma"], cfg["omega"], cfg["c"]), None


def cmd_profile(cfg, out: Outputs, threads: int) -> tuple[bool, dict]:
    grid = GridSpec(cfg["L"], cfg["N"])
    params, _ = _params(cfg)
    prof = build_profile(params, grid, phase=cfg["phase"], center=cfg["center"])
    res = soliton_residual(prof)
    payload = {"params": {"sigma": params.sigma, "omega": params.omega, "c": params.c},
               "residual": res, "boundary_magnitude": prof.boundary_magnitude,
               "c0_est": prof.c0_est}
    out.json("profile.json", payload)
    write_field_csv(out.out / "profile_field.csv", prof.Q, grid)
    return res < cfg["residual_tol"], payload


def cmd_degeneracy(cfg, out: Outputs, threads: int) -> tuple[bool, dict]:
    n = int(round((cfg["sigma_max"] - cfg["sigma_min"]) / cfg["sigma_step"]))
    sigmas = np.round(cfg["sigma_min"] + cfg["sigma_step"] * np.arange(n + 1), 12)
    rows = degeneracy_curve(sigmas, cfg["omega"], GridSpec(cfg["L"], cfg["N"]), cfg["offset"],
                            with_det=cfg["with_det"])
    out.csv("degeneracy.csv", ["sigma", "z0", "F_residual"],
            [(r["sigma"], r["z0"], r["F_residual"]) for r in rows])
    z = np.array([r["z0"] for r in rows])
    decreasing = bool(np.all(np.diff(z) < 0))
    fmax = max(r["F_residual"] for r in rows)
    ok = decreasing and fmax < cfg["F_tol"]
    payload = {"points": len(rows), "z0_decreasing": decreasing, "max_F_residual": fmax}
    if cfg["with_det"]:
        ratio = min(r["det_ratio"] for r in rows)
        payload["min_det_ratio"] = ratio
        payload["rows"] = rows
        ok = ok and ratio >= 10
    out.json("degeneracy.json", payload)
    return ok, payload


def cmd_hessian(cfg, out: Outputs, threads: int) -> tuple[bool, dict]:
    grid = GridSpec(cfg["L"], cfg["N"])
    params, _ = _params(cfg)
    surf = d_surface(params, grid, cfg["h"])
    eigs = np.linalg.eigvalsh(surf.hessian)
    payload = {"sigma": params.sigma, "omega": params.omega, "c": params.c, "d": surf.d,
               "grad": surf.grad, "hessian": surf.hessian, "det": surf.det, "eigs": eigs}
    ok = True
    try:
        xi = null_vector(surf.hessian)
    except DegeneracyError as exc:
        payload.update(xi=None, d3_fd=None, d3_identity=None, rel_gap=None, note=str(exc))
    else:
        d3 = d_third_directional(params, grid, xi, cfg["d3_step"])
        prof = build_profile(params, grid)
        ident = d_third_identity(prof, tangent_vector(params, grid, xi), xi)
        gap = abs(ident - d3) / abs(d3)
        payload.update(xi=xi, d3_fd=d3, d3_identity=ident, rel_gap=gap)
        ok = gap < cfg["rel_tol"]
    out.json("hessian.json", payload)
    return ok, payload


def _frame_for(params: SolitonParams, grid: GridSpec, dd=None):
    if dd is None:
        surf = d_surface(params, grid)
        xi = null_vector(surf.hessian)
    else:
        xi = dd.xi
    return make_frame(build_profile(params, grid), xi)


def cmd_decompose(cfg, out: Outputs, threads: int) -> tuple[bool, dict]:
    params, dd = _params(cfg)
    if cfg["field"]:
        grid, u = read_field_csv(cfg["field"])
    else:
        grid = GridSpec(cfg["L"], cfg["N"])
    frame = _frame_for(params, grid, dd)
    if not cfg["field"]:
        rng = np.random.default_rng(cfg["seed"])
        eps = None
        if cfg["noise"] > 0:
            eps = cfg["noise"] * (rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)) \
                * np.exp(-(grid.x / 6.0) ** 2)
        u = frame.compose(cfg["lambda"], eps, cfg["y"], cfg["gamma"])
    st = decompose(u, frame, tol=cfg["tol"])
    payload = st.as_dict()
    out.json("decompose.json", payload)
    return bool(st.converged), payload


TRAJ_HEADER = ["t", "M", "P", "E", "y", "gamma", "lambda", "eps_h1", "I", "dIdt", "dist"]


def _trajectory_rows(times, M, P, E, dist_t, dist, series=None, vir=None):
    key = lambda t: round(float(t), 9)  # noqa: E731
    dmap = dict(zip(map(key, dist_t), dist))
    smap, vmap = {}, {}
    if series is not None:
        for j, t in enumerate(series.times):
            smap[key(t)] = (series.y[j], series.gamma[j], series.lam[j], series.eps_h1[j])
    if vir is not None:
        for j, t in enumerate(vir.times):
            vmap[key(t)] = (vir.I[j], vir.Idot[j])
    nan = float("nan")
    for j, t in enumerate(times):
        k = key(t)
        yield (float(t), M[j], P[j], E[j], *smap.get(k, (nan,) * 4), *vmap.get(k, (nan,) * 2),
               dmap.get(k, nan))


def _sim_config(cfg, params, threads) -> SimConfig:
    return SimConfig(L=cfg["L"], N=cfg["N"], params=params, dt=cfg["dt"], T=cfg["T"],
                     dealias=cfg["dealias"], tol_mass=cfg["tol_mass"], tol_energy=cfg["tol_energy"],
                     tol_momentum=cfg["tol_momentum"], lambda0=cfg["lambda0"],
                     sample_dt=cfg["sample_dt"], store_every=cfg["store_every"], workers=threads)


def _write_snapshots(out: Outputs, traj, times, prefix="snapshot"):
    for t in times:
        u = traj.field_at(t)
        tt = traj.field_times[int(np.argmin(np.abs(traj.field_times - t)))]
        write_field_csv(out.out / f"{prefix}_t{tt:.6g}.csv", u, traj.grid)


def cmd_simulate(cfg, out: Outputs, threads: int) -> tuple[bool, dict]:
    params, dd = _params(cfg)
    scfg = _sim_config(cfg, params, threads)
    grid = scfg.grid
    prof = build_profile(params, grid)
    try:
        frame = _frame_for(params, grid, dd)
    except DegeneracyError:
        frame = None  # off the degenerate curve: no modulation columns
    if cfg["lambda0"] > 0:
        if frame is None:
            raise ConfigError("lambda0 > 0 needs parameters on the degenerate curve")
        u0 = build_unstable_data(frame, cfg["lambda0"])
    else:
        u0 = prof.Q
    tracker = ModulationTracker(frame) if frame is not None else None
    dist_t, dist = [], []

    def on_sample(t, u):
        dist_t.append(t)
        dist.append(orbital_distance(u, prof))
        if tracker is not None:
            tracker.push(t, u)

    traj = evolve(scfg, u0, callback=on_sample)
    series = tracker.series() if tracker is not None else None
    vir = None
    if series is not None and len(series) >= 3:
        vir = virial_series(series, virial_coefficients(prof, frame.phi),
                            dd.d3 if dd is not None else float("nan"))
    out.csv("trajectory.csv", TRAJ_HEADER,
            _trajectory_rows(traj.times, traj.M, traj.P, traj.E, dist_t, dist, series, vir))
    _write_snapshots(out, traj, cfg["snapshot_times"])
    drift = traj.drift()
    ok = traj.drift_ok(scfg) and traj.halted is None
    payload = {"drift": drift, "drift_ok": traj.drift_ok(scfg), "halted": traj.halted,
               "max_distance": max(dist), "t_end": float(traj.times[-1]),
               "dt_final": traj.dt_final, "notes": traj.notes}
    out.json("simulate.json", payload)
    return ok, payload


VERDICT_KEYS = ("t0", "alpha0_crossed", "Idot_ratio_range", "eet_bound_ok", "lt_bound_ok")


def cmd_instability(cfg, out: Outputs, threads: int) -> tuple[bool, dict]:
    params, dd = _params(cfg)
    if dd is None:
        dd = analyze(params.sigma, params.omega, GridSpec(cfg["L"], cfg["N"]))
        if abs(dd.c_star - params.c) > 1e-8:
            raise ConfigError(f"c must be the degenerate speed {dd.c_star!r} (or omitted)")
    scfg = _sim_config(cfg, params, threads)
    frame = make_frame(build_profile(params, scfg.grid), dd.xi)
    small = GridSpec(cfg["kappa_L"], cfg["kappa_N"])
    kappa = coercivity_estimate(make_frame(build_profile(params, small), dd.xi)).kappa
    lam0 = cfg["lambda0"]
    branches = [1] if lam0 == 0 else cfg["branches"]
    results = {}
    for b in branches:
        res = run_instability(scfg, frame, dd.d3, kappa, lambda0=b * lam0,
                              alpha_factor=cfg["alpha_factor"],
                              distance_floor=cfg["distance_floor"], transient=cfg["transient"],
                              ratio_window=tuple(cfg["ratio_window"]))
        tag = "plus" if b > 0 else "minus"
        tr = res.trajectory
        out.csv(f"trajectory_{tag}.csv", TRAJ_HEADER,
                _trajectory_rows(tr.times, tr.M, tr.P, tr.E, res.distance_times, res.distance,
                                 res.series, res.virial))
        _write_snapshots(out, tr, cfg["snapshot_times"], prefix=f"snapshot_{tag}")
        results[tag] = res.verdict
    main = results["plus"] if "plus" in results else next(iter(results.values()))
    payload = {k: main.get(k) for k in VERDICT_KEYS}
    payload.update(d3=dd.d3, kappa=kappa, c_star=dd.c_star, branches=results)
    if lam0 == 0:
        ok = not main["alpha0_crossed"] and main["max_distance_ratio"] <= 2.0
    else:
        ok = bool(main["alpha0_crossed"] and main["lt_bound_ok"] and main["eet_bound_ok"]
                  and main.get("Idot_negative") and main.get("Idot_ratio_ok"))
    ok = ok and main["drift_ok"]
    out.json("verdict.json", payload)
    return ok, payload


def cmd_verify(cfg, out: Outputs, threads: int) -> tuple[bool, dict]:
    ctx = Context(seed=cfg["seed"], workers=threads)
    results = []
    for n in cfg["checks"]:
        r = run_check(n, ctx)
        print(r.line(), file=sys.stderr)
        results.append(r.as_dict())
    for r in results:
        r.pop("seconds")  # keep the file byte-identical across runs
        r["details"] = {k: v for k, v in r["details"].items() if "seconds" not in k}
    ok = all(r["passed"] for r in results)
    payload = {"passed": ok, "checks": results}
    out.json("verify.json", payload)
    return ok, payload


HANDLERS = {"profile": cmd_profile, "degeneracy": cmd_degeneracy, "hessian": cmd_hessian,
            "decompose": cmd_decompose, "simulate": cmd_simulate, "instability": cmd_instability,
            "verify": cmd_verify}


# ---------------------------------------------------------------------- main

def _resolve(args) -> tuple[str | None, Path, int, int]:
    env = os.environ
    config = args.config or env.get(ENV_PREFIX + "CONFIG")
    out = Path(args.out or env.get(ENV_PREFIX + "OUT") or f"out/{args.command}")
    try:
        seed = args.seed if args.seed is not None else int(env.get(ENV_PREFIX + "SEED", 0))
        threads = args.threads if args.threads is not None else int(env.get(ENV_PREFIX + "THREADS", 1))
    except ValueError as exc:
        raise ConfigError(f"bad environment override: {exc}") from exc
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    return config, out, seed, threads


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gdnls", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gdnls {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config file (env GDNLS_CONFIG)")
    p.add_argument("--out", help="output directory (env GDNLS_OUT, default out/<command>)")
    p.add_argument("--seed", type=int, help="random seed (env GDNLS_SEED, default 0)")
    p.add_argument("--threads", type=int, help="FFT workers (env GDNLS_THREADS, default 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config, out_dir, seed, threads = _resolve(args)
        raw = {}
        if config:
            try:
                raw = json.loads(Path(config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {config}: {exc}") from exc
        if isinstance(raw, dict) and "seed" in raw and args.seed is None \
                and ENV_PREFIX + "SEED" not in os.environ:
            seed = _num(nonneg=True, integer=True)("seed", raw["seed"])
        cfg = validate(args.command, raw, seed)
        out = Outputs(out_dir, cfg, args.command)
        t = time.perf_counter()
        ok, payload = HANDLERS[args.command](cfg, out, threads)
    except ConfigError as exc:
        print(json.dumps({"error": "invalid config", "detail": str(exc)}), file=sys.stderr)
        return 2
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - t)
    if not ok:
        print(json.dumps({"error": "gate failure", "command": args.command,
                          "diagnostics": _clean(payload)}, sort_keys=True, indent=1))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
