"""Locate the degenerate speed c = 2 z0(sigma) sqrt(omega) and its null direction."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate as spi

from .functionals import d_surface, d_third_directional
from .grid import GridSpec
from .soliton import SolitonParams

log = logging.getLogger(__name__)

Z_GUARD = 0.999
TAIL_EPS = 1e-16


class DegeneracyError(RuntimeError):
    """Root bracketing failed or the null direction cannot be certified."""


def _ymax(sigma: float, margin: float = 5.0) -> float:
    # (cosh y - z)^(-1/sigma) <= (e^y / 2 - 1)^(-1/sigma); solve for the tail bound
    return sigma * np.log(2.0 / TAIL_EPS) + margin


def _integrals(z: float, sigma: float, ymax: float | None = None) -> tuple[float, float]:
    if ymax is None:
        ymax = _ymax(sigma)
    p = 1.0 / sigma

    def first(y):
        return (np.cosh(y) - z) ** (-p)

    def second(y):
        ch = np.cosh(y)
        return (ch - z) ** (-p - 1.0) * (z * ch - 1.0)

    opts = dict(epsabs=1e-13, epsrel=1e-13, limit=400)
    # the y ~ 0 region steepens as z -> 1; split there so the adaptive rule sees it
    brk = min(1.0, ymax)
    with warnings.catch_warnings():
        # quad flags roundoff once the result is at machine precision; F_residual is checked separately
        warnings.simplefilter("ignore", spi.IntegrationWarning)
        return _split_quad(first, brk, ymax, opts), _split_quad(second, brk, ymax, opts)


def _split_quad(fn, brk, ymax, opts) -> float:
    return spi.quad(fn, 0.0, brk, **opts)[0] + spi.quad(fn, brk, ymax, **opts)[0]


def F_sigma(z: float, sigma: float, ymax: float | None = None) -> float:
    """(sigma-1)^2 I1(z)^2 - I2(z)^2 with the two improper integrals truncated at ymax."""
    if not -1.0 < z < 1.0:
        raise ValueError(f"z must lie in (-1, 1), got {z}")
    if not 1.0 <= sigma < 2.0:
        raise ValueError(f"sigma must lie in [1, 2), got {sigma}")
    i1, i2 = _integrals(z, sigma, ymax)
    return (sigma - 1.0) ** 2 * i1 * i1 - i2 * i2


def F_scale(z: float, sigma: float) -> float:
    """Magnitude of the two competing terms of F, for relative root tolerances."""
    i1, i2 = _integrals(z, sigma)
    return max((sigma - 1.0) ** 2 * i1 * i1, i2 * i2)


def find_z0(sigma: float, step: float = 0.01, tol: float = 1e-13) -> float:
    """Unique zero of F(., sigma) in (-1, 1), bracketed by a scan then bisected."""
    if not 1.0 < sigma < 2.0:
        raise ValueError(f"sigma must lie in (1, 2), got {sigma}")
    n = int(round(2 * Z_GUARD / step))
    zs = np.linspace(-Z_GUARD, Z_GUARD, n + 1)
    fs = np.array([F_sigma(z, sigma) for z in zs])
    sign_changes = np.nonzero(np.sign(fs[:-1]) * np.sign(fs[1:]) < 0)[0]
    exact = np.nonzero(fs == 0.0)[0]
    if len(sign_changes) + len(exact) != 1:
        raise DegeneracyError(
            f"expected exactly one sign change of F(z; {sigma}) on [-{Z_GUARD}, {Z_GUARD}], "
            f"found {len(sign_changes) + len(exact)}")
    if len(exact):
        return float(zs[exact[0]])
    j = sign_changes[0]
    a, b = zs[j], zs[j + 1]
    fa = fs[j]
    # plain bisection; F is cheap enough and bisection never leaves the bracket
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = F_sigma(m, sigma)
        if fm == 0.0:
            return float(m)
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    return float(0.5 * (a + b))


def degenerate_params(sigma: float, omega: float, z0: float | None = None) -> SolitonParams:
    if z0 is None:
        z0 = find_z0(sigma)
    return SolitonParams(sigma, omega, 2.0 * z0 * np.sqrt(omega))


def null_vector(hessian, ratio: float = 0.1) -> np.ndarray:
    """Unit eigenvector for the eigenvalue of smallest magnitude.

    Sign fixed so the first nonzero component is positive.  Raises when the
    two eigenvalues are comparable (``|small| > ratio * |large|``).
    """
    H = np.asarray(hessian, dtype=float)
    vals, vecs = np.linalg.eigh(0.5 * (H + H.T))
    order = np.argsort(np.abs(vals))
    small, large = vals[order[0]], vals[order[1]]
    if abs(small) > ratio * abs(large):
        raise DegeneracyError(
            f"Hessian eigenvalues {vals} are not near-degenerate; off the degenerate curve?")
    v = vecs[:, order[0]]
    nz = np.nonzero(np.abs(v) > 1e-14)[0]
    if v[nz[0]] < 0:
        v = -v
    return v / np.linalg.norm(v)


def orient_xi(xi, d3_probe: float, noise_floor: float = 1e-8) -> tuple[np.ndarray, float]:
    """Flip xi if needed so the third directional derivative is negative."""
    if not abs(d3_probe) > noise_floor:
        raise DegeneracyError(
            f"|d'''| = {abs(d3_probe):.3e} is below the noise floor {noise_floor:g}")
    xi = np.asarray(xi, dtype=float)
    if d3_probe > 0:
        return -xi, -d3_probe
    return xi.copy(), d3_probe


@dataclass(frozen=True)
class DegeneracyData:
    sigma: float
    omega: float
    z0: float
    c_star: float
    xi: np.ndarray
    d3: float
    d3_half_step: float
    hessian: np.ndarray
    hessian_residual: float
    F_residual: float

    @property
    def params(self) -> SolitonParams:
        return SolitonParams(self.sigma, self.omega, self.c_star)


def analyze(sigma: float, omega: float, grid: GridSpec, *, hess_step: float = 1e-4,
            d3_step: float | None = None) -> DegeneracyData:
    """Full degenerate-point analysis: z0, c*, Hessian, null direction, d'''."""
    z0 = find_z0(sigma)
    params = degenerate_params(sigma, omega, z0)
    surf = d_surface(params, grid, hess_step)
    xi = null_vector(surf.hessian)
    if d3_step is None:
        d3_step = 1e-2 * max(1.0, abs(omega))
    d3 = d_third_directional(params, grid, xi, d3_step)
    d3_half = d_third_directional(params, grid, xi, d3_step / 2)
    xi_o, d3_o = orient_xi(xi, d3)
    if d3_o != d3:
        d3_half = -d3_half
    xi, d3 = xi_o, d3_o
    H = surf.hessian
    hres = float(np.linalg.norm(H @ xi) / np.linalg.norm(H))
    fres = abs(F_sigma(z0, sigma)) / F_scale(z0, sigma)
    log.info("sigma=%g z0=%.12f c*=%.12f xi=%s d3=%.6g", sigma, z0, params.c, xi, d3)
    return DegeneracyData(sigma, omega, z0, params.c, xi, d3, d3_half, H, hres, fres)
