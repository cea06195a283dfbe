"""Conserved quantities, the action and its derivatives, and the d(omega, c) surface.

Second and third derivatives of the action are given as explicit pointwise
integrands; everything else (Hessian of ``d``, third directional derivative)
is obtained by differencing quantities that are known exactly along the
soliton family.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, integrate, pairing, spectral_derivative
from .soliton import SolitonParams, SolitonProfile, build_profile


def mass(u, grid: GridSpec) -> float:
    return 0.5 * float(pairing(u, u, grid))


def momentum(u, grid: GridSpec) -> float:
    ux = spectral_derivative(u, grid)
    return 0.5 * float(np.real(integrate(1j * np.conj(u) * ux, grid)))


def nonlinear_part(u, grid: GridSpec, sigma: float) -> float:
    """N(u) = Re int i |u|^{2 sigma} conj(u) u_x / (2 sigma + 2)."""
    ux = spectral_derivative(u, grid)
    val = integrate(1j * np.abs(u) ** (2 * sigma) * np.conj(u) * ux, grid)
    return float(np.real(val)) / (2 * sigma + 2)


def energy(u, grid: GridSpec, sigma: float) -> float:
    ux = spectral_derivative(u, grid)
    return 0.5 * float(pairing(ux, ux, grid)) - nonlinear_part(u, grid, sigma)


def quadratic_part(u, grid: GridSpec, omega: float, c: float) -> float:
    ux = spectral_derivative(u, grid)
    kin = 0.5 * pairing(ux, ux, grid)
    return float(kin + omega * mass(u, grid) + c * momentum(u, grid))


def action(u, grid: GridSpec, omega: float, c: float, sigma: float) -> float:
    return energy(u, grid, sigma) + omega * mass(u, grid) + c * momentum(u, grid)


def scaling_K(u, grid: GridSpec, omega: float, c: float, sigma: float) -> float:
    """d/dlam S(lam u) at lam = 1, i.e. 2 Q(u) - (2 sigma + 2) N(u)."""
    return 2.0 * quadratic_part(u, grid, omega, c) - (2 * sigma + 2) * nonlinear_part(u, grid, sigma)


@dataclass(frozen=True)
class FunctionalReport:
    mass: float
    momentum: float
    energy: float
    action: float
    K: float


def report(u, grid: GridSpec, params: SolitonParams) -> FunctionalReport:
    M = mass(u, grid)
    P = momentum(u, grid)
    E = energy(u, grid, params.sigma)
    return FunctionalReport(M, P, E, E + params.omega * M + params.c * P,
                            scaling_K(u, grid, params.omega, params.c, params.sigma))


def J_functional(u, grid: GridSpec, xi) -> float:
    return xi[0] * mass(u, grid) + xi[1] * momentum(u, grid)


def apply_B(u, grid: GridSpec, xi) -> np.ndarray:
    """B u = xi_1 u + xi_2 i u_x, the derivative of J."""
    return xi[0] * np.asarray(u) + xi[1] * 1j * spectral_derivative(u, grid)


def action_gradient(u, grid: GridSpec, omega: float, c: float, sigma: float) -> np.ndarray:
    """Field G with <S'(u), h> = <G, h>."""
    ux = spectral_derivative(u, grid)
    uxx = spectral_derivative(u, grid, order=2)
    return -uxx + omega * u + 1j * c * ux - 1j * np.abs(u) ** (2 * sigma) * ux


def linearized_operator(eta, u, grid: GridSpec, omega: float, c: float, sigma: float) -> np.ndarray:
    """L eta with <L eta, psi> = S''(u)(eta, psi).

    Real-linear (not complex-linear) in ``eta``.  Broadcasts over leading
    axes of ``eta``.
    """
    eta = np.asarray(eta)
    ex = spectral_derivative(eta, grid)
    exx = spectral_derivative(eta, grid, order=2)
    ux = spectral_derivative(u, grid)
    a2 = np.abs(u) ** 2
    w1 = a2 ** (sigma - 1)
    return (-exx + omega * eta + 1j * c * ex
            - 1j * a2**sigma * ex
            - 1j * sigma * w1 * np.conj(u) * ux * eta
            - 1j * sigma * w1 * u * ux * np.conj(eta))


def action_hessian_form(u, h, g, grid: GridSpec, omega: float, c: float, sigma: float) -> float:
    """S''(u)(h, g) as written out pointwise."""
    hx = spectral_derivative(h, grid)
    gx = spectral_derivative(g, grid)
    ux = spectral_derivative(u, grid)
    a2 = np.abs(u) ** 2
    w1 = a2 ** (sigma - 1)
    gb = np.conj(g)
    quad = hx * np.conj(gx) + omega * h * gb + 1j * c * hx * gb
    nl = (1j * a2**sigma * hx * gb
          + 1j * sigma * w1 * np.conj(u) * ux * h * gb
          + 1j * sigma * w1 * u * ux * np.conj(h) * gb)
    return float(np.real(integrate(quad - nl, grid)))


def action_third_form(u, f, h, g, grid: GridSpec, sigma: float) -> float:
    """S'''(u)(f, h, g), obtained by differentiating S''(u)(h, g) in u along f.

    Requires |u| > 0 wherever the integrand lives (true for soliton profiles).
    """
    ux = spectral_derivative(u, grid)
    fx = spectral_derivative(f, grid)
    hx = spectral_derivative(h, grid)
    a2 = np.abs(u) ** 2
    ub = np.conj(u)
    fb = np.conj(f)
    r = ub * f + u * fb  # derivative of |u|^2 along f
    w1 = a2 ** (sigma - 1)
    w2 = a2 ** (sigma - 2)
    gb = np.conj(g)
    term_a = sigma * w1 * r * hx
    term_b = sigma * ((sigma - 1) * w2 * r * ub * ux + w1 * (fb * ux + ub * fx)) * h
    term_c = sigma * ((sigma - 1) * w2 * r * u * ux + w1 * (f * ux + u * fx)) * np.conj(h)
    return -float(np.real(integrate(1j * (term_a + term_b + term_c) * gb, grid)))


def action_third_form_at_Q(profile: SolitonProfile, f, h, g) -> float:
    return action_third_form(profile.Q, f, h, g, profile.grid, profile.params.sigma)


@dataclass(frozen=True)
class DSurface:
    params: SolitonParams
    d: float
    grad: np.ndarray
    hessian: np.ndarray
    h: float
    symmetry_defect: float

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.hessian))


class StencilError(ValueError):
    """A finite-difference stencil point leaves the region 4 omega > c**2."""


def _params_at(params: SolitonParams, domega: float, dc: float) -> SolitonParams:
    w, c = params.omega + domega, params.c + dc
    if not (w > 0 and 4 * w - c * c > 0):
        raise StencilError(f"stencil point (omega={w}, c={c}) is inadmissible")
    return params.replace(omega=w, c=c)


def d_value(params: SolitonParams, grid: GridSpec) -> float:
    Q = build_profile(params, grid).Q
    return action(Q, grid, params.omega, params.c, params.sigma)


def d_gradient(params: SolitonParams, grid: GridSpec) -> np.ndarray:
    """(dd/domega, dd/dc) = (M(Q), P(Q)), exact along the family."""
    Q = build_profile(params, grid).Q
    return np.array([mass(Q, grid), momentum(Q, grid)])


def d_surface(params: SolitonParams, grid: GridSpec, h: float = 1e-4) -> DSurface:
    """d, its gradient, and the Hessian by central differences of the gradient."""
    Q = build_profile(params, grid).Q
    grad = np.array([mass(Q, grid), momentum(Q, grid)])
    d = action(Q, grid, params.omega, params.c, params.sigma)
    cols = []
    for dw, dc in ((h, 0.0), (0.0, h)):
        gp = d_gradient(_params_at(params, dw, dc), grid)
        gm = d_gradient(_params_at(params, -dw, -dc), grid)
        cols.append((gp - gm) / (2 * h))
    H = np.column_stack(cols)
    defect = abs(H[0, 1] - H[1, 0])
    return DSurface(params, d, grad, 0.5 * (H + H.T), h, float(defect))


def d_third_directional(params: SolitonParams, grid: GridSpec, xi, h: float | None = None,
                        d_func=None) -> float:
    """Five-point third difference of lam -> d(omega + lam xi1, c + lam xi2).

    ``d_func(omega, c)`` replaces the soliton-based ``d`` (used to check the
    stencil on polynomials).
    """
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        return 0.0
    if h is None:
        h = 1e-2 * max(1.0, abs(params.omega), abs(params.c))
    if d_func is None:
        def d_func(w, c):
            return d_value(_params_at(params, w - params.omega, c - params.c), grid)
    vals = {m: d_func(params.omega + m * h * xi[0], params.c + m * h * xi[1])
            for m in (-2, -1, 1, 2)}
    return (vals[2] - 2 * vals[1] + 2 * vals[-1] - vals[-2]) / (2 * h**3)


def d_third_from_gradient(params: SolitonParams, grid: GridSpec, xi, h: float = 1e-2) -> float:
    """Second difference of lam -> xi . (M, P)(Q) along xi; one order fewer than d itself."""
    xi = np.asarray(xi, dtype=float)

    def jq(m):
        return float(xi @ d_gradient(_params_at(params, m * h * xi[0], m * h * xi[1]), grid))

    # fourth-order stencil
    f = {m: jq(m) for m in (-2, -1, 0, 1, 2)}
    return (-f[2] + 16 * f[1] - 30 * f[0] + 16 * f[-1] - f[-2]) / (12 * h * h)


def d_third_identity(profile: SolitonProfile, direction, xi) -> float:
    """S'''(Q)(v, v, v) + 3 <B v, v> for a direction v (tangent or renormalized)."""
    g = profile.grid
    v = np.asarray(direction)
    return (action_third_form_at_Q(profile, v, v, v)
            + 3.0 * float(pairing(apply_B(v, g, xi), v, g)))
