"""Exact solitary waves of iu_t + u_xx + i|u|^{2 sigma} u_x = 0.

The profile is ``Q(x) = Psi(x) exp(i theta(x))`` with an explicit modulus
``Psi`` and a phase made of a linear part ``c x / 2`` and a nonlocal part
``-G(x) / (2 sigma + 2)`` where ``G`` is the running integral of
``Psi**(2 sigma)``.  Because ``Psi**(2 sigma) = A / (cosh(b x) - z)`` the
running integral has the closed form

    G(x) = (A / b) * 2 / sqrt(1 - z**2) * [atan(k tanh(b x / 2)) + atan(k)],
    k = sqrt((1 + z) / (1 - z)),

which is what :func:`phase_value` evaluates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, pairing, spectral_derivative

TOL_BOUNDARY = 1e-10
TOL_TAIL = 1e-12


class ParameterError(ValueError):
    """Soliton parameters outside 1 < sigma < 2, 4 omega > c**2."""


class BoundaryDecayError(ValueError):
    """The box is too short for the profile to decay at its edges."""


@dataclass(frozen=True)
class SolitonParams:
    sigma: float
    omega: float
    c: float

    def __post_init__(self):
        if not 1.0 < self.sigma < 2.0:
            raise ParameterError(f"sigma must lie in (1, 2), got {self.sigma}")
        if not self.omega > 0:
            raise ParameterError(f"omega must be positive, got {self.omega}")
        if not 4.0 * self.omega - self.c**2 > 0:
            raise ParameterError(
                f"need 4 omega > c^2, got omega={self.omega}, c={self.c}")

    @property
    def z(self) -> float:
        """Speed ratio c / (2 sqrt(omega)), inside (-1, 1)."""
        return self.c / (2.0 * np.sqrt(self.omega))

    @property
    def decay_rate(self) -> float:
        """Exponential rate of |Q(x)| as |x| grows."""
        return 0.5 * np.sqrt(4.0 * self.omega - self.c**2)

    def replace(self, **kw) -> "SolitonParams":
        d = dict(sigma=self.sigma, omega=self.omega, c=self.c)
        d.update(kw)
        return SolitonParams(**d)


def _shape(params: SolitonParams):
    s, w, c = params.sigma, params.omega, params.c
    disc = 4.0 * w - c * c
    A = (s + 1.0) * disc / (2.0 * np.sqrt(w))
    b = s * np.sqrt(disc)
    return A, b, params.z


def _log_cosh_minus(u, z):
    """log(cosh(u) - z) without overflow."""
    a = np.abs(u)
    e = np.exp(-a)
    return a + np.log(0.5 * (1.0 + e * e) - z * e)


def psi_value(params: SolitonParams, x):
    """Soliton modulus Psi(x); accepts scalars or arrays."""
    A, b, z = _shape(params)
    x = np.asarray(x, dtype=float)
    logpsi = (np.log(A) - _log_cosh_minus(b * x, z)) / (2.0 * params.sigma)
    return np.exp(logpsi)


def psi_power_integral(params: SolitonParams, x):
    """Closed form of int_{-inf}^x Psi(s)**(2 sigma) ds."""
    A, b, z = _shape(params)
    k = np.sqrt((1.0 + z) / (1.0 - z))
    x = np.asarray(x, dtype=float)
    pref = 2.0 * A / (b * np.sqrt(1.0 - z * z))
    return pref * (np.arctan(k * np.tanh(0.5 * b * x)) + np.arctan(k))


def phase_value(params: SolitonParams, grid: GridSpec, center: float = 0.0) -> np.ndarray:
    """Phase theta at the nodes of ``grid`` for the profile centred at ``center``.

    Raises :class:`BoundaryDecayError` when the mass of ``Psi**(2 sigma)``
    to the left of the box exceeds ``TOL_TAIL``.
    """
    tail = float(psi_power_integral(params, grid.x[0] - center))
    if tail > TOL_TAIL:
        raise BoundaryDecayError(
            f"left-tail mass {tail:.3e} of Psi^(2 sigma) exceeds {TOL_TAIL:g}")
    s = grid.x - center
    return 0.5 * params.c * s - psi_power_integral(params, s) / (2.0 * params.sigma + 2.0)


def log_slope(params: SolitonParams, x) -> np.ndarray:
    """Exact |Q'(x)| / |Q(x)|."""
    A, b, z = _shape(params)
    x = np.asarray(x, dtype=float)
    # sinh(u) / (cosh(u) - z), written to avoid overflow
    e = np.exp(-np.abs(b * x))
    ratio = np.sign(x) * (1.0 - e * e) / (1.0 + e * e - 2.0 * z * e)
    dlogpsi = -0.5 * b * ratio / params.sigma
    dtheta = 0.5 * params.c - psi_value(params, x) ** (2 * params.sigma) / (2 * params.sigma + 2)
    return np.hypot(dlogpsi, dtheta)


@dataclass(frozen=True)
class SolitonProfile:
    params: SolitonParams
    grid: GridSpec
    Q: np.ndarray
    Psi: np.ndarray
    Qx: np.ndarray
    theta: np.ndarray
    boundary_magnitude: float
    c0_est: float

    @property
    def gen_rotation(self) -> np.ndarray:
        return 1j * self.Q

    @property
    def gen_translation(self) -> np.ndarray:
        return self.Qx

    @property
    def log_slope_bounds(self) -> tuple[float, float]:
        return self.c0_est, 1.0 / self.c0_est


def build_profile(params: SolitonParams, grid: GridSpec, *, phase: float = 0.0,
                  center: float = 0.0, tol_boundary: float = TOL_BOUNDARY) -> SolitonProfile:
    """Sample ``Q(x - center) * exp(i phase)`` on ``grid``.

    ``phase`` and ``center`` exist so exact symmetry-orbit points can be
    produced without interpolation.
    """
    theta = phase_value(params, grid, center) + phase
    s = grid.x - center
    psi = psi_value(params, s)
    edge = float(max(psi_value(params, grid.x[0] - center),
                     psi_value(params, grid.x[-1] + grid.dx - center),
                     psi[0], psi[-1]))
    if edge >= tol_boundary:
        raise BoundaryDecayError(
            f"|Q| = {edge:.3e} at the box edge (L={grid.L}); need < {tol_boundary:g}. "
            f"Decay rate is {params.decay_rate:.4f}, enlarge L.")
    Q = psi * np.exp(1j * theta)
    Qx = spectral_derivative(Q, grid)
    slope = log_slope(params, s)
    c0 = float(min(slope.min(), 1.0 / slope.max(), 1.0))
    return SolitonProfile(params=params, grid=grid, Q=Q, Psi=psi, Qx=Qx, theta=theta,
                          boundary_magnitude=edge, c0_est=c0)


def profile_operator(u, grid: GridSpec, sigma: float, omega: float, c: float) -> np.ndarray:
    """-u_xx + omega u + c i u_x - i |u|^{2 sigma} u_x."""
    ux = spectral_derivative(u, grid)
    uxx = spectral_derivative(u, grid, order=2)
    return -uxx + omega * u + 1j * c * ux - 1j * np.abs(u) ** (2 * sigma) * ux


def soliton_residual(profile: SolitonProfile, omega: float | None = None) -> float:
    """Relative L2 residual of the profile equation.

    ``omega`` overrides the frequency used in the operator (to see that the
    wrong frequency is detected).
    """
    p = profile.params
    w = p.omega if omega is None else omega
    r = profile_operator(profile.Q, profile.grid, p.sigma, w, p.c)
    g = profile.grid
    return float(np.sqrt(pairing(r, r, g) / pairing(profile.Q, profile.Q, g)))


def default_step(value: float) -> float:
    return max(1e-5, 1e-4 * abs(value))


def param_derivative(params: SolitonParams, grid: GridSpec, which: str,
                     h: float | None = None) -> np.ndarray:
    """Central difference of Q in ``omega`` or ``c`` on a fixed grid."""
    if which in ("omega", "w"):
        name = "omega"
    elif which in ("speed", "c"):
        name = "c"
    else:
        raise ValueError(f"which must be 'omega' or 'speed', got {which!r}")
    base = getattr(params, name)
    if h is None:
        h = default_step(base)
    plus = build_profile(params.replace(**{name: base + h}), grid).Q
    minus = build_profile(params.replace(**{name: base - h}), grid).Q
    return (plus - minus) / (2.0 * h)


def richardson_check(params: SolitonParams, grid: GridSpec, which: str,
                     h: float | None = None) -> float:
    """Relative L2 gap between step ``h`` and ``h/2`` derivatives."""
    if h is None:
        h = default_step(getattr(params, "omega" if which in ("omega", "w") else "c"))
    d1 = param_derivative(params, grid, which, h)
    d2 = param_derivative(params, grid, which, h / 2)
    gap = pairing(d1 - d2, d1 - d2, grid)
    return float(np.sqrt(gap / pairing(d2, d2, grid)))


def tangent_vector(params: SolitonParams, grid: GridSpec, xi, h: float | None = None) -> np.ndarray:
    """xi[0] dQ/domega + xi[1] dQ/dc."""
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        raise ValueError("xi must be nonzero")
    out = np.zeros(grid.N, dtype=complex)
    if xi[0] != 0:
        out += xi[0] * param_derivative(params, grid, "omega", h)
    if xi[1] != 0:
        out += xi[1] * param_derivative(params, grid, "speed", h)
    return out
