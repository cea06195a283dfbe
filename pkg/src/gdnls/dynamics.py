"""Time evolution, trajectory diagnostics and the instability experiment.

The integrator is fourth-order Runge-Kutta in the interaction picture: the
dispersive part ``i u_xx`` is propagated exactly by ``exp(-i k^2 t)`` and the
transport term ``-|u|^{2 sigma} u_x`` is evaluated pseudospectrally.  The 2/3
rule is applied to ``u_x`` before the pointwise product and to the product
afterwards; ``|u|^{2 sigma}`` is not a polynomial for non-integer sigma, so
some aliasing is left and the conservation monitors are the guard against it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.optimize import brentq

from .functionals import action_third_form, apply_B, energy, linearized_operator, mass, momentum
from .grid import GridSpec, h1_norm, pairing, shift, spectral_derivative
from .modulation import Frame, ModulationState, _wrap_angle, decompose, rho_tilde
from .soliton import SolitonParams, SolitonProfile

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    """Non-finite values appeared during time stepping."""


@dataclass
class SimConfig:
    L: float = 80.0
    N: int = 2048
    params: SolitonParams | None = None
    dt: float = 1e-3
    T: float = 5.0
    dealias: float = 2.0 / 3.0
    tol_mass: float = 1e-8
    tol_energy: float = 1e-8
    tol_momentum: float = 1e-8
    lambda0: float = 0.05
    sample_dt: float = 0.05
    store_every: int = 1
    tube_radius: float | None = None
    cfl_safety: float = 0.5
    workers: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T >= self.dt:
            raise ValueError("T must be at least dt")
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be nonnegative")
        if not self.sample_dt >= self.dt:
            raise ValueError("sample_dt must be at least dt")
        if self.store_every < 1:
            raise ValueError("store_every must be a positive integer")
        for name in ("tol_mass", "tol_energy", "tol_momentum"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.dealias <= 1:
            raise ValueError("dealias fraction must lie in (0, 1]")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.L, self.N)

    @property
    def sigma(self) -> float:
        return self.params.sigma if self.params is not None else 1.5


def nonlinearity(u, grid: GridSpec, sigma: float) -> np.ndarray:
    """f(u) = i |u|^{2 sigma} u_x."""
    return 1j * np.abs(u) ** (2 * sigma) * spectral_derivative(u, grid)


class Stepper:
    """Integrating-factor RK4 for u_t = i u_xx - |u|^{2 sigma} u_x, in Fourier space."""

    def __init__(self, grid: GridSpec, sigma: float, dt: float, dealias: float = 2.0 / 3.0,
                 workers: int = 1):
        self.grid = grid
        self.sigma = sigma
        self.workers = workers
        self.mask = grid.dealias_mask(dealias) if dealias < 1 else np.ones(grid.N, dtype=bool)
        self.ikd = 1j * grid.k * self.mask
        self.set_dt(dt)

    def set_dt(self, dt: float):
        self.dt = dt
        self.half = np.exp(-0.5j * self.grid.k2 * dt)
        self.full = self.half * self.half

    def transport(self, uh):
        w = self.workers
        u = sfft.ifft(uh, workers=w)
        ux = sfft.ifft(self.ikd * uh, workers=w)
        # the product is truncated too: left alone, the modes above the cutoff
        # are fed by aliasing and grow without bound
        return self.mask * sfft.fft(-np.abs(u) ** (2 * self.sigma) * ux, workers=w)

    def step(self, uh):
        dt, E, E2 = self.dt, self.half, self.full
        k1 = self.transport(uh)
        k2 = self.transport(E * (uh + 0.5 * dt * k1))
        k3 = self.transport(E * uh + 0.5 * dt * k2)
        k4 = self.transport(E2 * uh + dt * E * k3)
        return E2 * uh + (dt / 6.0) * (E2 * k1 + 2.0 * E * (k2 + k3) + k4)


def cfl_limit(u, grid: GridSpec, sigma: float, safety: float = 0.5) -> float:
    return safety * grid.dx / max(1.0, float(np.max(np.abs(u))) ** (2 * sigma))


@dataclass
class TrajectoryRecord:
    grid: GridSpec
    sigma: float
    times: np.ndarray
    M: np.ndarray
    P: np.ndarray
    E: np.ndarray
    field_times: np.ndarray
    fields: np.ndarray
    dt_final: float
    halted: str | None = None
    notes: list = field(default_factory=list)

    def drift(self, upto: float | None = None) -> dict:
        """Maximum conservation drift, optionally only over t <= ``upto``."""
        sel = slice(None) if upto is None else self.times <= upto + 1e-12
        M, P, E = self.M[sel], self.P[sel], self.E[sel]
        return {
            "mass_rel": float(np.max(np.abs(M - M[0])) / abs(M[0])) if M[0] else 0.0,
            "energy_rel": float(np.max(np.abs(E - E[0])) / abs(E[0])) if E[0] else 0.0,
            "momentum_abs": float(np.max(np.abs(P - P[0]))),
            "momentum_scaled": float(np.max(np.abs(P - P[0])) / (1 + abs(P[0]))),
        }

    def drift_ok(self, config: SimConfig, upto: float | None = None) -> bool:
        d = self.drift(upto)
        return (d["mass_rel"] < config.tol_mass and d["energy_rel"] < config.tol_energy
                and d["momentum_scaled"] < config.tol_momentum)

    def field_at(self, t: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.field_times - t)))
        return self.fields[j]


def evolve(config: SimConfig, u0, callback=None) -> TrajectoryRecord:
    """Integrate from ``u0`` to ``config.T``, sampling every ``config.sample_dt``.

    ``callback(t, u)`` is called at every sample and may return ``False`` to
    stop the run.  Integration also halts early (recorded in ``halted``) when
    the relative mass drift exceeds ``config.tol_mass``.
    """
    grid = config.grid
    sigma = config.sigma
    u0 = np.asarray(u0, dtype=complex)
    grid.check(u0)
    if not np.all(np.isfinite(u0)):
        raise IntegrationError("initial field is not finite")
    dt = config.dt
    notes = []
    while dt > cfl_limit(u0, grid, sigma, config.cfl_safety):
        dt *= 0.5
        notes.append(f"dt halved to {dt:g} by the CFL guard at t=0")
        log.info(notes[-1])
    stepper = Stepper(grid, sigma, dt, config.dealias, config.workers)
    n_samples = int(round(config.T / config.sample_dt))
    steps_per = max(1, int(round(config.sample_dt / dt)))
    stepper.set_dt(config.sample_dt / steps_per)

    def diag(u):
        return mass(u, grid), momentum(u, grid), energy(u, grid, sigma)

    M0, P0, E0 = diag(u0)
    times, Ms, Ps, Es = [0.0], [M0], [P0], [E0]
    ftimes, fields = [0.0], [u0.copy()]
    halted = None
    uh = sfft.fft(u0)
    if callback is not None and callback(0.0, u0) is False:
        halted = "callback"
        n_samples = 0
    for s in range(1, n_samples + 1):
        for _ in range(steps_per):
            uh = stepper.step(uh)
        u = sfft.ifft(uh)
        t = s * config.sample_dt
        if not np.all(np.isfinite(u)):
            raise IntegrationError(f"non-finite field at t={t:g}")
        M, P, E = diag(u)
        times.append(t)
        Ms.append(M)
        Ps.append(P)
        Es.append(E)
        if s % config.store_every == 0:
            ftimes.append(t)
            fields.append(u.copy())
        if M0 != 0 and abs(M - M0) > config.tol_mass * abs(M0):
            halted = f"mass drift {abs(M - M0) / abs(M0):.2e} at t={t:g}"
            log.warning(halted)
            break
        if callback is not None and callback(t, u) is False:
            halted = "callback"
            break
        lim = cfl_limit(u, grid, sigma, config.cfl_safety)
        if stepper.dt > lim:
            while stepper.dt > lim:
                steps_per *= 2
                stepper.set_dt(config.sample_dt / steps_per)
            notes.append(f"dt halved to {stepper.dt:g} by the CFL guard at t={t:g}")
            log.info(notes[-1])
    if ftimes[-1] != times[-1]:
        ftimes.append(times[-1])
        fields.append(sfft.ifft(uh))
    return TrajectoryRecord(grid, sigma, np.array(times), np.array(Ms), np.array(Ps),
                            np.array(Es), np.array(ftimes), np.array(fields), stepper.dt,
                            halted, notes)


def exact_soliton(profile: SolitonProfile, t: float) -> np.ndarray:
    """Q(x - c t) e^{i omega t} on the periodic box."""
    p = profile.params
    return shift(profile.Q, -p.c * t, profile.grid) * np.exp(1j * p.omega * t)


def build_unstable_data(frame: Frame, lambda0: float) -> np.ndarray:
    """u0 = Q + lambda0 phi + rho_tilde(lambda0) BQ, on the level set J(u0) = J(Q)."""
    if lambda0 == 0:
        return frame.Q.copy()
    r = rho_tilde(lambda0, frame)
    return frame.Q + lambda0 * frame.phi + r * frame.BQ


# ------------------------------------------------------------ orbital distance

def _wrap(y, L):
    return float(y - L * np.round(y / L))


def orbital_distance(u, profile: SolitonProfile, return_params: bool = False):
    """inf over (y, gamma) of || u(. + y) e^{i gamma} - Q ||_{H1}.

    For fixed y the best gamma makes the H1 overlap real positive, so the
    search is one-dimensional: coarse y from the circular cross-correlation,
    then a bracketed root of the derivative of |overlap(y)|^2.
    """
    g = profile.grid
    u = np.asarray(u, dtype=complex)
    uh, qh = np.fft.fft(u), np.fft.fft(profile.Q)
    kk = 2.0 * np.pi * np.fft.fftfreq(g.N, d=g.dx)
    # y -> <u(. + y), Q>_{H1} is the trigonometric polynomial sum w_k e^{i k y};
    # weights match h1_norm, which drops the Nyquist derivative
    w = (1.0 + g.k**2) * uh * np.conj(qh) * g.dx / g.N
    corr = np.fft.ifft(w) * g.N
    if not np.any(np.abs(corr) > 0):
        d = h1_norm(profile.Q, g)
        return (d, 0.0, 0.0) if return_params else d
    m = int(np.argmax(np.abs(corr)))

    def C(y):
        return np.sum(w * np.exp(1j * kk * y))

    def slope(y):
        return float(np.real(np.sum(1j * kk * w * np.exp(1j * kk * y)) * np.conj(C(y))))

    y = m * g.dx
    lo, hi = y - g.dx, y + g.dx
    if slope(lo) > 0 > slope(hi):
        y = brentq(slope, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    gamma = -float(np.angle(C(y)))
    y = _wrap(y, g.L)
    dist = h1_norm(shift(u, y, g) * np.exp(1j * gamma) - profile.Q, g)
    return (dist, y, gamma) if return_params else dist


def orbital_distance_lattice(u, profile: SolitonProfile, n: int = 64, levels: int = 10,
                             y_window: float | None = None) -> tuple[float, float, float]:
    """Derivative-free oracle: n x n (y, gamma) lattice, zoomed ``levels`` times.

    The first lattice covers all of gamma and a y window (default: the whole
    box); each later one spans four cells either side of the previous best.
    Translation and rotation are strongly coupled near the orbit, so gamma
    offsets are measured from the line gamma = gamma_c - s (y - y_c) along
    which the distance valley runs.
    """
    g = profile.grid
    u = np.asarray(u, dtype=complex)
    kfac2 = 1.0 + g.k**2  # same weights as h1_norm (Nyquist dropped)
    qh = np.fft.fft(profile.Q)
    qxh = np.fft.fft(profile.Qx)
    slope = (np.real(np.sum(kfac2 * qxh * np.conj(1j * qh)))
             / np.real(np.sum(kfac2 * np.abs(qh) ** 2)))
    yc, ywid = 0.0, (g.L if y_window is None else y_window)
    gc, gwid = 0.0, 2 * np.pi
    best = (np.inf, 0.0, 0.0)
    for level in range(levels):
        ys = yc + ywid * (np.arange(n) / n - 0.5)
        offs = gwid * (np.arange(n) / n - 0.5)
        for y in ys:
            sh = np.fft.fft(shift(u, y, g))
            gs = gc - (slope * (y - yc) if level else 0.0) + offs
            # || a e^{i gamma} - q ||^2 in H1 via Parseval, for all gammas at once
            diff = sh[None, :] * np.exp(1j * gs)[:, None] - qh[None, :]
            vals = np.sqrt(np.sum(np.abs(diff) ** 2 * kfac2, axis=1) * g.dx / g.N)
            j = int(np.argmin(vals))
            if vals[j] < best[0]:
                best = (float(vals[j]), float(y), float(gs[j]))
        yc, gc = best[1], best[2]
        ywid, gwid = 8 * ywid / n, 8 * gwid / n
    return best[0], _wrap(best[1], g.L), float(np.angle(np.exp(1j * best[2])))


# ------------------------------------------------------------ modulation track

@dataclass
class ModulationSeries:
    """Decomposition along a trajectory, up to (excluding) the exit time."""

    times: np.ndarray
    y: np.ndarray
    gamma: np.ndarray
    lam: np.ndarray
    eps_h1: np.ndarray
    eps_BQ: np.ndarray
    eps: np.ndarray
    t0: float | None
    exit_reason: str | None = None

    def __len__(self):
        return len(self.times)

    def reversed(self, t_end: float | None = None) -> "ModulationSeries":
        """Same states read backwards in time (t -> t_end - t)."""
        t_end = self.times[-1] if t_end is None else t_end
        return ModulationSeries(t_end - self.times[::-1], self.y[::-1], self.gamma[::-1],
                                self.lam[::-1], self.eps_h1[::-1], self.eps_BQ[::-1],
                                self.eps[::-1], None)

    def subsample(self, every: int) -> "ModulationSeries":
        s = slice(None, None, every)
        return ModulationSeries(self.times[s], self.y[s], self.gamma[s], self.lam[s],
                                self.eps_h1[s], self.eps_BQ[s], self.eps[s], self.t0,
                                self.exit_reason)


class ModulationTracker:
    """Sequential decomposition fed one sample at a time.

    Each solve is seeded by the previous state advanced by the free motion
    (y += c dt, gamma -= omega dt).  The first failed solve or the first
    ||eps||_{H1} >= tube radius sets ``t0``; later samples are ignored.
    """

    def __init__(self, frame: Frame, tube_radius: float | None = None, keep_eps: bool = True):
        self.frame = frame
        g = frame.grid
        self.tube_radius = 0.3 * h1_norm(frame.Q, g) if tube_radius is None else tube_radius
        self.keep_eps = keep_eps
        self.rows: list = []
        self.eps: list = []
        self.t0: float | None = None
        self.reason: str | None = None
        self._prev = None

    @property
    def exited(self) -> bool:
        return self.t0 is not None

    def push(self, t: float, u) -> ModulationState | None:
        if self.exited:
            return None
        p = self.frame.profile.params
        if self._prev is None:
            st = decompose(u, self.frame, tube_radius=self.tube_radius)
        else:
            tp, sp = self._prev
            seed = (sp.y + p.c * (t - tp), sp.gamma - p.omega * (t - tp), sp.lam)
            st = decompose(u, self.frame, seed=seed, tube_radius=self.tube_radius)
        if not st.converged:
            self.t0, self.reason = float(t), "decomposition failed"
            return None
        if not st.in_tube:
            self.t0, self.reason = float(t), "eps left the tube"
            return None
        self.rows.append((t, st.y, st.gamma, st.lam, st.eps_h1, st.eps_BQ))
        if self.keep_eps:
            self.eps.append(st.eps)
        self._prev = (t, st)
        return st

    def series(self) -> ModulationSeries:
        g = self.frame.grid
        arr = np.array(self.rows, dtype=float).reshape(-1, 6)
        y = arr[:, 1].copy()
        if len(y) > 1:
            # undo the periodic wrap of the position
            y[1:] -= g.L * np.cumsum(np.round(np.diff(y) / g.L))
        gamma = np.unwrap(arr[:, 2]) if len(arr) else arr[:, 2]
        eps = np.array(self.eps) if self.eps else np.zeros((0, g.N), dtype=complex)
        return ModulationSeries(arr[:, 0], y, gamma, arr[:, 3], arr[:, 4], arr[:, 5], eps,
                                self.t0, self.reason)


def track_modulation(times, fields, frame: Frame, tube_radius: float | None = None) -> ModulationSeries:
    """Decompose stored fields in order; see :class:`ModulationTracker`."""
    tr = ModulationTracker(frame, tube_radius)
    for t, u in zip(times, fields):
        tr.push(t, u)
        if tr.exited:
            break
    return tr.series()


def centered_diff(values, times) -> np.ndarray:
    """Derivative on a (possibly nonuniform) time base; one-sided at the ends."""
    values = np.asarray(values, dtype=float)
    if len(values) < 3:
        raise ValueError("need at least 3 samples")
    return np.gradient(values, np.asarray(times, dtype=float))


@dataclass(frozen=True)
class ParameterRates:
    times: np.ndarray
    lam_dot: np.ndarray
    y_dot_minus_c: np.ndarray
    gamma_dot_plus_omega: np.ndarray
    C: float

    def max_rates(self) -> tuple[float, float, float]:
        return (float(np.max(np.abs(self.lam_dot))), float(np.max(np.abs(self.y_dot_minus_c))),
                float(np.max(np.abs(self.gamma_dot_plus_omega))))


def parameter_rates(series: ModulationSeries, speed: float, omega: float) -> ParameterRates:
    """Centered differences of lam, y - c t and gamma + omega t.

    C is the smallest constant with |lam'| + |y' - c| + |gamma' + omega| <=
    C (|lam| + ||eps||_{H1}) at every sample.
    """
    t = series.times
    ld = centered_diff(series.lam, t)
    yd = centered_diff(series.y - speed * t, t)
    gd = centered_diff(series.gamma + omega * t, t)
    lhs = np.abs(ld) + np.abs(yd) + np.abs(gd)
    rhs = np.abs(series.lam) + series.eps_h1
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    return ParameterRates(t, ld, yd, gd, float(np.max(ratio)))


# ----------------------------------------------------------------- virial

@dataclass(frozen=True)
class VirialCoeffs:
    alpha: float
    beta: float
    system: np.ndarray
    rhs: np.ndarray
    phi: np.ndarray
    Q: np.ndarray
    iQx: np.ndarray
    grid: GridSpec

    def Phi(self, lam: float) -> np.ndarray:
        return self.phi + self.alpha * lam * self.Q + self.beta * lam * self.iQx

    def system_residual(self) -> float:
        sol = np.array([self.alpha, self.beta])
        return float(np.linalg.norm(self.system @ sol - self.rhs)
                     / max(np.linalg.norm(self.rhs), np.finfo(float).tiny))


def virial_coefficients(profile: SolitonProfile, phi) -> VirialCoeffs:
    g = profile.grid
    Q = profile.Q
    iQx = 1j * profile.Qx
    phi = np.asarray(phi, dtype=complex)
    A = np.array([[pairing(Q, Q, g), pairing(iQx, Q, g)],
                  [pairing(iQx, Q, g), pairing(iQx, iQx, g)]])
    rhs = -np.array([pairing(phi, phi, g),
                     pairing(1j * spectral_derivative(phi, g), phi, g)])
    if not np.any(rhs):
        alpha = beta = 0.0
    else:
        alpha, beta = np.linalg.solve(A, rhs)
    return VirialCoeffs(float(alpha), float(beta), A, rhs, phi, Q, iQx, g)


def xi_identity_gap(coeffs: VirialCoeffs, frame: Frame) -> float:
    """Relative defect of <BQ, alpha Q + beta iQ_x> = -<B phi, phi>."""
    g = frame.grid
    lhs = pairing(frame.BQ, coeffs.alpha * coeffs.Q + coeffs.beta * coeffs.iQx, g)
    rhs = -pairing(apply_B(frame.phi, g, frame.xi), frame.phi, g)
    return float(abs(lhs - rhs) / max(abs(rhs), np.finfo(float).tiny))


@dataclass(frozen=True)
class VirialSeries:
    times: np.ndarray
    I: np.ndarray
    Idot: np.ndarray
    prediction: np.ndarray
    ratio: np.ndarray


def virial_series(series: ModulationSeries, coeffs: VirialCoeffs, d3: float) -> VirialSeries:
    """I(t) = <i eps, Phi(t)>, its centered derivative and the ratio to d3 lam^2 / 2."""
    I = np.array([pairing(1j * eps, coeffs.Phi(lam), coeffs.grid)
                  for lam, eps in zip(series.lam, series.eps)], dtype=float).reshape(-1)
    pred = 0.5 * d3 * series.lam ** 2
    Idot = centered_diff(I, series.times) if len(series) >= 3 else np.full(len(series), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = Idot / pred
    return VirialSeries(series.times, I, Idot, pred, ratio)


# -------------------------------------------------------- radiation equation

def first_order_term(Q, eta, grid: GridSpec, sigma: float) -> np.ndarray:
    """R1: the part of f(Q + eta) - f(Q) linear in eta."""
    Qx = spectral_derivative(Q, grid)
    ex = spectral_derivative(eta, grid)
    a2 = np.abs(Q) ** 2
    w1 = a2 ** (sigma - 1)
    return 1j * (a2**sigma * ex + sigma * w1 * np.conj(Q) * Qx * eta
                 + sigma * w1 * Q * Qx * np.conj(eta))


def quadratic_term(Q, eta, grid: GridSpec, sigma: float) -> np.ndarray:
    """R2: the part of f(Q + eta) - f(Q) quadratic in eta."""
    Qx = spectral_derivative(Q, grid)
    ex = spectral_derivative(eta, grid)
    a2 = np.abs(Q) ** 2
    w1 = a2 ** (sigma - 1)
    w2 = a2 ** (sigma - 2)
    eb = np.conj(eta)
    half = 0.5 * sigma * (sigma - 1)
    return 1j * (sigma * w1 * np.conj(Q) * eta * ex + sigma * w1 * Q * eb * ex
                 + sigma**2 * w1 * Qx * eta * eb
                 + half * w2 * np.conj(Q) ** 2 * Qx * eta * eta
                 + half * w2 * Q**2 * Qx * eb * eb)


def higher_order_term(Q, eta, grid: GridSpec, sigma: float) -> np.ndarray:
    """R~ = f(Q + eta) - f(Q) - R1 - R2 (definitional)."""
    return (nonlinearity(Q + eta, grid, sigma) - nonlinearity(Q, grid, sigma)
            - first_order_term(Q, eta, grid, sigma) - quadratic_term(Q, eta, grid, sigma))


@dataclass(frozen=True)
class EpsResidual:
    terms: dict
    total: float
    relative: float


def eps_equation_residual(t1: float, s1: ModulationState, t2: float, s2: ModulationState,
                          frame: Frame) -> EpsResidual:
    """Residual of the radiation equation between two adjacent tracked states.

    Everything is evaluated at the midpoint; time derivatives are the
    difference quotients across the pair, so the residual is O(dt^2) plus
    spatial error.
    """
    g = frame.grid
    p = frame.profile.params
    Q, phi, BQ = frame.Q, frame.phi, frame.BQ
    dt = t2 - t1
    lam = 0.5 * (s1.lam + s2.lam)
    eps = 0.5 * (s1.eps + s2.eps)
    eps_t = (s2.eps - s1.eps) / dt
    lam_t = (s2.lam - s1.lam) / dt
    y_t = _wrap(s2.y - s1.y, g.L) / dt
    gam_t = _wrap_angle(s2.gamma - s1.gamma) / dt
    eta = lam * phi + frame.rho(lam) * BQ + eps
    v = Q + eta
    vx = spectral_derivative(v, g)
    lhs_time = 1j * eps_t
    lin = linearized_operator(eta, Q, g, p.omega, p.c, p.sigma)
    f_lam = -1j * lam_t * (phi + frame.rho_dot(lam) * BQ)
    f_y = 1j * (y_t - p.c) * vx
    f_gam = -(gam_t + p.omega) * v
    r2 = quadratic_term(Q, eta, g, p.sigma)
    rt = higher_order_term(Q, eta, g, p.sigma)
    res = lhs_time - lin - (f_lam + f_y + f_gam - r2 - rt)
    parts = {"i eps_t": lhs_time, "L eta": lin, "lambda_t": f_lam, "y_t - c": f_y,
             "gamma_t + omega": f_gam, "R2": r2, "R~": rt}
    norms = {k: float(np.sqrt(pairing(a, a, g))) for k, a in parts.items()}
    total = float(np.sqrt(pairing(res, res, g)))
    scale = max(max(norms.values()), np.finfo(float).tiny)
    return EpsResidual(norms, total, total / scale)


def quadratic_form_gap(profile: SolitonProfile, eta, psi) -> float:
    """Relative gap in <R2(Q, eta), psi> = -S'''(Q)(eta, eta, psi) / 2."""
    g = profile.grid
    s = profile.params.sigma
    lhs = pairing(quadratic_term(profile.Q, eta, g, s), psi, g)
    rhs = -0.5 * action_third_form(profile.Q, eta, eta, psi, g, s)
    return float(abs(lhs - rhs) / max(abs(rhs), np.finfo(float).tiny))


# ----------------------------------------------------- instability experiment

@dataclass
class InstabilityResult:
    config: SimConfig
    lambda0: float
    trajectory: TrajectoryRecord
    series: ModulationSeries
    distance_times: np.ndarray
    distance: np.ndarray
    virial: VirialSeries | None
    coeffs: VirialCoeffs
    d3: float
    kappa: float
    reference_distance: float
    alpha0: float
    t_cross: float | None
    verdict: dict


def run_instability(config: SimConfig, frame: Frame, d3: float, kappa: float, *,
                    lambda0: float | None = None, alpha_factor: float = 10.0,
                    distance_floor: float = 1e-4, transient: float = 1.0,
                    ratio_window: tuple = (0.5, 1.5), eet_margin: float = 0.5,
                    stop_after_exit: bool = True) -> InstabilityResult:
    """Evolve the perturbed soliton and score the instability signatures.

    ``lambda0`` defaults to ``config.lambda0``; a negative value runs the
    opposite branch.  The orbital-distance threshold is ``alpha_factor``
    times the initial distance, floored at ``distance_floor`` so that an
    unperturbed run (distance ~ rounding) is judged on a meaningful scale.
    The run stops once the tube has been left and the threshold crossed.
    """
    lam0 = config.lambda0 if lambda0 is None else lambda0
    profile = frame.profile
    u0 = build_unstable_data(frame, lam0)
    tracker = ModulationTracker(frame, config.tube_radius)
    dist_t, dist = [], []
    d0 = orbital_distance(u0, profile)
    ref = max(d0, distance_floor)
    alpha0 = alpha_factor * ref
    crossed = {"t": None}

    def on_sample(t, u):
        tracker.push(t, u)
        d = orbital_distance(u, profile)
        dist_t.append(t)
        dist.append(d)
        if crossed["t"] is None and d > alpha0:
            crossed["t"] = float(t)
        if stop_after_exit and tracker.exited and crossed["t"] is not None:
            return False
        return True

    traj = evolve(config, u0, callback=on_sample)
    series = tracker.series()
    coeffs = virial_coefficients(profile, frame.phi)
    vir = virial_series(series, coeffs, d3) if len(series) >= 3 else None
    dist_t, dist = np.array(dist_t), np.array(dist)

    verdict = {"lambda0": lam0, "t0": series.t0, "exit_reason": series.exit_reason,
               "alpha0": alpha0, "reference_distance": ref, "initial_distance": d0,
               "alpha0_crossed": crossed["t"] is not None, "t_cross": crossed["t"],
               "max_distance_ratio": float(dist.max() / ref), "halted": traj.halted,
               "t_end": float(traj.times[-1])}
    lam = series.lam
    active = lam0 > 0 and len(series) > 0
    verdict["lt_bound_ok"] = bool(np.all(lam >= 0.5 * lam0)) if active else None
    verdict["lambda_min"] = float(lam.min()) if len(series) else None
    if active and d3 < 0 and kappa > 0:
        bound = -(2.0 / kappa) * d3 * np.abs(lam) ** 3 * (1.0 + eet_margin)
        verdict["eet_bound_ok"] = bool(np.all(series.eps_h1**2 <= bound))
        verdict["eet_max_ratio"] = float(np.max(series.eps_h1**2 / bound))
    else:
        verdict["eet_bound_ok"] = None
    verdict["Idot_ratio_range"] = None
    if vir is not None and lam0 != 0:
        sel = vir.times >= transient
        if np.any(sel):
            r = vir.ratio[sel]
            verdict["Idot_ratio_range"] = [float(r.min()), float(r.max())]
            verdict["Idot_negative"] = bool(np.all(vir.Idot[sel] < 0))
            verdict["Idot_ratio_ok"] = bool(ratio_window[0] <= r.min() and r.max() <= ratio_window[1])
            inside = (vir.ratio >= ratio_window[0]) & (vir.ratio <= ratio_window[1])
            bad = np.nonzero(sel & ~inside)[0]
            verdict["Idot_ratio_first_outside"] = float(vir.times[bad[0]]) if len(bad) else None
            # I(t) - I(0) against the guaranteed linear decrease d3 lam0^2 t / 16
            slope = d3 * lam0**2 / 16.0
            verdict["virial_decrease_ok"] = bool(np.all(
                vir.I[sel] - vir.I[0] <= 0.5 * slope * vir.times[sel]))
    upto = series.t0
    verdict["drift_to_t0"] = traj.drift(upto)
    verdict["drift_ok"] = traj.drift_ok(config, upto)
    return InstabilityResult(config, lam0, traj, series, dist_t, dist, vir, coeffs, d3, kappa,
                             ref, alpha0, crossed["t"], verdict)
