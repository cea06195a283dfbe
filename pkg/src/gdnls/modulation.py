"""Second-order modulation around a degenerate soliton.

A field near the soliton orbit is written as

    u(x + y) e^{i gamma} = Q + lam * phi + rho(lam) * BQ + eps,

with ``eps`` orthogonal to ``iQ``, ``Q_x`` and ``phi``.  This module builds
``phi``, ``rho`` and its implicit counterpart ``rho_tilde``, solves for
``(y, gamma, lam)`` by Newton iteration, and measures the coercivity of the
Hessian on the constrained subspace.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .functionals import (J_functional, action, action_hessian_form, apply_B,
                          linearized_operator)
from .grid import GridSpec, h1_norm, pairing, shift, spectral_derivative
from .soliton import SolitonProfile, tangent_vector

log = logging.getLogger(__name__)


class ModulationError(RuntimeError):
    """Singular renormalization system or a failed scalar solve."""


@dataclass(frozen=True)
class RenormalizedDirection:
    phi: np.ndarray
    a: float
    b: float
    phi_tilde: np.ndarray
    defects: dict

    def max_defect(self) -> float:
        return max(abs(v) for v in self.defects.values())


def renormalize_tangent(profile: SolitonProfile, phi_tilde, xi) -> RenormalizedDirection:
    """Remove the iQ and Q_x components of the tangent direction."""
    g = profile.grid
    iQ, Qx = 1j * profile.Q, profile.Qx
    A = np.array([[pairing(iQ, Qx, g), pairing(iQ, iQ, g)],
                  [pairing(Qx, Qx, g), pairing(Qx, iQ, g)]])
    rhs = np.array([pairing(iQ, phi_tilde, g), pairing(Qx, phi_tilde, g)])
    scale = np.abs(A).max()
    if abs(np.linalg.det(A)) < 1e-14 * scale * scale:
        raise ModulationError("renormalization system is singular")
    a, b = np.linalg.solve(A, rhs)
    phi = phi_tilde - a * Qx - b * iQ
    BQ = apply_B(profile.Q, g, xi)
    defects = {
        "iQ": pairing(phi, iQ, g),
        "Qx": pairing(phi, Qx, g),
        "Q": pairing(phi, profile.Q, g),
        "iQx": pairing(phi, 1j * Qx, g),
        "BQ": pairing(phi, BQ, g),
    }
    return RenormalizedDirection(phi, float(a), float(b), np.asarray(phi_tilde), defects)


@dataclass
class Frame:
    """Everything the decomposition needs about one degenerate soliton."""

    profile: SolitonProfile
    xi: np.ndarray
    direction: RenormalizedDirection
    BQ: np.ndarray = field(init=False)
    rho_coeff: float = field(init=False)
    J_Q: float = field(init=False)
    _Bphi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = self.grid
        self.xi = np.asarray(self.xi, dtype=float)
        self.BQ = apply_B(self.profile.Q, g, self.xi)
        self._Bphi = apply_B(self.phi, g, self.xi)
        self.rho_coeff = -pairing(self._Bphi, self.phi, g) / (2.0 * pairing(self.BQ, self.BQ, g))
        self.J_Q = J_functional(self.profile.Q, g, self.xi)

    @property
    def grid(self) -> GridSpec:
        return self.profile.grid

    @property
    def phi(self) -> np.ndarray:
        return self.direction.phi

    @property
    def Q(self) -> np.ndarray:
        return self.profile.Q

    def rho(self, lam):
        return self.rho_coeff * np.asarray(lam) ** 2

    def rho_dot(self, lam):
        return 2.0 * self.rho_coeff * np.asarray(lam)

    def compose(self, lam: float, eps=None, y: float = 0.0, gamma: float = 0.0) -> np.ndarray:
        """Inverse of the decomposition: u with u(x + y) e^{i gamma} = Q + lam phi + rho BQ + eps."""
        v = self.Q + lam * self.phi + self.rho(lam) * self.BQ
        if eps is not None:
            v = v + eps
        return shift(v * np.exp(-1j * gamma), -y, self.grid)


def make_frame(profile: SolitonProfile, xi, h: float | None = None) -> Frame:
    phi_t = tangent_vector(profile.params, profile.grid, xi, h)
    return Frame(profile, np.asarray(xi, dtype=float), renormalize_tangent(profile, phi_t, xi))


def rho(lam, frame: Frame):
    return frame.rho(lam)


def rho_tilde(lam: float, frame: Frame, max_iter: int = 50, lam_cap: float = 0.5) -> float:
    """Root of J(Q + lam phi + r BQ) = J(Q) nearest rho(lam), by Newton in r."""
    if abs(lam) > lam_cap:
        raise ModulationError(f"|lambda| = {abs(lam)} exceeds the cap {lam_cap}")
    if lam == 0:
        return 0.0
    g = frame.grid
    base = frame.Q + lam * frame.phi
    target = frame.J_Q
    tol = 1e-12 * abs(target)
    r = float(frame.rho(lam))
    for _ in range(max_iter):
        v = base + r * frame.BQ
        res = J_functional(v, g, frame.xi) - target
        if abs(res) < tol:
            return r
        slope = pairing(apply_B(v, g, frame.xi), frame.BQ, g)
        r -= res / slope
    raise ModulationError(f"rho_tilde Newton did not converge for lambda={lam}")


@dataclass(frozen=True)
class ModulationState:
    y: float
    gamma: float
    lam: float
    eps: np.ndarray
    eps_h1: float
    eps_BQ: float
    newton_iters: int
    residual_norm: float
    orthogonality: tuple
    converged: bool
    in_tube: bool

    @property
    def tube_exit(self) -> bool:
        return not (self.converged and self.in_tube)

    def as_dict(self) -> dict:
        return {"y": self.y, "gamma": self.gamma, "lambda": self.lam,
                "eps_h1": self.eps_h1, "eps_BQ": self.eps_BQ,
                "iters": self.newton_iters, "residual": self.residual_norm,
                "converged": self.converged, "in_tube": self.in_tube}


def _wrap_angle(a: float) -> float:
    """Map to (-pi, pi]."""
    w = np.mod(a + np.pi, 2 * np.pi) - np.pi
    return float(np.pi if w == -np.pi else w)


def _wrap_position(y: float, L: float) -> float:
    w = np.mod(y + 0.5 * L, L) - 0.5 * L
    return float(0.5 * L if w == -0.5 * L else w)


def align(u, profile: SolitonProfile, refine: bool = True) -> tuple[float, float]:
    """Coarse (y, gamma) making u(x + y) e^{i gamma} closest to Q.

    The modulus of the overlap int u(x + y) conj(Q(x)) dx is maximised over
    grid shifts (one circular cross-correlation), refined by a parabola
    through the peak; gamma then makes that overlap real positive.
    """
    g = profile.grid
    uh = np.fft.fft(u)
    qh = np.fft.fft(profile.Q)
    # corr[m] = sum_j u[j + m] conj(Q[j])
    corr = np.fft.ifft(uh * np.conj(qh))
    m = int(np.argmax(np.abs(corr)))
    y = m * g.dx
    if refine:
        a0, a1, a2 = (np.abs(corr[(m + s) % g.N]) for s in (-1, 0, 1))
        denom = a0 - 2 * a1 + a2
        if denom < 0:
            y += 0.5 * (a0 - a2) / denom * g.dx
    y = _wrap_position(y, g.L)
    ov = np.sum(shift(u, y, g) * np.conj(profile.Q))
    gamma = -np.angle(ov)
    return y, _wrap_angle(gamma)


def decompose(u, frame: Frame, seed=None, tube_radius: float | None = None,
              tol: float = 1e-11, max_iter: int = 50, fd_step: float = 1e-7) -> ModulationState:
    """Newton solve for (y, gamma, lam) making eps orthogonal to Q_x, iQ and phi.

    The Jacobian is refreshed each iteration by forward differences; steps
    are halved while the residual grows.  Divergence or an eps outside the
    tube is reported through ``converged`` / ``in_tube``, not raised.
    """
    g = frame.grid
    u = np.asarray(u, dtype=complex)
    Qx, iQ, phi = frame.profile.Qx, 1j * frame.Q, frame.phi
    tests = np.stack([Qx, iQ, phi])
    test_norms = np.sqrt(pairing(tests, tests, g))
    if tube_radius is None:
        tube_radius = 0.3 * h1_norm(frame.Q, g)
    uh = np.fft.fft(u)
    kk = 2.0 * np.pi * np.fft.fftfreq(g.N, d=g.dx)

    def eps_of(p):
        y, gam, lam = p
        ph = np.exp(1j * kk * y)
        ph[g.N // 2] = np.cos(kk[g.N // 2] * y)
        v = np.fft.ifft(uh * ph) * np.exp(1j * gam)
        return v - (frame.Q + lam * phi + frame.rho(lam) * frame.BQ)

    def resid(p):
        e = eps_of(p)
        return pairing(tests, e, g), e

    if seed is None:
        y0, g0 = align(u, frame.profile)
        v0 = shift(u, y0, g) * np.exp(1j * g0)
        lam0 = pairing(v0 - frame.Q, phi, g) / pairing(phi, phi, g)
        p = np.array([y0, g0, lam0], dtype=float)
    else:
        p = np.array(seed, dtype=float)
    F, eps = resid(p)

    def scaled(F, eps):
        e_norm = np.sqrt(pairing(eps, eps, g))
        return np.max(np.abs(F) / test_norms), e_norm

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        fmax, e_norm = scaled(F, eps)
        if fmax <= tol * max(e_norm, 1e-3):
            converged = True
            it -= 1
            break
        Jac = np.empty((3, 3))
        for j in range(3):
            dp = np.zeros(3)
            dp[j] = fd_step
            Jac[:, j] = (resid(p + dp)[0] - F) / fd_step
        try:
            step = np.linalg.solve(Jac, -F)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        fnorm = np.linalg.norm(F)
        while True:
            trial = p + t * step
            Ft, et = resid(trial)
            if np.linalg.norm(Ft) < fnorm or t < 1e-4:
                break
            t *= 0.5
        if np.linalg.norm(Ft) >= fnorm and t < 1e-4:
            p, F, eps = trial, Ft, et
            break
        p, F, eps = trial, Ft, et
        if np.max(np.abs(t * step)) < 1e-15:
            fmax, e_norm = scaled(F, eps)
            converged = fmax <= 1e3 * tol * max(e_norm, 1e-3)
            break
    else:
        fmax, e_norm = scaled(F, eps)
        converged = fmax <= tol * max(e_norm, 1e-3)

    e_h1 = h1_norm(eps, g)
    y = _wrap_position(p[0], g.L)
    gam = _wrap_angle(p[1])
    return ModulationState(
        y=y, gamma=gam, lam=float(p[2]), eps=eps, eps_h1=e_h1,
        eps_BQ=float(pairing(eps, frame.BQ, g)), newton_iters=it,
        residual_norm=float(np.linalg.norm(F)), orthogonality=tuple(float(f) for f in F),
        converged=bool(converged and np.all(np.isfinite(p))), in_tube=bool(e_h1 < tube_radius))


def check_eps_BQ(state: ModulationState, frame: Frame) -> float:
    return float(pairing(state.eps, frame.BQ, frame.grid))


# ---------------------------------------------------------------- coercivity

@dataclass(frozen=True)
class CoercivityEstimate:
    kappa: float
    min_three: float
    min_four: float
    minimizer: np.ndarray
    constraints: tuple
    asymmetry: float
    basis: np.ndarray = field(repr=False)


def assemble_hessian(profile: SolitonProfile, band: float = 0.5):
    """Real 2N x 2N matrices of S''(Q) and of the H^1 inner product.

    Coordinates are (Re eta_j, Im eta_j); the pairing then reads
    dx * (a . b).  The pointwise form is symmetric only through the product
    rule, which fails on grid-scale basis vectors, so asymmetry is measured
    on fields band-limited to ``band`` of the Nyquist wavenumber and the
    returned matrix is the symmetric part.

    Returns (H, G, asymmetry on the band, asymmetry on the full basis).
    """
    g = profile.grid
    p = profile.params
    N = g.N
    E = np.concatenate([np.eye(N), 1j * np.eye(N)]).astype(complex)
    LE = linearized_operator(E, profile.Q, g, p.omega, p.c, p.sigma)
    H = g.dx * np.concatenate([LE.real, LE.imag], axis=1)
    DE = spectral_derivative(E, g)
    GE = E - spectral_derivative(DE, g)
    G = g.dx * np.concatenate([GE.real, GE.imag], axis=1)
    skew = H - H.T
    asym_full = float(np.linalg.norm(skew) / np.linalg.norm(H))
    FE = np.fft.ifft(np.fft.fft(E, axis=1) * g.dealias_mask(band), axis=1)
    P = np.concatenate([FE.real, FE.imag], axis=1)
    asym_band = float(np.linalg.norm(P @ skew @ P.T) / np.linalg.norm(P @ H @ P.T))
    return 0.5 * (H + H.T), 0.5 * (G + G.T), asym_band, asym_full


def _as_real(v) -> np.ndarray:
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag])


def _as_complex(w) -> np.ndarray:
    n = len(w) // 2
    return w[:n] + 1j * w[n:]


def coercivity_estimate(frame: Frame, tol_sym: float = 1e-5) -> CoercivityEstimate:
    """Constrained lower bound of S''(Q)(eps, eps) / ||eps||_{H^1}^2.

    ``min_three`` is the minimum on the subspace orthogonal to iQ, Q_x, phi;
    ``min_four`` adds BQ.  ``kappa`` is the largest value <= ``min_four`` for
    which S''(eps, eps) >= kappa ||eps||^2 - <eps, BQ>^2 / kappa holds on the
    three-constraint subspace, found by bisection.
    """
    prof = frame.profile
    H, G, asym, _ = assemble_hessian(prof)
    if asym > tol_sym:
        raise ModulationError(f"assembled Hessian asymmetric on resolved modes: "
                              f"{asym:.2e} > {tol_sym:g}")
    C3 = np.stack([_as_real(1j * prof.Q), _as_real(prof.Qx), _as_real(frame.phi)], axis=1)
    Z = linalg.null_space(C3.T)
    Hr, Gr = Z.T @ H @ Z, Z.T @ G @ Z
    Lc = linalg.cholesky(Gr, lower=True)
    A = linalg.solve_triangular(Lc, linalg.solve_triangular(Lc, Hr, lower=True).T, lower=True).T
    A = 0.5 * (A + A.T)
    b = linalg.solve_triangular(Lc, Z.T @ _as_real(frame.BQ) * frame.grid.dx, lower=True)
    min_three = float(linalg.eigvalsh(A, subset_by_index=[0, 0])[0])

    # four constraints: restrict A to the complement of b
    bn = b / np.linalg.norm(b)
    P = np.eye(len(b)) - np.outer(bn, bn)
    A4 = P @ A @ P
    vals, vecs = linalg.eigh(A4)
    # the b direction itself is an artificial zero; skip it
    along_b = np.abs(vecs.T @ bn) > 0.5
    idx = int(np.nonzero(~along_b)[0][0])
    min_four = float(vals[idx])
    w = vecs[:, idx]
    minimizer = _as_complex(Z @ linalg.solve_triangular(Lc.T, w, lower=False))

    def holds(k):
        M = A + np.outer(b, b) / k
        return linalg.eigvalsh(M, subset_by_index=[0, 0])[0] >= k

    if min_four <= 0:
        kappa = float("nan")
    else:
        lo, hi = 0.0, min_four
        if holds(hi):
            lo = hi
        else:
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if holds(mid):
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-6 * min_four:
                    break
        kappa = lo
    return CoercivityEstimate(kappa, min_three, min_four, minimizer,
                              ("iQ", "Q_x", "phi", "BQ"), asym, Z)


def sample_constrained(frame: Frame, rng: np.random.Generator, n: int,
                       basis: np.ndarray | None = None) -> np.ndarray:
    """Random fields orthogonal to iQ, Q_x, phi (mix of rough and smooth)."""
    prof = frame.profile
    g = frame.grid
    if basis is None:
        C3 = np.stack([_as_real(1j * prof.Q), _as_real(prof.Qx), _as_real(frame.phi)], axis=1)
        basis = linalg.null_space(C3.T)
    out = np.empty((n, g.N), dtype=complex)
    for i in range(n):
        if i % 2:
            w = basis @ rng.standard_normal(basis.shape[1])
        else:
            width = rng.uniform(1.0, 8.0)
            env = np.exp(-((g.x - rng.uniform(-5, 5)) / width) ** 2)
            f = env * (rng.standard_normal() + 1j * rng.standard_normal()) \
                * np.exp(1j * rng.uniform(-3, 3) * g.x)
            f = f + rng.uniform(0, 2) * (rng.standard_normal() + 1j * rng.standard_normal()) * frame.BQ
            w = basis @ (basis.T @ _as_real(f))
        out[i] = _as_complex(w)
    return out


def coercivity_margin(eps, frame: Frame, kappa: float) -> float:
    """S''(eps, eps) - kappa ||eps||^2 + <eps, BQ>^2 / kappa (must be >= 0)."""
    p = frame.profile.params
    g = frame.grid
    s2 = action_hessian_form(frame.Q, eps, eps, g, p.omega, p.c, p.sigma)
    e = h1_norm(eps, g)
    eb = pairing(eps, frame.BQ, g)
    return s2 - kappa * e * e + eb * eb / kappa


# ---------------------------------------------------------- action landscape

@dataclass(frozen=True)
class CubicFit:
    lams: np.ndarray
    values: np.ndarray
    coeffs: np.ndarray  # c1..c5
    offset: float
    c3: float
    d3_over_6: float | None
    rel_gap: float | None
    fit_residual: float


def action_expansion_probe(frame: Frame, lams, eps=None, d3: float | None = None,
                           max_fit_residual: float = 1e-3) -> CubicFit:
    """Fit S(Q + lam phi + rho(lam) BQ [+ eps]) - S(Q) by c1 lam + ... + c5 lam^5.

    With ``eps`` the constant offset 1/2 S''(Q)(eps, eps) is removed before
    fitting.  Raises when the polynomial fit misses the data by more than
    ``max_fit_residual`` relative (the range left the small-amplitude regime).
    """
    p = frame.profile.params
    g = frame.grid
    lams = np.asarray(lams, dtype=float)
    S0 = action(frame.Q, g, p.omega, p.c, p.sigma)
    offset = 0.0
    if eps is not None:
        offset = 0.5 * action_hessian_form(frame.Q, eps, eps, g, p.omega, p.c, p.sigma)
    vals = []
    for lam in lams:
        v = frame.Q + lam * frame.phi + frame.rho(lam) * frame.BQ
        if eps is not None:
            v = v + eps
        vals.append(action(v, g, p.omega, p.c, p.sigma) - S0 - offset)
    vals = np.array(vals)
    V = np.stack([lams**j for j in range(1, 6)], axis=1)
    coeffs, *_ = np.linalg.lstsq(V, vals, rcond=None)
    fit_res = float(np.linalg.norm(V @ coeffs - vals) / max(np.linalg.norm(vals), 1e-300))
    if fit_res > max_fit_residual:
        raise ModulationError(f"quintic fit residual {fit_res:.2e}; lambda range too large")
    c3 = float(coeffs[2])
    gap = None if d3 is None else abs(c3 - d3 / 6) / abs(d3 / 6)
    return CubicFit(lams, vals, coeffs, offset, c3, None if d3 is None else d3 / 6, gap, fit_res)
