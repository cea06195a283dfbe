"""Uniform periodic grid, spectral calculus and the real L2 pairing.

The line is replaced by the torus [-L/2, L/2).  Every field is a plain
complex ``numpy`` array of length ``N`` sampled at the grid nodes; the grid
object carries the wavenumbers and quadrature weight needed to differentiate
and integrate such arrays.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class GridError(ValueError):
    """Raised for malformed grids, grid mismatches and bad field files."""


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid of ``N`` nodes on a box of full length ``L``."""

    L: float
    N: int
    _k: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.L > 0 and np.isfinite(self.L)):
            raise GridError(f"box length must be positive, got {self.L}")
        if self.N < 16 or self.N & (self.N - 1):
            raise GridError(f"N must be a power of two >= 16, got {self.N}")
        k = 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.dx)
        k[self.N // 2] = 0.0  # Nyquist mode dropped from odd-order derivatives
        k.setflags(write=False)
        object.__setattr__(self, "_k", k)

    @property
    def dx(self) -> float:
        return self.L / self.N

    @cached_property
    def x(self) -> np.ndarray:
        x = -0.5 * self.L + self.dx * np.arange(self.N)
        x.setflags(write=False)
        return x

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in FFT order, Nyquist entry set to zero."""
        return self._k

    @cached_property
    def k2(self) -> np.ndarray:
        """Squared wavenumbers in FFT order (Nyquist kept, used for the Laplacian)."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.dx)
        k2 = k * k
        k2.setflags(write=False)
        return k2

    def dealias_mask(self, fraction: float = 2.0 / 3.0) -> np.ndarray:
        kmax = np.pi / self.dx
        return np.abs(2.0 * np.pi * np.fft.fftfreq(self.N, d=self.dx)) < fraction * kmax

    def check(self, *fields):
        for f in fields:
            if np.shape(f)[-1] != self.N:
                raise GridError(f"field has {np.shape(f)[-1]} samples, grid has {self.N}")


def spectral_derivative(f, grid: GridSpec, order: int = 1) -> np.ndarray:
    """Fourier-multiplier derivative along the last axis.

    Odd orders use the wavenumbers with the Nyquist mode zeroed; even orders
    use the full ``-k**2`` multiplier so that applying the first derivative
    twice and asking for ``order=2`` agree on band-limited data away from
    the Nyquist mode.
    """
    f = np.asarray(f)
    grid.check(f)
    fh = np.fft.fft(f, axis=-1)
    if order == 1:
        fh *= 1j * grid.k
    elif order == 2:
        fh *= -grid.k2
    else:
        fh *= (1j * grid.k) ** order
    out = np.fft.ifft(fh, axis=-1)
    if np.isrealobj(f):
        return out.real
    return out


def integrate(f, grid: GridSpec):
    """Periodic trapezoid rule ``dx * sum(f)``."""
    f = np.asarray(f)
    grid.check(f)
    return grid.dx * np.sum(f, axis=-1)


def pairing(u, v, grid: GridSpec) -> float:
    """The real pairing <u, v> = Re int u conj(v) dx."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape[-1] != v.shape[-1]:
        raise GridError("pairing of fields on different grids")
    grid.check(u)
    return grid.dx * np.sum(u.real * v.real + u.imag * v.imag, axis=-1)


def h1_norm(u, grid: GridSpec) -> float:
    ux = spectral_derivative(u, grid)
    return float(np.sqrt(pairing(u, u, grid) + pairing(ux, ux, grid)))


def shift(f, y: float, grid: GridSpec) -> np.ndarray:
    """Return samples of ``f(x + y)`` via Fourier phase factors."""
    fh = np.fft.fft(f)
    kk = 2.0 * np.pi * np.fft.fftfreq(grid.N, d=grid.dx)
    phase = np.exp(1j * kk * y)
    # split the Nyquist mode symmetrically so real fields stay real
    phase[grid.N // 2] = np.cos(kk[grid.N // 2] * y)
    return np.fft.ifft(fh * phase)


def write_field_csv(path, u, grid: GridSpec):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "re", "im"])
        for xj, uj in zip(grid.x, np.asarray(u, dtype=complex)):
            w.writerow([repr(float(xj)), repr(float(uj.real)), repr(float(uj.imag))])


def read_field_csv(path) -> tuple[GridSpec, np.ndarray]:
    """Read an ``x,re,im`` field file and reconstruct its grid.

    The nodes must be ascending and uniformly spaced to 1e-12 relative; the
    box length is inferred as ``N * dx`` and the first node must sit at
    ``-L/2``.
    """
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["x", "re", "im"]:
        raise GridError(f"{path}: expected header x,re,im")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise GridError(f"{path}: non-numeric entry") from exc
    if data.ndim != 2 or data.shape[1] != 3:
        raise GridError(f"{path}: expected three columns")
    x = data[:, 0]
    N = len(x)
    steps = np.diff(x)
    dx = float(np.mean(steps))
    slack = 1e-12 * abs(dx) + 4 * np.finfo(float).eps * np.max(np.abs(x))
    if dx <= 0 or np.max(np.abs(steps - dx)) > slack:
        raise GridError(f"{path}: nodes not ascending with uniform spacing")
    grid = GridSpec(L=dx * N, N=N)
    if abs(x[0] - grid.x[0]) > 1e-9 * grid.L:
        raise GridError(f"{path}: first node {x[0]} is not -L/2 = {grid.x[0]}")
    return grid, data[:, 1] + 1j * data[:, 2]
