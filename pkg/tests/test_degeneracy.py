import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import simpson

from gdnls.degeneracy import (DegeneracyError, F_scale, F_sigma, degenerate_params, find_z0,
                              null_vector, orient_xi)
from gdnls.functionals import d_surface, d_third_identity
from gdnls.soliton import tangent_vector


def F_simpson(z, sigma, n=600_001, ymax=60.0):
    y = np.linspace(0.0, ymax, n)
    ch = np.cosh(y)
    p = 1.0 / sigma
    i1 = simpson((ch - z) ** (-p), x=y)
    i2 = simpson((ch - z) ** (-p - 1) * (z * ch - 1), x=y)
    return (sigma - 1) ** 2 * i1 * i1 - i2 * i2


def test_F_at_sigma_one_is_minus_one():
    assert abs(F_sigma(0.0, 1.0) + 1.0) < 1e-12


def test_F_matches_simpson_oracle():
    coarse = F_simpson(0.0, 1.5, n=300_001)
    fine = F_simpson(0.0, 1.5)
    assert abs(coarse - fine) < 1e-11  # oracle itself converged
    assert abs(F_sigma(0.0, 1.5) - fine) < 1e-9


def test_root_bracket_and_oracle():
    z0 = find_z0(1.5)
    assert F_sigma(z0 - 0.05, 1.5) * F_sigma(z0 + 0.05, 1.5) < 0
    # independent root: bisection on the Simpson oracle
    a, b = z0 - 0.05, z0 + 0.05
    fa = F_simpson(a, 1.5, n=200_001)
    for _ in range(40):
        m = 0.5 * (a + b)
        fm = F_simpson(m, 1.5, n=200_001)
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    assert abs(z0 - 0.5 * (a + b)) < 1e-8
    assert abs(F_sigma(z0, 1.5)) < 1e-10 * F_scale(z0, 1.5)


def test_z0_curve_decreasing_and_inside():
    sig = np.linspace(1.05, 1.95, 20)
    z = np.array([find_z0(s) for s in sig])
    assert np.all(np.diff(z) < 0)
    assert np.all((z > -1) & (z < 1))


@pytest.mark.parametrize("omega", [0.25, 1.0, 3.0])
def test_params_admissible_and_omega_scaling(omega):
    p = degenerate_params(1.5, omega)
    assert 4 * p.omega - p.c**2 > 0
    assert np.isclose(p.c / np.sqrt(omega), degenerate_params(1.5, 1.0).c, rtol=1e-14)


def test_find_z0_rejects_sigma():
    with pytest.raises(ValueError):
        find_z0(2.0)


def test_null_vector_on_diagonals():
    assert np.allclose(null_vector(np.diag([0.0, 5.0])), [1, 0])
    assert np.allclose(null_vector(np.diag([3.0, 0.0])), [0, 1])
    with pytest.raises(DegeneracyError):
        null_vector(np.diag([1.0, 2.0]))


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0.5, 10), st.floats(-1e-4, 1e-4))
def test_null_vector_rotated(angle, big, small):
    R = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    H = R @ np.diag([small, big]) @ R.T
    v = null_vector(H)
    assert np.isclose(np.linalg.norm(v), 1.0)
    assert abs(abs(v @ R[:, 0]) - 1) < 1e-8


def test_orientation():
    xi = np.array([0.6, 0.8])
    v, d = orient_xi(xi, -2.0)
    assert np.array_equal(v, xi) and d == -2.0
    v, d = orient_xi(xi, 2.0)
    assert np.array_equal(v, -xi) and d == -2.0
    with pytest.raises(DegeneracyError):
        orient_xi(xi, 1e-12)


def test_analysis_end_to_end(ctx):
    dd = ctx.degeneracy
    assert dd.d3 < 0
    H = d_surface(dd.params, ctx.grid).hessian
    assert np.linalg.norm(H @ dd.xi) / np.linalg.norm(H) < 1e-3
    ident = d_third_identity(ctx.profile, tangent_vector(dd.params, ctx.grid, dd.xi), dd.xi)
    assert abs(ident - dd.d3) < 0.02 * abs(dd.d3)
    # halving the stencil step barely moves the value
    assert abs(dd.d3_half_step - dd.d3) < 0.01 * abs(dd.d3)
