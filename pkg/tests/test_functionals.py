import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdnls.functionals import (J_functional, StencilError, action, action_gradient,
                               action_hessian_form, action_third_form, apply_B, d_gradient,
                               d_surface, d_third_directional, d_value, energy, linearized_operator,
                               mass, momentum, scaling_K)
from gdnls.grid import GridSpec, pairing
from gdnls.soliton import SolitonParams, build_profile, tangent_vector

from conftest import smooth_field

G = GridSpec(40.0, 512)
P = SolitonParams(1.5, 1.0, 0.3)


def test_zero_field():
    z = np.zeros(G.N, dtype=complex)
    assert mass(z, G) == 0 and momentum(z, G) == 0 and energy(z, G, 1.5) == 0
    assert scaling_K(z, G, 1.0, 0.3, 1.5) == 0
    assert not np.any(action_gradient(z, G, 1.0, 0.3, 1.5))


def test_real_field_has_no_momentum():
    assert abs(momentum(np.exp(-G.x**2) * (1 + G.x), G)) < 1e-15


def test_scaling_K_vanishes_on_profile(profile0):
    p = profile0.params
    K = scaling_K(profile0.Q, profile0.grid, p.omega, p.c, p.sigma)
    assert abs(K) < 1e-9 * mass(profile0.Q, profile0.grid)


def test_scaling_K_is_scaling_derivative(rng):
    u = smooth_field(rng, G)
    t = 1e-4
    fd = (action((1 + t) * u, G, 1.0, 0.3, 1.5) - action((1 - t) * u, G, 1.0, 0.3, 1.5)) / (2 * t)
    assert abs(fd - scaling_K(u, G, 1.0, 0.3, 1.5)) < 1e-8 * max(1.0, abs(fd))


def test_J_and_B(rng):
    u = smooth_field(rng, G)
    assert np.isclose(J_functional(u, G, (1, 0)), mass(u, G))
    assert np.array_equal(apply_B(u, G, (1, 0)), u)
    xi = rng.standard_normal(2)
    assert abs(pairing(apply_B(u, G, xi), u, G) - 2 * J_functional(u, G, xi)) < 1e-12 * (1 + mass(u, G))


def test_gradient_vanishes_on_profile(profile0):
    p, g = profile0.params, profile0.grid
    r = action_gradient(profile0.Q, g, p.omega, p.c, p.sigma)
    assert np.sqrt(pairing(r, r, g) / pairing(profile0.Q, profile0.Q, g)) < 1e-8


def test_gradient_directional_second_order(rng):
    u, h = smooth_field(rng, G), smooth_field(rng, G)
    grad = pairing(action_gradient(u, G, 1.0, 0.3, 1.5), h, G)

    def fd(t):
        return (action(u + t * h, G, 1.0, 0.3, 1.5) - action(u - t * h, G, 1.0, 0.3, 1.5)) / (2 * t)
    e1, e2 = abs(fd(1e-2) - grad), abs(fd(5e-3) - grad)
    assert 3.5 < e1 / e2 < 4.5


def test_hessian_form_matches_operator_and_second_difference(rng):
    u, h, g = (smooth_field(rng, G) for _ in range(3))
    s2 = action_hessian_form(u, h, g, G, 1.0, 0.3, 1.5)
    assert np.isclose(pairing(linearized_operator(h, u, G, 1.0, 0.3, 1.5), g, G), s2, rtol=1e-12)

    def fd(t):
        S = lambda v: action(v, G, 1.0, 0.3, 1.5)  # noqa: E731
        return (S(u + t * h) - 2 * S(u) + S(u - t * h)) / t**2
    exact = action_hessian_form(u, h, h, G, 1.0, 0.3, 1.5)
    e1, e2 = abs(fd(2e-2) - exact), abs(fd(1e-2) - exact)
    assert 3.0 < e1 / e2 < 5.0


def test_null_space_of_hessian(ctx, rng):
    prof, g, p = ctx.profile, ctx.grid, ctx.profile.params
    psi = smooth_field(rng, g)
    scale = np.sqrt(pairing(prof.Q, prof.Q, g) * pairing(psi, psi, g))
    for v in (1j * prof.Q, prof.Qx):
        assert abs(action_hessian_form(prof.Q, v, psi, g, p.omega, p.c, p.sigma)) < 1e-8 * scale


def test_tangent_identity(ctx, rng):
    dd, prof, g = ctx.degeneracy, ctx.profile, ctx.grid
    p = prof.params
    phi_t = tangent_vector(p, g, dd.xi)
    BQ = apply_B(prof.Q, g, dd.xi)
    for _ in range(5):
        psi = smooth_field(rng, g)
        lhs = action_hessian_form(prof.Q, phi_t, psi, g, p.omega, p.c, p.sigma)
        rhs = -pairing(BQ, psi, g)
        assert abs(lhs - rhs) <= 1e-4 * abs(rhs)


def test_third_form_symmetry_and_linearity(ctx, rng):
    prof, g, s = ctx.profile, ctx.grid, ctx.sigma
    for _ in range(5):
        f, h, k = (smooth_field(rng, g) for _ in range(3))
        vals = [action_third_form(prof.Q, *t, g, s)
                for t in ((f, h, k), (f, k, h), (h, f, k), (h, k, f), (k, f, h), (k, h, f))]
        assert max(vals) - min(vals) < 1e-10 * max(abs(v) for v in vals)
        assert np.isclose(action_third_form(prof.Q, 2 * f, h, k, g, s), 2 * vals[0], rtol=1e-13)


def test_third_form_is_derivative_of_hessian(ctx, rng):
    prof, g, p = ctx.profile, ctx.grid, ctx.profile.params
    f, h, k = (smooth_field(rng, g) for _ in range(3))
    t = 1e-4
    fd = (action_hessian_form(prof.Q + t * f, h, k, g, p.omega, p.c, p.sigma)
          - action_hessian_form(prof.Q - t * f, h, k, g, p.omega, p.c, p.sigma)) / (2 * t)
    exact = action_third_form(prof.Q, f, h, k, g, p.sigma)
    assert abs(fd - exact) < 1e-6 * max(1.0, abs(exact))


def test_d_gradient_matches_differences_of_d(grid):
    h = 1e-3
    grad = d_gradient(P, grid)
    dw = (d_value(P.replace(omega=1 + h), grid) - d_value(P.replace(omega=1 - h), grid)) / (2 * h)
    dc = (d_value(P.replace(c=0.3 + h), grid) - d_value(P.replace(c=0.3 - h), grid)) / (2 * h)
    assert np.allclose(grad, [dw, dc], rtol=1e-6)


def test_d_surface_symmetry(grid):
    surf = d_surface(SolitonParams(1.5, 1.0, 0.0), grid)
    assert surf.symmetry_defect < 1e-5 * np.linalg.norm(surf.hessian)


def test_det_vanishes_on_degenerate_speed(ctx):
    dd = ctx.degeneracy
    det0 = abs(d_surface(dd.params, ctx.grid).det)
    for dz in (-0.1, 0.1):
        p = dd.params.replace(c=2 * (dd.z0 + dz))
        assert abs(d_surface(p, ctx.grid).det) >= 10 * det0


def test_stencil_rejects_inadmissible_points():
    near = SolitonParams(1.5, 1.0, 1.9)
    with pytest.raises(StencilError):
        d_surface(near, GridSpec(160.0, 4096), h=0.1)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=10, max_size=10), st.floats(0.1, 3), st.floats(-1, 1))
def test_third_difference_exact_on_cubics(coef, x1, x2):
    a = coef

    def cubic(w, c):
        return (a[0] + a[1] * w + a[2] * c + a[3] * w * w + a[4] * w * c + a[5] * c * c
                + a[6] * w**3 + a[7] * w * w * c + a[8] * w * c * c + a[9] * c**3)
    xi = np.array([x1, x2]) / np.hypot(x1, x2)
    exact = 6 * (a[6] * xi[0] ** 3 + a[7] * xi[0] ** 2 * xi[1] + a[8] * xi[0] * xi[1] ** 2
                 + a[9] * xi[1] ** 3)
    got = d_third_directional(P, G, xi, h=0.05, d_func=cubic)
    assert abs(got - exact) < 1e-8 * (1 + sum(abs(c) for c in a))
    assert d_third_directional(P, G, (0.0, 0.0)) == 0.0
