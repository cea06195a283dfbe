import numpy as np
import pytest

from gdnls.acceptance import _orthogonal_noise
from gdnls.dynamics import (SimConfig, build_unstable_data, centered_diff, eps_equation_residual,
                            evolve, exact_soliton, first_order_term, higher_order_term,
                            nonlinearity, orbital_distance, orbital_distance_lattice,
                            parameter_rates, quadratic_form_gap, quadratic_term, run_instability,
                            track_modulation, virial_coefficients, virial_series,
                            xi_identity_gap)
from gdnls.functionals import J_functional, action_hessian_form, linearized_operator
from gdnls.grid import h1_norm, pairing, shift, spectral_derivative
from gdnls.modulation import decompose

from conftest import smooth_field


def _cfg(ctx, **kw):
    base = dict(L=ctx.grid.L, N=ctx.grid.N, params=ctx.degeneracy.params)
    base.update(kw)
    return SimConfig(**base)


def test_config_validation(ctx):
    for bad in (dict(dt=0), dict(dt=0.1, T=0.01), dict(tol_mass=0), dict(dealias=1.5),
                dict(sample_dt=1e-4), dict(store_every=0), dict(lambda0=-1)):
        with pytest.raises(ValueError):
            _cfg(ctx, **bad)


def test_nonlinearity_basics(ctx):
    g = ctx.grid
    assert not np.any(nonlinearity(np.zeros(g.N, complex), g, 1.5))
    f = nonlinearity(np.exp(-g.x**2), g, 1.5)
    assert np.max(np.abs(f.real)) == 0.0
    p, Q = ctx.profile.params, ctx.profile.Q
    lhs = (spectral_derivative(Q, g, 2) - p.omega * Q - 1j * p.c * spectral_derivative(Q, g)
           + nonlinearity(Q, g, p.sigma))
    assert np.sqrt(pairing(lhs, lhs, g) / pairing(Q, Q, g)) < 1e-8


def test_zero_data_stays_zero(ctx):
    tr = evolve(_cfg(ctx, T=0.5), np.zeros(ctx.grid.N, complex))
    assert not np.any(tr.fields[-1])


@pytest.fixture(scope="module")
def soliton_runs(ctx):
    out = {}
    for dt in (1e-3, 5e-4):
        tr = evolve(_cfg(ctx, dt=dt, T=5.0, sample_dt=0.1, tol_mass=1.0), ctx.profile.Q)
        err = max(h1_norm(u - exact_soliton(ctx.profile, t), ctx.grid)
                  for t, u in zip(tr.field_times, tr.fields))
        out[dt] = (tr, err)
    return out


@pytest.mark.xfail(strict=True, reason="IF-RK4 error constant gives ~2.5e-5 at dt=1e-3; "
                   "the bound is met from dt=5e-4 on (see the next test)")
def test_soliton_transport_at_default_step(soliton_runs):
    assert soliton_runs[1e-3][1] < 1e-6


def test_soliton_transport_converges_fourth_order(soliton_runs, ctx):
    (tr1, e1), (tr2, e2) = soliton_runs[1e-3], soliton_runs[5e-4]
    assert e2 < 2e-6
    assert 3.5 < np.log2(e1 / e2) < 4.5
    assert max(orbital_distance(u, ctx.profile) for u in tr2.fields) < 1e-6
    assert tr1.drift()["mass_rel"] < 1e-8
    assert tr2.drift_ok(_cfg(ctx))


def test_cfl_guard_halves_step(ctx):
    tr = evolve(_cfg(ctx, dt=0.05, T=0.1, sample_dt=0.05), ctx.profile.Q)
    assert tr.dt_final < 0.05 and tr.notes
    assert tr.dt_final <= 0.5 * ctx.grid.dx / np.max(np.abs(ctx.profile.Q)) ** 3


def test_mass_monitor_halts(ctx):
    u0 = build_unstable_data(ctx.frame, 0.05)
    tr = evolve(_cfg(ctx, dt=1e-2, T=1.0, sample_dt=0.05, tol_mass=1e-15), u0)
    assert tr.halted and "mass drift" in tr.halted


def test_unstable_data(ctx):
    fr = ctx.frame
    assert np.array_equal(build_unstable_data(fr, 0.0), fr.Q)
    u0 = build_unstable_data(fr, 0.05)
    assert abs(J_functional(u0, ctx.grid, fr.xi) - fr.J_Q) < 1e-12 * abs(fr.J_Q)
    st = decompose(u0, fr)
    assert abs(st.lam - 0.05) < 1e-8 and st.eps_h1 < 1e-4


def test_orbital_distance_oracles(ctx, rng):
    prof, g = ctx.profile, ctx.grid
    assert orbital_distance(shift(prof.Q, -1.2, g) * np.exp(0.4j), prof) < 1e-10
    assert np.isclose(orbital_distance(np.zeros(g.N, complex), prof), h1_norm(prof.Q, g))
    u = shift(prof.Q + 1e-3 * smooth_field(rng, g), 2.3, g) * np.exp(-1.1j)
    d = orbital_distance(u, prof)
    lat, _, _ = orbital_distance_lattice(u, prof)
    assert abs(d - lat) < 1e-6
    assert d <= lat + 1e-12


def test_unperturbed_modulation_stays_put(ctx):
    # at dt=1e-3 the time-stepping error alone pushes lambda to ~2.5e-6 by T=5
    tr = evolve(_cfg(ctx, dt=5e-4, T=5.0, sample_dt=0.05, tol_mass=1.0), ctx.profile.Q)
    series = track_modulation(tr.field_times, tr.fields, ctx.frame)
    assert series.t0 is None
    assert np.max(np.abs(series.lam)) < 1e-6
    rates = parameter_rates(series, ctx.profile.params.c, ctx.profile.params.omega)
    assert max(rates.max_rates()) < 1e-5


def test_eps_equation_on_exact_solution(ctx):
    fr = ctx.frame
    dt = 0.01
    s1 = decompose(exact_soliton(ctx.profile, 1.0), fr)
    s2 = decompose(exact_soliton(ctx.profile, 1.0 + dt), fr, seed=(s1.y + fr.profile.params.c * dt,
                                                                   s1.gamma - fr.profile.params.omega * dt, s1.lam))
    assert eps_equation_residual(1.0, s1, 1.0 + dt, s2, fr).total < 1e-6


def test_remainder_bookkeeping_and_forms(ctx, rng):
    prof, g, p = ctx.profile, ctx.grid, ctx.profile.params
    eta, psi = 0.05 * smooth_field(rng, g), smooth_field(rng, g)
    total = nonlinearity(prof.Q + eta, g, p.sigma) - nonlinearity(prof.Q, g, p.sigma)
    parts = (first_order_term(prof.Q, eta, g, p.sigma) + quadratic_term(prof.Q, eta, g, p.sigma)
             + higher_order_term(prof.Q, eta, g, p.sigma))
    assert np.max(np.abs(total - parts)) < 1e-13 * np.max(np.abs(total))
    lhs = pairing(linearized_operator(eta, prof.Q, g, p.omega, p.c, p.sigma), psi, g)
    rhs = action_hessian_form(prof.Q, eta, psi, g, p.omega, p.c, p.sigma)
    assert abs(lhs - rhs) < 1e-10 * abs(rhs)
    assert quadratic_form_gap(prof, eta, psi) < 1e-10
    # R~ is cubic: halving eta cuts it about eightfold
    r1 = higher_order_term(prof.Q, eta, g, p.sigma)
    r2 = higher_order_term(prof.Q, 0.5 * eta, g, p.sigma)
    assert 6 < np.sqrt(pairing(r1, r1, g) / pairing(r2, r2, g)) < 10


def test_virial_coefficients(ctx):
    vc = virial_coefficients(ctx.profile, ctx.frame.phi)
    assert vc.system_residual() < 1e-12
    assert xi_identity_gap(vc, ctx.frame) < 1e-10
    zero = virial_coefficients(ctx.profile, np.zeros(ctx.grid.N, complex))
    assert zero.alpha == 0 and zero.beta == 0


@pytest.fixture(scope="module")
def short_unstable_run(ctx):
    cfg = _cfg(ctx, dt=5e-4, T=4.0, sample_dt=0.02, lambda0=0.05)
    return run_instability(cfg, ctx.frame, ctx.degeneracy.d3, ctx.coercivity.kappa)


def test_short_unstable_run_bounds(short_unstable_run):
    v = short_unstable_run.verdict
    assert v["t0"] is None and v["drift_ok"]
    assert v["lt_bound_ok"] and v["eet_bound_ok"]
    assert v["Idot_negative"] and v["Idot_ratio_ok"]
    assert v["virial_decrease_ok"]


def test_rates_and_reversal(short_unstable_run, ctx):
    s = short_unstable_run.series
    p = ctx.profile.params
    C1 = parameter_rates(s, p.c, p.omega).C
    C2 = parameter_rates(s.subsample(2), p.c, p.omega).C
    assert np.isfinite(C1) and abs(C2 - C1) <= 0.2 * C1
    r = s.reversed()
    assert np.allclose(centered_diff(r.lam, r.times), -centered_diff(s.lam, s.times)[::-1], atol=1e-12)


def test_virial_of_zero_eps(short_unstable_run):
    s = short_unstable_run.series
    from dataclasses import replace
    blank = replace(s, eps=np.zeros_like(s.eps))
    vs = virial_series(blank, short_unstable_run.coeffs, short_unstable_run.d3)
    assert not np.any(vs.I)


def test_eps_equation_converges_with_sampling(ctx):
    fr = ctx.frame
    u0 = build_unstable_data(fr, 0.05)
    res = []
    for h in (0.02, 0.01):
        tr = evolve(_cfg(ctx, dt=5e-4, T=2 * h, sample_dt=h), u0)
        s = [decompose(u, fr) for u in tr.fields[:2]]
        res.append(eps_equation_residual(0.0, s[0], h, s[1], fr).total)
    assert res[1] < 0.5 * res[0]


def test_orthogonal_noise_helper(ctx, rng):
    fr, g = ctx.frame, ctx.grid
    e = _orthogonal_noise(fr, rng, 0.3)
    assert np.isclose(h1_norm(e, g), 0.3)
    for t in (fr.profile.Qx, 1j * fr.Q, fr.phi):
        assert abs(pairing(e, t, g)) < 1e-12
