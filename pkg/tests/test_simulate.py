import math

import numpy as np
import pytest

from implosion import params, simulate as sm
from implosion.simulate import SimState, VacuumError


def test_unperturbed_init_is_the_dampened_profile(dampened):
    s = sm.init(dampened, Z_out=20.0, n=500)
    rho, psi = sm.profile_fields(dampened, s.grid, 0.0)
    assert np.array_equal(s.rho_T, rho) and np.array_equal(s.Psi_T, psi)
    assert s.tau == 0.0 and s.grid[-1] == 20.0


def test_small_bump_is_small(dampened):
    base = sm.init(dampened, Z_out=20.0, n=500)
    s = sm.init(dampened, perturbation={"rho": dict(amp=1e-3, center=1.0, width=0.5)}, Z_out=20.0, n=500)
    rel = np.abs(s.rho_T - base.rho_T) / base.rho_T
    assert 0 < rel.max() < 1e-2
    assert np.all(s.rho_T[s.grid >= 1.5] == base.rho_T[s.grid >= 1.5])


def test_vacuum_is_rejected(dampened):
    with pytest.raises(VacuumError):
        sm.init(dampened, perturbation={"rho": dict(amp=-10.0, center=1.0, width=0.5)}, Z_out=20.0, n=500)


def test_bump_is_compact():
    Z = np.linspace(0, 3, 3001)
    b = sm.bump(Z, 2.0, 1.0, 0.5)
    assert b[1000] == 2.0
    assert np.all(b[np.abs(Z - 1) >= 0.5] == 0) and np.all(b[np.abs(Z - 1) < 0.5] > 0)


def test_profile_residual_is_second_order(curve):
    res = [sm.residual_norm(sm.init(curve, Z_out=10.0, n=n)) for n in (200, 400, 800, 1600)]
    slopes = np.log2(np.array(res[:-1]) / res[1:])
    assert np.all(np.abs(slopes[1:] - 2) < 0.1), slopes


def test_inviscid_has_no_viscous_term(p3):
    p = p3.with_speed(1.2)
    Z = np.linspace(0, 1, 11)
    assert sm.viscous_term(np.ones(11), Z ** 2, Z, 0.1, p) is None


def test_rigid_quadratic_state_closed_form(p3):
    # rho = c, Psi = a Z^2 + k is differentiated exactly by every stencil
    p = p3.with_speed(1.2)
    Z = np.linspace(0, 5, 201)
    c, a, k = 0.7, -0.3, 0.25
    s = SimState(0.0, Z, np.full_like(Z, c), a * Z ** 2 + k, p)
    drho, dpsi = sm.rhs(s)
    ex_rho = -c * 2 * a * p.d - 0.5 * p.ell * (p.r - 1) * c
    ex_psi = -(4 * a * a * Z ** 2 + (p.r - 2) * (a * Z ** 2 + k) + 2 * a * Z ** 2 + c ** (p.p - 1))
    assert np.max(np.abs(drho - ex_rho)) < 1e-10
    assert np.max(np.abs(dpsi - ex_psi)) < 1e-10


def test_viscous_term_quartic():
    p = params.derive(d=3, gamma=2.0, mu=0.3, mu_prime=0.1, regime="NavierStokes", r=1.2)
    Z = np.linspace(0, 2, 2001)
    h = Z[1] - Z[0]
    psi = Z ** 4
    f1, f2 = sm.derivatives(psi, h)
    lap = sm.laplacian(psi, f1, f2, Z, p.d)
    F = sm.viscous_term(np.ones_like(Z), lap, Z, h, p)
    coef = 2.0 ** (p.gamma / (p.gamma - 1)) * (p.mu + p.mu_prime)
    exact = coef * (12 + 4 * (p.d - 1)) * Z ** 2
    assert np.max(np.abs(F - exact)) < 1e-4 * np.max(exact)


def test_gauge_shift_leaves_density_and_velocity(curve):
    s = sm.init(curve, Z_out=10.0, n=200)
    C = 0.5
    t = s.copy()
    t.Psi_T = t.Psi_T + C
    a, _ = sm.run(s, 0.5)
    b, _ = sm.run(t, 0.5)
    assert np.max(np.abs(a.final.rho_T - b.final.rho_T)) < 1e-12
    assert np.max(np.abs(a.final.u_T - b.final.u_T)) < 1e-12
    shift = b.final.Psi_T - a.final.Psi_T
    assert np.max(np.abs(shift / (C * math.exp((2 - curve.r) * 0.5)) - 1)) < 1e-6


def test_b_squared_decay(curve):
    s = sm.init(curve, Z_out=10.0, n=100)
    traj, diag = sm.run(s, 0.3, cadence=0.1)
    e = curve.params.e
    for tau, b2 in zip(diag.tau, diag.b2):
        assert abs(b2 - math.exp(-2 * e * tau)) < 1e-14 * max(1.0, b2)
    assert diag.status == "done" and abs(diag.tau[-1] - 0.3) < 1e-12


def test_step_underflow_stops_cleanly(curve):
    s = sm.init(curve, Z_out=10.0, n=100)
    _, diag = sm.run(s, 0.3, dt_min=1.0)
    assert diag.status.startswith("step-underflow")


def test_weighted_norms_finite(dampened):
    s = sm.init(dampened, perturbation={"psi": dict(amp=1e-3, center=1.0, width=0.5)}, Z_out=20.0, n=400)
    _, diag = sm.run(s, 0.2, cadence=0.1, dampened=dampened, norms=True)
    for k in (0, 1, 2):
        v = np.array(diag.norms[k])
        assert np.all(np.isfinite(v)) and np.all(v >= 0)
    assert np.all(np.array(diag.norms[0]) <= np.array(diag.norms[2]))
    assert diag.norms[0][0] > 0


def test_time_conventions():
    r = 1.2
    assert sm.time_to_blowup(0.0, r) == pytest.approx(2 / r, rel=1e-15)
    assert sm.time_to_blowup(1.0, r, "hat") == pytest.approx(math.exp(-r), rel=1e-15)
    assert sm.time_to_blowup(1.0, r, "physical") == pytest.approx(2 * math.exp(-r), rel=1e-15)
    with pytest.raises(ValueError):
        sm.time_to_blowup(1.0, r, "other")


def test_growth_ratio_of_pure_exponential():
    taus = np.linspace(0, 3, 31)
    dev = 1e-3 * np.exp(1.1 * taus)
    assert sm.growth_ratio(dev, None, taus, 1.1) == pytest.approx(1.0, rel=1e-12)


def test_field_difference_needs_matching_snapshots(curve):
    a = sm.init(curve, Z_out=10.0, n=100)
    ta, _ = sm.run(a, 0.2, snapshot_cadence=0.1)
    tb, _ = sm.run(a, 0.2, snapshot_cadence=0.05)
    with pytest.raises(sm.SimulationError):
        sm.field_difference(ta, tb, curve.Z2)
    taus, diff = sm.field_difference(ta, ta, curve.Z2)
    assert np.all(diff == 0) and len(taus) == 3


# ---------------------------------------------------------------- physical variables

def test_rate_exponents(physical, curve):
    rep = sm.physical_rates(physical, curve.params)
    p = curve.params
    assert abs(rep.exponent_u + (p.r - 1) / p.r) < 1e-3
    assert abs(rep.exponent_rho + p.ell * (p.r - 1) / p.r) < 1e-3


def test_fixed_x_limit(physical, curve):
    rep = sm.physical_rates(physical, curve.params)
    near = rep.T_minus_t < 1e-4
    for lim in (rep.limit_rho, rep.limit_u):
        assert np.all(np.isfinite(lim))
        assert np.ptp(lim[near]) < 1e-3 * np.abs(lim[near]).max()


def test_exact_fields_blowup_time(physical, curve):
    with pytest.raises(ValueError):
        sm.exact_fields(physical, curve.params, 1.0, 1.0, np.array([0.5]))


def test_fv_first_order(physical, curve):
    res, ratios = sm.convergence_study(physical, curve.params, 0.0, 0.5, 0.5, 2.0)
    assert all(1.7 <= q <= 2.3 for q in ratios), ratios
    for c in res:
        assert c.mass_defect < 1e-10 * abs(c.flux_integral)


def test_fv_zero_interval_is_interpolation_only(physical, curve):
    c = sm.physical_check(physical, curve.params, 0.3, 0.3, (0.5, 2.0, 200))
    assert c.steps == 0 and c.mass_change == 0.0
    c2 = sm.physical_check(physical, curve.params, 0.3, 0.3, (0.5, 2.0, 400))
    assert c.L1 < 1e-4 and 3.5 < c.L1 / c2.L1 < 4.5


def test_fv_window_validation(physical, curve):
    with pytest.raises(ValueError):
        sm.physical_check(physical, curve.params, 0.0, 0.1, (0.0, 1.0, 10))
    with pytest.raises(ValueError):
        sm.physical_check(physical, curve.params, 0.0, 1.0, (0.5, 1.0, 10))


def test_snapshots_land_on_their_cadence(curve):
    s = sm.init(curve, Z_out=10.0, n=100)
    traj, _ = sm.run(s, 0.5, cadence=0.1, snapshot_cadence=0.25)
    assert [t for t, *_ in traj.snapshots] == pytest.approx([0.0, 0.25, 0.5], abs=1e-12)
