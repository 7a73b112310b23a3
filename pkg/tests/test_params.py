import math

import mpmath as mp
import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from implosion import params
from implosion.params import DegenerateTriplePoint, InvalidStateLaw, ParameterError


def test_d3_gamma2_closed_forms():
    p = params.derive(d=3, gamma=2.0)
    assert p.ell == 2.0 and p.p == 3.0
    mp.mp.dps = 40
    assert abs(p.r_star - float(mp.mpf(5) / (2 + mp.sqrt(3)))) < 1e-15
    assert abs(p.r_plus - float(1 + mp.mpf(2) / (1 + mp.sqrt(2)) ** 2)) < 1e-15
    # ell < d selects r_star
    assert p.r_eye == p.r_star


def test_monoatomic_gas_is_degenerate():
    with pytest.raises(DegenerateTriplePoint):
        params.derive(d=3, gamma=5.0 / 3.0)


def test_limits_coincide_at_ell_equal_d():
    ell, d = sp.symbols("ell d", positive=True)
    rs = (d + ell) / (ell + sp.sqrt(d))
    rp = 1 + (d - 1) / (1 + sp.sqrt(ell)) ** 2
    assert sp.simplify((rs - rp).subs(ell, d)) == 0
    assert sp.simplify(rs.subs({ell: 3, d: 3}) - (3 - sp.sqrt(3))) == 0
    for eps in (1e-3, -1e-3, 1e-5, -1e-5):
        assert abs(params.r_star(3, 3 + eps) - (3 - math.sqrt(3))) < 2 * abs(eps)
        assert abs(params.r_plus(3, 3 + eps) - (3 - math.sqrt(3))) < 2 * abs(eps)
    assert abs(params.r_star(3, 3.0) - params.r_plus(3, 3.0)) < 1e-12


def test_r_eye_branch_switch():
    assert params.derive(d=3, ell=4.0).r_eye == params.r_plus(3, 4.0)
    assert params.derive(d=2, ell=1.0).r_eye == params.r_star(2, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.05, 6.0), st.floats(1.0001, 3.0))
def test_compat_exponent_gamma_form(gamma, r):
    p = params.derive(d=3, gamma=gamma)
    e = params.compat_exponent(p, r)
    other = ((1 + gamma) * r - 2 * gamma) / (2 * (gamma - 1))
    assert abs(e - other) <= 1e-12 * max(1.0, abs(other))
    assert abs(p.p - 1 - 4 / p.ell) < 1e-14 and abs(p.p - 1 - 2 * (gamma - 1)) < 1e-14


def test_compat_exponent_examples():
    p = params.derive(d=3, ell=2.0)
    assert params.compat_exponent(p, 4.0 / 3.0) == pytest.approx(0.0, abs=1e-15)
    assert params.compat_exponent(p, p.r_star) > 0
    q = params.derive(d=2, ell=1.0)
    assert params.compat_exponent(q, q.r_star) < 0
    with pytest.raises(ParameterError):
        params.compat_exponent(p, 1.0)


def test_sign_threshold_by_bisection():
    for ell in (0.5, 1.0, 2.0, 5.0):
        p = params.derive(d=3, ell=ell)
        lo, hi = 1.0 + 1e-9, 3.0
        while hi - lo > 1e-13:
            mid = 0.5 * (lo + hi)
            if params.compat_exponent(p, mid) > 0:
                hi = mid
            else:
                lo = mid
        assert abs(0.5 * (lo + hi) - (2 + ell) / (1 + ell)) < 1e-12


def test_threshold_ell():
    val, ok = params.threshold_ell(3)
    assert abs(val - math.sqrt(3)) < 1e-12 and ok
    val4, ok4 = params.threshold_ell(4)
    assert val4 <= 0 and not ok4


def test_threshold_by_brute_scan():
    ells = np.arange(1.5, 2.0, 1e-6)
    rs = (3 + ells) / (ells + math.sqrt(3))
    good = rs > (2 + ells) / (1 + ells)
    first = ells[np.argmax(good)]
    assert abs(first - math.sqrt(3)) < 2e-6


def test_r_star_below_sqrt_d_and_decreasing():
    for d in (2, 3):
        ells = np.linspace(0, d, 1002)[1:-1]
        rs = np.array([params.r_star(d, e) for e in ells])
        assert np.all(rs < math.sqrt(d))
        assert np.all(np.diff(rs) < 0)


def test_invalid_inputs():
    with pytest.raises(InvalidStateLaw):
        params.derive(d=3, gamma=1.0)
    with pytest.raises(ParameterError):
        params.derive(d=4, gamma=2.0)
    with pytest.raises(ParameterError):
        params.derive(d=3, gamma=2.0, mu=-1.0, mu_prime=0.5)
    with pytest.raises(ParameterError):
        params.derive(d=3, ell=1.5, regime="NavierStokes")
    with pytest.raises(ParameterError):
        params.derive(d=2, ell=1.0, regime="NavierStokes")
    with pytest.raises(ParameterError):
        params.derive(d=3, gamma=2.0, ell=2.0)
    assert params.derive(d=3, ell=2.0, regime="NavierStokes").ns_admissible


def test_record_round_trip():
    p = params.derive(d=3, gamma=2.0, mu=0.1, mu_prime=0.05, regime="NavierStokes", r=1.2)
    rec = p.record()
    assert set(rec) == {"d", "gamma", "ell", "p", "r", "e", "mu", "mu_prime", "regime"}
    assert params.from_record(rec) == p
    rec2 = dict(rec)
    rec2.pop("gamma")
    assert params.from_record(rec2).gamma == pytest.approx(2.0, rel=1e-15)
