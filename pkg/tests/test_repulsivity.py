import numpy as np
import pytest

from implosion import repulsivity
from implosion.profile import ProfileCurve
from implosion.repulsivity import UndefinedLimit


@pytest.fixture(scope="module")
def report(curve):
    return repulsivity.margins(curve)


def test_F_vanishes_at_origin(curve):
    Z, w, s, lw, ls, F = repulsivity.lambda_fields(curve, np.array([1e-5, 1e-4, 1e-3]))
    assert np.all(np.abs(F) < 10 * Z)
    assert abs(F[2] / F[1] - 10) < 0.1      # F is odd, linear at the origin


def test_far_field_log_derivative(curve):
    Z, w, s, lw, ls, F = repulsivity.lambda_fields(curve, np.array([curve.Z_max]))
    assert abs(lw[0] / w[0] + curve.r) < 1e-2


def test_4F2_identity_exact_and_discrete(curve):
    p = curve.params
    Z = np.linspace(0.05, 20, 3001)
    f = curve.fields(Z)
    Q = (p.phi * f.v) ** 2
    dQ = 2 * p.phi ** 2 * f.v * f.v_Z
    lhs = (p.p - 1) * dQ ** 2 / Q
    assert np.max(np.abs(lhs - 4 * f.F ** 2)) < 1e-12 * np.max(4 * f.F ** 2)
    errs = []
    for n in (1001, 2001, 4001):
        Zn = np.linspace(0.05, 20, n)
        fn = curve.fields(Zn)
        errs.append(repulsivity.identity_4F2(Zn, fn.sigma, fn.F, p))
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] / errs[2] > 3


def test_margins_positive(report):
    m = report.margins
    assert m["inside_1"] > 0 and m["inside_2"] > 0
    assert m["outside_1"] > 0 and m["outside_o"] > 0
    assert report.kappa > 0
    assert report.verdicts["pass"] and report.verdicts["outside_required"]
    assert report.extra["identity_4F2"] < 1e-3


def test_outside_limit_at_infinity(report):
    far = report.grid > 0.5 * report.grid.max()
    assert np.max(np.abs(report.q_outside[far] - 1)) < 1e-3
    assert report.margins["tail_bound_outside_o"] > 0.99


def test_kappa_dual_evaluation(curve, report):
    kap = repulsivity.surface_gravity(curve)
    assert kap["difference"] < 1e-8
    i = int(np.argmin(np.abs(report.grid - curve.Z2)))
    assert report.grid[i] == curve.Z2
    assert abs(report.q_inside_2[i] - kap["kappa"]) < 1e-8


def test_margins_stable_under_grid_halving(curve, report):
    coarse = repulsivity.margins(curve, n=2000)
    for k in ("inside_1", "inside_2", "outside_1", "outside_o"):
        assert abs(coarse.margins[k] - report.margins[k]) < 1e-4, k


def test_tabulated_curve_needs_sonic_row(curve):
    keep = curve.grid != curve.Z2
    tab = ProfileCurve(curve.r, curve.grid[keep], curve.w[keep], curve.sigma[keep], curve.lam_w[keep],
                       curve.lam_sigma[keep], curve.Z2, curve.c_w, curve.c_sigma, params=curve.params)
    with pytest.raises(UndefinedLimit):
        repulsivity.lambda_fields(tab)
    with pytest.raises(UndefinedLimit):
        repulsivity.surface_gravity(tab)
    with pytest.raises(UndefinedLimit):
        repulsivity.lambda_fields(tab, np.array([1.0]))


def test_characteristic_speeds(curve):
    L, Lbar, changes, warning = repulsivity.characteristic_speeds(curve)
    i = int(np.argmin(np.abs(curve.grid - curve.Z2)))
    assert abs(L[i]) < 1e-12
    assert np.all(Lbar > 0)
    assert np.all(L[curve.grid < curve.Z2] < 0)
    assert changes == 1 and warning is None
