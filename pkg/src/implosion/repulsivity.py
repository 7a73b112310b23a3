"""Repulsivity margins of a profile inside and outside the acoustic cone."""

from dataclasses import dataclass, field
import math
import numpy as np

from .profile import ProfileError


class UndefinedLimit(ProfileError):
    pass


@dataclass
class RepulsivityReport:
    grid: np.ndarray
    F: np.ndarray
    q_inside_1: np.ndarray
    q_inside_2: np.ndarray
    q_outside: np.ndarray
    margins: dict
    locations: dict
    kappa: float
    verdicts: dict
    extra: dict = field(default_factory=dict)

    def to_json(self):
        return dict(margins=self.margins, locations=self.locations, kappa=self.kappa,
                    verdicts=self.verdicts, **self.extra)


def lambda_fields(curve, grid=None):
    """(grid, w, sigma, Lambda w, Lambda sigma, F) on the requested grid.

    With an evaluator the values at Z2 come from the analytic branch; a
    tabulated curve must already carry the sonic row.
    """
    if grid is None:
        grid = curve.grid
        w, s, lw, ls = curve.w, curve.sigma, curve.lam_w, curve.lam_sigma
    else:
        if curve.evaluator is None:
            raise UndefinedLimit("regridding needs the curve evaluator")
        f = curve.fields(grid)
        w, s, lw, ls = f.w, f.sigma, f.lam_w, f.lam_sigma
    if not np.any(np.isclose(grid, curve.Z2, rtol=0, atol=1e-12 * curve.Z2)) and curve.evaluator is None:
        raise UndefinedLimit("no sonic row in the tabulated curve")
    return grid, w, s, lw, ls, s + ls


def quantities(w, s, lw, ls):
    F = s + ls
    q1 = (1 - w - lw) ** 2 - F ** 2
    q2 = 1 - w - lw - (1 - w) * F / s
    qo = 1 - w - lw
    return F, q1, q2, qo


def sample_grid(curve, n=4000, outer_factor=1e3):
    Z2 = curve.Z2
    zmax = outer_factor * Z2
    if curve.Z_max is not None:
        zmax = min(zmax, curve.Z_max)
    inner = np.linspace(1e-6 * Z2, Z2, n)
    near = np.linspace(Z2, 4 * Z2, n)
    far = np.geomspace(4 * Z2, zmax, n)
    return np.concatenate([inner, near[1:], far[1:]])


def margins(curve, params=None, grid=None, n=4000, outer_factor=1e3):
    """Minima of the inside quantities on [0, Z2] and the outside ones on [Z2, 1e3 Z2]."""
    params = params or curve.params
    if grid is None and curve.evaluator is not None:
        grid = sample_grid(curve, n, outer_factor)
    Z, w, s, lw, ls, F = lambda_fields(curve, grid)
    F, q1, q2, qo = quantities(w, s, lw, ls)
    Z2 = curve.Z2
    zout = outer_factor * Z2
    tol = 1e-12 * Z2
    inside = Z <= Z2 + tol
    outside = (Z >= Z2 - tol) & (Z <= zout * (1 + 1e-12))

    def minimum(q, mask):
        i = np.argmin(np.where(mask, q, np.inf))
        return float(q[i]), float(Z[i])

    m, loc = {}, {}
    for key, q, mask in (("inside_1", q1, inside), ("inside_2", q2, inside),
                         ("outside_1", q1, outside), ("outside_o", qo, outside)):
        m[key], loc[key] = minimum(q, mask)
    # tail bound beyond the sampled range from the fitted power laws
    r = params.r
    zt = Z[outside].max()
    tail_w = abs(curve.c_w) * zt ** -r
    tail_s = abs(curve.c_sigma) * zt ** -r
    bound = 1 - (1 + r) * tail_w
    m["tail_bound_outside_o"] = float(bound)
    m["tail_bound_outside_1"] = float(bound ** 2 - ((1 + r) * tail_s) ** 2)

    required_out = params.d == 3 and params.ell > math.sqrt(3)
    kap = surface_gravity(curve)
    verdicts = {
        "inside": bool(m["inside_1"] > 0 and m["inside_2"] > 0),
        "outside": bool(m["outside_1"] > 0 and m["outside_o"] > 0),
        "outside_required": bool(required_out),
        "kappa": bool(kap["kappa"] > 0),
    }
    verdicts["pass"] = bool(verdicts["inside"] and verdicts["kappa"]
                            and (verdicts["outside"] or not required_out))
    ident = identity_4F2(Z, s, F, params)
    extra = dict(kappa_dual=kap, identity_4F2=ident, Z2=Z2, Z_out=float(zout))
    return RepulsivityReport(Z, F, q1, q2, qo, m, loc, kap["kappa"], verdicts, extra)


def surface_gravity(curve):
    """kappa from -(w' + sigma') and from the coercivity form, both at P2."""
    if curve.evaluator is not None:
        f = curve.fields(np.array([curve.Z2]))
        w, s, lw, ls = f.w[0], f.sigma[0], f.lam_w[0], f.lam_sigma[0]
    else:
        i = int(np.argmin(np.abs(curve.grid - curve.Z2)))
        if abs(curve.grid[i] - curve.Z2) > 1e-12 * curve.Z2:
            raise UndefinedLimit("no sonic row in the tabulated curve")
        w, s, lw, ls = curve.w[i], curve.sigma[i], curve.lam_w[i], curve.lam_sigma[i]
    k1 = -lw - ls
    k2 = 1 - w - lw - (1 - w) * (s + ls) / s
    return dict(kappa=float(k1), kappa_coercive=float(k2), difference=float(abs(k1 - k2)))


def identity_4F2(Z, sigma, F, params):
    """Max of |(p-1)(dQ/dZ)^2/Q - 4F^2| / max(4F^2) with dQ/dZ by finite differences."""
    Q = (params.phi * Z * sigma) ** 2
    dQ = np.gradient(Q, Z, edge_order=2)
    lhs = (params.p - 1) * dQ ** 2 / Q
    rhs = 4 * F ** 2
    return float(np.max(np.abs(lhs - rhs)) / np.max(rhs))


def characteristic_speeds(curve):
    L = (1 - curve.w) - curve.sigma
    Lbar = (1 - curve.w) + curve.sigma
    sgn = np.sign(L)
    nz = sgn[sgn != 0]
    changes = int(np.count_nonzero(np.diff(nz)))
    warning = "multi-sonic" if changes > 1 else None
    return L, Lbar, changes, warning
