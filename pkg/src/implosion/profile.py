"""Self-similar profile: origin launch, sonic crossing, far-field tail.

The profile is assembled from four pieces:

* the even power series at Z = 0 (``taylor.origin_series``),
* the regular Z-form ODE in (w, v = Z sigma) up to the transversal
  sigma = sigma2 + h,
* the analytic sonic-branch series on |sigma - sigma2| <= h,
* the autonomous y = log Z system out to the tail.

The speed r is selected by requiring that the trajectory leaving the origin
coincides with the analytic branch through P2.
"""

from dataclasses import dataclass, field
import math
import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import emden
from .params import ParameterError
from .taylor import origin_series, sonic_series

Z0_DEFAULT = 1e-4
ORDER_DEFAULT = 6
RTOL_DEFAULT = 1e-10
H_MAX = 0.01
H_FRAC = 0.25
NTERMS = 40
CS_EPS = 1e-30
RESIDUAL_LAYER = 1e-6


class ProfileError(RuntimeError):
    pass


class NoRootInBracket(ProfileError):
    pass


class CrossingFailed(ProfileError):
    pass


class WrongBranch(ProfileError):
    pass


class Unresolvable(ProfileError):
    """Smoothness miss below what double precision can resolve."""


# ---------------------------------------------------------------- right-hand sides

def z_rhs(Z, u, params):
    """Regular Z-form of the profile system in (w, v = Z sigma, Psi)."""
    w, v = u[0], u[1]
    d, ell, r, we = params.d, params.ell, params.r, params.w_e
    Dt = Z * Z * (w - 1.0) ** 2 - v * v
    A = (ell + d - 1.0) * w * w - w * (ell + d + ell * r - r) + ell * r
    wz = -(Z * Z * w * (w - 1.0) * (w - r) - d * (w - we) * v * v) / (Z * Dt)
    vz = v * Z * (ell * (w - 1.0) ** 2 - A) / (ell * Dt)
    return [wz, vz, -Z * w / 2.0]


def y_rhs(y, u, params):
    """Autonomous field in y = log Z, augmented with dPsi/dy = -Z^2 w / 2."""
    w, s = u[0], u[1]
    det = emden.determinants(w, s, params)
    return [-det.delta1 / det.delta, -det.delta2 / det.delta, -np.exp(2 * y) * w / 2.0]


def _second_z(Z, w, v, params):
    """(w_ZZ, v_ZZ) along the Z-form flow by complex-step differentiation."""
    wz, vz, _ = z_rhs(Z, (w, v), params)
    h = CS_EPS
    cz = z_rhs(Z + 1j * h, (w + 1j * h * wz, v + 1j * h * vz), params)
    return wz, vz, np.imag(cz[0]) / h, np.imag(cz[1]) / h


def _second_y(w, s, params):
    lw, ls, _ = y_rhs(0.0, (w, s), params)
    h = CS_EPS
    c = y_rhs(0.0, (w + 1j * h * lw, s + 1j * h * ls), params)
    return lw, ls, np.imag(c[0]) / h, np.imag(c[1]) / h


# ---------------------------------------------------------------- data types

@dataclass
class Fields:
    """Profile fields and Z-derivatives at a set of radii."""
    Z: np.ndarray
    w: np.ndarray
    w_Z: np.ndarray
    w_ZZ: np.ndarray
    v: np.ndarray
    v_Z: np.ndarray
    v_ZZ: np.ndarray
    psi: np.ndarray

    @property
    def sigma(self):
        return self.v / self.Z

    @property
    def lam_w(self):
        return self.Z * self.w_Z

    @property
    def lam_sigma(self):
        return self.v_Z - self.v / self.Z

    @property
    def F(self):
        return self.v_Z


@dataclass
class SonicApproach:
    label: str
    side: str | None
    Z: np.ndarray
    w: np.ndarray
    sigma: np.ndarray
    status: int
    max_dw: float
    residual: float
    sol: object = None
    w2: float | None = None


@dataclass
class ProfileCurve:
    r: float
    grid: np.ndarray
    w: np.ndarray
    sigma: np.ndarray
    lam_w: np.ndarray
    lam_sigma: np.ndarray
    Z2: float
    c_w: float
    c_sigma: float
    crossing: dict = field(default_factory=dict)
    Z_max: float | None = None
    tail_slope: float | None = None
    evaluator: object = None
    params: object = None

    def fields(self, Z):
        if self.evaluator is None:
            raise ProfileError("curve was loaded from a table and has no evaluator")
        return self.evaluator(np.atleast_1d(np.asarray(Z, dtype=float)))


@dataclass
class PhysicalProfile:
    grid: np.ndarray
    rho_P: np.ndarray
    dPsi_P: np.ndarray
    Q: np.ndarray
    Psi_P: np.ndarray | None = None
    phi: float = 0.0
    c_P: float | None = None
    c_Psi: float | None = None
    curve: object = None


# ---------------------------------------------------------------- origin side

def launch_state(params, Z0=Z0_DEFAULT, order=ORDER_DEFAULT):
    ser = origin_series(params, order)
    f = ser.fields(Z0)
    return ser, [float(f["w"]), float(f["v"]), float(f["psi"])]


def integrate_to_sonic(params, Z0=Z0_DEFAULT, order=ORDER_DEFAULT, rtol=RTOL_DEFAULT,
                       Z_cap=1e4, sonic_tol=emden.SONIC_TOL, stop_sigma=None, proximity=1e-3,
                       with_side=False):
    """Integrate the Z-form system from the origin towards the sonic line.

    Stops when |Delta| falls below sonic_tol*(1+w^2+sigma^2), when
    sigma reaches stop_sigma (if given) or at Z_cap.  With with_side, a
    trajectory that reaches P2 is labelled by the side of the smooth
    branch it lies on ("above"/"below"), which flips across a root.
    """
    ser, u0 = launch_state(params, Z0, order)

    def sonic(Z, u, params):
        w, v = u[0], u[1]
        s = v / Z
        return (w - 1.0) ** 2 - s * s + sonic_tol * (1 + w * w + s * s)
    sonic.terminal = True

    events = [sonic]
    if stop_sigma is not None:
        def transversal(Z, u, params):
            return u[1] / Z - stop_sigma
        transversal.terminal = True
        events.append(transversal)

    sol = solve_ivp(z_rhs, (Z0, Z_cap), u0, args=(params,), method="DOP853", rtol=rtol,
                    atol=rtol * 1e-3, events=events, dense_output=True)
    Z = sol.t
    w, v = sol.y[0], sol.y[1]
    s = v / Z
    wz, vz, _ = z_rhs(Z, (w, v), params)
    dw = np.abs(wz)
    # raw-system residual along the stored steps; inside the sonic layer
    # |Delta| < 1e-6 the slopes are quotients of vanishing quantities and
    # the residual only measures round-off
    lw = Z * wz
    ls = vz - s
    a1, b1, d1, a2, b2, d2 = emden.coefficients(w, s, params)
    off = np.abs((w - 1.0) ** 2 - s * s) > RESIDUAL_LAYER
    res = np.concatenate([a1 * lw + b1 * ls + d1, a2 * lw + b2 * ls + d2])
    resid = np.max(np.abs(res[np.concatenate([off, off])]), initial=0.0)

    try:
        cands = emden.sonic_point_P2(params)
    except emden.NoSonicRoot:
        cands = []
    label, side, w2 = "no-sonic-encounter", None, None
    if sol.status == 1 or (sol.status == -1):
        if cands:
            dist = [math.hypot(w[-1] - c.w, s[-1] - c.sigma) for c in cands]
            k = int(np.argmin(dist))
            w2 = cands[k].w
            if stop_sigma is not None and sol.t_events[1].size:
                label = "reaches-P2" if dist[k] < max(proximity, 2 * abs(stop_sigma - cands[k].sigma)) \
                    else ("hits-sonic-above-P2" if w[-1] > w2 else "hits-sonic-below-P2")
            elif dist[k] < proximity:
                label = "reaches-P2"
            else:
                label = "hits-sonic-above-P2" if w[-1] > w2 else "hits-sonic-below-P2"
        else:
            label = "hits-sonic-above-P2"
        if sol.status == -1:
            label = label + ":crash"
    if with_side and label == "reaches-P2":
        side = branch_side(params, w2)
    return SonicApproach(label, side, Z, w, s, sol.status, float(dw.max()), float(resid), sol, w2)


def select_P2(params, **kw):
    """Sonic root approached by the trajectory from the origin."""
    app = integrate_to_sonic(params, **kw)
    if app.w2 is None:
        raise CrossingFailed(f"origin trajectory meets no sonic candidate ({app.label})")
    if not app.label.startswith("reaches-P2"):
        raise CrossingFailed(f"origin trajectory does not approach a sonic candidate ({app.label})")
    return app.w2


def lower_root(params):
    return emden.sonic_point_P2(params)[0].w


# ---------------------------------------------------------------- smoothness miss

@dataclass
class Miss:
    r: float
    value: float
    h: float
    ratio: float
    radius: float
    Z_h: float = float("nan")
    series: object = None
    sol: object = None


def _branch(params, w2=None, nterms=NTERMS, h=None):
    if w2 is None:
        w2 = lower_root(params)
    ser = sonic_series(params, w2, nterms)
    if h is None:
        h = min(H_MAX, H_FRAC * ser.radius)
    return ser, h


def smoothness_miss(params, w2=None, h=None, rtol=1e-12, Z0=Z0_DEFAULT, order=ORDER_DEFAULT,
                    nterms=NTERMS, min_h=2e-3):
    """Signed gap w_origin - W at sigma = sigma2 + h.

    Zero exactly when the trajectory from the origin is the analytic branch.
    """
    ser, h = _branch(params, w2, nterms, h)
    if h < min_h:
        raise Unresolvable(f"sonic series radius {ser.radius:.2e} too small (resonance)")
    _, u0 = launch_state(params, Z0, order)
    target = ser.sigma2 + h

    def transversal(Z, u, params):
        return u[1] / Z - target
    transversal.terminal = True

    def sonic(Z, u, params):
        return Z * Z * (u[0] - 1) ** 2 - u[1] ** 2
    sonic.terminal = True

    sol = solve_ivp(z_rhs, (Z0, 1e6), u0, args=(params,), method="DOP853", rtol=rtol,
                    atol=rtol * 1e-3, events=[transversal, sonic], dense_output=True)
    if not sol.t_events[0].size:
        raise CrossingFailed(f"origin trajectory never reached sigma2+h at r={params.r}")
    w_orig = sol.y[0, -1]
    m = w_orig - ser.w(h)
    return Miss(params.r, float(m), h, ser.ratio, ser.radius, float(sol.t[-1]), ser, sol)


def branch_side(params, w2=None):
    return "above" if smoothness_miss(params, w2).value > 0 else "below"


def speed_ratio(params, r):
    p = params.with_speed(r)
    cp = emden.sonic_point_P2(p)[0]
    return emden.desingularized_jacobian(cp, p).ratio


def _miss_value(args):
    params, r = args
    try:
        return smoothness_miss(params.with_speed(r)).value
    except (ProfileError, ParameterError, emden.NoSonicRoot, ValueError):
        return float("nan")


def scan_speeds(params, r_lo=1.01, r_hi=None, per_unit=8, s_max=12.0, workers=1, ngrid=2000):
    """Sample the smoothness miss on a grid uniform in the eigenvalue ratio s.

    Samples lie strictly inside each interval (k, k+1) so that resonance
    poles at integer s are never bracketed.  Returns (samples, brackets).
    """
    if r_hi is None:
        r_hi = params.r_eye - 1e-4
    rr = np.linspace(r_lo, r_hi, ngrid)
    ss = np.array([_safe_ratio(params, r) for r in rr])
    ok = np.isfinite(ss)
    rr, ss = rr[ok], ss[ok]
    targets = []
    k0 = int(math.floor(ss.min()))
    k1 = int(min(math.floor(ss.max()), s_max))
    for k in range(k0, k1 + 1):
        for j in range(1, per_unit):
            targets.append(k + j / per_unit)
    pts = []
    for st in targets:
        idx = np.nonzero(np.diff(np.sign(ss - st)))[0]
        for i in idx:
            r = brentq(lambda x: speed_ratio(params, x) - st, rr[i], rr[i + 1], xtol=1e-14)
            pts.append((r, st))
    pts.sort()
    jobs = [(params, r) for r, _ in pts]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            vals = list(ex.map(_miss_value, jobs))
    else:
        vals = [_miss_value(j) for j in jobs]
    samples = [(r, s, m) for (r, s), m in zip(pts, vals)]
    brackets = []
    for (ra, sa, ma), (rb, sb, mb) in zip(samples[:-1], samples[1:]):
        if math.floor(sa) != math.floor(sb):
            continue
        if np.isfinite(ma) and np.isfinite(mb) and ma * mb < 0:
            brackets.append((ra, rb))
    return samples, brackets


def _safe_ratio(params, r):
    try:
        return speed_ratio(params, r)
    except (emden.NoSonicRoot, ParameterError, ValueError, IndexError):
        return float("nan")


@dataclass
class ShootResult:
    r: float
    miss: float
    bracket: tuple
    evaluations: int
    ratio: float


def shoot_speed(params, bracket, tol_r=1e-12):
    """Root of the smoothness miss inside a sign-changing bracket."""
    r_lo, r_hi = bracket
    m_lo, m_hi = _miss_value((params, r_lo)), _miss_value((params, r_hi))
    if not (np.isfinite(m_lo) and np.isfinite(m_hi)) or m_lo * m_hi > 0:
        raise NoRootInBracket(f"no sign change of the miss on [{r_lo}, {r_hi}]")
    count = [0]

    def f(r):
        count[0] += 1
        m = _miss_value((params, r))
        if not np.isfinite(m):
            raise NoRootInBracket(f"miss undefined at r={r}")
        return m
    r = brentq(f, r_lo, r_hi, xtol=tol_r, rtol=4 * np.finfo(float).eps)
    m = smoothness_miss(params.with_speed(r))
    if abs(m.value) > 1e-6:
        raise NoRootInBracket(f"bracket [{r_lo}, {r_hi}] holds a pole, not a root")
    return ShootResult(r, m.value, (r_lo, r_hi), count[0] + 2, m.ratio)


# ---------------------------------------------------------------- crossing and tail

def cross_P2(params, miss=None, rtol=1e-12, Z0=Z0_DEFAULT, order=ORDER_DEFAULT):
    """Pass through P2 along the analytic branch.

    Returns the crossing record: series, Z2, the origin-side solution and the
    far-side starting state at sigma = sigma2 - h.
    """
    if miss is None:
        miss = smoothness_miss(params, rtol=rtol, Z0=Z0, order=order)
    ser, h = miss.series, miss.h
    ed = ser.eigen
    if ed.kind != "node" or ed.defective:
        raise CrossingFailed(f"P2 is a {ed.kind}; smooth crossing not attempted")
    if not np.all(ed.values > 0):
        raise CrossingFailed("wrong-sign smooth direction at P2")
    Yp = ser.y(0.0, 1)
    if not Yp < 0:
        # Z must increase as sigma decreases along the branch
        raise CrossingFailed("smooth direction points backwards in Z")
    Z_h = miss.Z_h
    Z2 = Z_h * math.exp(-ser.y(h))
    Z_m = Z2 * math.exp(ser.y(-h))
    psi_h = float(miss.sol.y[2, -1])
    psi_m = psi_h + _psi_branch(ser, Z2, h, np.array([-h]))[0]
    return dict(series=ser, h=h, Z2=Z2, Z_h=Z_h, Z_m=Z_m, sol=miss.sol, psi_h=psi_h,
                start=(ser.w(-h), ser.sigma2 - h, psi_m), miss=miss.value,
                eigenvalues=ed.values.tolist(), slope=ser.slope, ratio=ser.ratio,
                radius=ser.radius, w2=ser.w2, sigma2=ser.sigma2)


_GL = np.polynomial.legendre.leggauss(24)


def _psi_branch(ser, Z2, t0, t):
    """Psi(t) - Psi(t0) along the branch: integral of -Z^2 W/2 dy."""
    x, wts = _GL
    t = np.asarray(t, dtype=float)
    mid, half = (t + t0) / 2.0, (t - t0) / 2.0
    tt = mid[:, None] + half[:, None] * x[None, :]
    Z = Z2 * np.exp(ser.y(tt))
    integrand = -Z * Z * ser.w(tt) / 2.0 * ser.y(tt, 1)
    return (integrand * wts[None, :]).sum(axis=1) * half


def integrate_tail(params, crossing, Z_max_factor=1e6, rtol=1e-12, slope_tol=0.05):
    """Continue from sigma2 - h to Z_max and fit the power-law tail."""
    Z2 = crossing["Z2"]
    y0 = math.log(crossing["Z_m"])
    y1 = math.log(Z_max_factor * Z2)

    def sonic(y, u, params):
        return (u[0] - 1.0) ** 2 - u[1] ** 2
    sonic.terminal = True

    def vacuum(y, u, params):
        return u[1]
    vacuum.terminal = True

    sol = solve_ivp(y_rhs, (y0, y1), list(crossing["start"]), args=(params,), method="DOP853",
                    rtol=rtol, atol=1e-300, events=[sonic, vacuum], dense_output=True)
    if sol.status != 0:
        raise WrongBranch(f"continuation past P2 stopped at Z={math.exp(sol.t[-1]):.4g}: "
                          + ("second sonic encounter" if sol.t_events[0].size else
                             "sigma vanished" if sol.t_events[1].size else sol.message))
    yy = np.linspace(y1 - math.log(10.0), y1, 200)
    w, s = sol.sol(yy)[:2]
    if np.any(w == 0) or np.any(s <= 0):
        raise WrongBranch("tail changes sign")
    slope = np.polyfit(yy, np.log(np.abs(w)), 1)[0]
    if abs(slope + params.r) > slope_tol:
        raise WrongBranch(f"tail slope {slope:.4f} differs from -r={-params.r:.4f}")
    c_w = float(np.sign(w[-1]) * np.exp(np.mean(np.log(np.abs(w)) + params.r * yy)))
    c_s = float(np.exp(np.mean(np.log(s) + params.r * yy)))
    return sol, dict(slope=float(slope), c_w=c_w, c_sigma=c_s, Z_max=math.exp(y1))


def default_grid(Z2, Z_max, n_inner=2001, n_outer=2000, Z_min=0.0):
    inner = np.linspace(Z_min, 2.0 * Z2, n_inner)
    outer = np.geomspace(2.0 * Z2, Z_max, n_outer)[1:]
    g = np.union1d(np.concatenate([inner, outer]), [Z2])
    return g


def _build_evaluator(params, ser0, Z0, crossing, tail_sol):
    ser = crossing["series"]
    Z2, h, Z_h, Z_m = crossing["Z2"], crossing["h"], crossing["Z_h"], crossing["Z_m"]
    osol = crossing["sol"]
    psi_h = crossing["psi_h"]

    def t_of_Z(Z):
        # invert log(Z/Z2) = Y(t) on [-h, h] by bisection then Newton
        target = np.log(Z / Z2)
        lo = np.full_like(Z, -h)
        hi = np.full_like(Z, h)
        for _ in range(60):
            mid = (lo + hi) / 2.0
            val = ser.y(mid)
            # Y is decreasing in t
            gt = val > target
            lo = np.where(gt, mid, lo)
            hi = np.where(gt, hi, mid)
        t = (lo + hi) / 2.0
        for _ in range(2):
            t = t - (ser.y(t) - target) / ser.y(t, 1)
        return t

    def evaluate(Z):
        Z = np.asarray(Z, dtype=float)
        out = {k: np.full(Z.shape, np.nan) for k in ("w", "w_Z", "w_ZZ", "v", "v_Z", "v_ZZ", "psi")}

        def put(mask, vals):
            for k, v in vals.items():
                out[k][mask] = v

        m0 = Z < Z0
        if m0.any():
            put(m0, ser0.fields(Z[m0]))
        m1 = (Z >= Z0) & (Z < Z_h)
        if m1.any():
            Zs = Z[m1]
            w, v, psi = osol.sol(Zs)
            wz, vz, wzz, vzz = _second_z(Zs, w, v, params)
            put(m1, dict(w=w, w_Z=wz, w_ZZ=wzz, v=v, v_Z=vz, v_ZZ=vzz, psi=psi))
        m2 = (Z >= Z_h) & (Z <= Z_m)
        if m2.any():
            Zs = Z[m2]
            t = t_of_Z(Zs)
            s = ser.sigma2 + t
            Yp, Ypp = ser.y(t, 1), ser.y(t, 2)
            Wp, Wpp = ser.w(t, 1), ser.w(t, 2)
            lw = Wp / Yp
            ls = 1.0 / Yp
            llw = (Wpp * Yp - Wp * Ypp) / Yp ** 3
            lls = -Ypp / Yp ** 3
            psi = psi_h + _psi_branch(ser, Z2, h, t)
            put(m2, _from_lambda(Zs, ser.w(t), s, lw, ls, llw, lls, psi))
        m3 = Z > Z_m
        if m3.any():
            Zs = Z[m3]
            w, s, psi = tail_sol.sol(np.log(Zs))
            lw, ls, llw, lls = _second_y(w, s, params)
            put(m3, _from_lambda(Zs, w, s, lw, ls, llw, lls, psi))
        return Fields(Z, **out)

    return evaluate


def _from_lambda(Z, w, s, lw, ls, llw, lls, psi):
    return dict(w=w, w_Z=lw / Z, w_ZZ=(llw - lw) / Z ** 2, v=Z * s, v_Z=s + ls,
                v_ZZ=(ls + lls) / Z, psi=psi)


def build_curve(params, miss=None, Z_max_factor=1e6, rtol=1e-12, Z0=Z0_DEFAULT,
                order=ORDER_DEFAULT, grid=None):
    """Complete profile for a given speed (no shooting)."""
    crossing = cross_P2(params, miss, rtol=rtol, Z0=Z0, order=order)
    tail_sol, tail = integrate_tail(params, crossing, Z_max_factor, rtol=rtol)
    ser0 = origin_series(params, order)
    ev = _build_evaluator(params, ser0, Z0, crossing, tail_sol)
    Z2 = crossing["Z2"]
    if grid is None:
        grid = default_grid(Z2, tail["Z_max"], Z_min=1e-3)
    f = ev(grid)
    meta = {k: crossing[k] for k in ("h", "Z_h", "Z_m", "miss", "eigenvalues", "slope",
                                     "ratio", "radius", "w2", "sigma2")}
    meta["series_W"] = crossing["series"].W.tolist()
    meta["series_Y"] = crossing["series"].Y.tolist()
    curve = ProfileCurve(params.r, grid, f.w, f.sigma, f.lam_w, f.lam_sigma, Z2,
                         tail["c_w"], tail["c_sigma"], meta, tail["Z_max"], tail["slope"], ev, params)
    # pin exact sonic values at Z2
    i = int(np.argmin(np.abs(grid - Z2)))
    if grid[i] == Z2:
        curve.w[i], curve.sigma[i] = crossing["w2"], crossing["sigma2"]
    return curve


def find_profile(params, r_lo=1.01, r_hi=None, tol_r=1e-12, per_unit=8, s_max=12.0,
                 workers=1, Z_max_factor=1e6, log=None):
    """Scan, shoot and keep the first root whose continuation reaches P6."""
    samples, brackets = scan_speeds(params, r_lo, r_hi, per_unit, s_max, workers)
    if not brackets:
        raise NoRootInBracket("no sign change of the smoothness miss in the scanned range")
    rejected = []
    last_err = None
    for br in brackets:
        try:
            res = shoot_speed(params, br, tol_r)
        except NoRootInBracket as exc:
            rejected.append((br, str(exc)))
            continue
        p = params.with_speed(res.r)
        try:
            curve = build_curve(p, Z_max_factor=Z_max_factor)
        except (WrongBranch, CrossingFailed) as exc:
            rejected.append((res.r, str(exc)))
            last_err = exc
            if log:
                log(f"r={res.r:.12f} rejected: {exc}")
            continue
        curve.crossing["shoot"] = dict(r=res.r, miss=res.miss, bracket=list(res.bracket),
                                       evaluations=res.evaluations)
        curve.crossing["rejected"] = [(str(a), b) for a, b in rejected]
        return curve
    if isinstance(last_err, CrossingFailed):
        raise last_err
    raise NoRootInBracket("no root led to a complete profile: " + "; ".join(b for _, b in rejected))


# ---------------------------------------------------------------- physical fields

def reconstruct_physical(curve, params=None, grid=None, include_origin=True):
    params = params or curve.params
    if grid is None:
        grid = curve.grid
        if include_origin and grid[0] > 0:
            grid = np.concatenate([[0.0], grid])
    phi = params.phi
    if curve.evaluator is not None:
        f = curve.fields(grid)
        v, w, psi = f.v, f.w, f.psi
    else:
        v, w, psi = grid * curve.sigma, curve.w, None
    if np.any(v <= 0):
        raise ProfileError("sigma <= 0 on the grid: reconstruction aborted")
    Q = (phi * v) ** 2
    rho = Q ** (1.0 / (params.p - 1.0))
    dpsi = -grid * w / 2.0
    c_P = (phi * curve.c_sigma) ** (2.0 / (params.p - 1.0))
    c_Psi = -curve.c_w / 2.0
    return PhysicalProfile(grid, rho, dpsi, Q, psi, phi, c_P, c_Psi, curve)


def emden_from_physical(phys, params):
    """Inverse transform (rho_P, Psi_P') -> (w, sigma) away from Z = 0."""
    Z = phys.grid
    with np.errstate(divide="ignore", invalid="ignore"):
        w = -2.0 * phys.dPsi_P / Z
        sigma = phys.rho_P ** ((params.p - 1.0) / 2.0) / (params.phi * Z)
    return w, sigma


# ---------------------------------------------------------------- dampened tail

CUTOFF = (5.0, 10.0)


class NonIntegrableEnergy(ProfileError):
    pass


def smoothstep(xi):
    """Quintic 0 -> 1 on [0, 1] with matching first and second derivatives."""
    xi = np.clip(xi, 0.0, 1.0)
    return xi ** 3 * (10.0 - 15.0 * xi + 6.0 * xi * xi)


def _dsmoothstep(xi):
    inside = (xi > 0) & (xi < 1)
    return np.where(inside, 30.0 * xi ** 2 * (1.0 - xi) ** 2, 0.0)


@dataclass
class DampenedProfile:
    """Profile with its slow tail replaced by |x|^-n_P decay beyond the cutoff.

    x, rho_D and u_D are in the original (hat) variables at renormalized
    time tau; Zstar = e^tau. ``renormalized`` gives the fields on a Z grid.
    """
    x: np.ndarray
    rho_D: np.ndarray
    u_D: np.ndarray
    n_P: float
    cutoff: tuple
    Zstar: float
    tau: float
    physical: PhysicalProfile
    params: object

    @property
    def tail_gap(self):
        return self.n_P - 2.0 * (self.params.r - 1.0) / (self.params.p - 1.0)

    def K(self, x):
        a, b = self.cutoff
        return self.tail_gap * smoothstep((np.asarray(x, dtype=float) - a) / (b - a))

    def zeta(self, x):
        return zeta(x, self.tail_gap, self.cutoff)

    def zeta_u(self, x):
        a, b = self.cutoff
        return 1.0 - smoothstep((np.asarray(x, dtype=float) - a) / (b - a))

    def renormalized(self, Z, tau=None):
        """(rho_D, U_D, Psi_D) at renormalized time tau on the radii Z."""
        tau = self.tau if tau is None else tau
        Z = np.asarray(Z, dtype=float)
        lam = math.exp(-tau)
        f = self.physical.curve.fields(Z)
        rho_P = (self.params.phi * f.v) ** (2.0 / (self.params.p - 1.0))
        U_P = -Z * f.w / 2.0
        rho = self.zeta(lam * Z) * rho_P
        U = self.zeta_u(lam * Z) * U_P
        psi = f.psi + _cut_integral(self, Z, lam)
        return rho, U, psi

    def log_derivatives(self, Z, tau=None, jmax=3):
        """Z^j d^j rho_D / rho_D for j = 1..jmax, via powers of Lambda = Z d/dZ."""
        tau = self.tau if tau is None else tau
        Z = np.asarray(Z, dtype=float)
        y = np.log(Z)
        rho, _, _ = self.renormalized(Z, tau)
        L = [rho]
        for _ in range(jmax):
            L.append(np.gradient(L[-1], y, edge_order=2))
        # Z^j d^j = Lambda (Lambda - 1) ... (Lambda - j + 1)
        poly = np.array([1.0])
        out = []
        for j in range(jmax):
            poly = np.convolve(poly, [-float(j), 1.0])
            val = sum(c * L[k] for k, c in enumerate(poly))
            out.append(val / rho)
        return out


def zeta(x, gap, cutoff=CUTOFF):
    """exp(-int_0^x K(s)/s ds) with K = gap * smoothstep on the cutoff interval."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    a, b = cutoff
    nodes, wts = _GL
    out = np.ones_like(x)
    xx = np.clip(x, a, b)
    mid, half = (xx + a) / 2.0, (xx - a) / 2.0
    s = mid[:, None] + half[:, None] * nodes[None, :]
    integ = gap * smoothstep((s - a) / (b - a)) / s
    I = (integ * wts[None, :]).sum(axis=1) * half
    far = x > b
    I = I + np.where(far, gap * np.log(np.where(far, x, b) / b), 0.0)
    out = np.exp(-I)
    return out


def _cut_integral(dp, Z, lam):
    """int_0^Z (zeta_u(lam z) - 1) U_P(z) dz, nonzero only beyond the cutoff."""
    a, b = dp.cutoff
    z0 = a / lam
    zc = np.clip(Z, z0, b / lam)
    nodes, wts = _GL
    out = np.zeros_like(Z)
    if not np.any(Z > z0):
        return out
    mid, half = (zc + z0) / 2.0, (zc - z0) / 2.0
    s = mid[:, None] + half[:, None] * nodes[None, :]
    f = dp.physical.curve.fields(s.ravel())
    U = (-s.ravel() * f.w / 2.0).reshape(s.shape)
    integ = (dp.zeta_u(lam * s) - 1.0) * U
    out = (integ * wts[None, :]).sum(axis=1) * half
    # beyond b/lam the velocity is cut entirely: subtract the rest of U_P
    far = Z > b / lam
    if np.any(far):
        Zf = Z[far]
        zb = b / lam
        mid, half = (Zf + zb) / 2.0, (Zf - zb) / 2.0
        s = mid[:, None] + half[:, None] * nodes[None, :]
        f = dp.physical.curve.fields(s.ravel())
        U = (-s.ravel() * f.w / 2.0).reshape(s.shape)
        out[far] += -(U * wts[None, :]).sum(axis=1) * half
    return out


def dampen(physical, n_P=2.0, tau=0.0, x=None, cutoff=CUTOFF, params=None):
    """Dampened profile at renormalized time tau.

    The tail factor zeta multiplies the density root and zeta_u cuts the
    velocity; both equal 1 for |x| <= cutoff[0].
    """
    params = params or physical.curve.params
    floor = 2.0 * (params.r - 1.0) / (params.p - 1.0)
    if not n_P > floor:
        raise NonIntegrableEnergy(f"n_P={n_P} must exceed 2(r-1)/(p-1)={floor:.6g}")
    if physical.curve is None or physical.curve.evaluator is None:
        raise ProfileError("dampening needs a curve with an evaluator")
    if x is None:
        x = np.concatenate([np.linspace(0.0, 2 * cutoff[1], 2001), np.geomspace(2 * cutoff[1], 1e4, 400)[1:]])
    x = np.asarray(x, dtype=float)
    lam = math.exp(-tau)
    nu = math.exp(-params.r * tau)
    dp = DampenedProfile(x, None, None, float(n_P), tuple(cutoff), 1.0 / lam, float(tau), physical, params)
    Z = x / lam
    f = physical.curve.fields(Z)
    rho_P = (params.phi * f.v) ** (2.0 / (params.p - 1.0))
    U_P = -Z * f.w / 2.0
    amp = (lam / nu) ** (1.0 / (params.gamma - 1.0))
    dp.rho_D = amp * rho_P * dp.zeta(x)
    dp.u_D = (lam / nu) * U_P * dp.zeta_u(x)
    return dp
