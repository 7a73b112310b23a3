"""Renormalized flow in (rho_T, Psi_T), diagnostics, and physical-variable checks.

The state lives on a uniform radial grid Z_j = j h, j = 0..n, Z_n = Z_out.
Second-order central differences are used inside, even reflection at Z = 0
and second-order backward stencils at Z_out, where all characteristics leave
the domain.  Time stepping is the three-stage strong-stability-preserving
Runge-Kutta scheme.
"""

from dataclasses import dataclass, field, replace
import math
import numpy as np
from scipy.integrate import cumulative_trapezoid

from .profile import DampenedProfile, PhysicalProfile, ProfileError

CFL = 0.4


class SimulationError(RuntimeError):
    pass


class VacuumError(SimulationError):
    pass


class BlowupSignal(SimulationError):
    pass


class StepUnderflow(SimulationError):
    pass


@dataclass
class SimState:
    tau: float
    grid: np.ndarray
    rho_T: np.ndarray
    Psi_T: np.ndarray
    params: object
    tau0: float = 0.0

    @property
    def b(self):
        return math.exp(-self.params.e * self.tau)

    @property
    def h(self):
        return float(self.grid[1] - self.grid[0])

    @property
    def u_T(self):
        return derivatives(self.Psi_T, self.h)[0]

    def copy(self):
        return replace(self, rho_T=self.rho_T.copy(), Psi_T=self.Psi_T.copy())


@dataclass
class Diagnostics:
    tau: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    deviation: list = field(default_factory=list)
    deviation_rho: list = field(default_factory=list)
    deviation_u: list = field(default_factory=list)
    norms: dict = field(default_factory=lambda: {0: [], 1: [], 2: []})
    rates: list = field(default_factory=list)
    b2: list = field(default_factory=list)
    status: str = "running"
    steps: int = 0

    def to_json(self):
        return dict(tau=self.tau, residual=self.residual, deviation=self.deviation,
                    deviation_rho=self.deviation_rho, deviation_u=self.deviation_u,
                    norms={str(k): v for k, v in self.norms.items()}, rates=self.rates,
                    b2=self.b2, status=self.status, steps=self.steps)


# ---------------------------------------------------------------- grid calculus

def derivatives(f, h):
    """First and second derivatives of an even-in-Z grid function."""
    f1 = np.empty_like(f)
    f2 = np.empty_like(f)
    f1[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    f2[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h ** 2
    f1[0] = 0.0
    f2[0] = 2 * (f[1] - f[0]) / h ** 2
    f1[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    f2[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h ** 2
    return f1, f2


def odd_derivative(g, h):
    """First derivative of an odd-in-Z grid function (even result)."""
    g1 = np.empty_like(g)
    g1[1:-1] = (g[2:] - g[:-2]) / (2 * h)
    g1[0] = g[1] / h
    g1[-1] = (3 * g[-1] - 4 * g[-2] + g[-3]) / (2 * h)
    return g1


def laplacian(f, f1, f2, Z, d):
    out = np.empty_like(f)
    out[1:] = f2[1:] + (d - 1) * f1[1:] / Z[1:]
    out[0] = d * f2[0]
    return out


# ---------------------------------------------------------------- initial data

def bump(Z, amp, center, width):
    """C-infinity bump of height amp supported on |Z - center| < width."""
    s = (np.asarray(Z, dtype=float) - center) / width
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = amp * np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
    return out


def make_grid(Z_out, n):
    return np.linspace(0.0, Z_out, n + 1)


def profile_fields(source, Z, tau=0.0):
    """(rho, Psi) of the exact profile or of the dampened profile at tau."""
    if isinstance(source, DampenedProfile):
        rho, _, psi = source.renormalized(Z, tau)
        return rho, psi
    curve = source.curve if isinstance(source, PhysicalProfile) else source
    params = curve.params
    f = curve.fields(Z)
    return (params.phi * f.v) ** (2.0 / (params.p - 1.0)), f.psi


def init(source, perturbation=None, Z_out=None, n=1000, tau0=None, params=None):
    """State on [0, Z_out] from the dampened (or exact) profile plus bumps.

    perturbation: dict with optional keys rho and psi, each a dict
    (amp, center, width), or None.
    """
    if isinstance(source, DampenedProfile):
        params = params or source.params
        tau0 = source.tau if tau0 is None else tau0
        Z_out = Z_out or 20.0 * math.exp(tau0)
    else:
        curve = source.curve if isinstance(source, PhysicalProfile) else source
        params = params or curve.params
        tau0 = 0.0 if tau0 is None else tau0
        Z_out = Z_out or 20.0
    Z = make_grid(Z_out, n)
    rho, psi = profile_fields(source, Z, tau0)
    pert = perturbation or {}
    if "rho" in pert:
        rho = rho + bump(Z, **pert["rho"])
    if "psi" in pert:
        psi = psi + bump(Z, **pert["psi"])
    if np.any(rho <= 0):
        raise VacuumError("perturbation makes the density non-positive")
    return SimState(float(tau0), Z, rho, psi, params, float(tau0))


# ---------------------------------------------------------------- right-hand side

def viscous_term(rho, lap_psi, Z, h, params):
    """F(u, rho): prefactor times int_0^Z d_Z(div u) / rho^2."""
    coef = 2.0 ** (params.gamma / (params.gamma - 1.0)) * (params.mu + params.mu_prime)
    if coef == 0.0:
        return None
    g = odd_derivative(lap_psi, h) / rho ** 2
    return coef * cumulative_trapezoid(g, Z, initial=0.0)


def rhs(state):
    p = state.params
    Z, h = state.grid, state.h
    rho, psi = state.rho_T, state.Psi_T
    psi1, psi2 = derivatives(psi, h)
    rho1, _ = derivatives(rho, h)
    lap = laplacian(psi, psi1, psi2, Z, p.d)
    drho = -rho * lap - 0.5 * p.ell * (p.r - 1.0) * rho - (2 * psi1 + Z) * rho1
    dpsi = -(psi1 ** 2 + (p.r - 2.0) * psi + Z * psi1 + rho ** (p.p - 1.0))
    F = viscous_term(rho, lap, Z, h, p)
    if F is not None:
        dpsi = dpsi + state.b ** 2 * F
    if not (np.all(np.isfinite(drho)) and np.all(np.isfinite(dpsi))):
        raise BlowupSignal(f"non-finite right-hand side at tau={state.tau}")
    return drho, dpsi


def max_speed(state):
    p = state.params
    psi1, _ = derivatives(state.Psi_T, state.h)
    V = 2 * psi1 + state.grid
    c = np.sqrt((p.p - 1.0) * np.abs(state.rho_T) ** (p.p - 1.0))
    return float(np.max(np.abs(V) + c))


def _advance(state, dt):
    s0 = state
    k1 = rhs(s0)
    s1 = replace(s0, tau=s0.tau + dt, rho_T=s0.rho_T + dt * k1[0], Psi_T=s0.Psi_T + dt * k1[1])
    k2 = rhs(s1)
    s2 = replace(s0, tau=s0.tau + 0.5 * dt,
                 rho_T=0.75 * s0.rho_T + 0.25 * (s1.rho_T + dt * k2[0]),
                 Psi_T=0.75 * s0.Psi_T + 0.25 * (s1.Psi_T + dt * k2[1]))
    k3 = rhs(s2)
    return replace(s0, tau=s0.tau + dt,
                   rho_T=s0.rho_T / 3 + 2.0 / 3 * (s2.rho_T + dt * k3[0]),
                   Psi_T=s0.Psi_T / 3 + 2.0 / 3 * (s2.Psi_T + dt * k3[1]))


# ---------------------------------------------------------------- diagnostics

def residual_norm(state):
    """Sup norm of both right-hand sides."""
    a, b = rhs(state)
    return float(max(np.max(np.abs(a)), np.max(np.abs(b))))


def weights_chi(Z, k, params, Zstar, n_P, sigma=0.0):
    p, r, d = params.p, params.r, params.d
    q = 2 * (r - 1) * (p + 1) / (p - 1)
    jb = lambda x: np.sqrt(1.0 + x * x)
    return jb(Z) ** (2 * k - 2 * sigma - d + q) * jb(Z / Zstar) ** (2 * n_P + 2 * sigma - q)


def weighted_norms(state, rho_D, psi_D, n_P=2.0, sigma=0.0, mmax=2):
    """Radial versions of the m = 0..mmax energy norms of (rho - rho_D, Psi - Psi_D)."""
    p = state.params
    Z, h = state.grid, state.h
    rt = state.rho_T - rho_D
    pt = state.Psi_T - psi_D
    Zstar = math.exp(state.tau)
    dr = [rt]
    dp = [derivatives(pt, h)[0]]
    for _ in range(mmax):
        dr.append(np.gradient(dr[-1], Z, edge_order=2))
        dp.append(np.gradient(dp[-1], Z, edge_order=2))
    meas = Z ** (p.d - 1)
    wrho = (p.p - 1.0) * np.abs(rho_D) ** (p.p - 2.0) * state.rho_T
    out = {}
    total = 0.0
    for j in range(mmax + 1):
        chi = weights_chi(Z, j, p, Zstar, n_P, sigma)
        integrand = chi * (wrho * dr[j] ** 2 + state.rho_T ** 2 * dp[j] ** 2) * meas
        total += float(np.trapezoid(integrand, Z))
        out[j] = math.sqrt(total)
    return out


TIME_CONVENTIONS = {"derived": None, "hat": 1.0, "physical": 2.0}


def time_to_blowup(tau, r, convention="derived"):
    """T - t at renormalized time tau.

    "derived" integrates dtau/ds = e^{r tau} in the hat time s = t/2, giving
    T - t = (2/r) e^{-r tau}; "hat" and "physical" use the fixed factors 1 and 2.
    """
    if convention not in TIME_CONVENTIONS:
        raise ValueError(f"unknown time convention {convention!r}")
    k = TIME_CONVENTIONS[convention]
    return (2.0 / r if k is None else k) * math.exp(-r * tau)


def rate_sample(state, convention="derived"):
    """(T - t, sup rho, sup |u|) in original variables."""
    p = state.params
    lam_nu = math.exp((p.r - 1.0) * state.tau)
    rho_hat = lam_nu ** (1.0 / (p.gamma - 1.0)) * float(np.max(state.rho_T))
    rho = 2.0 ** (-1.0 / (p.gamma - 1.0)) * rho_hat ** 2
    u = lam_nu * float(np.max(np.abs(state.u_T)))
    return (time_to_blowup(state.tau, p.r, convention), rho, u)


@dataclass
class Reference:
    """Fields the deviation is measured against on {Z <= Zhat}."""
    rho: np.ndarray
    u: np.ndarray
    Zhat: float

    @classmethod
    def from_state(cls, state, Zhat):
        return cls(state.rho_T.copy(), state.u_T.copy(), Zhat)


def deviation(state, ref):
    m = state.grid <= ref.Zhat * (1 + 1e-12)
    dr = float(np.max(np.abs(state.rho_T[m] - ref.rho[m])))
    du = float(np.max(np.abs(state.u_T[m] - ref.u[m])))
    return max(dr, du), dr, du


@dataclass
class Trajectory:
    tau: list
    snapshots: list
    final: SimState


def run(state, tau_end, cfl=CFL, cadence=0.1, reference=None, dampened=None, n_P=None,
        snapshot_cadence=None, convention="derived", dt_min=1e-12, norms=False):
    """Explicit SSP-RK3 integration to tau_end.

    reference: a Reference for the deviation; by default the initial state on
    Z <= Z2 is not used, the caller supplies the profile. Early stops set
    Diagnostics.status to "vacuum", "blowup" or "step-underflow".
    """
    diag = Diagnostics()
    snaps = []
    cur = state.copy()
    n_P = n_P if n_P is not None else (dampened.n_P if dampened is not None else 2.0)

    def record(s):
        diag.tau.append(s.tau)
        diag.residual.append(residual_norm(s))
        if reference is not None:
            dv, dr, du = deviation(s, reference)
            diag.deviation.append(dv)
            diag.deviation_rho.append(dr)
            diag.deviation_u.append(du)
        diag.rates.append(rate_sample(s, convention))
        diag.b2.append(s.b ** 2)
        if norms:
            if dampened is not None:
                rho_D, psi_D = profile_fields(dampened, s.grid, s.tau)
            else:
                rho_D, psi_D = reference.rho, None
            nm = weighted_norms(s, rho_D, psi_D if psi_D is not None else s.Psi_T, n_P)
            for k in diag.norms:
                diag.norms[k].append(nm[k])

    def snap(s):
        snaps.append((s.tau, s.grid.copy(), s.rho_T.copy(), s.u_T.copy()))

    record(cur)
    if snapshot_cadence:
        snap(cur)
    next_rec = cur.tau + cadence
    next_snap = cur.tau + snapshot_cadence if snapshot_cadence else math.inf
    eps = 1e-12 * max(1.0, abs(tau_end))
    try:
        while cur.tau < tau_end - eps:
            dt = cfl * cur.h / max_speed(cur)
            if dt < dt_min:
                raise StepUnderflow(f"time step {dt:.3e} below {dt_min:.1e}")
            dt = min(dt, tau_end - cur.tau, max(next_rec - cur.tau, eps), max(next_snap - cur.tau, eps))
            cur = _advance(cur, dt)
            diag.steps += 1
            if np.any(cur.rho_T <= 0):
                raise VacuumError(f"density vanished at tau={cur.tau}")
            if cur.tau >= next_rec - eps:
                record(cur)
                next_rec += cadence
            if cur.tau >= next_snap - eps:
                snap(cur)
                next_snap += snapshot_cadence
        diag.status = "done"
    except VacuumError as exc:
        diag.status = f"vacuum: {exc}"
    except BlowupSignal as exc:
        diag.status = f"blowup: {exc}"
    except StepUnderflow as exc:
        diag.status = f"step-underflow: {exc}"
    if diag.tau[-1] < cur.tau - eps and diag.status == "done":
        record(cur)
    return Trajectory(diag.tau, snaps, cur), diag


def profile_reference(source, grid, Zhat):
    """Profile fields on the grid, u by the same difference operator as the state."""
    rho, psi = profile_fields(source, grid, 0.0)
    h = float(grid[1] - grid[0])
    return Reference(rho, derivatives(psi, h)[0], Zhat)


def growth_ratio(dev_pert, dev_base, taus, lam):
    """max over tau of |dev(tau)| / (|dev(0)| e^{lam (tau - tau0)})."""
    taus = np.asarray(taus)
    dev = np.asarray(dev_pert)
    return float(np.max(dev / (dev[0] * np.exp(lam * (taus - taus[0])))))


def field_difference(traj_a, traj_b, Zhat):
    """Sup on Z <= Zhat of |rho_a - rho_b|, |u_a - u_b| at matching snapshots."""
    out, taus = [], []
    for (ta, Za, ra, ua), (tb, Zb, rb, ub) in zip(traj_a.snapshots, traj_b.snapshots):
        if abs(ta - tb) > 1e-9:
            raise SimulationError("snapshot times do not match")
        m = Za <= Zhat * (1 + 1e-12)
        out.append(float(max(np.max(np.abs(ra[m] - rb[m])), np.max(np.abs(ua[m] - ub[m])))))
        taus.append(ta)
    return np.array(taus), np.array(out)


# ---------------------------------------------------------------- physical variables

def exact_fields(physical, params, T, t, x):
    """Exact self-similar (rho, u) of the original system at time t < T.

    The hat system runs on s = t/2 with blow-up at T/2, and dtau/ds = e^{r tau}
    integrates to r (T/2 - s) = e^{-r tau}.
    """
    curve = physical.curve
    x = np.asarray(x, dtype=float)
    rem = params.r * (T - t) / 2.0
    if rem <= 0:
        raise ValueError("t must be below the blow-up time")
    lam = rem ** (1.0 / params.r)
    Z = x / lam
    f = curve.fields(Z)
    rho_P = (params.phi * f.v) ** (2.0 / (params.p - 1.0))
    rho_hat = rem ** (-params.ell * (params.r - 1.0) / (2.0 * params.r)) * rho_P
    u_hat = rem ** (-(params.r - 1.0) / params.r) * (-Z * f.w / 2.0)
    rho = 2.0 ** (-1.0 / (params.gamma - 1.0)) * rho_hat ** 2
    return rho, u_hat


@dataclass
class RateReport:
    T_minus_t: np.ndarray
    sup_rho: np.ndarray
    sup_u: np.ndarray
    exponent_rho: float
    exponent_u: float
    expected_rho: float
    expected_u: float
    fixed_x: float
    limit_rho: np.ndarray
    limit_u: np.ndarray

    def to_json(self):
        return dict(T_minus_t=self.T_minus_t.tolist(), sup_rho=self.sup_rho.tolist(),
                    sup_u=self.sup_u.tolist(), exponent_rho=self.exponent_rho,
                    exponent_u=self.exponent_u, expected_rho=self.expected_rho,
                    expected_u=self.expected_u, fixed_x=self.fixed_x,
                    limit_rho=self.limit_rho.tolist(), limit_u=self.limit_u.tolist())


def physical_rates(physical, params, T=1.0, t=None, Zgrid=None, x_fixed=0.5):
    """Sup norms of the exact solution on self-similar grids and their log-log fits."""
    if t is None:
        t = T - np.geomspace(1e-1, 1e-6, 26) * T
    t = np.asarray(t, dtype=float)
    if Zgrid is None:
        Zgrid = np.concatenate([np.linspace(0.0, 4 * physical.curve.Z2, 4001),
                                np.geomspace(4 * physical.curve.Z2, 1e3, 400)[1:]])
    sr, su, lr, lu = [], [], [], []
    for tk in t:
        lam = (params.r * (T - tk) / 2.0) ** (1.0 / params.r)
        rho, u = exact_fields(physical, params, T, tk, lam * Zgrid)
        sr.append(rho.max())
        su.append(np.abs(u).max())
        rx, ux = exact_fields(physical, params, T, tk, np.array([x_fixed]))
        lr.append(rx[0] * x_fixed ** (2 * (params.r - 1.0) / (params.gamma - 1.0)))
        lu.append(ux[0] * x_fixed ** (params.r - 1.0))
    dt = T - t
    er = float(np.polyfit(np.log(dt), np.log(sr), 1)[0])
    eu = float(np.polyfit(np.log(dt), np.log(su), 1)[0])
    return RateReport(dt, np.array(sr), np.array(su), er, eu,
                      -params.ell * (params.r - 1.0) / params.r, -(params.r - 1.0) / params.r,
                      x_fixed, np.array(lr), np.array(lu))


@dataclass
class CheckResult:
    n: int
    h: float
    steps: int
    L1: float
    Linf: float
    mass_change: float
    flux_integral: float

    @property
    def mass_defect(self):
        return abs(self.mass_change + self.flux_integral)


_G3 = np.polynomial.legendre.leggauss(3)


def _cell_average(fn, xf, d):
    """x^(d-1)-weighted cell averages of fn over cells with faces xf."""
    nodes, wts = _G3
    a, b = xf[:-1], xf[1:]
    mid, half = (a + b) / 2.0, (b - a) / 2.0
    xs = mid[:, None] + half[:, None] * nodes[None, :]
    vals = fn(xs.ravel())
    out = []
    for v in vals:
        v = v.reshape(xs.shape)
        out.append((v * xs ** (d - 1) * wts).sum(axis=1) * half / ((b ** d - a ** d) / d))
    return out


def physical_check(physical, params, t0, t1, grid, T=1.0, cfl=CFL):
    """First-order Rusanov finite volumes for radial Euler on a fixed x-window.

    grid: (x_lo, x_hi, n). Ghost cells carry the exact solution. Errors are
    measured against the exact point values at cell centers at t1.
    """
    x_lo, x_hi, n = grid
    if not 0 < x_lo < x_hi:
        raise ValueError("window must stay away from the origin")
    if not t0 <= t1 < T:
        raise ValueError("need t0 <= t1 < T")
    d, gam = params.d, params.gamma
    h = (x_hi - x_lo) / n
    xf = x_lo + h * np.arange(n + 1)
    xc = 0.5 * (xf[:-1] + xf[1:])
    vol = (xf[1:] ** d - xf[:-1] ** d) / d
    area = xf ** (d - 1)
    dsrc = xf[1:] ** (d - 1) - xf[:-1] ** (d - 1)
    pressure = lambda rho: (gam - 1.0) / gam * rho ** gam

    def exact(t, x):
        rho, u = exact_fields(physical, params, T, t, x)
        return rho, rho * u

    rho, m = _cell_average(lambda x: exact(t0, x), xf, d)
    xg = np.array([x_lo - h / 2, x_hi + h / 2])

    def flux(rho, m):
        u = m / rho
        return np.array([m, m * u + pressure(rho)])

    def speed(rho, m):
        return np.abs(m / rho) + np.sqrt((gam - 1.0) * rho ** (gam - 1.0))

    mass0 = float(np.sum(vol * rho))
    flux_int = 0.0
    t = t0
    steps = 0
    if t1 > t0:
        rg, mg = exact(t0, xg)
        smax = max(speed(rho, m).max(), speed(rg, mg).max())
        nsteps = int(math.ceil((t1 - t0) / (cfl * h / smax)))
        dt = (t1 - t0) / nsteps
        for k in range(nsteps):
            rg, mg = exact(t, xg)
            R = np.concatenate([[rg[0]], rho, [rg[1]]])
            M = np.concatenate([[mg[0]], m, [mg[1]]])
            if np.any(R <= 0) or not np.all(np.isfinite(M)):
                raise SimulationError(f"scheme failure at t={t}")
            FL, FR = flux(R[:-1], M[:-1]), flux(R[1:], M[1:])
            a = np.maximum(speed(R[:-1], M[:-1]), speed(R[1:], M[1:]))
            Fh = 0.5 * (FL + FR) - 0.5 * a * np.array([R[1:] - R[:-1], M[1:] - M[:-1]])
            AF = area * Fh
            src = pressure(rho) * dsrc    # int (d-1) x^(d-2) pi over the cell
            rho = rho - dt * (AF[0, 1:] - AF[0, :-1]) / vol
            m = m - dt * (AF[1, 1:] - AF[1, :-1] - src) / vol
            flux_int += dt * (AF[0, -1] - AF[0, 0])
            t = t0 + (k + 1) * dt
            steps += 1
    if np.any(rho <= 0) or not np.all(np.isfinite(m)):
        raise SimulationError("scheme failure")
    re, me = exact(t1, xc)
    err = np.abs(rho - re) + np.abs(m - me)
    L1 = float(np.sum(err * vol) / np.sum(vol))
    Linf = float(err.max())
    return CheckResult(n, h, steps, L1, Linf, float(np.sum(vol * rho)) - mass0, flux_int)


def convergence_study(physical, params, t0, t1, x_lo, x_hi, ns=(100, 200, 400), T=1.0):
    res = [physical_check(physical, params, t0, t1, (x_lo, x_hi, n), T) for n in ns]
    ratios = [res[i].L1 / res[i + 1].L1 for i in range(len(res) - 1)]
    return res, ratios
