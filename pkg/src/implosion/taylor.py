"""Truncated power series at the two special points of the profile.

Near the origin the profile is even in Z; the unknowns (w, v = Z sigma) are
expanded in s = Z^2 and solved order by order.  Near the sonic point the
smooth trajectory is the analytic invariant curve w = W(sigma) of the
desingularized field tangent to its slow eigenvector.
"""

from dataclasses import dataclass
import numpy as np
from numpy.polynomial import polynomial as P

from .emden import partials, desingularized_jacobian, CriticalPoint


class GaugeSingularity(ValueError):
    pass


def mul(a, b, n):
    """Product of two series truncated to degree n."""
    return np.convolve(a, b)[: n + 1]


def power(g, alpha, n):
    """Coefficients of g**alpha for a series with g[0] != 0 (Miller recurrence)."""
    f = np.zeros(n + 1)
    f[0] = g[0] ** alpha
    for k in range(1, n + 1):
        j = np.arange(1, min(k, len(g) - 1) + 1)
        f[k] = np.sum(((alpha + 1) * j - k) * g[j] * f[k - j]) / (k * g[0])
    return f


def _pad(c, n):
    out = np.zeros(n + 1)
    out[: min(len(c), n + 1)] = c[: n + 1]
    return out


@dataclass
class OriginSeries:
    """Even series at Z = 0.  Arrays hold coefficients of s^k, s = Z^2."""
    order: int
    w: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    psi: np.ndarray

    def _eval(self, c, Z, der=0):
        # f(Z) = sum c_k Z^(2k); expand to a polynomial in Z
        full = np.zeros(2 * len(c) - 1)
        full[::2] = c
        if der:
            full = P.polyder(full, der)
        return P.polyval(Z, full)

    def fields(self, Z):
        Z = np.asarray(Z, dtype=float)
        e = self._eval
        return dict(w=e(self.w, Z), w_Z=e(self.w, Z, 1), w_ZZ=e(self.w, Z, 2),
                    v=e(self.v, Z), v_Z=e(self.v, Z, 1), v_ZZ=e(self.v, Z, 2),
                    psi=e(self.psi, Z))

    def rho_P(self, Z, der=0):
        return self._eval(self.rho, np.asarray(Z, dtype=float), der)

    def psi_P(self, Z, der=0):
        return self._eval(self.psi, np.asarray(Z, dtype=float), der)


def origin_series(params, order=6):
    """Order-by-order solution of the regular Z-form system at Z = 0.

    order counts powers of Z (even); at least 4.
    """
    if order < 4:
        raise ValueError("origin series needs order >= 4")
    r, d, ell = params.r, params.d, params.ell
    if abs(r - 2.0) < 1e-6:
        raise GaugeSingularity("r = 2 makes Psi_P(0) = -1/(r-2) infinite")
    if not r > 1.0:
        raise ValueError("front speed must exceed 1")
    K = order // 2
    we = params.w_e
    v0 = 2.0 / np.sqrt(ell)
    a = np.zeros(K + 1)
    b = np.zeros(K + 1)
    a[0], b[0] = we, v0
    s = np.array([0.0, 1.0])

    def A_of(w):
        ww = mul(w, w, K)
        out = (ell + d - 1.0) * ww - (ell + d + ell * r - r) * w
        out[0] += ell * r
        return out

    def e1(a, b):
        wm1 = a.copy(); wm1[0] -= 1
        wr = a.copy(); wr[0] -= r
        wwe = a.copy(); wwe[0] -= we
        Dt = mul(s, mul(wm1, wm1, K), K) - mul(b, b, K)
        ws = P.polyder(a) if K > 0 else np.zeros(1)
        t1 = 2 * mul(s, mul(Dt, _pad(ws, K), K), K)
        t2 = mul(s, mul(mul(a, wm1, K), wr, K), K)
        t3 = d * mul(wwe, mul(b, b, K), K)
        return t1 + t2 - t3

    def e2(a, b):
        wm1 = a.copy(); wm1[0] -= 1
        Dt = mul(s, mul(wm1, wm1, K), K) - mul(b, b, K)
        vs = _pad(P.polyder(b), K)
        return 2 * ell * mul(Dt, vs, K) - mul(b, ell * mul(wm1, wm1, K) - A_of(a), K)

    for k in range(1, K + 1):
        b[k] = 0.0
        b[k] = e2(a, b)[k - 1] / (2 * ell * v0 ** 2 * k)
        a[k] = 0.0
        a[k] = e1(a, b)[k] / (v0 ** 2 * (2 * k + d))
    rho = power(params.phi * b, ell / 2.0, K)
    psi = np.zeros(K + 2)
    psi[0] = -1.0 / (r - 2.0)
    psi[1:] = -a / (4.0 * np.arange(1, K + 2))
    return OriginSeries(order, a, b, rho, psi[: K + 1])


def profile_residual(series, params, Z):
    """Residuals of the (rho_P, Psi_P) self-similar equations at Z."""
    d, r, p, ell = params.d, params.r, params.p, params.ell
    rho = series.rho_P(Z)
    rz = series.rho_P(Z, 1)
    ps = series.psi_P(Z)
    pz = series.psi_P(Z, 1)
    pzz = series.psi_P(Z, 2)
    lap = pzz + (d - 1) * pz / Z
    eq1 = pz ** 2 + rho ** (p - 1) + (r - 2) * ps + Z * pz
    eq2 = lap + ell * (r - 1) / 2 + (2 * pz + Z) * rz / rho
    return eq1, eq2


@dataclass
class SonicSeries:
    """Smooth branch through P2 parametrized by t = sigma - sigma2.

    W holds coefficients of w(t); Y of log(Z/Z2) as a function of t.
    """
    w2: float
    sigma2: float
    W: np.ndarray
    Y: np.ndarray
    radius: float
    ratio: float
    slope: float
    eigen: object

    def w(self, t, der=0):
        c = P.polyder(self.W, der) if der else self.W
        return P.polyval(t, c)

    def y(self, t, der=0):
        c = P.polyder(self.Y, der) if der else self.Y
        return P.polyval(t, c)


def _delta12(W, S, params, n):
    d, ell, r, we = params.d, params.ell, params.r, params.w_e
    w1 = W.copy(); w1[0] -= 1
    wr = W.copy(); wr[0] -= r
    wwe = W.copy(); wwe[0] -= we
    SS = mul(S, S, n)
    D1 = mul(mul(W, w1, n), wr, n) - d * mul(wwe, SS, n)
    inner = (ell + d - 1.0) * mul(W, W, n) - (ell + d + ell * r - r) * W - ell * SS
    inner[0] += ell * r
    D2 = mul(S, inner, n) / ell
    D = mul(w1, w1, n) - SS
    return D, D1, D2


def estimate_radius(c):
    """Radius of convergence from the geometric decay of the upper half of c."""
    n = len(c) - 1
    k = np.arange(n // 2, n + 1)
    mag = np.abs(c[k])
    ok = mag > 0
    if ok.sum() < 3:
        return np.inf
    slope = np.polyfit(k[ok], np.log(mag[ok]), 1)[0]
    return float(np.exp(-slope))


def sonic_series(params, w2, nterms=40):
    """Analytic slow-eigencurve W(sigma) through the sonic point (w2, 1 - w2)."""
    s2 = 1.0 - w2
    ed = desingularized_jacobian(CriticalPoint("P2", w2, s2), params)
    if ed.kind == "focus" or ed.defective:
        raise ValueError(f"sonic point is a {ed.kind}; no real smooth direction")
    c, e, a, b = (ed.partials[k] for k in "ceab")
    # slope roots of a c1^2 + (b - c) c1 - e = 0; keep the slow one
    roots = np.roots([a, b - c, -e])
    if np.iscomplexobj(roots):
        roots = roots.real
    lam = -(a * roots + b)
    i = int(np.argmin(np.abs(lam)))
    c1 = float(roots[i])
    alpha = a * c1 + b
    n = nterms
    W = np.zeros(n + 1); W[0], W[1] = w2, c1
    S = np.zeros(n + 1); S[0], S[1] = s2, 1.0
    for k in range(2, n + 1):
        _, D1, D2 = _delta12(W[: k + 1], S[: k + 1], params, k)
        Wp = np.arange(1, k + 1) * W[1: k + 1]
        res = mul(D2, Wp, k)[k] - D1[k]
        W[k] = -res / (alpha * k + c1 * a - c)
    D, _, D2 = _delta12(W, S, params, n)
    # Y' = dy/dsigma = -Delta/Delta2; both vanish at t = 0, divide out t
    num, den = D[1:], D2[1:]
    q = np.zeros(n)
    for k in range(n):
        q[k] = (num[k] - np.dot(q[:k], den[k:0:-1])) / den[0]
    Y = np.concatenate([[0.0], -q / np.arange(1, n + 1)])
    ratio = abs((c1 * a - c) / alpha)
    return SonicSeries(w2, s2, W, Y, estimate_radius(W), ratio, c1, ed)
