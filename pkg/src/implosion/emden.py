"""Autonomous (w, sigma) phase plane of the self-similar profile.

With y = log Z the profile equations become

    a1 w' + b1 sigma' + d1 = 0,   a2 w' + b2 sigma' + d2 = 0,

and the solution is w' = -Delta1/Delta, sigma' = -Delta2/Delta.
All functions broadcast over numpy arrays.
"""

from dataclasses import dataclass, field
import numpy as np

SONIC_TOL = 1e-9


class SonicSingularity(ArithmeticError):
    """Raised when the field is requested on the sonic line Delta = 0."""


class NoSonicRoot(ValueError):
    pass


class NotCritical(ValueError):
    pass


@dataclass
class PhasePoint:
    w: float
    sigma: float
    y: float | None = None


@dataclass
class Determinants:
    delta: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray


@dataclass
class CriticalPoint:
    kind: str
    w: float
    sigma: float
    eigenvalues: np.ndarray | None = None
    eigendirections: np.ndarray | None = None
    selected: bool = False


@dataclass
class EigenData:
    """Linearization of the desingularized field (-Delta1, -Delta2) at a sonic point.

    Columns of `vectors` are unit tangents in (w, sigma). `slow` indexes the
    eigenvalue of smaller modulus; `slope` is dw/dsigma along it.
    """
    jacobian: np.ndarray
    values: np.ndarray
    vectors: np.ndarray
    slow: int
    kind: str
    ratio: float
    slope: float
    partials: dict = field(default_factory=dict)
    defective: bool = False


def _wr(params):
    return params.d, params.ell, params.r, params.w_e


def coefficients(w, sigma, params):
    d, ell, r, _ = _wr(params)
    a1 = w - 1.0
    b1 = ell * sigma
    d1 = w * w - r * w + ell * sigma * sigma
    a2 = sigma / ell
    b2 = w - 1.0
    d2 = sigma * ((1.0 + d / ell) * w - r)
    return a1, b1, d1, a2, b2, d2


def sonic_polynomial(w, params):
    """Quadratic part A(w) of the bracket in Delta2."""
    d, ell, r, _ = _wr(params)
    return (ell + d - 1.0) * w * w - w * (ell + d + ell * r - r) + ell * r


def determinants(w, sigma, params):
    d, ell, r, we = _wr(params)
    delta = (w - 1.0) ** 2 - sigma * sigma
    delta1 = w * (w - 1.0) * (w - r) - d * (w - we) * sigma * sigma
    delta2 = (sigma / ell) * (sonic_polynomial(w, params) - ell * sigma * sigma)
    return Determinants(delta, delta1, delta2)


def vector_field(w, sigma, params, tol=SONIC_TOL):
    """(dw/dy, dsigma/dy); raises SonicSingularity near Delta = 0."""
    det = determinants(w, sigma, params)
    scale = 1.0 + np.abs(w) ** 2 + np.abs(sigma) ** 2
    if np.any(np.abs(det.delta) < tol * scale):
        raise SonicSingularity("field requested on the sonic line")
    return -det.delta1 / det.delta, -det.delta2 / det.delta


def desingularized_field(w, sigma, params):
    det = determinants(w, sigma, params)
    return -det.delta1, -det.delta2


def sonic_roots(params):
    """Roots of (d-1) w^2 + (r - d - d w_e) w + d w_e on sigma = 1 - w, sorted."""
    d, ell, r, we = _wr(params)
    A, B, C = d - 1.0, r - d - d * we, d * we
    disc = B * B - 4 * A * C
    if disc < 0:
        raise NoSonicRoot(f"negative discriminant {disc:.3e} at r={r}")
    sq = np.sqrt(disc)
    # stable quadratic formula
    q = -0.5 * (B + np.copysign(sq, B))
    roots = sorted([q / A, C / q])
    return roots, disc


def sonic_discriminant(params):
    d, ell, r, we = _wr(params)
    B = r - d - d * we
    return B * B - 4 * (d - 1.0) * d * we


def sonic_point_P2(params):
    """Both sonic candidates on the branch sigma = 1 - w, 0 < w < 1."""
    roots, _ = sonic_roots(params)
    out = []
    for w in roots:
        if 0.0 < w < 1.0:
            cp = CriticalPoint("P2", w, 1.0 - w)
            try:
                ed = desingularized_jacobian(cp, params)
                cp.eigenvalues, cp.eigendirections = ed.values, ed.vectors
            except NotCritical:
                pass
            out.append(cp)
    if not out:
        raise NoSonicRoot(f"no sonic root with 0 < w < 1 at r={params.r}")
    return out


def partials(w, sigma, params):
    """Analytic partial derivatives of Delta1 and Delta2."""
    d, ell, r, we = _wr(params)
    A = sonic_polynomial(w, params)
    dA = 2 * (ell + d - 1.0) * w - (ell + d + ell * r - r)
    d1w = (w - 1) * (w - r) + w * (w - r) + w * (w - 1) - d * sigma * sigma
    d1s = -2 * d * (w - we) * sigma
    d2w = sigma / ell * dA
    d2s = (A - 3 * ell * sigma * sigma) / ell
    return d1w, d1s, d2w, d2s


def desingularized_jacobian(point, params, tol=1e-10):
    w, s = point.w, point.sigma
    det = determinants(w, s, params)
    if max(abs(det.delta), abs(det.delta1), abs(det.delta2)) > tol:
        raise NotCritical(f"({w}, {s}) is not a sonic critical point")
    d1w, d1s, d2w, d2s = partials(w, s, params)
    J = -np.array([[d1w, d1s], [d2w, d2s]])
    vals, vecs = np.linalg.eig(J)
    if np.iscomplexobj(vals) and np.any(np.abs(vals.imag) > 0):
        kind = "focus"
        slow, ratio, slope = 0, float("nan"), float("nan")
        return EigenData(J, vals, vecs, slow, kind, ratio, slope,
                         dict(c=d1w, e=d1s, a=d2w, b=d2s))
    vals = vals.real
    vecs = vecs.real
    defective = abs(vals[0] - vals[1]) < 1e-10 * max(1.0, abs(vals).max())
    slow = int(np.argmin(np.abs(vals)))
    if vals[0] * vals[1] > 0:
        kind = "node"
    elif vals[0] * vals[1] < 0:
        kind = "saddle"
    else:
        kind = "degenerate"
    ratio = abs(vals[1 - slow] / vals[slow]) if vals[slow] != 0 else float("inf")
    vs = vecs[:, slow]
    slope = vs[0] / vs[1] if vs[1] != 0 else float("inf")
    return EigenData(J, vals, vecs, slow, kind, ratio, slope,
                     dict(c=d1w, e=d1s, a=d2w, b=d2s), defective)


def critical_points(params):
    """P6 = (0, 0) plus the sonic candidates."""
    pts = [CriticalPoint("P6", 0.0, 0.0)]
    try:
        pts.extend(sonic_point_P2(params))
    except NoSonicRoot:
        pass
    return pts


def _contours(W, S, F):
    import contourpy
    gen = contourpy.contour_generator(W, S, F, line_type="Separate")
    return [np.asarray(seg) for seg in gen.lines(0.0)]


LOCI = ("delta", "delta1", "delta2")


def portrait_sample(params, window, n):
    """Sample the phase portrait on an n x n grid.

    window = (w_min, w_max, sigma_min, sigma_max). Returns a dict with
    field rows (w, sigma, fw, fsigma), loci polylines keyed by name and the
    critical points inside the window.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    w0, w1, s0, s1 = window
    wg = np.linspace(w0, w1, n)
    sg = np.linspace(s0, s1, n)
    W, S = np.meshgrid(wg, sg)
    det = determinants(W, S, params)
    # direction of the desingularized field, oriented as increasing y where Delta > 0
    fw, fs = -det.delta1 * np.sign(det.delta), -det.delta2 * np.sign(det.delta)
    norm = np.hypot(fw, fs)
    norm[norm == 0] = 1.0
    loci = {}
    for name, F in zip(LOCI, (det.delta, det.delta1, det.delta2)):
        loci[name] = _contours(W, S, F)
    crit = [c for c in critical_points(params) if w0 <= c.w <= w1 and s0 <= c.sigma <= s1]
    return dict(w=W.ravel(), sigma=S.ravel(), fw=(fw / norm).ravel(), fsigma=(fs / norm).ravel(),
                loci=loci, critical=crit, cell=(wg[1] - wg[0], sg[1] - sg[0]))


def portrait_rows(sample):
    """Flatten a portrait sample into CSV rows (w, sigma, fw, fsigma, locus_id)."""
    rows = [(w, s, fw, fs, "field") for w, s, fw, fs in
            zip(sample["w"], sample["sigma"], sample["fw"], sample["fsigma"])]
    for name in LOCI:
        for k, seg in enumerate(sample["loci"][name]):
            rows.extend((p[0], p[1], float("nan"), float("nan"), f"{name}.{k}") for p in seg)
    return rows
