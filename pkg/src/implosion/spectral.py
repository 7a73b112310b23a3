"""Linearized operator around the profile and its near-unstable spectrum.

Perturbations are written as Phi = rho_P * Psi_bar, Theta = Phi_tau + a H2 Lambda Phi.
The operator M acting on (Phi, Theta) is discretized by even-extension
Chebyshev collocation on [0, Z_a], Z_a the root of
D_a = (1-a)^2 (w-1)^2 - sigma^2 just outside the sonic radius.

Near the sonic radius the operator has solutions of limited smoothness, and
the nodal matrix is badly conditioned in double precision.  Assembly is done
in long double and the eigenvalues are computed in the Chebyshev coefficient
basis, where roundoff no longer moves the eigenvalues near the imaginary axis.
"""

from dataclasses import dataclass, field
import numpy as np
import scipy.fft
import scipy.linalg
from scipy.optimize import brentq

from .profile import ProfileError

THRESHOLD = 1e-6
A_DEFAULT = 0.08


class RootNotBracketed(ProfileError):
    pass


class AssemblyFailed(ProfileError):
    pass


@dataclass
class LinearizedPotentials:
    grid: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    H3: np.ndarray
    Q: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    lam_H1: np.ndarray
    lam_H2: np.ndarray
    lamQ_Q: np.ndarray
    H1_alt: np.ndarray
    rho_P: np.ndarray
    lam_rho: np.ndarray


@dataclass
class OperatorAssembly:
    a: float
    Z_a: float
    grid: np.ndarray
    matrix: np.ndarray
    N: int
    pot: LinearizedPotentials = None
    ops: dict = field(default_factory=dict)
    coef_matrix: np.ndarray = None


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    threshold: float
    unstable_count: int
    resolution: dict
    resolved: np.ndarray = None
    spurious: np.ndarray = None
    flags: list = field(default_factory=list)

    def to_json(self):
        ev = [[float(z.real), float(z.imag)] for z in self.eigenvalues]
        return dict(eigenvalues=ev, threshold=self.threshold, unstable_count=self.unstable_count,
                    resolved=[bool(x) for x in self.resolved] if self.resolved is not None else None,
                    spurious=[bool(x) for x in self.spurious] if self.spurious is not None else None,
                    resolution=self.resolution, flags=self.flags)


def potentials(curve, params=None, grid=None):
    """H1, H2, H3, Q and the wave-equation coefficients on a grid."""
    params = params or curve.params
    d, ell, p, r = params.d, params.ell, params.p, params.r
    f = curve.fields(grid)
    Z = f.Z
    w, v, vz, vzz = f.w, f.v, f.v_Z, f.v_ZZ
    lw = Z * f.w_Z
    llw = lw + Z * Z * f.w_ZZ
    c = r - 2.0
    H2 = 1.0 - w
    lam_H2 = -lw
    g1 = 0.5 * ell * vz / v                       # (log rho_P)'
    g2 = 0.5 * ell * (vzz / v - (vz / v) ** 2)    # (log rho_P)''
    lam_rho = Z * g1
    H1 = H2 * lam_rho
    H1_alt = 0.5 * (d * w + lw - ell * (r - 1.0))
    lam_H1 = 0.5 * (d * lw + llw)
    H3 = g2 + g1 ** 2 + (d - 1) * g1 / Z
    Q = (params.phi * v) ** 2
    lamQ_Q = 2.0 * Z * vz / v
    A1 = H2 * H1 - H2 * lam_H2 + H2 * (H1 - c) + H2 ** 2 * lamQ_Q
    A2 = 2 * H1 - c + H2 * lamQ_Q
    A3 = -(H1 - c) * H1 + H2 * lam_H1 - H2 * (H1 - c) * lamQ_Q - (p - 1) * Q * H3
    rho = (params.phi * v) ** (ell / 2.0)
    return LinearizedPotentials(Z, H1, H2, H3, Q, A1, A2, A3, lam_H1, lam_H2, lamQ_Q, H1_alt,
                                rho, lam_rho)


def D_a(curve, a, Z):
    f = curve.fields(Z)
    return (1 - a) ** 2 * (f.w - 1) ** 2 - f.sigma ** 2


def shifted_root(curve, a, a_max=0.1, span=0.5):
    """Root Z_a of D_a near Z2; Z_0 = Z2."""
    if not 0 <= a <= a_max:
        raise ValueError(f"shift a={a} outside [0, {a_max}]")
    Z2 = curve.Z2
    if a == 0:
        lo, hi = Z2 * (1 - 1e-3), Z2 * (1 + 1e-3)
    else:
        lo, hi = Z2 * (1 + 1e-12), Z2 * (1 + span)
    g = lambda z: float(D_a(curve, a, np.array([z]))[0])
    glo, ghi = g(lo), g(hi)
    if glo * ghi > 0:
        raise RootNotBracketed(f"D_a has no sign change on [{lo}, {hi}] for a={a}")
    return brentq(g, lo, hi, xtol=1e-15 * Z2, rtol=4 * np.finfo(float).eps)


LD = np.longdouble


def cheb(M, dtype=float):
    """Chebyshev points x_j = cos(pi j / M) and the differentiation matrix."""
    j = np.arange(M + 1)
    theta = j * np.arccos(dtype(-1)) / M
    x = np.cos(theta).astype(dtype)
    c = np.where((j == 0) | (j == M), dtype(2), dtype(1)) * (-1.0) ** j
    X = x[:, None] - x[None, :]
    D = np.outer(c, 1 / c) / (X + np.eye(M + 1, dtype=dtype))
    D -= np.diag(D.sum(axis=1))
    return x, D


def even_operators(N, L, dtype=float):
    """Nodes Z in (0, L] and D1, D2 acting on even functions sampled there.

    The even extension lives on 2N Chebyshev points of [-L, L]; no node sits
    at Z = 0. D2 is the odd fold of D times the even fold of D.
    """
    M = 2 * N - 1
    x, D = cheb(M, dtype)
    mirror = D[:N, M:M - N:-1]
    even = D[:N, :N] + mirror
    odd = D[:N, :N] - mirror
    L = dtype(L)
    return L * x[:N], even / L, (odd @ even) / L ** 2


def coefficient_basis(N, dtype=float):
    """T maps folded nodal values to coefficients of T_0, T_2, ..., T_{2N-2}; Ti inverts it."""
    M = 2 * N - 1
    theta = np.arange(M + 1) * np.arccos(dtype(-1)) / M
    k = np.arange(N)
    Ti = np.cos(2 * k[None, :] * theta[:N, None])
    wt = np.full(M + 1, dtype(2) / M)
    wt[0] = wt[-1] = dtype(1) / M
    full = wt[None, :] * np.cos(2 * k[:, None] * theta[None, :])
    T = full[:, :N] + full[:, M:M - N:-1]
    T[0] /= 2
    return T, Ti


def assemble(pot_or_curve, curve=None, a=A_DEFAULT, N=128, params=None):
    """Dense 2N x 2N collocation matrix of M on [0, Z_a].

    Built in extended precision; `matrix` acts on nodal values and
    `coef_matrix` is the same operator in the Chebyshev coefficient basis,
    which is the one handed to the eigensolver.
    """
    if N < 64:
        raise AssemblyFailed("need N >= 64")
    if curve is None:
        curve = pot_or_curve
    params = params or curve.params
    Za = shifted_root(curve, a)
    Z, D1, D2 = even_operators(N, Za, LD)
    pot = potentials(curve, params, Z.astype(float))
    return _assemble(pot, params, a, Za, Z, D1, D2)


def _blocks_to_coef(blocks, T, Ti):
    return np.block([[(T @ B @ Ti).astype(float) for B in row] for row in blocks])


def _assemble(pot, params, a, Za, Z, D1, D2):
    N = len(Z)
    dt = Z.dtype
    d, p = params.d, params.p
    I = np.eye(N, dtype=dt)
    A = lambda v: np.asarray(v, dtype=dt)
    Lam = Z[:, None] * D1
    Lam2 = (Z ** 2)[:, None] * D2 + Lam
    Lap = D2 + ((d - 1) / Z)[:, None] * D1
    H2 = A(pot.H2)
    At2 = A(pot.A1) + (2 * a - a * a) * H2 * A(pot.lam_H2) - a * A(pot.A2) * H2
    M11 = -a * H2[:, None] * Lam
    M21 = ((p - 1) * A(pot.Q))[:, None] * Lap - ((1 - a) ** 2 * H2 ** 2)[:, None] * Lam2 \
        + At2[:, None] * Lam + np.diag(A(pot.A3))
    M22 = -(2 - a) * H2[:, None] * Lam + np.diag(A(pot.A2))
    blocks = [[M11, I], [M21, M22]]
    mat = np.block(blocks).astype(float)
    if not np.all(np.isfinite(mat)):
        raise AssemblyFailed("non-finite collocation entries")
    T, Ti = coefficient_basis(N, dt.type)
    coef = _blocks_to_coef(blocks, T, Ti)
    ops = dict(D1=D1, D2=D2, Lam=Lam, Lap=Lap, Lam2=Lam2, At2=At2, T=T, Ti=Ti)
    return OperatorAssembly(a, Za, Z.astype(float), mat, N, pot, ops, coef)


def first_order_matrix(assembly, params, basis="coef"):
    """Matrix of the (rho_bar, Phi) system on the same nodes (independent route)."""
    pot, ops = assembly.pot, assembly.ops
    dt = ops["Lam"].dtype
    A = lambda v: np.asarray(v, dtype=dt)
    c = params.r - 2.0
    Lam, Lap = ops["Lam"], ops["Lap"]
    L11 = np.diag(A(pot.H1)) - A(pot.H2)[:, None] * Lam
    L12 = -Lap + np.diag(A(pot.H3))
    L21 = -np.diag(A((params.p - 1) * pot.Q))
    L22 = -A(pot.H2)[:, None] * Lam + np.diag(A(pot.H1 - c))
    blocks = [[L11, L12], [L21, L22]]
    if basis == "coef":
        return _blocks_to_coef(blocks, ops["T"], ops["Ti"])
    return np.block(blocks).astype(float)


def eigen(matrix, vectors=False):
    try:
        if vectors:
            return scipy.linalg.eig(matrix, right=True)
        return scipy.linalg.eigvals(matrix), None
    except scipy.linalg.LinAlgError as exc:
        raise AssemblyFailed(f"eigensolver did not converge: {exc}")


def cheb_coefficients(values):
    """Chebyshev coefficients of an even function given at the N folded nodes."""
    full = np.concatenate([values, values[::-1]])
    M = len(full) - 1
    coef = scipy.fft.dct(full, type=1) / M
    coef[0] /= 2
    coef[-1] /= 2
    return coef


def _decays(coef, tol=1e-6):
    coef = np.abs(coef)
    top = coef.max()
    if top == 0:
        return False
    tail = coef[int(0.8 * len(coef)):].max()
    return bool(tail / top < tol)


def match(ev_a, ev_b, rel=1e-4):
    """Boolean mask: entries of ev_a with a partner in ev_b within rel*max(1,|z|)."""
    ev_b = np.asarray(ev_b)
    out = np.zeros(len(ev_a), dtype=bool)
    if len(ev_b) == 0:
        return out
    for i, z in enumerate(ev_a):
        out[i] = np.min(np.abs(ev_b - z)) <= rel * max(1.0, abs(z))
    return out


def drift(ev_a, ev_b):
    """Distance from each entry of ev_a to its nearest partner in ev_b."""
    ev_b = np.asarray(ev_b)
    return np.array([np.min(np.abs(ev_b - z)) if len(ev_b) else np.inf for z in ev_a])


def window_eigs(assembly, window=-1.0):
    """Eigenpairs with Re >= window, sorted by decreasing real part.

    Eigenvectors are in the coefficient basis, so their first N entries are
    the Chebyshev coefficients of Phi.
    """
    vals, vecs = eigen(assembly.coef_matrix, vectors=True)
    keep = vals.real >= window
    vals, vecs = vals[keep], vecs[:, keep]
    order = np.lexsort((vals.imag, -vals.real))
    return vals[order], vecs[:, order]


def unstable_spectrum(assembly, threshold=THRESHOLD, reference=None, rel=1e-4,
                      coef_tol=1e-6, window=-1.0):
    """Eigenvalues with Re >= window, resolution flags, and the Re >= -threshold count.

    reference: eigenvalues of the same operator at another resolution.  An
    eigenvalue is resolved when it has a partner there within rel*max(1,|z|)
    and the Chebyshev coefficients of its Phi component decay below coef_tol.
    """
    flags = []
    try:
        vals, vecs = window_eigs(assembly, window)
    except AssemblyFailed as exc:
        flags.append(f"eigensolver: {exc}")
        vals, vecs = np.zeros(0, complex), np.zeros((2 * assembly.N, 0))
    N = assembly.N
    decays = np.array([_decays(vecs[:N, i], coef_tol) for i in range(len(vals))], bool)
    if reference is not None:
        close = match(vals, reference, rel)
        dr = drift(vals, reference)
    else:
        close = np.ones(len(vals), bool)
        dr = np.full(len(vals), np.nan)
        flags.append("no reference resolution; decay test only")
    resolved = close & decays
    near = vals.real >= -threshold
    count = int(np.sum(resolved & near))
    res = dict(N=N, a=assembly.a, Z_a=assembly.Z_a, n_window=int(len(vals)),
               n_resolved=int(resolved.sum()), raw_count=int(near.sum()),
               reference=reference is not None, rel=rel,
               drift=[float(x) for x in dr])
    return SpectralReport(vals, threshold, count, res, resolved, ~resolved, flags)


def spectrum_study(curve, params=None, a=A_DEFAULT, N=128, threshold=THRESHOLD, rel=1e-4):
    """Reports at N and 2N, each resolved against the other."""
    params = params or curve.params
    asm = {n: assemble(curve, curve, a, n, params) for n in (N, 2 * N)}
    ev = {n: eigen(asm[n].coef_matrix)[0] for n in asm}
    rep_n = unstable_spectrum(asm[N], threshold, ev[2 * N], rel)
    rep_2n = unstable_spectrum(asm[2 * N], threshold, ev[N], rel)
    for rep in (rep_n, rep_2n):
        rep.resolution.update(count_N=rep_n.unstable_count, count_2N=rep_2n.unstable_count,
                              consistent=rep_n.unstable_count == rep_2n.unstable_count)
    return rep_n, rep_2n, asm


def lambda_max(report):
    sel = report.resolved & (report.eigenvalues.real >= -report.threshold)
    if not sel.any():
        return 0.0
    return float(report.eigenvalues.real[sel].max())


def invariance_errors(assembly, shift=0.375, seed=0, threshold=THRESHOLD, window=-0.5):
    """Max changes of the eigenvalues with Re >= window under M + shift I and D M D^-1.

    D is a random positive diagonal applied in the coefficient basis.
    """
    base = np.sort_complex(eigen(assembly.coef_matrix)[0])
    base = base[base.real >= window]
    n = assembly.coef_matrix.shape[0]
    shifted = eigen(assembly.coef_matrix + shift * np.eye(n))[0] - shift
    rng = np.random.default_rng(seed)
    dg = np.exp(rng.uniform(-1.0, 1.0, n))
    similar = eigen(dg[:, None] * assembly.coef_matrix / dg[None, :])[0]
    return dict(shift=float(np.max(drift(base, shifted), initial=0.0)),
                similarity=float(np.max(drift(base, similar), initial=0.0)))
