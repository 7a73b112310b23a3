import numpy as np
import pytest

from implosion import spectral
from implosion.spectral import AssemblyFailed, OperatorAssembly, RootNotBracketed


@pytest.fixture(scope="module")
def asm(study):
    return study[2][128]


def test_potential_identities(curve):
    p = curve.params
    Z = np.concatenate([np.linspace(1e-3, 2 * curve.Z2, 500), np.geomspace(2 * curve.Z2, 1e3, 300)])
    pot = spectral.potentials(curve, grid=Z)
    assert np.max(np.abs(pot.H1 - pot.H1_alt)) < 1e-8
    sonic = spectral.potentials(curve, grid=np.array([curve.Z2]))
    f = curve.fields(np.array([curve.Z2]))
    assert abs(sonic.H2[0] - f.sigma[0]) < 1e-12
    assert abs(pot.H1[-1] + 2 * (p.r - 1) / (p.p - 1)) < 1e-2
    assert abs(pot.H2[-1] - 1) < 1e-2


def test_H3_is_laplacian_ratio(curve):
    p = curve.params
    Z = np.linspace(0.2, 3.0, 20001)
    pot = spectral.potentials(curve, grid=Z)
    rho = (p.phi * curve.fields(Z).v) ** (2 / (p.p - 1))
    d1 = np.gradient(rho, Z, edge_order=2)
    d2 = np.gradient(d1, Z, edge_order=2)
    lap = d2 + (p.d - 1) * d1 / Z
    inner = slice(10, -10)
    assert np.max(np.abs(lap[inner] / rho[inner] - pot.H3[inner])) < 1e-5


def test_shifted_root(curve):
    assert abs(spectral.shifted_root(curve, 0.0) - curve.Z2) < 1e-10 * curve.Z2
    za = [spectral.shifted_root(curve, a) for a in (0.01, 0.02, 0.04, 0.08)]
    assert np.all(np.diff(za) > 0) and za[0] > curve.Z2
    Z = np.linspace(1e-6, za[1] * (1 - 1e-6), 2000)
    assert np.all(-spectral.D_a(curve, 0.02, Z) > 0)
    small = np.array([1e-4, 2e-4, 4e-4, 8e-4])
    gap = np.array([spectral.shifted_root(curve, a) for a in small]) - curve.Z2
    assert abs(np.polyfit(np.log(small), np.log(gap), 1)[0] - 1) < 0.01
    with pytest.raises(ValueError):
        spectral.shifted_root(curve, 0.5)
    with pytest.raises(RootNotBracketed):
        spectral.shifted_root(curve, 0.08, span=1e-9)


def test_constant_field(asm):
    N = asm.N
    out = asm.matrix @ np.concatenate([np.ones(N), np.zeros(N)])
    assert np.max(np.abs(out[:N])) < 1e-9
    assert np.max(np.abs(out[N:] - asm.pot.A3)) < 1e-9 * np.max(np.abs(asm.pot.A3))


def test_action_on_smooth_pair(asm, curve):
    p = curve.params
    a, Z, N = asm.a, asm.grid, asm.N
    pot = asm.pot
    phi, phi1, phi2 = np.exp(-Z ** 2), -2 * Z * np.exp(-Z ** 2), (4 * Z ** 2 - 2) * np.exp(-Z ** 2)
    th, th1 = np.cos(Z), -np.sin(Z)
    lam_phi = Z * phi1
    lam2_phi = Z ** 2 * phi2 + Z * phi1
    lap_phi = phi2 + (p.d - 1) * phi1 / Z
    f = curve.fields(Z)
    lam_H2 = -Z * f.w_Z
    At2 = pot.A1 + (2 * a - a * a) * pot.H2 * lam_H2 - a * pot.A2 * pot.H2
    top = -a * pot.H2 * lam_phi + th
    bottom = ((p.p - 1) * pot.Q * lap_phi - (1 - a) ** 2 * pot.H2 ** 2 * lam2_phi + At2 * lam_phi
              + pot.A3 * phi - (2 - a) * pot.H2 * Z * th1 + pot.A2 * th)
    got = asm.matrix @ np.concatenate([phi, th])
    assert np.max(np.abs(got[:N] - top)) < 1e-6 * np.max(np.abs(top))
    assert np.max(np.abs(got[N:] - bottom)) < 1e-6 * np.max(np.abs(bottom))
    assert np.max(np.abs(asm.ops["At2"].astype(float) - At2)) < 1e-10


def test_zero_operator():
    N = 64
    z = np.zeros((2 * N, 2 * N))
    fake = OperatorAssembly(0.02, 1.0, np.linspace(0.01, 1, N), z, N, coef_matrix=z)
    vals, _ = spectral.window_eigs(fake)
    assert np.all(vals == 0)
    rep = spectral.unstable_spectrum(fake, reference=np.zeros(2 * N))
    assert len(rep.eigenvalues) == 2 * N and np.all(rep.eigenvalues == 0)


def test_assembly_preconditions(curve):
    with pytest.raises(AssemblyFailed):
        spectral.assemble(curve, N=32)


def test_invariances(asm):
    err = spectral.invariance_errors(asm)
    assert err["shift"] < 1e-8 and err["similarity"] < 1e-8


def test_count_and_drift(study):
    rep_n, rep_2n, _ = study
    assert rep_n.resolution["consistent"]
    assert rep_n.unstable_count == rep_2n.unstable_count
    sel = rep_n.resolved & (rep_n.eigenvalues.real >= -rep_n.threshold)
    drift = np.array(rep_n.resolution["drift"])[sel]
    assert np.all(drift < 1e-4)


def test_symmetry_modes(study, curve):
    rep_n = study[0]
    ev = rep_n.eigenvalues[rep_n.resolved]
    for target, tol in ((curve.r, 1e-6), (2 - curve.r, 1e-6), (0.0, 1e-5)):
        assert np.min(np.abs(ev - target)) < tol, target
    assert abs(spectral.lambda_max(rep_n) - curve.r) < 1e-6


def test_first_order_route_agrees(asm, study, curve):
    L = spectral.first_order_matrix(asm, curve.params)
    other = np.sort_complex(spectral.eigen(L)[0])
    top = study[0].eigenvalues[:3]
    for z in top:
        assert np.min(np.abs(other - z)) < 1e-6
