"""Repulsivity margins and the unstable spectrum of the linearized flow."""
import numpy as np

from implosion import params, profile, repulsivity, spectral

curve = profile.find_profile(params.derive(d=3, gamma=2.0))

rep = repulsivity.margins(curve)
for k, v in rep.margins.items():
    print(f"{k:22s} {v: .6f}   at Z = {rep.locations.get(k, float('nan')):.4g}")
print("kappa =", rep.kappa, " verdict:", rep.verdicts)

# Cutting the domain a little beyond Z2 (at the root Z_a of the shifted
# discriminant) gives a problem with no boundary condition at the end.
for a in (0.0, 0.02, 0.08):
    print(f"a = {a:4.2f}  Z_a = {spectral.shifted_root(curve, a):.8f}")

rep_n, rep_2n, asm = spectral.spectrum_study(curve, curve.params, N=128)
print("unstable count at N=128 / 256:", rep_n.unstable_count, rep_2n.unstable_count)
sel = rep_n.resolved & (rep_n.eigenvalues.real >= -1.0)
for z in rep_n.eigenvalues[sel]:
    print(f"  lambda = {z.real: .10f} {z.imag:+.2e}i")

# r and 2 - r come from symmetries (blow-up time shift and potential gauge)
print("r =", curve.r, " 2 - r =", 2 - curve.r)
print("invariance errors:", spectral.invariance_errors(asm[128]))
