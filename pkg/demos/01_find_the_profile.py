"""Find the smooth self-similar profile for d=3, gamma=2 and look at it."""
import numpy as np

from implosion import params, profile

p = params.derive(d=3, gamma=2.0)
print(f"ell = {p.ell}, p = {p.p}, r* = {p.r_star:.6f}, r+ = {p.r_plus:.6f}")

# The scan walks r upward from just above 1 and keeps the first speed whose
# trajectory through the origin leaves the sonic point smoothly and then
# reaches the far field.
curve = profile.find_profile(p)
print(f"r1 = {curve.r:.12f}   Z2 = {curve.Z2:.10f}")
print("rejected roots (continue into a second sonic hit):",
      [round(float(x[0]), 10) for x in curve.crossing["rejected"]])

# Far away both Emden variables decay like Z^-r
print(f"tail slope {curve.tail_slope:.6f}   c_w = {curve.c_w:.5f}   c_sigma = {curve.c_sigma:.5f}")

Z = np.array([0.05, 0.5, 1.0, curve.Z2, 3.0, 10.0, 100.0])
f = curve.fields(Z)
for z, w, s in zip(Z, f.w, f.sigma):
    print(f"  Z = {z:8.3f}   w = {w: .6f}   sigma = {s:.6f}")

# Physical density and potential; rho_P(0) = 1 by normalization
phys = profile.reconstruct_physical(curve)
print("rho_P at 0, Z2, Zmax:", phys.rho_P[0], np.interp(curve.Z2, phys.grid, phys.rho_P), phys.rho_P[-1])

# The profile is not of finite energy; dampening its tail fixes that
damp = profile.dampen(phys, n_P=2.0)
x = np.array([1.0, 5.0, 10.0, 100.0, 1000.0])
rho, u, _ = damp.renormalized(x, 0.0)
print("dampened density:", np.array2string(rho, precision=4))
