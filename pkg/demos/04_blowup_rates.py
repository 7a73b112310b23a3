"""Blow-up rates of the exact solution and a finite-volume check of it."""
from implosion import params, profile, simulate as sm

curve = profile.find_profile(params.derive(d=3, gamma=2.0))
phys = profile.reconstruct_physical(curve)
p = curve.params

rates = sm.physical_rates(phys, p)
print(f"sup|u|   ~ (T-t)^{rates.exponent_u:.6f}   expected {rates.expected_u:.6f}")
print(f"sup rho  ~ (T-t)^{rates.exponent_rho:.6f}   expected {rates.expected_rho:.6f}")
print("fixed-x limits (last three):", rates.limit_rho[-3:], rates.limit_u[-3:])

# Rusanov finite volumes on [0.5, 2] between t = 0 and t = 0.5, ghost cells exact
res, ratios = sm.convergence_study(phys, p, 0.0, 0.5, 0.5, 2.0, ns=(100, 200, 400))
for c in res:
    print(f"  n = {c.n:4d}   L1 = {c.L1:.3e}   Linf = {c.Linf:.3e}   mass defect {c.mass_defect:.1e}")
print("error ratios per halving:", [round(q, 3) for q in ratios])
