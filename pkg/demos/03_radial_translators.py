"""Rotationally symmetric translators f_M and the barriers built from them."""
import numpy as np

from soliton_lab.core import derive_params
from soliton_lab import radial, shrinker

P = derive_params(0.1)
target = P.c_alpha**3 / (2 * (1 - 4 * P.alpha))
print(f"predicted A2 / M = {target:.6f}")
for M in (0.5, 1.0, 2.0, 4.0):
    sol = radial.with_fit(radial.solve_fM(P, M, 1e12))
    l = np.logspace(0, 10, 41)
    print(f"  M = {M:4}: A1 = {sol.A1:.5f}  A2/M = {sol.A2 / M:.6f}  ODE residual {radial.radial_ode_residual(sol, l):.1e}")

# %% barriers around the 3-fold shrinker
three = shrinker.shoot_shrinker(P, 3, 512)
M1, M2 = radial.barrier_levels(three)  # from sup h^2 and inf h^2
print(f"\nbarrier levels from the 3-fold profile: M1 = {M1:.5f}, M2 = {M2:.5f}")
for side in ("super", "sub"):
    rep = radial.barrier_residual_sign(three, side)
    print(f"  {side:5}: min {rep.min_rel:+.2e}  max {rep.max_rel:+.2e}  ok = {rep.ok}")
