"""Entropy of the homogeneous dual solutions, sampled on a grid and from the closed form.

J orders the shrinkers: the circle lowest, the 3-fold highest.
"""
import numpy as np

from soliton_lab.core import derive_params, ROUND
from soliton_lab import geometry
from soliton_lab.acceptance import _fold_dual_sample  # grid sample of r^(1/2a) g(theta)

alpha = 0.05
P = derive_params(alpha)
x = np.linspace(-1.0, 1.0, 201)
X, Y = np.meshgrid(x, x, indexing="ij")
annulus = (np.hypot(X, Y) > 0.3) & (np.hypot(X, Y) < 0.9)  # away from the cone point and the edge
for k in (ROUND, 4, 3):
    closed = geometry.entropy_J_closed_form(P, k)
    fld = geometry.entropy_J_field(_fold_dual_sample(P, k, x), alpha, order=4, region=annulus)
    print(f"fold {'inf' if k == ROUND else k:>3}: closed form {closed:.6f}, "
          f"grid mean {fld.mean():.6f} (relative spread {fld.spread():.1e})")

# %% the closed form across alpha
for a in (0.01, 0.02, 0.04, 0.06):
    p = derive_params(a)
    js = [geometry.entropy_J_closed_form(p, k) for k in [ROUND, *range(p.m, 2, -1)]]
    print(f"alpha = {a}: J =", np.array2string(np.array(js), precision=3))
