"""Build the shrinking solitons available at a given alpha and look at their spectra.

Run: python3 demos/01_shrinkers.py [alpha]
"""
import sys

import numpy as np

from soliton_lab.core import derive_params, classify_shrinkers, ROUND
from soliton_lab.shrinker import build_shrinker
from soliton_lab.spectrum import eigen_spectrum

alpha = float(sys.argv[1]) if len(sys.argv) > 1 else 0.05
P = derive_params(alpha)
folds = sorted(classify_shrinkers(P), key=lambda k: (k == ROUND, k))
print(f"alpha = {alpha}: m = {P.m}, folds = {['inf' if k == ROUND else k for k in folds]}")

# %% each profile, both constructions where the fold allows it
for k in folds:
    prof = build_shrinker(P, k, 512)
    h = prof.values
    line = f"  fold {'inf' if k == ROUND else k:>3}: max/min = {h.max() / h.min():8.4f}  residual {prof.residual_sup:.1e}"
    if k != ROUND:
        other = build_shrinker(P, k, 512, method="dual")
        # the two profiles may differ by a rotation; compare the sorted samples
        line += f"  |shoot - dual| = {np.max(np.abs(np.sort(h) - np.sort(other.values))):.1e}"
    print(line)

# %% slow modes: the circle has more of them than any fold
print("\nslow Jacobi exponents (beta+ below the cutoff 1 - 2a):")
for k in (ROUND, 3):
    sp = eigen_spectrum(build_shrinker(P, k, 512), 512)
    print(f"  fold {'inf' if k == ROUND else k}: K+1 = {sp.count}, beta+ =",
          np.array2string(sp.betas_plus[:sp.count], precision=4))
