"""Exterior of the round shrinker: bootstrap the fixed point, then push a Jacobi mode in
and read its coefficient back out.

Takes about 20 seconds on one core.
"""
from soliton_lab.core import derive_params
from soliton_lab import exterior, shrinker

P = derive_params(0.1)
res = exterior.bootstrap_exterior(shrinker.round_shrinker(P, 128), n_s=256, n_theta=128)
print(f"bootstrap: R = {res.R}, gamma = {res.gamma:.4f}, {res.iterations} iterations")
print("  contraction ratios:", ", ".join(f"{r:.3f}" for r in res.ratios[-5:]))

for j in (0, 3):
    amp = 1e-2
    fp = exterior.fixed_point_exterior(res.field, mode=j, amplitude=amp)
    fit = exterior.extract_mode_coefficient(fp.field, res.field, j)
    print(f"mode {j}: injected {amp:g}, recovered {fit.a:.6g}"
          f" ({'noise-limited' if fp.noise_limited else 'converged' if fp.converged else 'not converged'})")

# vertical translation only moves mode 0
shifted = exterior.shift_vertically(res.field, 1e-3)
fit = exterior.extract_mode_coefficient(shifted, res.field, 0)
print(f"vertical shift 1e-3 -> mode-0 coefficient {fit.a:.4g}")
