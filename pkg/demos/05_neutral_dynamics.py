"""Truncated dynamics on the neutral directions of the 3-fold shrinker at alpha = 1/9.

The radius rho grows as rho' = a rho^2, so small states leave the small regime in finite
s. Before that, the fast coefficients are slaved to rho and the classifier sees the
neutral branch dominate.
"""
from soliton_lab import dynamics

k = 3
print(f"a = {dynamics.contradiction_coefficient(k):.6f}, M = {dynamics.neutral_constant_M(1 / k**2):.6f}")

for rho0, smax in ((1e-5, 500.0), (1e-4, 300.0)):
    tr = dynamics.integrate_neutral_system(k, dynamics.NeutralState.random(rho0, 0), (0.0, smax), strict=False)
    rep = dynamics.slaving_relations_check(tr)
    verdict = dynamics.merle_zaag_classify(tr.as_mz(), lam=0.5, sigma=0.1).verdict
    print(f"rho0 = {rho0:g}: rho(s_end) = {tr.rho[-1]:.3e}, rho'/rho^2 = {rep.measured_rho_coefficient:.4f}, "
          f"slaving errors {rep.c0_ratio_error:.1e} / {rep.Q_ratio_error:.1e}, {verdict.value}")

# blow-up time of rho' = a rho^2 is 1/(a rho0)
a = dynamics.contradiction_coefficient(k)
try:
    dynamics.integrate_neutral_system(k, dynamics.NeutralState.random(1e-3, 0), (0.0, 1000.0))
except dynamics.NeutralBlowUp as exc:
    print(f"rho0 = 1e-3 leaves the small regime at s = {exc.trajectory.s[-1]:.1f} (1/(a rho0) = {1 / (a * 1e-3):.1f})")
