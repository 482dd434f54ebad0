import math

import numpy as np
import pytest

from soliton_lab import dynamics
from soliton_lab.acceptance import SYNTHETICS
from soliton_lab.core import ParameterError
from soliton_lab.dynamics import Dominance, Trajectory

# mpmath at 30 digits, evaluated from the closed forms at alpha = 1/k^2
M_K3 = 0.735220135563018700
A_BY_K = {3: 3.626040618362036534, 4: 19.27427084070991142, 5: 56.75500922072866269}


def test_neutral_constants():
    assert dynamics.neutral_constant_M(1 / 9) == pytest.approx(M_K3, rel=1e-15)
    for k, a in A_BY_K.items():
        assert dynamics.contradiction_coefficient(k) == pytest.approx(a, rel=1e-13)


def test_beta_gap_k3():
    bp, bm = dynamics.round_betas(1 / 9, 3)
    assert bp - bm == pytest.approx(23 / 9, abs=1e-14)
    assert bp == pytest.approx(7 / 9, abs=1e-15)


def test_coefficient_sign_by_fold():
    assert all(dynamics.contradiction_coefficient(k) > 0 for k in range(3, 12))


@pytest.mark.parametrize("j", [0, 3, 6, 9])
def test_shifted_product_identity(j):
    lhs, rhs = dynamics.shifted_product(1 / 9, j)
    assert abs(lhs - rhs) < 1e-12
    if j == 3:
        assert abs(rhs) < 1e-15


def test_slaved_limits_closed_form():
    sysm = dynamics.NeutralSystem(3)
    a = 1 / 9
    assert sysm.c0_slope() == pytest.approx(M_K3 / (4 * (1 - 2 * a)) * 8)
    assert sysm.Q_slope() == pytest.approx(M_K3 * 8 / (4 * (1 - 2 * a) * -3))


def test_rhs_symmetry_under_reflection():
    # theta -> -theta flips the sine coefficients
    sysm = dynamics.NeutralSystem(3)
    y = np.random.default_rng(2).uniform(-1e-2, 1e-2, 8)
    flip = np.array([1, -1, 1, 1, 1, 1, -1, -1.0])
    assert np.allclose(sysm.rhs(y * flip), sysm.rhs(y) * flip, atol=1e-18)


def test_rhs_rotation_covariance():
    # rotating by phi mixes (c_k, s_k) by k phi and the 2k pair by 2k phi; rho' must not change
    sysm = dynamics.NeutralSystem(3)
    rng = np.random.default_rng(4)
    y = rng.uniform(-1e-2, 1e-2, 8)
    phi = 0.3

    def rot(v, ang):
        c, s = math.cos(ang), math.sin(ang)
        out = v.copy()
        out[0], out[1] = c * v[0] - s * v[1], s * v[0] + c * v[1]
        c2, s2 = math.cos(2 * ang), math.sin(2 * ang)
        for i, j in ((4, 6), (5, 7)):
            out[i], out[j] = c2 * v[i] - s2 * v[j], s2 * v[i] + c2 * v[j]
        return out

    def rho_dot(v):
        d = sysm.rhs(v)
        return 2 * (v[0] * d[0] + v[1] * d[1])

    assert rho_dot(rot(y, phi)) == pytest.approx(rho_dot(y), rel=1e-12)


def test_state_sampling():
    st = dynamics.NeutralState.random(1e-4, 3)
    assert st.rho == pytest.approx(1e-4, rel=1e-12)
    assert np.all(np.abs(st.vector()[2:]) <= 0.1 * math.sqrt(1e-4))


@pytest.fixture(scope="module")
def traj_small():
    return dynamics.integrate_neutral_system(3, dynamics.NeutralState.random(1e-4, 0), (0.0, 300.0), strict=False)


def test_rho_grows_like_plus_a(traj_small):
    rep = dynamics.slaving_relations_check(traj_small)
    assert rep.measured_rho_coefficient == pytest.approx(A_BY_K[3], rel=1e-3)
    # exact solution of rho' = a rho^2 through the window start
    s, rho = traj_small.s, traj_small.rho
    i = np.searchsorted(s, 100.0)
    j = np.searchsorted(s, 300.0) - 1
    pred = 1.0 / (1.0 / rho[i] - A_BY_K[3] * (s[j] - s[i]))
    assert rho[j] == pytest.approx(pred, rel=1e-2)


def test_slaving_relations(traj_small):
    rep = dynamics.slaving_relations_check(traj_small)
    assert rep.c0_ratio_error < 0.02
    assert rep.Q_ratio_error < 0.05
    assert rep.identity_error < 1e-12


def test_unstable_pair_stays_bounded(traj_small):
    rho = traj_small.rho
    c2 = np.hypot(traj_small.y[:, 4], traj_small.y[:, 6])
    assert np.max(c2[200:] / rho[200:]) < 10.0
    assert traj_small.relaxation_sweeps <= 12


def test_neutral_trajectory_classified_neutral(traj_small):
    c = dynamics.merle_zaag_classify(traj_small.as_mz(), lam=0.5, sigma=0.1)
    assert c.verdict == Dominance.NEUTRAL


def test_blow_up_is_reported():
    st = dynamics.NeutralState.random(1e-3, 0)
    with pytest.raises(dynamics.NeutralBlowUp) as info:
        dynamics.integrate_neutral_system(3, st, (0.0, 1000.0))
    t = info.value.trajectory
    assert t.status == "blow-up"
    # finite-time blow-up of rho' = a rho^2 from rho = 1e-3 lands near 1/(a rho0)
    assert t.s[-1] == pytest.approx(1 / (A_BY_K[3] * 1e-3), rel=0.25)


def test_s_rho_window_unreached(traj_small):
    assert dynamics.s_rho_limit_error(traj_small) == math.inf


def test_bad_neutral_inputs():
    with pytest.raises(ParameterError):
        dynamics.NeutralSystem(2)
    with pytest.raises(ParameterError):
        dynamics.integrate_neutral_system(3, dynamics.NeutralState(0.2, 0.0), (0, 10))
    with pytest.raises(ParameterError):
        dynamics.integrate_neutral_system(3, dynamics.NeutralState(1e-3, 0.0), (10, 0))


# --- classifier ------------------------------------------------------------------------------

S = np.linspace(1.0, 60.0, 6000)


@pytest.mark.parametrize("name", sorted(SYNTHETICS))
def test_synthetic_verdicts(name):
    want, fx, fy, fz = SYNTHETICS[name]
    got = dynamics.merle_zaag_classify(Trajectory.from_functions(S, fx, fy, fz), 1.0, 0.1)
    assert got.verdict == want


def test_violation_located():
    # x decays: x' - x >= -sigma(y+z) fails
    t = Trajectory.from_functions(S, lambda s: np.exp(-0.5 * s) + 0 * s, lambda s: 1e-3 * np.exp(-5 * s),
                                  lambda s: 1e-3 * np.exp(-5 * s))
    got = dynamics.merle_zaag_classify(t, 1.0, 0.1)
    assert got.verdict == Dominance.VIOLATED
    assert got.violation.startswith("x'") and got.violation_s >= np.median(S)


def test_no_branch_dominates():
    # y and z comparable: both inequalities hold but neither ratio separates
    t = Trajectory.from_functions(S, lambda s: 0 * s, lambda s: 0.05 + 0 * s, lambda s: 0.05 + 0 * s)
    got = dynamics.merle_zaag_classify(t, 1.0, 1.0)
    assert got.verdict == Dominance.VIOLATED and "no branch" in got.violation


def test_trajectory_validation():
    s = np.linspace(0, 1, 10)
    with pytest.raises(ParameterError):
        Trajectory(s, -np.ones(10), np.ones(10), np.ones(10))
    with pytest.raises(ParameterError):
        Trajectory(s[::-1], np.ones(10), np.ones(10), np.ones(10))
    with pytest.raises(ParameterError):
        Trajectory(s, np.zeros(10), np.zeros(10), np.zeros(10))
    with pytest.raises(ParameterError):
        Trajectory(s[:5], np.ones(5), np.ones(5), np.ones(5))


# --- window bound -----------------------------------------------------------------------------

def test_decoupled_system_has_large_margin():
    lam, L = 1.0, 10.0
    s = np.linspace(-L, L, 2001)
    z0 = 1e-2 / 2
    t = Trajectory(s, 0 * s, 0 * s + 1e-30, z0 * np.exp(-lam * (s + L)))
    wb = dynamics.quantitative_mz_bound(t, lam, 0.0, epsilon=1e-2)
    assert wb.holds
    # z on [-L/2, L/2] is at most z0 e^{-lam L/2}, far below 4 eps e^{-lam L/4}
    assert wb.margin > 0.3


def test_random_systems_sigma_hundredth():
    lam = 1.0
    margins = [dynamics.quantitative_mz_bound(dynamics.perturbed_linear_system(sd, lam, lam / 100), lam,
                                              lam / 100).margin for sd in range(20)]
    assert min(margins) >= 0.0


def test_sigma0_sweep_reported():
    assert dynamics.sigma0_sweep(1.0, range(5)) >= 0.01


def test_bound_needs_coverage():
    s = np.linspace(0, 5, 100)
    t = Trajectory(s, 0 * s + 1e-3, 0 * s + 1e-3, 0 * s + 1e-3)
    with pytest.raises(ParameterError):
        dynamics.quantitative_mz_bound(t, 1.0, 0.1, L=5.0)
