import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from soliton_lab import radial, shrinker
from soliton_lab.core import ParameterError, derive_params


@pytest.fixture(scope="module")
def f1(p01):
    return radial.solve_fM(p01, 1.0, 1e12)


def _inverse_by_ivp(p01, M, r_end):
    """Oracle: integrate r = (M + G'^2)^p G' G'' as a first-order system in r."""
    p = 1 / (2 * p01.alpha) - 2
    # near r = 0: G' ~ sqrt(y), y ~ r^2 M^-p, so G ~ r^2 M^(-p/2) / 2
    r0 = 1e-6
    y0 = r0 * r0 * M**-p
    def rhs(r, z):
        G, Gp = z
        return [Gp, r / ((M + Gp * Gp) ** p * Gp)]
    sol = solve_ivp(rhs, (r0, r_end), [0.5 * r0 * math.sqrt(y0), math.sqrt(y0)], method="DOP853",
                    rtol=1e-12, atol=1e-14, dense_output=True)
    return sol


@pytest.mark.parametrize("M", [0.5, 1.0, 2.0])
def test_closed_form_inverse_against_ivp(p01, M):
    sol = radial.solve_fM(p01, M, 1e6)
    r = np.array([0.01, 0.1, 1.0, 3.0, 10.0])
    ref = _inverse_by_ivp(p01, M, 10.0).sol(r)[0]
    assert np.max(np.abs(sol.G(r) / ref - 1)) < 1e-7


def test_radial_ode_residual(f1):
    assert radial.radial_ode_residual(f1, np.logspace(-2, 10, 40)) < 1e-8


def test_boundary_behaviour(f1):
    assert f1.f[0] == 0.0
    l = np.array([1e-12, 1e-10, 1e-8])
    assert np.all(np.diff(f1(l)) > 0) and f1(l)[0] < 1e-5
    assert np.all(np.diff(f1.dfdl_at_r(f1(l))) < 0)  # f' blows up towards the origin


def test_increasing_and_concave(f1):
    r = f1.r[1:]
    assert np.all(f1.dfdl_at_r(r) > 0)
    assert np.all(f1.d2fdl2_at_r(r) < 0)


def test_far_field_leading_ratio(p01, f1):
    a = p01.alpha
    A1, _ = radial.far_field_coefficients(p01, 1.0)
    ratio = f1(np.array([1e12]))[0] / 1e12 ** (1 - 2 * a)
    assert ratio == pytest.approx(A1, rel=1e-3)


def test_inverse_far_field_expansion(p01, f1):
    t = f1(np.array([1e10, 1e11, 1e12]))
    approx = radial.inverse_far_field(p01, 1.0, t)
    # the o(...) remainder is relatively l^(-8a) smaller than the correction
    assert np.max(np.abs(approx / np.array([1e10, 1e11, 1e12]) - 1)) < 1e-5


def test_fit_coefficients(p01, f1):
    sol = radial.with_fit(f1)
    A1, A2 = radial.far_field_coefficients(p01, 1.0)
    assert sol.A1 == pytest.approx(A1, rel=1e-3)
    assert sol.A2 == pytest.approx(A2, rel=1e-2)


def test_second_coefficient_linear_in_M(p01):
    A2 = [radial.with_fit(radial.solve_fM(p01, M, 1e12)).A2 for M in (0.5, 1.0, 2.0)]
    assert A2[1] / A2[0] == pytest.approx(2.0, rel=1e-2)
    assert A2[2] / A2[1] == pytest.approx(2.0, rel=1e-2)


def test_monotone_in_M(p01):
    # measured direction: larger M gives the larger profile
    l = np.logspace(-3, 8, 60)
    f = [radial.solve_fM(p01, M, 1e12)(l) for M in (0.5, 1.0, 2.0)]
    assert np.all(f[1] > f[0]) and np.all(f[2] > f[1])


def test_fit_needs_range(p01):
    with pytest.raises(ParameterError):
        radial.fit_asymptotics(radial.solve_fM(p01, 1.0, 10.0), min_span=40.0)


def test_bad_inputs(p01, f1):
    with pytest.raises(ParameterError):
        radial.solve_fM(p01, -1.0)
    with pytest.raises(ParameterError):
        radial.solve_fM(p01, 1.0, 0.5)
    with pytest.raises(ParameterError):
        f1(np.array([0.0]))
    with pytest.raises(ParameterError):
        f1.G(np.array([-1.0]))


# --- barriers ---------------------------------------------------------------------------

def test_barrier_levels(p01, fold3, round01):
    M1, M2 = radial.barrier_levels(fold3)
    assert M1 > 1 > M2
    h = fold3.values
    assert M1 == pytest.approx(h.max() ** 2 / p01.c_alpha**2)
    assert radial.barrier_levels(round01) == (pytest.approx(1.0), pytest.approx(1.0))


def test_barrier_signs(fold3):
    sup = radial.barrier_residual_sign(fold3, "super")
    sub = radial.barrier_residual_sign(fold3, "sub")
    assert sup.ok and sub.ok
    assert sup.max_rel > 1e-3 and sub.min_rel < -1e-3  # strict away from the origin
    # the factored identity substitutes the shrinker equation, so the gap carries its residual
    assert max(sup.identity_gap, sub.identity_gap) < 10 * fold3.residual_sup


def test_round_barrier_vanishes(p01):
    rel, _, _ = radial.barrier_residual_field(shrinker.round_shrinker(p01, 64), 1.0, np.logspace(-3, 6, 91))
    assert np.max(np.abs(rel)) < 1e-9


def test_wrong_barrier_level_flips_sign(fold3):
    M1, M2 = radial.barrier_levels(fold3)
    rel, _, _ = radial.barrier_residual_field(fold3, M2, np.logspace(0, 4, 9))
    assert rel.min() < -1e-3  # M2 is not a supersolution level


def test_barrier_side_name(fold3):
    with pytest.raises(ParameterError):
        radial.barrier_residual_sign(fold3, "both")
