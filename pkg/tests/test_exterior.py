import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from soliton_lab import exterior, radial, shrinker
from soliton_lab.core import ParameterError, derive_params


@pytest.fixture(scope="module")
def boot_round(p01):
    return exterior.bootstrap_exterior(shrinker.round_shrinker(p01, 128), n_s=256, n_theta=128)


@pytest.fixture(scope="module")
def boot_fold3(fold3):
    return exterior.bootstrap_exterior(fold3, n_s=256, n_theta=128)


@pytest.fixture(scope="module")
def small_problem(fold3):
    return exterior.ExteriorProblem.build(fold3, 2.0, 14.0, 160, 64)


# --- convolutions -------------------------------------------------------------------

@pytest.mark.parametrize("beta,c", [(-0.2, 0.3), (0.8, -1.0), (1.5, 1.2), (-30.0, 0.5)])
def test_forward_convolution_exponential(beta, c):
    s = np.linspace(0.0, 5.0, 201)
    ds = s[1] - s[0]
    g = np.exp(c * s)[:, None]
    V = exterior.forward_convolve(g, np.array([beta]), ds)[:, 0]
    exact = (np.exp(c * s) - np.exp(beta * s)) / (c - beta)
    assert np.max(np.abs(V - exact) / (1 + np.abs(exact))) < 5e-8


def test_convolution_is_fourth_order():
    errs = []
    for n in (101, 201):
        s = np.linspace(0.0, 5.0, n)
        V = exterior.forward_convolve(np.sin(2 * s)[:, None], np.array([-0.7]), s[1] - s[0])[:, 0]
        # int_0^s e^{b(s-t)} sin 2t dt
        b = -0.7
        exact = (2 * np.exp(b * s) - b * np.sin(2 * s) - 2 * np.cos(2 * s)) / (b * b + 4)
        errs.append(np.max(np.abs(V - exact)))
    assert errs[0] / errs[1] > 14


def test_backward_convolution_exponential():
    beta, c = 1.2, 0.3
    s = np.linspace(0.0, 6.0, 241)
    g = np.exp(c * s)[:, None]
    tail = np.array([g[-1, 0] / (beta - c)])
    U = exterior.backward_convolve(g, np.array([beta]), s[1] - s[0], tail)[:, 0]
    exact = np.exp(c * s) / (beta - c)
    assert np.max(np.abs(U / exact - 1)) < 1e-9


def test_moments_series_and_recurrence_meet():
    z = np.array([2.0 - 1e-9, 2.0 + 1e-9, -2.0 - 1e-9, -2.0 + 1e-9])
    M = exterior._moments(z)
    assert np.allclose(M[:, 0], M[:, 1], rtol=1e-8) and np.allclose(M[:, 2], M[:, 3], rtol=1e-8)
    # M_0(z) = (e^z - 1) / z
    zz = np.array([1e-6, 0.5, 3.0, -7.0])
    assert np.allclose(exterior._moments(zz)[0], np.expm1(zz) / zz, rtol=1e-13)


def test_finite_differences_fourth_order():
    errs = []
    for n in (101, 201):
        s = np.linspace(0, 2, n)
        w = np.sin(3 * s)[:, None]
        ds = s[1] - s[0]
        errs.append(max(np.max(np.abs(exterior.d_ds(w, ds, 4)[:, 0] - 3 * np.cos(3 * s))),
                        np.max(np.abs(exterior.d2_ds2(w, ds, 4)[:, 0] + 9 * np.sin(3 * s)))))
    assert errs[0] / errs[1] > 12


def test_taylor_tail_continuous_at_switch():
    n = 10.0
    x = np.array([1e-3 * (1 - 1e-9), 1e-3 * (1 + 1e-9), -1e-3 * (1 - 1e-9), -1e-3 * (1 + 1e-9)])
    t = exterior._taylor_tail(x, n)
    assert t[0] == pytest.approx(t[1], rel=1e-6) and t[2] == pytest.approx(t[3], rel=1e-6)
    assert exterior._taylor_tail(np.array([0.5]), n)[0] == pytest.approx(1.5**10 - 1 - 5, rel=1e-14)


# --- linear solve ------------------------------------------------------------------------

def _forcing(prob, seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((prob.basis.shape[0],)) * np.exp(-0.3 * np.arange(prob.basis.shape[0]))
    return np.exp(0.2 * prob.s)[:, None] * (c @ prob.basis)[None, :] * np.cos(prob.s)[:, None]


def test_H0_linearity(small_problem):
    prob = small_problem
    g1, g2 = _forcing(prob, 1), _forcing(prob, 2)
    w12, _ = prob.H0(2.0 * g1 - 3.0 * g2, 0.4)
    w1, _ = prob.H0(g1, 0.4)
    w2, _ = prob.H0(g2, 0.4)
    assert np.max(np.abs(w12 - (2 * w1 - 3 * w2))) < 1e-10 * np.max(np.abs(w12))


def test_H0_solves_mode_equations(small_problem):
    prob = small_problem
    g = _forcing(prob, 4)
    w, ws = prob.H0(g, 0.4)
    W = prob.project(w)
    G = prob.project(g)
    ds = prob.ds
    Wss = exterior.d2_ds2(W, ds, 4)
    Ws = exterior.d_ds(W, ds, 4)
    res = Wss + Ws + prob.lambdas[None, :] * W - G
    inner = slice(4, -4)
    scale = np.max(np.abs(G[inner]), axis=0) + np.max(np.abs(W[inner]), axis=0)
    low = slice(0, 20)  # high modes are stiff in s at this grid
    assert np.max(np.abs(res[inner, low]) / scale[low]) < 1e-4
    assert np.max(np.abs(w[0])) < 1e-14  # w(R) = 0
    assert np.max(np.abs(ws - exterior.d_ds(w, ds, 4))[inner]) < 1e-5 * np.max(np.abs(ws))


def test_gamma_must_sit_in_a_gap(small_problem):
    bp, _ = small_problem.betas
    with pytest.raises(ParameterError):
        small_problem.H0(np.zeros((160, 64)), float(bp[0]) + 1e-4)


def test_rotation_mode_pinned_to_cutoff(small_problem, p01):
    bp, _ = small_problem.betas
    assert np.any(bp == p01.cutoff)


def test_weighted_norm_of_exponential(small_problem):
    prob = small_problem
    c, gamma = 0.5, 1.0
    w = np.exp(c * prob.s)[:, None] * np.ones((1, 64))
    got = prob.weighted_norm(w, gamma, order=0)
    # sup is taken at s = R, where the window reaches one unit forward
    half = int(round(1.0 / prob.ds))
    want = math.exp(-gamma * prob.s[0]) * math.exp(c * prob.s[half])
    assert got == pytest.approx(want, rel=1e-12)
    assert prob.weighted_norm(w, gamma, order=2) >= got


def test_non_graphical_detected(small_problem):
    prob = small_problem
    S0, S0_s, _, _ = prob.main()
    w = np.zeros_like(S0)
    with pytest.raises(exterior.NonGraphicalError):
        prob.nonlinear_error(w, -2.0 * S0_s)


def test_bootstrap_is_a_fixed_point(boot_round):
    prob = boot_round.field.problem
    w, ws = boot_round.field.w, boot_round.field.ws
    again, _ = prob.H0(prob.nonlinear_error(w, ws), boot_round.gamma)
    assert prob.weighted_norm(again - w, boot_round.gamma) < 1e-9


# --- bootstrap and oracle -----------------------------------------------------------------

def test_bootstrap_round(boot_round):
    assert boot_round.converged and max(boot_round.ratios) <= 0.5
    assert exterior.support_residual(boot_round.field)["relative"] < 1e-4


def test_round_field_against_ode_oracle(p01, boot_round):
    """Round profile: the support equation is an ODE in s; shoot it from R with the same slope."""
    a = p01.alpha
    k = 1 - 2 * a
    p = 1 / (2 * a) - 2
    prob = boot_round.field.problem
    s = prob.s
    S0, S0_s, _, _ = prob.main()
    w, ws = boot_round.field.w[:, 0], boot_round.field.ws[:, 0]

    def rhs(x, y):
        S, Ss = y
        Q = Ss * math.exp(-k * x)
        return [Ss, Ss - S * Q ** (1 / a) / (1 + math.exp(-4 * a * x) * Q * Q) ** p]

    sol = solve_ivp(rhs, (s[0], s[-1]), [S0[0, 0] + w[0], S0_s[0, 0] + ws[0]], method="DOP853",
                    rtol=1e-12, atol=1e-14, t_eval=s)
    err = np.abs(sol.y[0] - (S0[:, 0] + w)) / np.exp(k * s)
    assert err.max() < 1e-6
    assert np.max(np.ptp(boot_round.field.w, axis=1)) < 1e-8  # stays rotation invariant


def test_radial_translator_as_exterior_field(p01):
    prob = exterior.ExteriorProblem.build(shrinker.round_shrinker(p01, 64), 0.0, 12.0, 256, 64)
    f = radial.solve_fM(p01, 1.0, 1e12)
    w = f(np.exp(prob.s))[:, None] - prob.main()[0]
    assert prob.support_residual(w)["relative"] < 1e-6


def test_bootstrap_fold3(boot_fold3):
    assert boot_fold3.converged and max(boot_fold3.ratios) <= 0.5
    assert boot_fold3.R >= 1.0
    assert exterior.support_residual(boot_fold3.field)["relative"] < 1e-4


def test_contraction_tail_is_monotone(boot_fold3):
    r = boot_fold3.ratios
    first = next((i for i, x in enumerate(r) if x < 0.5), None)
    assert first is not None and all(x < 0.5 for x in r[first:])


@pytest.mark.parametrize("j", [0, 3])
def test_round_trip_fold3(boot_fold3, j):
    fp = exterior.fixed_point_exterior(boot_fold3.field, mode=j, amplitude=1e-2)
    fit = exterior.extract_mode_coefficient(fp.field, boot_fold3.field, j)
    assert abs(fit.a / 1e-2 - 1) < 1e-3
    assert fp.converged or fp.noise_limited
    prob = boot_fold3.field.problem
    injected = prob.weighted_norm(exterior.jacobi_field(prob, j, 1e-2), fp.gamma)
    assert fp.increments[-1] < 1e-3 * injected


def test_vertical_shift_is_a_mode0_field(boot_round):
    eps = 1e-3
    prob = boot_round.field.problem
    shifted = exterior.shift_vertically(boot_round.field, eps)
    fit = exterior.extract_mode_coefficient(shifted, boot_round.field, 0)
    # S(l - eps) - S(l) ~ -eps S_l ~ -eps h e^{-2a s}, and e^{-2a s} is the beta_0^+ decay
    pred = -eps * float(np.sum(prob.weight * prob.h * prob.basis[0]))
    assert fit.a == pytest.approx(pred, rel=2e-3)


def test_fixed_point_needs_a_mode(boot_round):
    with pytest.raises(ParameterError):
        exterior.fixed_point_exterior(boot_round.field)


def test_fit_on_identical_fields_is_noise(boot_round):
    fit = exterior.extract_mode_coefficient(boot_round.field, boot_round.field, 0)
    assert fit.noise_floor and fit.a == 0.0
