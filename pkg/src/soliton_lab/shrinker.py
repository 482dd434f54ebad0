"""Shrinking solitons of the power curve shortening flow.

Two routes are implemented and kept independent:

* shooting on the support-function ODE ``h + h'' = lam0 * h**((a-1)/a)``;
* the dual potential route: find ``c`` with period integral ``pi/k``, rebuild the
  angular profile ``g`` of the homogeneous dual solution, and map it back by
  ``h = ((1-2a) g / (2a)) ** (2a)``.

The map comes from Legendre degree duality: a function homogeneous of degree
1/(1-2a) whose unit sublevel set has support function ``h/(1-2a)`` conjugates
to ``(2a/(1-2a)) * H**(1/(2a))``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .core import (
    ROUND,
    FlowParams,
    PeriodicGrid,
    SolverError,
    periodic_derivative,
    require_fold,
    theta_grid,
)

CERT_TOL = 1e-8
_RTOL = 3e-14  # spectral h'' amplifies sampling noise by ~n^2/4
_ATOL = 1e-16


class Construction(enum.Enum):
    SHOOTING = "shoot"
    DUAL_POTENTIAL = "dual"
    ROUND_CLOSED_FORM = "round"


@dataclass(frozen=True)
class ShrinkerProfile:
    params: FlowParams
    fold: float | int
    h: PeriodicGrid
    construction: Construction
    residual_sup: float
    h0: float = float("nan")  # value at theta = 0 (the maximum for shot profiles)
    period_defect: float = 0.0

    @property
    def values(self) -> np.ndarray:
        return self.h.values

    @property
    def n(self) -> int:
        return self.h.n

    @property
    def is_round(self) -> bool:
        return self.fold == ROUND


def _rhs_value(params: FlowParams, h):
    a = params.alpha
    return params.lam0 * np.power(h, (a - 1.0) / a)


def shrinker_residual(profile: ShrinkerProfile | np.ndarray, params: FlowParams | None = None) -> float:
    """sup |h + h'' - lam0 h^((a-1)/a)| with spectral h''."""
    if isinstance(profile, ShrinkerProfile):
        params = profile.params
        h = profile.values
    else:
        h = np.asarray(profile, dtype=float)
    if params is None:
        raise ValueError("params required for a bare array")
    if np.any(h <= 0):
        return math.inf
    if np.ptp(h) == 0.0:
        hpp = np.zeros_like(h)
    else:
        hpp = periodic_derivative(h, 2)
    return float(np.max(np.abs(h + hpp - _rhs_value(params, h))))


def round_shrinker(params: FlowParams, n: int = 512) -> ShrinkerProfile:
    h = np.full(n, params.c_alpha)
    prof = ShrinkerProfile(params, ROUND, PeriodicGrid(h), Construction.ROUND_CLOSED_FORM, 0.0, params.c_alpha)
    return _with_residual(prof)


def _with_residual(prof: ShrinkerProfile) -> ShrinkerProfile:
    return ShrinkerProfile(
        prof.params, prof.fold, prof.h, prof.construction,
        shrinker_residual(prof), prof.h0, prof.period_defect,
    )


# --- shooting ----------------------------------------------------------------

def _shoot_rhs(params: FlowParams):
    lam0 = params.lam0
    ex = (params.alpha - 1.0) / params.alpha

    def f(_t, y):
        return [y[1], lam0 * y[0] ** ex - y[0]]

    return f


def _nonpositive(_t, y):
    return y[0] - 1e-300


_nonpositive.terminal = True


def half_period(params: FlowParams, h0: float) -> float:
    """Angle from the maximum h0 to the next minimum (first zero of h')."""
    turn = lambda _t, y: y[1]  # noqa: E731
    turn.terminal = True
    turn.direction = 1.0
    sol = solve_ivp(
        _shoot_rhs(params), (0.0, 2.0 * math.pi), [h0, 0.0], method="DOP853",
        rtol=_RTOL, atol=_ATOL, events=[turn, _nonpositive],
    )
    if sol.t_events[1].size:
        return -math.inf  # undershoot: trajectory left h > 0
    if not sol.t_events[0].size:
        return math.inf
    return float(sol.t_events[0][0])


def _slope_at(params: FlowParams, h0: float, theta: float) -> float:
    sol = solve_ivp(_shoot_rhs(params), (0.0, theta), [h0, 0.0], method="DOP853",
                    rtol=_RTOL, atol=_ATOL)
    return float(sol.y[1, -1])


def shoot_shrinker(params: FlowParams, k, n: int = 512) -> ShrinkerProfile:
    k = require_fold(params, k)
    if k == ROUND:
        # the circle is never shot
        return round_shrinker(params, n)
    target = math.pi / k
    ca = params.c_alpha

    lo = ca * (1.0 + 1e-6)
    t_lo = half_period(params, lo)
    if not t_lo < target:
        raise SolverError(f"shooting: small-amplitude half period {t_lo} not below pi/{k}")
    hi = None
    scanned = []
    for j in range(60):
        cand = ca * (1.0 + 1e-3 * 2.0**j)
        t = half_period(params, cand)
        scanned.append(cand)
        if t > target:
            hi = cand
            break
        lo = cand
    if hi is None:
        raise SolverError(f"shooting bracket not found on h(0) in [{ca}, {scanned[-1]}]")

    h0 = brentq(lambda x: half_period(params, x) - target, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)
    # polish on the slope at pi/k, which is smooth in h0 (the event time is not)
    d = 1e-6 * (h0 - ca)
    a_, b_ = h0 - d, h0 + d
    fa, fb = _slope_at(params, a_, target), _slope_at(params, b_, target)
    if fa * fb < 0:
        h0 = brentq(lambda x: _slope_at(params, x, target), a_, b_, xtol=1e-15, rtol=1e-15)

    values = _fold_sample(params, h0, k, n)
    full = solve_ivp(_shoot_rhs(params), (0.0, 2.0 * target), [h0, 0.0], method="DOP853",
                     rtol=_RTOL, atol=_ATOL)
    defect = float(max(abs(full.y[0, -1] - h0), abs(full.y[1, -1])))
    prof = ShrinkerProfile(params, k, PeriodicGrid(values), Construction.SHOOTING, 0.0, h0, defect)
    prof = _with_residual(prof)
    _certify(prof)
    return prof


def _fold_sample(params: FlowParams, h0: float, k: int, n: int) -> np.ndarray:
    period = 2.0 * math.pi / k
    th = theta_grid(n)
    red = np.mod(th, period)
    red = np.where(red > 0.5 * period, period - red, red)
    uniq, inv = np.unique(red, return_inverse=True)
    sol = solve_ivp(_shoot_rhs(params), (0.0, 0.5 * period), [h0, 0.0], method="DOP853",
                    rtol=_RTOL, atol=_ATOL, t_eval=np.clip(uniq, 0.0, 0.5 * period))
    return sol.y[0][inv]


def _certify(prof: ShrinkerProfile) -> None:
    h = prof.values
    if np.any(h <= 0):
        raise SolverError("certification: h not positive")
    if np.any(h + periodic_derivative(h, 2) <= 0):
        raise SolverError("certification: h + h'' not positive")
    if prof.residual_sup >= CERT_TOL:
        raise SolverError(f"certification: residual {prof.residual_sup:.3e} >= {CERT_TOL}")


# --- dual potential route --------------------------------------------------------

@dataclass(frozen=True)
class DualPotential:
    c: float
    t_lo: float
    t_hi: float
    alpha: float

    def two_h(self, t):
        """2 h_c(t)."""
        a = self.alpha
        return _two_h(self.c, a, t)

    def dh(self, t):
        """h_c'(t)."""
        a = self.alpha
        return (1.0 - 2.0 * a) * self.c * np.power(t, 1.0 - 4.0 * a) - t / (4.0 * a * a)


def _two_h(c: float, a: float, t):
    return c * np.power(t, 2.0 * (1.0 - 2.0 * a)) - t * t / (4.0 * a * a) - (2.0 * a / (1.0 - 2.0 * a)) ** 2


def tangency_potential(params: FlowParams) -> tuple[float, float]:
    """(c_inf, t_inf): the value where the positivity window of h_c shrinks to a point."""
    a = params.alpha
    t_inf = 2.0 * a * math.sqrt(2.0 * a / (1.0 - 2.0 * a))
    c_inf = t_inf ** (4.0 * a) / (4.0 * a * a * (1.0 - 2.0 * a))
    val = 0.5 * _two_h(c_inf, a, t_inf)
    slope = (1.0 - 2.0 * a) * c_inf * t_inf ** (1.0 - 4.0 * a) - t_inf / (4.0 * a * a)
    if abs(val) > 1e-10 or abs(slope) > 1e-10:
        raise SolverError(f"tangency system not satisfied: h={val:.2e}, h'={slope:.2e}")
    return c_inf, t_inf


def make_potential(params: FlowParams, c: float) -> DualPotential:
    a = params.alpha
    c_inf, _ = tangency_potential(params)
    if not c > c_inf:
        raise SolverError(f"c = {c} <= c_inf = {c_inf}: empty positivity window")
    # 2h_c peaks where its derivative vanishes
    t_star = (4.0 * a * a * (1.0 - 2.0 * a) * c) ** (1.0 / (4.0 * a))
    f = lambda t: _two_h(c, a, t)  # noqa: E731
    if not 2.0 * (4.0 * a * a * c) ** (1.0 / (4.0 * a)) < 1e150:
        raise SolverError(f"c = {c} overflows the positivity window at alpha = {a}")
    if f(t_star) <= 0:
        raise SolverError(f"c = {c} too close to c_inf: window lost to rounding")
    t_big = 2.0 * (4.0 * a * a * c) ** (1.0 / (4.0 * a))
    # 2h_c < 0 where c t^ex equals the constant term, which brackets t_lo from below
    ex = 2.0 * (1.0 - 2.0 * a)
    t_floor = ((2.0 * a / (1.0 - 2.0 * a)) ** 2 / c) ** (1.0 / ex)
    t_lo = brentq(f, min(t_floor, 0.5 * t_star), t_star, xtol=1e-300, rtol=1e-15, maxiter=500)
    t_hi = brentq(f, t_star, t_big, xtol=1e-300, rtol=1e-15, maxiter=500)
    return DualPotential(c, t_lo, t_hi, a)


def _panels(umax: float, scale: float) -> np.ndarray:
    """Breakpoints on [0, umax], geometric from the natural scale sqrt(t0) upward."""
    if scale >= 0.5 * umax:
        return np.array([0.0, umax])
    k = int(math.ceil(math.log2(umax / scale)))
    return np.concatenate(([0.0], umax * 2.0 ** -np.arange(k, -1, -1.0)))


def _gauss_half_integrals(pot: DualPotential, npts: int) -> float:
    a = pot.alpha
    c = pot.c
    ex = 2.0 * (1.0 - 2.0 * a)
    q = 1.0 / (4.0 * a * a)
    mid = 0.5 * (pot.t_lo + pot.t_hi)
    x, w = np.polynomial.legendre.leggauss(npts)
    total = 0.0
    # t = t_lo + u^2 on the lower half, t = t_hi - u^2 on the upper half; graded panels
    # because t^ex is only resolved on the scale u ~ sqrt(t_lo) when t_lo << t_hi
    for t0, sgn in ((pot.t_lo, 1.0), (pot.t_hi, -1.0)):
        umax = math.sqrt(abs(mid - t0))
        edges = _panels(umax, 0.5 * math.sqrt(t0))
        for u0, u1 in zip(edges[:-1], edges[1:]):
            u = u0 + 0.5 * (u1 - u0) * (x + 1.0)
            u2 = u * u
            pw = t0**ex * np.expm1(ex * np.log1p(sgn * u2 / t0))
            G = (c * pw - sgn * u2 * (2.0 * t0 + sgn * u2) * q) / u2
            if np.any(G <= 0):
                raise SolverError("period integral: integrand lost positivity")
            total += 0.5 * (u1 - u0) * float(np.sum(w * 2.0 / np.sqrt(G)))
    return total


def period_integral(pot: DualPotential, with_error: bool = False):
    """int dt / sqrt(2 h_c) over the positivity window."""
    lo = _gauss_half_integrals(pot, 32)
    hi = _gauss_half_integrals(pot, 64)
    err = abs(hi - lo)
    if err > 1e-8 * abs(hi):
        raise SolverError(f"period integral not converged (estimate {err:.2e})")
    return (hi, err) if with_error else hi


def period_integral_at(params: FlowParams, c: float) -> float:
    return period_integral(make_potential(params, c))


def dual_potential_for_fold(params: FlowParams, k) -> DualPotential:
    k = require_fold(params, k)
    if k == ROUND:
        raise SolverError("the round fold has no potential window; use tangency_potential")
    target = math.pi / k
    c_inf, _ = tangency_potential(params)

    def f(logd):
        return period_integral_at(params, c_inf * (1.0 + math.exp(logd))) - target

    lo = math.log(1e-9)
    flo = f(lo)
    if flo > 0:
        raise SolverError(f"fold {k}: period integral already above pi/k near tangency")
    hi = None
    for j in range(-20, 40):
        if f(float(j)) > 0:
            hi = float(j)
            break
        lo = float(j)
    if hi is None:
        raise SolverError(f"fold {k}: no c with period integral pi/k found")
    logd = brentq(f, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=300)
    return make_potential(params, c_inf * (1.0 + math.exp(logd)))


def reconstruct_dual_angle_profile(pot: DualPotential, k: int, n: int = 512,
                                   phase: float = 0.0) -> PeriodicGrid:
    """g(theta + phase), where g has its minimum t_lo at 0 and solves g'' = h_c'(g)."""
    period = 2.0 * math.pi / k
    th = theta_grid(n) + phase
    red = np.mod(th, period)
    red = np.where(red > 0.5 * period, period - red, red)
    uniq, inv = np.unique(red, return_inverse=True)
    sol = solve_ivp(lambda _t, y: [y[1], pot.dh(y[0])], (0.0, 0.5 * period), [pot.t_lo, 0.0],
                    method="DOP853", rtol=_RTOL, atol=_ATOL * pot.t_lo, t_eval=np.clip(uniq, 0.0, 0.5 * period))
    if not sol.success:
        raise SolverError(f"angle profile integration failed: {sol.message}")
    return PeriodicGrid(sol.y[0][inv])


def dual_angle_residual(g: np.ndarray, alpha: float) -> float:
    """sup residual of the homogeneous dual ODE
    (g/2a)(g'' + g/2a) - (1/2a - 1) g'^2 = 2a/(1-2a)."""
    g = np.asarray(g, dtype=float)
    p = 1.0 / (2.0 * alpha)
    g1 = periodic_derivative(g, 1)
    g2 = periodic_derivative(g, 2)
    res = p * g * (g2 + p * g) - (p - 1.0) * g1 * g1 - 2.0 * alpha / (1.0 - 2.0 * alpha)
    return float(np.max(np.abs(res)))


def support_from_dual(g: np.ndarray, alpha: float) -> np.ndarray:
    return np.power((1.0 - 2.0 * alpha) * np.asarray(g) / (2.0 * alpha), 2.0 * alpha)


def dual_shrinker(params: FlowParams, k, n: int = 512) -> ShrinkerProfile:
    """Shrinker from the dual potential route, rotated so the maximum sits at theta = 0."""
    k = require_fold(params, k)
    if k == ROUND:
        return round_shrinker(params, n)
    pot = dual_potential_for_fold(params, k)
    g = reconstruct_dual_angle_profile(pot, k, n, phase=math.pi / k)
    h = support_from_dual(g.values, params.alpha)
    prof = ShrinkerProfile(params, k, PeriodicGrid(h), Construction.DUAL_POTENTIAL, 0.0, float(h[0]))
    prof = _with_residual(prof)
    _certify(prof)
    return prof


def build_shrinker(params: FlowParams, fold, n: int = 512, method: str = "shoot") -> ShrinkerProfile:
    fold = require_fold(params, fold)
    if fold == ROUND:
        return round_shrinker(params, n)
    if method == "shoot":
        return shoot_shrinker(params, fold, n)
    if method == "dual":
        return dual_shrinker(params, fold, n)
    raise ValueError(f"unknown method {method!r}")


def dual_angle_function(pot: DualPotential, k: int):
    """Vectorised g(theta) from the dense output of g'' = h_c'(g), folded by symmetry."""
    period = 2.0 * math.pi / k
    sol = solve_ivp(lambda _t, y: [y[1], pot.dh(y[0])], (0.0, 0.5 * period), [pot.t_lo, 0.0],
                    method="DOP853", rtol=_RTOL, atol=_ATOL * pot.t_lo, dense_output=True)
    if not sol.success:
        raise SolverError(f"angle profile integration failed: {sol.message}")

    def g(theta):
        th = np.asarray(theta, dtype=float)
        red = np.mod(th, period)
        red = np.where(red > 0.5 * period, period - red, red)
        return sol.sol(red.ravel())[0].reshape(th.shape)

    return g
