"""Exterior translators S(l, theta) = e^{(1-2a)s} h / (1-2a) + w(s, theta), s = log l.

w solves w_ss + h^(1/a)(w + w_thth) + w_s = E(w) on [R, S_max] x S^1.  The linear
part is inverted mode by mode in the weighted eigenbasis of h (operator H0), and
the nonlinear problem is solved by Picard iteration on H0 o E.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import maximum_filter1d

from .core import (
    FlowParams,
    ParameterError,
    SolverError,
    StripGrid,
    periodic_derivative,
)
from .shrinker import ShrinkerProfile
from .spectrum import full_eigenbasis, resample_periodic, rotation_mode_value

GAP_MARGIN = 1e-3


class NonGraphicalError(SolverError):
    """S_s <= 0 somewhere: the support function no longer describes a graph."""


# --- exact exponential integrals of locally cubic data -------------------------------

def _moments(z: np.ndarray, kmax: int = 3) -> np.ndarray:
    """M_k(z) = int_0^1 u^k e^{z(1-u)} du for k = 0..kmax, shape (kmax+1, len(z))."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty((kmax + 1, z.size))
    small = np.abs(z) <= 2.0
    if small.any():
        zs = z[small]
        for k in range(kmax + 1):
            # sum_n z^n k! / (k+n+1)!
            term = np.full(zs.shape, 1.0 / (k + 1))
            acc = term.copy()
            for n in range(1, 40):
                term = term * zs / (k + n + 1)
                acc = acc + term
            out[k, small] = acc
    big = ~small
    if big.any():
        zb = z[big]
        out[0, big] = np.expm1(zb) / zb
        for k in range(1, kmax + 1):
            out[k, big] = (k * out[k - 1, big] - 1.0) / zb
    return out


# Lagrange coefficients of the cubic through nodes at u = offsets, as polynomials in u
def _lagrange_coeffs(offsets) -> np.ndarray:
    V = np.vander(np.asarray(offsets, float), 4, increasing=True)
    return np.linalg.inv(V)  # row k, column m: coefficient of u^k in basis poly m


_STENCILS = {"left": (0, 1, 2, 3), "mid": (-1, 0, 1, 2), "right": (-2, -1, 0, 1)}
_LAGRANGE = {key: _lagrange_coeffs(off) for key, off in _STENCILS.items()}


def forward_convolve(g: np.ndarray, beta: np.ndarray, ds: float, init=None) -> np.ndarray:
    """V(s) = e^{beta(s-s0)} V0 + int_{s0}^s e^{beta(s-t)} g(t) dt on a uniform grid.

    g is interpolated by cubics on 4-point stencils; the interval integrals are
    exact for that interpolant.  g has shape (n_s, modes), beta shape (modes,).
    """
    n = g.shape[0]
    if n < 4:
        raise ParameterError("need at least 4 samples in s")
    z = np.asarray(beta, float) * ds
    e = np.exp(z)
    Mk = _moments(z)
    wts = {key: ds * (C.T @ Mk) for key, C in _LAGRANGE.items()}  # (4, modes)
    V = np.zeros_like(g)
    if init is not None:
        V[0] = init
    for i in range(n - 1):
        key = "left" if i == 0 else ("right" if i == n - 2 else "mid")
        lo = i + _STENCILS[key][0]
        V[i + 1] = e * V[i] + np.sum(wts[key] * g[lo:lo + 4], axis=0)
    return V


def backward_convolve(g: np.ndarray, beta: np.ndarray, ds: float, tail: np.ndarray) -> np.ndarray:
    """U(s) = int_s^inf e^{beta (s - t)} g(t) dt with U(S_max) = tail."""
    return forward_convolve(g[::-1], -np.asarray(beta, float), ds, init=tail)[::-1].copy()


# --- finite differences in s ---------------------------------------------------------

def d_ds(w: np.ndarray, ds: float, order: int = 2) -> np.ndarray:
    out = np.empty_like(w)
    if order == 4 and w.shape[0] >= 7:
        out[2:-2] = (w[:-4] - 8 * w[1:-3] + 8 * w[3:-1] - w[4:]) / (12 * ds)
        out[:2] = (-25 * w[0:2] + 48 * w[1:3] - 36 * w[2:4] + 16 * w[3:5] - 3 * w[4:6]) / (12 * ds)
        out[-2:] = (25 * w[-2:] - 48 * w[-3:-1] + 36 * w[-4:-2] - 16 * w[-5:-3] + 3 * w[-6:-4]) / (12 * ds)
        return out
    out[1:-1] = (w[2:] - w[:-2]) / (2 * ds)
    out[0] = (-3 * w[0] + 4 * w[1] - w[2]) / (2 * ds)
    out[-1] = (3 * w[-1] - 4 * w[-2] + w[-3]) / (2 * ds)
    return out


def d2_ds2(w: np.ndarray, ds: float, order: int = 2) -> np.ndarray:
    out = np.empty_like(w)
    if order == 4 and w.shape[0] >= 7:
        out[2:-2] = (-w[:-4] + 16 * w[1:-3] - 30 * w[2:-2] + 16 * w[3:-1] - w[4:]) / (12 * ds * ds)
        for i, sl in ((0, slice(0, 6)), (1, slice(1, 7))):
            out[i] = (45 * w[sl][0] - 154 * w[sl][1] + 214 * w[sl][2] - 156 * w[sl][3] + 61 * w[sl][4] - 10 * w[sl][5]) / (12 * ds * ds)
        for i, sl in ((-1, slice(-6, None)), (-2, slice(-7, -1))):
            seg = w[sl][::-1]
            out[i] = (45 * seg[0] - 154 * seg[1] + 214 * seg[2] - 156 * seg[3] + 61 * seg[4] - 10 * seg[5]) / (12 * ds * ds)
        return out
    out[1:-1] = (w[2:] - 2 * w[1:-1] + w[:-2]) / (ds * ds)
    out[0] = (2 * w[0] - 5 * w[1] + 4 * w[2] - w[3]) / (ds * ds)
    out[-1] = (2 * w[-1] - 5 * w[-2] + 4 * w[-3] - w[-4]) / (ds * ds)
    return out


# --- the problem ------------------------------------------------------------------------

@dataclass
class ExteriorProblem:
    """Profile h, its eigenbasis on n_theta points, and the strip grid."""

    params: FlowParams
    h: np.ndarray
    grid: StripGrid
    lambdas: np.ndarray
    basis: np.ndarray  # (modes, n_theta), L^2_h orthonormal
    weight: np.ndarray  # dtheta * h^(-1/a)
    fold: float | int = math.inf

    @classmethod
    def build(cls, profile: ShrinkerProfile, R: float, s_max: float, n_s: int = 256,
              n_theta: int = 128) -> "ExteriorProblem":
        grid = StripGrid(R, s_max, n_s, n_theta)
        h = resample_periodic(profile.values, n_theta)
        if profile.fold != math.inf:
            p = replace(profile, h=type(profile.h)(h))
        else:
            p = replace(profile, h=type(profile.h)(np.full(n_theta, profile.params.c_alpha)))
            h = p.values
        lam, vec = full_eigenbasis(p, n_theta)
        # fix signs so each mode correlates positively with a deterministic reference
        ref = 1.0 + np.linspace(0.0, 1e-3, n_theta) + np.cos(np.arange(n_theta) * 0.37)
        w = (2.0 * math.pi / n_theta) * np.power(h, -1.0 / profile.params.alpha)
        s = np.sign(vec @ (w * ref))
        s[s == 0] = 1.0
        vec = vec * s[:, None]
        return cls(profile.params, np.asarray(h, float), grid, lam, vec, w, profile.fold)

    # spectral data -------------------------------------------------------------------
    @property
    def betas(self) -> tuple[np.ndarray, np.ndarray]:
        lam = self.lambdas
        disc = np.sqrt(1.0 - 4.0 * lam)
        bm = -0.5 * (1.0 + disc)
        bp = lam / bm
        if self.fold != math.inf:
            rot = np.argmin(np.abs(lam - rotation_mode_value(self.params)))
            bp = bp.copy()
            bp[rot] = self.params.cutoff
        return bp, bm

    @property
    def s(self) -> np.ndarray:
        return self.grid.s

    @property
    def ds(self) -> float:
        return self.grid.ds

    def project(self, field_: np.ndarray) -> np.ndarray:
        """Mode coefficients per s-slice: (n_s, modes)."""
        return (field_ * self.weight) @ self.basis.T

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs @ self.basis

    # homogeneous part ---------------------------------------------------------------
    def main(self):
        """Homogeneous S0 = e^{(1-2a)s} h / (1-2a) and its s/theta derivatives."""
        a = self.params.alpha
        k = 1.0 - 2.0 * a
        e = np.exp(k * self.s)[:, None]
        hpp = periodic_derivative(self.h, 2) if np.ptp(self.h) > 0 else np.zeros_like(self.h)
        S0 = e * self.h[None, :] / k
        return S0, e * self.h[None, :], k * e * self.h[None, :], e * hpp[None, :] / k

    # nonlinear error -------------------------------------------------------------------
    def nonlinear_error(self, w: np.ndarray, ws: np.ndarray | None = None) -> np.ndarray:
        a = self.params.alpha
        k = 1.0 - 2.0 * a
        s = self.s[:, None]
        if ws is None:
            ws = d_ds(w, self.ds)
        w_tt = periodic_derivative(w, 2, axis=1)
        S0, S0_s, _, S0_tt = self.main()
        S = S0 + w
        S_sum = S + S0_tt + w_tt
        h = self.h[None, :]
        ek = np.exp(-k * s)
        q = ws * ek
        Q = h + q
        if np.any(Q <= 0):
            i, j = np.unravel_index(np.argmin(Q), Q.shape)
            raise NonGraphicalError(f"S_s <= 0 at s = {self.s[i]:.4g}, theta index {j}")
        n = 1.0 / a
        hn1 = np.power(h, n - 1.0)
        T1 = -n * hn1 * q * (w + w_tt)
        x = q / h
        T2 = -np.power(h, n) * _taylor_tail(x, n) * S_sum
        pw = 2.0 - 1.0 / (2.0 * a)
        T3 = -np.power(Q, n) * S_sum * np.expm1(pw * np.log1p(np.exp(-4.0 * a * s) * Q * Q))
        return T1 + T2 + T3

    # linear solve ------------------------------------------------------------------------
    def split_index_ok(self, gamma: float) -> None:
        bp, _ = self.betas
        close = np.abs(bp - gamma) < GAP_MARGIN
        if close.any():
            raise ParameterError(f"gamma = {gamma} not strictly inside a spectral gap (beta+ = {bp[close][0]:.6f})")

    def H0(self, g: np.ndarray, gamma: float, with_ws: bool = True):
        """Solve w_ss + L w + w_s = g with w(R) = 0; modes with beta+ < gamma are
        integrated from R, the others are integrated in from infinity."""
        self.split_index_ok(gamma)
        bp, bm = self.betas
        gj = self.project(g)
        ds = self.ds
        fwd = bp < gamma
        V = np.zeros_like(gj)
        tails = np.zeros(gj.shape[1])
        if fwd.any():
            V[:, fwd] = forward_convolve(gj[:, fwd], bp[fwd], ds)
        if (~fwd).any():
            gb = gj[:, ~fwd]
            # local growth rate near S_max for the analytic tail, clipped below beta+
            with np.errstate(divide="ignore", invalid="ignore"):
                rate = np.log(np.abs(gb[-1] / gb[-2])) / ds
            rate = np.where(np.isfinite(rate), rate, 0.0)
            rate = np.minimum(rate, bp[~fwd] - 0.05)
            tail = gb[-1] / (bp[~fwd] - rate)
            tails[~fwd] = tail
            V[:, ~fwd] = -backward_convolve(gb, bp[~fwd], ds, tail)
        W = forward_convolve(V, bm, ds)
        w = self.synthesize(W)
        if not with_ws:
            return w
        ws = self.synthesize(V + bm * W)
        self.last_tail = tails
        return w, ws

    # norms ----------------------------------------------------------------------------------
    def weighted_norm(self, w: np.ndarray, gamma: float, order: int = 2) -> float:
        m = np.max(np.abs(w), axis=1)
        if order >= 1:
            ws = d_ds(w, self.ds)
            wt = periodic_derivative(w, 1, axis=1)
            m = np.maximum(m, np.max(np.abs(ws), axis=1))
            m = np.maximum(m, np.max(np.abs(wt), axis=1))
        if order >= 2:
            m = np.maximum(m, np.max(np.abs(d2_ds2(w, self.ds)), axis=1))
            m = np.maximum(m, np.max(np.abs(periodic_derivative(ws, 1, axis=1)), axis=1))
            m = np.maximum(m, np.max(np.abs(periodic_derivative(w, 2, axis=1)), axis=1))
        half = max(1, int(round(1.0 / self.ds)))
        win = maximum_filter1d(m, size=2 * half + 1, mode="nearest")
        return float(np.max(np.exp(-gamma * self.s) * win))

    # residual ---------------------------------------------------------------------------------
    def support_residual(self, w: np.ndarray, order: int = 4, interior: float = 1.0) -> dict:
        a = self.params.alpha
        k = 1.0 - 2.0 * a
        ds = self.ds
        S0, S0_s, S0_ss, S0_tt = self.main()
        ws = d_ds(w, ds, order)
        wss = d2_ds2(w, ds, order)
        w_tt = periodic_derivative(w, 2, axis=1)
        S = S0 + w
        S_s = S0_s + ws
        if np.any(S_s <= 0):
            raise NonGraphicalError("S_s <= 0 on the strip")
        S_sum = S + S0_tt + w_tt
        if np.any(S_sum <= 0):
            raise SolverError("S + S_thth <= 0: level curves not convex")
        s = self.s[:, None]
        Q = S_s * np.exp(-k * s)
        p = 1.0 / (2.0 * a) - 2.0
        # S_ss - S_s with the homogeneous part exact: S0_ss - S0_s = (k - 1) S0_s
        lap = (k - 1.0) * S0_s + (wss - ws)
        res = S_sum + np.power(Q, -1.0 / a) * np.power(1.0 + np.exp(-4.0 * a * s) * Q * Q, p) * lap
        rel = np.abs(res) / np.exp(k * s)
        keep = (self.s >= self.grid.s_min + interior) & (self.s <= self.grid.s_max - interior)
        return {
            "sup": float(np.max(np.abs(res[keep]))),
            "relative": float(np.max(rel[keep])),
            "relative_profile": np.max(rel, axis=1),
        }


def _taylor_tail(x: np.ndarray, n: float) -> np.ndarray:
    """(1+x)^n - 1 - n x, with a series where cancellation would bite."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    direct = np.expm1(n * np.log1p(np.where(small, 0.0, x))) - n * np.where(small, 0.0, x)
    c, term, series = n, np.ones_like(x), np.zeros_like(x)
    for j in range(2, 8):
        c = c * (n - j + 1) / j
        series = series + c * x**j
    return np.where(small, series, direct)


# --- user-facing field type ---------------------------------------------------------------

@dataclass
class ExteriorField:
    problem: ExteriorProblem
    w: np.ndarray
    ws: np.ndarray | None = None

    @property
    def grid(self) -> StripGrid:
        return self.problem.grid

    def norm(self, gamma: float, order: int = 2) -> "WeightedNorm":
        return WeightedNorm(gamma, order, self.problem.weighted_norm(self.w, gamma, order))

    def support(self) -> np.ndarray:
        return self.problem.main()[0] + self.w


@dataclass(frozen=True)
class WeightedNorm:
    gamma: float
    order: int
    value: float


def nonlinear_error(field_: ExteriorField) -> ExteriorField:
    return ExteriorField(field_.problem, field_.problem.nonlinear_error(field_.w, field_.ws))


def linear_solve_H0(g: ExteriorField, gamma: float) -> ExteriorField:
    w, ws = g.problem.H0(g.w, gamma)
    return ExteriorField(g.problem, w, ws)


def support_residual(field_: ExteriorField, order: int = 4, interior: float = 1.0) -> dict:
    return field_.problem.support_residual(field_.w, order, interior)


# --- fixed point ----------------------------------------------------------------------------

@dataclass
class FixedPointResult:
    field: ExteriorField
    ratios: list[float]
    increments: list[float]
    converged: bool
    R: float
    gamma: float
    iterations: int
    trace: list[dict] = field(default_factory=list)
    noise_limited: bool = False

    def as_dict(self) -> dict:
        return {
            "R": self.R,
            "gamma": self.gamma,
            "converged": self.converged,
            "iterations": self.iterations,
            "noise_limited": self.noise_limited,
            "ratios": [float(r) for r in self.ratios],
            "increments": [float(x) for x in self.increments],
            "attempts": self.trace,
        }


def _iterate(prob: ExteriorProblem, gamma: float, w0: np.ndarray, shift: np.ndarray,
             max_iter: int, tol: float):
    """w_{k+1} = shift + H0(E(w_k)); returns (w, ws, ratios, increments, converged)."""
    w = w0.copy()
    ws = None
    shift_s = d_ds(shift, prob.ds) if np.any(shift) else np.zeros_like(shift)
    incs: list[float] = []
    ratios: list[float] = []
    for _ in range(max_iter):
        g = prob.nonlinear_error(w, ws)
        u, us = prob.H0(g, gamma)
        w_new = shift + u
        ws_new = shift_s + us
        inc = prob.weighted_norm(w_new - w, gamma)
        if incs:
            ratios.append(inc / incs[-1] if incs[-1] > 0 else 0.0)
        incs.append(inc)
        w, ws = w_new, ws_new
        if inc < tol:
            return w, ws, ratios, incs, True
        if len(ratios) >= 2 and ratios[-1] > 1.0 and ratios[-2] > 1.0:
            break
    return w, ws, ratios, incs, False


def bootstrap_exterior(profile: ShrinkerProfile, R: float | None = None, length: float = 20.0,
                       n_s: int = 256, n_theta: int = 128, max_iter: int = 60, tol: float = 1e-10,
                       R_budget: float = 64.0, gamma: float | None = None) -> FixedPointResult:
    """First solution g0 from the zero initial guess, doubling R until the iteration contracts."""
    params = profile.params
    gamma = 1.0 - 6.0 * params.alpha if gamma is None else gamma
    R_try = 1.0 if R is None else float(R)
    attempts = []
    while True:
        prob = ExteriorProblem.build(profile, R_try, R_try + length, n_s, n_theta)
        shift = np.zeros((n_s, n_theta))
        try:
            w, ws, ratios, incs, conv = _iterate(prob, _gap_gamma(prob, gamma), shift, shift, max_iter, tol)
            ok = conv and all(r <= 0.5 for r in ratios)
            attempts.append({"R": R_try, "converged": conv, "max_ratio": max(ratios) if ratios else 0.0})
        except NonGraphicalError as exc:
            ok, conv = False, False
            ratios, incs, w, ws = [], [], shift, None
            attempts.append({"R": R_try, "converged": False, "error": str(exc)})
        if ok or R is not None or 2 * R_try > R_budget:
            res = FixedPointResult(ExteriorField(prob, w, ws), ratios, incs, ok, R_try,
                                   _gap_gamma(prob, gamma), len(incs), attempts)
            if not ok and R is None:
                raise SolverError(f"no contraction up to R = {R_try}: {attempts}")
            return res
        R_try *= 2.0


def _gap_gamma(prob: ExteriorProblem, gamma: float) -> float:
    """Nudge gamma off any beta+ (the decay rate of E(0) can sit on one)."""
    bp, _ = prob.betas
    g = gamma
    for _ in range(50):
        if np.all(np.abs(bp - g) >= GAP_MARGIN):
            return g
        g -= GAP_MARGIN
    raise ParameterError("could not place gamma in a spectral gap")


def jacobi_field(prob: ExteriorProblem, mode: int, amplitude: float) -> np.ndarray:
    bp, _ = prob.betas
    return amplitude * np.exp(bp[mode] * prob.s)[:, None] * prob.basis[mode][None, :]


def fixed_point_exterior(g_base: ExteriorField, u0: np.ndarray | None = None, mode: int | None = None,
                         amplitude: float = 0.0, max_iter: int = 60, tol: float = 1e-10) -> FixedPointResult:
    """Solution w = g_base + u0 + v with v = H0(E(g_base + u0 + v) - E(g_base)).

    The decay rate used for H0 is that of the forcing: beta_mode - 4a, off any beta+.
    """
    prob = g_base.problem
    a = prob.params.alpha
    bp, _ = prob.betas
    if u0 is None:
        if mode is None:
            raise ParameterError("give u0 or a mode index")
        u0 = jacobi_field(prob, mode, amplitude)
        gamma = float(bp[mode]) - 4.0 * a
    else:
        gamma = 1.0 - 6.0 * a
    gamma = _gap_gamma(prob, gamma)
    E_base = prob.nonlinear_error(g_base.w, g_base.ws)
    u0_s = d_ds(u0, prob.ds)
    if mode is not None:
        u0_s = bp[mode] * u0
    v = np.zeros_like(u0)
    vs = np.zeros_like(u0)
    noisy = False
    incs: list[float] = []
    ratios: list[float] = []
    conv = False
    for _ in range(max_iter):
        wt = g_base.w + u0 + v
        wts = (g_base.ws if g_base.ws is not None else d_ds(g_base.w, prob.ds)) + u0_s + vs
        rhs = prob.nonlinear_error(wt, wts) - E_base
        v_new, vs_new = prob.H0(rhs, gamma)
        inc = prob.weighted_norm(v_new - v, gamma)
        if incs:
            ratios.append(inc / incs[-1] if incs[-1] > 0 else 0.0)
        incs.append(inc)
        v, vs = v_new, vs_new
        if inc < tol * max(1.0, abs(amplitude)):
            conv = True
            break
        # rounding plateau: E(g + u0 + v) - E(g) cancels to noise once v is resolved
        if len(incs) >= 8 and min(incs[-4:]) >= 0.5 * min(incs[:-4]) \
                and inc < 1e-3 * prob.weighted_norm(u0 + v, gamma):
            noisy = True
            break
    wt = g_base.w + u0 + v
    wts = (g_base.ws if g_base.ws is not None else d_ds(g_base.w, prob.ds)) + u0_s + vs
    return FixedPointResult(ExteriorField(prob, wt, wts), ratios, incs, conv, prob.grid.s_min, gamma,
                            len(incs), noise_limited=noisy)


# --- mode extraction --------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeFit:
    a: float
    fit_error: float
    noise_floor: bool


def extract_mode_coefficient(w1: ExteriorField, w2: ExteriorField, j: int, beta: float | None = None,
                             window: tuple[float, float] | None = None) -> ModeFit:
    prob = w1.problem
    if w2.problem.grid != prob.grid:
        raise ParameterError("fields must share a strip")
    bp, _ = prob.betas
    beta = float(bp[j]) if beta is None else beta
    c = prob.project(w1.w - w2.w)[:, j]
    s = prob.s
    if window is None:
        lo = s[0] + 2.0 * (s[-1] - s[0]) / 3.0
        hi = s[-1] - 1.0
    else:
        lo, hi = window
    sel = (s >= lo) & (s <= hi)
    scale = max(1.0, float(np.max(np.abs(w1.w[sel]))) * math.exp(-beta * lo))
    amp = c[sel] * np.exp(-beta * s[sel])
    if np.max(np.abs(amp)) < 1e-12 * scale:
        return ModeFit(0.0, 0.0, True)
    sign = np.sign(np.median(amp))
    logs = np.log(np.abs(amp))
    a = sign * math.exp(float(np.mean(logs)))
    return ModeFit(a, float(np.std(logs)), False)


def shift_vertically(field_: ExteriorField, eps: float) -> ExteriorField:
    """Field of the translator moved by eps along x3: S'(l) = S(l - eps)."""
    prob = field_.problem
    a = prob.params.alpha
    k = 1.0 - 2.0 * a
    s = prob.s
    l_new = np.exp(s) - eps
    if np.any(l_new <= 0):
        raise ParameterError(f"shift {eps} reaches l <= 0 on the strip")
    # sources below the strip come from the spline's extrapolation of w
    s_src = np.log(l_new)
    spl = CubicSpline(s, field_.w, axis=0, extrapolate=True)
    S_new = np.exp(k * s_src)[:, None] * prob.h[None, :] / k + spl(s_src)
    w_new = S_new - prob.main()[0]
    return ExteriorField(prob, w_new)
