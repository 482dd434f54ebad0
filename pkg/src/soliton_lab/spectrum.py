"""Weighted spectrum of L phi = h^(1/a) (phi + phi''), Jacobi exponents, slow-mode count.

The operator is discretised as the symmetric-definite pencil A phi = lam W phi with
A = dtheta (I + D2) and W = dtheta diag(h^(-1/a)).  D2 is the Fourier second
derivative by default; ``stencil="fd2"`` selects the periodic 3-point stencil.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.signal

from .core import (
    ROUND,
    FlowParams,
    ParameterError,
    SolverError,
    fd2_matrix,
    jacobi_pair,
    periodic_derivative,
    spectral_d2_matrix,
    theta_grid,
)
from .shrinker import ShrinkerProfile

NEAR_RESONANT = "near-resonant, refine"


def resample_periodic(values: np.ndarray, n: int) -> np.ndarray:
    """Trigonometric interpolation of a periodic sample onto n points."""
    v = np.asarray(values, dtype=float)
    if v.size == n:
        return v.copy()
    if v.size % n == 0:
        return v[:: v.size // n].copy()
    return scipy.signal.resample(v, n)


def _weights(h: np.ndarray, alpha: float) -> np.ndarray:
    if np.any(h <= 0):
        raise ParameterError("h must be positive for the weight h^(-1/a)")
    return np.power(h, -1.0 / alpha)


def assemble_weighted_eigenproblem(profile: ShrinkerProfile, n: int | None = None,
                                   stencil: str = "spectral") -> tuple[np.ndarray, np.ndarray]:
    n = profile.n if n is None else int(n)
    if n % 2:
        raise ParameterError("n must be even")
    h = resample_periodic(profile.values, n)
    dth = 2.0 * math.pi / n
    if stencil == "spectral":
        D2 = spectral_d2_matrix(n)
    elif stencil == "fd2":
        D2 = fd2_matrix(n)
    else:
        raise ParameterError(f"unknown stencil {stencil!r}")
    A = dth * (np.eye(n) + D2)
    W = np.diag(dth * _weights(h, profile.params.alpha))
    return A, W


def _solve(profile: ShrinkerProfile, n: int, stencil: str):
    A, W = assemble_weighted_eigenproblem(profile, n, stencil)
    try:
        lam, vec = scipy.linalg.eigh(A, W)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"eigensolver failed: {exc}") from exc
    order = np.argsort(-lam, kind="stable")
    # eigh normalises vec^T W vec = 1, i.e. orthonormal in L^2_h
    return lam[order], vec[:, order].T


@dataclass(frozen=True)
class Spectrum:
    params: FlowParams
    h: ShrinkerProfile
    n: int
    stencil: str
    lambdas: np.ndarray
    eigenfunctions: np.ndarray  # (modes, n), L^2_h orthonormal
    errors: np.ndarray  # |lam(n) - lam(n/2)| per mode
    betas_plus: np.ndarray
    betas_minus: np.ndarray
    K: int
    exact_resonant: np.ndarray  # bool mask: beta+ is exactly the cutoff
    rotation_index: int | None
    status: str = "ok"
    checks: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return self.K + 1

    def as_dict(self) -> dict:
        return {
            "alpha": self.params.alpha,
            "fold": "inf" if self.h.fold == ROUND else int(self.h.fold),
            "n": self.n,
            "stencil": self.stencil,
            "lambdas": [float(x) for x in self.lambdas],
            "betas_plus": [float(x) for x in self.betas_plus],
            "betas_minus": [float(x) for x in self.betas_minus],
            "K": int(self.K),
            "rotation_index": self.rotation_index,
            "status": self.status,
            "checks": {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in self.checks.items()},
        }


def full_eigenbasis(profile: ShrinkerProfile, n: int | None = None, stencil: str = "spectral"):
    """All n eigenpairs, descending; used by the exterior solver."""
    n = profile.n if n is None else int(n)
    return _solve(profile, n, stencil)


def rotation_mode_value(params: FlowParams) -> float:
    return 2.0 * (1.0 - 2.0 * params.alpha) * (params.alpha - 1.0)


def _find_rotation_mode(profile: ShrinkerProfile, vecs: np.ndarray, lam: np.ndarray, n: int) -> int | None:
    if profile.fold == ROUND:
        return None
    h = resample_periodic(profile.values, n)
    dh = periodic_derivative(h, 1)
    w = _weights(h, profile.params.alpha) * (2.0 * math.pi / n)
    nrm = math.sqrt(float(np.sum(w * dh * dh)))
    if nrm == 0.0:
        return None
    overlap = np.abs(vecs @ (w * dh)) / nrm
    idx = int(np.argmax(overlap))
    if overlap[idx] < 1.0 - 1e-6:
        raise SolverError(f"h' is not an eigenfunction (best overlap {overlap[idx]:.6f})")
    return idx


def eigen_spectrum(profile: ShrinkerProfile, n: int | None = None, j_max: int = 8,
                   stencil: str = "spectral") -> Spectrum:
    params = profile.params
    n = profile.n if n is None else int(n)
    nmodes = 2 * j_max + 1
    if nmodes > n // 2:
        raise ParameterError(f"j_max = {j_max} too large for n = {n}")
    lam, vec = _solve(profile, n, stencil)
    lam_c, _ = _solve(profile, n // 2, stencil)
    errors = np.abs(lam[:nmodes] - lam_c[:nmodes])
    errors = np.maximum(errors, 1e-12 * np.maximum(1.0, np.abs(lam[:nmodes])))

    rot = _find_rotation_mode(profile, vec, lam, n)
    exact = np.zeros(nmodes, dtype=bool)
    resonant_lam = rotation_mode_value(params)
    bp = np.empty(nmodes)
    bm = np.empty(nmodes)
    for j in range(nmodes):
        bp[j], bm[j] = jacobi_pair(lam[j])
    if rot is not None and rot < nmodes:
        exact[rot] = True
    if profile.fold == ROUND and params.is_resonant():
        # round resonance alpha = 1/k^2: the k-th Fourier pair sits on the cutoff
        exact |= np.abs(lam[:nmodes] - resonant_lam) < 1e-6
    cut = params.cutoff
    bp = np.where(exact, cut, bp)
    bm = np.where(exact, lam[:nmodes] / np.where(exact, cut, 1.0), bm)

    slow = (bp < cut) & ~exact
    if slow.all():
        raise ParameterError(f"j_max = {j_max} does not bracket the cutoff 1 - 2a = {cut}")
    K = int(np.flatnonzero(slow).max())
    if not slow[: K + 1].all():
        raise SolverError("slow modes are not a prefix of the ordered spectrum")

    # beta+ error from the eigenvalue error: d beta/d lam = -1/sqrt(1 - 4 lam)
    berr = errors / np.sqrt(1.0 - 4.0 * lam[:nmodes])
    close = (~exact) & (np.abs(bp - cut) < 10.0 * berr)
    status = NEAR_RESONANT if close.any() else "ok"

    w = _weights(resample_periodic(profile.values, n), params.alpha) * (2.0 * math.pi / n)
    efs = vec[:nmodes]
    gram = efs @ (w[:, None] * efs.T)
    checks = {
        "orthonormality_defect": float(np.max(np.abs(gram - np.eye(nmodes)))),
        "lambda0_defect": float(abs(lam[0] - params.lam0)),
        "lambda12_defect": float(max(abs(lam[1]), abs(lam[2]))),
    }
    h = resample_periodic(profile.values, n)
    checks["phi0_parallel_h"] = float(abs(efs[0] @ (w * h)) / math.sqrt(float(np.sum(w * h * h))))
    if rot is not None:
        checks["rotation_lambda_defect"] = float(abs(lam[rot] - resonant_lam))
        checks["rotation_simple"] = bool(np.sum(np.abs(lam - lam[rot]) < 1e-6) == 1)
    return Spectrum(params, profile, n, stencil, lam[:nmodes].copy(), efs.copy(), errors,
                    bp, bm, K, exact, rot, status, checks)


def jacobi_exponents(spectrum: Spectrum) -> tuple[np.ndarray, np.ndarray]:
    return spectrum.betas_plus.copy(), spectrum.betas_minus.copy()


def slow_mode_count(spectrum: Spectrum, params: FlowParams | None = None) -> int:
    return spectrum.K


def degenerate_groups(spectrum: Spectrum) -> list[list[int]]:
    """Indices grouped by (numerically) equal eigenvalue."""
    tol = 100.0 * spectrum.errors
    groups: list[list[int]] = []
    for j, lam in enumerate(spectrum.lambdas):
        if groups and abs(lam - spectrum.lambdas[groups[-1][-1]]) < max(tol[j], tol[groups[-1][-1]], 1e-9):
            groups[-1].append(j)
        else:
            groups.append([j])
    return groups


def round_slow_count(params: FlowParams) -> int:
    """K + 1 from the closed-form round spectrum; resonant pairs are excluded."""
    count, j = 1, 1
    while True:
        bp, _ = params.round_betas(j)
        if params.is_resonant() == j or bp >= params.cutoff:
            return count
        count += 2
        j += 1


# --- paired inner product ---------------------------------------------------------

@dataclass(frozen=True)
class PairedFunction:
    f1: np.ndarray
    f2: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.f1, dtype=float)
        b = np.asarray(self.f2, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise ParameterError("paired components need equal 1-D grids")
        object.__setattr__(self, "f1", a)
        object.__setattr__(self, "f2", b)


class PairedForm:
    """The corrected inner product on H^1 x L^2 for a fixed profile h."""

    def __init__(self, h: np.ndarray, alpha: float):
        self.h = np.asarray(h, dtype=float)
        self.alpha = alpha
        self.n = self.h.size
        self.dth = 2.0 * math.pi / self.n
        self.w = _weights(self.h, alpha)
        self.D2 = spectral_d2_matrix(self.n)
        th = theta_grid(self.n)
        self.sin = np.sin(th)
        self.cos = np.cos(th)
        self.e = PairedFunction(self.h, -2.0 * alpha * self.h)
        self.ee = self.form0(self.e, self.e)
        if not self.ee < 0:
            raise SolverError("the (h, -2a h) direction should have negative bare norm")

    def form0(self, u: PairedFunction, v: PairedFunction) -> float:
        # int w1' v1' written as -int w1 v1'' so that D2 stays the symmetric matrix
        a = -u.f1 @ v.f1 - u.f1 @ (self.D2 @ v.f1) + np.sum(self.w * u.f2 * v.f2)
        return float(self.dth * a)

    def _trig(self, u: PairedFunction, basis: np.ndarray) -> float:
        return float(self.dth * np.sum(self.w * (u.f1 + u.f2) * basis))

    def inner(self, u: PairedFunction, v: PairedFunction) -> float:
        self._check(u, v)
        val = self.form0(u, v)
        val += 2.0 * self.form0(u, self.e) * self.form0(v, self.e) / (-self.ee)
        val += self._trig(u, self.sin) * self._trig(v, self.sin)
        val += self._trig(u, self.cos) * self._trig(v, self.cos)
        return val

    def norm(self, u: PairedFunction) -> float:
        return math.sqrt(max(self.inner(u, u), 0.0))

    def l2h_norm(self, g: np.ndarray) -> float:
        return math.sqrt(float(self.dth * np.sum(self.w * g * g)))

    def apply_operator(self, u: PairedFunction) -> PairedFunction:
        """(w1, w2) -> (w2, -h^(1/a) (w1 + w1'') - w2)."""
        hw = 1.0 / self.w
        return PairedFunction(u.f2, -hw * (u.f1 + self.D2 @ u.f1) - u.f2)

    def gram_matrix(self) -> np.ndarray:
        """Matrix G with <u, v> = U^T G V for stacked vectors U = (f1, f2)."""
        n = self.n
        G = np.zeros((2 * n, 2 * n))
        G[:n, :n] = self.dth * (-np.eye(n) - self.D2)
        G[n:, n:] = self.dth * np.diag(self.w)
        ge = G @ np.concatenate([self.e.f1, self.e.f2])
        G += 2.0 * np.outer(ge, ge) / (-self.ee)
        for b in (self.sin, self.cos):
            t = self.dth * self.w * b
            tt = np.concatenate([t, t])
            G += np.outer(tt, tt)
        return 0.5 * (G + G.T)

    def _check(self, u: PairedFunction, v: PairedFunction) -> None:
        if u.f1.size != self.n or v.f1.size != self.n:
            raise ParameterError("paired functions must match the profile grid")


def paired_inner_product(u: PairedFunction, v: PairedFunction, h: ShrinkerProfile | np.ndarray,
                         alpha: float | None = None) -> float:
    if isinstance(h, ShrinkerProfile):
        alpha = h.params.alpha
        h = h.values
    if alpha is None:
        raise ValueError("alpha required with a bare profile array")
    return PairedForm(h, alpha).inner(u, v)


def equivalence_constant(alpha: float) -> float:
    """C with ||g||_{L^2_h} <= C ||(f, g)||_h."""
    return math.sqrt(max(1.0, 1.0 / (1.0 - 4.0 * alpha)))
