"""Shared parameters, derived constants and grids.

Every other module takes a :class:`FlowParams` built by :func:`derive_params`.
The exponent ``alpha`` lives strictly inside (0, 1/4).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# fold number of the round circle
ROUND = math.inf


class ParameterError(ValueError):
    """Invalid user-supplied parameter (CLI exit code 2)."""


class CriticalExponentError(ParameterError):
    """alpha sits on the boundary of the admissible interval."""


class SolverError(RuntimeError):
    """A numerical procedure failed to converge (CLI exit code 3)."""


@dataclass(frozen=True)
class FlowParams:
    alpha: float
    m: int
    c_alpha: float
    beta_plus_0: float
    beta_minus_0: float
    growth_exponent_graph: float
    growth_exponent_dual: float

    @property
    def lam0(self) -> float:
        """Top eigenvalue 2a(1-2a) of the linearised operator."""
        return 2.0 * self.alpha * (1.0 - 2.0 * self.alpha)

    @property
    def cutoff(self) -> float:
        """Jacobi exponents below 1-2a are the slowly decaying ones."""
        return 1.0 - 2.0 * self.alpha

    def round_lambda(self, j: int) -> float:
        return self.lam0 * (1.0 - j * j)

    def round_betas(self, j: int) -> tuple[float, float]:
        return jacobi_pair(self.round_lambda(j))

    def is_resonant(self) -> int | None:
        """Return k if alpha == 1/k**2 (to 1e-12), else None."""
        k = round(1.0 / math.sqrt(self.alpha))
        if k >= 2 and abs(self.alpha * k * k - 1.0) < 1e-12:
            return k
        return None


def jacobi_pair(lam: float) -> tuple[float, float]:
    """Roots of b^2 + b + lam = 0, larger first."""
    disc = math.sqrt(1.0 - 4.0 * lam)
    bm = -0.5 * (1.0 + disc)
    # the product of the roots is lam; this avoids cancellation when lam ~ 0
    bp = lam / bm
    return bp, bm


def largest_fold(alpha: float) -> int:
    """Largest integer m with m^2 < 1/alpha."""
    inv = 1.0 / alpha
    m = int(math.floor(math.sqrt(inv)))
    while m * m >= inv:
        m -= 1
    while (m + 1) * (m + 1) < inv:
        m += 1
    return m


def derive_params(alpha: float) -> FlowParams:
    try:
        alpha = float(alpha)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"alpha must be a real number, got {alpha!r}") from exc
    if not math.isfinite(alpha):
        raise ParameterError(f"alpha must be finite, got {alpha}")
    if alpha == 0.25 or alpha == 0.0:
        raise CriticalExponentError(
            f"alpha = {alpha} is a critical exponent; need 0 < alpha < 1/4"
        )
    if not (0.0 < alpha < 0.25):
        raise ParameterError(f"alpha = {alpha} outside (0, 1/4)")
    lam0 = 2.0 * alpha * (1.0 - 2.0 * alpha)
    bp, bm = -2.0 * alpha, 2.0 * alpha - 1.0
    return FlowParams(
        alpha=alpha,
        m=largest_fold(alpha),
        c_alpha=lam0**alpha,
        beta_plus_0=bp,
        beta_minus_0=bm,
        growth_exponent_graph=1.0 / (1.0 - 2.0 * alpha),
        growth_exponent_dual=1.0 / (2.0 * alpha),
    )


def classify_shrinkers(params: FlowParams) -> frozenset:
    """Fold numbers of all shrinking solitons: the circle plus k = 3..m."""
    return frozenset([ROUND, *range(3, params.m + 1)])


def parse_fold(value) -> float | int:
    if isinstance(value, str):
        v = value.strip().lower()
        if v in ("inf", "infinity", "round", "oo", "∞"):
            return ROUND
        try:
            value = int(v)
        except ValueError as exc:
            raise ParameterError(f"bad fold {value!r}") from exc
    if value == ROUND:
        return ROUND
    if int(value) != value or value < 3:
        raise ParameterError(f"fold must be an integer >= 3 or 'inf', got {value!r}")
    return int(value)


def require_fold(params: FlowParams, k) -> float | int:
    k = parse_fold(k)
    if k not in classify_shrinkers(params):
        raise ParameterError(
            f"fold {k} does not exist at alpha = {params.alpha} (need k^2 < 1/alpha)"
        )
    return k


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform samples on [0, 2pi)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 8 or v.size % 2:
            raise ParameterError("PeriodicGrid needs an even number >= 8 of samples")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def theta(self) -> np.ndarray:
        return theta_grid(self.n)

    @property
    def dtheta(self) -> float:
        return 2.0 * math.pi / self.n


def theta_grid(n: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


@dataclass(frozen=True)
class StripGrid:
    s_min: float
    s_max: float
    n_s: int
    n_theta: int

    def __post_init__(self):
        if not self.s_min < self.s_max:
            raise ParameterError("StripGrid needs s_min < s_max")
        if self.n_s < 16 or self.n_theta < 8 or self.n_theta % 2:
            raise ParameterError("StripGrid needs n_s >= 16 and even n_theta >= 8")

    @property
    def s(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.n_s)

    @property
    def ds(self) -> float:
        return (self.s_max - self.s_min) / (self.n_s - 1)

    @property
    def theta(self) -> np.ndarray:
        return theta_grid(self.n_theta)


# --- spectral helpers on uniform periodic grids -----------------------------

def spectral_wavenumbers(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, d=1.0 / n)


def periodic_derivative(values: np.ndarray, order: int = 1, axis: int = -1) -> np.ndarray:
    """Fourier derivative along a periodic axis of length 2pi."""
    v = np.asarray(values, dtype=float)
    n = v.shape[axis]
    k = spectral_wavenumbers(n)
    if order % 2 == 1:
        k[n // 2] = 0.0  # Nyquist mode has no real odd derivative
    mult = (1j * k) ** order
    shape = [1] * v.ndim
    shape[axis] = n
    return np.real(np.fft.ifft(np.fft.fft(v, axis=axis) * mult.reshape(shape), axis=axis))


def spectral_d2_matrix(n: int) -> np.ndarray:
    """Dense symmetric second-derivative matrix on n uniform periodic points."""
    col = np.real(np.fft.ifft(-(spectral_wavenumbers(n) ** 2)))
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    D2 = col[idx]
    return 0.5 * (D2 + D2.T)


def fd2_matrix(n: int) -> np.ndarray:
    h = 2.0 * math.pi / n
    D2 = -2.0 * np.eye(n)
    i = np.arange(n)
    D2[i, (i + 1) % n] += 1.0
    D2[i, (i - 1) % n] += 1.0
    return D2 / (h * h)


# --- config -----------------------------------------------------------------

DEFAULTS: dict[str, float | int | str] = {
    "n": 512,
    "jmax": 8,
    "R": 0.0,  # 0 means "select automatically"
    "smax": 0.0,
    "n_s": 256,
    "n_theta": 128,
    "tol": 1e-10,
    "lmax": 1e12,
}


def load_config(path: str | None, defaults: bool = True) -> dict:
    """Read a key = value file; '#' starts a comment. Values are numbers when they parse.

    With defaults=False only the keys present in the file come back.
    """
    cfg = dict(DEFAULTS) if defaults else {}
    if not path:
        return cfg
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        cfg[key] = _coerce(val)
    return cfg


def _coerce(val: str):
    for conv in (int, float):
        try:
            return conv(val)
        except ValueError:
            pass
    return val
