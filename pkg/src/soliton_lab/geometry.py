"""Convex samples on rectangular grids: Legendre conjugates, level-set support
functions, blow-downs, the dual Monge-Ampere residual and the entropy J."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .core import ROUND, FlowParams, ParameterError, SolverError, derive_params, require_fold, theta_grid


@dataclass(frozen=True)
class ConvexSample:
    """values[i, j] = u(x[i], y[j]) on a uniform tensor grid."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    mask: np.ndarray | None = None
    side: str = "graph"  # "graph" (degree 1/(1-2a) blow-downs) or "dual" (degree 1/(2a))

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (x.size, y.size):
            raise ParameterError(f"values shape {v.shape} != ({x.size}, {y.size})")
        m = np.ones(v.shape, dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", m)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def dy(self) -> float:
        return float(self.y[1] - self.y[0])

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")


def sample(fn, x: np.ndarray, y: np.ndarray, side: str = "graph") -> ConvexSample:
    X, Y = np.meshgrid(x, y, indexing="ij")
    return ConvexSample(x, y, fn(X, Y), side=side)


def square_grid(half_width: float, n: int) -> np.ndarray:
    return np.linspace(-half_width, half_width, n)


def convexity_defect(u: ConvexSample) -> float:
    """Most negative second difference along grid lines, scaled by the sup of |u|."""
    v = u.values
    dxx = v[2:, :] - 2 * v[1:-1, :] + v[:-2, :]
    dyy = v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2]
    worst = min(float(dxx.min()), float(dyy.min()))
    return max(0.0, -worst) / max(1.0, float(np.abs(v).max()))


# --- Legendre transform ----------------------------------------------------------

def _lower_hull(x: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull of sorted points (monotone chain)."""
    hull: list[int] = []
    for i in range(x.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b if it lies on or above the chord a -> i
            if (f[b] - f[a]) * (x[i] - x[a]) >= (f[i] - f[a]) * (x[b] - x[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull)


def legendre_1d(x: np.ndarray, f: np.ndarray, s: np.ndarray) -> np.ndarray:
    """max_i s x_i - f_i for every slope s, via the lower hull."""
    h = _lower_hull(x, f)
    xh, fh = x[h], f[h]
    if h.size == 1:
        return s * xh[0] - fh[0]
    slopes = np.diff(fh) / np.diff(xh)
    k = np.searchsorted(slopes, s, side="left")
    return s * xh[k] - fh[k]


def legendre_1d_naive(x: np.ndarray, f: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.max(s[:, None] * x[None, :] - f[None, :], axis=1)


def legendre_conjugate(u: ConvexSample, p: np.ndarray | None = None, q: np.ndarray | None = None,
                       tol: float = 1e-10, naive: bool = False) -> ConvexSample:
    """Discrete conjugate u*(p, q) = max over samples of p x + q y - u(x, y).

    Done as two 1-D transforms: first in y for every x row, then in x.
    """
    if convexity_defect(u) > tol:
        raise ParameterError(f"input not discretely convex (defect {convexity_defect(u):.2e})")
    if p is None or q is None:
        gx = np.diff(u.values, axis=0) / u.dx
        gy = np.diff(u.values, axis=1) / u.dy
        p = np.linspace(gx.min(), gx.max(), u.x.size) if p is None else p
        q = np.linspace(gy.min(), gy.max(), u.y.size) if q is None else q
    one = legendre_1d_naive if naive else legendre_1d
    # phi[i, :] = max_j q y_j - u(x_i, y_j)
    phi = np.stack([one(u.y, u.values[i], q) for i in range(u.x.size)])
    out = np.stack([one(u.x, -phi[:, j], p) for j in range(q.size)], axis=1)
    other = "dual" if u.side == "graph" else "graph"
    return ConvexSample(np.asarray(p, float), np.asarray(q, float), out, side=other)


def radial_conjugate_naive(r: np.ndarray, f: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """sup_r r rho - f(r) by direct maximisation over the samples."""
    return legendre_1d_naive(r, f, rho)


# --- level sets ---------------------------------------------------------------

def level_points(u: ConvexSample, l: float) -> np.ndarray:
    """Crossings of {u = l} on grid edges, linearly interpolated."""
    v = u.values - l
    X, Y = u.mesh()
    pts = []
    for axis in (0, 1):
        a = v[:-1, :] if axis == 0 else v[:, :-1]
        b = v[1:, :] if axis == 0 else v[:, 1:]
        xa = X[:-1, :] if axis == 0 else X[:, :-1]
        xb = X[1:, :] if axis == 0 else X[:, 1:]
        ya = Y[:-1, :] if axis == 0 else Y[:, :-1]
        yb = Y[1:, :] if axis == 0 else Y[:, 1:]
        cross = (a * b < 0) | ((a == 0) & (b != 0))
        t = a[cross] / (a[cross] - b[cross])
        pts.append(np.stack([xa[cross] + t * (xb[cross] - xa[cross]),
                             ya[cross] + t * (yb[cross] - ya[cross])], axis=1))
    return np.concatenate(pts)


def level_support_function(u: ConvexSample, l: float, n_theta: int = 256) -> np.ndarray:
    v = u.values
    edge = np.concatenate([v[0], v[-1], v[:, 0], v[:, -1]])
    if np.any(edge <= l):
        raise ParameterError(f"level set {{u = {l}}} touches the sampled domain boundary")
    if float(v.min()) >= l:
        raise ParameterError(f"level {l} below the minimum of u")
    pts = level_points(u, l)
    th = theta_grid(n_theta)
    dirs = np.stack([np.cos(th), np.sin(th)])
    return np.max(pts @ dirs, axis=0)


# --- blow-down -------------------------------------------------------------------

def blow_down(u: ConvexSample, lam: float, alpha: float, side: str | None = None) -> ConvexSample:
    """u_lam(x) = lam^(-d) u(lam x) with d = 1/(1-2a) (graph) or 1/(2a) (dual)."""
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    side = side or u.side
    deg = 1.0 / (1.0 - 2.0 * alpha) if side == "graph" else 1.0 / (2.0 * alpha)
    if lam == 1.0:
        return u
    X, Y = u.mesh()
    PX, PY = lam * X, lam * Y
    inside = (PX >= u.x[0]) & (PX <= u.x[-1]) & (PY >= u.y[0]) & (PY <= u.y[-1])
    if not inside.any():
        raise ParameterError("domain exhausted: no rescaled point stays inside the sample")
    spl = RectBivariateSpline(u.x, u.y, u.values, kx=3, ky=3)
    vals = np.full(u.values.shape, np.nan)
    vals[inside] = spl.ev(PX[inside], PY[inside]) * lam ** (-deg)
    return ConvexSample(u.x, u.y, vals, inside & u.mask, side)


# --- Hessians -------------------------------------------------------------------

def hessian(u: ConvexSample, order: int = 2):
    """(uxx, uxy, uyy) by centred differences; NaN where the stencil leaves the grid."""
    v = u.values
    dx, dy = u.dx, u.dy
    uxx = np.full(v.shape, np.nan)
    uyy = np.full(v.shape, np.nan)
    uxy = np.full(v.shape, np.nan)
    if order == 2:
        uxx[1:-1, :] = (v[2:, :] - 2 * v[1:-1, :] + v[:-2, :]) / dx**2
        uyy[:, 1:-1] = (v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2]) / dy**2
        uxy[1:-1, 1:-1] = (v[2:, 2:] - v[2:, :-2] - v[:-2, 2:] + v[:-2, :-2]) / (4 * dx * dy)
    elif order == 4:
        c = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
        uxx[2:-2, :] = sum(c[k] * v[k:v.shape[0] - 4 + k, :] for k in range(5)) / dx**2
        uyy[:, 2:-2] = sum(c[k] * v[:, k:v.shape[1] - 4 + k] for k in range(5)) / dy**2
        d = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
        vx = np.full(v.shape, np.nan)
        vx[2:-2, :] = sum(d[k] * v[k:v.shape[0] - 4 + k, :] for k in range(5)) / dx
        uxy[:, 2:-2] = sum(d[k] * vx[:, k:v.shape[1] - 4 + k] for k in range(5)) / dy
    else:
        raise ParameterError("order must be 2 or 4")
    return uxx, uxy, uyy


def _origin_mask(u: ConvexSample, cells: int = 2) -> np.ndarray:
    X, Y = u.mesh()
    return (np.abs(X) > cells * u.dx) | (np.abs(Y) > cells * u.dy)


# --- dual equation --------------------------------------------------------------

def dual_equation_residual(v: ConvexSample, alpha: float, homogeneous: bool = False,
                           order: int = 2, region: np.ndarray | None = None) -> dict:
    """det D^2 v against (1+|x|^2)^(1/(2a)-2), or |x|^(1/a-4) for the homogeneous variant.

    Returns sup and L^2 of the relative residual over the valid interior.
    """
    vxx, vxy, vyy = hessian(v, order)
    X, Y = v.mesh()
    r2 = X * X + Y * Y
    rhs = r2 ** (1.0 / (2.0 * alpha) - 2.0) if homogeneous else (1.0 + r2) ** (1.0 / (2.0 * alpha) - 2.0)
    det = vxx * vyy - vxy * vxy
    ok = np.isfinite(det) & v.mask & _origin_mask(v)
    if region is not None:
        ok &= region
    if not ok.any():
        raise ParameterError("no valid interior points")
    rel = np.abs(det[ok] - rhs[ok]) / rhs[ok]
    return {"sup": float(rel.max()), "l2": float(math.sqrt(np.mean(rel**2))), "points": int(ok.sum())}


# --- entropy ----------------------------------------------------------------------

@dataclass(frozen=True)
class EntropyField:
    J: np.ndarray  # NaN outside the valid set
    valid: np.ndarray
    alpha: float

    def spread(self) -> float:
        v = self.J[self.valid]
        return float((v.max() - v.min()) / abs(v.mean()))

    def mean(self) -> float:
        return float(np.mean(self.J[self.valid]))


def entropy_J_field(v: ConvexSample, alpha: float, order: int = 2, cells: int = 2,
                    region: np.ndarray | None = None) -> EntropyField:
    vxx, vxy, vyy = hessian(v, order)
    X, Y = v.mesh()
    valid = np.isfinite(vxx) & np.isfinite(vyy) & np.isfinite(vxy) & v.mask & _origin_mask(v, cells)
    if region is not None:
        valid &= region
    radial = X * X * vxx + 2 * X * Y * vxy + Y * Y * vyy
    if np.any(radial[valid] <= 0):
        raise SolverError("radial Hessian form x_i x_j v_ij is not positive on the evaluated set")
    J = np.full(v.values.shape, np.nan)
    J[valid] = (vxx + vyy)[valid] * radial[valid] ** (4.0 * alpha - 1.0)
    return EntropyField(J, valid, alpha)


def J_of_constant(c: float, alpha: float) -> float:
    return c * (1.0 - 2.0 * alpha) * ((1.0 - 2.0 * alpha) / (4.0 * alpha * alpha)) ** (4.0 * alpha - 1.0)


def J_round_from_profile(alpha: float) -> float:
    """J of r^(1/(2a)) t_inf, written through the constant angular profile."""
    t = 2.0 * alpha * math.sqrt(2.0 * alpha / (1.0 - 2.0 * alpha))
    return (t / (4.0 * alpha * alpha)) * ((1.0 - 2.0 * alpha) * t / (4.0 * alpha * alpha)) ** (4.0 * alpha - 1.0)


def entropy_J_closed_form(alpha: float | FlowParams, fold) -> float:
    from .shrinker import dual_potential_for_fold, tangency_potential

    params = alpha if isinstance(alpha, FlowParams) else derive_params(alpha)
    fold = require_fold(params, fold)
    if fold == ROUND:
        c, _ = tangency_potential(params)
    else:
        c = dual_potential_for_fold(params, fold).c
    return J_of_constant(c, params.alpha)


def homogeneous_dual_sample(alpha: float, g_of_theta, x: np.ndarray, y: np.ndarray) -> ConvexSample:
    """v = r^(1/(2a)) g(theta) on the grid."""
    X, Y = np.meshgrid(x, y, indexing="ij")
    r = np.hypot(X, Y)
    th = np.mod(np.arctan2(Y, X), 2.0 * np.pi)
    return ConvexSample(x, y, r ** (1.0 / (2.0 * alpha)) * g_of_theta(th), side="dual")


def radial_translator_dual(radial_sol, x: np.ndarray, y: np.ndarray) -> ConvexSample:
    """Conjugate of u(x) = G(|x|), sampled through the parametrisation rho = G'(r)."""
    M = radial_sol.M
    p = radial_sol.p
    X, Y = np.meshgrid(x, y, indexing="ij")
    rho = np.hypot(X, Y)
    # invert rho^2 = y(r): (M + rho^2)^(p+1) = M^(p+1) + (p+1) r^2
    q = p + 1.0
    r = np.sqrt(M**q * np.expm1(q * np.log1p(rho * rho / M)) / q)
    if r.max() > radial_sol.r[-1]:
        raise ParameterError("grid exceeds the sampled radial range")
    G = radial_sol.G(r.ravel()).reshape(r.shape)
    return ConvexSample(x, y, r * rho - G, side="dual")


def radial_translator_graph(radial_sol, x: np.ndarray, y: np.ndarray) -> ConvexSample:
    X, Y = np.meshgrid(x, y, indexing="ij")
    r = np.hypot(X, Y)
    return ConvexSample(x, y, radial_sol.G(r.ravel()).reshape(r.shape), side="graph")


# --- grid CSV ---------------------------------------------------------------------

def write_grid_csv(path: str, u: ConvexSample, header_extra: str = "") -> None:
    nx, ny = u.values.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header_extra:
            fh.write(f"# {header_extra}\n")
        fh.write(",".join([str(nx), str(ny)] + [repr(float(v)) for v in (u.x[0], u.x[-1], u.y[0], u.y[-1])]) + "\n")
        for row in u.values:
            fh.write(",".join("nan" if not np.isfinite(v) else repr(float(v)) for v in row) + "\n")


def read_grid_csv(path: str, side: str = "graph") -> ConvexSample:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    try:
        nx, ny, x0, x1, y0, y1 = lines[0].split(",")
        nx, ny = int(nx), int(ny)
        vals = np.array([[float(t) for t in ln.split(",")] for ln in lines[1:]])
    except (ValueError, IndexError) as exc:
        raise ParameterError(f"{path}: malformed grid CSV ({exc})") from exc
    if vals.shape != (nx, ny):
        raise ParameterError(f"{path}: expected {nx}x{ny} values, got {vals.shape}")
    return ConvexSample(np.linspace(float(x0), float(x1), nx), np.linspace(float(y0), float(y1), ny), vals, side=side)
