"""Three-component dominance for ODE trajectories, a quantitative window bound, and the
neutral-mode coefficient system at alpha = 1/k^2."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .core import ParameterError, SolverError, jacobi_pair


# --- trajectories and the dominance classifier ------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(v, dtype=float) for v in (self.s, self.x, self.y, self.z)]
        n = arrs[0].size
        if any(a.shape != (n,) for a in arrs) or n < 8:
            raise ParameterError("trajectory arrays must be 1-D of equal length >= 8")
        if np.any(np.diff(arrs[0]) <= 0):
            raise ParameterError("s samples must increase")
        if min(a.min() for a in arrs[1:]) < 0:
            raise ParameterError("x, y, z must be nonnegative")
        if np.any(arrs[1] + arrs[2] + arrs[3] <= 0):
            raise ParameterError("x + y + z must be positive")
        for name, a in zip(("s", "x", "y", "z"), arrs):
            object.__setattr__(self, name, a)

    @classmethod
    def from_functions(cls, s, fx, fy, fz) -> "Trajectory":
        s = np.asarray(s, float)
        return cls(s, fx(s), fy(s), fz(s))


class Dominance(enum.Enum):
    NEUTRAL = "NeutralDominates"
    STABLE = "StableDominates"
    VIOLATED = "HypothesesViolated"


@dataclass(frozen=True)
class Classification:
    verdict: Dominance
    neutral_ratio: float  # (x+z)/y at the end of the window
    stable_ratio: float  # (x+y)/z at the end of the window
    violation: str | None = None
    violation_s: float | None = None


def _segment_derivatives(t: Trajectory):
    ds = np.diff(t.s)
    mid = lambda a: 0.5 * (a[1:] + a[:-1])  # noqa: E731
    d = lambda a: np.diff(a) / ds  # noqa: E731
    return mid(t.s), (mid(t.x), mid(t.y), mid(t.z)), (d(t.x), d(t.y), d(t.z))


def check_inequalities(t: Trajectory, lam: float, sigma: float, s0: float | None = None,
                       slack: float = 1e-9) -> tuple[str, float] | None:
    """First violation of x' >= lam x - sigma(y+z), |y'| <= sigma(x+y+z),
    z' <= -lam z + sigma(x+y) on s >= s0, or None.  Derivatives are segment slopes."""
    sm, (x, y, z), (dx, dy, dz) = _segment_derivatives(t)
    if s0 is None:
        s0 = float(np.median(t.s))
    keep = sm >= s0
    tot = x + y + z
    # slope-vs-midpoint mismatch is O(ds^2 |f''|); pad by that so smooth equalities pass
    ds = np.diff(t.s)
    curv = sum(np.abs(np.gradient(d, sm)) for d in (dx, dy, dz)) if sm.size > 2 else 0.0
    pad = slack * tot + 0.25 * ds * ds * curv + 1e-300
    tests = (
        ("x' - lam x >= -sigma(y+z)", dx - lam * x + sigma * (y + z) >= -pad),
        ("|y'| <= sigma(x+y+z)", np.abs(dy) <= sigma * tot + pad),
        ("z' + lam z <= sigma(x+y)", dz + lam * z - sigma * (x + y) <= pad),
    )
    first = None
    for name, ok in tests:
        bad = np.flatnonzero(keep & ~ok)
        if bad.size and (first is None or sm[bad[0]] < first[1]):
            first = (name, float(sm[bad[0]]))
    return first


def merle_zaag_classify(t: Trajectory, lam: float = 1.0, sigma: float = 0.1,
                        s0: float | None = None, window: float = 0.1,
                        threshold: float = 0.1) -> Classification:
    """Decide which of (x+z) = o(y) or (x+y) = o(z) the tail of t shows.

    Ratios are read on the last `window` fraction of samples.  A branch wins when its
    ratio stays below `threshold` there while the other ratio stays above 1/threshold.
    """
    if lam <= 0 or sigma < 0:
        raise ParameterError("need lam > 0 and sigma >= 0")
    v = check_inequalities(t, lam, sigma, s0)
    n = t.s.size
    tail = slice(max(0, int(n * (1 - window))), n)
    with np.errstate(divide="ignore", invalid="ignore"):
        rA = (t.x + t.z) / t.y
        rB = (t.x + t.y) / t.z
    a_end, b_end = float(rA[-1]), float(rB[-1])
    if v is not None:
        return Classification(Dominance.VIOLATED, a_end, b_end, v[0], v[1])
    a_tail, b_tail = rA[tail], rB[tail]
    if np.max(a_tail) < threshold and np.min(b_tail) > 1.0 / threshold:
        return Classification(Dominance.NEUTRAL, a_end, b_end)
    if np.max(b_tail) < threshold and np.min(a_tail) > 1.0 / threshold:
        return Classification(Dominance.STABLE, a_end, b_end)
    return Classification(Dominance.VIOLATED, a_end, b_end, "no branch dominates on the window", float(t.s[-1]))


@dataclass(frozen=True)
class WindowBound:
    holds: bool
    margin: float  # min over the middle window of (bound - (x+z)) / epsilon
    epsilon: float


def quantitative_mz_bound(t: Trajectory, lam: float, sigma: float, epsilon: float | None = None,
                          L: float | None = None, slack: float = 1e-9) -> WindowBound:
    """Check x + z <= (8 sigma/lam) y + 4 eps e^{-lam L/4} on [-L/2, L/2]."""
    if L is None:
        L = float(min(-t.s[0], t.s[-1]))
    if t.s[0] > -L + 1e-12 * L or t.s[-1] < L - 1e-12 * L:
        raise ParameterError("trajectory must cover [-L, L]")
    on = (t.s >= -L) & (t.s <= L)
    tot = (t.x + t.y + t.z)[on]
    if epsilon is None:
        epsilon = float(tot.max()) * (1 + 1e-12)
    if not np.all((tot > 0) & (tot < epsilon)):
        raise ParameterError("need 0 < x + y + z < epsilon on [-L, L]")
    v = check_inequalities(t, lam, sigma, s0=-L, slack=slack)
    if v is not None:
        raise ParameterError(f"hypothesis violated: {v[0]} at s = {v[1]:.6g}")
    mid = (t.s >= -L / 2) & (t.s <= L / 2)
    bound = 8.0 * sigma / lam * t.y[mid] + 4.0 * epsilon * math.exp(-lam * L / 4.0)
    margin = float(np.min(bound - (t.x + t.z)[mid]) / epsilon)
    return WindowBound(margin >= 0.0, margin, epsilon)


def perturbed_linear_system(seed: int, lam: float, sigma: float, L: float = 10.0,
                            n: int = 2001, epsilon: float = 1e-2) -> Trajectory:
    """|X_i| for X' = (diag(lam, 0, -lam) + sigma B) X with zero-diagonal |B_ij| <= 1.

    The absolute values satisfy the window-bound inequalities exactly.  The unstable
    component starts small enough to stay below epsilon on [-L, L].
    """
    rng = np.random.default_rng(seed)
    B = rng.uniform(-1.0, 1.0, (3, 3))
    np.fill_diagonal(B, 0.0)
    A = np.diag([lam, 0.0, -lam]) + sigma * B
    u = rng.uniform(0.2, 1.0, 3) * rng.choice([-1.0, 1.0], 3)
    X0 = epsilon * np.array([u[0] * math.exp(-2.5 * lam * L), u[1] / 4.0, u[2] / 4.0])
    s = np.linspace(-L, L, n)
    sol = solve_ivp(lambda _s, X: A @ X, (-L, L), X0, t_eval=s, rtol=1e-10, atol=1e-14 * epsilon,
                    method="RK45")
    if not sol.success:
        raise SolverError(sol.message)
    X = np.abs(sol.y)
    return Trajectory(s, X[0], X[1], X[2])


def sigma0_sweep(lam: float, seeds, L: float = 10.0, sigmas=None) -> float:
    """Largest tested sigma for which the window bound held on every seed."""
    if sigmas is None:
        sigmas = lam * np.array([0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5])
    best = 0.0
    for sg in sigmas:
        ok = True
        for sd in seeds:
            try:
                ok = quantitative_mz_bound(perturbed_linear_system(sd, lam, sg, L), lam, sg).holds
            except ParameterError:
                ok = False
            if not ok:
                break
        if not ok:
            break
        best = float(sg)
    return best


# --- neutral-mode system -------------------------------------------------------------------

FIELDS = ("c_k_plus", "s_k_plus", "c0_plus", "c0_minus", "c2k_plus", "c2k_minus", "s2k_plus", "s2k_minus")
_UNSTABLE = (4, 6)


def neutral_constant_M(alpha: float) -> float:
    return (2.0 * alpha) ** (-alpha) * (1.0 - 2.0 * alpha) ** (2.0 - alpha)


def round_betas(alpha: float, j: int) -> tuple[float, float]:
    lam = 2.0 * alpha * (1.0 - 2.0 * alpha) * (1.0 - j * j)
    return jacobi_pair(lam)


def contradiction_coefficient(k: int) -> float:
    """a = M^2 (1/alpha - 1)(k^2 - 4) / (3 (1-2alpha)(beta_k^+ - beta_k^-)) at alpha = 1/k^2."""
    a = 1.0 / (k * k)
    bp, bm = round_betas(a, k)
    M = neutral_constant_M(a)
    return M * M * (1.0 / a - 1.0) * (k * k - 4) / (3.0 * (1.0 - 2.0 * a) * (bp - bm))


def shifted_product(alpha: float, j: int) -> tuple[float, float]:
    """Both sides of (beta_j^+ - (1-2a))(beta_j^- - (1-2a)) = 2(1-2a)(1 - a j^2)."""
    bp, bm = round_betas(alpha, j)
    e = 1.0 - 2.0 * alpha
    return (bp - e) * (bm - e), 2.0 * e * (1.0 - alpha * j * j)


@dataclass(frozen=True)
class NeutralState:
    c_k_plus: float
    s_k_plus: float
    c0_plus: float = 0.0
    c0_minus: float = 0.0
    c2k_plus: float = 0.0
    c2k_minus: float = 0.0
    s2k_plus: float = 0.0
    s2k_minus: float = 0.0

    @property
    def rho(self) -> float:
        return self.c_k_plus**2 + self.s_k_plus**2

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in FIELDS])

    @classmethod
    def random(cls, rho: float, seed: int) -> "NeutralState":
        """Neutral pair on the circle of radius sqrt(rho); others at most sqrt(rho)/10."""
        rng = np.random.default_rng(seed)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        r = math.sqrt(rho)
        rest = rng.uniform(-0.1, 0.1, 6) * r
        return cls(r * math.cos(phi), r * math.sin(phi), *rest)


@dataclass
class NeutralSystem:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 3:
            raise ParameterError("k must be an integer >= 3")
        k = self.k
        a = 1.0 / (k * k)
        self.alpha = a
        self.M = neutral_constant_M(a)
        e = 1.0 - 2.0 * a
        b0p, b0m = round_betas(a, 0)
        bkp, bkm = round_betas(a, k)
        b2p, b2m = round_betas(a, 2 * k)
        self.rate0 = (b0p - e, b0m - e)
        self.rate2k = (b2p - e, b2m - e)
        self.gap_k = bkp - bkm
        n = 1.0 / a - 1.0
        self.force0 = self.M * n / (2.0 * (b0p - b0m))
        self.force2k = self.M * n / (2.0 * (b2p - b2m))
        self.lin = self.M / self.gap_k
        self.cubic = -3.0 * self.M**2 / (4.0 * e * self.gap_k) * n * (1.0 / 3.0 - 2.0 / (3.0 * a))
        self.a = contradiction_coefficient(k)

    def rhs(self, y: np.ndarray) -> np.ndarray:
        ck, sk, c0p, c0m, c2p, c2m, s2p, s2m = y
        rho = ck * ck + sk * sk
        c0 = c0p + c0m
        c2 = c2p + c2m
        s2 = s2p + s2m
        q = 1.0 - 4.0 / self.alpha
        f0, f2 = self.force0, self.force2k
        return np.array([
            -self.lin * (2 * ck * c0 + q * (ck * c2 + sk * s2)) + self.cubic * ck * rho,
            -self.lin * (2 * sk * c0 + q * (s2 * ck - c2 * sk)) + self.cubic * sk * rho,
            self.rate0[0] * c0p + f0 * rho,
            self.rate0[1] * c0m - f0 * rho,
            self.rate2k[0] * c2p + f2 * (ck * ck - sk * sk),
            self.rate2k[1] * c2m - f2 * (ck * ck - sk * sk),
            self.rate2k[0] * s2p + f2 * (2 * ck * sk),
            self.rate2k[1] * s2m - f2 * (2 * ck * sk),
        ])

    # slaved limits
    def c0_slope(self) -> float:
        a = self.alpha
        return self.M / (4.0 * (1.0 - 2.0 * a)) * (1.0 / a - 1.0)

    def Q_slope(self) -> float:
        a = self.alpha
        return self.M * (1.0 / a - 1.0) / (4.0 * (1.0 - 2.0 * a) * (1.0 - 4.0))


class NeutralBlowUp(SolverError):
    def __init__(self, msg: str, trajectory: "NeutralTrajectory"):
        super().__init__(msg)
        self.trajectory = trajectory


@dataclass
class NeutralTrajectory:
    system: NeutralSystem
    s: np.ndarray
    y: np.ndarray  # (n, 8) in FIELDS order
    status: str = "ok"
    relaxation_sweeps: int = 0
    info: dict = field(default_factory=dict)

    @property
    def rho(self) -> np.ndarray:
        return self.y[:, 0] ** 2 + self.y[:, 1] ** 2

    @property
    def c0(self) -> np.ndarray:
        return self.y[:, 2] + self.y[:, 3]

    @property
    def Q(self) -> np.ndarray:
        ck, sk = self.y[:, 0], self.y[:, 1]
        return (self.y[:, 4] + self.y[:, 5]) * (ck * ck - sk * sk) + (self.y[:, 6] + self.y[:, 7]) * 2 * ck * sk

    def as_mz(self) -> Trajectory:
        """(unstable, neutral, stable) magnitudes for the dominance classifier."""
        x = np.hypot(self.y[:, 4], self.y[:, 6])
        yv = np.sqrt(self.rho)
        z = np.sqrt(self.y[:, 2] ** 2 + self.y[:, 3] ** 2 + self.y[:, 5] ** 2 + self.y[:, 7] ** 2)
        return Trajectory(self.s, x, yv, z)


def integrate_neutral_system(k: int, initial: NeutralState, s_range: tuple[float, float],
                             n_out: int = 4001, rho_max: float = 0.05, rtol: float = 1e-10,
                             sweeps: int = 12, strict: bool = True, log_grid: bool = False) -> NeutralTrajectory:
    """Integrate the truncated coefficient system.

    The two modes with positive rate (c_2k^+, s_2k^+) are taken on their bounded
    branch: forward pass for the other six with the unstable pair frozen, backward
    pass for the unstable pair, repeated until the sweeps agree.
    """
    sysm = NeutralSystem(k)
    s0, s1 = map(float, s_range)
    if not s1 > s0:
        raise ParameterError("s_range must increase")
    rho0 = initial.rho
    if not (0.0 < rho0 <= 1e-2):
        raise ParameterError("need 0 < rho(0) <= 1e-2")
    mu = sysm.rate2k[0]
    f2 = sysm.force2k
    y0 = initial.vector()
    atol = 1e-12 * rho0

    def quasi(ck, sk):
        return -f2 * (ck * ck - sk * sk) / mu, -f2 * (2 * ck * sk) / mu

    unstable = None  # callable s -> (c2p, s2p)
    end = s1
    stopped = False
    prev = None
    used = 0
    for used in range(1, sweeps + 1):
        def fwd(s, y6, _u=unstable):
            ck, sk = y6[0], y6[1]
            c2p, s2p = quasi(ck, sk) if _u is None else _u(s)
            full = np.array([y6[0], y6[1], y6[2], y6[3], c2p, y6[4], s2p, y6[5]])
            d = sysm.rhs(full)
            return d[[0, 1, 2, 3, 5, 7]]

        def blow(_s, y6):
            return rho_max - (y6[0] ** 2 + y6[1] ** 2)
        blow.terminal = True

        def vanish(_s, y6):
            return (y6[0] ** 2 + y6[1] ** 2) - 1e-300
        vanish.terminal = True

        sol = solve_ivp(fwd, (s0, end), y0[[0, 1, 2, 3, 5, 7]], method="RK45", rtol=rtol, atol=atol,
                        dense_output=True, events=(blow, vanish))
        if not sol.success:
            raise SolverError(sol.message)
        if sol.t_events[1].size:
            raise SolverError("rho underflowed to 0")
        if sol.t_events[0].size:
            stopped = True
            end = float(sol.t_events[0][0]) * (1 - 1e-12)
        # backward pass on the bounded branch of the unstable pair
        ckf = lambda s: sol.sol(s)[0]  # noqa: E731
        skf = lambda s: sol.sol(s)[1]  # noqa: E731

        def bwd(s, u):
            ck, sk = ckf(s), skf(s)
            return np.array([mu * u[0] + f2 * (ck * ck - sk * sk), mu * u[1] + f2 * 2 * ck * sk])
        uT = np.array(quasi(ckf(end), skf(end)))
        bsol = solve_ivp(bwd, (end, s0), uT, method="RK45", rtol=rtol, atol=atol * 1e-2, dense_output=True)
        if not bsol.success:
            raise SolverError(bsol.message)
        unstable = lambda s, _b=bsol: _b.sol(s)  # noqa: E731
        probe = np.linspace(s0, end, 257)
        cur = np.vstack([sol.sol(probe), bsol.sol(probe)])
        if prev is not None and prev.shape == cur.shape:
            scale = np.max(np.abs(cur)) + 1e-300
            if np.max(np.abs(cur - prev)) <= 1e-11 * scale:
                break
        prev = cur

    if log_grid:
        s = np.geomspace(max(s0, 1e-12), end, n_out) if s0 > 0 else np.linspace(s0, end, n_out)
    else:
        s = np.linspace(s0, end, n_out)
    six = sol.sol(s)
    un = bsol.sol(s)
    y = np.column_stack([six[0], six[1], six[2], six[3], un[0], six[4], un[1], six[5]])
    # the unstable pair starts on its bounded branch, not at the given initial values
    traj = NeutralTrajectory(sysm, s, y, "blow-up" if stopped else "ok", used,
                             {"s_end": end, "rho_max": rho_max})
    if np.any(traj.rho <= 0):
        raise SolverError("rho left the positive cone")
    if stopped and strict:
        raise NeutralBlowUp(f"rho reached {rho_max} at s = {end:.6g} (truncated system grows)", traj)
    return traj


@dataclass
class SlavingReport:
    c0_ratio_error: float
    Q_ratio_error: float
    identity_error: float
    window: tuple[float, float]
    measured_rho_coefficient: float  # median of rho' / rho^2 on the window
    a: float

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else float(v)) for k, v in self.__dict__.items()}


def slaving_relations_check(traj: NeutralTrajectory, trim: float = 20.0, rho_growth: float = 2.0) -> SlavingReport:
    """c0/rho and Q/rho^2 against their slaved limits once transients have decayed.

    The window starts `trim` units after the first sample and ends where rho has
    grown by `rho_growth` from its value there (or at the end of the trajectory).
    """
    sysm = traj.system
    s = traj.s
    rho = traj.rho
    start = s[0] + trim
    sel = s >= start
    if not sel.any():
        raise ParameterError("trajectory shorter than the transient trim")
    r_start = rho[sel][0]
    sel &= rho <= rho_growth * r_start
    if sel.sum() < 8:
        raise ParameterError("window too short for slaving checks")
    c0r = traj.c0[sel] / rho[sel]
    Qr = traj.Q[sel] / rho[sel] ** 2
    e_c0 = float(np.max(np.abs(c0r / sysm.c0_slope() - 1.0)))
    e_Q = float(np.max(np.abs(Qr / sysm.Q_slope() - 1.0)))
    k = sysm.k
    ident = 0.0
    for j in range(0, 3 * k + 1):
        lhs, rhs = shifted_product(sysm.alpha, j)
        ident = max(ident, abs(lhs - rhs))
    drho = np.gradient(rho, s)
    coef = float(np.median(drho[sel] / rho[sel] ** 2))
    return SlavingReport(e_c0, e_Q, ident, (float(s[sel][0]), float(s[sel][-1])), coef, sysm.a)


def s_rho_limit_error(traj: NeutralTrajectory, window: tuple[float, float] = (1e3, 1e4)) -> float:
    """max |a s rho(s) - 1| on the window; inf if the trajectory does not reach it."""
    lo, hi = window
    if traj.s[-1] < hi * (1 - 1e-12):
        return math.inf
    sel = (traj.s >= lo) & (traj.s <= hi)
    return float(np.max(np.abs(traj.system.a * traj.s[sel] * traj.rho[sel] - 1.0)))
