"""Homogenized dislocation density: effective flux, macroscopic flow, energy.

The effective flux g(rho, l) = -v rho is read off the periodic cell
problem, n particles in a box of m periods of sigma driven by sigma + l/2.
The macroscopic model is w_t = g(w_x, L w) for gradient-periodic w.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import RK45
from scipy.interpolate import RegularGridInterpolator

from .core import StressField
from .ddd import SINUSOIDAL_GAMMA, DDDConfig, Trajectory, _check_order, pair_forces
from .errors import (
    ArgumentError,
    AveragingError,
    CollisionError,
    DislocScaleError,
    ExtrapolationError,
    RangeError,
    SchemeError,
    StabilityError,
    StiffnessError,
    TableError,
)
from .nonlocal_ops import LineField, PeriodicLevyOperator

log = logging.getLogger(__name__)

PIN_FRACTION = 1e-4
MAX_DENOMINATOR = 16


@dataclass
class CellProblemSpec:
    n: int
    m: int
    l: float = 0.0
    delta: float | None = None
    gamma: float = SINUSOIDAL_GAMMA
    t_transient: float | None = None
    t_average: float | None = None
    phase: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or int(self.m) != self.m or self.n < 1 or self.m < 1:
            raise ArgumentError("n and m must be positive integers")
        if not self.gamma > 0:
            raise ArgumentError("gamma must be positive")
        if self.t_transient is None:
            self.t_transient = 50.0 / self.gamma
        if self.t_average is None:
            self.t_average = 20.0 * self.t_transient
        if self.t_average < 10 * self.t_transient:
            raise ArgumentError("t_average must be at least 10 * t_transient")

    @property
    def rho(self) -> float:
        return self.n / self.m

    @classmethod
    def from_rho(cls, rho: float, **kw) -> "CellProblemSpec":
        n, m, _ = rational_density(rho)
        return cls(n, m, **kw)


def rational_density(rho: float, max_denominator: int = MAX_DENOMINATOR) -> tuple[int, int, bool]:
    """(n, m, exact) with n/m the closest fraction to rho."""
    if not rho > 0:
        raise ArgumentError("density must be positive")
    f = Fraction(rho).limit_denominator(max_denominator)
    exact = abs(float(f) - rho) <= 1e-12 * rho
    if not exact:
        log.warning("density %g approximated by %d/%d", rho, f.numerator, f.denominator)
    return f.numerator, f.denominator, exact


@dataclass
class CellResult:
    g: np.ndarray
    v: np.ndarray
    v_halves: np.ndarray
    t_average: float
    pinned: np.ndarray
    steps: int


def _slope(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares slope of each column of y against t."""
    tc = t - t.mean()
    return (tc @ (y - y.mean(axis=0))) / (tc @ tc)


def cell_problem_batch(
    n: int,
    m: int,
    l_values: Sequence[float],
    sigma: StressField,
    *,
    delta: float | None = None,
    gamma: float = SINUSOIDAL_GAMMA,
    t_transient: float | None = None,
    t_average: float | None = None,
    phase: float = 0.0,
    tolerance: float = 1e-8,
    averaging_rtol: float = 2e-2,
    max_doublings: int = 3,
    samples: int = 400,
) -> CellResult:
    """Drift velocity of the n-particle periodic system for several l at once.

    The systems for different l are independent; stacking them in one ODE
    shares the integrator overhead. The drift is the regression slope of
    the mean position over the averaging window, checked against the two
    half-window slopes. Windows that fail the check are doubled up to
    ``max_doublings`` times before an AveragingError is raised.
    """
    spec = CellProblemSpec(n, m, 0.0, delta, gamma, t_transient, t_average, phase)
    if sigma.mode != "periodic":
        raise ArgumentError("the cell problem needs a 1-periodic stress")
    ls = np.asarray(l_values, dtype=float)
    K = ls.size
    cfg = DDDConfig(gamma=gamma, interaction="periodic", box=float(m), delta=delta, tolerance=tolerance, atol=1e-10)
    x0 = phase + np.arange(n) * (m / n)
    y0 = np.tile(x0, K)
    drive = np.repeat(0.5 * ls, n)

    def rhs(t, y):
        X = y.reshape(K, n)
        f = sigma(y) + drive + pair_forces(X, cfg).ravel()
        return -gamma * f

    t0 = spec.t_transient
    T = spec.t_average
    solver = RK45(rhs, 0.0, y0, t0 + T * 2**max_doublings, rtol=tolerance, atol=1e-10)
    segments, ends = [], []
    steps = 0

    def advance(t_target):
        nonlocal steps
        while solver.t < t_target:
            msg = solver.step()
            if solver.status == "failed":
                raise StiffnessError(f"cell problem step size underflow at t={solver.t:.4g}: {msg}")
            steps += 1
            X = solver.y.reshape(K, n)
            for k in range(K):
                if not _check_order(X[k], float(m)):
                    raise CollisionError(f"particle ordering violated in cell problem l={ls[k]:g} at t={solver.t:.4g}")
            segments.append(solver.dense_output())
            ends.append(solver.t)

    def sample(ts):
        out = np.empty((ts.size, K))
        j = 0
        for i, t in enumerate(ts):
            while ends[j] < t:
                j += 1
            out[i] = segments[j](t).reshape(K, n).mean(axis=1)
        return out

    v = np.zeros(K)
    halves = np.zeros((K, 2))
    pin = PIN_FRACTION * gamma
    pending = np.ones(K, dtype=bool)
    window = T
    for attempt in range(max_doublings + 1):
        advance(t0 + window)
        ts = np.linspace(t0, t0 + window, samples + 1)
        Y = sample(ts)
        mid = samples // 2
        s_all = _slope(ts, Y)
        s1 = _slope(ts[: mid + 1], Y[: mid + 1])
        s2 = _slope(ts[mid:], Y[mid:])
        ok = np.abs(s1 - s2) <= np.maximum(averaging_rtol * np.abs(s_all), pin)
        upd = pending.copy()
        v[upd] = s_all[upd]
        halves[upd, 0] = s1[upd]
        halves[upd, 1] = s2[upd]
        pending &= ~ok
        if not pending.any():
            break
        if attempt < max_doublings:
            window *= 2
    if pending.any():
        bad = ", ".join(f"l={x:g}" for x in ls[pending])
        raise AveragingError(f"drift estimate did not settle for rho={n}/{m} at {bad}")
    pinned = np.abs(v) < pin
    v = np.where(pinned, 0.0, v)
    return CellResult(-v * (n / m) + 0.0, v, halves, window, pinned, steps)


def cell_problem_g(spec: CellProblemSpec, sigma: StressField, **kw) -> float:
    """g_delta(rho, l) = -v rho from a single cell problem."""
    res = cell_problem_batch(
        spec.n,
        spec.m,
        [spec.l],
        sigma,
        delta=spec.delta,
        gamma=spec.gamma,
        t_transient=spec.t_transient,
        t_average=spec.t_average,
        phase=spec.phase,
        **kw,
    )
    return float(res.g[0])


@dataclass
class EffectiveFluxTable:
    rho_grid: np.ndarray
    l_grid: np.ndarray
    g: np.ndarray
    g_raw: np.ndarray
    gamma: float = SINUSOIDAL_GAMMA
    sigma_tag: str = ""
    delta: float | None = None
    _interp: RegularGridInterpolator | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.rho_grid = np.asarray(self.rho_grid, dtype=float)
        self.l_grid = np.asarray(self.l_grid, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        self.g_raw = np.asarray(self.g_raw, dtype=float)
        shape = (self.rho_grid.size, self.l_grid.size)
        if self.g.shape != shape or self.g_raw.shape != shape:
            raise ArgumentError("table values must have shape (len(rho_grid), len(l_grid))")
        if np.any(np.diff(self.rho_grid) <= 0) or np.any(np.diff(self.l_grid) <= 0):
            raise ArgumentError("table grids must be strictly increasing")

    @property
    def clamped_by(self) -> np.ndarray:
        return self.g - self.g_raw

    @property
    def max_clamp(self) -> float:
        return float(np.max(np.abs(self.clamped_by)))

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.g, axis=1) >= 0))

    @property
    def lip_rho(self) -> float:
        if self.rho_grid.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.g, axis=0)) / np.diff(self.rho_grid)[:, None]))

    @property
    def lip_l(self) -> float:
        return float(np.max(np.abs(np.diff(self.g, axis=1)) / np.diff(self.l_grid)[None, :]))

    def _interpolator(self) -> RegularGridInterpolator:
        if self._interp is None:
            rho = self.rho_grid
            g = self.g
            if rho.size == 1:
                rho = np.array([rho[0], rho[0] + 1.0])
                g = np.vstack([g, g])
            self._interp = RegularGridInterpolator((rho, self.l_grid), g, method="linear")
        return self._interp

    def _check_hull(self, rho, l):
        tol = 1e-12
        r0, r1 = self.rho_grid[0], self.rho_grid[-1]
        l0, l1 = self.l_grid[0], self.l_grid[-1]
        if np.any(rho < r0 - tol) or np.any(rho > r1 + tol) or np.any(l < l0 - tol) or np.any(l > l1 + tol):
            bad_r = rho[(rho < r0 - tol) | (rho > r1 + tol)]
            bad_l = l[(l < l0 - tol) | (l > l1 + tol)]
            raise ExtrapolationError(
                f"flux table queried outside rho in [{r0:g}, {r1:g}], l in [{l0:g}, {l1:g}]"
                + (f"; rho={bad_r.min():.4g}..{bad_r.max():.4g}" if bad_r.size else "")
                + (f"; l={bad_l.min():.4g}..{bad_l.max():.4g}" if bad_l.size else "")
            )

    def __call__(self, rho, l):
        """Bilinear interpolation of g; raises ExtrapolationError outside the grid."""
        rho, l = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(l, dtype=float))
        self._check_hull(rho, l)
        r0, r1 = self.rho_grid[0], self.rho_grid[-1]
        pts = np.stack([np.clip(rho, r0, r1), np.clip(l, self.l_grid[0], self.l_grid[-1])], axis=-1)
        out = self._interpolator()(pts.reshape(-1, 2)).reshape(rho.shape)
        return out[()] if out.ndim == 0 else out

    def rows(self) -> list[tuple[float, float, float, float]]:
        return [
            (float(r), float(l), float(self.g[i, j]), float(self.clamped_by[i, j]))
            for i, r in enumerate(self.rho_grid)
            for j, l in enumerate(self.l_grid)
        ]


def isotonic_clamp(row: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators fit: the closest nondecreasing sequence in l2."""
    row = np.asarray(row, dtype=float)
    vals: list[float] = []
    counts: list[int] = []
    for v in row:
        vals.append(float(v))
        counts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            c = counts[-2] + counts[-1]
            vals[-2] = (vals[-2] * counts[-2] + vals[-1] * counts[-1]) / c
            counts[-2] = c
            vals.pop()
            counts.pop()
    return np.repeat(vals, counts)


def build_flux_table(
    rho_grid: Sequence[float],
    l_grid: Sequence[float],
    sigma: StressField,
    delta: float | None = None,
    gamma: float = SINUSOIDAL_GAMMA,
    *,
    jobs: int = 1,
    clamp_tolerance: float | None = None,
    **cell_kw,
) -> EffectiveFluxTable:
    """Cell-problem flux at every (rho, l) node, isotonic-clamped in l.

    Rows are computed concurrently (one batched cell problem per rho) and
    assembled in grid order. A raw violation of l-monotonicity above
    ``clamp_tolerance`` (default 1e-2 gamma) fails the build.
    """
    rho_grid = np.asarray(rho_grid, dtype=float)
    l_grid = np.asarray(l_grid, dtype=float)
    if np.any(np.diff(rho_grid) <= 0) or np.any(np.diff(l_grid) <= 0):
        raise ArgumentError("table grids must be sorted and distinct")
    clamp_tolerance = 1e-2 * gamma if clamp_tolerance is None else clamp_tolerance

    def row(rho):
        n, m, _ = rational_density(rho)
        try:
            return cell_problem_batch(n, m, l_grid, sigma, delta=delta, gamma=gamma, **cell_kw).g
        except DislocScaleError as exc:
            raise TableError(f"cell problem failed at rho={rho:g}: {exc}") from exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(row, rho_grid))
    else:
        raw = [row(r) for r in rho_grid]
    g_raw = np.array(raw)
    g = np.array([isotonic_clamp(r) for r in g_raw])
    clamp = np.abs(g - g_raw)
    if np.max(clamp) > clamp_tolerance:
        i, j = np.unravel_index(np.argmax(clamp), clamp.shape)
        raise TableError(
            f"raw flux violates monotonicity in l by {clamp[i, j]:.3e} at rho={rho_grid[i]:g}, l={l_grid[j]:g}"
        )
    if sigma.mode == "periodic" and abs(sigma.period_mean()) < 1e-12:
        zero = np.nonzero(np.abs(l_grid) < 1e-15)[0]
        for j in zero:
            for i, r in enumerate(rho_grid):
                if abs(g[i, j]) > PIN_FRACTION * gamma * r:
                    raise TableError(f"pinning law g(rho,0)=0 violated at rho={r:g}: g={g[i, j]:.3e}")
    return EffectiveFluxTable(rho_grid, l_grid, g, g_raw, gamma, sigma.tag, delta)


def threshold_width(table: EffectiveFluxTable, rho_index: int = 0) -> tuple[float, float]:
    """Extent (l_min, l_max) of the zero plateau of one table row."""
    row = table.g[rho_index]
    zero = np.nonzero(row == 0.0)[0]
    if zero.size == 0:
        return (math.nan, math.nan)
    return float(table.l_grid[zero[0]]), float(table.l_grid[zero[-1]])


@dataclass
class DeltaReport:
    deltas: np.ndarray
    g: np.ndarray
    differences: np.ndarray
    decreasing: bool

    def lines(self) -> list[str]:
        out = [f"delta={d:g}  g={g:.8f}" for d, g in zip(self.deltas, self.g)]
        out += [f"|g_{self.deltas[k]:g} - g_{self.deltas[k + 1]:g}| = {x:.3e}" for k, x in enumerate(self.differences)]
        out.append(f"successive differences decreasing: {self.decreasing}")
        return out


def delta_robustness(spec: CellProblemSpec, sigma: StressField, deltas: Sequence[float], **cell_kw) -> DeltaReport:
    """g_delta for decreasing deltas and the successive differences."""
    deltas = np.asarray(deltas, dtype=float)
    if np.any(np.diff(deltas) >= 0):
        raise ArgumentError("deltas must be strictly decreasing")
    gs = []
    for d in deltas:
        s = CellProblemSpec(spec.n, spec.m, spec.l, float(d), spec.gamma, spec.t_transient, spec.t_average, spec.phase)
        gs.append(cell_problem_g(s, sigma, **cell_kw))
    gs = np.array(gs)
    diffs = np.abs(np.diff(gs))
    dec = bool(np.all(np.diff(diffs) < 0)) if diffs.size > 1 else True
    return DeltaReport(deltas, gs, diffs, dec)


@dataclass
class MacroState:
    w: LineField
    t: float = 0.0

    def __post_init__(self):
        if self.w.gradient_period is None:
            raise ArgumentError("macroscopic fields need a gradient_period closure")


def macro_state(func: Callable[[np.ndarray], np.ndarray], rho_bar: float, m: int, X: float = 1.0, x0: float = 0.0) -> MacroState:
    """Sample w0 = func on m+1 nodes of one period; func must satisfy w(x+X) = w(x) + rho_bar X."""
    x = x0 + np.linspace(0.0, X, m + 1)
    vals = np.asarray(func(x), dtype=float)
    vals[-1] = vals[0] + rho_bar * X
    return MacroState(LineField(x, vals, gradient_period=(X, rho_bar * X)))


def dd_stability_bound(table: EffectiveFluxTable, op: PeriodicLevyOperator) -> float:
    """0.25 min(h / Lip_rho, 1 / (Lip_l ||L||)); keeps every update coefficient nonnegative."""
    a = op.h / table.lip_rho if table.lip_rho > 0 else math.inf
    b = 1.0 / (table.lip_l * op.norm) if table.lip_l > 0 else math.inf
    return 0.25 * min(a, b)


@dataclass
class UpwindStats:
    """How often the Godunov flux took the forward, backward or an interior value."""

    forward: int = 0
    backward: int = 0
    interior: int = 0


def godunov_flux(table: EffectiveFluxTable, bwd: np.ndarray, fwd: np.ndarray, l: np.ndarray, stats: UpwindStats | None = None) -> np.ndarray:
    """Monotone flux for w_t = g(w_x, l): max of g over [bwd, fwd] if bwd <= fwd, else min over [fwd, bwd].

    Nondecreasing in the forward difference and nonincreasing in the
    backward one; where g is monotone in rho it is the one-sided value
    chosen by the sign of dg/drho. Extremes of the piecewise-bilinear g lie
    at the endpoints or at rho grid nodes inside the interval.
    """
    lo = np.minimum(bwd, fwd)
    hi = np.maximum(bwd, fwd)
    gb = table(bwd, l)
    gf = table(fwd, l)
    cands = [gb, gf]
    for r in table.rho_grid:
        inside = (lo < r) & (r < hi)
        if np.any(inside):
            cands.append(np.where(inside, table(np.full_like(l, r), l), np.nan))
    C = np.vstack(cands)
    expand = bwd <= fwd
    out = np.where(expand, np.nanmax(C, axis=0), np.nanmin(C, axis=0))
    if stats is not None:
        fw = out == gf
        bw = ~fw & (out == gb)
        stats.forward += int(np.sum(fw))
        stats.backward += int(np.sum(bw))
        stats.interior += int(np.sum(~fw & ~bw))
    return out


def dd_rate(p: np.ndarray, rho_bar: float, table: EffectiveFluxTable, op: PeriodicLevyOperator, stats: UpwindStats | None = None) -> np.ndarray:
    """Numerical g(w_x, L w) on the periodic nodes (Godunov flux in w_x)."""
    dp = np.diff(np.append(p, p[0])) / op.h
    fwd = rho_bar + dp
    bwd = rho_bar + np.roll(dp, 1)
    return godunov_flux(table, bwd, fwd, op.apply_periodic(p), stats)


def dd_evolve(
    state: MacroState,
    table: EffectiveFluxTable,
    dt: float | None,
    t_end: float,
    *,
    sample_times: Sequence[float] = (),
    on_sample: Callable[[MacroState], None] | None = None,
    stats: UpwindStats | None = None,
) -> MacroState:
    """Explicit monotone scheme for w_t = g(w_x, L w) on one gradient period."""
    w = state.w
    X, jump = w.gradient_period
    rho_bar = jump / X
    m = w.x.size - 1
    op = PeriodicLevyOperator(m, X)
    bound = dd_stability_bound(table, op)
    dt = bound if dt is None else dt
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.3e} exceeds the CFL bound {bound:.3e}")
    x = w.x
    p = w.periodic_part()[:-1].copy()
    t = state.t
    stops = sorted({float(s) for s in sample_times if state.t <= s <= t_end} | {float(t_end)})

    def pack(p, t):
        vals = np.append(p, p[0]) + rho_bar * x
        vals[-1] = vals[0] + jump
        return MacroState(w.with_values(vals), t)

    for stop in stops:
        nsteps = int(math.ceil((stop - t) / dt - 1e-12))
        if nsteps > 0:
            tau = (stop - t) / nsteps
            for _ in range(nsteps):
                p = p + tau * dd_rate(p, rho_bar, table, op, stats)
                dp = rho_bar + np.diff(np.append(p, p[0])) / op.h
                if np.min(dp) < -1e-12:
                    raise SchemeError(f"density w_x became negative ({np.min(dp):.3e}) near t={t:.4g}")
        t = stop
        if on_sample is not None and stop in sample_times:
            on_sample(pack(p, t))
    return pack(p, t)


def dd_energy(state: MacroState, sigma_mean: float = 0.0) -> float:
    """E = int_period (-1/4 p L p - sigma_mean w), p = w - rho_bar x.

    The periodic part p carries the energy of a gradient-periodic field;
    the affine part is annihilated by L.
    """
    w = state.w
    X, _ = w.gradient_period
    m = w.x.size - 1
    op = PeriodicLevyOperator(m, X)
    p = w.periodic_part()[:-1]
    h = X / m
    e = -0.25 * h * float(np.dot(p, op.apply_periodic(p)))
    if sigma_mean:
        e -= sigma_mean * float(np.trapezoid(w.values, w.x))
    return e


def rescale_ddd(traj: Trajectory, eps3: float, times: Sequence[float], x: np.ndarray) -> list[LineField]:
    """w^eps(x, t) = eps * count(x/eps, t/eps) sampled on the macroscopic grid x.

    count(y) is the number of particles at or left of y; for a periodic
    trajectory it also counts the images and the base count below the
    window. Periodic trajectories yield gradient-periodic fields (the grid
    must span one macroscopic period eps * box).
    """
    x = np.asarray(x, dtype=float)
    y = x / eps3
    out = []
    for t in times:
        tm = t / eps3
        if tm > traj.t_end * (1 + 1e-12) + 1e-12:
            raise RangeError(f"macroscopic time {t:g} beyond the trajectory (t/eps = {tm:g} > {traj.t_end:g})")
        pos = traj.at(min(tm, traj.t_end))
        if traj.box is None:
            count = np.sum(y[:, None] >= pos[None, :], axis=1).astype(float)
            out.append(LineField(x, eps3 * count, far_field=(0.0, eps3 * pos.size)))
        else:
            L = traj.box
            count = traj.base_count + np.sum(np.floor((y[:, None] - pos[None, :]) / L) + 1, axis=1)
            X = eps3 * L
            out.append(LineField(x, eps3 * count, gradient_period=(X, eps3 * pos.size)))
    return out
