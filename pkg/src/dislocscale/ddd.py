"""Discrete dislocation dynamics on a slip line.

    dx_i/dt = -gamma ( sigma(x_i) + l/2 + sum_{j != i} V'(x_i - x_j) )

with V(x) = -ln|x| / (2 pi), its regularization V_delta, or the periodized
sum over images in a box of length L.
"""
from __future__ import annotations

import bisect
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import RK45
from scipy.optimize import brentq

from .core import RegularizedLogPotential, StressField, log_force, zero_stress
from .errors import ArgumentError, CollisionError, DomainError, RangeError, StiffnessError
from .nonlocal_ops import periodic_interaction_force

log = logging.getLogger(__name__)

SINUSOIDAL_GAMMA = 4.0 * math.pi


@dataclass
class ParticleSet:
    positions: np.ndarray
    t: float = 0.0
    burgers: int = 1
    box: float | None = None
    base_count: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 1:
            raise ArgumentError("positions must be one-dimensional")
        if self.burgers != 1:
            raise ArgumentError("only equal positive Burgers vectors are supported")
        if np.any(np.diff(self.positions) <= 0):
            raise ArgumentError("positions must be strictly increasing")

    @property
    def n(self) -> int:
        return self.positions.size


@dataclass
class DDDConfig:
    gamma: float = SINUSOIDAL_GAMMA
    interaction: str = "singular"  # singular | regularized | periodic
    sigma: StressField = field(default_factory=zero_stress)
    l: float = 0.0
    delta: float | None = None
    box: float | None = None
    tolerance: float = 1e-9
    atol: float = 1e-12

    def __post_init__(self):
        if not self.gamma > 0:
            raise ArgumentError("gamma must be positive")
        if not (0 < self.tolerance <= 1e-3):
            raise ArgumentError("tolerance must lie in (0, 1e-3]")
        if self.interaction not in ("singular", "regularized", "periodic"):
            raise ArgumentError(f"unknown interaction {self.interaction!r}")
        if self.interaction == "regularized" and not self.delta:
            raise ArgumentError("regularized interaction needs delta")
        if self.interaction == "periodic" and not self.box:
            raise ArgumentError("periodic interaction needs a box length")

    @property
    def potential(self) -> RegularizedLogPotential | None:
        return RegularizedLogPotential(self.delta) if self.delta else None


def pair_forces(x: np.ndarray, cfg: DDDConfig) -> np.ndarray:
    """sum_{j != i} V'(x_i - x_j) for every i (works on a trailing particle axis)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n < 2:
        return np.zeros_like(x)
    diff = x[..., :, None] - x[..., None, :]
    idx = np.arange(n)
    # self terms sit where the kernel vanishes: cot(pi/2) = 0 and V'(inf) = 0
    diff[..., idx, idx] = 0.5 * cfg.box if cfg.interaction == "periodic" else np.inf
    if np.any(diff == 0):
        raise DomainError("coincident particles")
    if cfg.interaction == "periodic":
        f = periodic_interaction_force(diff, cfg.box, cfg.potential)
    elif cfg.interaction == "regularized":
        f = cfg.potential.force(diff)
    else:
        f = log_force(diff)
    return f.sum(axis=-1)


def peach_koehler_force(ps: ParticleSet, i: int, cfg: DDDConfig) -> float:
    """sigma(x_i) + l/2 + sum_{j != i} V'(x_i - x_j)."""
    if not 0 <= i < ps.n:
        raise ArgumentError(f"particle index {i} out of range")
    x = ps.positions
    return float(cfg.sigma(x[i]) + 0.5 * cfg.l + pair_forces(x, cfg)[i])


def velocities(x: np.ndarray, cfg: DDDConfig) -> np.ndarray:
    return -cfg.gamma * (cfg.sigma(x) + 0.5 * cfg.l + pair_forces(x, cfg))


@dataclass
class Trajectory:
    """Sampled particle paths plus the integrator's dense output."""

    times: np.ndarray
    positions: np.ndarray
    config: DDDConfig
    box: float | None = None
    base_count: int = 0
    steps: int = 0
    _segments: list = field(default_factory=list, repr=False)
    _ends: list = field(default_factory=list, repr=False)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def at(self, t: float) -> np.ndarray:
        """Positions at any t in [t0, t_end] from the dense output."""
        t0 = float(self.times[0])
        if t < t0 - 1e-12 or t > self.t_end + 1e-12:
            raise RangeError(f"t={t} outside the trajectory [{t0}, {self.t_end}]")
        if not self._segments or t <= t0:
            return self.positions[0].copy()
        k = min(bisect.bisect_left(self._ends, t), len(self._segments) - 1)
        return np.asarray(self._segments[k](t), dtype=float)


def _check_order(y: np.ndarray, box: float | None) -> bool:
    if y.size < 2:
        return True
    ok = bool(np.all(np.diff(y) > 0))
    if box is not None:
        ok = ok and (y[-1] - y[0] < box)
    return ok


def ddd_evolve(
    ps: ParticleSet,
    cfg: DDDConfig,
    t_end: float,
    sample_times: Sequence[float] | None = None,
    *,
    max_step: float = math.inf,
) -> Trajectory:
    """Integrate the particle system with the adaptive Dormand-Prince 4(5) pair.

    Ordering is checked after every accepted step. Without ``sample_times``
    the trajectory records every accepted step.
    """
    y0 = ps.positions.copy()
    box = cfg.box if cfg.interaction == "periodic" else None
    if ps.n == 0:
        ts = np.asarray(sample_times if sample_times is not None else [ps.t, t_end], dtype=float)
        return Trajectory(ts, np.zeros((ts.size, 0)), cfg, box, ps.base_count)
    solver = RK45(
        lambda t, y: velocities(y, cfg),
        ps.t,
        y0,
        t_end,
        rtol=cfg.tolerance,
        atol=cfg.atol,
        max_step=max_step,
    )
    segments, ends = [], []
    step_times, step_pos = [ps.t], [y0]
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise StiffnessError(f"step size underflow at t={solver.t:.6g}: {msg}")
        if not _check_order(solver.y, box):
            raise CollisionError(f"particle ordering violated at t={solver.t:.6g}")
        segments.append(solver.dense_output())
        ends.append(solver.t)
        step_times.append(solver.t)
        step_pos.append(solver.y.copy())
    traj = Trajectory(np.array(step_times), np.array(step_pos), cfg, box, ps.base_count, len(segments), segments, ends)
    if sample_times is not None:
        ts = np.asarray(sample_times, dtype=float)
        traj.positions = np.array([traj.at(t) for t in ts])
        traj.times = ts
    return traj


def positions_from_density(
    w0: Callable[[np.ndarray], np.ndarray],
    eps: float,
    x_range: tuple[float, float] = (-1e3, 1e3),
    *,
    samples: int = 200_001,
) -> ParticleSet:
    """Jump points of floor(w0(eps x)/eps) for macroscopic x in x_range.

    Returns microscopic positions x_k with w0(eps x_k) = k eps. For a bounded
    profile (w0(-inf) = 0) the default range recovers all N = floor(sup w0/eps)
    jumps; a finite window (e.g. one period) records the count below it in
    ``base_count``. An empty set is returned with a warning.
    """
    a, b = x_range
    X = np.linspace(a, b, samples)
    W = np.asarray(w0(X), dtype=float)
    if np.any(np.diff(W) < -1e-12 * max(1.0, np.max(np.abs(W)))):
        raise ArgumentError("density profile w0 must be nondecreasing")
    k_lo = int(math.floor(W[0] / eps + 1e-12))
    k_hi = int(math.floor(W[-1] / eps + 1e-12))
    roots = []
    for k in range(k_lo + 1, k_hi + 1):
        level = k * eps
        j = int(np.searchsorted(W, level - 1e-14 * max(1.0, abs(level)), side="left"))
        j = min(max(j, 1), samples - 1)
        if abs(W[j] - level) <= 1e-14 * max(1.0, abs(level)):
            r = X[j]
        else:
            r = brentq(lambda s: float(w0(np.array(s))) - level, X[j - 1], X[j], xtol=1e-14, rtol=1e-14)
        roots.append(r / eps)
    if not roots:
        warnings.warn("density profile produces no dislocations at this eps", RuntimeWarning, stacklevel=2)
    pos = np.array(roots, dtype=float)
    if pos.size > 1 and np.any(np.diff(pos) <= 0):
        raise ArgumentError("density profile has jumps closer than root-finding resolution")
    return ParticleSet(pos, base_count=k_lo)


@dataclass
class SeparationSeries:
    times: np.ndarray
    d: np.ndarray
    bound_violated: np.ndarray | None = None

    @property
    def nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self.d) >= -1e-12 * np.max(self.d)))


def min_separation(traj: Trajectory, C: float | None = None) -> SeparationSeries:
    """d(t) = min_{i != j} |x_i - x_j| at each sample; +inf when N < 2.

    With a constant C, flags samples where d(t) < d(0) exp(-C gamma t).
    """
    pos = traj.positions
    if pos.shape[1] < 2:
        d = np.full(traj.times.size, np.inf)
    else:
        gaps = np.diff(pos, axis=1)
        if traj.box is not None:
            wrap = traj.box - (pos[:, -1] - pos[:, 0])
            gaps = np.column_stack([gaps, wrap])
        d = gaps.min(axis=1)
    flags = None
    if C is not None and np.all(np.isfinite(d)):
        t = traj.times - traj.times[0]
        flags = d < d[0] * np.exp(-C * traj.config.gamma * t)
    return SeparationSeries(traj.times.copy(), d, flags)
