"""Scale-transition experiments FK -> PN -> DDD -> DD.

Each experiment sweeps the small parameter of one passage and measures the
distance between the finer model and its limit.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .core import PeriodicPotential, StressField, zero_stress
from .dd import EffectiveFluxTable, MacroState, dd_evolve, macro_state, rescale_ddd
from .ddd import DDDConfig, ParticleSet, ddd_evolve, min_separation, positions_from_density
from .errors import DislocScaleError, ExtractionError
from .fk import LatticeDomain, fk_boundary_trace, fk_evolve, make_lattice_state
from .nonlocal_ops import LineField
from .pn import LayerSolution, PNState, build_a3_initial, extract_fronts, pn_evolve

log = logging.getLogger(__name__)


def arctan_lattice_data(width: float = 2.0) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Harmonic single-dislocation data 1/2 + arctan(X1/(X2 + width))/pi."""
    return lambda X1, X2: 0.5 + np.arctan(np.asarray(X1) / (np.asarray(X2) + width)) / math.pi


@dataclass
class SweepRow:
    param: float
    error: float
    ratio: float | None
    runtime: float
    ok: bool = True
    note: str = ""


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)
    series: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.rows])

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rows[1:]], dtype=float)

    @property
    def strictly_decreasing(self) -> bool:
        e = self.errors
        return bool(np.all(np.isfinite(e)) and np.all(np.diff(e) < 0))

    def add(self, param, error, runtime, ok=True, note=""):
        prev = self.rows[-1].error if self.rows else None
        ratio = error / prev if prev and math.isfinite(prev) and prev > 0 else None
        self.rows.append(SweepRow(float(param), float(error), ratio, runtime, ok, note))


def fk2pn(
    eps_list: Sequence[float],
    pot: PeriodicPotential,
    *,
    A: float = 8.0,
    B: float = 4.0,
    t_end: float = 1.0,
    pn_h: float = 0.0125,
    truncation: str = "poisson",
    window: float | None = None,
    width: float = 2.0,
) -> SweepResult:
    """Boundary trace of the lattice vs the unrescaled PN flow (eps2 = 1, sigma = 0).

    Both start from the trace of the harmonic arctan data and see the same
    far field (0 below -A, 1 above A). The error is the sup over |X1| <= window.
    """
    u0 = arctan_lattice_data(width)
    window = A / 2 if window is None else window
    x = np.arange(-A, A + pn_h / 2, pn_h)
    st = PNState(LineField(x, u0(x, 0 * x), far_field=(0.0, 1.0)), 0.0, 1.0, 1)
    ref = pn_evolve(st, pot, None, None, t_end)
    spline = CubicSpline(x, ref.v.values)
    res = SweepResult()
    res.series["pn"] = (x, ref.v.values)
    for eps in eps_list:
        t0 = time.perf_counter()
        dom = LatticeDomain(eps, A, B, truncation)
        s = make_lattice_state(dom, u0, 1)
        s = fk_evolve(s, dom, pot, None, 1.0, t_end)
        tr = fk_boundary_trace(s)
        m = np.abs(tr.x) <= window + 1e-12
        err = float(np.max(np.abs(tr.values[m] - spline(tr.x[m]))))
        mono = bool(np.all(np.diff(tr.values) >= -1e-12))
        res.add(eps, err, time.perf_counter() - t0, mono, "" if mono else "trace not monotone")
        res.series[eps] = (tr.x, tr.values)
    return res


def pn2ddd(
    positions: Sequence[float],
    eps_list: Sequence[float],
    pot: PeriodicPotential,
    layer: LayerSolution,
    sigma: StressField | None = None,
    *,
    half_width: float = 8.0,
    h_factor: float = 0.1,
    t_end: float = 1.0,
    n_samples: int = 10,
    tolerance: float = 1e-10,
) -> SweepResult:
    """PN fronts of the rescaled flow vs the particle system from the same positions.

    The grid spacing is h_factor * eps. Extraction failures are recorded in
    the row (error = nan) and the sweep continues.
    """
    sigma = sigma or zero_stress()
    pos = np.asarray(positions, dtype=float)
    times = np.linspace(0.0, t_end, n_samples + 1)[1:]
    cfg = DDDConfig(gamma=layer.gamma, sigma=sigma, tolerance=tolerance, atol=1e-12)
    traj = ddd_evolve(ParticleSet(pos), cfg, t_end, np.concatenate([[0.0], times]))
    res = SweepResult()
    res.series["ddd"] = (traj.times, traj.positions)
    for eps in eps_list:
        t0 = time.perf_counter()
        h = h_factor * eps
        x = np.linspace(-half_width, half_width, int(round(2 * half_width / h)) + 1)
        state = build_a3_initial(pos, layer, sigma, eps, x)
        fronts = []

        def grab(s):
            fronts.append(extract_fronts(s, pos.size))

        try:
            pn_evolve(state, pot, sigma, None, t_end, sample_times=list(times), on_sample=grab)
            F = np.array(fronts)
            err = float(np.max(np.abs(F - traj.positions[1:])))
            res.add(eps, err, time.perf_counter() - t0)
            res.series[eps] = (times, F)
        except ExtractionError as exc:
            log.warning("front extraction failed at eps=%g: %s", eps, exc)
            res.add(eps, math.nan, time.perf_counter() - t0, False, str(exc))
    return res


def gradient_periodic_profile(rho_bar: float, amplitude: float) -> Callable[[np.ndarray], np.ndarray]:
    """w0(x) = rho_bar x + amplitude sin(2 pi x)/(2 pi), increasing if amplitude < rho_bar."""
    return lambda x: rho_bar * np.asarray(x) + amplitude * np.sin(2 * math.pi * np.asarray(x)) / (2 * math.pi)


def ddd2dd(
    eps_list: Sequence[float],
    w0: Callable[[np.ndarray], np.ndarray],
    rho_bar: float,
    sigma: StressField,
    table: EffectiveFluxTable,
    *,
    t_end: float = 0.1,
    n_samples: int = 4,
    macro_nodes: int = 128,
    window: tuple[float, float] = (0.25, 0.75),
    fine: int = 2000,
    tolerance: float = 1e-8,
) -> SweepResult:
    """Rescaled particle staircase w^eps vs the homogenized w0 on a compact window.

    The macroscopic period is 1, so the microscopic box holds 1/eps periods
    of sigma and rho_bar/eps particles.
    """
    times = np.linspace(0.0, t_end, n_samples + 1)
    snaps: list[MacroState] = []
    st = macro_state(w0, rho_bar, macro_nodes)
    snaps.append(st)
    dd_evolve(st, table, None, t_end, sample_times=list(times[1:]), on_sample=snaps.append)
    res = SweepResult()
    xf = np.linspace(window[0], window[1], fine + 1)
    res.series["dd"] = [(s.t, s.w.x, s.w.values) for s in snaps]
    for eps in eps_list:
        t0 = time.perf_counter()
        box = 1.0 / eps
        if abs(box - round(box)) > 1e-9:
            raise DislocScaleError(f"1/eps must be an integer (eps={eps:g})")
        box = float(round(box))
        ps = positions_from_density(w0, eps, (0.0, 1.0))
        ps = ParticleSet(ps.positions, box=box, base_count=ps.base_count)
        cfg = DDDConfig(gamma=table.gamma, interaction="periodic", box=box, sigma=sigma, delta=table.delta, tolerance=tolerance, atol=1e-10)
        traj = ddd_evolve(ps, cfg, t_end / eps)
        xs = np.linspace(0.0, 1.0, int(round(box)) * 64 + 1)
        fields = rescale_ddd(traj, eps, times, xs)
        err = 0.0
        for s, f in zip(snaps, fields):
            w_dd = np.interp(xf, s.w.x, s.w.values)
            count = traj.base_count + np.sum(np.floor((xf[:, None] / eps - traj.at(min(s.t / eps, traj.t_end))[None, :]) / box) + 1, axis=1)
            err = max(err, float(np.max(np.abs(eps * count - w_dd))))
        sep = min_separation(traj)
        res.add(eps, err, time.perf_counter() - t0, bool(np.all(sep.d > 0)))
        res.series[eps] = [(t, f.x, f.values) for t, f in zip(times, fields)]
    return res
