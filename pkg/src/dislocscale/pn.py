"""Reduced Peierls-Nabarro dynamics on the slip line.

The layer phi solves L phi = W'(phi) with phi(-inf)=0, phi(0)=1/2,
phi(+inf)=1. The rescaled evolution reads

    v_t = (1/eps) [ L v - W'(v)/eps + 2 sigma(x) ],

and eps = 1 with a pre-scaled sigma gives the unrescaled form.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import interpolate
from scipy.sparse.linalg import LinearOperator, minres

from .core import PeriodicPotential, StressField, zero_stress
from .errors import ArgumentError, DivergenceError, ExtractionError, SolverError, StabilityError
from .nonlocal_ops import LevyOperator, LineField

log = logging.getLogger(__name__)


@dataclass
class LayerSolution:
    phi: LineField
    gamma: float
    eta: float
    alpha: float
    residual: float
    iterations: int = 0

    @property
    def x(self) -> np.ndarray:
        return self.phi.x

    @property
    def derivative(self) -> np.ndarray:
        return np.gradient(self.phi.values, self.phi.h)

    def profile(self, y) -> np.ndarray:
        """phi(y), extended beyond the grid by the tail law H(y) - 1/(alpha pi y)."""
        y = np.asarray(y, dtype=float)
        x = self.phi.x
        inside = self.phi(np.clip(y, x[0], x[-1]))
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.heaviside(y, 0.5) - 1.0 / (self.alpha * math.pi * y)
        return np.where((y < x[0]) | (y > x[-1]), tail, inside)


def _layer_constants(phi: np.ndarray, h: float, alpha: float) -> tuple[float, float]:
    dphi = np.gradient(phi, h)
    energy = float(np.trapezoid(dphi**2, dx=h))
    return 2.0 / energy, energy / alpha


def _recentre(x: np.ndarray, phi: np.ndarray, far_field) -> np.ndarray:
    """Translate phi so that phi(0) = 1/2 (cubic interpolation)."""
    spline = interpolate.CubicSpline(x, phi)
    shift = 0.0
    for _ in range(20):
        val = float(spline(shift)) - 0.5
        if abs(val) < 1e-14:
            break
        shift -= val / float(spline(shift, 1))
    y = x + shift
    out = spline(np.clip(y, x[0], x[-1]))
    out = np.where(y < x[0], far_field[0], out)
    return np.where(y > x[-1], far_field[1], out)


def solve_layer(
    pot: PeriodicPotential,
    half_width: float = 100.0,
    h: float = 0.05,
    *,
    tol: float = 1e-10,
    max_iter: int = 200_000,
    recentre_tol: float = 1e-10,
) -> LayerSolution:
    """Layer solution by gradient flow phi_t = L phi - W'(phi) from an arctan guess.

    The flow is re-centred (phi(0) = 1/2) whenever the value at the origin
    drifts by more than ``recentre_tol``.
    """
    n = int(round(2 * half_width / h)) + 1
    x = np.linspace(-half_width, half_width, n)
    if abs(x[n // 2]) > 1e-12:
        raise ArgumentError("layer grid must contain the origin as a node")
    op = LevyOperator(n, h)
    ff = (0.0, 1.0)
    phi = 0.5 + np.arctan(x / pot.alpha) / math.pi
    dt = 0.9 / (2 * op.total + pot.d2W_max)
    mid = n // 2
    res = math.inf
    for it in range(1, max_iter + 1):
        r = op.apply(phi, ff) - pot.dW(phi)
        res = float(np.max(np.abs(r)))
        if res <= tol:
            break
        phi = phi + dt * r
        if abs(phi[mid] - 0.5) > recentre_tol:
            phi = _recentre(x, phi, ff)
        if it % 2000 == 0:
            if np.any(np.diff(phi) <= 0):
                raise SolverError("layer lost monotonicity during the gradient flow")
            log.debug("layer iteration %d residual %.3e", it, res)
    else:
        raise SolverError(f"layer did not converge: residual {res:.3e} after {max_iter} iterations")
    if np.any(np.diff(phi) <= 0):
        raise SolverError("layer solution is not strictly increasing")
    gamma, eta = _layer_constants(phi, h, pot.alpha)
    return LayerSolution(LineField(x, phi, far_field=ff), gamma, eta, pot.alpha, res, it)


@dataclass
class TailReport:
    max_deviation: float
    window: tuple[float, float]

    def __float__(self):
        return self.max_deviation


def layer_tail_check(layer: LayerSolution, window=(10.0, 40.0), side: str = "right") -> TailReport:
    """max over the window of |alpha pi x (phi(x) - H(x)) + 1|."""
    a, b = window
    x = layer.x
    if side == "right":
        m = (x >= a) & (x <= b)
        dev = layer.alpha * math.pi * x[m] * (layer.phi.values[m] - 1.0) + 1.0
    else:
        m = (x <= -a) & (x >= -b)
        dev = layer.alpha * math.pi * x[m] * layer.phi.values[m] + 1.0
    return TailReport(float(np.max(np.abs(dev))), (a, b) if side == "right" else (-b, -a))


@dataclass
class CorrectorSolution:
    psi: LineField
    eta: float
    eta_discrete: float
    residual: float
    solvability_defect: float
    kernel: np.ndarray = field(repr=False, default=None)


def solve_corrector(layer: LayerSolution, pot: PeriodicPotential, *, tol: float = 1e-13) -> CorrectorSolution:
    """psi with L psi - W''(phi) psi = phi' + eta (W''(phi) - W''(0)).

    The discrete operator A = L - W''(phi) has a near-kernel close to phi'.
    It is located by two steps of inverse iteration started from phi'; eta is
    then fixed by the discrete solvability condition against that vector and
    psi is taken orthogonal to it. ``solvability_defect`` is the quadrature
    value of int rhs * phi' with the continuum eta of the layer.
    """
    x, h = layer.x, layer.phi.h
    phi = layer.phi.values
    dphi = layer.derivative
    n = x.size
    op = LevyOperator(n, h)
    d2 = pot.d2W(phi)
    A = op.linear_operator(shift=d2)

    e = dphi / np.linalg.norm(dphi)
    for _ in range(2):
        y, info = minres(A, e, rtol=tol, maxiter=20 * n)
        if info < 0:
            raise SolverError(f"inverse iteration failed (minres info={info})")
        e = y / np.linalg.norm(y)
    e *= np.sign(np.dot(e, dphi))

    eta_d = -float(np.dot(e, dphi) / np.dot(e, d2 - pot.alpha))
    rhs = dphi + eta_d * (d2 - pot.alpha)

    def project(v):
        return v - np.dot(v, e) * e

    def mv(v):
        return project(A.matvec(project(np.ravel(v))))

    Ap = LinearOperator((n, n), matvec=mv, rmatvec=mv, dtype=float)
    psi, info = minres(Ap, project(rhs), rtol=tol, maxiter=20 * n)
    if info < 0:
        raise SolverError(f"corrector solve failed (minres info={info})")
    psi = project(psi)
    r = A.matvec(psi) - rhs
    defect = float(np.trapezoid((dphi + layer.eta * (d2 - pot.alpha)) * dphi, dx=h))
    return CorrectorSolution(
        LineField(x, psi, far_field=(0.0, 0.0)),
        layer.eta,
        eta_d,
        float(np.max(np.abs(r))),
        defect,
        e,
    )


@dataclass
class PNState:
    v: LineField
    t: float = 0.0
    eps: float = 1.0
    n_dislocations: int = 0

    @property
    def x(self) -> np.ndarray:
        return self.v.x


def pn_stability_bound(op: LevyOperator, pot: PeriodicPotential, eps: float) -> float:
    """Largest dt keeping the explicit update monotone (non-negative diagonal)."""
    return 1.0 / (2.0 * op.total / eps + pot.d2W_max / eps**2)


def pn_evolve(
    state: PNState,
    pot: PeriodicPotential,
    sigma: StressField | None,
    dt: float | None,
    t_end: float,
    *,
    sample_times: Sequence[float] = (),
    on_sample: Callable[[PNState], None] | None = None,
    op: LevyOperator | None = None,
) -> PNState:
    """Explicit Euler for v_t = (1/eps)[L v - W'(v)/eps + 2 sigma(x)] up to t_end.

    ``on_sample`` is called with the state at each of ``sample_times`` (the
    step is shortened to land on them exactly).
    """
    v = state.v
    if v.far_field is None:
        raise ArgumentError("PN fields need a far_field closure")
    eps = state.eps
    op = op or LevyOperator(v.x.size, v.h)
    bound = pn_stability_bound(op, pot, eps)
    if dt is None:
        dt = 0.5 * bound
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.3e} exceeds the stability bound {bound:.3e}")
    sigma = sigma or zero_stress()
    force = 2.0 * sigma(v.x)
    ff = v.far_field
    lo_bound = min(ff) - 1.0 - float(np.max(np.abs(force)))
    hi_bound = max(ff) + 1.0 + float(np.max(np.abs(force)))
    values = v.values.copy()
    t = state.t
    stops = sorted({float(s) for s in sample_times if state.t <= s <= t_end} | {float(t_end)})
    for stop in stops:
        nsteps = int(math.ceil((stop - t) / dt - 1e-12))
        if nsteps > 0:
            tau = (stop - t) / nsteps
            for _ in range(nsteps):
                rate = (op.apply(values, ff) - pot.dW(values) / eps + force) / eps
                values += tau * rate
            if not (np.all(np.isfinite(values)) and values.min() >= lo_bound and values.max() <= hi_bound):
                raise DivergenceError(f"PN field left the sanity band before t={stop:g}")
        t = stop
        if on_sample is not None and stop in sample_times:
            on_sample(PNState(v.with_values(values.copy()), t, eps, state.n_dislocations))
    return PNState(v.with_values(values), t, eps, state.n_dislocations)


def build_a3_initial(
    positions: Sequence[float],
    layer: LayerSolution,
    sigma: StressField | None,
    eps: float,
    x: np.ndarray,
) -> PNState:
    """v0(x) = (eps/alpha) 2 sigma(x) + sum_i phi((x - x_i)/eps) on the grid x."""
    pos = np.asarray(positions, dtype=float)
    if np.any(np.diff(pos) <= 0):
        raise ArgumentError("initial positions must be strictly increasing")
    x = np.asarray(x, dtype=float)
    sigma = sigma or zero_stress()
    shift = (eps / layer.alpha) * 2.0 * sigma(x)
    v = shift.copy()
    for p in pos:
        v += layer.profile((x - p) / eps)
    far = (float(shift[0]), float(shift[-1]) + pos.size)
    return PNState(LineField(x, v, far_field=far), 0.0, eps, int(pos.size))


def extract_fronts(state: PNState, n_expected: int) -> np.ndarray:
    """Abscissas where v crosses the half-integer levels k - 1/2, k = 1..n."""
    x, v = state.v.x, state.v.values
    out = np.empty(n_expected)
    for k in range(1, n_expected + 1):
        s = v - (k - 0.5)
        idx = np.nonzero(np.signbit(s[:-1]) != np.signbit(s[1:]))[0]
        if idx.size != 1:
            raise ExtractionError(f"level {k - 0.5} crossed {idx.size} times (expected once)")
        i = idx[0]
        out[k - 1] = x[i] - s[i] * (x[i + 1] - x[i]) / (s[i + 1] - s[i])
    return out
