"""Levy-Khintchine operator L (the half-Laplacian -(-Delta)^{1/2}), its
periodized form, the regularized front operator M_delta and the periodized
log-interaction force.

Two evaluation paths are provided for L: a pointwise quadrature driven by a
QuadratureSpec (interpolating the field between grid nodes), and grid
operators (``LevyOperator``, ``PeriodicLevyOperator``) that apply the same
quadrature at every node at once. The solvers use the grid operators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import interpolate, signal, special
from scipy.sparse.linalg import LinearOperator

from .core import LOG_KERNEL_PREFACTOR, RegularizedLogPotential, log_force
from .errors import ArgumentError, ClosureError, ConventionError, DomainError, ExtrapolationError

INV_PI = 1.0 / math.pi


@dataclass
class LineField:
    """Samples of a real function on a uniform grid plus far-field closure.

    Exactly one of ``far_field`` (limits at -inf, +inf) and
    ``gradient_period`` ((X, jump) meaning w(x + X) = w(x) + jump) is set.
    With a gradient period the grid spans exactly one period, endpoints
    included.
    """

    x: np.ndarray
    values: np.ndarray
    far_field: tuple[float, float] | None = None
    gradient_period: tuple[float, float] | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.values.shape or self.x.size < 3:
            raise ArgumentError("grid and values must be 1D arrays of equal length >= 3")
        dx = np.diff(self.x)
        h = (self.x[-1] - self.x[0]) / (self.x.size - 1)
        if np.any(dx <= 0) or np.max(np.abs(dx - h)) > 1e-12 * max(1.0, abs(h)) * self.x.size:
            raise ArgumentError("grid must be uniform and strictly increasing")
        if (self.far_field is None) == (self.gradient_period is None):
            raise ClosureError("exactly one of far_field and gradient_period must be given")
        if self.gradient_period is not None:
            X, jump = self.gradient_period
            if abs(self.x[-1] - self.x[0] - X) > 1e-9 * max(1.0, X):
                raise ArgumentError("gradient-periodic grid must span exactly one period")
            if abs(self.values[-1] - self.values[0] - jump) > 1e-10 * max(1.0, abs(jump)):
                raise ArgumentError("values at x0 and x0+X must differ by the declared jump")

    @property
    def h(self) -> float:
        return float((self.x[-1] - self.x[0]) / (self.x.size - 1))

    @property
    def slope(self) -> float:
        """Mean gradient rho_bar for gradient-periodic fields."""
        if self.gradient_period is None:
            raise ClosureError("field has no gradient period")
        X, jump = self.gradient_period
        return jump / X

    def periodic_part(self) -> np.ndarray:
        """p = w - rho_bar * x on the grid (gradient-periodic fields)."""
        return self.values - self.slope * self.x

    def with_values(self, values) -> "LineField":
        return LineField(self.x, values, self.far_field, self.gradient_period)

    @cached_property
    def _spline(self):
        if self.gradient_period is not None:
            return interpolate.CubicSpline(self.x, self.periodic_part(), bc_type="periodic")
        return interpolate.CubicSpline(self.x, self.values)

    def __call__(self, y) -> np.ndarray:
        """Evaluate with cubic interpolation and the field's closure outside the grid."""
        y = np.asarray(y, dtype=float)
        if self.gradient_period is not None:
            X, _ = self.gradient_period
            yy = self.x[0] + np.mod(y - self.x[0], X)
            return self._spline(yy) + self.slope * y
        lo, hi = self.far_field
        out = self._spline(np.clip(y, self.x[0], self.x[-1]))
        out = np.where(y < self.x[0], lo, out)
        return np.where(y > self.x[-1], hi, out)


@dataclass(frozen=True)
class QuadratureSpec:
    inner_cutoff: float
    tail_radius: float
    tolerance: float = 1e-6

    def __post_init__(self):
        if not (0 < self.inner_cutoff < self.tail_radius):
            raise ArgumentError("need 0 < inner_cutoff < tail_radius")
        if not self.tolerance > 0:
            raise ArgumentError("tolerance must be positive")


def default_quadrature(w: LineField, x: float) -> QuadratureSpec:
    """Inner cutoff one grid step, tail radius at the farther grid edge."""
    return QuadratureSpec(w.h, max(x - w.x[0], w.x[-1] - x, 2 * w.h))


def _second_difference(w: LineField, x: float) -> float:
    h = w.h
    return float((w(x + h) - 2 * w(x) + w(x - h)) / h**2)


def _trapezoid_nodes(a: float, b: float, step: float) -> tuple[np.ndarray, np.ndarray]:
    n = max(1, int(math.ceil((b - a) / step - 1e-9)))
    z = np.linspace(a, b, n + 1)
    wts = np.full(n + 1, (b - a) / n)
    wts[0] *= 0.5
    wts[-1] *= 0.5
    return z, wts


def levy_khintchine_apply(w: LineField, x: float, q: QuadratureSpec | None = None) -> float:
    """(Lw)(x) = (1/pi) int dz/z^2 [w(x+z) - w(x) - z w'(x) 1_{|z|<=1}].

    The compensator cancels under the symmetric pairing z <-> -z, so the
    integrand is [w(x+z) + w(x-z) - 2w(x)] / z^2 on z > 0: Taylor closure
    w''(x) below the inner cutoff, trapezoid rule up to the tail radius,
    far-field constants beyond it.
    """
    if w.far_field is None:
        raise ClosureError("levy_khintchine_apply needs a far_field closure")
    h = w.h
    if not (w.x[0] + 2 * h <= x <= w.x[-1] - 2 * h):
        raise ExtrapolationError(f"x={x} is not in the grid interior")
    q = q or default_quadrature(w, x)
    r0, R = q.inner_cutoff, q.tail_radius
    wx = float(w(x))
    closure = r0 * _second_difference(w, x)

    z, wts = _trapezoid_nodes(r0, R, min(h, r0))
    f = (w(x + z) + w(x - z) - 2 * wx) / z**2
    body = float(np.dot(wts, f))

    lo, hi = w.far_field
    tail = (lo + hi - 2 * wx) / R
    return INV_PI * (closure + body + tail)


class LevyOperator:
    """L on all nodes of a uniform grid with far-field closure.

    Node values outside the grid are the far-field constants. With inner
    cutoff h and node-aligned trapezoid weights the operator is a symmetric
    Toeplitz convolution plus exterior terms:

        (Lw)_i = sum_{k>=1} c_k (w_{i+k} + w_{i-k} - 2 w_i),
        c_1 = 3/(2 pi h),  c_k = 1/(pi h k^2)  (k >= 2).
    """

    def __init__(self, n: int, h: float):
        if n < 3:
            raise ArgumentError("grid needs at least 3 nodes")
        self.n = n
        self.h = float(h)
        k = np.arange(1, n, dtype=float)
        c = INV_PI / (self.h * k**2)
        c[0] *= 1.5
        self.coeffs = c
        # kernel for np.convolve, index n-1 is the centre
        self._kernel = np.concatenate([c[::-1], [0.0], c])
        self.total = INV_PI / self.h * (math.pi**2 / 6 + 0.5)
        i = np.arange(n)
        # sum_{k>m} c_k for m = distance to the last grid node on each side
        self.left_weight = self._tail_sum(i)
        self.right_weight = self._tail_sum(n - 1 - i)

    def _tail_sum(self, m: np.ndarray) -> np.ndarray:
        s = special.polygamma(1, m + 1.0)
        s = s + np.where(m == 0, 0.5, 0.0)
        return INV_PI / self.h * s

    @property
    def diagonal(self) -> float:
        return -2.0 * self.total

    @property
    def spectral_radius_bound(self) -> float:
        """Gershgorin bound on |eigenvalues| of the linear part."""
        return 4.0 * self.total

    def interior(self, v: np.ndarray) -> np.ndarray:
        """Linear part acting on node values (exterior taken as zero)."""
        v = np.asarray(v, dtype=float)
        n = self.n
        if n > 256:
            full = signal.fftconvolve(v, self._kernel, mode="full")
        else:
            full = np.convolve(v, self._kernel, mode="full")
        return full[n - 1 : 2 * n - 1] + self.diagonal * v

    def apply(self, v: np.ndarray, far_field: tuple[float, float]) -> np.ndarray:
        lo, hi = far_field
        return self.interior(v) + lo * self.left_weight + hi * self.right_weight

    def __call__(self, w: LineField) -> np.ndarray:
        if w.far_field is None:
            raise ClosureError("LevyOperator needs a far_field closure")
        return self.apply(w.values, w.far_field)

    def linear_operator(self, shift: np.ndarray | float = 0.0) -> LinearOperator:
        """L_interior - diag(shift) as a scipy LinearOperator."""
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (self.n,))

        def mv(v):
            v = np.ravel(v)
            return self.interior(v) - shift * v

        return LinearOperator((self.n, self.n), matvec=mv, rmatvec=mv, dtype=float)

    def dense(self) -> np.ndarray:
        from scipy.linalg import toeplitz

        col = np.concatenate([[self.diagonal], self.coeffs])
        return toeplitz(col)


def _periodic_kernel(z, X):
    """sum_k 1/(z + kX)^2 = (pi/X)^2 / sin^2(pi z / X)."""
    return (math.pi / X) ** 2 / np.sin(math.pi * z / X) ** 2


def _periodic_closure(r0: float, X: float) -> float:
    """int_0^r0 z^2 K(z) dz to fourth order (z^2 K = 1 + (pi z/X)^2/3 + ...)."""
    return r0 + math.pi**2 * r0**3 / (9 * X**2)


def periodized_L(w: LineField, x: float) -> float:
    """L for a gradient-periodic field, via the periodized kernel on p = w - rho x.

    (Lw)(x) = (1/pi) PV int_0^X [p(x+z) - p(x)] (pi/X)^2 / sin^2(pi z/X) dz,
    with the singular cell |z| < h handled by a Taylor closure.
    """
    if w.gradient_period is None:
        raise ClosureError("periodized_L needs a gradient_period closure")
    X, _ = w.gradient_period
    h = w.h
    rho = w.slope
    p = lambda y: w(y) - rho * np.asarray(y)
    px = float(p(x))
    d2 = float((p(x + h) - 2 * px + p(x - h)) / h**2)
    closure = _periodic_closure(h, X) * d2
    z, wts = _trapezoid_nodes(h, X - h, h)
    body = float(np.dot(wts, (p(x + z) - px) * _periodic_kernel(z, X)))
    return INV_PI * (closure + body)


class PeriodicLevyOperator:
    """Circulant form of periodized_L on the M nodes of one period."""

    def __init__(self, m: int, X: float):
        if m < 4:
            raise ArgumentError("need at least 4 nodes per period")
        self.m = m
        self.X = float(X)
        h = self.X / m
        self.h = h
        k = np.arange(1, m)
        c = INV_PI * h * _periodic_kernel(k * h, self.X)
        c[0] *= 0.5
        c[-1] *= 0.5
        clos = INV_PI * _periodic_closure(h, self.X) / h**2
        c[0] += clos
        c[-1] += clos
        row = np.concatenate([[-c.sum()], c])
        from scipy.linalg import circulant

        self.matrix = circulant(row).T
        self.diagonal = row[0]

    @property
    def norm(self) -> float:
        """Spectral radius of the circulant (its symbol is real and <= 0)."""
        return float(np.max(np.abs(np.fft.rfft(self.matrix[0]).real)))

    def apply_periodic(self, p: np.ndarray) -> np.ndarray:
        return self.matrix @ p

    def __call__(self, w: LineField) -> np.ndarray:
        """L at the nodes x_0..x_M of a gradient-periodic LineField."""
        if w.gradient_period is None:
            raise ClosureError("needs a gradient_period closure")
        p = w.periodic_part()[:-1]
        out = self.apply_periodic(p)
        return np.append(out, out[0])


def odd_integer_part(a):
    """E(a) = 1/2 + k for k <= a < k+1."""
    return np.floor(a) + 0.5


def mdelta_apply(jumps, x_eval: float, pot: RegularizedLogPotential, atol: float = 1e-12) -> float:
    """M_delta[w](x_eval) for the step function w = sum_j H(x - x_j).

    x_eval must be one of the jumps; w takes its upper value there. The
    integrand V''(z) E(w(x+z) - w(x)) is piecewise 1/(2 pi z^2) times a
    constant between consecutive jump offsets, so each jump at offset d
    contributes +-1/(2 pi max(|d|, delta)) exactly.
    """
    jumps = np.sort(np.asarray(jumps, dtype=float))
    d = jumps - x_eval
    scale = max(1.0, float(np.max(np.abs(jumps))) if jumps.size else 1.0)
    at = np.abs(d) <= atol * scale
    if not np.any(at):
        raise ConventionError("M_delta is evaluated only at jump points of the step function")
    d = np.where(at, 0.0, d)
    delta = pot.delta
    pos = d[d > 0]
    nonpos = d[d <= 0]
    # z > delta: E = n(z) + 1/2 ; z < -delta: E = 1/2 - m(z)
    total = 1.0 / delta + np.sum(1.0 / np.maximum(pos, delta)) - np.sum(1.0 / np.maximum(-nonpos, delta))
    return float(LOG_KERNEL_PREFACTOR * total)


def periodic_interaction_force(x, box: float, pot: RegularizedLogPotential | None = None):
    """sum_k V'(x + k L) = -cot(pi x / L) / (2L), k=0 term regularized inside delta."""
    x = np.asarray(x, dtype=float)
    red = x - box * np.round(x / box)
    if np.any(red == 0):
        raise DomainError("periodic interaction undefined at multiples of the box length")
    out = -0.5 / box / np.tan(math.pi * red / box)
    if pot is not None:
        inside = np.abs(red) < pot.delta
        if np.any(inside):
            out = np.where(inside, out - log_force(red) + pot.force(np.where(inside, red, pot.delta)), out)
    return out if out.ndim else float(out)
