"""Generalized Frenkel-Kontorova lattice on a truncated upper half-plane.

Sites X = eps (i, k), k = 0 the boundary (slip) row. The bulk is discrete
harmonic at every instant; the boundary row evolves by

    u_t = eps eps2 sigma(eps eps2 X1) - W'(u) + I[u],
    I[u](X) = (1/eps) sum_{|J|=1, J2>=0} (u(X + eps J) - u(X)).

The truncated box needs Dirichlet data on the top row and the lateral
columns ("truncation" values) plus a ghost value beside each end of the
boundary row. Three sources are available:

``far_field``  harmonic extension of the step located at the current fronts
``frozen``     the values present in the initial state
``poisson``    Poisson-kernel extension of the current trace, continued by
               its far-field constants outside the box
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .core import PeriodicPotential, StressField, zero_stress
from .errors import ArgumentError, DivergenceError, DomainError, SolverError, StabilityError
from .nonlocal_ops import LineField

TRUNCATIONS = ("far_field", "frozen", "poisson")
MIN_INTERIOR_ROWS = 8
BULK_TOLERANCE = 1e-8


@dataclass(frozen=True)
class AffineStrain:
    """Affine displacement with gradient (a1, a2) along e1."""

    a1: float
    a2: float

    @property
    def e11(self) -> float:
        return self.a1

    @property
    def e12(self) -> float:
        return 0.5 * self.a2

    e21 = e12

    def hooke_stress(self) -> np.ndarray:
        return np.array([[self.e11, 2 * self.e12], [2 * self.e21, 0.0]])


def affine_energy_density(s: AffineStrain) -> float:
    """Energy per unit cell 1/2 e11^2 + 2 e12^2 = (a1^2 + a2^2)/2."""
    return 0.5 * s.e11**2 + 2.0 * s.e12**2


def continuum_displacement_u0(X1, X2):
    """U0 = arctan(X1/X2)/(2 pi) + sgn(X2)/4, antisymmetric in X2.

    On X2 = 0 the trace limit from above is returned: 0 for X1 < 0, 1/2 for X1 > 0.
    """
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    if np.any((X1 == 0) & (X2 == 0)):
        raise DomainError("U0 is singular at the origin")
    with np.errstate(divide="ignore", invalid="ignore"):
        bulk = np.arctan(X1 / X2) / (2 * math.pi) + 0.25 * np.sign(X2)
    trace = np.where(X1 > 0, 0.5, 0.0)
    out = np.where(X2 == 0, trace, bulk)
    return out[()] if out.ndim == 0 else out


def single_dislocation_stress(X1):
    """sigma12 on the slip line: -1/(2 pi X1)."""
    X1 = np.asarray(X1, dtype=float)
    if np.any(X1 == 0):
        raise DomainError("stress is singular at the dislocation")
    out = -1.0 / (2 * math.pi * X1)
    return out[()] if out.ndim == 0 else out


def step_extension(X1, X2, fronts, base: float = 0.0):
    """base + sum_k (1/2 + arctan((X1 - x_k)/X2)/pi), i.e. 2 U0 shifted to each front."""
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    out = np.full(np.broadcast(X1, X2).shape, float(base))
    for xk in fronts:
        d = X1 - xk
        with np.errstate(divide="ignore", invalid="ignore"):
            val = 0.5 + np.arctan(d / X2) / math.pi
        out += np.where(X2 > 0, val, np.heaviside(d, 0.5))
    return out


@dataclass
class LatticeDomain:
    eps1: float
    A: float
    B: float
    truncation: str = "far_field"
    _lu: object = field(default=None, init=False, repr=False)
    _poisson: tuple | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not self.eps1 > 0:
            raise ArgumentError("eps1 must be positive")
        if self.truncation not in TRUNCATIONS:
            raise ArgumentError(f"truncation must be one of {TRUNCATIONS}")
        for name in ("A", "B"):
            q = getattr(self, name) / self.eps1
            if abs(q - round(q)) > 1e-9:
                raise ArgumentError(f"{name} must be a multiple of eps1")
        if self.A <= 0 or self.B < 0:
            raise ArgumentError("A must be positive and B nonnegative")
        if self.B > 0 and self.ny - 1 < MIN_INTERIOR_ROWS:
            raise ArgumentError(f"need at least {MIN_INTERIOR_ROWS} rows above the slip line (B/eps1 >= {MIN_INTERIOR_ROWS})")

    @property
    def nx(self) -> int:
        return int(round(2 * self.A / self.eps1)) + 1

    @property
    def ny(self) -> int:
        return int(round(self.B / self.eps1)) + 1

    @property
    def chain(self) -> bool:
        """B = 0: the classical one-dimensional chain (no bulk)."""
        return self.ny == 1

    @property
    def X1(self) -> np.ndarray:
        return -self.A + self.eps1 * np.arange(self.nx)

    @property
    def X2(self) -> np.ndarray:
        return self.eps1 * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.X1, self.X2)

    def bulk_lu(self):
        """Sparse LU of the 5-point Laplacian on the interior nodes (cached)."""
        if self._lu is None:
            mx, my = self.nx - 2, self.ny - 2
            if mx < 1 or my < 1:
                raise ArgumentError("domain has no interior nodes")
            tx = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(mx, mx))
            ty = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(my, my))
            lap = sparse.kron(sparse.identity(my), tx) + sparse.kron(ty, sparse.identity(mx))
            self._lu = splu((-lap).tocsc(), permc_spec="COLAMD")
        return self._lu

    def dirichlet_mask(self) -> np.ndarray:
        """Top row and lateral columns above the boundary row."""
        m = np.zeros((self.ny, self.nx), dtype=bool)
        if self.chain:
            return m
        m[-1, :] = True
        m[1:, 0] = True
        m[1:, -1] = True
        return m

    def poisson_weights(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Exact Poisson-kernel weights of the piecewise-linear trace at each Dirichlet node.

        Returns (W, t_left, t_right) so that the extension is
        W @ trace + t_left * ff_left + t_right * ff_right.
        """
        if self._poisson is None:
            Xg, Yg = self.mesh()
            mask = self.dirichlet_mask()
            xs, ys = Xg[mask], Yg[mask]
            y = self.X1
            h = self.eps1
            s = y[None, :] - xs[:, None]
            Y = ys[:, None]
            G0 = np.arctan(s / Y) / math.pi
            G1 = Y / (2 * math.pi) * np.log(s**2 + Y**2)
            W = np.zeros_like(s)
            # rising half of hat j on [y_{j-1}, y_j]
            W[:, 1:] += ((G1[:, 1:] - G1[:, :-1]) - s[:, :-1] * (G0[:, 1:] - G0[:, :-1])) / h
            # falling half on [y_j, y_{j+1}]
            W[:, :-1] += (s[:, 1:] * (G0[:, 1:] - G0[:, :-1]) - (G1[:, 1:] - G1[:, :-1])) / h
            t_left = G0[:, 0] + 0.5
            t_right = 0.5 - G0[:, -1]
            self._poisson = (W, t_left, t_right)
        return self._poisson


@dataclass
class LatticeState:
    u: np.ndarray
    t: float = 0.0
    n_dislocations: int = 0
    base: float = 0.0
    ghost: tuple[float, float] = (0.0, 0.0)
    x1: np.ndarray | None = field(default=None, repr=False)

    @property
    def trace(self) -> np.ndarray:
        return self.u[0]

    def copy(self) -> "LatticeState":
        return LatticeState(self.u.copy(), self.t, self.n_dislocations, self.base, self.ghost, self.x1)


def _front_positions(x: np.ndarray, v: np.ndarray, n: int, base: float) -> np.ndarray | None:
    out = np.empty(n)
    for k in range(1, n + 1):
        s = v - (base + k - 0.5)
        idx = np.nonzero(np.signbit(s[:-1]) != np.signbit(s[1:]))[0]
        if idx.size == 0:
            return None
        i = idx[len(idx) // 2]
        out[k - 1] = x[i] - s[i] * (x[i + 1] - x[i]) / (s[i + 1] - s[i])
    return out


def _apply_truncation(state: LatticeState, dom: LatticeDomain, fronts: np.ndarray | None = None) -> None:
    """Refresh the Dirichlet data and the boundary ghosts in place."""
    if dom.truncation == "frozen":
        return
    lo, hi = state.base, state.base + state.n_dislocations
    state.ghost = (lo, hi)
    if dom.chain:
        return
    mask = dom.dirichlet_mask()
    if dom.truncation == "poisson":
        W, tl, tr = dom.poisson_weights()
        state.u[mask] = W @ state.u[0] + tl * lo + tr * hi
        return
    if fronts is None:
        fronts = _front_positions(dom.X1, state.u[0], state.n_dislocations, state.base)
    if fronts is None:
        return
    Xg, Yg = dom.mesh()
    state.u[mask] = step_extension(Xg[mask], Yg[mask], fronts, state.base)
    xg = np.array([dom.X1[0] - dom.eps1, dom.X1[-1] + dom.eps1])
    gl, gr = step_extension(xg, np.zeros(2), fronts, state.base)
    state.ghost = (float(gl), float(gr))


def solve_bulk(state: LatticeState, dom: LatticeDomain) -> float:
    """Make the interior discrete harmonic given the boundary row and Dirichlet data.

    Returns the max interior residual |sum_J (u(X+J) - u(X))|.
    """
    if dom.chain:
        return 0.0
    u = state.u
    rhs = np.zeros((dom.ny - 2, dom.nx - 2))
    rhs[0, :] += u[0, 1:-1]
    rhs[-1, :] += u[-1, 1:-1]
    rhs[:, 0] += u[1:-1, 0]
    rhs[:, -1] += u[1:-1, -1]
    sol = dom.bulk_lu().solve(rhs.ravel())
    u[1:-1, 1:-1] = sol.reshape(rhs.shape)
    res = bulk_residual(state)
    if not np.isfinite(res) or res > BULK_TOLERANCE:
        raise SolverError(f"bulk solve residual {res:.3e} exceeds {BULK_TOLERANCE:g}")
    return res


def bulk_residual(state: LatticeState) -> float:
    u = state.u
    if u.shape[0] < 3:
        return 0.0
    r = u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4 * u[1:-1, 1:-1]
    return float(np.max(np.abs(r)))


def make_lattice_state(
    dom: LatticeDomain,
    u0: Callable[[np.ndarray, np.ndarray], np.ndarray],
    n_dislocations: int = 1,
    base: float = 0.0,
) -> LatticeState:
    """Sample u0(X1, X2) on every site (and the ghosts), then equilibrate the bulk."""
    Xg, Yg = dom.mesh()
    u = np.asarray(u0(Xg, Yg), dtype=float).reshape(Xg.shape).copy()
    xg = np.array([dom.X1[0] - dom.eps1, dom.X1[-1] + dom.eps1])
    ghost = tuple(float(g) for g in np.asarray(u0(xg, np.zeros(2)), dtype=float))
    state = LatticeState(u, 0.0, n_dislocations, base, ghost, dom.X1)
    _apply_truncation(state, dom)
    solve_bulk(state, dom)
    return state


def fk_stability_bound(dom: LatticeDomain, pot: PeriodicPotential) -> float:
    """Gershgorin bound keeping the boundary update monotone."""
    neighbours = 2.0 if dom.chain else 3.0
    return 1.0 / (neighbours / dom.eps1 + pot.d2W_max)


def interaction_term(state: LatticeState, dom: LatticeDomain) -> np.ndarray:
    """I[u] on the boundary row (ghosts close the two ends)."""
    b = state.u[0]
    left = np.concatenate([[state.ghost[0]], b[:-1]])
    right = np.concatenate([b[1:], [state.ghost[1]]])
    out = left + right - 2 * b
    if not dom.chain:
        out += state.u[1] - b
    return out / dom.eps1


def fk_step(
    state: LatticeState,
    dom: LatticeDomain,
    pot: PeriodicPotential,
    sigma: StressField | None,
    eps2: float,
    dt: float,
) -> LatticeState:
    """One explicit Euler step of the boundary row followed by the bulk solve."""
    bound = fk_stability_bound(dom, pot)
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.3e} exceeds the stability bound {bound:.3e}")
    sigma = sigma or zero_stress()
    eps = dom.eps1
    new = state.copy()
    b = state.u[0]
    drive = 0.0 if sigma.is_zero else eps * eps2 * sigma(eps * eps2 * dom.X1)
    new.u[0] = b + dt * (drive - pot.dW(b) + interaction_term(state, dom))
    new.t = state.t + dt
    lo = state.base - 0.5
    hi = state.base + state.n_dislocations + 0.5
    if not np.all(np.isfinite(new.u[0])) or new.u[0].min() < lo or new.u[0].max() > hi:
        raise DivergenceError(f"boundary row left [{lo:g}, {hi:g}] at t={new.t:.4g}")
    _apply_truncation(new, dom)
    solve_bulk(new, dom)
    return new


def fk_evolve(
    state: LatticeState,
    dom: LatticeDomain,
    pot: PeriodicPotential,
    sigma: StressField | None,
    eps2: float,
    t_end: float,
    *,
    dt: float | None = None,
    sample_times: Sequence[float] = (),
    on_sample: Callable[[LatticeState], None] | None = None,
) -> LatticeState:
    """Repeated fk_step up to t_end, landing exactly on each sample time."""
    bound = fk_stability_bound(dom, pot)
    dt = 0.5 * bound if dt is None else dt
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.3e} exceeds the stability bound {bound:.3e}")
    stops = sorted({float(s) for s in sample_times if state.t <= s <= t_end} | {float(t_end)})
    for stop in stops:
        n = int(math.ceil((stop - state.t) / dt - 1e-12))
        if n > 0:
            tau = (stop - state.t) / n
            for _ in range(n):
                state = fk_step(state, dom, pot, sigma, eps2, tau)
        state.t = stop
        if on_sample is not None and stop in sample_times:
            on_sample(state.copy())
    return state


def fk_energy(state: LatticeState, dom: LatticeDomain, pot: PeriodicPotential) -> float:
    """sum_boundary W(u) + (1/(2 eps)) sum_bonds (du)^2, ghost bonds included."""
    u = state.u
    bonds = float(np.sum(np.diff(u, axis=1) ** 2) + np.sum(np.diff(u, axis=0) ** 2))
    bonds += (u[0, 0] - state.ghost[0]) ** 2 + (u[0, -1] - state.ghost[1]) ** 2
    return float(np.sum(pot.W(u[0]))) + bonds / (2 * dom.eps1)


def fk_boundary_trace(state: LatticeState) -> LineField:
    """Boundary row as a LineField with far field (base, base + N)."""
    if state.x1 is None:
        raise ArgumentError("state carries no abscissas; build it with make_lattice_state")
    return LineField(
        state.x1.copy(),
        state.u[0].copy(),
        far_field=(state.base, state.base + state.n_dislocations),
    )
