"""Potentials, applied stresses, the regularized log interaction and scale data.

Every object here is immutable; the solver modules only read them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ArgumentError, DomainError

TWO_PI = 2.0 * math.pi
SAMPLES_PER_PERIOD = 10_000

ArrayFunc = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PeriodicPotential:
    """1-periodic on-site potential with its first two derivatives.

    The evaluators must accept numpy arrays. ``alpha`` is W''(0).
    """

    W: ArrayFunc
    dW: ArrayFunc
    d2W: ArrayFunc
    alpha: float
    tag: str = "custom"
    d2W_max: float = 1.0

    def scaled(self, factor: float) -> "PeriodicPotential":
        """Return ``factor * W`` (e.g. the microscopic potential eps1/2 * W)."""
        W, dW, d2W = self.W, self.dW, self.d2W
        return PeriodicPotential(
            W=lambda a: factor * W(a),
            dW=lambda a: factor * dW(a),
            d2W=lambda a: factor * d2W(a),
            alpha=factor * self.alpha,
            tag=f"{factor:g}*{self.tag}",
            d2W_max=abs(factor) * self.d2W_max,
        )


def make_sinusoidal_potential() -> PeriodicPotential:
    """W(v) = (1 - cos 2 pi v) / (4 pi^2), the case with an explicit layer."""
    return PeriodicPotential(
        W=lambda a: (1.0 - np.cos(TWO_PI * np.asarray(a, dtype=float))) / TWO_PI**2,
        dW=lambda a: np.sin(TWO_PI * np.asarray(a, dtype=float)) / TWO_PI,
        d2W=lambda a: np.cos(TWO_PI * np.asarray(a, dtype=float)),
        alpha=1.0,
        tag="sinusoidal",
        d2W_max=1.0,
    )


POTENTIALS = {"sinusoidal": make_sinusoidal_potential}


def potential_from_tag(tag: str) -> PeriodicPotential:
    try:
        return POTENTIALS[tag]()
    except KeyError:
        raise ArgumentError(f"unknown potential {tag!r}; known: {sorted(POTENTIALS)}") from None


@dataclass(frozen=True)
class StressField:
    """Resolved shear stress sigma(x).

    mode is ``"bounded"`` (C^2 with |sigma|, |sigma'|, |sigma''| <= bound) or
    ``"periodic"`` (additionally 1-periodic).
    """

    func: ArrayFunc
    mode: str = "bounded"
    bound: float = 1.0
    tag: str = "custom"
    mean: float | None = None

    def __post_init__(self):
        if self.mode not in ("bounded", "periodic"):
            raise ArgumentError(f"unknown stress mode {self.mode!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.func(x), x.shape).astype(float)

    @property
    def is_zero(self) -> bool:
        return self.tag == "zero"

    def period_mean(self) -> float:
        """Mean over one period (periodic mode) via the sampling resolution."""
        if self.mean is not None:
            return self.mean
        if self.mode != "periodic":
            raise ArgumentError("period mean is only defined for periodic stress")
        x = np.arange(SAMPLES_PER_PERIOD) / SAMPLES_PER_PERIOD
        return float(np.mean(self(x)))


def zero_stress() -> StressField:
    return StressField(lambda x: np.zeros_like(x), "periodic", 0.0, "zero", 0.0)


def constant_stress(c: float) -> StressField:
    return StressField(lambda x: np.full_like(x, c), "periodic", abs(c), f"constant:{c:g}", c)


def sine_stress(amplitude: float, shift: float = 0.0) -> StressField:
    """amplitude * sin(2 pi (x - shift)), mean zero and 1-periodic."""
    bound = abs(amplitude) * max(1.0, TWO_PI**2)
    return StressField(
        lambda x: amplitude * np.sin(TWO_PI * (x - shift)),
        "periodic",
        bound,
        f"sine:{amplitude:g}:{shift:g}",
        0.0,
    )


_EXPR_NAMESPACE = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "tanh", "arctan", "abs", "pi")
}


def stress_from_spec(spec: str, bound: float | None = None) -> StressField:
    """Parse a stress description used in run configs.

    Accepted forms: ``zero``, ``constant:C``, ``sine:A`` or ``sine:A:SHIFT``,
    ``expr:<numpy expression in x>`` (optionally ``periodic-expr:`` for a
    1-periodic expression).
    """
    spec = spec.strip()
    kind, _, rest = spec.partition(":")
    try:
        if kind == "zero":
            return zero_stress()
        if kind == "constant":
            return constant_stress(float(rest))
        if kind == "sine":
            parts = rest.split(":")
            return sine_stress(float(parts[0]), float(parts[1]) if len(parts) > 1 else 0.0)
    except ValueError as exc:
        raise ArgumentError(f"bad stress spec {spec!r}: {exc}") from None
    if kind in ("expr", "periodic-expr"):
        code = compile(rest, "<stress>", "eval")
        for name in code.co_names:
            if name != "x" and name not in _EXPR_NAMESPACE:
                raise ArgumentError(f"name {name!r} not allowed in stress expression")

        def func(x, _code=code):
            return np.asarray(eval(_code, {"__builtins__": {}}, {**_EXPR_NAMESPACE, "x": x}), dtype=float)

        mode = "periodic" if kind == "periodic-expr" else "bounded"
        return StressField(func, mode, 1.0 if bound is None else bound, spec)
    raise ArgumentError(f"unknown stress spec {spec!r}")


LOG_KERNEL_PREFACTOR = 1.0 / TWO_PI


def log_potential(x):
    """V(x) = -ln|x| / (2 pi)."""
    return -LOG_KERNEL_PREFACTOR * np.log(np.abs(x))


def log_force(x):
    """V'(x) = -1 / (2 pi x)."""
    return -LOG_KERNEL_PREFACTOR / np.asarray(x, dtype=float)


@dataclass(frozen=True)
class RegularizedLogPotential:
    """V_delta: equal to V for |x| >= delta, even and linear on (-delta, delta)\\{0}.

    The linear pieces have slope +-V'(delta) so the force is continuous at
    +-delta and bounded by 1/(2 pi delta).
    """

    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ArgumentError("delta must be positive")

    def value(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        d = self.delta
        inner = log_potential(d) + log_force(d) * (x - d)
        with np.errstate(divide="ignore"):
            return np.where(x >= d, log_potential(np.maximum(x, d)), inner)

    def force(self, x):
        """V_delta'(x); undefined at 0."""
        x = np.asarray(x, dtype=float)
        if np.any(x == 0):
            raise DomainError("V_delta' is not defined at 0")
        capped = np.where(np.abs(x) >= self.delta, x, np.sign(x) * self.delta)
        return log_force(capped)

    @staticmethod
    def kernel(z):
        """V''(z) = 1/(2 pi z^2), the weight of M_delta outside the cutoff."""
        z = np.asarray(z, dtype=float)
        return LOG_KERNEL_PREFACTOR / z**2


def eval_vdelta_force(pot: RegularizedLogPotential, x: float) -> float:
    return float(pot.force(x))


@dataclass(frozen=True)
class ScaleParams:
    eps1: float = 0.1
    eps2: float = 0.1
    eps3: float = 0.1
    delta: float = 0.05

    def __post_init__(self):
        for name in ("eps1", "eps2", "eps3", "delta"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"{name} must be strictly positive")
        for name in ("eps1", "eps2", "eps3"):
            if getattr(self, name) > 1:
                raise ArgumentError(f"{name} must not exceed 1")


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    worst: float
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: list[AssumptionCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self) -> list[str]:
        return [
            f"{c.name:<28} {'pass' if c.passed else 'FAIL'}  worst={c.worst:.3e}  {c.detail}".rstrip()
            for c in self.checks
        ]


def validate_assumptions(
    pot: PeriodicPotential,
    sigma: StressField,
    *,
    periods: int = 4,
    window: float = 50.0,
    seed: int = 0,
) -> AssumptionReport:
    """Sample the potential and stress assumptions and report violations.

    Never raises; a check that cannot be evaluated (NaN) is reported failed.
    """
    report = AssumptionReport()
    a = np.linspace(-periods / 2, periods / 2, periods * SAMPLES_PER_PERIOD + 1)
    Wa = pot.W(a)

    per = float(np.max(np.abs(pot.W(a + 1.0) - Wa)))
    report.checks.append(AssumptionCheck("A1 periodicity", per <= 1e-12, per))

    ks = np.arange(-periods // 2, periods // 2 + 1, dtype=float)
    at_int = float(np.max(np.abs(pot.W(ks))))
    frac = np.abs(a - np.round(a))
    off = a[frac > 1e-3]
    min_off = float(np.min(pot.W(off)))
    report.checks.append(AssumptionCheck("A1 minimum on Z", at_int <= 1e-12 and min_off > 0, max(at_int, -min_off)))

    alpha_fd = float(pot.d2W(np.array(0.0)))
    nondeg = pot.alpha > 0 and abs(alpha_fd - pot.alpha) <= 1e-10 * max(1.0, abs(pot.alpha))
    report.checks.append(AssumptionCheck("A1 nondegenerate minima", nondeg, abs(alpha_fd - pot.alpha), f"alpha={pot.alpha:g}"))

    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1.0, 1.0, 100)
    h = 1e-5
    fd1 = (pot.W(pts + h) - pot.W(pts - h)) / (2 * h)
    fd2 = (pot.dW(pts + h) - pot.dW(pts - h)) / (2 * h)
    scale = max(1.0, float(np.max(np.abs(pot.dW(pts)))), float(np.max(np.abs(pot.d2W(pts)))))
    d_err = float(max(np.max(np.abs(fd1 - pot.dW(pts))), np.max(np.abs(fd2 - pot.d2W(pts)))))
    report.checks.append(AssumptionCheck("A1 derivative consistency", d_err <= 1e-6 * scale, d_err))

    x = np.linspace(-window, window, int(2 * window * 1000) + 1)
    hx = 1e-3
    s0 = sigma(x)
    s1 = (sigma(x + hx) - sigma(x - hx)) / (2 * hx)
    s2 = (sigma(x + hx) - 2 * s0 + sigma(x - hx)) / hx**2
    worst = float(max(np.max(np.abs(s0)), np.max(np.abs(s1)), np.max(np.abs(s2))))
    # second difference carries O(hx^2) truncation; allow a relative slack
    ok = np.isfinite(worst) and worst <= sigma.bound * (1 + 1e-4) + 1e-9
    report.checks.append(AssumptionCheck("A2 bounded stress", bool(ok), worst, f"C={sigma.bound:g}"))

    if sigma.mode == "periodic":
        xp = np.linspace(-periods / 2, periods / 2, periods * SAMPLES_PER_PERIOD + 1)
        per_s = float(np.max(np.abs(sigma(xp + 1.0) - sigma(xp))))
        report.checks.append(AssumptionCheck("A2' periodic stress", per_s <= 1e-12, per_s))

    for c in report.checks:
        if not np.isfinite(c.worst):
            c.passed = False
    return report
