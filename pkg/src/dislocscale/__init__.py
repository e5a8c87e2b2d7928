"""Multiscale dislocation dynamics on a slip line.

Frenkel-Kontorova lattice -> Peierls-Nabarro phase field -> discrete
dislocation particles -> homogenized dislocation density.
"""
from .core import (
    PeriodicPotential,
    RegularizedLogPotential,
    ScaleParams,
    StressField,
    constant_stress,
    eval_vdelta_force,
    make_sinusoidal_potential,
    sine_stress,
    stress_from_spec,
    validate_assumptions,
    zero_stress,
)
from .errors import DislocScaleError
from .nonlocal_ops import (
    LevyOperator,
    LineField,
    PeriodicLevyOperator,
    QuadratureSpec,
    levy_khintchine_apply,
    mdelta_apply,
    periodic_interaction_force,
    periodized_L,
)

__version__ = "0.1.0"

__all__ = [
    "DislocScaleError",
    "LevyOperator",
    "LineField",
    "PeriodicLevyOperator",
    "PeriodicPotential",
    "QuadratureSpec",
    "RegularizedLogPotential",
    "ScaleParams",
    "StressField",
    "constant_stress",
    "eval_vdelta_force",
    "levy_khintchine_apply",
    "make_sinusoidal_potential",
    "mdelta_apply",
    "periodic_interaction_force",
    "periodized_L",
    "sine_stress",
    "stress_from_spec",
    "validate_assumptions",
    "zero_stress",
]
