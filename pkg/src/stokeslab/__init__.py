"""stokeslab: singularity analysis of parameterized linear ODE systems.

Computes truncated formal fundamental solutions, levels and singular
directions, Borel-Laplace lateral sums, Stokes matrices, monodromy and
exponential-torus generators, and runs integrability / isomonodromy checks
over a finite grid of parameter samples.
"""

from .expr import (
    ParamRational,
    ParameterGrid,
    eval_rational,
    laurent_expand,
    parse_rational_expr,
)
from .series import (
    PuiseuxSeries,
    borel_transform,
    gevrey_order_estimate,
    pade_approximant,
    series_arith,
)

__all__ = [
    "ParamRational",
    "ParameterGrid",
    "parse_rational_expr",
    "eval_rational",
    "laurent_expand",
    "PuiseuxSeries",
    "series_arith",
    "borel_transform",
    "gevrey_order_estimate",
    "pade_approximant",
]

__version__ = "0.1.0"
