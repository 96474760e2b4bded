"""Numerical laboratory for quasi-Yamabe gradient solitons on warped products.

The soliton system reduces to an ODE in ``psi = F' exp(-cF)``; this package
integrates it, starts it at a rotationally symmetric tip, and classifies the
resulting trajectories against the known regime results.
"""

from .core import (
    ExactSolution,
    Family,
    Formulation,
    SolitonParams,
    SolitonState,
    SolitonType,
    exact_constant_psi,
    exact_exponential,
)
from .errors import (
    ConfigError,
    DegenerateInterval,
    NoSignChange,
    NonFiniteResult,
    NonPositiveRbar,
    QYSError,
    TipSingularity,
)
from .integrator import EventKind, IntegratorConfig, Termination, Trajectory, integrate, integrate_line

__version__ = "0.1.0"
