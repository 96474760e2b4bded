"""Reduced soliton ODE on a warped product.

A complete quasi-Yamabe gradient soliton is a warped product
``dr^2 + psi(r)^2 g_N`` with ``psi = F' exp(-cF)``.  Everything here is a
pure function of its arguments: curvature and residual formulas, the two
right-hand-side formulations, and the closed-form oracle families.

State layouts used by the integrator:

* constraint formulation: ``y = (psi, dpsi, F)``, rbar is data;
* flow formulation: ``y = (psi, dpsi, ddpsi, F)``, rbar is a first integral.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .errors import DegenerateInterval, NonFiniteResult, TipSingularity

PSI_MIN = 1e-12


class SolitonType(str, enum.Enum):
    SHRINKING = "shrinking"
    STEADY = "steady"
    EXPANDING = "expanding"


class Formulation(str, enum.Enum):
    CONSTRAINT = "constraint"
    FLOW = "flow"


@dataclass(frozen=True)
class SolitonParams:
    """Dimension ``n``, soliton constant ``lam``, quasi constant ``c`` and
    fiber scalar curvature ``rbar``."""

    n: int
    lam: float
    c: float
    rbar: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"n must be an integer >= 3, got {self.n!r}")
        if not all(math.isfinite(v) for v in (self.lam, self.c, self.rbar)):
            raise ValueError("lam, c and rbar must be finite")
        if self.c == 0:
            raise ValueError("c must be nonzero (c = 0 is not a quasi-Yamabe soliton)")

    @property
    def soliton_type(self) -> SolitonType:
        if self.lam > 0:
            return SolitonType.SHRINKING
        if self.lam < 0:
            return SolitonType.EXPANDING
        return SolitonType.STEADY

    def with_rbar(self, rbar: float) -> "SolitonParams":
        return replace(self, rbar=float(rbar))


@dataclass(frozen=True)
class SolitonState:
    r: float
    psi: float
    dpsi: float
    F: float
    ddpsi: float | None = None

    def as_tuple(self) -> tuple:
        return (self.r, self.psi, self.dpsi, self.F, self.ddpsi)


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        raise NonFiniteResult(f"exp({x!r}) overflows") from None


def _require_finite(*values: float) -> None:
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteResult(f"non-finite input {values!r}")


def curvature_R(state: SolitonState, params: SolitonParams) -> float:
    """Scalar curvature ``R = lam + psi' exp(cF)``."""
    return params.lam + state.dpsi * _exp(params.c * state.F)


def curvature_gap(state: SolitonState, params: SolitonParams) -> float:
    """``R - lam = psi' exp(cF)``, without the cancellation of forming R first."""
    return state.dpsi * _exp(params.c * state.F)


def potential_slope(state: SolitonState, params: SolitonParams) -> float:
    """``F' = psi exp(cF)``."""
    return state.psi * _exp(params.c * state.F)


def rbar_from_state(state: SolitonState, params: SolitonParams) -> float:
    """Fiber scalar curvature the state is consistent with (params.rbar unused)."""
    if state.ddpsi is None:
        raise ValueError("rbar_from_state needs ddpsi")
    _require_finite(state.psi, state.dpsi, state.ddpsi, state.F)
    n = params.n
    psi, d1, d2 = state.psi, state.dpsi, state.ddpsi
    e = _exp(params.c * state.F)
    return (
        params.lam * psi * psi
        + d1 * psi * psi * e
        + (n - 1) * (n - 2) * d1 * d1
        + 2 * (n - 1) * psi * d2
    )


def rbar_residual(state: SolitonState, params: SolitonParams) -> float:
    return rbar_from_state(state, params) - params.rbar


def constraint_ddpsi(psi: float, dpsi: float, F: float, params: SolitonParams) -> float:
    if not psi > PSI_MIN:
        raise TipSingularity(f"psi={psi!r} <= PSI_MIN")
    n = params.n
    e = math.exp(params.c * F)
    num = (
        params.rbar
        - params.lam * psi * psi
        - dpsi * psi * psi * e
        - (n - 1) * (n - 2) * dpsi * dpsi
    )
    return num / (2 * (n - 1) * psi)


def constraint_rhs(state: SolitonState, params: SolitonParams) -> tuple[float, float, float]:
    """Derivative ``(psi', psi'', F')`` of the constraint state."""
    _require_finite(state.psi, state.dpsi, state.F)
    e = _exp(params.c * state.F)
    dd = constraint_ddpsi(state.psi, state.dpsi, state.F, params)
    return state.dpsi, dd, state.psi * e


def flow_dddpsi(psi: float, dpsi: float, ddpsi: float, F: float, params: SolitonParams) -> float:
    if not psi > PSI_MIN:
        raise TipSingularity(f"psi={psi!r} <= PSI_MIN")
    n, lam, c = params.n, params.lam, params.c
    e = math.exp(c * F)
    num = (
        2 * lam * psi * dpsi
        + psi * psi * ddpsi * e
        + 2 * psi * dpsi * dpsi * e
        + c * psi**3 * dpsi * e * e
        + 2 * (n - 1) ** 2 * dpsi * ddpsi
    )
    return -num / (2 * (n - 1) * psi)


def flow_rhs(state: SolitonState, params: SolitonParams) -> tuple[float, float, float, float]:
    """Derivative ``(psi', psi'', psi''', F')`` of the flow state."""
    if state.ddpsi is None:
        raise ValueError("flow_rhs needs ddpsi")
    _require_finite(state.psi, state.dpsi, state.ddpsi, state.F)
    e = _exp(params.c * state.F)
    ddd = flow_dddpsi(state.psi, state.dpsi, state.ddpsi, state.F, params)
    return state.dpsi, state.ddpsi, ddd, state.psi * e


def soliton_equation_residual(state: SolitonState, params: SolitonParams) -> float:
    """Radial component of ``Hess F - (R - lam) g - c dF dF``.

    Zero for every state by construction of the reduction; a check on the
    reconstruction formulas for ``F'`` and ``F''``.
    """
    e = _exp(params.c * state.F)
    Fp = state.psi * e
    Fpp = (state.dpsi + params.c * state.psi * state.psi * e) * e
    return Fpp - (curvature_R(state, params) - params.lam) - params.c * Fp * Fp


def consistent_ddpsi(state: SolitonState, params: SolitonParams) -> SolitonState:
    """Attach the ``psi''`` that makes the rbar residual vanish."""
    return replace(state, ddpsi=constraint_ddpsi(state.psi, state.dpsi, state.F, params))


# ---------------------------------------------------------------------------
# exact families


class Family(str, enum.Enum):
    CONSTANT_PSI = "constant_psi"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class ExactSolution:
    family: Family
    parameters: dict = field(hash=False)
    domain: tuple[float, float]
    params: SolitonParams

    def contains(self, r: float) -> bool:
        lo, hi = self.domain
        return lo < r < hi

    def evaluate(self, r: float) -> SolitonState:
        if not self.contains(r):
            raise ValueError(f"r={r!r} outside domain {self.domain}")
        p = self.parameters
        c = self.params.c
        if self.family is Family.EXPONENTIAL:
            m = p["m"]
            psi = m * math.exp(-c * m * r)
            return SolitonState(r, psi, -c * m * psi, m * r, c * c * m * m * psi)
        a, c1 = p["a"], p["c1"]
        return SolitonState(r, a, 0.0, -math.log(-(a * c * r + c1)) / c, 0.0)

    def potential_slope(self, r: float) -> float:
        p = self.parameters
        if self.family is Family.EXPONENTIAL:
            return p["m"]
        return -p["a"] / (p["a"] * self.params.c * r + p["c1"])

    @property
    def curvature(self) -> float:
        """Scalar curvature, constant along both families."""
        p = self.parameters
        if self.family is Family.EXPONENTIAL:
            n, c, m = self.params.n, self.params.c, p["m"]
            return -n * (n - 1) * c * c * m * m
        return self.params.lam


def exact_exponential(m: float, n: int, c: float) -> ExactSolution:
    """``F = m r``, ``psi = m exp(-c m r)``.

    Substitution into the rbar identity leaves ``psi^2 (R + n(n-1)c^2 m^2)``,
    which is constant in ``r`` only if it vanishes: ``rbar = 0`` and
    ``lam = c m^2 (1 - n(n-1)c)``.
    """
    if not m > 0:
        raise ValueError("m must be positive")
    lam = c * m * m * (1 - n * (n - 1) * c)
    params = SolitonParams(n=n, lam=lam, c=c, rbar=0.0)
    return ExactSolution(Family.EXPONENTIAL, {"m": float(m)}, (-math.inf, math.inf), params)


def exact_constant_psi(
    a: float,
    c: float,
    c1: float,
    *,
    lam: float = 0.0,
    n: int = 3,
    base: float | None = None,
) -> ExactSolution:
    """Local family ``psi = a``, ``F'(r) = -a / (a c r + c1)``.

    Lives where ``a c r + c1 < 0``, a half-line ending at the pole of ``F'``.
    Curvature is ``R = lam`` and the fiber carries ``rbar = lam a^2``.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    params = SolitonParams(n=n, lam=lam, c=c, rbar=lam * a * a)
    pole = -c1 / (a * c)
    domain = (-math.inf, pole) if a * c > 0 else (pole, math.inf)
    sol = ExactSolution(
        Family.CONSTANT_PSI, {"a": float(a), "c1": float(c1), "pole": pole}, domain, params
    )
    if base is not None and not sol.contains(base):
        raise DegenerateInterval(f"base point {base!r} not inside domain {domain}")
    return sol
