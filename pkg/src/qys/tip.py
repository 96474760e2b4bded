"""Series start and shooting for the rotationally symmetric mode.

At the tip ``psi(0) = 0`` and ``F'(0) = 0``; the constraint right-hand side
divides by ``psi`` there, so the solution is started from a truncated power
series at a small handoff radius and then integrated numerically.

``psi`` is odd in ``r`` and ``F`` is even.  The rbar identity at order
``r^0`` fixes ``psi'(0) = sqrt(rbar / ((n-1)(n-2)))``; at order ``r^(p-1)``
it is linear in the ``r^p`` coefficient of ``psi`` with slope
``a1 p (2(n-1)(n-2) + 2(n-1)(p-1))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .core import SolitonParams, SolitonState
from .errors import NonPositiveRbar
from .integrator import DEFAULT_EVENTS, IntegratorConfig, Trajectory, integrate

DEFAULT_ORDER = 3
DEFAULT_R_START = 1e-4


def _mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.convolve(a, b)[: len(a)]


def _deriv(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    out[:-1] = a[1:] * np.arange(1, len(a))
    return out


def _exp_series(g: np.ndarray) -> np.ndarray:
    """``exp(g)`` for a truncated series, via ``h' = g' h``."""
    h = np.zeros_like(g)
    h[0] = math.exp(g[0])
    k = np.arange(len(g))
    for m in range(1, len(g)):
        h[m] = np.dot(k[1 : m + 1] * g[1 : m + 1], h[m - 1 :: -1][:m]) / m
    return h


def _potential_series(psi: np.ndarray, F0: float, c: float) -> np.ndarray:
    """Coefficients of F solving ``F' = psi exp(cF)``, ``F(0) = F0``."""
    F = np.zeros_like(psi)
    F[0] = F0
    for k in range(1, len(psi)):
        rhs = _mul(psi, _exp_series(c * F))
        F[k] = rhs[k - 1] / k
    return F


def _rbar_lhs_series(psi: np.ndarray, F: np.ndarray, params: SolitonParams) -> np.ndarray:
    n = params.n
    d1 = _deriv(psi)
    d2 = _deriv(d1)
    e = _exp_series(params.c * F)
    psi2 = _mul(psi, psi)
    return (
        params.lam * psi2
        + _mul(_mul(d1, psi2), e)
        + (n - 1) * (n - 2) * _mul(d1, d1)
        + 2 * (n - 1) * _mul(psi, d2)
    )


@dataclass(frozen=True)
class TipSeries:
    a1: float
    a3: float
    F0: float
    order: int
    r_start: float
    params: SolitonParams
    psi_coeffs: tuple = field(repr=False)
    F_coeffs: tuple = field(repr=False)

    @property
    def conical(self) -> bool:
        """True unless the fiber is the unit round sphere (``a1 = 1``)."""
        return abs(self.a1 - 1.0) > 1e-12


def tip_series(
    params: SolitonParams,
    F0: float = 0.0,
    order: int = DEFAULT_ORDER,
    r_start: float = DEFAULT_R_START,
) -> TipSeries:
    if not params.rbar > 0:
        raise NonPositiveRbar(f"tip mode needs rbar > 0, got {params.rbar!r}")
    if order < 3:
        raise ValueError("series order must be >= 3")
    order = order if order % 2 else order - 1
    n = params.n
    k = (n - 1) * (n - 2)
    a1 = math.sqrt(params.rbar / k)
    size = order + 2
    psi = np.zeros(size)
    psi[1] = a1
    for p in range(3, order + 1, 2):
        F = _potential_series(psi, F0, params.c)
        res = _rbar_lhs_series(psi, F, params)[p - 1]
        psi[p] = -res / (a1 * p * (2 * k + 2 * (n - 1) * (p - 1)))
    F = _potential_series(psi, F0, params.c)
    return TipSeries(
        a1=a1,
        a3=float(psi[3]),
        F0=float(F0),
        order=order,
        r_start=float(r_start),
        params=params,
        psi_coeffs=tuple(float(v) for v in psi[: order + 1]),
        F_coeffs=tuple(float(v) for v in F[: order + 2]),
    )


def _poly(coeffs, r, deriv=0):
    return float(np.polynomial.polynomial.polyval(r, np.polynomial.polynomial.polyder(coeffs, deriv)))


def series_state(series: TipSeries, r: float) -> SolitonState:
    """Truncated-series state at ``r`` (``ddpsi`` included)."""
    psi = series.psi_coeffs
    return SolitonState(
        float(r), _poly(psi, r), _poly(psi, r, 1), _poly(series.F_coeffs, r), _poly(psi, r, 2)
    )


def tip_init_state(series: TipSeries) -> SolitonState:
    if not 0 < series.r_start <= 0.01:
        raise ValueError("r_start must lie in (0, 0.01]")
    return series_state(series, series.r_start)


def series_residual(series: TipSeries, r: float, psi_coeffs=None, dps: int = 60) -> float:
    """rbar-identity residual of the truncated series at ``r``, in high precision.

    The constant term is subtracted so that round-off in ``a1`` (a separate
    check) does not mask the small-``r`` behavior.  ``psi_coeffs`` allows
    evaluating a modified series, e.g. one with an even term injected.
    """
    p = series.params
    coeffs = series.psi_coeffs if psi_coeffs is None else psi_coeffs
    with mpmath.workdps(dps):
        x = mpmath.mpf(r)
        psi = mpmath.polyval(list(reversed([mpmath.mpf(v) for v in coeffs])), x)
        d1 = sum(i * mpmath.mpf(v) * x ** (i - 1) for i, v in enumerate(coeffs) if i >= 1)
        d2 = sum(i * (i - 1) * mpmath.mpf(v) * x ** (i - 2) for i, v in enumerate(coeffs) if i >= 2)
        F = sum(mpmath.mpf(v) * x**i for i, v in enumerate(series.F_coeffs))
        n = p.n
        e = mpmath.exp(mpmath.mpf(p.c) * F)
        lhs = (
            mpmath.mpf(p.lam) * psi**2
            + d1 * psi**2 * e
            + (n - 1) * (n - 2) * d1**2
            + 2 * (n - 1) * psi * d2
        )
        a1 = mpmath.mpf(coeffs[1])
        return float(lhs - (n - 1) * (n - 2) * a1**2)


def shoot_tip(
    params: SolitonParams,
    F0: float = 0.0,
    rspan_end: float = 10.0,
    config: IntegratorConfig | None = None,
    *,
    order: int = DEFAULT_ORDER,
    r_start: float = DEFAULT_R_START,
    events=DEFAULT_EVENTS,
) -> Trajectory:
    """Candidate rotationally symmetric soliton for ``(params, F0)``."""
    series = tip_series(params, F0, order, r_start)
    init = tip_init_state(series)
    return integrate("constraint", init, params, (init.r, rspan_end), config, events, origin="tip")
