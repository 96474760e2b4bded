"""Adaptive Dormand-Prince 5(4) integration of the reduced soliton ODE.

Steps are controlled on the 4th-order embedded error estimate; each
accepted step stores Shampine's free 4th-order interpolant so trajectories
can be evaluated anywhere inside the covered span.  Event functions are
checked for sign changes at step endpoints and refined on the interpolant.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np
from scipy.optimize import brentq

from . import core
from .core import Formulation, SolitonParams, SolitonState
from .errors import NoSignChange, NonFiniteResult, TipSingularity

log = logging.getLogger(__name__)

# Dormand-Prince tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_A = [np.array(row) for row in _A]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# dense output, Shampine (1986)
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


class EventKind(str, enum.Enum):
    PSI_ZERO = "PsiZero"
    DPSI_ZERO = "DPsiZero"
    DDPSI_ZERO = "DDPsiZero"
    BLOWUP = "Blowup"
    ASYMPTOTE = "Asymptote"
    TIP_SINGULARITY = "TipSingularity"


ROOT_EVENTS = (EventKind.PSI_ZERO, EventKind.DPSI_ZERO, EventKind.DDPSI_ZERO)
DEFAULT_EVENTS = frozenset({EventKind.PSI_ZERO})


class Termination(str, enum.Enum):
    SPAN_END = "SpanEnd"
    EVENT = "Event"
    BLOWUP = "Blowup"
    STEP_UNDERFLOW = "StepUnderflow"
    MAX_STEPS = "MaxSteps"


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-9
    atol: float = 1e-12
    h_init: float = 1e-3
    h_min: float = 1e-13
    h_max: float = 0.1
    max_steps: int = 1_000_000
    blowup_threshold: float = 1e12
    # psi below this counts as extinction; the RHS is singular at psi = 0
    psi_event: float = 1e-6
    asymptote_tol: float = 1e-8
    asymptote_window: float = 5.0

    def __post_init__(self):
        if not (0 < self.h_min <= self.h_init <= self.h_max):
            raise ValueError("need 0 < h_min <= h_init <= h_max")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not self.blowup_threshold > 0:
            raise ValueError("blowup_threshold must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if not (self.psi_event > core.PSI_MIN and self.asymptote_window > 0 and self.asymptote_tol > 0):
            raise ValueError("invalid event thresholds")


@dataclass(frozen=True)
class Event:
    kind: EventKind
    r: float
    state: SolitonState
    alpha: float | None = None


def _rhs_function(formulation: Formulation, params: SolitonParams) -> Callable:
    if formulation is Formulation.CONSTRAINT:
        def f(r, y):
            psi, dpsi, F = y
            e = math.exp(params.c * F)
            return np.array((dpsi, core.constraint_ddpsi(psi, dpsi, F, params), psi * e))
    else:
        def f(r, y):
            psi, dpsi, ddpsi, F = y
            e = math.exp(params.c * F)
            return np.array((dpsi, ddpsi, core.flow_dddpsi(psi, dpsi, ddpsi, F, params), psi * e))
    return f


def _pack(state: SolitonState, formulation: Formulation, params: SolitonParams) -> np.ndarray:
    if formulation is Formulation.CONSTRAINT:
        return np.array([state.psi, state.dpsi, state.F], dtype=float)
    if state.ddpsi is None:
        state = core.consistent_ddpsi(state, params)
    return np.array([state.psi, state.dpsi, state.ddpsi, state.F], dtype=float)


def _unpack(r: float, y: np.ndarray, formulation: Formulation, params: SolitonParams) -> SolitonState:
    if formulation is Formulation.CONSTRAINT:
        psi, dpsi, F = (float(v) for v in y)
        try:
            dd = core.constraint_ddpsi(psi, dpsi, F, params)
        except (TipSingularity, OverflowError):
            dd = math.nan
        return SolitonState(float(r), psi, dpsi, F, dd)
    psi, dpsi, ddpsi, F = (float(v) for v in y)
    return SolitonState(float(r), psi, dpsi, F, ddpsi)


@dataclass
class Trajectory:
    """Knots in ascending ``r`` plus one interpolant per accepted step."""

    params: SolitonParams
    formulation: Formulation
    r: np.ndarray
    y: np.ndarray
    seg_r0: np.ndarray
    seg_h: np.ndarray
    seg_y0: np.ndarray
    seg_Q: np.ndarray
    events: list[Event]
    termination: Termination
    terminations: tuple[Termination, ...] = ()
    origin: str = "line"
    r_init: float = 0.0
    R: np.ndarray = field(init=False, repr=False)
    gap: np.ndarray = field(init=False, repr=False)
    rbar_residual: np.ndarray = field(init=False, repr=False)
    rbar_scale: np.ndarray = field(init=False, repr=False)
    ddpsi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.terminations:
            self.terminations = (self.termination,)
        p = self.params
        e = np.exp(p.c * self.F)
        if self.formulation is Formulation.CONSTRAINT:
            psi, d1 = self.psi, self.dpsi
            n = p.n
            with np.errstate(divide="ignore", invalid="ignore"):
                dd = (p.rbar - p.lam * psi**2 - d1 * psi**2 * e - (n - 1) * (n - 2) * d1**2) / (
                    2 * (n - 1) * psi
                )
        else:
            dd = self.y[:, 2].copy()
        self.ddpsi = dd
        # R - lam kept separately so its sign is exact even when |lam| >> gap
        self.gap = self.dpsi * e
        self.R = p.lam + self.gap
        n = p.n
        terms = np.stack([
            p.lam * self.psi**2,
            self.dpsi * self.psi**2 * e,
            (n - 1) * (n - 2) * self.dpsi**2,
            2 * (n - 1) * self.psi * dd,
        ])
        self.rbar_residual = terms.sum(axis=0) - p.rbar
        # size of the largest term in the identity; drift is only meaningful relative to it
        self.rbar_scale = np.max(np.abs(terms), axis=0)

    # column views
    @property
    def psi(self) -> np.ndarray:
        return self.y[:, 0]

    @property
    def dpsi(self) -> np.ndarray:
        return self.y[:, 1]

    @property
    def F(self) -> np.ndarray:
        return self.y[:, -1]

    @property
    def Fprime(self) -> np.ndarray:
        return self.psi * np.exp(self.params.c * self.F)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.r[0]), float(self.r[-1])

    @property
    def samples(self) -> list[SolitonState]:
        return [self.state_at_index(i) for i in range(len(self.r))]

    def state_at_index(self, i: int) -> SolitonState:
        s = _unpack(self.r[i], self.y[i], self.formulation, self.params)
        return replace(s, ddpsi=float(self.ddpsi[i]))

    def event(self, kind: EventKind) -> Event | None:
        for ev in self.events:
            if ev.kind is kind:
                return ev
        return None

    def __len__(self) -> int:
        return len(self.r)


def _interp(y0: np.ndarray, h: float, Q: np.ndarray, theta: float) -> np.ndarray:
    return y0 + h * (Q @ np.array([theta, theta**2, theta**3, theta**4]))


def dense_eval_array(traj: Trajectory, r: float) -> np.ndarray:
    lo, hi = traj.span
    if not (lo <= r <= hi):
        raise ValueError(f"r={r!r} outside trajectory span [{lo}, {hi}]")
    i = int(np.searchsorted(traj.r, r))
    if i < len(traj.r) and traj.r[i] == r:
        return traj.y[i].copy()
    # knot interval [r[i-1], r[i]] corresponds to segment i-1
    k = min(max(i - 1, 0), len(traj.seg_r0) - 1)
    theta = (r - traj.seg_r0[k]) / traj.seg_h[k]
    return _interp(traj.seg_y0[k], traj.seg_h[k], traj.seg_Q[k], theta)


def dense_eval(traj: Trajectory, r: float) -> SolitonState:
    """State at any ``r`` inside the covered span; exact at knots."""
    y = dense_eval_array(traj, r)
    return _unpack(r, y, traj.formulation, traj.params)


def _event_value(kind: EventKind, y: np.ndarray, dy: np.ndarray, cfg: IntegratorConfig) -> float:
    if kind is EventKind.PSI_ZERO:
        return float(y[0]) - cfg.psi_event
    if kind is EventKind.DPSI_ZERO:
        return float(y[1])
    return float(dy[1])  # psi''


def _root_tol(r: float) -> float:
    return 0.5e-12 * max(1.0, abs(r))


def _refine(g: Callable[[float], float], ra: float, rb: float) -> float:
    a, b = (ra, rb) if ra < rb else (rb, ra)
    ga, gb = g(a), g(b)
    if ga == 0:
        return a
    if gb == 0:
        return b
    if np.sign(ga) == np.sign(gb):
        raise NoSignChange(f"no sign change on [{a}, {b}]")
    return brentq(g, a, b, xtol=_root_tol(max(abs(a), abs(b))), rtol=4 * np.finfo(float).eps)


def locate_event(
    traj: Trajectory,
    event_fn: Callable[[SolitonState], float],
    bracket: tuple[float, float],
    kind: EventKind = EventKind.PSI_ZERO,
) -> Event:
    """Refine a root of ``event_fn`` along the dense output."""
    r = _refine(lambda x: event_fn(dense_eval(traj, x)), *bracket)
    return Event(kind, r, dense_eval(traj, r))


class _Run:
    """Mutable workspace for one directional integration."""

    def __init__(self, formulation, params, cfg, events):
        self.formulation = formulation
        self.params = params
        self.cfg = cfg
        self.events = frozenset(events)
        self.f = _rhs_function(formulation, params)
        self.watch = [0, 1, 2] if formulation is Formulation.CONSTRAINT else [0, 1, 3]

    def _safe_f(self, r, y):
        try:
            dy = self.f(r, y)
        except (TipSingularity, OverflowError, ZeroDivisionError):
            return None
        if not np.all(np.isfinite(dy)):
            return None
        return dy

    def _step(self, r, y, dy, h):
        K = np.empty((7, y.size))
        K[0] = dy
        for s in range(1, 6):
            ys = y + h * (_A[s] @ K[:s])
            k = self._safe_f(r + _C[s] * h, ys)
            if k is None:
                return None
            K[s] = k
        y_new = y + h * (_B @ K[:6])
        if not np.all(np.isfinite(y_new)):
            return None
        k = self._safe_f(r + h, y_new)
        if k is None:
            return None
        K[6] = k
        err = h * (_E @ K)
        return y_new, K, err

    def run(self, init: SolitonState, r1: float):
        cfg, fm, params = self.cfg, self.formulation, self.params
        r0 = float(init.r)
        y = _pack(init, fm, params)
        if not y[0] > core.PSI_MIN:
            raise TipSingularity(f"initial psi={y[0]!r} <= PSI_MIN; use a tip-series start")
        dy = self._safe_f(r0, y)
        if dy is None:
            raise NonFiniteResult("right-hand side not finite at the initial state")

        rs, ys = [r0], [y.copy()]
        segs = []
        events: list[Event] = []
        termination = Termination.SPAN_END
        direction = 1.0 if r1 >= r0 else -1.0
        h_abs = min(cfg.h_init, cfg.h_max)
        r = r0
        hold_start = None
        # event values at the current knot
        active = [k for k in ROOT_EVENTS if k in self.events]
        g_prev = {k: _event_value(k, y, dy, cfg) for k in active}
        steps = 0

        while direction * (r1 - r) > 0:
            if steps >= cfg.max_steps:
                termination = Termination.MAX_STEPS
                break
            remaining = abs(r1 - r)
            last = h_abs >= remaining
            h = direction * (remaining if last else h_abs)
            out = self._step(r, y, dy, h)
            if out is None:
                h_abs *= 0.25
                if h_abs < cfg.h_min:
                    termination = Termination.STEP_UNDERFLOW
                    self._singular_note(events, r, y)
                    break
                continue
            y_new, K, err = out
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
            if err_norm > 1.0:
                h_abs *= max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)
                if h_abs < cfg.h_min:
                    termination = Termination.STEP_UNDERFLOW
                    break
                continue
            r_new = r1 if last else r + h
            dy_new = K[6]
            # psi'' (a state component in the flow formulation) is excluded: it
            # diverges legitimately as psi collapses to 0
            if max(np.max(np.abs(y_new[self.watch])), abs(dy_new[-1])) > cfg.blowup_threshold:
                events.append(Event(EventKind.BLOWUP, r, _unpack(r, y, fm, params)))
                termination = Termination.BLOWUP
                break
            Q = K.T @ _P
            steps += 1

            # root events on this step, earliest in the direction of travel
            hit = None
            for kind in active:
                g_new = _event_value(kind, y_new, dy_new, cfg)
                g_old = g_prev[kind]
                if g_old != 0 and (g_old * g_new < 0 or g_new == 0):
                    r_ev = self._refine_on_step(kind, r, y, h, Q, r_new)
                    if hit is None or direction * (r_ev - hit[1]) < 0:
                        hit = (kind, r_ev)
                g_prev[kind] = g_new
            if hit is not None:
                kind, r_ev = hit
                y_ev = _interp(y, h, Q, (r_ev - r) / h)
                segs.append((r, h, y.copy(), Q))
                rs.append(r_ev)
                ys.append(y_ev)
                events.append(Event(kind, r_ev, _unpack(r_ev, y_ev, fm, params)))
                termination = Termination.EVENT
                break

            segs.append((r, h, y.copy(), Q))
            r, y, dy = r_new, y_new, dy_new
            rs.append(r)
            ys.append(y.copy())

            if EventKind.ASYMPTOTE in self.events:
                ddpsi = dy[1]
                if abs(y[1]) < cfg.asymptote_tol and abs(ddpsi) < cfg.asymptote_tol:
                    if hold_start is None:
                        hold_start = len(rs) - 1
                    elif abs(r - rs[hold_start]) >= cfg.asymptote_window:
                        wr = np.array(rs[hold_start:])
                        wpsi = np.array([v[0] for v in ys[hold_start:]])
                        alpha = float(np.trapezoid(wpsi, wr) / (wr[-1] - wr[0]))
                        events.append(
                            Event(EventKind.ASYMPTOTE, r, _unpack(r, y, fm, params), alpha=alpha)
                        )
                        termination = Termination.EVENT
                        break
                else:
                    hold_start = None

            factor = _MAX_FACTOR if err_norm == 0 else min(_MAX_FACTOR, _SAFETY * err_norm ** -0.2)
            h_abs = min(cfg.h_max, h_abs * factor)

        if termination is not Termination.SPAN_END:
            log.debug("integration stopped at r=%g: %s", rs[-1], termination.value)
        return rs, ys, segs, events, termination

    def _refine_on_step(self, kind, r, y, h, Q, r_new):
        cfg = self.cfg

        def g(x):
            yx = _interp(y, h, Q, (x - r) / h)
            if kind is EventKind.DDPSI_ZERO:
                dyx = self._safe_f(x, yx)
                if dyx is None:
                    return math.nan
            else:
                dyx = yx
            return _event_value(kind, yx, dyx, cfg)

        try:
            return float(_refine(g, r, r_new))
        except (NoSignChange, ValueError):
            # interpolant and knot disagree in sign at the margin; take the knot
            return float(r_new)

    def _singular_note(self, events, r, y):
        if y[0] < 1e3 * self.cfg.psi_event:
            events.append(Event(EventKind.TIP_SINGULARITY, r, _unpack(r, y, self.formulation, self.params)))


def _assemble(params, formulation, rs, ys, segs, events, termination, origin, r_init) -> Trajectory:
    m = 3 if formulation is Formulation.CONSTRAINT else 4
    r = np.asarray(rs, dtype=float)
    y = np.asarray(ys, dtype=float).reshape(len(rs), m)
    if segs:
        seg_r0 = np.array([s[0] for s in segs])
        seg_h = np.array([s[1] for s in segs])
        seg_y0 = np.array([s[2] for s in segs])
        seg_Q = np.array([s[3] for s in segs])
    else:
        seg_r0 = np.empty(0)
        seg_h = np.empty(0)
        seg_y0 = np.empty((0, m))
        seg_Q = np.empty((0, m, 4))
    if len(r) > 1 and r[-1] < r[0]:
        r, y = r[::-1].copy(), y[::-1].copy()
        seg_r0, seg_h, seg_y0, seg_Q = seg_r0[::-1], seg_h[::-1], seg_y0[::-1], seg_Q[::-1]
    return Trajectory(
        params, formulation, r, y, seg_r0, seg_h, seg_y0, seg_Q,
        list(events), termination, origin=origin, r_init=r_init,
    )


def integrate(
    formulation: Formulation | str,
    init: SolitonState,
    params: SolitonParams,
    rspan: tuple[float, float],
    config: IntegratorConfig | None = None,
    events: Iterable[EventKind] = DEFAULT_EVENTS,
    origin: str = "line",
) -> Trajectory:
    """Integrate from ``init`` (at ``rspan[0]``) toward ``rspan[1]``.

    ``rspan`` may be decreasing.  Terminates at the span end, the first
    enabled event, blow-up, or step underflow; the cause is recorded in
    ``termination``.
    """
    formulation = Formulation(formulation)
    cfg = config or IntegratorConfig()
    r0, r1 = map(float, rspan)
    if init.r != r0:
        init = replace(init, r=r0)
    run = _Run(formulation, params, cfg, events)
    rs, ys, segs, evs, term = run.run(init, r1)
    return _assemble(params, formulation, rs, ys, segs, evs, term, origin, r0)


def integrate_line(
    formulation: Formulation | str,
    init: SolitonState,
    params: SolitonParams,
    back: float,
    fwd: float,
    config: IntegratorConfig | None = None,
    events: Iterable[EventKind] = DEFAULT_EVENTS,
) -> Trajectory:
    """Two-sided run over ``[r0 - back, r0 + fwd]`` for line-mode data.

    A complete line soliton has to survive both directions, so an event
    or blow-up on either side ends that side and is recorded.
    """
    events = frozenset(events)
    r0 = float(init.r)
    left = integrate(formulation, init, params, (r0, r0 - back), config, events)
    right = integrate(formulation, init, params, (r0, r0 + fwd), config, events)
    r = np.concatenate([left.r, right.r[1:]])
    y = np.concatenate([left.y, right.y[1:]])
    term = left.termination if left.termination is not Termination.SPAN_END else right.termination
    return Trajectory(
        params,
        left.formulation,
        r,
        y,
        np.concatenate([left.seg_r0, right.seg_r0]),
        np.concatenate([left.seg_h, right.seg_h]),
        np.concatenate([left.seg_y0, right.seg_y0]),
        np.concatenate([left.seg_Q, right.seg_Q]),
        left.events + right.events,
        term,
        terminations=(left.termination, right.termination),
        origin="line",
        r_init=r0,
    )
