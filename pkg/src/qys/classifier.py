"""Regime table, trajectory verdicts and batch sweeps.

The table is keyed by (condition on R, sign of c, soliton type).  Each
cell carries the set of admissible outcomes for a complete nontrivial
soliton satisfying that condition globally; ``Unsolved`` cells make no
claim and are reported as exploratory.

A useful necessary condition behind most of the observed verdicts:
``d/dr exp(-cF) = -c psi``, so a complete line soliton needs ``psi``
integrable toward ``+inf`` when ``c > 0`` and toward ``-inf`` when ``c < 0``.
Otherwise ``F`` diverges at finite ``r`` and the run ends in blow-up.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import Formulation, SolitonParams, SolitonState, SolitonType
from .errors import QYSError
from .integrator import (
    EventKind,
    IntegratorConfig,
    Termination,
    Trajectory,
    integrate,
    integrate_line,
)
from .tip import shoot_tip

DEFAULT_EPS = 0.1
ALPHA_TOL = 1e-3


class RCondition(str, enum.Enum):
    ABOVE_EPS = "R>lambda+eps"
    ABOVE = "R>lambda"
    BELOW = "R<lambda"
    BELOW_EPS = "R<lambda-eps"


class CSign(str, enum.Enum):
    POS = "c>0"
    NEG = "c<0"


class Expectation(str, enum.Enum):
    ROTATIONALLY_SYMMETRIC = "RotationallySymmetric"
    TRIVIAL = "Trivial"
    ASYMPTOTE_FLAT = "AsymptoteFlat"
    ASYMPTOTE_NEGATIVE = "AsymptoteNegative"
    UNSOLVED = "Unsolved"


@dataclass(frozen=True)
class RegimeCell:
    r_condition: RCondition
    c_sign: CSign
    soliton_type: SolitonType
    expectations: tuple[Expectation, ...]
    basis: str = ""

    @property
    def solved(self) -> bool:
        return Expectation.UNSOLVED not in self.expectations

    @property
    def key(self) -> tuple:
        return (self.r_condition, self.c_sign, self.soliton_type)


_BASIS = {
    "gap_pos": "R>lambda+eps with c>0: only the tip mode [0,inf) x S^(n-1)",
    "gap_neg": "R<lambda-eps with c<0: trivial",
    "above": "R>lambda, c>0, shrinking or steady: rotationally symmetric",
    "expanding": "R<lambda, c<0, expanding: psi''>0 and psi->0 (rbar=0) or psi->sqrt(rbar/lambda) (rbar<0)",
    "steady": "R<0, c<0, steady: rbar=0, psi''>0, psi->0",
}

_TYPES = (SolitonType.SHRINKING, SolitonType.STEADY, SolitonType.EXPANDING)


def _build_table() -> dict[tuple, RegimeCell]:
    table = {}
    U = (Expectation.UNSOLVED,)
    for cond in RCondition:
        for sign in CSign:
            for typ in _TYPES:
                exp, basis = U, ""
                if cond is RCondition.ABOVE_EPS and sign is CSign.POS:
                    exp, basis = (Expectation.ROTATIONALLY_SYMMETRIC,), _BASIS["gap_pos"]
                elif cond is RCondition.BELOW_EPS and sign is CSign.NEG:
                    exp, basis = (Expectation.TRIVIAL,), _BASIS["gap_neg"]
                elif cond is RCondition.ABOVE and sign is CSign.POS and typ is not SolitonType.EXPANDING:
                    exp, basis = (Expectation.ROTATIONALLY_SYMMETRIC,), _BASIS["above"]
                elif cond is RCondition.BELOW and sign is CSign.NEG and typ is SolitonType.EXPANDING:
                    exp = (Expectation.ASYMPTOTE_FLAT, Expectation.ASYMPTOTE_NEGATIVE)
                    basis = _BASIS["expanding"]
                elif cond is RCondition.BELOW and sign is CSign.NEG and typ is SolitonType.STEADY:
                    exp, basis = (Expectation.ASYMPTOTE_FLAT,), _BASIS["steady"]
                table[(cond, sign, typ)] = RegimeCell(cond, sign, typ, exp, basis)
    return table


REGIME_TABLE = _build_table()


def regime_expectation(r_condition, c_sign, soliton_type) -> RegimeCell:
    key = (RCondition(r_condition), CSign(c_sign), SolitonType(soliton_type))
    return REGIME_TABLE[key]


def table_rows() -> list[RegimeCell]:
    return [REGIME_TABLE[(cond, sign, typ)] for cond in RCondition for sign in CSign for typ in _TYPES]


def format_table() -> str:
    lines = ["r_condition\tc_sign\ttype\texpectation\tbasis"]
    for cell in table_rows():
        exp = "|".join(e.value for e in cell.expectations)
        lines.append(
            f"{cell.r_condition.value}\t{cell.c_sign.value}\t{cell.soliton_type.value}\t{exp}\t{cell.basis or '-'}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# classification


class Verdict(str, enum.Enum):
    COMPLETE_LINE_CANDIDATE = "CompleteLineCandidate"
    ROTSYM_CANDIDATE = "RotSymCandidate"
    FINITE_EXTINCTION = "FiniteExtinction"
    BLOWUP = "Blowup"
    ASYMPTOTE = "Asymptote"


_DEATH = (Verdict.FINITE_EXTINCTION, Verdict.BLOWUP)


@dataclass(frozen=True)
class Classification:
    verdict: Verdict
    r_star: float | None
    alpha: float | None
    regime: RegimeCell | None
    mixed: bool
    consistent_with_paper: bool
    notes: tuple[str, ...] = ()
    checked: tuple[RegimeCell, ...] = field(default=(), repr=False)


def observed_condition(traj: Trajectory, eps: float = DEFAULT_EPS) -> RCondition | None:
    """Strongest R-condition holding at every sample, or None if R - lam changes sign."""
    gap = traj.gap
    gap = gap[np.isfinite(gap)]
    lo, hi = float(gap.min()), float(gap.max())
    if lo > eps:
        return RCondition.ABOVE_EPS
    if lo > 0:
        return RCondition.ABOVE
    if hi < -eps:
        return RCondition.BELOW_EPS
    if hi < 0:
        return RCondition.BELOW
    return None


def _verdict(traj: Trajectory) -> tuple[Verdict, float | None, float | None]:
    psi_zero = traj.event(EventKind.PSI_ZERO)
    if psi_zero is not None:
        return Verdict.FINITE_EXTINCTION, psi_zero.r, None
    blow = traj.event(EventKind.BLOWUP)
    if blow is not None:
        return Verdict.BLOWUP, blow.r, None
    bad = {Termination.BLOWUP, Termination.STEP_UNDERFLOW, Termination.MAX_STEPS}
    if any(t in bad for t in traj.terminations):
        # underflow: the side that stopped early is the end that moved least
        r_star = _stopped_end(traj)
        return Verdict.BLOWUP, r_star, None
    asym = traj.event(EventKind.ASYMPTOTE)
    if asym is not None:
        return Verdict.ASYMPTOTE, asym.r, asym.alpha
    if traj.origin == "tip":
        return Verdict.ROTSYM_CANDIDATE, None, None
    return Verdict.COMPLETE_LINE_CANDIDATE, None, None


def _stopped_end(traj: Trajectory) -> float:
    terms = traj.terminations
    if len(terms) == 2 and terms[0] is Termination.SPAN_END:
        return float(traj.r[-1])
    if len(terms) == 2:
        return float(traj.r[0])
    return float(traj.r[-1] if traj.r[-1] != traj.r_init else traj.r[0])


def _alpha_matches(alpha: float, params: SolitonParams, exp: Expectation) -> bool:
    if exp is Expectation.ASYMPTOTE_FLAT:
        return params.rbar == 0 and abs(alpha) <= ALPHA_TOL
    if exp is Expectation.ASYMPTOTE_NEGATIVE:
        if not (params.rbar < 0 and params.lam != 0):
            return False
        return abs(alpha - math.sqrt(params.rbar / params.lam)) <= ALPHA_TOL
    return False


def _branch_admits(params: SolitonParams, exp: Expectation) -> bool:
    if exp is Expectation.ASYMPTOTE_FLAT:
        return params.rbar == 0
    if exp is Expectation.ASYMPTOTE_NEGATIVE:
        return params.rbar < 0
    return False


def _consistent(verdict, alpha, cell: RegimeCell, params, origin) -> bool:
    exps = cell.expectations
    if Expectation.UNSOLVED in exps:
        return True
    if verdict in _DEATH:
        # an incomplete run is never a counterexample
        return True
    if exps == (Expectation.ROTATIONALLY_SYMMETRIC,):
        return verdict is Verdict.ROTSYM_CANDIDATE
    if exps == (Expectation.TRIVIAL,):
        return False
    # asymptotic branches, line mode only
    if verdict is Verdict.ASYMPTOTE:
        return any(_alpha_matches(alpha, params, e) for e in exps)
    if verdict is Verdict.COMPLETE_LINE_CANDIDATE:
        return any(_branch_admits(params, e) for e in exps)
    return False


def _applicable(cond: RCondition) -> tuple[RCondition, ...]:
    # the eps rows are special cases of the plain rows
    if cond is RCondition.ABOVE_EPS:
        return (RCondition.ABOVE_EPS, RCondition.ABOVE)
    if cond is RCondition.BELOW_EPS:
        return (RCondition.BELOW_EPS, RCondition.BELOW)
    return (cond,)


def classify(traj: Trajectory, params: SolitonParams | None = None, eps: float = DEFAULT_EPS) -> Classification:
    """Verdict for a trajectory and its consistency with the regime table."""
    params = params or traj.params
    verdict, r_star, alpha = _verdict(traj)
    cond = observed_condition(traj, eps)
    notes = []
    if cond is None:
        gap = traj.gap
        notes.append("RAtLambda" if np.all(gap[np.isfinite(gap)] == 0) else "MixedRegime")
        return Classification(verdict, r_star, alpha, None, True, True, tuple(notes))
    sign = CSign.POS if params.c > 0 else CSign.NEG
    typ = params.soliton_type
    cells = tuple(REGIME_TABLE[(c, sign, typ)] for c in _applicable(cond))
    ok = all(_consistent(verdict, alpha, cell, params, traj.origin) for cell in cells)
    if not any(cell.solved for cell in cells):
        notes.append("exploratory")
    notes.extend(shadow_checks(traj, verdict, ok))
    return Classification(verdict, r_star, alpha, cells[0], False, ok, tuple(notes), cells)


def shadow_checks(traj: Trajectory, verdict: Verdict, consistent: bool) -> list[str]:
    """Flags for sampled consequences of the R >= 0 and constant-psi results."""
    notes = []
    complete = verdict in (Verdict.COMPLETE_LINE_CANDIDATE, Verdict.ROTSYM_CANDIDATE)
    if complete and consistent and np.all(traj.R >= 0) and not traj.params.rbar > 0:
        notes.append("violation:nonnegative-R-needs-positive-rbar")
    if verdict is Verdict.COMPLETE_LINE_CANDIDATE and _flat_window(traj, 1e-10, 5.0):
        notes.append("violation:constant-psi-complete")
    return notes


def _flat_window(traj: Trajectory, tol: float, length: float) -> bool:
    flat = np.abs(traj.dpsi) < tol
    start = None
    for i, f in enumerate(flat):
        if f:
            start = i if start is None else start
            if traj.r[i] - traj.r[start] >= length:
                return True
        else:
            start = None
    return False


# ---------------------------------------------------------------------------
# asymptotic witnesses


@dataclass(frozen=True)
class AsymptoteWitness:
    backward: Trajectory
    forward: Trajectory
    alpha_target: float


def asymptote_end_state(
    params: SolitonParams, perturbation: float, span: float, r_end: float = 0.0
) -> SolitonState:
    """End data on the decaying branch toward ``alpha`` for ``c < 0``, ``R < lambda``.

    ``rbar < 0`` targets ``alpha = sqrt(rbar/lam)`` (a saddle; start at
    ``alpha + perturbation`` along the decaying eigendirection).  ``rbar = 0``
    targets ``alpha = 0`` (start at ``psi = perturbation``).  F at the end is
    chosen so that the backward blow-up of F, unavoidable for ``c < 0``
    because ``exp(-cF)`` falls by ``|c| * int psi``, lies beyond the span.
    """
    n, lam, c, rbar = params.n, params.lam, params.c, params.rbar
    if not c < 0:
        raise ValueError("asymptotic witnesses need c < 0")
    if rbar < 0:
        if not lam < 0:
            raise ValueError("rbar < 0 branch needs lam < 0")
        alpha = math.sqrt(rbar / lam)
        F_end = math.log(4 * abs(c) * alpha * span) / abs(c)
        b = alpha * math.exp(c * F_end) / (2 * (n - 1))
        mu = (-b - math.sqrt(b * b - 4 * lam / (n - 1))) / 2
        return SolitonState(r_end, alpha + perturbation, mu * perturbation, F_end)
    if rbar != 0:
        raise ValueError("asymptotic branches need rbar <= 0")
    psi = perturbation
    if lam < 0:
        kappa = math.sqrt(-lam / (n * (n - 1)))
        mass = psi * math.exp(kappa * span) / kappa
        F_end = math.log(4 * abs(c) * mass) / abs(c)
        return SolitonState(r_end, psi, -kappa * psi, F_end)
    # steady: psi ~ A/r with A exp(cF) = (n-1)(n+2)
    F_end = math.log(4 * abs(c) * psi * span) / abs(c)
    e = math.exp(c * F_end)
    return SolitonState(r_end, psi, -psi * psi * e / ((n - 1) * (n + 2)), F_end)


def construct_asymptote(
    params: SolitonParams,
    perturbation: float = 1e-6,
    span: float = 20.0,
    config: IntegratorConfig | None = None,
    forward_config: IntegratorConfig | None = None,
) -> AsymptoteWitness:
    """Backward integration from near the limit, then a forward re-run.

    The forward run starts at the far end of the backward trajectory and
    has the asymptote event enabled (with ``forward_config``'s window
    tolerance), so the limit is observed rather than assumed.
    """
    cfg = config or IntegratorConfig()
    end = asymptote_end_state(params, perturbation, span)
    events = {EventKind.PSI_ZERO, EventKind.DPSI_ZERO, EventKind.DDPSI_ZERO}
    back = integrate("constraint", end, params, (end.r, end.r - span), cfg, events)
    start = back.state_at_index(0)
    fwd_cfg = forward_config or IntegratorConfig(rtol=cfg.rtol, atol=cfg.atol, asymptote_tol=1e-4)
    fwd_events = {EventKind.PSI_ZERO}
    if params.rbar < 0:
        fwd_events.add(EventKind.ASYMPTOTE)
    fwd = integrate("constraint", start, params, (start.r, end.r), fwd_cfg, fwd_events)
    alpha = math.sqrt(params.rbar / params.lam) if params.rbar < 0 else 0.0
    return AsymptoteWitness(back, fwd, alpha)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class RunSpec:
    n: int
    lam: float
    c: float
    rbar: float
    mode: str  # "line" or "tip"
    init: tuple  # line: (psi, dpsi, F); tip: (F0,)
    back: float = 50.0
    fwd: float = 50.0
    seed: int | None = None
    eps: float = DEFAULT_EPS


def _run_one(args) -> dict:
    run_id, spec, cfg = args
    row = {
        "run-id": run_id,
        "n": spec.n,
        "lambda": spec.lam,
        "c": spec.c,
        "rbar": spec.rbar,
        "mode": spec.mode,
        "init": list(spec.init),
        "verdict": None,
        "event-kind": None,
        "event-r": None,
        "alpha": None,
        "consistent": None,
        "seed": spec.seed,
        "regime": None,
        "notes": [],
    }
    try:
        params = SolitonParams(spec.n, spec.lam, spec.c, spec.rbar)
        if spec.mode == "tip":
            traj = shoot_tip(params, spec.init[0], spec.fwd, cfg)
        elif spec.mode == "line":
            psi, dpsi, F = spec.init
            init = SolitonState(0.0, psi, dpsi, F)
            traj = integrate_line(Formulation.CONSTRAINT, init, params, spec.back, spec.fwd, cfg)
        else:
            raise ValueError(f"unknown mode {spec.mode!r}")
        cls = classify(traj, params, spec.eps)
    except (QYSError, ValueError, ArithmeticError) as exc:
        row["verdict"] = "Error"
        row["notes"] = [f"{type(exc).__name__}: {exc}"]
        return row
    first = traj.events[0] if traj.events else None
    row.update({
        "verdict": cls.verdict.value,
        "event-kind": first.kind.value if first else None,
        "event-r": first.r if first else None,
        "alpha": cls.alpha,
        "consistent": cls.consistent_with_paper,
        "regime": None if cls.regime is None else cls.regime.r_condition.value,
        "notes": list(cls.notes),
    })
    return row


def sweep_regimes(
    grid: Sequence[RunSpec], config: IntegratorConfig | None = None, workers: int = 1
) -> list[dict]:
    """One report row per grid entry, in grid order; failures are recorded per row."""
    cfg = config or IntegratorConfig()
    jobs = [(i, spec, cfg) for i, spec in enumerate(grid)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [_run_one(job) for job in jobs]


# falsification cells: (name, types, c sign, gap sign, uses eps)
FALSIFICATION_CELLS = {
    "above-c-pos": ((SolitonType.SHRINKING, SolitonType.STEADY), 1, 1, False),
    "above-eps-c-pos": (_TYPES, 1, 1, True),
    "below-eps-c-neg": (_TYPES, -1, -1, True),
}


def _log_uniform(rng, lo, hi):
    return math.exp(rng.uniform(math.log(lo), math.log(hi)))


def falsification_grid(
    cell: str, samples: int, seed: int, span: float = 50.0, eps: float = DEFAULT_EPS
) -> list[RunSpec]:
    """Seeded random line-mode data whose initial R - lam has the cell's sign.

    psi0 is log-uniform on [0.1, 10], F0 uniform on [-2, 2] and the initial
    curvature gap |psi0' exp(c F0)| log-uniform on [eps, 10] (or [1e-3, 10]
    for the cell without eps).  Dimension, lambda, |c| and rbar are drawn
    too so each cell is probed across its whole parameter range.
    """
    types, c_sign, gap_sign, uses_eps = FALSIFICATION_CELLS[cell]
    rng = np.random.default_rng(seed)
    grid = []
    for _ in range(samples):
        typ = types[int(rng.integers(len(types)))]
        n = int(rng.integers(3, 7))
        lam = {
            SolitonType.SHRINKING: rng.uniform(0.1, 5.0),
            SolitonType.STEADY: 0.0,
            SolitonType.EXPANDING: -rng.uniform(0.1, 5.0),
        }[typ]
        c = c_sign * _log_uniform(rng, 0.1, 2.0)
        psi0 = _log_uniform(rng, 0.1, 10.0)
        F0 = rng.uniform(-2.0, 2.0)
        gap = _log_uniform(rng, eps if uses_eps else 1e-3, 10.0)
        if uses_eps:
            gap = max(gap, eps * (1 + 1e-9))
        dpsi0 = gap_sign * gap * math.exp(-c * F0)
        rbar = rng.uniform(-5.0, 5.0)
        grid.append(
            RunSpec(n, float(lam), float(c), float(rbar), "line", (psi0, dpsi0, float(F0)),
                    back=span, fwd=span, seed=seed, eps=eps)
        )
    return grid


def rows_to_jsonl(rows: Iterable[dict]) -> str:
    return "".join(json.dumps(row, sort_keys=True) + "\n" for row in rows)


def spec_to_dict(spec: RunSpec) -> dict:
    d = asdict(spec)
    d["init"] = list(spec.init)
    return d
