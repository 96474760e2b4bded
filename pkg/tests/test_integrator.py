import math

import numpy as np
import pytest

from qys.core import SolitonParams, SolitonState, exact_constant_psi, exact_exponential, rbar_residual
from qys.errors import NoSignChange, TipSingularity
from qys.integrator import (
    EventKind,
    IntegratorConfig,
    Termination,
    dense_eval,
    integrate,
    integrate_line,
    locate_event,
)

STEADY = exact_exponential(1.0, 3, 1 / 6)


def _psi_error(traj, sol):
    exact = np.array([sol.evaluate(r).psi for r in traj.r])
    return float(np.max(np.abs(traj.psi - exact)))


@pytest.mark.parametrize("formulation", ["constraint", "flow"])
def test_exponential_oracle(formulation):
    traj = integrate(formulation, STEADY.evaluate(0.0), STEADY.params, (0.0, 10.0))
    assert traj.termination is Termination.SPAN_END
    assert traj.r[-1] == 10.0
    assert _psi_error(traj, STEADY) < 1e-6


def test_backward_oracle():
    traj = integrate("constraint", STEADY.evaluate(0.0), STEADY.params, (0.0, -10.0))
    assert traj.r[0] == -10.0 and traj.r[-1] == 0.0
    assert np.all(np.diff(traj.r) > 0)
    assert _psi_error(traj, STEADY) < 1e-6


def test_zero_length_span():
    traj = integrate("constraint", STEADY.evaluate(2.0), STEADY.params, (2.0, 2.0))
    assert len(traj) == 1
    assert traj.termination is Termination.SPAN_END
    assert traj.psi[0] == STEADY.evaluate(2.0).psi


def test_constant_psi_toward_pole():
    sol = exact_constant_psi(1.0, 1.0, -1.0)
    traj = integrate("constraint", sol.evaluate(0.0), sol.params, (0.0, 2.0))
    assert traj.termination in (Termination.BLOWUP, Termination.STEP_UNDERFLOW)
    # the numerical pole moves by O(rtol); the run stops there, not at r=2
    assert abs(traj.r[-1] - 1.0) < 1e-7
    assert np.max(np.abs(traj.psi - 1.0)) < 1e-6
    inside = traj.r < 1.0 - 1e-3
    exact_F = np.array([sol.evaluate(r).F for r in traj.r[inside]])
    assert np.max(np.abs(traj.F[inside] - exact_F)) < 1e-6


def test_blowup_event_carries_last_valid_state():
    sol = exact_constant_psi(1.0, 1.0, -1.0)
    traj = integrate("constraint", sol.evaluate(0.0), sol.params, (0.0, 2.0))
    ev = traj.event(EventKind.BLOWUP)
    if ev is not None:
        assert ev.r == traj.r[-1]
        assert ev.state.F == traj.F[-1]
        assert math.isfinite(ev.state.F)


def test_tip_singularity_at_start():
    with pytest.raises(TipSingularity):
        integrate("constraint", SolitonState(0.0, 0.0, 1.0, 0.0), SolitonParams(3, 0.0, 1.0, 2.0), (0.0, 1.0))


def test_dense_eval():
    traj = integrate("constraint", STEADY.evaluate(0.0), STEADY.params, (0.0, 10.0))
    for i in (0, 7, len(traj) - 1):
        s = dense_eval(traj, traj.r[i])
        assert (s.psi, s.dpsi, s.F) == (traj.psi[i], traj.dpsi[i], traj.F[i])
    mids = 0.5 * (traj.r[:-1] + traj.r[1:])
    for r in mids[::5]:
        assert abs(dense_eval(traj, r).psi - STEADY.evaluate(r).psi) < 1e-6
    with pytest.raises(ValueError):
        dense_eval(traj, 10.5)
    with pytest.raises(ValueError):
        dense_eval(traj, -0.1)


def test_dense_monotone_between_knots():
    sol = exact_exponential(1.5, 4, 0.3)
    traj = integrate("constraint", sol.evaluate(0.0), sol.params, (0.0, 8.0))
    assert np.all(traj.dpsi < 0)
    fine = np.linspace(0.0, 8.0, 4001)
    vals = np.array([dense_eval(traj, r).psi for r in fine])
    assert np.all(np.diff(vals) <= 1e-12)


def test_locate_event_linear():
    traj = integrate("constraint", STEADY.evaluate(0.0), STEADY.params, (0.0, 3.0))
    ev = locate_event(traj, lambda s: s.r - 1.0, (0.0, 2.0))
    assert ev.r == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(NoSignChange):
        locate_event(traj, lambda s: s.r + 5.0, (0.0, 2.0))


def test_dpsi_zero_event():
    # rbar > lam psi^2 at the start drives psi'' > 0, so a negative psi' crosses zero
    p = SolitonParams(3, 0.0, 1.0, 2.0)
    init = SolitonState(0.0, 1.0, -0.3, 0.0)
    traj = integrate("constraint", init, p, (0.0, 5.0), events={EventKind.DPSI_ZERO})
    ev = traj.event(EventKind.DPSI_ZERO)
    assert ev is not None and traj.termination is Termination.EVENT
    assert abs(ev.state.dpsi) < 1e-10
    fine = integrate(
        "constraint", init, p, (0.0, 5.0), IntegratorConfig(rtol=5e-10, atol=5e-13), events={EventKind.DPSI_ZERO}
    )
    assert fine.event(EventKind.DPSI_ZERO).r == pytest.approx(ev.r, abs=1e-8)
    before = dense_eval(traj, ev.r - 1e-4).dpsi
    assert before < 0


def test_flow_conservation():
    rng = np.random.default_rng(3)
    for _ in range(10):
        p = SolitonParams(int(rng.integers(3, 6)), rng.uniform(-2, 2), rng.choice([-1, 1]) * rng.uniform(0.1, 1), 0.0)
        init = SolitonState(0.0, rng.uniform(0.5, 2), rng.uniform(-0.5, 0.5), rng.uniform(-1, 1), 0.3)
        p = p.with_rbar(rbar_residual(init, p))
        traj = integrate("flow", init, p, (0.0, 10.0))
        assert traj.rbar_residual[0] == pytest.approx(0.0, abs=1e-14)
        drift = np.max(np.abs(traj.rbar_residual - traj.rbar_residual[0]))
        # runs that approach blow-up carry terms of size 1e8 and more
        assert drift < 1e-7 * (1 + np.max(traj.rbar_scale))


def test_flow_conservation_absolute_on_exact_family():
    sol = exact_exponential(0.7, 4, -0.2)
    traj = integrate_line("flow", sol.evaluate(0.0), sol.params, 10, 10)
    assert np.max(np.abs(traj.rbar_residual)) < 1e-7


def test_tolerance_convergence():
    # h_max would otherwise dominate the step choice on this smooth problem
    errs = []
    for rtol in (1e-6, 1e-7, 1e-8, 1e-9):
        cfg = IntegratorConfig(rtol=rtol, atol=rtol * 1e-3, h_max=10.0)
        traj = integrate("constraint", STEADY.evaluate(0.0), STEADY.params, (0.0, 10.0), cfg)
        errs.append(_psi_error(traj, STEADY))
    for coarse, fine in zip(errs, errs[1:]):
        assert fine < coarse / 2


def test_forward_then_backward():
    cfg = IntegratorConfig()
    for m, n, c in ((0.8, 3, -0.3), (1.0, 3, 1 / 6), (0.5, 4, 0.2)):
        sol = exact_exponential(m, n, c)
        init = sol.evaluate(0.0)
        fwd = integrate("constraint", init, sol.params, (0.0, 5.0), cfg)
        end = fwd.state_at_index(len(fwd) - 1)
        back = integrate("constraint", end, sol.params, (5.0, 0.0), cfg)
        start = back.state_at_index(0)
        assert back.r[0] == 0.0
        size = max(np.max(np.abs(fwd.y)), 1.0)
        tol = 10 * (cfg.rtol * size + cfg.atol)
        for a, b in ((start.psi, init.psi), (start.dpsi, init.dpsi), (start.F, init.F)):
            assert abs(a - b) < tol


def test_determinism():
    p = SolitonParams(4, 0.5, 0.7, 1.0)
    init = SolitonState(0.0, 0.7, 0.4, 0.2)
    ev = {EventKind.PSI_ZERO, EventKind.DPSI_ZERO, EventKind.DDPSI_ZERO}
    a = integrate_line("constraint", init, p, 10, 10, events=ev)
    b = integrate_line("constraint", init, p, 10, 10, events=ev)
    assert np.array_equal(a.r, b.r) and np.array_equal(a.y, b.y)
    assert [(e.kind, e.r) for e in a.events] == [(e.kind, e.r) for e in b.events]


def test_integrate_line_merges_both_sides():
    traj = integrate_line("constraint", STEADY.evaluate(0.0), STEADY.params, 5.0, 5.0)
    assert traj.span == (-5.0, 5.0)
    assert np.all(np.diff(traj.r) > 0)
    assert traj.terminations == (Termination.SPAN_END, Termination.SPAN_END)
    assert _psi_error(traj, STEADY) < 1e-6
    mids = 0.5 * (traj.r[:-1] + traj.r[1:])
    for r in mids[::7]:
        assert abs(dense_eval(traj, r).psi - STEADY.evaluate(r).psi) < 1e-6


def test_asymptote_event_on_equilibrium():
    # psi = alpha is an exact equilibrium when rbar = lam alpha^2
    p = SolitonParams(3, -1.0, -1.0, -1.0)
    traj = integrate(
        "constraint", SolitonState(0.0, 1.0, 0.0, 0.0), p, (0.0, 20.0), events={EventKind.ASYMPTOTE}
    )
    ev = traj.event(EventKind.ASYMPTOTE)
    assert ev is not None and ev.alpha == pytest.approx(1.0, abs=1e-12)
    assert ev.r >= 5.0


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(rtol=0)
    with pytest.raises(ValueError):
        IntegratorConfig(h_min=1.0)
