import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qys.core import (
    Family,
    SolitonParams,
    SolitonState,
    SolitonType,
    constraint_ddpsi,
    constraint_rhs,
    consistent_ddpsi,
    curvature_R,
    curvature_gap,
    exact_constant_psi,
    exact_exponential,
    flow_rhs,
    rbar_from_state,
    rbar_residual,
    soliton_equation_residual,
)
from qys.errors import DegenerateInterval, NonFiniteResult, TipSingularity


def test_params_validation_and_type():
    assert SolitonParams(3, 1.0, 1.0).soliton_type is SolitonType.SHRINKING
    assert SolitonParams(3, 0.0, 1.0).soliton_type is SolitonType.STEADY
    assert SolitonParams(3, -2.0, 1.0).soliton_type is SolitonType.EXPANDING
    with pytest.raises(ValueError, match="nonzero"):
        SolitonParams(3, 0.0, 0.0)
    with pytest.raises(ValueError):
        SolitonParams(2, 0.0, 1.0)
    with pytest.raises(ValueError):
        SolitonParams(3, math.inf, 1.0)


def test_curvature_examples():
    assert curvature_R(SolitonState(0, 1.0, 0.0, 3.7), SolitonParams(3, 5.0, 2.0)) == 5.0
    assert curvature_R(SolitonState(0, 1.0, 2.0, 0.0), SolitonParams(3, 1.0, -0.3)) == 3.0
    sol = exact_exponential(1.0, 3, 1 / 6)
    for r in (-3.0, 0.0, 2.5):
        assert curvature_R(sol.evaluate(r), sol.params) == pytest.approx(-1 / 6, abs=1e-14)


def test_curvature_overflow():
    with pytest.raises(NonFiniteResult):
        curvature_R(SolitonState(0, 1.0, 1.0, 1e4), SolitonParams(3, 0.0, 1.0))


def test_rbar_from_state_examples():
    tip_like = SolitonState(0, 0.0, 1.0, 0.4, ddpsi=123.0)
    assert rbar_from_state(tip_like, SolitonParams(3, 0.7, 1.0)) == 2.0
    p = SolitonParams(3, 7.0, 1.0)
    assert rbar_from_state(SolitonState(0, 1.0, 0.0, 0.0, 0.0), p) == 7.0
    sol = exact_exponential(1.0, 3, 1 / 6)
    for r in (-5.0, 0.0, 4.0):
        assert rbar_from_state(sol.evaluate(r), sol.params) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(NonFiniteResult):
        rbar_from_state(SolitonState(0, math.nan, 0.0, 0.0, 0.0), p)
    with pytest.raises(ValueError):
        rbar_from_state(SolitonState(0, 1.0, 0.0, 0.0), p)


def test_rbar_residual_examples():
    tip_like = SolitonState(0, 0.0, 1.0, 0.0, 0.0)
    assert rbar_residual(tip_like, SolitonParams(3, 0.0, 1.0, 2.0)) == 0.0
    assert rbar_residual(tip_like, SolitonParams(3, 0.0, 1.0, 5.0)) == -3.0


def test_constraint_rhs_examples():
    assert constraint_rhs(SolitonState(0, 1.0, 0.0, 0.0), SolitonParams(3, 0.0, 1.0, 0.0)) == (0.0, 0.0, 1.0)
    assert constraint_rhs(SolitonState(0, 1.0, 0.0, 0.0), SolitonParams(3, 1.0, 1.0, 2.0)) == (0.0, 0.25, 1.0)
    # exponential family at r=0: psi'' = c^2 m^3 = 1/36
    ddpsi = constraint_ddpsi(1.0, -1 / 6, 0.0, SolitonParams(3, 0.0, 1 / 6, 0.0))
    assert ddpsi == pytest.approx(1 / 36, rel=1e-14)
    with pytest.raises(TipSingularity):
        constraint_rhs(SolitonState(0, 0.0, 1.0, 0.0), SolitonParams(3, 0.0, 1.0, 2.0))


def test_flow_rhs_examples():
    _, _, d3, Fp = flow_rhs(SolitonState(0, 1.0, 0.0, 0.0, 1.0), SolitonParams(3, 2.3, -0.7))
    assert d3 == -0.25 and Fp == 1.0
    for lam, c in ((1.0, 1.0), (-3.0, 0.2), (0.0, -5.0)):
        assert flow_rhs(SolitonState(0, 0.8, 0.0, 1.1, 0.0), SolitonParams(4, lam, c))[2] == 0.0
    sol = exact_exponential(1.0, 3, 1 / 6)
    assert flow_rhs(sol.evaluate(0.0), sol.params)[2] == pytest.approx(-1 / 216, rel=1e-13)
    with pytest.raises(TipSingularity):
        flow_rhs(SolitonState(0, 1e-13, 1.0, 0.0, 0.0), SolitonParams(3, 0.0, 1.0))


def test_flow_matches_derivative_of_constraint():
    # psi''' from the flow formula vs a finite difference of psi'' along the constraint vector field
    p = SolitonParams(4, -0.6, 0.35, 1.3)
    s = SolitonState(0.0, 0.9, 0.2, -0.4)
    s = consistent_ddpsi(s, p)
    d3 = flow_rhs(s, p)[2]
    h = 1e-5
    d1, d2, Fp = constraint_rhs(s, p)
    fwd = constraint_ddpsi(s.psi + h * d1, s.dpsi + h * d2, s.F + h * Fp, p)
    bwd = constraint_ddpsi(s.psi - h * d1, s.dpsi - h * d2, s.F - h * Fp, p)
    assert d3 == pytest.approx((fwd - bwd) / (2 * h), rel=1e-8)


def test_soliton_residual_examples():
    for p in (SolitonParams(3, 1.0, 2.0), SolitonParams(5, -4.0, -0.3, 9.0)):
        assert soliton_equation_residual(SolitonState(0, 1.0, 0.0, 0.0, 0.0), p) == pytest.approx(0.0, abs=1e-15)
    sol = exact_exponential(1.3, 4, -0.4)
    for r in np.linspace(-2, 2, 9):
        assert soliton_equation_residual(sol.evaluate(r), sol.params) == pytest.approx(0.0, abs=1e-12)


def test_exponential_family_values():
    steady = exact_exponential(1.0, 3, 1 / 6)
    assert steady.family is Family.EXPONENTIAL
    assert steady.params.lam == pytest.approx(0.0, abs=1e-16)
    assert steady.curvature == pytest.approx(-1 / 6, rel=1e-14)
    assert steady.params.rbar == 0.0
    expanding = exact_exponential(1.0, 3, -1.0)
    assert expanding.params.lam == -7.0
    assert expanding.curvature == -6.0
    assert expanding.params.soliton_type is SolitonType.EXPANDING


def test_exact_families_have_zero_rbar_residual():
    rng = np.random.default_rng(11)
    for _ in range(50):
        m, n, c = rng.uniform(0.2, 2.0), int(rng.integers(3, 7)), rng.choice([-1, 1]) * rng.uniform(0.1, 1.5)
        sol = exact_exponential(m, n, c)
        for r in rng.uniform(-3, 3, 20):
            s = sol.evaluate(r)
            scale = 1 + abs(sol.params.lam) * s.psi**2 + (n - 1) * (n - 2) * s.dpsi**2
            assert abs(rbar_residual(s, sol.params)) <= 1e-12 * scale
    sol = exact_constant_psi(2.0, 0.5, -3.0, lam=1.5, n=4)
    for r in rng.uniform(-20, 2.9, 100):
        assert rbar_residual(sol.evaluate(r), sol.params) == pytest.approx(0.0, abs=1e-12)


def test_constant_psi_family():
    sol = exact_constant_psi(1.0, 1.0, -1.0)
    assert sol.parameters["pole"] == 1.0
    assert sol.domain == (-math.inf, 1.0)
    assert sol.contains(0.5) and not sol.contains(1.0) and not sol.contains(1.5)
    s = sol.evaluate(0.0)
    assert (s.psi, s.dpsi, s.ddpsi) == (1.0, 0.0, 0.0)
    assert curvature_R(s, sol.params) == sol.params.lam
    # F'(0) = -a/c1 is never zero: the tip condition is out of reach
    for a, c, c1 in ((1.0, 1.0, -1.0), (0.3, 2.0, -2.0), (2.0, -0.5, -5.0)):
        fam = exact_constant_psi(a, c, c1, base=0.0)
        assert fam.potential_slope(0.0) == pytest.approx(-a / c1, rel=1e-14)
    flipped = exact_constant_psi(1.0, -1.0, 1.0)
    assert flipped.domain == (1.0, math.inf)
    with pytest.raises(DegenerateInterval):
        exact_constant_psi(1.0, 1.0, -1.0, base=1.0)
    with pytest.raises(ValueError):
        sol.evaluate(2.0)


finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(
    psi=st.floats(1e-3, 10),
    # subnormal psi' underflows to 0 under exp(cF) < 1
    dpsi=st.floats(-10, 10, allow_nan=False, allow_subnormal=False),
    F=st.floats(-3, 3),
    n=st.integers(3, 8),
    lam=finite,
    c=st.floats(0.05, 3).flatmap(lambda x: st.sampled_from([x, -x])),
)
def test_identity_and_sign_link(psi, dpsi, F, n, lam, c):
    p = SolitonParams(n, lam, c)
    s = SolitonState(0.0, psi, dpsi, F, ddpsi=0.0)
    assert abs(soliton_equation_residual(s, p)) <= 1e-12 * max(1.0, abs(curvature_R(s, p)) + abs(c) * (psi * math.exp(c * F)) ** 2)
    assert np.sign(curvature_gap(s, p)) == np.sign(dpsi)
    gap = curvature_R(s, p) - lam
    if abs(dpsi * math.exp(c * F)) > 1e-12 * max(1.0, abs(lam)):
        assert np.sign(gap) == np.sign(dpsi)
