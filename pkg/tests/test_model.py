import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sampling import random_params
from tripwave.equilibria import kinetic_rhs
from tripwave.errors import InvalidParams
from tripwave.model import PRESETS, Params, check_conditions, condition_margins, derive, validate

PS_A, PS_B, PS_C = PRESETS["PS-A"], PRESETS["PS-B"], PRESETS["PS-C"]


def test_validate_accepts_ps_a():
    validate(PS_A)


@pytest.mark.parametrize(
    "change, constraint",
    [({"a": 0.9}, "a>1"), ({"k": 0.8}, "h<1<k"), ({"h": 1.2}, "h<1<k"), ({"d2": 0.0}, "d2>0"), ({"b1": -1.0}, "b1>0")],
)
def test_validate_names_the_constraint(change, constraint):
    with pytest.raises(InvalidParams) as exc:
        validate(PS_A.replace(**change))
    assert exc.value.constraint == constraint


def test_ps_a_derived_values():
    q = derive(PS_A)
    assert q.u_star == pytest.approx(0.5, abs=1e-15)
    assert q.w_star == pytest.approx(0.5, abs=1e-15)
    assert q.beta_upper == pytest.approx(0.74, rel=1e-12)
    assert q.beta_lower == pytest.approx(-2.330188679, rel=1e-9)
    assert q.s_upper == pytest.approx(1.720465053, rel=1e-9)
    assert q.s_lower is None
    assert q.gamma2 == pytest.approx(0.4, rel=1e-12)


def test_ps_b_cramer_and_coexistence():
    q = derive(PS_B)
    assert (q.Delta, q.Delta_u, q.Delta_v, q.Delta_w) == pytest.approx((1.56, 0.37, 0.4, 0.75), rel=1e-12)
    assert q.Ec == pytest.approx((0.237179487, 0.256410256, 0.480769231), rel=1e-8)
    assert q.beta_upper == pytest.approx(0.1, rel=1e-12)
    assert q.s_upper == pytest.approx(0.632455532, rel=1e-9)
    assert np.abs(kinetic_rhs(q.Ec, PS_B)).max() <= 1e-12


def test_ps_c_weak_alien_values():
    q = derive(PS_C)
    assert q.beta_lower == pytest.approx(0.0755102, rel=1e-6)
    assert q.s_lower == pytest.approx(0.173793, rel=1e-5)
    assert q.E_lower == pytest.approx((0, 0.469388, 0.408163), abs=1e-6)


def test_absent_quantities_are_none_not_nan():
    q = derive(PS_A)
    assert q.Ec is None and q.s_lower is None


def test_conditions_ps_a_semi_tail():
    cr = check_conditions(PS_A)
    assert cr.vr and cr.vd and cr.hb2
    assert cr.thm_sc1_applicable == "semi"
    assert not cr.thm_cs2_applicable


def test_conditions_ps_b_coexistence_tail():
    cr = check_conditions(PS_B)
    assert cr.ode_lyapu and cr.co_ex
    assert PS_B.k * math.sqrt(1.3) + 0.5 / math.sqrt(1.3) == pytest.approx(1.69271, rel=1e-5)
    assert cr.thm_sc1_applicable == "coexist"


def test_conditions_ps_c_weak_alien():
    cr = check_conditions(PS_C)
    assert cr.uur and cr.uud and cr.co_ex and cr.ode_lyapu
    assert cr.thm_cs2_applicable and cr.thm_cs2_coexist


def test_speed_regime_selects_branch():
    q = derive(PS_A)
    assert check_conditions(PS_A, 2.0).thm_sc1_semi
    # s = s* needs the d1 = d2 branch, which PS-A does not satisfy
    assert not check_conditions(PS_A, q.s_upper).thm_sc1_semi
    assert check_conditions(PRESETS["PS-A'"], q.s_upper).thm_sc1_semi
    assert not check_conditions(PS_A, 0.5 * q.s_upper).thm_sc1_semi


def test_both_readings_of_the_critical_weak_alien_rate_bound_reported():
    assert check_conditions(PRESETS["PS-C'"]).uuud0
    # r3 between r1(2-d3/d1)beta_lower and r1(2-d3/d1)beta_upper separates the readings
    cr = check_conditions(PRESETS["PS-C'"].replace(r3=0.0045))
    assert not cr.uuud0 and cr.uuud0_beta_upper
    assert any("beta_lower" in n for n in cr.notes)


def test_margins_agree_with_booleans():
    for p in PRESETS.values():
        cr, m = check_conditions(p), condition_margins(p)
        for key in ("positive", "positive2", "ode_lyapu", "vr", "vd", "hb2", "uur", "uud", "co_ex"):
            if m[key] > 0:
                assert getattr(cr, key), key
            if m[key] < 0:
                assert not getattr(cr, key), key


def test_identities_on_random_samples(rng):
    for _ in range(1000):
        p = random_params(rng)
        q = derive(p)
        assert q.u_star + p.b1 * q.w_star == pytest.approx(1, rel=1e-12)
        assert -1 + p.a * q.u_star - q.w_star == pytest.approx(0, abs=1e-12)
        assert q.v_lowstar + p.b2 * q.w_lowstar == pytest.approx(1, rel=1e-12)
        assert -1 + p.a * q.v_lowstar - q.w_lowstar == pytest.approx(0, abs=1e-12)
        closed = (p.b1 * (p.a - p.h) - p.b2 * (p.a - 1) + (1 - p.h)) / (1 + p.a * p.b1)
        assert q.beta_upper == pytest.approx(closed, rel=1e-12, abs=1e-14)
        cr = check_conditions(p)
        assert (q.beta_upper > 0) == cr.positive
        assert (q.beta_lower > 0) == cr.positive2
        if q.Ec is not None:
            assert np.abs(kinetic_rhs(q.Ec, p)).max() <= 1e-12
        if cr.co_ex and cr.ode_lyapu:
            assert q.Delta > 0 and q.Delta_u > 0 and q.Delta_v > 0


@settings(max_examples=200, deadline=None)
@given(
    st.floats(1.01, 10), st.floats(0.01, 0.99), st.floats(1.01, 5), st.floats(0.01, 5), st.floats(0.01, 5)
)
def test_equilibria_are_steady_states(a, h, k, b1, b2):
    p = Params(1, 1, 1, 1, 1, 1, h=h, k=k, a=a, b1=b1, b2=b2)
    q = derive(p)
    for state in (q.E_upper, q.E_lower):
        assert np.abs(kinetic_rhs(state, p)).max() <= 1e-12
