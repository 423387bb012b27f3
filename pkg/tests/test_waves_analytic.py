import math

import numpy as np
import pytest

from sampling import sample_case
from tripwave.equilibria import integrate_kinetic, kinetic_rhs
from tripwave.errors import DomainError, HypothesisViolated
from tripwave.model import PRESETS, check_conditions, derive
from tripwave.waves_analytic import (
    INEQUALITIES,
    ULCase,
    build_ul,
    default_delta3,
    eps_max,
    eps_terms,
    eval_ul,
    lie_decrease_rate,
    lie_derivative_phi,
    lie_derivative_quadratic,
    lyapunov_check,
    lyapunov_gradient,
    lyapunov_phi,
    random_positive_starts,
    rectangle_bounds,
    rectangle_signs,
    verify_ul,
)

PS_A, PS_A1, PS_B = PRESETS["PS-A"], PRESETS["PS-A'"], PRESETS["PS-B"]
PS_C, PS_C1 = PRESETS["PS-C"], PRESETS["PS-C'"]
CASES = [c.value for c in ULCase]


@pytest.fixture(scope="module")
def ps_a_2():
    return build_ul(PS_A, 2.0, "estar-super")


# ---------------------------------------------------------------- constants


def test_ps_a_super_constants(ps_a_2):
    c = ps_a_2
    assert c.root1 == pytest.approx(0.490098, abs=1e-6)
    assert c.root2 == pytest.approx(1.509902, abs=1e-6)
    assert c.ratio == pytest.approx(0.755731, rel=1e-5)
    assert c.amplitude == 4.5
    assert c.mu == 1.5
    assert c.char_poly(c.mu * c.root1) == pytest.approx(-0.189853, abs=1e-6)
    assert c.q_bound == pytest.approx(7.0581, abs=1e-4)
    for r in (c.root1, c.root2):
        assert abs(c.char_poly(r)) <= 1e-12 * max(1, r * r)


def test_ps_a_critical_constants():
    c = build_ul(PS_A1, None, "estar-critical")
    assert c.s == pytest.approx(1.720465, rel=1e-6)
    assert c.root1 == pytest.approx(0.860233, abs=1e-6)
    assert c.Lstar == pytest.approx(3.17816, abs=1e-4)
    assert c.Mconst == pytest.approx(4.1023, abs=1e-3)


def test_critical_speed_given_explicitly_matches_default():
    c = build_ul(PS_A1, derive(PS_A1).s_upper, "estar-critical")
    assert c.corners == build_ul(PS_A1, None, "estar-critical").corners


@pytest.mark.parametrize(
    "p, s, case, name",
    [
        (PS_A, 0.9 * derive(PS_A).s_upper, "estar-super", "s>s*"),
        (PS_A, 2.0, "estar-critical", "s=s*"),
        (PS_A, 2.0, "elow-super", "beta_lower>0"),
        (PS_C, 2.0, "estar-super", "vr"),
        (PS_C, 0.5, "elow-critical", "s=s_*"),
    ],
)
def test_hypothesis_guards(p, s, case, name):
    with pytest.raises(HypothesisViolated) as exc:
        build_ul(p, s, case)
    assert exc.value.condition == name


# --------------------------------------------------------------- evaluation


def test_tails_and_right_branches(ps_a_2):
    c = ps_a_2
    q = derive(PS_A)
    up, lo = eval_ul(c, np.array([-400.0]))
    assert up[:, 0] == pytest.approx(q.E_upper, abs=1e-12)
    assert lo[:, 0] == pytest.approx(q.E_upper, abs=1e-12)
    z = np.array([max(0, c.corners["z1"]) + 1.0, 50.0])
    up, lo = eval_ul(c, z)
    for j in range(2):
        assert up[:, j] == pytest.approx((1, 1, 2 * PS_A.a - 1), abs=1e-15)
        assert lo[:, j] == pytest.approx((0, 0, 0), abs=1e-15)


def test_lower_weak_prey_vanishes_at_its_corner(ps_a_2):
    z2 = ps_a_2.corners["z2"]
    lower_v = ps_a_2.lower[1]
    assert lower_v.evaluate(np.array([z2]), side="left")[0][0] == pytest.approx(0, abs=1e-14)
    assert lower_v.evaluate(np.array([z2]), side="right")[0][0] == pytest.approx(0, abs=1e-14)


@pytest.mark.parametrize("case", CASES)
def test_profiles_continuous_at_corners(case, rng):
    p, s = sample_case(case, rng)
    c = build_ul(p, s, case)
    for prof in c.upper + c.lower:
        for bp in prof.breakpoints:
            zl = prof.evaluate(np.array([bp]), side="left")[0][0]
            zr = prof.evaluate(np.array([bp]), side="right")[0][0]
            assert zl == pytest.approx(zr, rel=1e-12, abs=1e-14)


def test_exact_derivatives_match_finite_differences(ps_a_2):
    z = np.linspace(-30, 10, 57) + 0.0123
    for prof in ps_a_2.upper + ps_a_2.lower:
        f, f1, f2, _ = prof.evaluate(z)
        h = 1e-5
        fp = prof.evaluate(z + h)[0]
        fm = prof.evaluate(z - h)[0]
        near = np.min(np.abs(z[:, None] - np.array(prof.breakpoints + (np.inf,))[None, :]), axis=1) < 2 * h
        ok = ~near
        assert np.allclose(f1[ok], ((fp - fm) / (2 * h))[ok], atol=1e-6)
        assert np.allclose(f2[ok], ((fp - 2 * f + fm) / h**2)[ok], atol=1e-3)


# ------------------------------------------------------------- verification


@pytest.mark.parametrize("s", [1.8, 2.0, 2.2, 2.6])
def test_ps_a_certified(s):
    c = build_ul(PS_A, s, "estar-super")
    rep = verify_ul(c, z_range=(-60, 20), n=10_000, tol=1e-10)
    assert rep.passed, rep.summary()
    assert rep.tail_residual <= 1e-6
    assert all(cc.ok for cc in rep.corners)
    for name in ("U1", "U2", "U3"):
        assert rep.inequalities[name].worst <= 1e-10
    for name in ("L1", "L2", "L3"):
        assert rep.inequalities[name].worst >= -1e-10


def test_presets_certified_in_every_case():
    runs = [
        (PS_A1, None, "estar-critical"),
        (PS_C, 1.1 * derive(PS_C).s_lower, "elow-super"),
        (PS_C1, None, "elow-critical"),
    ]
    for p, s, case in runs:
        rep = verify_ul(build_ul(p, s, case), tol=1e-10)
        assert rep.passed, rep.summary()


def test_sabotaged_lower_bound_is_detected():
    c = build_ul(PS_A, 2.0, "estar-super", q_scale=0.0)
    rep = verify_ul(c, z_range=(-60, 20))
    assert not rep.passed
    assert rep.inequalities["L2"].worst < 0
    assert not rep.inequalities["L2"].ok


def test_r1_variant_of_second_lower_inequality_fails_on_presets():
    runs = [
        (PS_A, 2.0, "estar-super"),
        (PS_A1, None, "estar-critical"),
        (PS_C, 1.1 * derive(PS_C).s_lower, "elow-super"),
        (PS_C1, None, "elow-critical"),
    ]
    for p, s, case in runs:
        c = build_ul(p, s, case)
        assert verify_ul(c).passed
        assert not verify_ul(c, l2_rate="r1").passed


@pytest.mark.parametrize("case", CASES)
def test_random_admissible_sets_are_certified(case):
    rng = np.random.default_rng(hash(case) % 2**32)
    for _ in range(100):
        p, s = sample_case(case, rng)
        c = build_ul(p, s, case)
        q = derive(p)
        # construction invariants
        for r in (c.root1, c.root2):
            assert abs(c.char_poly(r)) <= 1e-12 * max(1.0, c.s * r)
        assert 0 < c.ratio <= 1
        z = c.corners
        if case == "estar-super":
            assert z["z2"] < 0 <= z["z1"]
            d1, d3 = p.d1, p.d3
            assert c.root1 <= min(c.s / (2 * d1), c.s / (2 * d3)) + 1e-12
        elif case == "elow-super":
            assert z["z0"] < 0 <= z["z2"]
        elif case == "estar-critical":
            assert z["z2"] < -2 / c.root1
            assert -2 / c.root1 <= z["z1"] <= -1 / c.root1
        else:
            assert z["z0"] <= -2 / c.root1
            assert -2 / c.root1 <= z["z2"] <= -1 / c.root1
        cr = check_conditions(p, c.s)
        if case.startswith("estar"):
            assert q.beta_upper > 0 and cr.vr and (cr.vvvd0 if "critical" in case else cr.vd)
        else:
            assert q.beta_lower > 0 and cr.uur and (cr.uuud0 if "critical" in case else cr.uud)
        rep = verify_ul(c, tol=1e-10)
        assert rep.passed, f"{p} s={c.s}\n{rep.summary()}"


def test_default_grid_spans_corners(ps_a_2):
    rep = verify_ul(ps_a_2)
    assert rep.n_points >= 10_000
    pts = [z for z in ps_a_2.corner_points]
    assert rep.tail_z <= min(pts) - 50


def test_report_summary_and_csv(ps_a_2, tmp_path):
    path = tmp_path / "ver.csv"
    rep = verify_ul(ps_a_2, z_range=(-60, 20), n=2000, csv_path=path)
    lines = rep.summary().splitlines()
    assert [ln.split()[0] for ln in lines[1:7]] == list(INEQUALITIES)
    assert lines[-1] == "pass True"
    rows = path.read_text().splitlines()
    assert rows[0] == "z,U1,U2,U3,L1,L2,L3,order_margin"
    assert len(rows) > 1000


def test_verification_is_deterministic(ps_a_2, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    verify_ul(ps_a_2, z_range=(-60, 20), n=3000, csv_path=a)
    verify_ul(build_ul(PS_A, 2.0, "estar-super"), z_range=(-60, 20), n=3000, csv_path=b)
    assert a.read_bytes() == b.read_bytes()


# --------------------------------------------------------------- rectangles


def test_eps_terms_ps_a():
    terms = eps_terms(PS_A, 0.1)
    assert terms == pytest.approx((0.4, 0.1, 0.275590, 0.247059, 0.033333), abs=1e-6)
    assert eps_max(PS_A, 0.1) == pytest.approx(1 / 30, rel=1e-12)


def test_eps_max_vanishes_with_delta3():
    vals = [eps_max(PS_A, d) for d in (1e-2, 1e-4, 1e-6)]
    assert vals == pytest.approx([1e-2, 1e-4, 1e-6], rel=1e-12)


def test_eps_max_needs_the_predation_bound():
    with pytest.raises(HypothesisViolated) as exc:
        eps_max(PS_B)
    assert exc.value.condition == "a*gamma2>1"


def test_default_delta3():
    q = derive(PS_A)
    assert default_delta3(PS_A) == min(q.w_lowstar / 2, (PS_A.a * q.gamma2 - 1) / 2)


def test_rectangle_values_at_zero():
    rc = rectangle_signs(PS_A, 0.0, 0.03, 0.1)
    assert rc.alpha3 == pytest.approx(0.04, abs=1e-14)
    assert rc.omega2 == pytest.approx(-(0.03**2 + 0.02 * (0.1 - 0.03)), abs=1e-15)
    assert rc.omega2 == pytest.approx(-0.0023, abs=1e-15)


def test_rectangle_signs_on_theta_grid():
    for i in range(10):
        rc = rectangle_signs(PS_A, i / 10, 0.03, 0.1)
        assert rc.signs_ok
        assert abs(rc.alpha2 - rc.alpha2_expanded) <= 1e-12
        assert abs(rc.omega3 - rc.omega3_expanded) <= 1e-12
    rc = rectangle_signs(PS_A, 0.99, 0.03, 0.1)
    assert rc.signs_ok


def test_rectangle_limits_approach_the_semi_state():
    rc = rectangle_signs(PS_A, 1 - 1e-9, 0.03, 0.1)
    assert abs(rc.alpha3) < 1e-8 and abs(rc.omega2) < 1e-8


def test_rectangle_monotone_in_theta():
    theta = np.linspace(0, 0.999, 200)
    m2, M2, m3, M3 = rectangle_bounds(PS_A, theta, 0.03, 0.1)
    assert np.all(np.diff(m2) > 0) and np.all(np.diff(m3) > 0)
    assert np.all(np.diff(M2) < 0) and np.all(np.diff(M3) < 0)
    assert np.all(m2 > 0) and np.all(m3 > 0)


@pytest.mark.parametrize(
    "kwargs, name",
    [({"theta": 1.0}, "0<=theta<1"), ({"eps": 0.04}, "0<eps<eps_max"), ({"eps": 0.0}, "0<eps<eps_max")],
)
def test_rectangle_guards(kwargs, name):
    args = dict(theta=0.0, eps=0.03, delta3=0.1) | kwargs
    with pytest.raises(HypothesisViolated) as exc:
        rectangle_signs(PS_A, **args)
    assert exc.value.condition == name


# ---------------------------------------------------------------- Lyapunov


def test_phi_at_and_away_from_Ec(rng):
    Ec = np.array(derive(PS_B).Ec)
    assert lyapunov_phi(Ec, PS_B) == 0
    x = rng.uniform(0.05, 2, size=(3, 500))
    assert np.all(lyapunov_phi(x, PS_B) > 0)


def test_phi_by_direct_evaluation():
    uc, vc, wc = derive(PS_B).Ec
    p = PS_B
    g = lambda y: y - math.log(y) - 1
    expected = (
        p.r3 * p.a * uc / (p.b1 * p.r1) * g(1 / uc)
        + p.r3 * p.a * vc / (p.b2 * p.r2) * g(1 / vc)
        + wc * g(1 / wc)
    )
    assert lyapunov_phi((1.0, 1.0, 1.0), p) == pytest.approx(expected, rel=1e-14)


def test_phi_rejects_nonpositive_states():
    with pytest.raises(DomainError):
        lyapunov_phi((0.0, 0.5, 0.5), PS_B)


def test_lie_derivative_forms_agree_and_decrease(rng):
    x = rng.uniform(0.1, 1.5, size=(3, 1000))
    lie = lie_derivative_phi(x, PS_B)
    quad = lie_derivative_quadratic(x, PS_B)
    assert np.allclose(lie, quad, rtol=1e-10, atol=1e-14)
    assert np.all(lie <= 0)
    alpha = lie_decrease_rate(PS_B)
    assert alpha > 0
    Ec = np.array(derive(PS_B).Ec)[:, None]
    assert np.all(lie <= -alpha * np.sum((x - Ec) ** 2, axis=0) * (1 - 1e-12))
    small = np.abs(lie) < 1e-14
    if small.any():
        assert np.abs(x[:, small] - Ec).max() < 1e-6
    assert lie_derivative_phi(Ec[:, 0], PS_B) == pytest.approx(0, abs=1e-16)


def test_lie_derivative_matches_chain_rule(rng):
    x = rng.uniform(0.2, 1.2, 3)
    X = kinetic_rhs(x, PS_B)
    d = 1e-7
    fd = (lyapunov_phi(x + d * X, PS_B) - lyapunov_phi(x - d * X, PS_B)) / (2 * d)
    assert lie_derivative_phi(x, PS_B) == pytest.approx(fd, rel=1e-6)
    assert np.dot(lyapunov_gradient(x, PS_B), X) == pytest.approx(lie_derivative_phi(x, PS_B), rel=1e-14)


def test_phi_non_increasing_along_trajectories():
    starts = random_positive_starts(20, seed=3)
    chk = lyapunov_check(PS_B, starts, t_end=500.0, dt=0.05)
    assert chk.monotone and chk.max_lie <= 0


def test_random_starts_reach_Ec_with_a_longer_horizon():
    """The same starts that miss 1e-6 at t=5000 get there once slow modes decay."""
    Ec = np.array(derive(PS_B).Ec)[:, None]
    starts = random_positive_starts(100, seed=0)
    tr = integrate_kinetic(starts, PS_B, 25_000.0, dt=0.05, sample_every=10**9)
    assert np.abs(tr.terminal - Ec).max() <= 1e-6
