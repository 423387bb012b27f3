"""Parameters, closed-form equilibria and checks of the existence hypotheses.

The kinetic system is

    u' = r1 u (1 - u - k v - b1 w)
    v' = r2 v (1 - h u - v - b2 w)
    w' = r3 w (-1 + a u + a v - w)

with prey ``u`` (weak competitor), prey ``v`` (strong competitor) and
predator ``w``.  Two semi-coexistence states always exist:
``E_upper = (u*, 0, w*)`` and ``E_lower = (0, v_*, w_*)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

from .errors import InvalidParams

PARAM_KEYS = ("d1", "d2", "d3", "r1", "r2", "r3", "h", "k", "a", "b1", "b2")

# relative window inside which a speed counts as equal to a minimal speed
CRITICAL_RTOL = 1e-12


@dataclass(frozen=True)
class Params:
    d1: float
    d2: float
    d3: float
    r1: float
    r2: float
    r3: float
    h: float
    k: float
    a: float
    b1: float
    b2: float

    @property
    def d(self) -> tuple[float, float, float]:
        return (self.d1, self.d2, self.d3)

    @property
    def r(self) -> tuple[float, float, float]:
        return (self.r1, self.r2, self.r3)

    def replace(self, **changes) -> "Params":
        values = asdict(self)
        values.update(changes)
        return Params(**values)

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def validate(p: Params) -> None:
    """Raise :class:`InvalidParams` naming the first violated constraint."""
    for f in fields(p):
        value = getattr(p, f.name)
        if not math.isfinite(value) or value <= 0:
            raise InvalidParams(f"{f.name}>0")
    if not p.a > 1:
        raise InvalidParams("a>1")
    if not (p.h < 1 < p.k):
        raise InvalidParams("h<1<k")


@dataclass(frozen=True)
class DerivedQuantities:
    u_star: float
    w_star: float
    v_lowstar: float
    w_lowstar: float
    beta_upper: float
    beta_lower: float
    Delta: float
    Delta_u: float
    Delta_v: float
    Delta_w: float
    Ec: Optional[tuple[float, float, float]]
    s_upper: Optional[float]
    s_lower: Optional[float]
    gamma2: float

    @property
    def E_upper(self) -> tuple[float, float, float]:
        """The state ``(u*, 0, w*)`` where the strong prey is absent."""
        return (self.u_star, 0.0, self.w_star)

    @property
    def E_lower(self) -> tuple[float, float, float]:
        """The state ``(0, v_*, w_*)`` where the weak prey is absent."""
        return (0.0, self.v_lowstar, self.w_lowstar)


def derive(p: Params) -> DerivedQuantities:
    validate(p)
    a, h, k, b1, b2 = p.a, p.h, p.k, p.b1, p.b2

    u_star = (1 + b1) / (1 + a * b1)
    w_star = (a - 1) / (1 + a * b1)
    v_low = (1 + b2) / (1 + a * b2)
    w_low = (a - 1) / (1 + a * b2)

    beta_upper = (b1 * (a - h) - b2 * (a - 1) + (1 - h)) / (1 + a * b1)
    beta_lower = (-b1 * (a - 1) + b2 * (a - k) - (k - 1)) / (1 + a * b2)

    delta = 1 - h * k + a * b1 * (1 - h) - a * b2 * (k - 1)
    delta_u = -b1 * (a - 1) + b2 * (a - k) - (k - 1)
    delta_v = b1 * (a - h) - b2 * (a - 1) + (1 - h)
    delta_w = a * (2 - h - k) - (1 - h * k)

    ec = None
    if delta != 0:
        uc, vc, wc = delta_u / delta, delta_v / delta, delta_w / delta
        if uc > 0 and vc > 0 and wc > 0:
            ec = (uc, vc, wc)

    s_upper = 2 * math.sqrt(p.d2 * p.r2 * beta_upper) if beta_upper > 0 else None
    s_lower = 2 * math.sqrt(p.d1 * p.r1 * beta_lower) if beta_lower > 0 else None

    return DerivedQuantities(
        u_star=u_star,
        w_star=w_star,
        v_lowstar=v_low,
        w_lowstar=w_low,
        beta_upper=beta_upper,
        beta_lower=beta_lower,
        Delta=delta,
        Delta_u=delta_u,
        Delta_v=delta_v,
        Delta_w=delta_w,
        Ec=ec,
        s_upper=s_upper,
        s_lower=s_lower,
        gamma2=1 - h - b2 * (2 * a - 1),
    )


def _speed_regime(s: Optional[float], s_min: Optional[float]) -> Optional[str]:
    """Classify ``s`` against a minimal speed: "super", "critical" or None."""
    if s is None or s_min is None:
        return None
    if abs(s - s_min) <= CRITICAL_RTOL * s_min:
        return "critical"
    if s > s_min:
        return "super"
    return "sub"


@dataclass(frozen=True)
class ConditionReport:
    """One boolean per hypothesis plus the combined existence verdicts.

    ``uuud0`` uses ``beta_lower`` in the growth-rate inequality for the
    critical weak-alien case; ``uuud0_beta_upper`` evaluates the same
    inequality with ``beta_upper`` instead so both readings stay visible.
    """

    cond_1_2: bool
    positive: bool
    positive2: bool
    co_ex: bool
    ode_lyapu: bool
    vr: bool
    vd: bool
    vvvd0: bool
    hb2: bool
    uur: bool
    uud: bool
    uuud0: bool
    uuud0_beta_upper: bool
    thm_sc1_semi: bool
    thm_sc1_coexist: bool
    thm_cs2_applicable: bool
    thm_cs2_coexist: bool
    minimal_speed_defined: bool
    speed: Optional[float] = None
    notes: tuple[str, ...] = ()

    @property
    def thm_sc1_applicable(self) -> Optional[str]:
        if self.thm_sc1_semi:
            return "semi"
        if self.thm_sc1_coexist:
            return "coexist"
        return None

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["thm_sc1_applicable"] = self.thm_sc1_applicable
        return out


def check_conditions(p: Params, s: Optional[float] = None) -> ConditionReport:
    """Evaluate every named hypothesis exactly as an inequality.

    Without ``s`` the speed-dependent verdicts accept either the
    super-critical or the critical diffusion/rate condition.  With ``s``
    the regime (``s > s_min`` or ``s == s_min``) picks one; slower speeds
    make the existence verdicts false.
    """
    q = derive(p)
    a, h, k, b1, b2 = p.a, p.h, p.k, p.b1, p.b2
    bu, bl = q.beta_upper, q.beta_lower

    positive = b2 < (a - h) / (a - 1) * b1 + (1 - h) / (a - 1)
    positive2 = a > k and b2 > (a - 1) / (a - k) * b1 + (k - 1) / (a - k)
    co_ex = q.Ec is not None
    ode_lyapu = k * math.sqrt(b2 / b1) + h * math.sqrt(b1 / b2) < 2

    vr = p.r2 * bu >= p.r1 * (k + b1 * (2 * a - 1))
    vd = p.d2 >= max(p.d1, p.d3) and p.r2 * bu >= p.r3
    vvvd0 = (p.d3 / 2 < p.d1 == p.d2 <= p.d3) and p.r2 * (2 - p.d3 / p.d2) * bu >= p.r3
    hb2 = a > 1 / (1 - h) and b2 < (a * (1 - h) - 1) / (a * (2 * a - 1))

    uur = p.r1 * bl >= p.r2 * (h + b2 * (2 * a - 1))
    uud = p.d1 >= max(p.d2, p.d3) and p.r1 * bl >= p.r3
    diff_ok = p.d3 / 2 < p.d1 == p.d2 <= p.d3
    uuud0 = diff_ok and p.r1 * (2 - p.d3 / p.d1) * bl >= p.r3
    uuud0_beta_upper = diff_ok and p.r1 * (2 - p.d3 / p.d1) * bu >= p.r3

    regime_up = _speed_regime(s, q.s_upper)
    if s is None:
        speed_up = vd or vvvd0
    else:
        speed_up = (regime_up == "super" and vd) or (regime_up == "critical" and vvvd0)
    regime_low = _speed_regime(s, q.s_lower)
    if s is None:
        speed_low = uud or uuud0
    else:
        speed_low = (regime_low == "super" and uud) or (regime_low == "critical" and uuud0)

    sc1_base = positive and vr and speed_up
    cs2 = positive2 and uur and speed_low

    notes = []
    if uuud0 != uuud0_beta_upper:
        notes.append(
            "critical weak-alien rate condition differs between beta_lower "
            f"(={uuud0}) and the beta_upper reading (={uuud0_beta_upper})"
        )

    return ConditionReport(
        cond_1_2=p.a > 1 and p.h < 1 < p.k,
        positive=positive,
        positive2=positive2,
        co_ex=co_ex,
        ode_lyapu=ode_lyapu,
        vr=vr,
        vd=vd,
        vvvd0=vvvd0,
        hb2=hb2,
        uur=uur,
        uud=uud,
        uuud0=uuud0,
        uuud0_beta_upper=uuud0_beta_upper,
        thm_sc1_semi=sc1_base and bl < 0 and hb2,
        thm_sc1_coexist=sc1_base and co_ex and ode_lyapu,
        thm_cs2_applicable=cs2,
        thm_cs2_coexist=cs2 and co_ex and ode_lyapu,
        minimal_speed_defined=bu > 0 or bl > 0,
        speed=s,
        notes=tuple(notes),
    )


def condition_margins(p: Params) -> dict[str, float]:
    """Slack of each inequality; positive means satisfied strictly.

    Conjunctions report the smallest slack of their parts.  Equality
    constraints (``d1 == d2``) contribute ``-|d1 - d2|``.
    """
    q = derive(p)
    a, h, k, b1, b2 = p.a, p.h, p.k, p.b1, p.b2
    bu, bl = q.beta_upper, q.beta_lower
    eq12 = -abs(p.d1 - p.d2)
    m = {
        "a>1": a - 1,
        "h<1": 1 - h,
        "k>1": k - 1,
        "positive": (a - h) / (a - 1) * b1 + (1 - h) / (a - 1) - b2,
        "positive2": min(a - k, b2 - (a - 1) / (a - k) * b1 - (k - 1) / (a - k))
        if a != k
        else 0.0,
        "ode_lyapu": 2 - (k * math.sqrt(b2 / b1) + h * math.sqrt(b1 / b2)),
        "vr": p.r2 * bu - p.r1 * (k + b1 * (2 * a - 1)),
        "vd": min(p.d2 - max(p.d1, p.d3), p.r2 * bu - p.r3),
        "vvvd0": min(p.d1 - p.d3 / 2, eq12, p.d3 - p.d2, p.r2 * (2 - p.d3 / p.d2) * bu - p.r3),
        "hb2": min(a - 1 / (1 - h), (a * (1 - h) - 1) / (a * (2 * a - 1)) - b2),
        "uur": p.r1 * bl - p.r2 * (h + b2 * (2 * a - 1)),
        "uud": min(p.d1 - max(p.d2, p.d3), p.r1 * bl - p.r3),
        "uuud0": min(p.d1 - p.d3 / 2, eq12, p.d3 - p.d1, p.r1 * (2 - p.d3 / p.d1) * bl - p.r3),
    }
    if q.Delta != 0:
        m["co_ex"] = min(q.Delta_u / q.Delta, q.Delta_v / q.Delta, q.Delta_w / q.Delta)
    else:
        m["co_ex"] = -math.inf
    return m


PRESETS: dict[str, Params] = {
    # strong alien, semi-coexistence tail
    "PS-A": Params(0.5, 1.0, 0.5, 0.1, 1.0, 0.5, h=0.5, k=1.5, a=3.0, b1=1.0, b2=0.02),
    # PS-A couplings with d1 = d2 for the critical-speed construction
    "PS-A'": Params(1.0, 1.0, 1.5, 0.1, 1.0, 0.2, h=0.5, k=1.5, a=3.0, b1=1.0, b2=0.02),
    # strong alien, coexistence tail
    "PS-B": Params(0.5, 1.0, 0.5, 0.01, 1.0, 0.05, h=0.5, k=1.1, a=3.0, b1=1.0, b2=1.3),
    # weak alien, coexistence tail
    "PS-C": Params(1.0, 0.5, 0.5, 0.1, 0.001, 0.005, h=0.5, k=1.1, a=3.0, b1=1.0, b2=1.3),
    # PS-C couplings with d1 = d2 for the critical weak-alien construction
    "PS-C'": Params(1.0, 1.0, 1.5, 0.1, 0.001, 0.003, h=0.5, k=1.1, a=3.0, b1=1.0, b2=1.3),
}
