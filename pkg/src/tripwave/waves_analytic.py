"""Explicit upper/lower wave profiles, their pointwise certification,
the 2-d contracting rectangles and the coexistence Lyapunov function.

Profiles are piecewise sums of terms ``m(z) * exp(rate * z)`` with
``m`` one of ``c``, ``c * (-z)`` or ``c * sqrt(-z)``.  Derivatives are
taken analytically piece by piece, never by finite differences.

Every differential inequality is checked twice: on the raw values and
after dividing by ``exp(kappa * z)``, ``kappa`` being the smallest rate in
the differentiated piece.  The rescaled check keeps its meaning far in the
left tail, where the raw values underflow to zero.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, HypothesisViolated, NoCoexistenceState, RootBracketFailure
from .model import CRITICAL_RTOL, DerivedQuantities, Params, check_conditions, derive

EPS = np.finfo(float).eps


# --------------------------------------------------------------------------
# piecewise profiles


@dataclass(frozen=True)
class Term:
    kind: str  # "exp", "lin" or "sqrt"
    coef: float
    rate: float

    def mantissa(self, z):
        c = self.coef
        zero = np.zeros_like(z)
        if self.kind == "exp":
            return c + zero, zero, zero
        y = -z
        if self.kind == "lin":
            return c * y, -c + zero, zero
        if self.kind == "sqrt":
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.sqrt(y)
                return c * r, -0.5 * c / r, -0.25 * c / (r * y)
        raise ValueError(self.kind)

    def evaluate(self, z, shift, magnitudes: bool = False):
        """``(f, f', f'') * exp(-shift * z)``.

        With ``magnitudes`` the sums of absolute summands are appended,
        for bounding rounding error after cancellation between terms.
        """
        m, m1, m2 = self.mantissa(z)
        k = self.rate
        with np.errstate(over="ignore", invalid="ignore"):
            e = np.exp((k - shift) * z)
        out = (m * e, (m1 + k * m) * e, (m2 + 2 * k * m1 + k * k * m) * e)
        if not magnitudes:
            return out
        am, am1, am2 = np.abs(m), np.abs(m1), np.abs(m2)
        ak = abs(k)
        return out + (am * e, (am1 + ak * am) * e, (am2 + 2 * ak * am1 + k * k * am) * e)


@dataclass(frozen=True)
class Profile:
    """Continuous piecewise profile; ``pieces[i]`` lives between breakpoints."""

    breakpoints: tuple[float, ...]
    pieces: tuple[tuple[Term, ...], ...]

    def __post_init__(self):
        if len(self.pieces) != len(self.breakpoints) + 1:
            raise ValueError("need one more piece than breakpoints")

    def piece_index(self, z, side="right"):
        return np.searchsorted(np.asarray(self.breakpoints, dtype=float), z, side=side)

    def min_rate(self, i: int) -> float:
        rates = [t.rate for t in self.pieces[i]]
        return min(rates) if rates else 0.0

    def evaluate(self, z, scaled: bool = False, side: str = "right", magnitudes: bool = False):
        """Value and first two derivatives, optionally rescaled.

        Returns ``(f, f', f'', shift)`` where ``shift`` is the exponent
        factored out at each point (all zeros unless ``scaled``).  With
        ``magnitudes`` three arrays of summed absolute contributions follow.
        """
        z = np.atleast_1d(np.asarray(z, dtype=float))
        idx = self.piece_index(z, side)
        acc = [np.zeros_like(z) for _ in range(6 if magnitudes else 3)]
        shift = np.zeros_like(z)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if not mask.any():
                continue
            zi = z[mask]
            sh = self.min_rate(i) if scaled else 0.0
            shift[mask] = sh
            for term in piece:
                for a, part in zip(acc, term.evaluate(zi, sh, magnitudes)):
                    a[mask] += part
        return (*acc[:3], shift, *acc[3:])

    def __call__(self, z):
        return self.evaluate(z)[0]


def _p(*terms: Term) -> tuple[Term, ...]:
    return tuple(terms)


def _exp(c, rate=0.0):
    return Term("exp", float(c), float(rate))


def _lin(c, rate):
    return Term("lin", float(c), float(rate))


def _sqrt(c, rate):
    return Term("sqrt", float(c), float(rate))


def _cut(bp: float, left: tuple[Term, ...], right: tuple[Term, ...]) -> Profile:
    if math.isinf(bp):
        return Profile((), (left if bp > 0 else right,))
    return Profile((float(bp),), (left, right))


# --------------------------------------------------------------------------
# constructions


class ULCase(str, enum.Enum):
    ESTAR_SUPER = "estar-super"
    ESTAR_CRITICAL = "estar-critical"
    ELOW_SUPER = "elow-super"
    ELOW_CRITICAL = "elow-critical"

    @property
    def invades_estar(self) -> bool:
        return self in (ULCase.ESTAR_SUPER, ULCase.ESTAR_CRITICAL)

    @property
    def critical(self) -> bool:
        return self in (ULCase.ESTAR_CRITICAL, ULCase.ELOW_CRITICAL)


@dataclass(frozen=True)
class ULConstruction:
    """One upper/lower pair with all its constants.

    ``root1``/``root2`` are the roots of ``d2 x^2 - s x + r2 beta_upper``
    when invading ``E_upper`` and of ``d1 x^2 - s x + r1 beta_lower`` when
    invading ``E_lower``.  ``ratio`` and ``amplitude`` are the matching
    ``R``/``S`` and ``A``/``B``; ``p_const`` is ``p1`` or ``p2``.
    """

    case: ULCase
    s: float
    params: Params
    derived: DerivedQuantities
    root1: float
    root2: float
    ratio: float
    amplitude: float
    p_const: float
    mu: Optional[float]
    q: float
    q_bound: float
    Lstar: Optional[float]
    Mconst: Optional[float]
    corners: dict
    upper: tuple[Profile, Profile, Profile]
    lower: tuple[Profile, Profile, Profile]

    @property
    def unstable_tail(self) -> tuple[float, float, float]:
        q = self.derived
        return q.E_upper if self.case.invades_estar else q.E_lower

    @property
    def corner_points(self) -> list[float]:
        pts = set()
        for prof in self.upper + self.lower:
            pts.update(prof.breakpoints)
        return sorted(pts)

    def char_poly(self, x):
        """``G`` (or ``H``) evaluated at ``x``."""
        p, q = self.params, self.derived
        if self.case.invades_estar:
            return p.d2 * x * x - self.s * x + p.r2 * q.beta_upper
        return p.d1 * x * x - self.s * x + p.r1 * q.beta_lower


def _require(ok: bool, name: str):
    if not ok:
        raise HypothesisViolated(name)


def _critical_corner(pc: float, L: float, rate: float) -> float:
    """Solve ``pc * L * (-z) * exp(rate z) = 1`` on ``[-2/rate, -1/rate]``."""
    f = lambda z: pc * L * (-z) * math.exp(rate * z) - 1.0
    lo, hi = -2.0 / rate, -1.0 / rate
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if flo * fhi > 0:
        raise RootBracketFailure(f"no sign change on [{lo:g}, {hi:g}]")
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * EPS, maxiter=200)


def build_ul(
    p: Params,
    s: Optional[float],
    case,
    q_scale: float = 2.0,
) -> ULConstruction:
    """Construct the upper/lower pair for ``case`` at speed ``s``.

    Free constants are pinned mid-range: ``p = (max(ratio, floor) + 1) / 2``
    with ``floor = 2/e`` in critical cases, ``mu`` halfway between 1 and
    ``min(2, root2/root1)``, and ``q = q_scale * q_bound``.  For critical
    cases ``s`` may be None to mean the minimal speed.
    """
    case = ULCase(case)
    q = derive(p)
    a, h, k, b1, b2 = p.a, p.h, p.k, p.b1, p.b2
    cr = check_conditions(p)

    if case.invades_estar:
        _require(q.beta_upper > 0, "beta_upper>0")
        s_min = q.s_upper
        _require(cr.vr, "vr")
    else:
        _require(q.beta_lower > 0, "beta_lower>0")
        s_min = q.s_lower
        _require(cr.uur, "uur")
    if case.critical:
        if s is None:
            s = s_min
        _require(abs(s - s_min) <= CRITICAL_RTOL * s_min, "s=s*" if case.invades_estar else "s=s_*")
        _require(cr.vvvd0 if case.invades_estar else cr.uuud0, "vvvd0" if case.invades_estar else "uuud0")
    else:
        _require(s is not None and s > s_min, "s>s*" if case.invades_estar else "s>s_*")
        _require(cr.vd if case.invades_estar else cr.uud, "vd" if case.invades_estar else "uud")

    if case.invades_estar:
        d_main, r_main, beta = p.d2, p.r2, q.beta_upper
        d_other, r_other, coupling = p.d1, p.r1, k + b1 * (2 * a - 1)
        amp = 2 * a - 1 - q.w_star
    else:
        d_main, r_main, beta = p.d1, p.r1, q.beta_lower
        d_other, r_other, coupling = p.d2, p.r2, h + b2 * (2 * a - 1)
        amp = 2 * a - 1 - q.w_lowstar

    if case.critical:
        lam1 = lam2 = s / (2 * d_main)
    else:
        disc = math.sqrt(s * s - 4 * d_main * r_main * beta)
        lam1 = (s - disc) / (2 * d_main)
        lam2 = (s + disc) / (2 * d_main)
    ratio = r_other * coupling / (-(d_other * lam1 * lam1 - s * lam1))
    floor = 2 / math.e if case.critical else 0.0
    pc = (max(ratio, floor) + 1) / 2

    if case.critical:
        L = lam1 * math.e**2 / 2
        M = (7 / (2 * lam1 * math.e)) ** 3.5
        if case.invades_estar:
            coupling_low = h * b1 * q.w_star + 1 + b2 * amp
        else:
            coupling_low = 1 + k * b2 * q.w_lowstar + b1 * amp
        q_bound = max(4 * r_main * L * L * M * coupling_low / d_main, L * math.sqrt(2 / lam1))
        qq = q_scale * q_bound
        zc = -2 / lam1
        z_cut = _critical_corner(pc, L, lam1)
        z_sqrt = -((qq / L) ** 2)
        mu = None
    else:
        L = M = None
        mu = (1 + min(2.0, lam2 / lam1)) / 2
        g_mu = d_main * (mu * lam1) ** 2 - s * mu * lam1 + r_main * beta
        if case.invades_estar:
            coupling_low = h * b1 * q.w_star + 1 + b2 * amp
        else:
            coupling_low = 1 + k * b2 * q.w_lowstar + b1 * amp
        q_bound = max(1.0, r_main * coupling_low / (-g_mu))
        qq = q_scale * q_bound
        z_cut = -math.log(pc) / lam1
        z_exp = -math.log(qq) / ((mu - 1) * lam1) if qq > 0 else math.inf

    lam = lam1
    zero = _p()
    if case == ULCase.ESTAR_SUPER:
        us, ws = q.u_star, q.w_star
        upper = (
            _cut(0.0, _p(_exp(us), _exp(b1 * ws, lam)), _p(_exp(1))),
            _cut(0.0, _p(_exp(1, lam)), _p(_exp(1))),
            _cut(0.0, _p(_exp(ws), _exp(amp, lam)), _p(_exp(2 * a - 1))),
        )
        lower = (
            _cut(z_cut, _p(_exp(us), _exp(-us * pc, lam)), zero),
            _cut(z_exp, _p(_exp(1, lam), _exp(-qq, mu * lam)), zero),
            _cut(0.0, _p(_exp(ws), _exp(-ws, lam)), zero),
        )
        corners = {"z1": z_cut, "z2": z_exp, "zc": 0.0}
    elif case == ULCase.ESTAR_CRITICAL:
        us, ws = q.u_star, q.w_star
        upper = (
            _cut(zc, _p(_exp(us), _lin(L * b1 * ws, lam)), _p(_exp(1))),
            _cut(zc, _p(_lin(L, lam)), _p(_exp(1))),
            _cut(zc, _p(_exp(ws), _lin(L * amp, lam)), _p(_exp(2 * a - 1))),
        )
        lower = (
            _cut(z_cut, _p(_exp(us), _lin(-us * pc * L, lam)), zero),
            _cut(z_sqrt, _p(_lin(L, lam), _sqrt(-qq, lam)), zero),
            _cut(zc, _p(_exp(ws), _lin(-ws * L, lam)), zero),
        )
        corners = {"z1": z_cut, "z2": z_sqrt, "zc": zc}
    elif case == ULCase.ELOW_SUPER:
        vs, ws = q.v_lowstar, q.w_lowstar
        upper = (
            _cut(0.0, _p(_exp(1, lam)), _p(_exp(1))),
            _cut(0.0, _p(_exp(vs), _exp(b2 * ws, lam)), _p(_exp(1))),
            _cut(0.0, _p(_exp(ws), _exp(amp, lam)), _p(_exp(2 * a - 1))),
        )
        lower = (
            _cut(z_exp, _p(_exp(1, lam), _exp(-qq, mu * lam)), zero),
            _cut(z_cut, _p(_exp(vs), _exp(-vs * pc, lam)), zero),
            _cut(0.0, _p(_exp(ws), _exp(-ws, lam)), zero),
        )
        corners = {"z0": z_exp, "z2": z_cut, "zc": 0.0}
    else:
        vs, ws = q.v_lowstar, q.w_lowstar
        upper = (
            _cut(zc, _p(_lin(L, lam)), _p(_exp(1))),
            _cut(zc, _p(_exp(vs), _lin(L * b2 * ws, lam)), _p(_exp(1))),
            _cut(zc, _p(_exp(ws), _lin(L * amp, lam)), _p(_exp(2 * a - 1))),
        )
        lower = (
            _cut(z_sqrt, _p(_lin(L, lam), _sqrt(-qq, lam)), zero),
            _cut(z_cut, _p(_exp(vs), _lin(-vs * pc * L, lam)), zero),
            _cut(zc, _p(_exp(ws), _lin(-ws * L, lam)), zero),
        )
        corners = {"z0": z_sqrt, "z2": z_cut, "zc": zc}

    return ULConstruction(
        case=case,
        s=float(s),
        params=p,
        derived=q,
        root1=lam1,
        root2=lam2,
        ratio=ratio,
        amplitude=amp,
        p_const=pc,
        mu=mu,
        q=qq,
        q_bound=q_bound,
        Lstar=L,
        Mconst=M,
        corners=corners,
        upper=upper,
        lower=lower,
    )


def eval_ul(c: ULConstruction, z) -> tuple[np.ndarray, np.ndarray]:
    """Upper and lower triples at ``z``, each of shape ``(3, len(z))``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    up = np.array([prof(z) for prof in c.upper])
    lo = np.array([prof(z) for prof in c.lower])
    return up, lo


# --------------------------------------------------------------------------
# verification

INEQUALITIES = ("U1", "U2", "U3", "L1", "L2", "L3")
# rounding allowance, in units of the summed term magnitudes, for rescaled checks
ROUNDING_RTOL = 64 * EPS


@dataclass
class InequalityResult:
    name: str
    worst: float
    worst_z: float
    worst_scaled: float
    worst_scaled_z: float
    ok: bool


@dataclass
class CornerCheck:
    z: float
    profile: str
    left_value: float
    right_value: float
    left_slope: float
    right_slope: float
    ok: bool


@dataclass
class VerificationReport:
    case: ULCase
    s: float
    tol: float
    inequalities: dict
    order_margin: float
    order_margin_z: float
    min_lower: float
    corners: list
    tail_residual: float
    tail_z: float
    tail_tol: float
    n_points: int
    l2_rate: str
    passed: bool
    notes: list = field(default_factory=list)

    def summary(self) -> str:
        lines = [f"# case={self.case.value} s={self.s:.12g} tol={self.tol:g} points={self.n_points}"]
        for name in INEQUALITIES:
            r = self.inequalities[name]
            lines.append(f"{name} {r.worst:.6e} {r.worst_z:.6f}")
        lines.append(f"order_margin {self.order_margin:.6e} {self.order_margin_z:.6f}")
        bad = [c for c in self.corners if not c.ok]
        lines.append(f"corner_checks {len(self.corners) - len(bad)}/{len(self.corners)}")
        lines.append(f"tail_residual {self.tail_residual:.6e} {self.tail_z:.6f}")
        lines.append(f"pass {self.passed}")
        return "\n".join(lines)


def _active_limit(c: ULConstruction) -> float:
    """Leftmost z at which exp(root1 * z) is still representable."""
    return -700.0 / c.root1


def default_grid(c: ULConstruction, n: int = 10_000, exclusion: float = 1e-8) -> np.ndarray:
    """Uniform grid over the non-underflowing corners plus probes at every corner.

    The uniform part spans ``[leftmost - 50, rightmost + 20]`` over the
    corners that are not buried in exponential underflow, extended left
    until ``exp(root1 * z) < 1e-13``.  Each corner additionally gets 40
    log-spaced probes on either side, so far-away corners are still
    examined by the rescaled check.
    """
    pts = c.corner_points
    active = [z for z in pts if z > _active_limit(c)] or [0.0]
    lo = min(min(active) - 50.0, -30.0 / c.root1)
    hi = max(active) + 20.0
    parts = [np.linspace(lo, hi, n)]
    for z0 in pts:
        scale = max(1.0, abs(z0))
        offs = np.logspace(math.log10(10 * exclusion), math.log10(scale), 40)
        parts += [z0 - offs, z0 + offs]
    return np.unique(np.concatenate(parts))


def _inequality_values(c: ULConstruction, z: np.ndarray, scaled: bool, l2_rate: str):
    """Values of U1..L3 and a magnitude bound for rounding analysis."""
    p = c.params
    s = c.s
    up = [prof.evaluate(z) for prof in c.upper]
    lo = [prof.evaluate(z) for prof in c.lower]
    U = [v[0] for v in up]
    Lw = [v[0] for v in lo]
    d = p.d
    r = list(p.r)
    a, h, k, b1, b2 = p.a, p.h, p.k, p.b1, p.b2

    brackets = {
        "U1": ((1, -U[0], -k * Lw[1], -b1 * Lw[2]), 0, c.upper[0], r[0]),
        "U2": ((1, -h * Lw[0], -U[1], -b2 * Lw[2]), 1, c.upper[1], r[1]),
        "U3": ((-1, a * U[0], a * U[1], -U[2]), 2, c.upper[2], r[2]),
        "L1": ((1, -Lw[0], -k * U[1], -b1 * U[2]), 0, c.lower[0], r[0]),
        "L2": ((1, -h * U[0], -Lw[1], -b2 * U[2]), 1, c.lower[1], r[1] if l2_rate == "r2" else r[0]),
        "L3": ((-1, a * Lw[0], a * Lw[1], -Lw[2]), 2, c.lower[2], r[2]),
    }
    out = {}
    for name, (parts, i, prof, rate) in brackets.items():
        f, f1, f2, _, af, af1, af2 = prof.evaluate(z, scaled=scaled, magnitudes=True)
        bracket = sum(parts)
        bracket_mag = sum(np.abs(x) for x in parts)
        value = d[i] * f2 - s * f1 + rate * f * bracket
        mag = d[i] * af2 + s * af1 + rate * af * bracket_mag
        out[name] = (value, mag)
    return out


def verify_ul(
    c: ULConstruction,
    grid: Optional[Sequence[float]] = None,
    tol: float = 1e-10,
    exclusion: float = 1e-8,
    tail_tol: float = 1e-6,
    n: int = 10_000,
    z_range: Optional[tuple[float, float]] = None,
    l2_rate: str = "r2",
    csv_path=None,
) -> VerificationReport:
    """Check every defining inequality, the ordering, corner slopes and tail.

    ``grid`` overrides the sampling; ``z_range`` asks for ``n`` uniform
    points on that interval.  Points within ``exclusion`` of a corner are
    dropped.  ``l2_rate="r1"`` evaluates the second lower inequality with
    the weak prey's growth rate instead of ``r2``.
    """
    if grid is not None:
        z = np.asarray(grid, dtype=float)
    elif z_range is not None:
        z = np.linspace(z_range[0], z_range[1], n)
    else:
        z = default_grid(c, n, exclusion)
    corners = np.array(c.corner_points)
    if corners.size:
        dist = np.min(np.abs(z[:, None] - corners[None, :]), axis=1)
        z = z[dist > exclusion]

    raw = _inequality_values(c, z, False, l2_rate)
    scl = _inequality_values(c, z, True, l2_rate)
    results = {}
    passed = True
    for name in INEQUALITIES:
        sign = 1.0 if name.startswith("U") else -1.0  # violation when sign*value > 0
        v, _ = raw[name]
        vs, mag = scl[name]
        viol = sign * v
        viol_s = sign * vs - ROUNDING_RTOL * mag
        i = int(np.argmax(viol))
        j = int(np.argmax(viol_s))
        ok = bool(viol[i] <= tol and viol_s[j] <= tol)
        passed &= ok
        results[name] = InequalityResult(name, float(v[i]), float(z[i]), float(vs[j]), float(z[j]), ok)

    all_z = np.unique(np.concatenate([z, corners])) if corners.size else z
    up, lo = eval_ul(c, all_z)
    margin = np.min(up - lo, axis=0)
    im = int(np.argmin(margin))
    order_ok = bool(margin[im] >= -tol)
    min_lower = float(lo.min())
    passed &= order_ok and min_lower >= -tol

    corner_checks = []
    for z0 in c.corner_points:
        for label, prof, is_upper in (
            [(f"upper{i + 1}", pr, True) for i, pr in enumerate(c.upper)]
            + [(f"lower{i + 1}", pr, False) for i, pr in enumerate(c.lower)]
        ):
            fl, dl, _, _ = prof.evaluate([z0], side="left")
            fr, dr, _, _ = prof.evaluate([z0], side="right")
            fl, dl, fr, dr = float(fl[0]), float(dl[0]), float(fr[0]), float(dr[0])
            cont = abs(fl - fr) <= 1e-9 * max(1.0, abs(fl), abs(fr))
            slack = 1e-12 * max(1.0, abs(dl), abs(dr))
            slope_ok = dr <= dl + slack if is_upper else dl <= dr + slack
            ok = bool(cont and slope_ok)
            passed &= ok
            corner_checks.append(CornerCheck(z0, label, fl, fr, dl, dr, ok))

    z_tail = float(z.min())
    up_t, lo_t = eval_ul(c, [z_tail])
    target = np.array(c.unstable_tail)[:, None]
    tail = float(max(np.abs(up_t - target).max(), np.abs(lo_t - target).max()))
    passed &= tail <= tail_tol

    notes = []
    if l2_rate == "r2":
        notes.append("L2 uses r2, the weak prey's own growth rate; l2_rate='r1' checks the r1 variant")

    if csv_path is not None:
        write_verification_csv(csv_path, z, {k: raw[k][0] for k in INEQUALITIES}, c)

    return VerificationReport(
        case=c.case,
        s=c.s,
        tol=tol,
        inequalities=results,
        order_margin=float(margin[im]),
        order_margin_z=float(all_z[im]),
        min_lower=min_lower,
        corners=corner_checks,
        tail_residual=tail,
        tail_z=z_tail,
        tail_tol=tail_tol,
        n_points=int(z.size),
        l2_rate=l2_rate,
        passed=bool(passed),
        notes=notes,
    )


def write_verification_csv(path, z, values: dict, c: ULConstruction) -> None:
    up, lo = eval_ul(c, z)
    margin = np.min(up - lo, axis=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z", *INEQUALITIES, "order_margin"])
        for i in range(len(z)):
            w.writerow([f"{z[i]:.15g}"] + [f"{values[k][i]:.15g}" for k in INEQUALITIES] + [f"{margin[i]:.15g}"])


# --------------------------------------------------------------------------
# contracting rectangles


def default_delta3(p: Params) -> float:
    """``min(w_*/2, (a*gamma2 - 1)/2)``; the liminf of the wave's predator
    component, which also enters the definition, is not available here."""
    q = derive(p)
    return min(q.w_lowstar / 2, (p.a * q.gamma2 - 1) / 2)


def eps_terms(p: Params, delta3: Optional[float] = None) -> tuple[float, ...]:
    q = derive(p)
    _require(q.beta_upper > 0, "beta_upper>0")
    g2 = q.gamma2
    _require(p.a * g2 - 1 > 0, "a*gamma2>1")
    if delta3 is None:
        delta3 = default_delta3(p)
    _require(delta3 > 0, "delta3>0")
    a, h, k, b1, b2 = p.a, p.h, p.k, p.b1, p.b2
    return (
        g2,
        delta3,
        (h * k * g2 + h * b1 * delta3) / (h * k + h * b1 + b2),
        (a * k * g2 + a * b1 * delta3) / (a * k + a * b1 + 1),
        (a * g2 - delta3 - 1) / a,
    )


def eps_max(p: Params, delta3: Optional[float] = None) -> float:
    """Upper limit for the rectangle inflation ``eps``."""
    return min(eps_terms(p, delta3))


@dataclass(frozen=True)
class RectangleCheck:
    theta: float
    eps: float
    delta3: float
    m2: float
    M2: float
    m3: float
    M3: float
    M1theta: float
    alpha2: float
    omega2: float
    alpha3: float
    omega3: float
    alpha2_expanded: float
    omega3_expanded: float

    @property
    def signs_ok(self) -> bool:
        return self.alpha2 > 0 and self.omega2 < 0 and self.alpha3 > 0 and self.omega3 < 0


def rectangle_bounds(p: Params, theta, eps: float, delta3: float):
    q = derive(p)
    t = np.asarray(theta, dtype=float)
    m2 = (1 - t) * (q.gamma2 - eps) + t * q.v_lowstar
    M2 = (1 - t) * (1 + eps * eps) + t * q.v_lowstar
    m3 = (1 - t) * (delta3 - eps) + t * q.w_lowstar
    M3 = (1 - t) * (2 * p.a - 1 + eps) + t * q.w_lowstar
    return m2, M2, m3, M3


def rectangle_signs(p: Params, theta: float, eps: float, delta3: Optional[float] = None) -> RectangleCheck:
    """Sign quantities on the face of the rectangle ``Q(theta)``.

    ``alpha2_expanded``/``omega3_expanded`` are the same quantities rewritten
    through the equilibrium identities; they serve as an algebra cross-check.
    """
    q = derive(p)
    _require(q.beta_upper > 0, "beta_upper>0")
    _require(q.beta_lower < 0, "beta_lower<0")
    _require(check_conditions(p).hb2, "hb2")
    if delta3 is None:
        delta3 = default_delta3(p)
    _require(delta3 > 0, "delta3>0")
    emax = eps_max(p, delta3)
    _require(0 < eps < emax, "0<eps<eps_max")
    _require(0 <= theta < 1, "0<=theta<1")

    a, h, k, b1, b2 = p.a, p.h, p.k, p.b1, p.b2
    g2, bl = q.gamma2, q.beta_lower
    m2, M2, m3, M3 = (float(x) for x in rectangle_bounds(p, theta, eps, delta3))
    M1 = max(0.0, 1 - k * m2 - b1 * m3)
    alpha2 = 1 - h * M1 - m2 - b2 * M3
    omega2 = 1 - M2 - b2 * m3
    alpha3 = -1 + a * m2 - m3
    omega3 = -1 + a * M1 + a * M2 - M3

    t = theta
    if M1 > 0:
        a2x = (1 - t) * ((h * k * g2 + h * b1 * delta3) - eps * (-1 + h * k + h * b1 + b2)) - t * h * bl
        o3x = -(1 - t) * ((a * k * g2 + a * b1 * delta3) - eps * (a * k + a * b1 - 1 + a * eps)) + a * t * bl
    else:
        a2x = (1 - t) * (h + (1 - b2) * eps)
        o3x = -(1 - t) * (a + eps - a * eps * eps)
    return RectangleCheck(
        theta=float(theta),
        eps=eps,
        delta3=delta3,
        m2=m2,
        M2=M2,
        m3=m3,
        M3=M3,
        M1theta=M1,
        alpha2=alpha2,
        omega2=omega2,
        alpha3=alpha3,
        omega3=omega3,
        alpha2_expanded=a2x,
        omega3_expanded=o3x,
    )


# --------------------------------------------------------------------------
# Lyapunov function for the coexistence state


def _ec(p: Params):
    q = derive(p)
    if q.Ec is None:
        raise NoCoexistenceState("no positive coexistence state")
    return q.Ec


def _positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("Lyapunov function needs strictly positive densities")
    return x


def _g(y):
    return y - np.log(y) - 1


def lyapunov_phi(x, p: Params):
    uc, vc, wc = _ec(p)
    u, v, w = _positive(x)
    c1 = p.r3 * p.a * uc / (p.b1 * p.r1)
    c2 = p.r3 * p.a * vc / (p.b2 * p.r2)
    return c1 * _g(u / uc) + c2 * _g(v / vc) + wc * _g(w / wc)


def lyapunov_gradient(x, p: Params) -> np.ndarray:
    uc, vc, wc = _ec(p)
    u, v, w = _positive(x)
    return np.stack(
        [
            p.r3 * p.a / (p.b1 * p.r1) * (1 - uc / u),
            p.r3 * p.a / (p.b2 * p.r2) * (1 - vc / v),
            1 - wc / w,
        ]
    )


def lie_derivative_phi(x, p: Params):
    """Gradient of the Lyapunov function dotted with the kinetic field."""
    from .equilibria import kinetic_rhs

    grad = lyapunov_gradient(x, p)
    return np.sum(grad * kinetic_rhs(x, p), axis=0)


def lie_derivative_quadratic(x, p: Params):
    """The same derivative written as a quadratic form in ``x - Ec``."""
    uc, vc, wc = _ec(p)
    u, v, w = _positive(x)
    du, dv, dw = u - uc, v - vc, w - wc
    r3a = p.r3 * p.a
    return (
        -r3a / p.b1 * du**2
        - r3a / p.b2 * dv**2
        - p.r3 * dw**2
        - (r3a * p.k / p.b1 + r3a * p.h / p.b2) * du * dv
    )


def lie_decrease_rate(p: Params) -> float:
    """``alpha`` with ``L_X Phi <= -alpha |x - Ec|^2``; non-positive when the
    square-root condition on ``k, h, b1, b2`` fails."""
    c = p.k * math.sqrt(p.b2 / p.b1) + p.h * math.sqrt(p.b1 / p.b2)
    factor = 1 - c / 2
    r3a = p.r3 * p.a
    return min(factor * r3a / p.b1, factor * r3a / p.b2, p.r3)


@dataclass
class LyapunovCheck:
    n_starts: int
    t_end: float
    dt: float
    max_increase: float  # largest one-step increase of Phi over all starts
    monotone: bool
    max_lie: float  # largest Lie derivative seen along the trajectories
    terminal_distance: float  # max-norm distance to Ec at t_end, worst start
    converged: bool


def random_positive_starts(n: int, seed: int = 0, lo: float = 0.05, hi: float = 1.5) -> np.ndarray:
    return np.random.default_rng(seed).uniform(lo, hi, size=(3, n))


def lyapunov_check(
    p: Params,
    starts: np.ndarray,
    t_end: float,
    dt: Optional[float] = None,
    slack: float = 1e-12,
    conv_tol: float = 1e-6,
) -> LyapunovCheck:
    """Integrate a batch of starts and watch Phi step by step."""
    from .equilibria import default_kinetic_dt, integrate_kinetic

    ec = np.array(_ec(p))[:, None]
    starts = np.asarray(starts, dtype=float)
    state = {"phi": lyapunov_phi(starts, p), "inc": -np.inf, "lie": float(np.max(lie_derivative_phi(starts, p)))}

    def watch(t, x):
        phi = lyapunov_phi(x, p)
        state["inc"] = max(state["inc"], float(np.max(phi - state["phi"])))
        state["lie"] = max(state["lie"], float(np.max(lie_derivative_phi(x, p))))
        state["phi"] = phi

    dt = default_kinetic_dt(p) if dt is None else dt
    traj = integrate_kinetic(starts, p, t_end, dt, sample_every=10**12, observer=watch)
    dist = float(np.abs(traj.terminal - ec).max())
    return LyapunovCheck(
        n_starts=starts.shape[1],
        t_end=t_end,
        dt=dt,
        max_increase=state["inc"],
        monotone=state["inc"] <= slack,
        max_lie=state["lie"],
        terminal_distance=dist,
        converged=dist <= conv_tol,
    )
