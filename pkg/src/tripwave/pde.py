"""Method-of-lines simulation of the diffusive three-species system.

Space uses the second-order centered Laplacian with zero-flux (mirrored
ghost node) ends; time uses classical RK4.  Runs are deterministic: the
same inputs always give bit-identical arrays.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BlowUp,
    CFLViolation,
    DomainError,
    HypothesisViolated,
    InsufficientData,
    NoFront,
)
from .model import Params, derive

SPECIES = ("u", "v", "w")


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("grid needs at least 3 nodes")
        if not self.x_max > self.x_min:
            raise ValueError("need x_max > x_min")

    @classmethod
    def from_dx(cls, x_min: float, x_max: float, dx: float) -> "Grid":
        n = int(round((x_max - x_min) / dx)) + 1
        return cls(x_min, x_max, n)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)


@dataclass
class FieldState:
    t: float
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    @classmethod
    def from_array(cls, t: float, x: np.ndarray, y: np.ndarray) -> "FieldState":
        return cls(t, x, y[0].copy(), y[1].copy(), y[2].copy())

    def as_array(self) -> np.ndarray:
        return np.stack([self.u, self.v, self.w])

    def species(self, which) -> np.ndarray:
        idx = which if isinstance(which, int) else SPECIES.index(which)
        return (self.u, self.v, self.w)[idx]


@dataclass(frozen=True)
class Scenario:
    """Initial-data recipe.

    ``invade-estar``: background ``(u*, 0, w*)`` with a ``v`` bump at the
    left end.  ``invade-elow``: background ``(0, v_*, w_*)`` with a ``u``
    bump.  ``custom``: ``background`` plus a bump on ``species``.
    """

    tag: str = "invade-estar"
    amplitude: float = 0.1
    width: float = 2.0
    background: Optional[tuple[float, float, float]] = None
    species: Optional[int] = None

    def __post_init__(self):
        if self.tag not in ("invade-estar", "invade-elow", "custom"):
            raise ValueError(f"unknown scenario {self.tag!r}")
        if self.amplitude < 0 or self.width <= 0:
            raise ValueError("need amplitude >= 0 and width > 0")

    def alien(self) -> int:
        if self.tag == "invade-estar":
            return 1
        if self.tag == "invade-elow":
            return 0
        return 1 if self.species is None else self.species


def background_state(p: Params, sc: Scenario) -> tuple[float, float, float]:
    q = derive(p)
    if sc.tag == "invade-estar":
        if q.beta_upper <= 0:
            raise HypothesisViolated("beta_upper>0")
        return q.E_upper
    if sc.tag == "invade-elow":
        if q.beta_lower <= 0:
            raise HypothesisViolated("beta_lower>0")
        return q.E_lower
    if sc.background is None:
        raise HypothesisViolated("custom scenario needs a background")
    return sc.background


def invading_target(p: Params, sc: Scenario) -> tuple[float, float, float]:
    """The stable-tail state expected behind the front."""
    q = derive(p)
    if sc.tag == "invade-estar":
        if q.beta_lower < 0 or q.Ec is None:
            return q.E_lower
        return q.Ec
    if sc.tag == "invade-elow":
        return q.Ec if q.Ec is not None else q.E_upper
    raise HypothesisViolated("custom scenario has no predicted tail")


def init_state(g: Grid, p: Params, sc: Scenario) -> FieldState:
    bg = background_state(p, sc)
    x = g.x
    y = np.empty((3, g.n))
    for i in range(3):
        y[i] = bg[i]
    y[sc.alien()] += sc.amplitude * np.exp(-(((x - g.x_min) / sc.width) ** 2))
    return FieldState.from_array(0.0, x, y)


def max_stable_dt(g: Grid, p: Params, cfl_factor: float = 0.2) -> float:
    return cfl_factor * g.dx**2 / max(p.d)


def _rhs(y: np.ndarray, p: Params, dcoef: np.ndarray, inv_dx2: float) -> np.ndarray:
    lap = np.empty_like(y)
    lap[:, 1:-1] = y[:, 2:] - 2 * y[:, 1:-1] + y[:, :-2]
    lap[:, 0] = 2 * (y[:, 1] - y[:, 0])
    lap[:, -1] = 2 * (y[:, -2] - y[:, -1])
    u, v, w = y
    out = lap * (dcoef * inv_dx2)
    out[0] += p.r1 * u * (1 - u - p.k * v - p.b1 * w)
    out[1] += p.r2 * v * (1 - p.h * u - v - p.b2 * w)
    out[2] += p.r3 * w * (-1 + p.a * u + p.a * v - w)
    return out


def _rk4(y, p, dcoef, inv_dx2, dt):
    k1 = _rhs(y, p, dcoef, inv_dx2)
    k2 = _rhs(y + 0.5 * dt * k1, p, dcoef, inv_dx2)
    k3 = _rhs(y + 0.5 * dt * k2, p, dcoef, inv_dx2)
    k4 = _rhs(y + dt * k3, p, dcoef, inv_dx2)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _check_dt(g: Grid, p: Params, dt: float, cfl_factor: float) -> None:
    limit = max_stable_dt(g, p, cfl_factor)
    if not dt > 0 or dt > limit * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:g} exceeds {cfl_factor:g}*dx^2/max(d)={limit:g}")


def _blowup_cap(p: Params) -> float:
    return 10 * max(1.0, 2 * p.a - 1)


def step(st: FieldState, g: Grid, p: Params, dt: float, cfl_factor: float = 0.2) -> FieldState:
    """One RK4 step of the semi-discrete system."""
    _check_dt(g, p, dt, cfl_factor)
    dcoef = np.array(p.d)[:, None]
    y = _rk4(st.as_array(), p, dcoef, 1.0 / g.dx**2, dt)
    if not np.all(np.isfinite(y)) or np.abs(y).max() > _blowup_cap(p):
        raise BlowUp(f"solution left the bounded region at t={st.t + dt:g}")
    return FieldState.from_array(st.t + dt, st.x, y)


def front_position(st: FieldState, species, level: float) -> Optional[float]:
    """Rightmost crossing of ``level``, linearly interpolated; None if absent."""
    f = np.asarray(st.species(species)) - level
    x = st.x
    s = np.sign(f)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    exact = np.nonzero(s == 0)[0]
    best = None
    if idx.size:
        i = idx[-1]
        best = x[i] + (x[i + 1] - x[i]) * f[i] / (f[i] - f[i + 1])
    if exact.size:
        j = exact[-1]
        # a node sitting exactly on the level only counts if the field
        # actually passes through it
        lo, hi = max(j - 1, 0), min(j + 1, len(f) - 1)
        if s[lo] * s[hi] < 0 or (s[lo] != 0) != (s[hi] != 0):
            best = x[j] if best is None else max(best, x[j])
    return None if best is None else float(best)


@dataclass
class RunResult:
    times: np.ndarray
    fronts: dict  # species name -> array of front positions (nan when absent)
    levels: dict  # species name -> level used
    terminal: FieldState
    snapshots: list = field(default_factory=list)
    min_value: float = 0.0
    max_value: float = 0.0
    alien: str = "v"

    def front_series(self, species: Optional[str] = None) -> tuple[np.ndarray, np.ndarray]:
        name = self.alien if species is None else species
        return self.times, self.fronts[name]


def front_levels(p: Params, sc: Scenario, level_frac: float = 0.5) -> dict:
    """Level per species between background and predicted tail value."""
    bg = background_state(p, sc)
    try:
        target = invading_target(p, sc)
    except HypothesisViolated:
        target = None
    levels = {}
    for i, name in enumerate(SPECIES):
        if target is None:
            if i == sc.alien():
                levels[name] = bg[i] + level_frac * sc.amplitude
            continue
        if abs(target[i] - bg[i]) > 1e-3:
            levels[name] = bg[i] + level_frac * (target[i] - bg[i])
    return levels


def run(
    g: Grid,
    p: Params,
    sc: Scenario,
    t_end: float,
    dt: Optional[float] = None,
    sample_every: int = 100,
    cfl_factor: float = 0.2,
    level_frac: float = 0.5,
    keep_snapshots: bool = False,
    check_domain: bool = True,
    initial: Optional[FieldState] = None,
) -> RunResult:
    """Integrate from ``init_state`` (or ``initial``) to ``t_end``.

    Front positions are recorded every ``sample_every`` steps.  When
    ``check_domain`` is set, a front ending within 50 nodes of ``x_max``
    raises :class:`DomainError`.
    """
    if dt is None:
        dt = max_stable_dt(g, p, cfl_factor)
    _check_dt(g, p, dt, cfl_factor)
    st = init_state(g, p, sc) if initial is None else initial
    levels = front_levels(p, sc, level_frac) if initial is None or sc.tag != "custom" else {}
    dcoef = np.array(p.d)[:, None]
    inv_dx2 = 1.0 / g.dx**2
    cap = _blowup_cap(p)

    n_steps = int(math.ceil(t_end / dt - 1e-9))
    y = st.as_array()
    t0 = st.t
    times = []
    fronts = {name: [] for name in levels}
    snaps = []
    lo, hi = float(y.min()), float(y.max())

    def record(t, y):
        times.append(t)
        state = FieldState.from_array(t, st.x, y)
        for name, level in levels.items():
            xf = front_position(state, name, level)
            fronts[name].append(np.nan if xf is None else xf)
        if keep_snapshots:
            snaps.append(state)

    record(t0, y)
    for i in range(n_steps):
        h = dt if i + 1 < n_steps else (t0 + t_end) - (t0 + dt * i)
        y = _rk4(y, p, dcoef, inv_dx2, h)
        ymin, ymax = float(y.min()), float(y.max())
        if not (math.isfinite(ymin) and math.isfinite(ymax)) or max(-ymin, ymax) > cap:
            raise BlowUp(f"solution left the bounded region at t={t0 + dt * (i + 1):g}")
        lo, hi = min(lo, ymin), max(hi, ymax)
        if (i + 1) % sample_every == 0 or i + 1 == n_steps:
            t = t0 + dt * (i + 1) if i + 1 < n_steps else t0 + t_end
            record(t, y)

    terminal = FieldState.from_array(times[-1], st.x, y)
    alien = SPECIES[sc.alien()]
    if check_domain and alien in fronts:
        xf = fronts[alien][-1]
        if np.isfinite(xf) and xf > g.x_max - 50 * g.dx:
            raise DomainError(f"front at {xf:g} is within 50 nodes of x_max={g.x_max:g}")
        # a front that has already left the domain leaves no crossing at all
        bg = background_state(p, sc)[sc.alien()]
        probe = y[sc.alien(), max(g.n - 51, 0)]
        level = levels[alien]
        if (probe - level) * (level - bg) > 0:
            raise DomainError(f"the {alien} front is within 50 nodes of x_max={g.x_max:g} or beyond")
    return RunResult(
        times=np.array(times),
        fronts={k: np.array(v) for k, v in fronts.items()},
        levels=levels,
        terminal=terminal,
        snapshots=snaps,
        min_value=lo,
        max_value=hi,
        alien=alien,
    )


@dataclass(frozen=True)
class SpeedEstimate:
    species: str
    level: float
    speed: float
    residual: float
    window: tuple[float, float]
    n_points: int


def estimate_speed(
    times: Sequence[float],
    xs: Sequence[float],
    fit_start_frac: float = 0.4,
    species: str = "",
    level: float = float("nan"),
) -> SpeedEstimate:
    """Least-squares slope of front position against time.

    The first ``fit_start_frac`` of the samples is discarded as transient;
    samples without a front (nan) are dropped afterwards.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(xs, dtype=float)
    start = int(math.floor(fit_start_frac * len(t)))
    t, x = t[start:], x[start:]
    keep = np.isfinite(x)
    t, x = t[keep], x[keep]
    if len(t) < 10:
        raise InsufficientData(f"only {len(t)} usable samples after discarding the transient")
    slope, intercept = np.polyfit(t, x, 1)
    resid = x - (slope * t + intercept)
    return SpeedEstimate(
        species=species,
        level=level,
        speed=float(slope),
        residual=float(np.sqrt(np.mean(resid**2))),
        window=(float(t[0]), float(t[-1])),
        n_points=int(len(t)),
    )


def run_speed(res: RunResult, species: Optional[str] = None, fit_start_frac: float = 0.4) -> SpeedEstimate:
    name = res.alien if species is None else species
    t, x = res.front_series(name)
    return estimate_speed(t, x, fit_start_frac, species=name, level=res.levels[name])


@dataclass(frozen=True)
class TailReport:
    label: str
    deviation: float
    mean: tuple[float, float, float]
    window: tuple[float, float]
    distances: dict


def tail_classify(
    st: FieldState,
    p: Params,
    window: Optional[tuple[float, float]] = None,
    front_x: Optional[float] = None,
    tol: float = 1e-2,
) -> TailReport:
    """Average the fields over a window behind the front and name the state.

    The default window is the stretch between 10% and 50% of the distance
    from ``x_min`` to the front, i.e. the oldest invaded region away from
    both the left wall and the front itself.
    """
    x = st.x
    if window is None:
        if front_x is None or not np.isfinite(front_x):
            raise NoFront("a front position is needed to place the tail window")
        span = front_x - x[0]
        window = (x[0] + 0.1 * span, x[0] + 0.5 * span)
    lo, hi = window
    mask = (x >= lo) & (x <= hi)
    if not mask.any() or lo < x[0] or hi > x[-1]:
        raise NoFront(f"tail window {window} is not inside the domain")
    mean = tuple(float(np.mean(f[mask])) for f in (st.u, st.v, st.w))
    q = derive(p)
    candidates = {"EStar": q.E_upper, "ELow": q.E_lower}
    if q.Ec is not None:
        candidates["Ec"] = q.Ec
    dist = {
        name: float(max(abs(m - c) for m, c in zip(mean, state)))
        for name, state in candidates.items()
    }
    best = min(dist, key=dist.get)
    label = best if dist[best] <= tol else "Unresolved"
    return TailReport(label, dist[best], mean, (float(lo), float(hi)), dist)


def _fmt(x: float) -> str:
    return f"{x:.15g}"


def write_snapshot_csv(path, st: FieldState) -> None:
    """One row ``x,u,v,w`` per grid node."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "u", "v", "w"])
        for row in zip(st.x, st.u, st.v, st.w):
            w.writerow([_fmt(c) for c in row])


def snapshot_name(t: float) -> str:
    return f"snap_t{t:.6f}.csv"


def write_front_csv(path, res: RunResult, species: Optional[str] = None) -> None:
    """``t,front_x`` rows; missing fronts are written as ``nan``."""
    t, xs = res.front_series(species)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "front_x"])
        for a, b in zip(t, xs):
            w.writerow([_fmt(a), _fmt(b)])
