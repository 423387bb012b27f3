"""Wave profiles as a truncated boundary-value problem.

The profile equations ``d_i phi_i'' - s phi_i' + f_i(phi) = 0`` are
discretized with centered second-order differences on a uniform grid.
Endpoints are pinned to the tail equilibria, except the left value of the
invading species, whose boundary equation is traded for the phase condition
``phi_j(0) = (left_j + right_j) / 2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import spsolve

from .equilibria import kinetic_rhs
from .errors import HypothesisViolated, NewtonDivergence, NonPositiveProfile
from .model import Params, derive

TOL = 1e-8
MAX_ITER = 50


@dataclass
class WaveProfile:
    s: float
    z: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    phi3: np.ndarray
    left_state: tuple[float, float, float]
    right_state: tuple[float, float, float]
    phase_species: int = 1
    residual_norm: float = math.nan
    log: list = field(default_factory=list)  # (iteration, damping, residual norm)

    @property
    def phi(self) -> np.ndarray:
        return np.stack([self.phi1, self.phi2, self.phi3])

    @property
    def h(self) -> float:
        return float(self.z[1] - self.z[0])

    def with_phi(self, phi: np.ndarray, **changes) -> "WaveProfile":
        kw = dict(
            s=self.s,
            z=self.z,
            left_state=self.left_state,
            right_state=self.right_state,
            phase_species=self.phase_species,
        )
        kw.update(changes)
        return WaveProfile(phi1=phi[0].copy(), phi2=phi[1].copy(), phi3=phi[2].copy(), **kw)

    def __call__(self, z) -> np.ndarray:
        """Linear interpolation, constant beyond the ends."""
        return np.stack([np.interp(z, self.z, f) for f in self.phi])

    def endpoint_mismatch(self) -> float:
        phi = self.phi
        return float(
            max(
                np.abs(phi[:, 0] - np.array(self.left_state)).max(),
                np.abs(phi[:, -1] - np.array(self.right_state)).max(),
            )
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["z", "phi1", "phi2", "phi3"])
            for row in zip(self.z, self.phi1, self.phi2, self.phi3):
                w.writerow([f"{c:.15g}" for c in row])

    def log_text(self) -> str:
        return "\n".join(f"{i} {lam:.6g} {r:.6e}" for i, lam, r in self.log)


def _check_grid(wp: WaveProfile) -> None:
    m = len(wp.z)
    if m < 5 or any(len(f) != m for f in (wp.phi1, wp.phi2, wp.phi3)):
        raise ValueError("profile arrays must share the grid and have at least 5 nodes")
    dz = np.diff(wp.z)
    if np.any(dz <= 0) or np.ptp(dz) > 1e-9 * dz[0]:
        raise ValueError("grid must be uniform and increasing")


def _interior(phi: np.ndarray, p: Params, s: float, h: float) -> np.ndarray:
    d = np.array(p.d)[:, None]
    lap = (phi[:, 2:] - 2 * phi[:, 1:-1] + phi[:, :-2]) / (h * h)
    grad = (phi[:, 2:] - phi[:, :-2]) / (2 * h)
    return d * lap - s * grad + kinetic_rhs(phi[:, 1:-1], p)


def residual(wp: WaveProfile, p: Params) -> tuple[np.ndarray, float]:
    """Interior residual, shape ``(3, m - 2)``, and its max-norm."""
    _check_grid(wp)
    r = _interior(wp.phi, p, wp.s, wp.h)
    return r, float(np.abs(r).max())


def _phase_node(z: np.ndarray) -> int:
    return int(np.argmin(np.abs(z)))


def _system(phi, p: Params, s, h, left, right, ph, j0, mid):
    """Full residual vector (node-major) for Newton."""
    m = phi.shape[1]
    F = np.zeros((m, 3))
    F[1:-1] = _interior(phi, p, s, h).T
    F[0] = phi[:, 0] - left
    F[-1] = phi[:, -1] - right
    F[0, ph] = phi[ph, j0] - mid
    return F.ravel()


def _jacobian(phi, p: Params, s, h, ph, j0) -> sp.csr_matrix:
    m = phi.shape[1]
    d = p.d
    r1, r2, r3, hh, k, a, b1, b2 = p.r1, p.r2, p.r3, p.h, p.k, p.a, p.b1, p.b2
    u, v, w = phi[:, 1:-1]
    # kinetic Jacobian entries per interior node
    K = [
        [r1 * (1 - 2 * u - k * v - b1 * w), -r1 * k * u, -r1 * b1 * u],
        [-r2 * hh * v, r2 * (1 - hh * u - 2 * v - b2 * w), -r2 * b2 * v],
        [r3 * a * w, r3 * a * w, r3 * (-1 + a * u + a * v - 2 * w)],
    ]
    j = np.arange(1, m - 1)
    rows, cols, vals = [], [], []

    def add(r, c, x):
        rows.append(r)
        cols.append(c)
        vals.append(np.broadcast_to(x, r.shape))

    for i in range(3):
        row = 3 * j + i
        lo = d[i] / (h * h) + s / (2 * h)
        hi = d[i] / (h * h) - s / (2 * h)
        add(row, 3 * (j - 1) + i, lo)
        add(row, 3 * (j + 1) + i, hi)
        for c in range(3):
            diag = -2 * d[i] / (h * h) if c == i else 0.0
            add(row, 3 * j + c, K[i][c] + diag)
    for i in range(3):
        add(np.array([3 * (m - 1) + i]), np.array([3 * (m - 1) + i]), 1.0)
        if i == ph:
            add(np.array([i]), np.array([3 * j0 + i]), 1.0)
        else:
            add(np.array([i]), np.array([i]), 1.0)
    R = np.concatenate(rows)
    C = np.concatenate(cols)
    V = np.concatenate(vals)
    return sp.csr_matrix((V, (R, C)), shape=(3 * m, 3 * m))


def tanh_guess(z, s, left, right, width: float = 5.0, phase_species: int = 1) -> WaveProfile:
    z = np.asarray(z, dtype=float)
    sig = 0.5 * (1 + np.tanh(z / width))
    L, R = np.array(left)[:, None], np.array(right)[:, None]
    phi = L + (R - L) * sig
    return WaveProfile(s, z, phi[0], phi[1], phi[2], tuple(left), tuple(right), phase_species)


def default_grid(z_left: float = -150.0, z_right: float = 150.0, m: int = 3001) -> np.ndarray:
    return np.linspace(z_left, z_right, m)


def phase_species_for(p: Params, left_state) -> int:
    """The invading species: phi2 when leaving ``E_upper``, phi1 when leaving ``E_lower``."""
    q = derive(p)
    if np.allclose(left_state, q.E_lower, rtol=0, atol=1e-12):
        return 0
    return 1


def pde_guess(p: Params, s, z, left, right) -> WaveProfile:
    """Seed from a simulation of the matching invasion scenario.

    The simulation runs on twice the profile window for as long as a front
    at the minimal speed needs to cross the whole window, then the window is
    cut out around the invading species' mid-level crossing.  Falls back to
    the tanh seed when no crossing exists.
    """
    from . import pde

    ph = phase_species_for(p, left)
    tag = "invade-elow" if ph == 0 else "invade-estar"
    z = np.asarray(z, dtype=float)
    length = float(z[-1] - z[0])
    g = pde.Grid.from_dx(0.0, 2 * length, max(float(z[1] - z[0]), 0.5))
    q = derive(p)
    s_min = q.s_lower if ph == 0 else q.s_upper
    speed = s_min if s_min else s
    res = pde.run(g, p, pde.Scenario(tag), length / speed, sample_every=10**9, check_domain=False)
    mid = 0.5 * (left[ph] + right[ph])
    st = res.terminal
    xf = pde.front_position(st, pde.SPECIES[ph], mid)
    if xf is None:
        return tanh_guess(z, s, left, right, phase_species=ph)
    phi = np.stack([np.interp(xf - z, st.x, f) for f in (st.u, st.v, st.w)])
    return WaveProfile(s, z, phi[0], phi[1], phi[2], tuple(left), tuple(right), ph)


def solve_profile(
    p: Params,
    s: float,
    left_state,
    right_state,
    init: Union[WaveProfile, str] = "tanh",
    z: Optional[np.ndarray] = None,
    tol: float = TOL,
    max_iter: int = MAX_ITER,
) -> WaveProfile:
    """Damped Newton for the truncated profile problem.

    ``init`` is a profile (re-used on its own grid unless ``z`` is given),
    ``"tanh"`` or ``"from-pde"``.
    """
    left = np.array(left_state, dtype=float)
    right = np.array(right_state, dtype=float)
    ph = phase_species_for(p, left)
    if isinstance(init, WaveProfile):
        if z is None or (len(z) == len(init.z) and np.array_equal(z, init.z)):
            z = init.z
            phi = init.phi
        else:
            phi = init(z)
    else:
        if z is None:
            z = default_grid()
        if init == "tanh":
            phi = tanh_guess(z, s, left, right, phase_species=ph).phi
        elif init == "from-pde":
            phi = pde_guess(p, s, z, left, right).phi
        else:
            raise ValueError(f"unknown init {init!r}")
    z = np.asarray(z, dtype=float)
    h = float(z[1] - z[0])
    j0 = _phase_node(z)
    mid = 0.5 * (left[ph] + right[ph])
    phi = np.array(phi, dtype=float)
    m = phi.shape[1]

    F = _system(phi, p, s, h, left, right, ph, j0, mid)
    norm = float(np.abs(F).max())
    merit = float(F @ F)
    log = [(0, 0.0, norm)]
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise NewtonDivergence(f"no convergence after {max_iter} iterations (residual {norm:.3e})")
        it += 1
        J = _jacobian(phi, p, s, h, ph, j0)
        delta = spsolve(J.tocsc(), -F).reshape(m, 3).T
        if not np.all(np.isfinite(delta)):
            raise NewtonDivergence("singular Newton system")
        # backtracking on the squared 2-norm (Armijo with the Newton slope -2*merit)
        lam = 1.0
        while True:
            trial = phi + lam * delta
            Ft = _system(trial, p, s, h, left, right, ph, j0, mid)
            mt = float(Ft @ Ft)
            if np.isfinite(mt) and mt <= (1 - 2e-4 * lam) * merit:
                break
            lam *= 0.5
            if lam < 1.0 / 1024:
                raise NewtonDivergence(f"line search failed at iteration {it} (residual {norm:.3e})")
        phi, F, merit = trial, Ft, mt
        norm = float(np.abs(F).max())
        log.append((it, lam, norm))

    wp = WaveProfile(s, z, phi[0].copy(), phi[1].copy(), phi[2].copy(), tuple(left), tuple(right), ph)
    wp.log = log
    wp.residual_norm = residual(wp, p)[1]
    inner = phi[:, 1:-1]
    if np.any(inner <= 0):
        i, j = np.unravel_index(int(np.argmin(inner)), inner.shape)
        err = NonPositiveProfile(f"phi{i + 1} = {inner[i, j]:.3e} at z = {z[j + 1]:.4g}")
        err.profile = wp
        raise err
    return wp


def solve_invasion(p: Params, s: float, target: str = "auto", **kw) -> WaveProfile:
    """Profile leaving ``E_upper`` for ``E_lower`` (or ``Ec`` when present)."""
    q = derive(p)
    if target == "auto":
        target = "Ec" if q.Ec is not None and q.beta_lower > 0 else "ELow"
    right = {"Ec": q.Ec, "ELow": q.E_lower}[target]
    if right is None:
        raise HypothesisViolated("coexistence state exists")
    return solve_profile(p, s, q.E_upper, right, **kw)


@dataclass
class ContinuationResult:
    speeds: list
    profiles: list
    last_good: Optional[float]
    failed_at: Optional[float]
    failure: Optional[str]


def continue_in_speed(
    p: Params,
    s_from: float,
    s_to: float,
    n_steps: int,
    seed: WaveProfile,
    **kw,
) -> ContinuationResult:
    """Natural continuation in ``s``; stops at the first failed solve.

    ``seed`` is re-converged at ``s_from`` first.  Failures are the solver's
    own exceptions (divergence or loss of positivity).
    """
    speeds = [s_from] if n_steps <= 0 else list(np.linspace(s_from, s_to, n_steps + 1))
    done, profiles = [], []
    prev = seed
    for i, s in enumerate(speeds):
        try:
            wp = solve_profile(p, float(s), prev.left_state, prev.right_state, init=prev.with_phi(prev.phi, s=float(s)), **kw)
        except (NewtonDivergence, NonPositiveProfile) as exc:
            if i == 0:
                raise
            return ContinuationResult(done, profiles, done[-1], float(s), f"{type(exc).__name__}: {exc}")
        done.append(float(s))
        profiles.append(wp)
        prev = wp
    return ContinuationResult(done, profiles, done[-1], None, None)


# --------------------------------------------------------------------------
# diagnostics


@dataclass
class SandwichReport:
    shift: float
    violation: float
    worst_z: float
    worst_component: int


def sandwich_violation(wp: WaveProfile, construction, shift: float) -> tuple[float, float, int]:
    """Largest amount by which ``phi(z)`` leaves ``[lower, upper](z + shift)``."""
    from .waves_analytic import eval_ul

    up, lo = eval_ul(construction, wp.z + shift)
    phi = wp.phi
    viol = np.maximum(lo - phi, phi - up)
    i, j = np.unravel_index(int(np.argmax(viol)), viol.shape)
    return float(viol[i, j]), float(wp.z[j]), int(i)


def sandwich(wp: WaveProfile, construction, search: float = 5.0) -> SandwichReport:
    """Best translation of the bounds against the profile.

    The search centres on the shift that makes the upper invading component
    hit the profile's mid-level at ``z = 0`` and scans ``+-search`` around it.
    """
    ph = wp.phase_species
    mid = 0.5 * (wp.left_state[ph] + wp.right_state[ph])
    prof = construction.upper[ph]
    zz = np.linspace(-100, 100, 20001)
    vals = prof(zz)
    cross = zz[np.argmin(np.abs(vals - mid))]
    f = lambda t: sandwich_violation(wp, construction, t)[0]
    coarse = np.linspace(cross - search, cross + search, 201)
    best = coarse[int(np.argmin([f(t) for t in coarse]))]
    step = coarse[1] - coarse[0]
    res = minimize_scalar(f, bounds=(best - step, best + step), method="bounded", options={"xatol": 1e-10})
    t = float(res.x) if res.fun <= f(best) else float(best)
    v, zw, i = sandwich_violation(wp, construction, t)
    return SandwichReport(t, v, zw, i)


def align(wp: WaveProfile, z: np.ndarray) -> np.ndarray:
    """Profile re-centred so the invading species crosses its mid-level at 0."""
    ph = wp.phase_species
    mid = 0.5 * (wp.left_state[ph] + wp.right_state[ph])
    f = wp.phi[ph] - mid
    j = int(np.nonzero(np.diff(np.sign(f)) != 0)[0][0])
    z0 = wp.z[j] - f[j] * (wp.z[j + 1] - wp.z[j]) / (f[j + 1] - f[j])
    return wp(np.asarray(z) + z0)


def domain_doubling_drift(p: Params, wp: WaveProfile, window: float = 50.0, init="tanh") -> float:
    """Max change on ``[-window, window]`` when the domain is doubled at equal spacing.

    The wide problem is solved from ``init`` rather than from ``wp``, so the
    comparison does not inherit the narrow solution.
    """
    z = wp.z
    m2 = 2 * (len(z) - 1) + 1
    z2 = np.linspace(2 * z[0], 2 * z[-1], m2)
    wide = solve_profile(p, wp.s, wp.left_state, wp.right_state, init=init, z=z2)
    zz = z[(z >= -window) & (z <= window)]
    return float(np.abs(align(wide, zz) - align(wp, zz)).max())


def profile_to_state(wp: WaveProfile, x: np.ndarray, x0: float, t: float = 0.0) -> np.ndarray:
    """Fields ``phi(x0 + s t - x)`` on a simulation grid."""
    return wp(x0 + wp.s * t - np.asarray(x))


def transport_drift(p: Params, wp: WaveProfile, t_end: float = 20.0, cfl_factor: float = 0.2) -> float:
    """Evolve the profile in the simulator and compare with the exact translate."""
    from . import pde

    length = float(wp.z[-1] - wp.z[0])
    g = pde.Grid.from_dx(0.0, length, wp.h)
    x0 = 0.5 * length
    init = pde.FieldState.from_array(0.0, g.x, profile_to_state(wp, g.x, x0))
    res = pde.run(g, p, pde.Scenario("custom"), t_end, sample_every=10**9, cfl_factor=cfl_factor,
                  check_domain=False, initial=init)
    target = profile_to_state(wp, g.x, x0, res.terminal.t)
    return float(np.abs(res.terminal.as_array() - target).max())
