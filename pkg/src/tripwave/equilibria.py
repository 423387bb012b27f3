"""Kinetic vector field, Jacobians, stability and kinetic trajectories."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import EigenSolveFailure, NoCoexistenceState, StepSizeError
from .model import Params, derive


def kinetic_rhs(x, p: Params) -> np.ndarray:
    """Reaction terms at ``x = (u, v, w)``.

    ``x`` may carry trailing batch dimensions; the leading axis indexes the
    species.
    """
    u, v, w = np.asarray(x, dtype=float)
    return np.stack(
        [
            p.r1 * u * (1 - u - p.k * v - p.b1 * w),
            p.r2 * v * (1 - p.h * u - v - p.b2 * w),
            p.r3 * w * (-1 + p.a * u + p.a * v - w),
        ]
    )


def kinetic_jacobian(x, p: Params) -> np.ndarray:
    u, v, w = (float(c) for c in x)
    r1, r2, r3, h, k, a, b1, b2 = p.r1, p.r2, p.r3, p.h, p.k, p.a, p.b1, p.b2
    return np.array(
        [
            [r1 * (1 - 2 * u - k * v - b1 * w), -r1 * k * u, -r1 * b1 * u],
            [-r2 * h * v, r2 * (1 - h * u - 2 * v - b2 * w), -r2 * b2 * v],
            [r3 * a * w, r3 * a * w, r3 * (-1 + a * u + a * v - 2 * w)],
        ]
    )


def tw_field(y, p: Params, s: float) -> np.ndarray:
    """First-order traveling-wave field for ``(phi1, psi1, phi2, psi2, phi3, psi3)``."""
    phi1, psi1, phi2, psi2, phi3, psi3 = np.asarray(y, dtype=float)
    f1, f2, f3 = kinetic_rhs((phi1, phi2, phi3), p)
    return np.array(
        [
            psi1,
            (s * psi1 - f1) / p.d1,
            psi2,
            (s * psi2 - f2) / p.d2,
            psi3,
            (s * psi3 - f3) / p.d3,
        ]
    )


def tw_jacobian(y, p: Params, s: float) -> np.ndarray:
    """Jacobian of :func:`tw_field`; it does not depend on the ``psi`` entries."""
    phi1, _, phi2, _, phi3, _ = (float(c) for c in y)
    K = kinetic_jacobian((phi1, phi2, phi3), p)
    d = p.d
    J = np.zeros((6, 6))
    for i in range(3):
        J[2 * i, 2 * i + 1] = 1.0
        J[2 * i + 1, 2 * i + 1] = s / d[i]
        for j in range(3):
            J[2 * i + 1, 2 * j] = -K[i, j] / d[i]
    return J


def eigen_split(M, tol: float = 1e-9) -> tuple[int, int, int]:
    """Count eigenvalues with real part ``< -tol``, ``> tol`` and in between."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise EigenSolveFailure("matrix has non-finite entries")
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveFailure(str(exc)) from exc
    re = ev.real
    return int(np.sum(re < -tol)), int(np.sum(re > tol)), int(np.sum(np.abs(re) <= tol))


@dataclass(frozen=True)
class StabilityReport:
    a0: float
    a1: float
    a2: float
    routh_hurwitz_stable: bool
    eigenvalues: np.ndarray
    eigen_counts: dict


def characteristic_coefficients(p: Params) -> tuple[float, float, float]:
    """``(a0, a1, a2)`` of the cubic ``l^3 + a2 l^2 + a1 l + a0`` at ``Ec``."""
    q = derive(p)
    if q.Ec is None:
        raise NoCoexistenceState("no positive coexistence state")
    uc, vc, wc = q.Ec
    r1, r2, r3 = p.r
    a2 = r1 * uc + r2 * vc + r3 * wc
    a1 = (
        r1 * r2 * uc * vc * (1 - p.h * p.k)
        + r1 * r3 * uc * wc * (1 + p.a * p.b1)
        + r2 * r3 * vc * wc * (1 + p.a * p.b2)
    )
    a0 = r1 * r2 * r3 * uc * vc * wc * q.Delta
    return a0, a1, a2


def classify_Ec(p: Params, tol: float = 1e-9) -> StabilityReport:
    a0, a1, a2 = characteristic_coefficients(p)
    q = derive(p)
    J = kinetic_jacobian(q.Ec, p)
    ev = np.linalg.eigvals(J)
    counts = {"Ec": eigen_split(J, tol)}
    for name, state in (("E_upper", q.E_upper), ("E_lower", q.E_lower), ("origin", (0, 0, 0))):
        counts[name] = eigen_split(kinetic_jacobian(state, p), tol)
    return StabilityReport(
        a0=a0,
        a1=a1,
        a2=a2,
        routh_hurwitz_stable=bool(a2 > 0 and a0 > 0 and a2 * a1 > a0),
        eigenvalues=ev,
        eigen_counts=counts,
    )


@dataclass
class KineticTrajectory:
    t: np.ndarray
    x: np.ndarray  # shape (n_samples, 3, *batch)

    @property
    def terminal(self) -> np.ndarray:
        return self.x[-1]

    def to_csv(self, path) -> None:
        if self.x.ndim != 2:
            raise ValueError("CSV export needs an unbatched trajectory")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "u", "v", "w"])
            for t, (u, v, w) in zip(self.t, self.x):
                writer.writerow([f"{t:.15g}", f"{u:.15g}", f"{v:.15g}", f"{w:.15g}"])


def default_kinetic_dt(p: Params) -> float:
    return 0.01 / max(p.r)


def integrate_kinetic(
    x0,
    p: Params,
    t_end: float,
    dt: Optional[float] = None,
    sample_every: int = 1,
    observer: Optional[Callable[[float, np.ndarray], None]] = None,
) -> KineticTrajectory:
    """Classical fixed-step RK4 on the kinetic system.

    ``x0`` has shape ``(3,)`` or ``(3, n)`` for a batch of starts.  The last
    step is shortened so the trajectory ends exactly at ``t_end``.
    ``observer(t, x)`` is called after every step, sampled or not.
    """
    if dt is None:
        dt = default_kinetic_dt(p)
    if dt <= 0 or t_end < 0:
        raise ValueError("need dt > 0 and t_end >= 0")
    x = np.array(x0, dtype=float)
    n_steps = int(np.ceil(t_end / dt - 1e-12))
    ts, xs = [0.0], [x.copy()]
    t = 0.0
    for i in range(n_steps):
        h = min(dt, t_end - t)
        k1 = kinetic_rhs(x, p)
        k2 = kinetic_rhs(x + 0.5 * h * k1, p)
        k3 = kinetic_rhs(x + 0.5 * h * k2, p)
        k4 = kinetic_rhs(x + h * k3, p)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = dt * (i + 1) if i + 1 < n_steps else t_end
        if not np.all(np.isfinite(x)) or np.any(x < -1e-10):
            raise StepSizeError(f"state left the admissible region at t={t:g}")
        if observer is not None:
            observer(t, x)
        if (i + 1) % sample_every == 0 or i + 1 == n_steps:
            ts.append(t)
            xs.append(x.copy())
    return KineticTrajectory(np.array(ts), np.array(xs))
