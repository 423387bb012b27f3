"""
Relaxation to coexistence
=========================

When all three species can coexist, a logarithmic Lyapunov function
decreases along every kinetic trajectory.  Decrease is immediate, but the
approach itself is governed by the slowest eigenvalue at the coexistence
state, which can be very small.
"""

import numpy as np

from tripwave import PRESETS, derive, integrate_kinetic, kinetic_jacobian, lyapunov_phi

p = PRESETS["PS-B"]
Ec = np.array(derive(p).Ec)
ev = np.linalg.eigvals(kinetic_jacobian(Ec, p))
print("eigenvalues at Ec:", np.round(ev, 6))
print(f"slowest decay time scale: {1 / -ev.real.max():.0f}")

x0 = np.array([1.2, 0.1, 0.9])
tr = integrate_kinetic(x0, p, 20000.0, dt=0.05, sample_every=20000)
for t, x in zip(tr.t, tr.x):
    dist = np.abs(x - Ec).max()
    print(f"t = {t:7.0f}   Phi = {lyapunov_phi(x, p):.3e}   |x - Ec| = {dist:.3e}")
