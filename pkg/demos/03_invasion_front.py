"""
Watching an invasion front
==========================

A small bump of the strong alien prey is placed at the left end of a
habitat occupied by the other prey and the predator.  We simulate the full
system, track where the alien crosses half its final density, and compare
the fitted front speed with the linear spreading speed.
"""

import numpy as np

from tripwave import PRESETS, Grid, Scenario, derive, run, run_speed, tail_classify

p = PRESETS["PS-A"]
q = derive(p)
g = Grid.from_dx(0.0, 400.0, 0.2)
res = run(g, p, Scenario("invade-estar"), t_end=150.0, sample_every=250)

t, xf = res.front_series()
for ti, xi in list(zip(t, xf))[::6]:
    print(f"t = {ti:6.1f}   front at x = {xi:8.2f}")

est = run_speed(res)
print(f"\nfitted speed {est.speed:.4f}, linear speed {q.s_upper:.4f}")

# pulled fronts approach the linear speed from below, slowly
tail = tail_classify(res.terminal, p, front_x=float(xf[-1]))
print(f"behind the front: {tail.label}, mean state {np.round(tail.mean, 4)}")
print(f"field range over the run: [{res.min_value:.2e}, {res.max_value:.4f}]")
