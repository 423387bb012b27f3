"""
Certifying upper and lower wave profiles
========================================

Each explicit pair of piecewise profiles must satisfy six differential
inequalities away from its corner points.  We build the pair for a
strong alien at s = 2, check it on a dense grid, then break it on purpose
to see the checker reject it.
"""

import numpy as np

from tripwave import PRESETS, build_ul, derive, eval_ul, verify_ul

p = PRESETS["PS-A"]
c = build_ul(p, 2.0, "estar-super")
print("roots of the characteristic polynomial:", c.root1, c.root2)
print("corner points:", c.corners)

# the profiles start at the invaded state and end at the trivial bounds
up, lo = eval_ul(c, np.array([-60.0, 0.0, 20.0]))
print("upper at z=-60, 0, 20:\n", up.round(4))
print("lower at z=-60, 0, 20:\n", lo.round(4))

rep = verify_ul(c, z_range=(-60, 20))
print(rep.summary())

# at the critical speed the tails carry a linear factor and one corner is solved numerically
crit = build_ul(PRESETS["PS-A'"], None, "estar-critical")
print("\ncritical speed", crit.s, "corner", crit.corners["z1"], "pass", verify_ul(crit).passed)

# a weak alien uses the mirrored construction
pc = PRESETS["PS-C"]
weak = build_ul(pc, 1.1 * derive(pc).s_lower, "elow-super")
print("weak alien pass", verify_ul(weak).passed)

# remove the correction term of the lower weak-prey profile: the second
# lower inequality must now fail
broken = build_ul(p, 2.0, "estar-super", q_scale=0.0)
bad = verify_ul(broken, z_range=(-60, 20))
print("\nsabotaged pair passes?", bad.passed, " worst L2:", bad.inequalities["L2"].worst)
