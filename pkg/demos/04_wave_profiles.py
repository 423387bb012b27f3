"""
Solving for the wave profile directly
=====================================

Instead of waiting for a front to form, solve the steady profile equations
in the moving frame with Newton's method.  The solution should sit between
the explicit upper and lower profiles, and continuation in the speed
should fail just below the linear spreading speed.
"""

from tripwave import PRESETS, build_ul, continue_in_speed, derive, sandwich, solve_invasion

p = PRESETS["PS-A"]
q = derive(p)

wp = solve_invasion(p, 2.0)
print("Newton log (iteration, damping, residual):")
print(wp.log_text())
print("profile at z = -20, 0, 20:", [wp(z).round(4).tolist() for z in (-20.0, 0.0, 20.0)])

rep = sandwich(wp, build_ul(p, 2.0, "estar-super"))
print(f"\nlargest sandwich violation {rep.violation:.1e} after shifting by {rep.shift:.3f}")

cr = continue_in_speed(p, 2.5, 1.5, 50, solve_invasion(p, 2.5))
print(f"continuation: last good speed {cr.last_good:.3f}, first failure {cr.failed_at:.3f}")
print(f"linear spreading speed {q.s_upper:.4f}")
print("reason:", cr.failure)
