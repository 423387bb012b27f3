"""
Invasion thresholds and hypotheses
==================================

Who can invade whom?  For each preset we compute the two semi-coexistence
states, the growth rate of the missing prey at each of them, the linear
spreading speeds and the coexistence state, then list which hypotheses
hold.
"""

from tripwave import PRESETS, check_conditions, classify_Ec, derive

for name, p in PRESETS.items():
    q = derive(p)
    cr = check_conditions(p)
    print(f"--- {name}: {p}")
    print(f"E_upper = {tuple(round(c, 6) for c in q.E_upper)}   beta_upper = {q.beta_upper:.6f}")
    print(f"E_lower = {tuple(round(c, 6) for c in q.E_lower)}   beta_lower = {q.beta_lower:.6f}")

    # a positive growth rate makes the state invadable; the spreading speed
    # exists only then
    print(f"s_upper = {q.s_upper}   s_lower = {q.s_lower}")

    if q.Ec is not None:
        rep = classify_Ec(p)
        print(f"Ec = {tuple(round(c, 6) for c in q.Ec)}  stable (Routh-Hurwitz): {rep.routh_hurwitz_stable}")
    else:
        print("no positive coexistence state")

    held = [k for k, v in cr.as_dict().items() if v is True]
    print("conditions that hold:", ", ".join(held))
    for note in cr.notes:
        print("note:", note)
