"""How long should a punishment spell be?

Short spells don't deter; long spells waste patience because the punisher
must also be willing to sit through them.  The minimum enforcing discount
factor against spell length L is U-shaped for a weak device and flat at the
absorbing bound once the device is strong enough to make mutual minmax a
stage equilibrium on its own.
"""
import numpy as np

from repgame.automata import min_delta_for_L
from repgame.experiments import reference_path
from repgame.games import FlowControlGame, mutual_minmax

LENGTHS = [1, 2, 3, 4, 5, 6, 8, 10, 12]
CAPS = [0.0, 0.5, 1.0, 2.5]

rows = {}
for cap in CAPS:
    g = FlowControlGame(mu=10.0, beta=[2, 2, 3, 3], a_max=[2.5] * 4,
                        a0_max=[cap])
    prof = (g.null_intervention(), reference_path(g))
    col = []
    for L in LENGTHS:
        res = min_delta_for_L(g, prof, L)
        col.append(res.delta if res.feasible else None)
    rows[cap] = col
    if mutual_minmax(g).is_stage_nash:
        grim = min_delta_for_L(g, prof, None)
        print(f"cap {cap}: punishing forever is credible, bound {grim.delta:.6f}")
    else:
        print(f"cap {cap}: absorbing punishment not credible, finite spells only")

print()
print("min enforcing delta by punishment length (-- = no delta works)")
print("  L  " + "".join(f"  cap={c:<6}" for c in CAPS))
for k, L in enumerate(LENGTHS):
    cells = "".join(f"  {rows[c][k]:.4f}  " if rows[c][k] is not None else "  --      "
                    for c in CAPS)
    print(f" {L:3d} " + cells)

# the cap=2.5 column repeats one number: with mutual minmax a stage Nash the
# machine can threaten to punish forever, and the length stops mattering
best = {c: min(d for d in rows[c] if d is not None) for c in CAPS}
print("\nbest length per cap:",
      {c: LENGTHS[rows[c].index(best[c])] for c in CAPS})
