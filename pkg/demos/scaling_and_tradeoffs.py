# What happens to the repeated-game advantage as the population grows, and
# how much device capability a given patience level buys.
#
# Two provisioning rules for the flow-control capacity: "linear" scales the
# server with the crowd (mu = N), "capped" saturates at 10.  Each user gets a
# unit action box and the per-user guarantee is the smaller of 10% of their
# solo optimum and an equal capacity share.
from repgame.experiments import scaling_sweep, tradeoff_sweep

table = scaling_sweep((2, 12))
print(",".join(table.columns))
for row in table.rows:
    if row[2] in ("nash", "repeated_with_intervention") and row[3] == "sum":
        print(",".join("NA" if x is None else f"{x:.6g}" if isinstance(x, float) else str(x)
                       for x in row))
# linear rule: the guarantee share mu/N stays put while the simplex grows, so
# the repeated scheme keeps its edge until the guarantees themselves eat the
# simplex (rows go NA); capped rule: past N=10 the box load exceeds capacity
# and the queueing model itself stops applying.

print()
game = dict(kind="flow", mu=10.0, beta=[2, 2, 3, 3], a_max=[2.5] * 4,
            a0_max=[2.5])
tt = tradeoff_sweep(game, "a0_vs_gamma", gamma_levels=(1.0, 7.0, 14.0),
                    a0_values=(0.0, 0.5, 1.0, 2.5), delta_grid=(0.85, 0.95),
                    welfare="sum")
print("device capability needed to enforce the optimum at a given patience:")
print(",".join(tt.columns))
for row in tt.rows:
    print(",".join("NA" if x is None else f"{x:.6g}" if isinstance(x, float) else str(x)
                   for x in row))
# more demanding guarantees shrink the temptation (the optimum concentrates
# less), so gamma=14 needs *less* device than gamma=1 at the same delta
