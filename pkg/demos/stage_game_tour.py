# Tour of the stage games: payoffs, best responses, equilibria and the
# punishment floors the intervention device can enforce.
import numpy as np

from repgame.games import (FlowControlGame, PowerControlGame, minmax_values,
                           mutual_minmax, solve_stage_nash)

np.set_printoptions(precision=4, suppress=True)

# Four users share an M/M/1 server: payoff a_i^beta_i * (mu - a0 - sum a).
# The device occupies capacity a0 without producing anything, which is the
# whole point -- it can make congestion as painful as it likes, up to its cap.
g = FlowControlGame(mu=10.0, beta=[2, 2, 3, 3], a_max=[2.5] * 4, a0_max=[2.5])

print("flow control, 4 users, capacity 10, device cap 2.5")
print("payoff at a=(1,1,2,2), device quiet:", g.payoff([0.0], [1, 1, 2, 2]))
print("user 0 best response to that profile:", g.best_response(0, [0.0], [1, 1, 2, 2]))

ne = solve_stage_nash(g)
u_ne = g.payoff(ne.a0, ne.a)
print("\nstage Nash profile:", ne.a)
print("stage Nash payoffs:", u_ne, " total:", u_ne.sum())
# everyone floods the queue; total throughput 39.25 vs ~127 achievable

print("\nminmax with device:   ", minmax_values(g, with_intervention=True))
print("minmax without device:", minmax_values(g, with_intervention=False))
mm = mutual_minmax(g)
print("mutual minmax profile:", mm.profile.a, " a0 =", mm.profile.a0)
print("is a stage Nash itself?", mm.is_stage_nash)
# with the full cap the device can flood everyone to zero simultaneously,
# and nobody can do anything about it -- the credible-punishment condition

weak = FlowControlGame(mu=10.0, beta=[2, 2, 3, 3], a_max=[2.5] * 4, a0_max=[0.5])
print("\nsame game, device cap 0.5:")
print("  mutual minmax a stage Nash?", mutual_minmax(weak).is_stage_nash,
      " (worst unilateral gain %.3f)" % mutual_minmax(weak).worst_gain)

# A different physical layer, same algebra: two transmitters, Shannon rates.
p = PowerControlGame(gain=[[100.0, 10000.0], [10000.0, 100.0]],
                     intervention_gain=[1.0, 1.0], noise=[1.0, 1.0],
                     a_max=[1.0, 1.0], a0_max=[1.0])
print("\npower control, strong cross interference:")
print("  stage Nash:", solve_stage_nash(p).a)
print("  minmax with device:", minmax_values(p, with_intervention=True))
