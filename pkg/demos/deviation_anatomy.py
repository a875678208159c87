"""Anatomy of a deviation: what a cheater gains for one period and pays after.

Builds the egalitarian protocol, lets user 2 grab the queue at period 3, and
compares the realized discounted payoff against compliant play and against
the closed-form one-shot gain.
"""
import numpy as np

from repgame.design import design_protocol
from repgame.games import FlowControlGame
from repgame.simulate import DeviationPlan, deviation_gain, run

np.set_printoptions(precision=4, suppress=True)

game = FlowControlGame(mu=10.0, beta=[2, 2, 3, 3], a_max=[2.5] * 4, a0_max=[2.5])
delta = 0.9
design = design_protocol(game, np.full(4, 3.0), "maxmin", delta=delta)
aut = design.automaton

T = 400  # delta^400 ~ 5e-19, truncation error far below print precision
honest = run(game, aut, delta, T)
print("compliant discounted average:", honest.discounted_average())
print("target was:                  ", design.target.v)

t_dev, user = 3, 2
cheat = run(game, aut, delta, T,
            deviations=(DeviationPlan(t=t_dev, user=user, action=2.5),))
print(f"\nuser {user} grabs the full box at period {t_dev}:")
for t in range(t_dev - 1, t_dev + 4):
    print(f"  t={t}  a={cheat.actions[t]}  a0={cheat.a0[t]}  u={cheat.payoffs[t]}")
# the device floods the queue next period and keeps it flooded: the stage
# payoffs drop to zero for everyone, forever -- that's the absorbing threat

avg = cheat.discounted_average()
print("\ndeviant discounted average: ", avg)
print(f"user {user} nets {avg[user] - honest.discounted_average()[user]:+.4f} "
      "relative to compliance")

# the scripted grab is not even the most tempting one; the worst case over
# all states and actions is what the verifier bounds
state = cheat.states[t_dev]
g = deviation_gain(game, aut, delta, state, user)   # best response, same state
print(f"best one-shot deviation gain for user {user} at that state: {g:.6f}")
print("(negative: at delta=0.9 the punishment outweighs any one-period grab)")
