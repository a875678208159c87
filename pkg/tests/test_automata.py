"""Automata layer: transitions, state values, SPE checks, incentive bounds.

Frozen expectations come from two independent oracle scripts: a
value-iteration solver for state values and a bisection over explicit
constraint formulas for the minimum discount factors.
"""
import numpy as np
import pytest

from repgame.automata import (AutomatonError, build_minmax_automaton,
                              build_player_specific_automaton, describe,
                              find_min_delta_for_constraints, min_delta_for_L,
                              minmax_delta_constraints,
                              player_specific_delta_constraints,
                              prescribe_punishment_length, prescribe_reward_delay,
                              state_values, verify_spe)
from repgame.games import ActionProfile, FlowControlGame, PacketDropGame, minmax

MARGIN_PATH = [0.8889715613961255, 0.8889715613961255, 2.5, 2.5]


def fig_game(a0_max=2.5):
    return FlowControlGame(mu=10.0, beta=[2, 2, 3, 3], a_max=[2.5] * 4, a0_max=[a0_max])


def margin_profile():
    """Efficient symmetric profile keeping the impatient users 10% above
    what they could guarantee alone against a hostile crowd."""
    return ActionProfile(a0=[0.0], a=MARGIN_PATH)


def value_iteration_oracle(game, automaton, delta, sweeps=20000, tol=1e-13):
    """Plain fixed-point iteration over all states; slow but independent."""
    states = automaton.reachable_states()
    V = {s: np.zeros(game.n) for s in states}
    u = {s: game.payoff(*automaton.output(s), validate=False) for s in states}
    for _ in range(sweeps):
        worst = 0.0
        for s in states:
            nxt = automaton.next_on_path(s)
            new = (1 - delta) * u[s] + delta * V[nxt]
            worst = max(worst, float(np.max(np.abs(new - V[s]))))
            V[s] = new
        if worst < tol:
            break
    return V


# ---------------------------------------------------------------------------
# structure and transitions
# ---------------------------------------------------------------------------

def test_grim_requires_stage_nash_punishment():
    with pytest.raises(AutomatonError):
        build_minmax_automaton(fig_game(0.0), [margin_profile()], L=None)
    aut = build_minmax_automaton(fig_game(2.5), [margin_profile()], L=None)
    assert aut.kind == "grim"
    assert np.all(aut.abs_a0 == [2.5]) and np.all(aut.abs_a == 2.5)


def test_transitions_grim():
    aut = build_minmax_automaton(fig_game(2.5), [margin_profile()], L=None)
    s0 = aut.initial_state
    _, prescribed = aut.output(s0)
    assert aut.transition(s0, prescribed) == ("path", 0)
    dev = prescribed.copy()
    dev[1] = 1.7
    assert aut.transition(s0, dev) == ("punish_abs",)
    # grim restarts punishment even on simultaneous deviations
    dev2 = prescribed.copy()
    dev2[0] = 0.1
    dev2[3] = 0.2
    assert aut.transition(s0, dev2) == ("punish_abs",)
    assert aut.transition(("punish_abs",), prescribed) == ("punish_abs",)


def test_transitions_finite_minmax():
    g = fig_game(1.0)
    aut = build_minmax_automaton(g, [margin_profile()], L=3)
    s0 = aut.initial_state
    _, prescribed = aut.output(s0)
    dev = prescribed.copy()
    dev[2] = 0.4
    assert aut.transition(s0, dev) == ("punish", 2, 0)
    # simultaneous deviations are ignored on purpose
    dev[3] = 0.4
    assert aut.transition(s0, dev) == ("path", 0)
    # punishment phase: compliant play advances, the punished restarting on deviation
    a0p, ap = aut.output(("punish", 2, 0))
    assert np.all(a0p == [1.0])
    assert np.isclose(ap[2], g.best_response(2, [1.0], g.a_max))
    assert aut.transition(("punish", 2, 0), ap) == ("punish", 2, 1)
    pdev = ap.copy()
    pdev[2] = 2.5
    assert aut.transition(("punish", 2, 1), pdev) == ("punish", 2, 0)
    pdev2 = ap.copy()
    pdev2[0] = 0.3
    assert aut.transition(("punish", 2, 1), pdev2) == ("punish", 0, 0)
    assert aut.transition(("punish", 2, 2), ap) == ("path", 0)


def test_cyclic_path_advance():
    g = fig_game(2.5)
    profs = [ActionProfile([0.0], [1.0, 1.0, 2.0, 2.0]),
             ActionProfile([0.0], [2.0, 2.0, 1.0, 1.0]),
             ActionProfile([0.0], [1.5, 1.5, 1.5, 1.5])]
    aut = build_minmax_automaton(g, profs, L=None, cycle_start=1)
    s = aut.initial_state
    seen = []
    for _ in range(6):
        seen.append(s[1])
        s = aut.transition(s, aut.output(s)[1])
    assert seen == [0, 1, 2, 1, 2, 1]


def test_describe_is_stable():
    aut = build_minmax_automaton(fig_game(2.5), [margin_profile()], L=None)
    text = describe(aut)
    assert text == (
        "automaton kind=grim users=4 path_len=1 cycle_start=0\n"
        "  path[0]: a0=[0] a=[0.888972 0.888972 2.5 2.5]\n"
        "  punish(absorbing): a0=[2.5] a=[2.5 2.5 2.5 2.5]\n"
        "  rule: any mismatch with the prescribed profile -> punish")


# ---------------------------------------------------------------------------
# state values
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("L,delta", [(None, 0.9), (3, 0.85), (7, 0.97)])
def test_state_values_match_value_iteration(L, delta):
    g = fig_game(2.5 if L is None else 1.0)
    profs = [ActionProfile([0.0], [1.0, 1.0, 2.0, 2.0]),
             ActionProfile([0.5], [2.0, 2.0, 1.0, 1.0])]
    aut = build_minmax_automaton(g, profs, L=L, cycle_start=0)
    sv = state_values(g, aut, delta)
    oracle = value_iteration_oracle(g, aut, delta)
    for s in aut.reachable_states():
        assert np.allclose(sv[s], oracle[s], atol=1e-10)


def test_state_values_grim_closed_form():
    g = fig_game(2.5)
    aut = build_minmax_automaton(g, [margin_profile()], L=None)
    v = g.payoff([0.0], MARGIN_PATH)
    sv = state_values(g, aut, 0.9)
    assert np.allclose(sv[("path", 0)], v)
    assert np.allclose(sv[("punish_abs",)], 0.0)


def test_state_values_finite_punishment_formula():
    g = fig_game(1.0)
    L, delta = 4, 0.9
    aut = build_minmax_automaton(g, [margin_profile()], L=L)
    sv = state_values(g, aut, delta)
    u_pun = g.payoff(aut.punish_a0[1], aut.punish_a[1], validate=False)
    v0 = sv[("path", 0)]
    for el in range(L):
        w = delta ** (L - el)
        assert np.allclose(sv[("punish", 1, el)], (1 - w) * u_pun + w * v0, atol=1e-12)


def test_player_specific_values_and_ordering():
    g = PacketDropGame(mu=10.0, beta=[2, 2, 3], a_max=[3.0, 3.0, 4.0])
    path = ActionProfile([0.0] * 3, [2.4, 2.4, 3.2])
    rewards = []
    for i in range(3):
        a = np.array([2.4, 2.4, 3.2])
        a[i] *= 0.3
        rewards.append(ActionProfile([0.0] * 3, a))
    aut = build_player_specific_automaton(g, [path], L=2, reward_profiles=rewards)
    delta = 0.93
    sv = state_values(g, aut, delta)
    oracle = value_iteration_oracle(g, aut, delta)
    for s in aut.reachable_states():
        assert np.allclose(sv[s], oracle[s], atol=1e-10)
    # punished user's value interpolates punishment (0) toward their reward
    own_reward = g.payoff(aut.reward_a0[0], aut.reward_a[0], validate=False)[0]
    assert np.isclose(sv[("punish", 0, 0)][0], delta ** 2 * own_reward)


def test_player_specific_ordering_rejected():
    g = PacketDropGame(mu=10.0, beta=[2, 2, 3], a_max=[3.0, 3.0, 4.0])
    path = ActionProfile([0.0] * 3, [2.4, 2.4, 3.2])
    # rewarding the deviator *more* than the path breaks the construction
    rewards = [ActionProfile([0.0] * 3, [2.4, 2.4, 3.2]) for _ in range(3)]
    with pytest.raises(AutomatonError):
        build_player_specific_automaton(g, [path], L=2, reward_profiles=rewards)


# ---------------------------------------------------------------------------
# subgame perfection
# ---------------------------------------------------------------------------

def brute_force_spe_check(game, automaton, delta, points=300):
    """Independent one-shot deviation scan with dict-based state values."""
    sv = state_values(game, automaton, delta)
    worst = -np.inf
    for s in automaton.reachable_states():
        a0, a = automaton.output(s)
        u = game.payoff(a0, a, validate=False)
        v_next = sv[automaton.next_on_path(s)]
        for i in range(game.n):
            v_pun = sv[automaton.punish_entry(i)]
            for x in np.linspace(0.0, game.a_max[i], points):
                dev = a.copy()
                dev[i] = x
                du = game.payoff(a0, dev, validate=False)[i]
                gain = (1 - delta) * (du - u[i]) + delta * (v_pun[i] - v_next[i])
                worst = max(worst, gain)
    return worst


def test_verify_spe_grim_threshold():
    """The one-profile grim machine flips from violated to SPE at the
    frozen threshold 0.747113 (geometric-sum bound on the margin path)."""
    g = fig_game(2.5)
    aut = build_minmax_automaton(g, [margin_profile()], L=None)
    good = verify_spe(g, aut, 0.76)
    assert good.ok and good.worst_gain <= 1e-9
    bad = verify_spe(g, aut, 0.73)
    assert not bad.ok
    assert bad.user in (0, 1) and bad.state == ("path", 0)
    # agreement with the brute-force scan
    assert np.isclose(bad.worst_gain, brute_force_spe_check(g, aut, 0.73, points=200),
                      atol=1e-12)


def test_verify_spe_finite_L_bound_is_one_sided():
    """With partial intervention the punished user keeps a positive
    best-response payoff, so the closed-form bound (which assumes they are
    held to the harsher mutual-minmax payoff) is optimistic: below it the
    machine is certainly violated, while certification needs a slightly
    larger delta found against the actual machine."""
    g = fig_game(1.0)
    aut = build_minmax_automaton(g, [margin_profile()], L=4)
    res = min_delta_for_L(g, margin_profile(), L=4)
    assert res.feasible and res.binding == "path"
    assert not verify_spe(g, aut, res.delta - 0.01).ok

    lo, hi = res.delta, 0.999999
    assert verify_spe(g, aut, hi).ok
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if verify_spe(g, aut, mid, grid_points=60).ok:
            hi = mid
        else:
            lo = mid
    assert hi >= res.delta  # never certifiable below the closed-form bound
    assert verify_spe(g, aut, hi + 1e-4).ok


def test_min_delta_exact_at_saturating_intervention():
    """At full intervention the punishment profile saturates the queue, the
    best response during punishment is the maximum rate, and the closed-form
    bound matches the actual machine in both directions."""
    g = fig_game(2.5)
    L = 10
    aut = build_minmax_automaton(g, [margin_profile()], L=L)
    res = min_delta_for_L(g, margin_profile(), L=L)
    assert res.feasible
    assert verify_spe(g, aut, res.delta + 1e-4).ok
    assert not verify_spe(g, aut, res.delta - 1e-4).ok


def test_verify_spe_on_stage_nash_path():
    """Playing the stage equilibrium forever is subgame perfect at any delta."""
    g = fig_game(2.5)
    ne = ActionProfile([0.0], [2.0, 2.0, 2.5, 2.5])
    aut = build_minmax_automaton(g, [ne], L=None)
    for delta in (0.1, 0.5, 0.95):
        assert verify_spe(g, aut, delta).ok


def test_verify_spe_player_specific():
    g = PacketDropGame(mu=10.0, beta=[2, 2, 3], a_max=[3.0, 3.0, 4.0])
    path = ActionProfile([0.0] * 3, [2.4, 2.4, 3.2])
    rewards = []
    for i in range(3):
        a = np.array([2.4, 2.4, 3.2])
        a[i] *= 0.3
        rewards.append(ActionProfile([0.0] * 3, a))
    L = prescribe_reward_delay(g, rewards)
    aut = build_player_specific_automaton(g, [path], L=L, reward_profiles=rewards)
    delta = find_min_delta_for_constraints(
        lambda d: player_specific_delta_constraints(g, path, L, rewards, d))
    assert delta is not None and delta < 1.0
    rep = verify_spe(g, aut, min(delta + 1e-3, 0.999999))
    assert rep.ok
    worst = brute_force_spe_check(g, aut, min(delta + 1e-3, 0.999999), points=150)
    assert worst <= 1e-9


# ---------------------------------------------------------------------------
# minimum discount factors (frozen oracle values)
# ---------------------------------------------------------------------------

def test_min_delta_grim_frozen():
    """Unbounded punishment: delta/(1-delta) >= max gain ratio 2.954343."""
    g = fig_game(2.5)
    res = min_delta_for_L(g, margin_profile(), L=None)
    assert res.feasible
    assert abs(res.delta - 0.7471126) < 2e-6


@pytest.mark.parametrize("a0_max,L,expected", [
    (0.0, 4, 0.976454),
    (0.0, 6, 0.984240),
    (0.5, 4, 0.882398),
    (0.5, 6, 0.880331),
    (1.0, 6, 0.800276),
    (1.0, 10, 0.849779),
    (2.5, 10, 0.759354),
])
def test_min_delta_finite_frozen(a0_max, L, expected):
    res = min_delta_for_L(fig_game(a0_max), margin_profile(), L=L)
    assert res.feasible
    assert abs(res.delta - expected) < 2e-6


def test_min_delta_infeasible_for_short_punishment():
    # the one-shot gain ratio is 2.95, so two punishment periods cannot cover it
    res = min_delta_for_L(fig_game(1.0), margin_profile(), L=2)
    assert not res.feasible and res.delta is None


def test_min_delta_monotone_in_intervention():
    for L in (4, 8):
        prev = None
        for a0 in (0.0, 0.5, 1.0, 2.5):
            res = min_delta_for_L(fig_game(a0), margin_profile(), L=L)
            if prev is not None and res.feasible and prev.feasible:
                assert res.delta <= prev.delta + 1e-9
            prev = res


def test_prescribed_length_makes_constraints_satisfiable():
    g = fig_game(1.0)
    prof = margin_profile()
    L = prescribe_punishment_length(g, prof)
    # conservative bound families become satisfiable for delta close to 1
    delta = find_min_delta_for_constraints(
        lambda d: minmax_delta_constraints(g, prof, L, d))
    assert delta is not None and delta < 1.0
    m = minmax_delta_constraints(g, prof, L, min(delta + 1e-4, 0.999999))
    assert min(np.min(m["path"]), np.min(m["punishment"])) >= 0.0
