import itertools
from fractions import Fraction

import numpy as np
import pytest

from antifolk.errors import GuardError, IncompatibleMonitoringError, ZeroProbabilityError
from antifolk.game import StageGame, nash_regret
from antifolk.privacy import privacy_curve
from antifolk.families import CounterfactualSpec, build_counterfactual_instance
from antifolk.repeated import (PlayerAutomaton, PrivateStrategyAutomaton, PublicStrategyAutomaton,
                               conditional_play_distribution, factorization_gap, history_automaton,
                               one_shot_deviation_gain, public_histories, reachable_states, solve_values_public,
                               track_beliefs, verify_theorem1, verify_theorem2, verify_theorem3, verify_theorem4)
from antifolk.signals import SignalStructure, perfect_monitoring

from oracles import (graph_reachable, noised_statistic_structure, positive_reachable, random_game,
                     random_public_automaton, simulate_reachable, value_iteration)

PD = StageGame(np.array([[[2, 2], [0, 3]], [[3, 0], [1, 1]]]) / 3)


def _grim_public():
    # perfect-monitoring signal index 0 is (C, C); anything else triggers punishment
    trans = np.array([[0, 1, 1, 1], [1, 1, 1, 1]])
    return PublicStrategyAutomaton((np.array([[1.0, 0], [0, 1.0]]),) * 2, trans, 0, ("coop", "punish"))


def _always(action, num_signals):
    return PublicStrategyAutomaton((np.eye(2)[[action]],) * 2, np.zeros((1, num_signals), dtype=int))


def _uninformative(ks=(2, 2), m=2):
    return SignalStructure("public", np.full(tuple(ks) + (m,), 1 / m), tuple(range(m)))


# -- values ----------------------------------------------------------------

def test_single_state_value_is_stage_payoff():
    rng = np.random.default_rng(0)
    game = random_game(rng, (2, 3))
    auto = PublicStrategyAutomaton((np.array([[0.3, 0.7]]), np.array([[0.2, 0.2, 0.6]])), np.zeros((1, 2), int))
    v = solve_values_public(game, _uninformative((2, 3)), auto, 0.8)
    assert np.allclose(v.values[:, 0], game.expected_payoff(auto.profile(0)), atol=1e-14)


def test_alternating_states_geometric_value():
    rng = np.random.default_rng(1)
    game = random_game(rng, (2, 2))
    auto = PublicStrategyAutomaton((np.eye(2), np.eye(2)[[1, 0]]), np.array([[1, 1], [0, 0]]))
    delta = 0.7
    u1 = game.payoffs[0, 1]
    u2 = game.payoffs[1, 0]
    v = solve_values_public(game, _uninformative(), auto, delta)
    assert np.allclose(v.values[:, 0], (1 - delta) * (u1 + delta * u2) / (1 - delta ** 2), atol=1e-14)


def test_values_match_value_iteration():
    rng = np.random.default_rng(2)
    for _ in range(20):
        ks = (2, 3)
        game = random_game(rng, ks)
        sig = noised_statistic_structure(rng, ks)
        auto = random_public_automaton(rng, ks, sig.num_signals, max_states=4)
        for delta in (0.0, 0.5, 0.95):
            v = solve_values_public(game, sig, auto, delta)
            oracle = value_iteration(game.payoffs, sig.probs, auto.decisions, auto.transitions, delta)
            assert np.allclose(v.values, oracle, atol=1e-8)


def test_delta_domain():
    with pytest.raises(ValueError):
        solve_values_public(PD, perfect_monitoring(PD), _grim_public(), 1.0)


# -- one-shot deviations ---------------------------------------------------

def test_grim_trigger_patient_is_equilibrium():
    xi, _ = one_shot_deviation_gain(PD, perfect_monitoring(PD), _grim_public(), 0.9)
    assert xi <= 1e-12


def test_grim_trigger_impatient_gain():
    xi, witness = one_shot_deviation_gain(PD, perfect_monitoring(PD), _grim_public(), 0.1)
    assert xi == pytest.approx(0.2667, abs=1e-4)
    assert xi == pytest.approx(4 / 15, abs=1e-12)
    assert witness[1:] == (0, 1)


def test_stage_nash_repetition_has_no_gain():
    sig = perfect_monitoring(PD)
    for delta in (0.0, 0.5, 0.99):
        assert one_shot_deviation_gain(PD, sig, _always(1, sig.num_signals), delta)[0] <= 1e-12


# -- reachability ----------------------------------------------------------

def test_point_mass_signals_follow_a_single_path():
    reach = reachable_states(_grim_public(), perfect_monitoring(PD))
    assert reach.states == (0,)
    assert reachable_states(_grim_public(), perfect_monitoring(PD), mode="graph").states == (0, 1)
    assert reach.occupancy[0] == pytest.approx(1.0)


def test_reachability_against_graph_and_simulation():
    rng = np.random.default_rng(3)
    for _ in range(30):
        ks = (2, 2)
        sig = noised_statistic_structure(rng, ks)
        auto = random_public_automaton(rng, ks, sig.num_signals, max_states=5)
        graph = reachable_states(auto, sig, mode="graph")
        pos = reachable_states(auto, sig)
        assert set(graph.states) == graph_reachable(auto.transitions)
        assert set(pos.states) == positive_reachable(sig.probs, auto.decisions, auto.transitions)
        sim = simulate_reachable(rng, sig.probs, auto.decisions, auto.transitions, 2000)
        assert sim <= set(pos.states)
        for w in pos.states:
            path = pos.path_to(w)
            x = auto.initial
            for prev, s in path:
                assert prev == x
                x = int(auto.transitions[x, s])
            assert x == w


def test_full_support_positive_equals_graph():
    rng = np.random.default_rng(4)
    sig = SignalStructure("public", rng.dirichlet(np.ones(3), size=(2, 2)), (0, 1, 2))
    auto = random_public_automaton(rng, (2, 2), 3, max_states=5)
    assert reachable_states(auto, sig).states == reachable_states(auto, sig, mode="graph").states


def test_occupancy_is_a_distribution_on_recurrent_states():
    rng = np.random.default_rng(5)
    sig = SignalStructure("public", rng.dirichlet(np.ones(3), size=(2, 2)), (0, 1, 2))
    auto = random_public_automaton(rng, (2, 2), 3, max_states=5)
    reach = reachable_states(auto, sig)
    assert reach.occupancy.sum() == pytest.approx(1.0)
    assert np.all(reach.occupancy[~reach.recurrent] == 0)


# -- conditional play ------------------------------------------------------

def _xor_structure():
    probs = np.zeros((2, 2, 2), dtype=object)
    for a, b in itertools.product(range(2), repeat=2):
        probs[a, b, a ^ b] = Fraction(1)
    return SignalStructure("public", probs, ("same", "differ"))


def _repeat_first_action():
    half = Fraction(1, 2)
    dec = np.array([[half, half], [Fraction(1), Fraction(0)], [Fraction(0), Fraction(1)]], dtype=object)
    trans = np.array([[[1, 1], [2, 2]], [[1, 1], [1, 1]], [[2, 2], [2, 2]]])
    return PlayerAutomaton(dec, trans, 0)


def test_first_period_play_is_the_initial_decision():
    rng = np.random.default_rng(6)
    auto = random_public_automaton(rng, (2, 3), 2)
    got = conditional_play_distribution(_uninformative((2, 3)), auto, ())
    for g, d in zip(got, auto.decisions):
        assert np.allclose(np.asarray(g, dtype=float), d[0])


def test_public_strategies_factor_exactly():
    rng = np.random.default_rng(7)
    sig = noised_statistic_structure(rng, (2, 2))
    auto = random_public_automaton(rng, (2, 2), sig.num_signals)
    for h, _, _ in public_histories(sig, auto, 3):
        assert factorization_gap(sig, auto, h) <= 1e-12


def test_private_bookkeeping_correlates_play():
    autos = PrivateStrategyAutomaton((_repeat_first_action(), _repeat_first_action()))
    sig = _xor_structure()
    marg = conditional_play_distribution(sig, autos, (0,))
    assert [list(m) for m in marg] == [[Fraction(1, 2)] * 2] * 2
    # both players repeat equal first actions: the joint play sits on the diagonal
    assert factorization_gap(sig, autos, (0,)) == 0.25


def test_zero_probability_history_is_reported():
    autos = PrivateStrategyAutomaton((_repeat_first_action(), _repeat_first_action()))
    sig = _xor_structure()
    with pytest.raises(ZeroProbabilityError):
        conditional_play_distribution(sig, autos, (0, 1))


def _simulate_histories(rng, sig, players, periods, rollouts):
    """Vectorized rollouts: public signals of the first ``periods - 1`` periods and period-``periods`` actions."""
    probs = np.asarray(sig.probs, dtype=float)
    states = np.array([[p.initial] * rollouts for p in players])
    signals = []
    for t in range(periods):
        acts = []
        for j, p in enumerate(players):
            cdf = np.cumsum(np.asarray(p.decisions, dtype=float)[states[j]], axis=1)
            acts.append((rng.random(rollouts)[:, None] > cdf).sum(axis=1))
        if t == periods - 1:
            return np.array(signals).T, np.array(acts)
        cdf = np.cumsum(probs[acts[0], acts[1]], axis=1)
        s = np.minimum((rng.random(rollouts)[:, None] > cdf).sum(axis=1), probs.shape[-1] - 1)
        for j, p in enumerate(players):
            states[j] = p.transitions[states[j], acts[j], s]
        signals.append(s)


def test_conditional_play_against_monte_carlo():
    rng = np.random.default_rng(8)
    sig = SignalStructure("public", np.array([[[0.7, 0.3], [0.4, 0.6]], [[0.5, 0.5], [0.2, 0.8]]]), (0, 1))
    players = tuple(PlayerAutomaton(rng.dirichlet(np.ones(2), size=3), rng.integers(0, 3, size=(3, 2, 2)))
                    for _ in range(2))
    autos = PrivateStrategyAutomaton(players)
    hist, acts = _simulate_histories(rng, sig, players, 3, 10 ** 6)
    best = max(public_histories(sig, autos, 3), key=lambda x: x[1] if len(x[0]) == 2 else -1)
    h = best[0]
    mask = np.all(hist == np.array(h), axis=1)
    assert mask.sum() > 10 ** 5
    want = conditional_play_distribution(sig, autos, h)
    for j in range(2):
        emp = np.bincount(acts[j][mask], minlength=2) / mask.sum()
        assert 0.5 * np.abs(emp - want[j]).sum() <= 3e-3


def test_history_automaton_tree():
    auto = history_automaton(2, 2, 3, lambda h: [1.0, 0.0] if len(h) < 2 else [0.0, 1.0])
    assert auto.num_states == 1 + 4 + 16
    leaf = auto.transitions[auto.transitions[0, 1, 0], 0, 1]
    assert np.allclose(auto.decisions[leaf], [0, 1])
    assert auto.transitions[leaf, 1, 1] == leaf


def test_public_history_horizon_guard():
    sig = _uninformative((2, 2), 4)
    with pytest.raises(GuardError):
        list(public_histories(sig, _always(0, 4), 40))


# -- theorem verifiers -----------------------------------------------------

def test_theorem1_stage_nash_passes_with_zero_regret():
    sig = perfect_monitoring(PD)
    report = verify_theorem1(PD, sig, _always(1, 4), 0.9, privacy_curve(sig))
    assert report.passed and report.max_regret == 0 and report.xi == 0
    assert report.to_dict()["verdict"] == "pass"
    assert report.to_csv().splitlines()[0].startswith("instance,theorem,delta,eta,xi,state")


def test_theorem1_perfect_monitoring_is_uninformative():
    sig = perfect_monitoring(PD)
    report = verify_theorem1(PD, sig, _grim_public(), 0.9, privacy_curve(sig))
    assert report.passed and not report.informative
    assert {c.state for c in report.per_state} == {"coop", "punish"}


def test_theorem3_skips_unreached_states():
    sig = perfect_monitoring(PD)
    report = verify_theorem3(PD, sig, _grim_public(), 0.9, privacy_curve(sig))
    assert [c.state for c in report.per_state] == ["coop"]


def test_claimed_slack_is_recorded():
    sig = perfect_monitoring(PD)
    report = verify_theorem1(PD, sig, _grim_public(), 0.1, privacy_curve(sig), claimed_xi=0.0)
    assert report.slack_mode == "claimed" and report.xi_used == 0.0
    assert report.xi == pytest.approx(4 / 15)
    with pytest.raises(ValueError):
        verify_theorem1(PD, sig, _grim_public(), 0.1, privacy_curve(sig), claimed_xi=-1.0)


def test_public_verifiers_refuse_private_signals():
    sig = SignalStructure("private", np.full((2, 2, 4), 0.25), (0, 1))
    with pytest.raises(IncompatibleMonitoringError):
        verify_theorem1(PD, sig, _always(1, 2), 0.5, privacy_curve(sig))


def test_theorem2_on_public_strategies_matches_state_regrets():
    rng = np.random.default_rng(9)
    for _ in range(5):
        sig = noised_statistic_structure(rng, (2, 2), max_signals=4)
        game = random_game(rng, (2, 2))
        auto = random_public_automaton(rng, (2, 2), sig.num_signals, max_states=3)
        curve = privacy_curve(sig)
        report = verify_theorem2(game, sig, auto, 0.6, curve, 3)
        checks = iter(report.per_state)
        for h, _, _ in public_histories(sig, auto, 3):
            w = auto.initial
            for s in h:
                w = int(auto.transitions[w, s])
            assert next(checks).regret == pytest.approx(nash_regret(game, auto.profile(w)).max_regret, abs=1e-12)


def test_theorem2_stage_nash_with_private_bookkeeping():
    # each player remembers its own last action but always defects
    player = PlayerAutomaton(np.array([[0.0, 1.0], [0.0, 1.0]]), np.array([[[0, 0], [1, 1]], [[0, 0], [1, 1]]]))
    sig = SignalStructure("public", np.array([[[0.6, 0.4], [0.5, 0.5]], [[0.5, 0.5], [0.4, 0.6]]]), (0, 1))
    report = verify_theorem2(PD, sig, PrivateStrategyAutomaton((player, player)), 0.9, privacy_curve(sig), 4)
    assert report.passed and report.max_regret == 0 and report.xi <= 1e-12


def _embed_private(sig):
    """Private structure in which every player sees the same public signal."""
    n, m = sig.n, sig.num_signals
    probs = np.zeros(sig.num_actions + (m ** n,))
    for s in range(m):
        probs[..., np.ravel_multi_index((s,) * n, (m,) * n)] = sig.probs[..., s]
    return SignalStructure("private", probs, sig.labels)


def test_theorem4_on_embedded_public_play_reproduces_state_regrets():
    rng = np.random.default_rng(10)
    for _ in range(5):
        pub = noised_statistic_structure(rng, (2, 2), max_signals=4)
        game = random_game(rng, (2, 2))
        auto = random_public_automaton(rng, (2, 2), pub.num_signals, max_states=3)
        priv = _embed_private(pub)
        autos = PrivateStrategyAutomaton.from_public(auto)
        report = verify_theorem4(game, priv, autos, 0.6, privacy_curve(pub), 3)
        beliefs = {(b.player, b.history): b for b in track_beliefs(game, priv, autos, 3)}
        assert len(report.per_state) == len(beliefs)
        for c in report.per_state:
            b = next(b for key, b in beliefs.items() if c.state.endswith(f"player={key[0]} h=" + (
                "".join(f"({a},{pub.labels[s]})" for a, s in key[1]) or "()")))
            (w,) = {x[0] for x in b.posterior}
            assert c.regret == pytest.approx(nash_regret(game, auto.profile(w)).regrets[c.player], abs=1e-10)


def test_theorem4_stage_nash_independent_signals():
    sig = SignalStructure("private", np.full((2, 2, 9), 1 / 9), ("a", "b", "c"))
    defect = PlayerAutomaton(np.array([[0.0, 1.0]]), np.zeros((1, 2, 3), dtype=int))
    report = verify_theorem4(PD, sig, PrivateStrategyAutomaton((defect, defect)), 0.9, privacy_curve(sig), 3)
    assert report.passed and report.max_regret == 0


def test_theorem4_refuses_public_signals():
    sig = perfect_monitoring(PD)
    with pytest.raises(IncompatibleMonitoringError):
        verify_theorem4(PD, sig, _always(1, 4), 0.9, privacy_curve(sig), 2)


def test_theorem4_refuses_missing_full_support_unless_relaxed():
    probs = np.zeros((2, 2, 4))
    probs[..., 0] = 1.0
    sig = SignalStructure("private", probs, (0, 1))
    defect = PlayerAutomaton(np.array([[0.0, 1.0]]), np.zeros((1, 2, 2), dtype=int))
    autos = PrivateStrategyAutomaton((defect, defect))
    with pytest.raises(IncompatibleMonitoringError):
        verify_theorem4(PD, sig, autos, 0.5, privacy_curve(sig), 2)
    report = verify_theorem4(PD, sig, autos, 0.5, privacy_curve(sig), 2, require_full_support=False)
    assert report.passed and any("full support" in note for note in report.notes)


def test_theorem4_on_counterfactual_instance():
    inst = build_counterfactual_instance(CounterfactualSpec(PD, 1.0), eps_grid=[0.1, 0.5, 1.0, 2.0])
    k = inst.sig.num_signals
    defect = PlayerAutomaton(np.array([[0.0, 1.0]]), np.zeros((1, 2, k), dtype=int))
    report = verify_theorem4(PD, inst.sig, PrivateStrategyAutomaton((defect, defect)), 0.9, inst.exact, 2)
    assert report.passed and report.max_regret == 0
