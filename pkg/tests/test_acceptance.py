"""Acceptance gate: one test per criterion, each at its stated tolerance and time budget."""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from antifolk.experiments import ScanConfig, demo_collapse, scan_n
from antifolk.game import StageGame
from antifolk.privacy import (PrivacyParams, SensitivitySpec, anti_folk_bound, coarsen_signals, compose_advanced,
                              compose_basic, finite_dp_gamma, gaussian_gamma, gaussian_sigma, privacy_curve,
                              product_structure, subsample_privacy)
from antifolk.repeated import (PlayerAutomaton, PrivateStrategyAutomaton, conditional_play_distribution, public_histories, track_beliefs, verify_theorem1,
                               verify_theorem3, verify_theorem4)
from antifolk.signals import SignalStructure

from oracles import (beliefs_by_paths, event_gamma_exact, event_gamma_float, graph_reachable,
                     noised_statistic_structure, one_shot_gains, random_exact_private_automaton,
                     random_exact_public_automaton, random_game, random_public_automaton, random_structure,
                     regret_by_enumeration, sigma_hat_by_product, value_iteration)

BOUND_TOL = 1e-9


def _elapsed(start):
    return time.perf_counter() - start


# -- 1 ---------------------------------------------------------------------

def _criterion1_structures():
    rng = np.random.default_rng(2024)
    out = []
    for k in range(200):
        if k % 4 == 3:
            n, m = [(2, 2), (2, 3), (3, 2)][k % 3]
            ks = tuple(int(rng.integers(2, 4)) for _ in range(n))
            out.append(random_structure(rng, n, ks, m, kind="private", zero_prob=0.2))
        else:
            n = int(rng.integers(1, 4))
            ks = tuple(int(rng.integers(2, 4)) for _ in range(n))
            out.append(random_structure(rng, n, ks, int(rng.integers(2, 11)), zero_prob=0.25))
    return out


def test_criterion_1_dp_gamma_matches_event_enumeration():
    start = time.perf_counter()
    ratios = [Fraction(1), Fraction(6, 5), Fraction(2), Fraction(7, 2)]
    epsilons = [0.0, 0.1, math.log(2), 1.5]
    for sig in _criterion1_structures():
        assert sig.num_outcomes <= 10
        for r in ratios:
            got, _ = finite_dp_gamma(sig, ratio=r)
            assert isinstance(got, Fraction)
            assert got == event_gamma_exact(sig.probs, r)
        flt = sig.to_float()
        for e in epsilons:
            got, _ = finite_dp_gamma(flt, e)
            assert abs(got - event_gamma_float(flt.probs, e)) <= 1e-12
    assert _elapsed(start) < 30


# -- 2 ---------------------------------------------------------------------

def _sweep_instance(rng):
    n = int(rng.integers(2, 4))
    ks = tuple(int(rng.integers(2, 4)) for _ in range(n))
    game = random_game(rng, ks)
    sig = noised_statistic_structure(rng, ks, max_signals=6)
    auto = random_public_automaton(rng, ks, sig.num_signals, max_states=5)
    return game, sig, auto


def test_criterion_2_certification_sweep():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(500):
        game, sig, auto = _sweep_instance(rng)
        assert sig.num_signals <= 6 and auto.num_states <= 5
        curve = privacy_curve(sig)
        reach = graph_reachable(auto.transitions)
        for delta in (0.3, 0.9):
            report = verify_theorem1(game, sig, auto, delta, curve)
            assert report.passed, report.violations
            # independent route: value iteration, enumerated deviations and regrets
            gains = one_shot_gains(game.payoffs, sig.probs, auto.decisions, auto.transitions, delta)
            xi = max(0.0, max(g for (i, w, b), g in gains.items() if w in reach))
            assert abs(xi - report.xi) <= 1e-9
            eta = anti_folk_bound(delta, PrivacyParams(curve.eps_star, curve.gamma_star))
            for w in reach:
                regret = regret_by_enumeration(game.payoffs, auto.profile(w))
                assert regret <= eta + xi / (1 - delta) + BOUND_TOL
                checked += 1
    assert checked > 1000
    assert _elapsed(start) < 120


# -- 3 ---------------------------------------------------------------------

def _violating_instances(count, seed=11):
    rng = np.random.default_rng(seed)
    found = []
    while len(found) < count:
        game, sig, auto = _sweep_instance(rng)
        delta = float(rng.uniform(0.05, 0.4))
        curve = privacy_curve(sig)
        reach = graph_reachable(auto.transitions)
        worst = max(regret_by_enumeration(game.payoffs, auto.profile(w)) for w in reach)
        if worst > curve.eta(delta) + 1e-6:
            found.append((game, sig, auto, delta, curve))
    return found


def _path_probability(sig, auto, path):
    w, prob = auto.initial, 1.0
    for s in path:
        mix = auto.profile(w)
        q = sum(math.prod(float(mix[i][x]) for i, x in enumerate(a)) * float(sig.probs[a][s])
                for a in itertools.product(*map(range, auto.num_actions)))
        prob *= q
        w = int(auto.transitions[w, s])
    return prob, w


def test_criterion_3_violations_yield_profitable_deviations():
    start = time.perf_counter()
    witnessed = 0
    for game, sig, auto, delta, curve in _violating_instances(100):
        report = verify_theorem3(game, sig, auto, delta, curve, claimed_xi=0.0)
        assert not report.passed
        assert len(report.deviations) == len(report.violations) >= 1
        values = value_iteration(game.payoffs, sig.probs, auto.decisions, auto.transitions, delta)
        gains = one_shot_gains(game.payoffs, sig.probs, auto.decisions, auto.transitions, delta, values)
        for dev in report.deviations:
            assert dev.gain is not None and dev.gain > 0
            assert dev.gain_solved == pytest.approx(dev.gain, abs=1e-9)
            prob, w = _path_probability(sig, auto, dev.path)
            assert auto.state_names[w] == dev.state
            expected = prob * delta ** len(dev.path) * gains[(dev.player, w, dev.action)]
            assert dev.gain == pytest.approx(expected, abs=1e-9)
            witnessed += 1
    assert witnessed >= 100
    assert _elapsed(start) < 60


# -- 4 ---------------------------------------------------------------------

def test_criterion_4_anonymous_rate_band():
    start = time.perf_counter()
    ns = [2 ** k for k in range(4, 15)]
    result = scan_n(ScanConfig("anonymous", 0.9, noise_std=1.0), ns)
    assert [r["n"] for r in result.rows] == ns
    assert result.band_ratio <= 1.5
    etas = [r["eta_at_delta"] for r in result.rows]
    assert all(b < a for a, b in zip(etas, etas[1:]))
    assert etas[-1] < etas[0] / 100
    assert result.monotone
    assert _elapsed(start) < 60


# -- 5 ---------------------------------------------------------------------

def test_criterion_5_closed_forms():
    rng = np.random.default_rng(5)
    for _ in range(50):
        s, eps, gamma = rng.uniform(0.01, 3), rng.uniform(0.01, 0.99), rng.uniform(1e-6, 0.99)
        want = math.sqrt(math.log(1.25) - math.log(gamma)) * s / eps
        assert gaussian_sigma(SensitivitySpec(s), eps, gamma) == pytest.approx(want, rel=1e-12, abs=1e-12)

        k = int(rng.integers(1, 200))
        e0, g0, slack = rng.uniform(0, 0.5), rng.uniform(0, 1e-3), rng.uniform(1e-9, 0.5)
        got = compose_advanced(k, e0, g0, slack)
        want_eps = e0 * math.sqrt(-2 * k * math.log(slack)) + k * e0 * math.expm1(e0)
        assert abs(got.eps - want_eps) <= 1e-12 * max(1.0, want_eps)
        assert abs(got.gamma - min(1.0, k * g0 + slack)) <= 1e-12

        parts = [PrivacyParams(rng.uniform(0, 1), rng.uniform(0, 0.1)) for _ in range(int(rng.integers(1, 6)))]
        got = compose_basic(parts)
        assert abs(got.eps - math.fsum(p.eps for p in parts)) <= 1e-12
        assert abs(got.gamma - min(1.0, math.fsum(p.gamma for p in parts))) <= 1e-12

        n = int(rng.integers(1, 1000))
        k = int(rng.integers(0, n + 1))
        got = subsample_privacy(k, n)
        assert got.eps == 0 and abs(got.gamma - k / n) <= 1e-12

        delta = rng.uniform(0, 0.999)
        p = PrivacyParams(rng.uniform(0, 2), rng.uniform(0, 1))
        want = (p.eps + p.gamma) * delta / (1 - delta)
        assert abs(anti_folk_bound(delta, p) - want) <= 1e-12 * max(1.0, want)

        # the calibration inverts: the noise it prescribes buys back gamma
        sigma = gaussian_sigma(SensitivitySpec(s), eps, gamma)
        assert gaussian_gamma(SensitivitySpec(s), sigma, eps) == pytest.approx(gamma, rel=1e-9)


# -- 6 ---------------------------------------------------------------------

def test_criterion_6_conditional_play():
    rng = np.random.default_rng(6)
    compared = 0
    for _ in range(50):
        ks = (int(rng.integers(2, 4)), int(rng.integers(2, 4)))
        m = int(rng.integers(2, 4))
        horizon = int(rng.integers(2, 5))
        sig = random_structure(rng, 2, ks, m, zero_prob=0.2)
        players = tuple(random_exact_private_automaton(rng, k, m) for k in ks)
        autos = PrivateStrategyAutomaton(players)
        for h, prob, sigma_hat in public_histories(sig, autos, horizon):
            got = conditional_play_distribution(sig, autos, h)
            want = sigma_hat_by_product(sig, players, h)
            for g, w in zip(got, want):
                assert list(g) == w
            assert [list(x) for x in sigma_hat] == want
            compared += 1

        # public strategies: conditional play is the decision at the public state
        pub = random_exact_public_automaton(rng, ks, m)
        for h, prob, sigma_hat in public_histories(sig, pub, horizon):
            w = pub.initial
            for s in h:
                w = int(pub.transitions[w, s])
            for i in range(2):
                assert list(sigma_hat[i]) == list(pub.decisions[i][w])
    assert compared > 100


# -- 7 ---------------------------------------------------------------------

PD_RAW = np.array([[[3, 3], [0, 4]], [[4, 0], [1, 1]]], dtype=float)


def _observe_opponent(flip, exact=False):
    """Private monitoring: each player sees the other's action, flipped with probability ``flip``."""
    one = Fraction(1) if exact else 1.0

    def see(action, s):
        return one - flip if s == action else flip

    probs = np.empty((2, 2, 4), dtype=object if exact else float)
    for a in itertools.product(range(2), repeat=2):
        for s0, s1 in itertools.product(range(2), repeat=2):
            probs[a + (2 * s0 + s1,)] = see(a[1], s0) * see(a[0], s1)
    return SignalStructure("private", probs, ("C", "D"))


def _grim_player():
    # cooperate until the own signal reports a defection
    trans = np.array([[[0, 1], [0, 1]], [[1, 1], [1, 1]]])
    return PlayerAutomaton(np.array([[1.0, 0.0], [0.0, 1.0]]), trans, 0)


def test_criterion_7_private_monitoring():
    start = time.perf_counter()
    game = StageGame.normalized(PD_RAW)
    noisy = _observe_opponent(0.45)
    noisy_curve = privacy_curve(noisy)
    assert noisy_curve.total_star <= 0.1 + 1e-9

    # stage-Nash repetition passes with zero deviation values
    defect = PlayerAutomaton(np.array([[0.0, 1.0]]), np.zeros((1, 2, 2), dtype=int), 0)
    nash = PrivateStrategyAutomaton((defect, defect))
    report = verify_theorem4(game, _observe_opponent(0.3), nash, 0.9, privacy_curve(_observe_opponent(0.3)), 5)
    assert report.passed and report.xi <= 1e-12
    assert max(c.regret for c in report.per_state) <= 1e-12

    # noiseless grim trigger: an exact equilibrium whose cooperation exceeds the noised eta
    grim = PrivateStrategyAutomaton((_grim_player(), _grim_player()))
    delta = 0.5
    noiseless = _observe_opponent(0.0)
    report = verify_theorem4(game, noiseless, grim, delta, noisy_curve, 5, require_full_support=False)
    assert report.xi <= 1e-12
    assert len(report.violations) >= 1
    own = verify_theorem4(game, noiseless, grim, delta, privacy_curve(noiseless), 5, require_full_support=False)
    assert own.passed and not own.informative

    # heavily noised trigger stays within its own bound at every history
    report = verify_theorem4(game, noisy, grim, delta, noisy_curve, 5)
    assert report.passed

    # beliefs agree with whole-path enumeration, exactly
    rng = np.random.default_rng(70)
    for _ in range(5):
        sig = _observe_opponent(Fraction(int(rng.integers(1, 5)), 10), exact=True)
        players = tuple(random_exact_private_automaton(rng, 2, 2) for _ in range(2))
        oracle = beliefs_by_paths(sig, players, 4)
        got = track_beliefs(game, sig, PrivateStrategyAutomaton(players), 4)
        assert len(got) == len(oracle)
        for b in got:
            prob, post = oracle[(b.player, b.history)]
            assert b.probability == prob
            assert b.posterior == post
    assert _elapsed(start) < 120


# -- 8 ---------------------------------------------------------------------

def test_criterion_8_monotonicity():
    rng = np.random.default_rng(8)
    grid = np.array([0.0, 0.05, 0.2, 0.5, 1.0, 2.0])
    curves = []
    for _ in range(200):
        n = int(rng.integers(1, 4))
        ks = tuple(int(rng.integers(2, 4)) for _ in range(n))
        m = int(rng.integers(2, 8))
        sig = random_structure(rng, n, ks, m, exact=False, zero_prob=0.2)
        merge = [int(x) for x in rng.integers(0, max(1, m - 1), size=m)]
        coarse = coarsen_signals(sig, merge)
        for e in grid:
            assert finite_dp_gamma(coarse, e)[0] <= finite_dp_gamma(sig, e)[0] + 1e-12
        curves.append(privacy_curve(sig, grid))
    for _ in range(100):
        ks = tuple(int(rng.integers(2, 4)) for _ in range(2))
        first = random_structure(rng, 2, ks, int(rng.integers(2, 5)), exact=False)
        second = random_structure(rng, 2, ks, int(rng.integers(2, 5)), exact=False)
        both = product_structure(first, second)
        for e1, e2 in itertools.product(grid[:4], repeat=2):
            bound = finite_dp_gamma(first, e1)[0] + finite_dp_gamma(second, e2)[0]
            assert finite_dp_gamma(both, e1 + e2)[0] <= bound + 1e-12
        curves.append(privacy_curve(both, grid))
    for curve in curves:
        assert np.all(np.diff(curve.gamma) <= 1e-12)


# -- 9 ---------------------------------------------------------------------

def test_criterion_9_collapse_demo():
    first = demo_collapse(0.9, 0.1)
    second = demo_collapse(0.9, 0.1)
    assert first.n_star is not None
    assert first.to_dict() == second.to_dict()
    assert first.narrative() == second.narrative()
    assert first.contrast_xi <= 1e-9 and first.contrast_certified
