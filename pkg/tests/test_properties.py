"""Property tests over randomly drawn structures, games and automata."""

import math
from fractions import Fraction

import numpy as np
from hypothesis import given, settings, strategies as st

from antifolk import io as aio
from antifolk.game import StageGame, nash_regret
from antifolk.privacy import (PrivacyParams, anti_folk_bound, coarsen_signals, compose_advanced, finite_dp_gamma,
                              privacy_curve)
from antifolk.repeated import (PrivateStrategyAutomaton, solve_values_public, track_beliefs, verify_theorem1)
from antifolk.signals import SignalStructure

from oracles import (event_gamma_exact, noised_statistic_structure, random_exact_private_automaton,
                     random_public_automaton, random_structure)

FAST = settings(max_examples=60, deadline=None)
SEEDS = st.integers(0, 2 ** 32 - 1)


def _float_rows(data, shape, m):
    rows = data.draw(st.lists(st.lists(st.floats(0.01, 1.0), min_size=m, max_size=m),
                              min_size=math.prod(shape), max_size=math.prod(shape)))
    probs = np.array(rows).reshape(shape + (m,))
    return probs / probs.sum(axis=-1, keepdims=True)


@FAST
@given(st.data(), st.sampled_from([(2,), (2, 2), (3, 2)]), st.integers(2, 5))
def test_gamma_lies_in_unit_interval_and_decreases(data, shape, m):
    sig = SignalStructure("public", _float_rows(data, shape, m), tuple(range(m)))
    eps = sorted(data.draw(st.lists(st.floats(0, 5), min_size=2, max_size=4)))
    gammas = [finite_dp_gamma(sig, e)[0] for e in eps]
    assert all(0 <= g <= 1 for g in gammas)
    assert all(b <= a + 1e-12 for a, b in zip(gammas, gammas[1:]))


@FAST
@given(st.data(), st.integers(2, 5))
def test_gamma_at_zero_is_largest_neighbor_total_variation(data, m):
    probs = _float_rows(data, (2, 2), m)
    sig = SignalStructure("public", probs, tuple(range(m)))
    tv = max(0.5 * np.abs(probs[a] - probs[b]).sum()
             for a, b in [((0, 0), (1, 0)), ((0, 1), (1, 1)), ((0, 0), (0, 1)), ((1, 0), (1, 1))])
    assert math.isclose(finite_dp_gamma(sig, 0.0)[0], tv, abs_tol=1e-12)


@FAST
@given(SEEDS, st.integers(2, 6))
def test_exact_gamma_matches_event_oracle(seed, m):
    rng = np.random.default_rng(seed)
    sig = random_structure(rng, 2, (2, 2), m, zero_prob=0.3)
    r = Fraction(int(rng.integers(1, 5)), int(rng.integers(1, 3)))
    r = max(r, Fraction(1))
    assert finite_dp_gamma(sig, ratio=r)[0] == event_gamma_exact(sig.probs, r)


@FAST
@given(SEEDS, st.integers(2, 6), st.floats(0, 3))
def test_coarsening_never_hurts(seed, m, eps):
    rng = np.random.default_rng(seed)
    sig = random_structure(rng, 2, (2, 3), m, exact=False, zero_prob=0.2)
    merge = [int(x) for x in rng.integers(0, m, size=m)]
    assert finite_dp_gamma(coarsen_signals(sig, merge), eps)[0] <= finite_dp_gamma(sig, eps)[0] + 1e-12


@FAST
@given(SEEDS)
def test_regret_is_between_zero_and_one(seed):
    rng = np.random.default_rng(seed)
    game = StageGame(rng.random((2, 3, 2)))
    prof = (rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(3)))
    nr = nash_regret(game, prof)
    assert np.all(nr.regrets >= 0) and nr.max_regret <= 1


@FAST
@given(st.floats(0, 0.99), st.floats(0, 0.99), st.floats(0, 2), st.floats(0, 1))
def test_bound_grows_with_patience(d1, d2, eps, gamma):
    lo, hi = sorted((d1, d2))
    p = PrivacyParams(eps, gamma)
    assert anti_folk_bound(lo, p) <= anti_folk_bound(hi, p)


@FAST
@given(st.integers(1, 50), st.floats(0, 0.5), st.floats(0, 1e-3), st.floats(1e-9, 0.5))
def test_advanced_composition_grows_with_k(k, eps, gamma, slack):
    assert compose_advanced(k, eps, gamma, slack).eps <= compose_advanced(k + 1, eps, gamma, slack).eps


@FAST
@given(SEEDS, st.floats(0, 0.95))
def test_values_stay_in_unit_interval(seed, delta):
    rng = np.random.default_rng(seed)
    sig = noised_statistic_structure(rng, (2, 2))
    auto = random_public_automaton(rng, (2, 2), sig.num_signals)
    v = solve_values_public(StageGame(rng.random((2, 2, 2))), sig, auto, delta).values
    assert np.all(v >= -1e-12) and np.all(v <= 1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(SEEDS, st.sampled_from([0.3, 0.6, 0.9]))
def test_measured_slack_always_certifies(seed, delta):
    rng = np.random.default_rng(seed)
    game = StageGame(rng.random((2, 2, 2)))
    sig = noised_statistic_structure(rng, (2, 2))
    auto = random_public_automaton(rng, (2, 2), sig.num_signals)
    report = verify_theorem1(game, sig, auto, delta, privacy_curve(sig, [0.0, 0.1, 0.5, 1.0]))
    assert report.passed


@settings(max_examples=30, deadline=None)
@given(SEEDS)
def test_posteriors_are_distributions(seed):
    rng = np.random.default_rng(seed)
    sig = random_structure(rng, 2, (2, 2), 2, kind="private", zero_prob=0.2)
    autos = PrivateStrategyAutomaton(tuple(random_exact_private_automaton(rng, 2, 2) for _ in range(2)))
    for b in track_beliefs(None, sig, autos, 3):
        assert sum(b.posterior.values()) == 1
        assert b.probability > 0
        assert {w[b.player] for w in b.posterior} == {next(iter(b.posterior))[b.player]}


@FAST
@given(SEEDS, st.integers(2, 5))
def test_signal_documents_roundtrip_exactly(seed, m):
    rng = np.random.default_rng(seed)
    sig = random_structure(rng, 2, (2, 3), m)
    again = aio.signals_from_dict(aio.signals_to_dict(sig), exact=True)
    assert np.array_equal(again.probs, sig.probs)
