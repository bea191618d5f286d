"""Bayesian bookkeeping over joint automaton states.

Everything here is an exhaustive forward enumeration over positive-probability
steps, so exact (fraction) inputs give exact posteriors. A player's private
history is the tuple ``((a_1, s_1), ..., (a_{t-1}, s_{t-1}))`` of own actions
and own signals; with public monitoring the signal is the public one.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .._prob import REACH_TOL
from ..errors import GuardError, IncompatibleMonitoringError, ZeroProbabilityError
from .automata import as_private
from .values import joint_successors

PUBLIC_HORIZON = 8
PRIVATE_HORIZON = 6
PATH_GUARD = 10**7


def _prepare(sig, strategies):
    autos = as_private(strategies)
    if autos.num_signals != sig.num_signals:
        raise ValueError(f"strategies read {autos.num_signals} signals, structure emits {sig.num_signals}")
    if tuple(autos.num_actions) != tuple(sig.num_actions):
        raise ValueError("strategies and signal structure disagree on action sets")
    if sig.exact and not all(p.exact for p in autos.players):
        autos = autos.to_exact()
    return autos


def _check_horizon(sig, horizon: int):
    limit = PUBLIC_HORIZON if sig.kind == "public" else PRIVATE_HORIZON
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if horizon > limit:
        raise GuardError(f"horizon {horizon} exceeds the {sig.kind}-monitoring limit {limit}")


def _tol(sig) -> float:
    return 0.0 if sig.exact else REACH_TOL


class _Successors:
    """Memoized one-step expansions keyed by joint state."""

    def __init__(self, sig, autos):
        self.sig, self.autos, self.tol = sig, autos, _tol(sig)
        self.cache: dict = {}
        self.outcome_signals = sig.outcome_signals()

    def __call__(self, w):
        if w not in self.cache:
            self.cache[w] = joint_successors(self.sig, self.autos, w, self.tol)
        return self.cache[w]


class _Budget:
    def __init__(self, guard: int):
        self.left = guard

    def spend(self, k: int):
        self.left -= k
        if self.left < 0:
            raise GuardError("enumeration exceeds the joint-path guard")


@dataclass(frozen=True, eq=False)
class BeliefState:
    """Posterior over joint automaton states after a private history of ``player``.

    ``posterior`` maps joint-state tuples (own component included, and
    determined by the history) to probabilities summing to 1;
    ``probability`` is the unconditional probability of the history.
    """

    player: int
    history: tuple
    probability: object
    posterior: dict

    @property
    def period(self) -> int:
        return len(self.history) + 1

    def opponents(self) -> dict:
        out: dict = defaultdict(int)
        for w, p in self.posterior.items():
            out[w[: self.player] + w[self.player + 1:]] += p
        return dict(out)


def track_beliefs(game, sig, strategies, horizon: int, guard: int = PATH_GUARD) -> list[BeliefState]:
    """Posterior over joint states for every player and positive-probability private history.

    Covers periods ``1..horizon`` (histories of length ``0..horizon-1``).
    ``game`` is only used to check action sets.
    """
    autos = _prepare(sig, strategies)
    if game is not None and tuple(game.num_actions) != tuple(autos.num_actions):
        raise ValueError("strategies and game disagree on action sets")
    _check_horizon(sig, horizon)
    succ = _Successors(sig, autos)
    budget = _Budget(guard)
    one = 1 if sig.exact else 1.0
    out = []
    for i in range(autos.n):
        level = {(): {autos.initial: one}}
        for t in range(horizon):
            for h, dist in level.items():
                total = sum(dist.values())
                out.append(BeliefState(i, h, total, {w: p / total for w, p in dist.items()}))
            if t == horizon - 1:
                break
            nxt: dict = defaultdict(lambda: defaultdict(int))
            for h, dist in level.items():
                for w, p in dist.items():
                    steps = succ(w)
                    budget.spend(len(steps))
                    for a, o, q, w2 in steps:
                        key = h + ((a[i], int(succ.outcome_signals[o][i])),)
                        nxt[key][w2] += p * q
            level = {h: dict(d) for h, d in nxt.items()}
    return out


def _require_public(sig):
    if sig.kind != "public":
        raise IncompatibleMonitoringError("conditioning on a public history needs public monitoring")


def _filter_step(succ, alpha: dict, signal: int) -> dict:
    nxt: dict = defaultdict(int)
    for w, p in alpha.items():
        for a, o, q, w2 in succ(w):
            if o == signal:
                nxt[w2] += p * q
    return dict(nxt)


def _marginal_play(autos, alpha: dict):
    total = sum(alpha.values())
    out = []
    for i, player in enumerate(autos.players):
        acc = 0
        for w, p in alpha.items():
            acc = acc + p * player.decisions[w[i]]
        out.append(acc / total)
    return tuple(out)


def public_history_filter(sig, strategies, history):
    """Unnormalized weights ``Pr[joint state at period t, s^{t-1}]`` after a public history."""
    _require_public(sig)
    autos = _prepare(sig, strategies)
    succ = _Successors(sig, autos)
    alpha = {autos.initial: 1 if sig.exact else 1.0}
    for s in history:
        if not 0 <= s < sig.num_signals:
            raise ValueError(f"signal {s} outside the signal set")
        alpha = _filter_step(succ, alpha, s)
    if not alpha or not sum(alpha.values()) > 0:
        raise ZeroProbabilityError(f"public history {tuple(history)} has probability zero")
    return autos, alpha


def conditional_play_distribution(sig, strategies, history) -> tuple:
    """Each player's period-t action distribution given only the public history ``s^{t-1}``.

    Averages the player's decision over the posterior on own histories
    (and hence own automaton states) given the public signals.
    """
    if len(history) > PUBLIC_HORIZON:
        raise GuardError(f"history length {len(history)} exceeds {PUBLIC_HORIZON}")
    autos, alpha = public_history_filter(sig, strategies, history)
    return _marginal_play(autos, alpha)


def joint_play_distribution(sig, strategies, history) -> dict:
    """Joint period-t action distribution given the public history."""
    autos, alpha = public_history_filter(sig, strategies, history)
    total = sum(alpha.values())
    out: dict = defaultdict(int)
    for w, p in alpha.items():
        mixes = autos.profile(w)
        for a in np.ndindex(*autos.num_actions):
            q = p
            for m, x in zip(mixes, a):
                q = q * m[x]
            if q:
                out[a] += q / total
    return dict(out)


def factorization_gap(sig, strategies, history) -> float:
    """Max gap between the joint period-t play and the product of the conditional marginals.

    Zero for public strategies; private bookkeeping can correlate actions
    through the shared public history.
    """
    marg = conditional_play_distribution(sig, strategies, history)
    joint = joint_play_distribution(sig, strategies, history)
    worst = 0.0
    for a in np.ndindex(*(len(m) for m in marg)):
        prod = 1
        for m, x in zip(marg, a):
            prod = prod * m[x]
        worst = max(worst, abs(float(joint.get(a, 0) - prod)))
    return worst


def public_histories(sig, strategies, horizon: int, guard: int = PATH_GUARD):
    """Yield ``(history, probability, sigma_hat)`` for positive-probability public histories.

    Histories have length ``0..horizon-1`` and come in breadth-first,
    lexicographic order.
    """
    _require_public(sig)
    _check_horizon(sig, horizon)
    autos = _prepare(sig, strategies)
    succ = _Successors(sig, autos)
    budget = _Budget(guard)
    level = [((), {autos.initial: 1 if sig.exact else 1.0})]
    tol = _tol(sig)
    for t in range(horizon):
        for h, alpha in level:
            yield h, sum(alpha.values()), _marginal_play(autos, alpha)
        if t == horizon - 1:
            break
        nxt = []
        for h, alpha in level:
            budget.spend(len(alpha) * sig.num_signals)
            for s in range(sig.num_signals):
                child = _filter_step(succ, alpha, s)
                mass = sum(child.values())
                if child and mass > tol:
                    nxt.append((h + (s,), child))
        level = nxt


def history_profiles(sig, strategies, horizon: int, guard: int = PATH_GUARD):
    """Yield ``(period, {history_profile: (probability, joint_state)})`` for periods ``1..horizon``.

    A history profile is the tuple of all players' private histories; it
    pins down the joint automaton state.
    """
    _check_horizon(sig, horizon)
    autos = _prepare(sig, strategies)
    succ = _Successors(sig, autos)
    budget = _Budget(guard)
    level = {tuple(() for _ in range(autos.n)): (1 if sig.exact else 1.0, autos.initial)}
    for t in range(1, horizon + 1):
        yield t, level
        if t == horizon:
            break
        nxt: dict = {}
        for hp, (p, w) in level.items():
            steps = succ(w)
            budget.spend(len(steps))
            for a, o, q, w2 in steps:
                sigs = succ.outcome_signals[o]
                key = tuple(h + ((a[j], int(sigs[j])),) for j, h in enumerate(hp))
                prev = nxt.get(key)
                nxt[key] = (p * q + (prev[0] if prev else 0), w2)
        level = nxt


