"""Continuation values, reachability, and one-shot deviation gains.

Values are normalized discounted sums ``(1 - delta) sum_t delta^t u_t``,
so they lie in [0, 1] whenever stage payoffs do.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .._prob import float_array, positive
from ..errors import GuardError, IncompatibleMonitoringError
from ..signals import AggregateSignalStructure
from .automata import PrivateStrategyAutomaton, PublicStrategyAutomaton

RESIDUAL_TOL = 1e-10
JOINT_STATE_GUARD = 10**4


def check_delta(delta: float) -> float:
    delta = float(delta)
    if not 0 <= delta < 1:
        raise ValueError(f"discount factor must lie in [0, 1), got {delta}")
    return delta


def check_public_pair(sig, auto: PublicStrategyAutomaton, game=None):
    if sig.kind != "public":
        raise IncompatibleMonitoringError("this verifier needs public monitoring")
    if auto.num_signals != sig.num_signals:
        raise ValueError(f"automaton reads {auto.num_signals} signals, structure emits {sig.num_signals}")
    if tuple(auto.num_actions) != tuple(sig.num_actions):
        raise ValueError("automaton and signal structure disagree on action sets")
    if game is not None and tuple(game.num_actions) != tuple(auto.num_actions):
        raise ValueError("automaton and game disagree on action sets")


def pure_signal_distribution(sig, actions) -> np.ndarray:
    """``P_a`` for a pure profile, from either signal representation."""
    if isinstance(sig, AggregateSignalStructure):
        return sig.probs[sum(sig.weights[a] for a in actions)]
    return sig.probs[tuple(actions)]


@dataclass(frozen=True, eq=False)
class ValueTable:
    """``values[i, w]``: player ``i``'s continuation value from state ``w``."""

    values: np.ndarray
    delta: float
    residual: float
    states: tuple | None = None


def _public_stage(game, sig, auto):
    sig_f = sig.to_float() if sig.exact else sig
    stage = np.empty((auto.num_states, game.n))
    trans = np.zeros((auto.num_states, auto.num_states))
    for w in range(auto.num_states):
        prof = tuple(float_array(d) for d in auto.profile(w))
        stage[w] = game.expected_payoff(prof)
        dist = float_array(sig_f.distribution(prof))
        np.add.at(trans[w], auto.transitions[w], dist)
    return stage, trans


def _solve(stage: np.ndarray, trans: np.ndarray, delta: float):
    lhs = np.eye(len(trans)) - delta * trans
    values = np.linalg.solve(lhs, (1 - delta) * stage)
    residual = float(np.max(np.abs(values - (1 - delta) * stage - delta * trans @ values), initial=0.0))
    if residual > RESIDUAL_TOL:
        raise ArithmeticError(f"value recursion residual {residual:.3g} exceeds {RESIDUAL_TOL}")
    return values, residual


def solve_values_public(game, sig, auto: PublicStrategyAutomaton, delta: float) -> ValueTable:
    """Solve ``V = (1 - delta) u(d) + delta P V`` over the automaton states."""
    delta = check_delta(delta)
    check_public_pair(sig, auto, game)
    stage, trans = _public_stage(game, sig, auto)
    values, residual = _solve(stage, trans, delta)
    return ValueTable(values.T.copy(), delta, residual, tuple(range(auto.num_states)))


@dataclass(frozen=True, eq=False)
class DeviationTable:
    """One-shot deviation values ``dev[i][w, a]`` and their max gain over the prescription.

    ``gains[i, w] = max_a dev[i][w, a] - V_i(w)`` and ``best[i, w]`` is the
    lowest-index maximizing action.
    """

    dev: tuple
    gains: np.ndarray
    best: np.ndarray
    values: ValueTable

    def max_gain(self, states=None):
        """``(xi, (player, state, action))`` over the given states, xi clipped at 0."""
        states = range(self.gains.shape[1]) if states is None else list(states)
        best_val, witness = -math.inf, None
        for w in states:
            for i in range(self.gains.shape[0]):
                if self.gains[i, w] > best_val:
                    best_val, witness = float(self.gains[i, w]), (i, int(w), int(self.best[i, w]))
        if witness is None:
            return 0.0, None
        return max(0.0, best_val), witness


def _player_groups(game, decisions) -> list[list[int]]:
    if not getattr(game, "anonymous", False):
        return [[i] for i in range(game.n)]
    groups: dict[bytes, list[int]] = {}
    for i, d in enumerate(decisions):
        groups.setdefault(float_array(d).tobytes(), []).append(i)
    return list(groups.values())


def deviation_table(game, sig, auto: PublicStrategyAutomaton, delta: float,
                    values: ValueTable | None = None) -> DeviationTable:
    delta = check_delta(delta)
    values = values if values is not None else solve_values_public(game, sig, auto, delta)
    sig_f = sig.to_float() if sig.exact else sig
    groups = _player_groups(game, auto.decisions)
    dev = [None] * game.n
    gains = np.zeros((game.n, auto.num_states))
    best = np.zeros((game.n, auto.num_states), dtype=int)
    for group in groups:
        i = group[0]
        table = np.empty((auto.num_states, game.num_actions[i]))
        for w in range(auto.num_states):
            prof = tuple(float_array(d) for d in auto.profile(w))
            stage = float_array(game.deviation_payoffs(i, prof))
            cont = float_array(sig_f.deviation_distributions(i, prof)) @ values.values[i, auto.transitions[w]]
            table[w] = (1 - delta) * stage + delta * cont
        g = table.max(axis=1) - values.values[i]
        b = table.argmax(axis=1)
        for j in group:
            dev[j] = table
            gains[j] = g
            best[j] = b
    return DeviationTable(tuple(dev), gains, best, values)


def one_shot_deviation_gain(game, sig, auto: PublicStrategyAutomaton, delta: float, states=None):
    """Largest gain from deviating for one period at a reachable state, then reverting.

    Returns ``(xi, (player, state, action))``; xi >= 0 because the
    prescribed mix is always available. ``states`` defaults to the states
    reachable along any signal path.
    """
    table = deviation_table(game, sig, auto, delta)
    if states is None:
        states = reachable_states(auto, sig, mode="graph").states
    return table.max_gain(states)


@dataclass(frozen=True, eq=False)
class Reachability:
    """Reachable states, their long-run occupancy, and which are recurrent."""

    states: tuple
    occupancy: np.ndarray
    recurrent: np.ndarray
    mode: str
    parents: dict

    def path_to(self, state: int) -> list[tuple[int, int]]:
        """Shortest ``[(state, signal), ...]`` edge list from the initial state to ``state``."""
        if state not in self.parents:
            raise ValueError(f"state {state} is not reachable")
        path = []
        while self.parents[state] is not None:
            prev, s = self.parents[state]
            path.append((prev, s))
            state = prev
        return path[::-1]


def _public_edges(auto: PublicStrategyAutomaton, sig):
    exact = sig.exact
    probs = np.zeros((auto.num_states, auto.num_signals), dtype=object if exact else float)
    for w in range(auto.num_states):
        if exact:
            probs[w] = sig.distribution(auto.profile(w))
        else:
            probs[w] = float_array(sig.distribution(tuple(float_array(d) for d in auto.profile(w))))
    return probs, exact


def reachable_states(auto: PublicStrategyAutomaton, sig, mode: str = "positive") -> Reachability:
    """Breadth-first closure from the initial state.

    ``mode="positive"`` follows only signals with positive probability
    under prescribed play (above 1e-12 in float mode); ``mode="graph"``
    follows every signal.
    """
    if mode not in ("positive", "graph"):
        raise ValueError("mode must be 'positive' or 'graph'")
    probs, exact = _public_edges(auto, sig)
    parents = {auto.initial: None}
    queue = deque([auto.initial])
    while queue:
        w = queue.popleft()
        for s in range(auto.num_signals):
            if mode == "graph" or positive(probs[w, s], exact):
                nxt = int(auto.transitions[w, s])
                if nxt not in parents:
                    parents[nxt] = (w, s)
                    queue.append(nxt)
    states = tuple(sorted(parents))
    occupancy, recurrent = _long_run(auto, probs, exact, states)
    return Reachability(states, occupancy, recurrent, mode, parents)


def _long_run(auto, probs, exact, states):
    # occupancy always follows the prescribed play, whatever the closure mode
    num = auto.num_states
    trans = np.zeros((num, num))
    for w in states:
        for s in range(auto.num_signals):
            p = probs[w, s]
            if positive(p, exact):
                trans[w, auto.transitions[w, s]] += float(p)
    idx = list(states)
    sub = trans[np.ix_(idx, idx)]
    _, labels = connected_components(csr_matrix(sub > 0), directed=True, connection="strong")
    closed = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        outside = np.flatnonzero(labels != c)
        if not np.any(sub[np.ix_(members, outside)] > 0):
            closed.append(members)
    recurrent = np.zeros(num, dtype=bool)
    occupancy = np.zeros(num)
    transient = np.setdiff1d(np.arange(len(idx)), np.concatenate(closed) if closed else [])
    start = idx.index(auto.initial)
    for members in closed:
        block = sub[np.ix_(members, members)]
        k = len(members)
        lhs = np.vstack([(block.T - np.eye(k)), np.ones((1, k))])
        rhs = np.zeros(k + 1)
        rhs[-1] = 1.0
        pi = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
        if start in members:
            absorb = 1.0
        elif start in transient:
            q = sub[np.ix_(transient, transient)]
            r = sub[np.ix_(transient, members)].sum(axis=1)
            h = np.linalg.solve(np.eye(len(transient)) - q, r)
            absorb = float(h[list(transient).index(start)])
        else:
            absorb = 0.0
        for m, p in zip(members, pi):
            recurrent[idx[m]] = True
            occupancy[idx[m]] += absorb * max(float(p), 0.0)
    return occupancy, recurrent


def joint_successors(sig, autos: PrivateStrategyAutomaton, joint_state, tol: float = 0.0):
    """``(actions, outcome, prob, next_state)`` one step from ``joint_state``, for prob above ``tol``.

    Exact structures keep exactly the positive-probability steps.
    """
    exact = sig.exact
    outcome_signals = sig.outcome_signals()
    mixes = autos.profile(joint_state)
    out = []
    for a in itertools.product(*(np.flatnonzero(m > 0) for m in mixes)):
        q = 1
        for m, x in zip(mixes, a):
            q = q * m[x]
        dist = pure_signal_distribution(sig, a)
        for o in range(len(dist)):
            p = q * dist[o]
            if positive(p, exact, tol):
                out.append((tuple(int(x) for x in a), o, p,
                            autos.step(joint_state, a, outcome_signals[o])))
    return out


def next_state_index(autos: PrivateStrategyAutomaton, joint_state, actions, outcome_signals) -> np.ndarray:
    """Flat joint-state index after each outcome, for a fixed state and pure action profile."""
    parts = tuple(p.transitions[w, a, outcome_signals[:, j]]
                  for j, (p, w, a) in enumerate(zip(autos.players, joint_state, actions)))
    return np.ravel_multi_index(parts, autos.state_shape)


@dataclass(frozen=True, eq=False)
class JointValues:
    """Values ``values[w, i]`` over the product of the players' state sets."""

    values: np.ndarray
    shape: tuple
    delta: float
    residual: float

    def __call__(self, joint_state) -> np.ndarray:
        return self.values[np.ravel_multi_index(tuple(joint_state), self.shape)]


def solve_joint_values(game, sig, autos: PrivateStrategyAutomaton, delta: float,
                       guard: int = JOINT_STATE_GUARD) -> JointValues:
    """Continuation values indexed by the joint automaton state (all players' private states)."""
    delta = check_delta(delta)
    shape = autos.state_shape
    size = math.prod(shape)
    if size > guard:
        raise GuardError(f"{size} joint states exceed the guard {guard}")
    sig_f = sig.to_float() if sig.exact else sig
    outcome_signals = sig_f.outcome_signals()
    stage = np.zeros((size, game.n))
    trans = np.zeros((size, size))
    for k, w in enumerate(itertools.product(*map(range, shape))):
        prof = tuple(float_array(m) for m in autos.profile(w))
        stage[k] = game.expected_payoff(prof)
        for a in itertools.product(*(np.flatnonzero(m > 0) for m in prof)):
            q = math.prod(float(m[x]) for m, x in zip(prof, a))
            dist = float_array(pure_signal_distribution(sig_f, a))
            np.add.at(trans[k], next_state_index(autos, w, a, outcome_signals), q * dist)
    values, residual = _solve(stage, trans, delta)
    return JointValues(values, shape, delta, residual)
