"""Finite-state strategy automata for repeated games.

A public automaton is shared by all players: one state set, one transition
driven by the public signal, one decision rule per player. A private
automaton gives each player their own machine whose transition reads
(own action, own signal).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .._prob import check_distribution, exact_array, is_exact


def _check_transitions(table, num_states: int, what: str) -> np.ndarray:
    arr = np.asarray(table)
    if arr.size and (not np.issubdtype(arr.dtype, np.integer)):
        if not np.all(arr == np.round(arr.astype(float))):
            raise ValueError(f"{what} must hold integer state indices")
        arr = arr.astype(int)
    arr = arr.astype(int)
    if arr.size and (arr.min() < 0 or arr.max() >= num_states):
        raise ValueError(f"{what} points outside the state set")
    return arr


@dataclass(frozen=True, eq=False)
class PublicStrategyAutomaton:
    """Public strategy profile as a machine over public signals.

    ``decisions[i][w]`` is player ``i``'s mixed action in state ``w``;
    ``transitions[w, s]`` is the next state after public signal ``s``.
    """

    decisions: tuple
    transitions: np.ndarray
    initial: int = 0
    state_names: tuple | None = None

    def __post_init__(self):
        decisions = tuple(check_distribution(np.asarray(d), what=f"decision rule of player {i}")
                          for i, d in enumerate(self.decisions))
        if not decisions:
            raise ValueError("automaton needs at least one player")
        num_states = decisions[0].shape[0]
        if any(d.ndim != 2 or d.shape[0] != num_states for d in decisions):
            raise ValueError("every decision rule must be a (|W|, |A_i|) table")
        trans = _check_transitions(self.transitions, num_states, "transition table")
        if trans.ndim != 2 or trans.shape[0] != num_states:
            raise ValueError("transition table must have shape (|W|, |S|)")
        if not 0 <= self.initial < num_states:
            raise ValueError("initial state outside the state set")
        names = self.state_names or tuple(str(w) for w in range(num_states))
        if len(names) != num_states:
            raise ValueError("one name per state required")
        object.__setattr__(self, "decisions", decisions)
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "state_names", tuple(str(x) for x in names))

    @property
    def n(self) -> int:
        return len(self.decisions)

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_signals(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_actions(self) -> tuple[int, ...]:
        return tuple(d.shape[1] for d in self.decisions)

    def profile(self, state: int) -> tuple[np.ndarray, ...]:
        return tuple(d[state] for d in self.decisions)

    def to_exact(self) -> "PublicStrategyAutomaton":
        return PublicStrategyAutomaton(tuple(exact_array(d) for d in self.decisions),
                                       self.transitions, self.initial, self.state_names)


@dataclass(frozen=True, eq=False)
class PlayerAutomaton:
    """One player's machine: ``transitions[w, a, s]`` reads own action and own signal."""

    decisions: np.ndarray
    transitions: np.ndarray
    initial: int = 0

    def __post_init__(self):
        dec = check_distribution(np.asarray(self.decisions), what="decision rule")
        if dec.ndim != 2:
            raise ValueError("decision rule must be a (|W_i|, |A_i|) table")
        trans = _check_transitions(self.transitions, dec.shape[0], "transition table")
        if trans.ndim != 3 or trans.shape[:2] != dec.shape:
            raise ValueError("transition table must have shape (|W_i|, |A_i|, |S|)")
        if not 0 <= self.initial < dec.shape[0]:
            raise ValueError("initial state outside the state set")
        object.__setattr__(self, "decisions", dec)
        object.__setattr__(self, "transitions", trans)

    @property
    def num_states(self) -> int:
        return self.decisions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.decisions.shape[1]

    @property
    def num_signals(self) -> int:
        return self.transitions.shape[2]

    @property
    def exact(self) -> bool:
        return is_exact(self.decisions)


@dataclass(frozen=True, eq=False)
class PrivateStrategyAutomaton:
    """Profile of per-player machines driven by (own action, own signal)."""

    players: tuple

    def __post_init__(self):
        players = tuple(self.players)
        if not players:
            raise ValueError("automaton needs at least one player")
        if len({p.num_signals for p in players}) != 1:
            raise ValueError("players disagree on the signal alphabet")
        object.__setattr__(self, "players", players)

    @classmethod
    def from_public(cls, auto: PublicStrategyAutomaton) -> "PrivateStrategyAutomaton":
        """Each player runs a copy of the public machine, ignoring own actions."""
        players = []
        for d in auto.decisions:
            trans = np.repeat(auto.transitions[:, None, :], d.shape[1], axis=1)
            players.append(PlayerAutomaton(d, trans, auto.initial))
        return cls(tuple(players))

    @property
    def n(self) -> int:
        return len(self.players)

    @property
    def num_actions(self) -> tuple[int, ...]:
        return tuple(p.num_actions for p in self.players)

    @property
    def num_signals(self) -> int:
        return self.players[0].num_signals

    @property
    def initial(self) -> tuple[int, ...]:
        return tuple(p.initial for p in self.players)

    @property
    def state_shape(self) -> tuple[int, ...]:
        return tuple(p.num_states for p in self.players)

    def profile(self, joint_state) -> tuple[np.ndarray, ...]:
        return tuple(p.decisions[w] for p, w in zip(self.players, joint_state))

    def step(self, joint_state, actions, signals) -> tuple[int, ...]:
        return tuple(int(p.transitions[w, a, s])
                     for p, w, a, s in zip(self.players, joint_state, actions, signals))

    def to_exact(self) -> "PrivateStrategyAutomaton":
        return PrivateStrategyAutomaton(tuple(PlayerAutomaton(exact_array(p.decisions), p.transitions, p.initial)
                                              for p in self.players))


def as_private(strategies) -> PrivateStrategyAutomaton:
    if isinstance(strategies, PublicStrategyAutomaton):
        return PrivateStrategyAutomaton.from_public(strategies)
    if isinstance(strategies, PrivateStrategyAutomaton):
        return strategies
    raise TypeError(f"expected a strategy automaton, got {type(strategies).__name__}")


def history_automaton(num_actions: int, num_signals: int, horizon: int,
                      rule: Callable[[tuple], Sequence[float]]) -> PlayerAutomaton:
    """Tree machine whose state is the own history ``((a_1, s_1), ...)`` up to ``horizon - 1`` steps.

    ``rule(history)`` gives the mixed action after ``history``. Histories
    longer than the tree keep the last level's state (self loop).
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    nodes: list[tuple] = [()]
    index = {(): 0}
    for depth in range(horizon - 1):
        for h in [h for h in nodes if len(h) == depth]:
            for a, s in itertools.product(range(num_actions), range(num_signals)):
                child = h + ((a, s),)
                index[child] = len(nodes)
                nodes.append(child)
    decisions = np.array([np.asarray(rule(h), dtype=float) for h in nodes])
    trans = np.empty((len(nodes), num_actions, num_signals), dtype=int)
    for k, h in enumerate(nodes):
        for a, s in itertools.product(range(num_actions), range(num_signals)):
            trans[k, a, s] = index.get(h + ((a, s),), k)
    return PlayerAutomaton(decisions, trans, 0)
