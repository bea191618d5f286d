"""Finite monitoring structures and their structural checks.

Two representations share one duck-typed surface (``kind``, ``n``,
``num_actions``, ``num_outcomes``, ``distribution``,
``deviation_distributions``):

* :class:`SignalStructure` stores ``P_a`` for every pure profile. Public
  structures have ``|S|`` outcomes; private ones have ``|S|**n`` outcomes,
  flattened in C order with player 0's signal most significant.
* :class:`AggregateSignalStructure` is a public structure whose law depends
  on the profile only through ``sum_j weights[a_j]`` (action counts for
  anonymous games, total quantity for Cournot).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._prob import check_distribution, exact_array, float_array, is_exact
from .errors import GuardError
from .game import reachable_totals, total_distribution

EXPLICIT_GUARD = 10**7
CONSISTENCY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SignalStructure:
    """Explicit table of signal distributions, one per pure action profile."""

    kind: str
    probs: np.ndarray
    labels: tuple
    expost: tuple | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("public", "private"):
            raise ValueError(f"unknown monitoring kind {self.kind!r}")
        probs = check_distribution(self.probs, what="signal distribution")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", tuple(self.labels))
        n = probs.ndim - 1
        if n < 1:
            raise ValueError("signal table needs one axis per player plus an outcome axis")
        want = len(self.labels) ** n if self.kind == "private" else len(self.labels)
        if probs.shape[-1] != want:
            raise ValueError(f"{self.kind} structure needs {want} outcomes, table has {probs.shape[-1]}")
        if self.expost is not None:
            expost = tuple(np.asarray(u, dtype=float) for u in self.expost)
            if len(expost) != n or any(u.shape != (k, len(self.labels))
                                       for u, k in zip(expost, probs.shape[:-1])):
                raise ValueError("ex-post payoffs must be one (|A_i|, |S|) table per player")
            object.__setattr__(self, "expost", expost)

    @classmethod
    def from_function(cls, num_actions: Sequence[int], labels, fn: Callable, kind: str = "public",
                      expost=None, name: str = "") -> "SignalStructure":
        """Tabulate ``fn(profile) -> distribution over outcomes`` for every pure profile."""
        num_actions = tuple(num_actions)
        first = np.asarray(fn(tuple(0 for _ in num_actions)))
        probs = np.empty(num_actions + first.shape, dtype=first.dtype)
        for a in itertools.product(*map(range, num_actions)):
            probs[a] = fn(a)
        return cls(kind, probs, tuple(labels), expost=expost, name=name)

    @property
    def n(self) -> int:
        return self.probs.ndim - 1

    @property
    def num_actions(self) -> tuple[int, ...]:
        return self.probs.shape[:-1]

    @property
    def num_signals(self) -> int:
        return len(self.labels)

    @property
    def num_outcomes(self) -> int:
        return self.probs.shape[-1]

    @property
    def exact(self) -> bool:
        return is_exact(self.probs)

    def outcome_signals(self) -> np.ndarray:
        """``(num_outcomes, n)`` table of the signal each player sees in each outcome."""
        if self.kind == "public":
            return np.repeat(np.arange(self.num_outcomes)[:, None], self.n, axis=1)
        grids = np.unravel_index(np.arange(self.num_outcomes), (self.num_signals,) * self.n)
        return np.stack(grids, axis=1)

    def marginals(self) -> list[np.ndarray]:
        """Per player, the ``(*num_actions, |S|)`` law of that player's own signal."""
        if self.kind == "public":
            return [self.probs] * self.n
        joint = self.probs.reshape(self.num_actions + (self.num_signals,) * self.n)
        k = len(self.num_actions)
        return [joint.sum(axis=tuple(k + j for j in range(self.n) if j != i)) for i in range(self.n)]

    def distribution(self, profile) -> np.ndarray:
        t = self.probs
        for j in range(self.n - 1, -1, -1):
            t = np.tensordot(t, profile[j], axes=([j], [0]))
        return t

    def deviation_distributions(self, i: int, profile) -> np.ndarray:
        """``(|A_i|, outcomes)`` table of ``P_(a_i, alpha_-i)``."""
        t = self.probs
        for j in range(self.n - 1, -1, -1):
            if j != i:
                t = np.tensordot(t, profile[j], axes=([j], [0]))
        return t

    def embed_private(self) -> "SignalStructure":
        """View a public structure as private monitoring where everyone sees the same signal."""
        if self.kind != "public":
            raise ValueError("structure is already private")
        m = self.num_signals
        out = np.zeros(self.num_actions + (m ** self.n,), dtype=self.probs.dtype)
        diag = [np.ravel_multi_index((s,) * self.n, (m,) * self.n) for s in range(m)]
        out[..., diag] = self.probs
        return SignalStructure("private", out, self.labels, expost=self.expost, name=self.name)

    def to_exact(self) -> "SignalStructure":
        return SignalStructure(self.kind, exact_array(self.probs), self.labels, self.expost, self.name)

    def to_float(self) -> "SignalStructure":
        return SignalStructure(self.kind, float_array(self.probs), self.labels, self.expost, self.name)


def perfect_monitoring(game) -> SignalStructure:
    """Public signal equal to the realized profile, with ex-post payoffs ``U_i(a_i, s) = u_i(s)``."""
    profiles = list(game.profiles())
    index = {a: k for k, a in enumerate(profiles)}
    probs = np.zeros(tuple(game.num_actions) + (len(profiles),))
    for a in profiles:
        probs[a + (index[a],)] = 1.0
    expost = []
    for i, k in enumerate(game.num_actions):
        u = np.empty((k, len(profiles)))
        for s, a in enumerate(profiles):
            u[:, s] = game.payoff(a)[i]
        expost.append(u)
    labels = tuple(",".join(map(str, a)) for a in profiles)
    return SignalStructure("public", probs, labels, expost=tuple(expost), name="perfect-monitoring")


@dataclass(frozen=True, eq=False)
class AggregateSignalStructure:
    """Public signal whose law depends only on the total ``sum_j weights[a_j]``.

    ``probs[t]`` is the outcome distribution when the total equals ``t``;
    rows for totals no profile can produce are ignored.
    """

    n: int
    weights: tuple
    probs: np.ndarray
    labels: tuple
    name: str = ""

    kind = "public"
    expost = None

    def __post_init__(self):
        weights = tuple(int(w) for w in self.weights)
        if min(weights) < 0:
            raise ValueError("aggregate weights must be nonnegative integers")
        probs = check_distribution(self.probs, what="signal distribution")
        if probs.shape[0] != self.n * max(weights) + 1:
            raise ValueError(f"need one row per total 0..{self.n * max(weights)}")
        if probs.shape[1] != len(self.labels):
            raise ValueError("labels do not match the outcome axis")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def num_actions(self) -> tuple[int, ...]:
        return (len(self.weights),) * self.n

    @property
    def num_signals(self) -> int:
        return len(self.labels)

    @property
    def num_outcomes(self) -> int:
        return len(self.labels)

    @property
    def exact(self) -> bool:
        return is_exact(self.probs)

    def reachable_totals(self) -> np.ndarray:
        return np.flatnonzero(reachable_totals(self.n, self.weights))

    def neighbor_pairs(self) -> np.ndarray:
        """All ordered ``(t, t')`` total pairs produced by one player's unilateral change (cached)."""
        cached = self.__dict__.get("_pairs")
        if cached is None:
            rest = np.flatnonzero(reachable_totals(self.n - 1, self.weights))
            w = np.array(sorted(set(self.weights)))
            b, c = np.meshgrid(w, w, indexing="ij")
            off = b != c
            pairs = np.stack([rest[:, None] + b[off][None, :], rest[:, None] + c[off][None, :]], axis=-1)
            cached = np.unique(pairs.reshape(-1, 2), axis=0)
            object.__setattr__(self, "_pairs", cached)
        return cached

    def distribution(self, profile) -> np.ndarray:
        dist = total_distribution(profile, self.weights)
        return dist @ float_array(self.probs)[: len(dist)]

    def deviation_distributions(self, i: int, profile) -> np.ndarray:
        rest = total_distribution([m for j, m in enumerate(profile) if j != i], self.weights)
        probs = float_array(self.probs)
        out = np.empty((len(self.weights), self.num_outcomes))
        for a, w in enumerate(self.weights):
            out[a] = rest @ probs[w: w + len(rest)]
        return out

    def to_explicit(self, guard: int = EXPLICIT_GUARD) -> SignalStructure:
        k = len(self.weights)
        if k ** self.n * self.num_outcomes > guard:
            raise GuardError("explicit table would exceed the size guard")
        w = np.asarray(self.weights)

        def row(a):
            return self.probs[int(w[list(a)].sum())]

        return SignalStructure.from_function(self.num_actions, self.labels, row, name=self.name)


def check_full_support(sig):
    """Return ``(True, None)`` when no deviation is observable, else ``(False, witness)``.

    Public witnesses are ``(profile, signal)``; private witnesses are
    ``(profile, player, signal)``; aggregate witnesses are ``(total, signal)``.
    """
    if isinstance(sig, AggregateSignalStructure):
        for t in sig.reachable_totals():
            zero = np.flatnonzero(~(sig.probs[t] > 0))
            if len(zero):
                return False, (int(t), int(zero[0]))
        return True, None
    if sig.kind == "public":
        bad = np.argwhere(~(sig.probs > 0))
        if len(bad):
            idx = tuple(int(x) for x in bad[0])
            return False, (idx[:-1], idx[-1])
        return True, None
    for i, marg in enumerate(sig.marginals()):
        bad = np.argwhere(~(marg > 0))
        if len(bad):
            idx = tuple(int(x) for x in bad[0])
            return False, (idx[:-1], i, idx[-1])
    return True, None


def check_payoff_consistency(game, sig: SignalStructure) -> float:
    """Max over players and profiles of ``|u_i(a) - sum_s U_i(a_i, s) P_a(s)|``."""
    if sig.expost is None:
        raise ValueError("signal structure carries no ex-post payoffs")
    if tuple(game.num_actions) != tuple(sig.num_actions):
        raise ValueError("game and signal structure disagree on action sets")
    worst = 0.0
    marginals = [float_array(m) for m in sig.marginals()]
    for i in range(game.n):
        u = sig.expost[i]
        for a in itertools.product(*map(range, game.num_actions)):
            implied = float(u[a[i]] @ marginals[i][a])
            worst = max(worst, abs(float(game.payoff(a)[i]) - implied))
    return worst
