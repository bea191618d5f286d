"""Stage games, mixed profiles, and approximate-equilibrium regrets.

A profile is a sequence holding one probability vector per player. Two
game representations share one duck-typed surface
(``n``, ``num_actions``, ``deviation_payoffs``, ``expected_payoff``,
``equivalent_players``): :class:`StageGame` stores the full payoff tensor,
:class:`AnonymousGame` stores a rule of (own action, histogram of others).
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from ._prob import PROB_TOL, check_distribution, float_array
from .errors import GuardError

PAYOFF_TOL = 1e-12
TENSOR_GUARD = 10**6


def pure(num_actions: int, action: int) -> np.ndarray:
    vec = np.zeros(num_actions)
    vec[action] = 1.0
    return vec


def pure_profile(num_actions: Sequence[int], actions: Sequence[int]) -> tuple[np.ndarray, ...]:
    return tuple(pure(k, a) for k, a in zip(num_actions, actions))


def uniform_profile(num_actions: Sequence[int]) -> tuple[np.ndarray, ...]:
    return tuple(np.full(k, 1.0 / k) for k in num_actions)


def check_profile(game, profile) -> tuple[np.ndarray, ...]:
    """Validate a mixed profile against the game's action counts."""
    if len(profile) != game.n:
        raise ValueError(f"profile has {len(profile)} players, game has {game.n}")
    out = []
    for i, (mix, k) in enumerate(zip(profile, game.num_actions)):
        mix = check_distribution(mix, what=f"mixed action of player {i}")
        if mix.shape != (k,):
            raise ValueError(f"player {i} mixes over {mix.shape} actions, game has {k}")
        out.append(mix)
    return tuple(out)


def _normalizing_map(lo: float, hi: float) -> tuple[float, float]:
    if lo >= -PAYOFF_TOL and hi <= 1 + PAYOFF_TOL:
        return 0.0, 1.0
    scale = hi - lo
    return float(lo), float(scale if scale > 0 else 1.0)


@dataclass(frozen=True, eq=False)
class StageGame:
    """Finite normal-form game with payoffs in [0, 1].

    ``payoffs[a_1, ..., a_n, i]`` is player ``i``'s payoff at the pure
    profile ``(a_1, ..., a_n)``. ``rescale`` records the affine map
    ``normalized = (raw - offset) / scale`` applied at load time.
    """

    payoffs: np.ndarray
    actions: tuple[tuple[str, ...], ...] | None = None
    rescale: tuple[float, float] = (0.0, 1.0)

    anonymous = False

    def __post_init__(self):
        pay = np.asarray(self.payoffs, dtype=float)
        if pay.ndim < 2 or pay.shape[-1] != pay.ndim - 1:
            raise ValueError(f"payoff tensor shape {pay.shape} must be (*action_counts, n)")
        if np.any(pay < -PAYOFF_TOL) or np.any(pay > 1 + PAYOFF_TOL):
            raise ValueError("payoffs must lie in [0, 1]; use StageGame.normalized for raw payoffs")
        object.__setattr__(self, "payoffs", np.clip(pay, 0.0, 1.0))
        labels = self.actions
        if labels is None:
            labels = tuple(tuple(str(a) for a in range(k)) for k in pay.shape[:-1])
        labels = tuple(tuple(str(x) for x in row) for row in labels)
        if tuple(len(row) for row in labels) != pay.shape[:-1]:
            raise ValueError("action labels do not match the payoff tensor")
        object.__setattr__(self, "actions", labels)

    @classmethod
    def normalized(cls, raw, actions=None) -> "StageGame":
        """Build a game from raw payoffs, rescaling by one global affine map if needed."""
        raw = np.asarray(raw, dtype=float)
        offset, scale = _normalizing_map(float(raw.min()), float(raw.max()))
        return cls((raw - offset) / scale, actions=actions, rescale=(offset, scale))

    @classmethod
    def from_function(cls, num_actions: Sequence[int], fn: Callable, actions=None) -> "StageGame":
        """Tabulate ``fn(profile) -> payoff vector`` over all pure profiles (raw, then normalized)."""
        num_actions = tuple(num_actions)
        if math.prod(num_actions) > TENSOR_GUARD:
            raise GuardError(f"{math.prod(num_actions)} profiles exceed the tensor guard")
        raw = np.empty(num_actions + (len(num_actions),))
        for a in itertools.product(*map(range, num_actions)):
            raw[a] = fn(a)
        return cls.normalized(raw, actions)

    @property
    def n(self) -> int:
        return self.payoffs.ndim - 1

    @property
    def num_actions(self) -> tuple[int, ...]:
        return self.payoffs.shape[:-1]

    def profiles(self):
        return itertools.product(*map(range, self.num_actions))

    def payoff(self, actions: Sequence[int]) -> np.ndarray:
        return self.payoffs[tuple(actions)]

    def deviation_payoffs(self, i: int, profile) -> np.ndarray:
        """Vector of ``u_i(a_i, alpha_{-i})`` over player ``i``'s actions."""
        t = self.payoffs[..., i]
        for j in range(self.n - 1, -1, -1):
            if j != i:
                t = np.tensordot(t, profile[j], axes=([j], [0]))
        return t

    def expected_payoff(self, profile) -> np.ndarray:
        return np.array([self.deviation_payoffs(i, profile) @ profile[i] for i in range(self.n)])

    def equivalent_players(self, profile) -> list[list[int]]:
        return [[i] for i in range(self.n)]


def compositions(total: int, k: int) -> list[tuple[int, ...]]:
    """All histograms of ``total`` items over ``k`` bins, lexicographic order."""
    out = []
    for bars in itertools.combinations(range(total + k - 1), k - 1):
        prev, counts = -1, []
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(total + k - 1 - prev - 1)
        out.append(tuple(counts))
    return out


def _group_mixes(mixes) -> list[tuple[np.ndarray, int]]:
    groups: dict[bytes, list] = {}
    for mix in mixes:
        key = np.asarray(mix, dtype=float).tobytes()
        if key in groups:
            groups[key][1] += 1
        else:
            groups[key] = [np.asarray(mix, dtype=float), 1]
    return [(m, c) for m, c in groups.values()]


def _group_histogram(mix: np.ndarray, count: int, guard: int) -> dict[tuple, float]:
    k = len(mix)
    support = [a for a in range(k) if mix[a] > 0]
    if len(support) == 1:
        hist = [0] * k
        hist[support[0]] = count
        return {tuple(hist): 1.0}
    if math.comb(count + len(support) - 1, len(support) - 1) > guard:
        raise GuardError("histogram distribution too large to enumerate")
    out = {}
    log_mix = np.log(mix[support])
    for sub in compositions(count, len(support)):
        logp = math.lgamma(count + 1) + sum(c * lm - math.lgamma(c + 1) for c, lm in zip(sub, log_mix))
        hist = [0] * k
        for a, c in zip(support, sub):
            hist[a] = c
        out[tuple(hist)] = math.exp(logp)
    return out


def histogram_distribution(mixes, k: int, guard: int = TENSOR_GUARD) -> dict[tuple, float]:
    """Distribution of the action histogram of independent players with the given mixes."""
    dist = {(0,) * k: 1.0}
    for mix, count in _group_mixes(mixes):
        part = _group_histogram(mix, count, guard)
        if len(dist) * len(part) > guard:
            raise GuardError("histogram distribution too large to enumerate")
        new: dict[tuple, float] = defaultdict(float)
        for h1, p1 in dist.items():
            for h2, p2 in part.items():
                new[tuple(x + y for x, y in zip(h1, h2))] += p1 * p2
        dist = dict(new)
    return dist


def reachable_totals(count: int, weights: Sequence[int]) -> np.ndarray:
    """Boolean mask of the totals ``count`` players can produce with the given action weights."""
    ind = np.zeros(max(weights) + 1, dtype=bool)
    ind[list(weights)] = True
    reach = np.ones(1, dtype=bool)
    for _ in range(count):
        reach = np.convolve(reach.astype(float), ind.astype(float)) > 0.5
    return reach


def total_distribution(mixes, weights: Sequence[int]) -> np.ndarray:
    """Law of ``sum_j weights[a_j]`` for independent mixes (index = total)."""
    wmax = max(weights)
    dist = np.ones(1)
    groups: dict[bytes, list] = {}
    for mix in mixes:
        key = np.asarray(mix, dtype=float).tobytes()
        groups.setdefault(key, [np.asarray(mix, dtype=float), 0])[1] += 1
    for mix, count in groups.values():
        step = np.zeros(wmax + 1)
        for a, p in enumerate(mix):
            step[weights[a]] += p
        nz = np.flatnonzero(step)
        if len(nz) == 1:
            dist = np.concatenate([np.zeros(nz[0] * count), dist])
        else:
            for _ in range(count):
                dist = np.convolve(dist, step)
    return dist



class AnonymousGame:
    """Game whose payoffs depend on own action and the histogram of others' actions.

    Histograms are exact integer counts over the ``k`` shared actions for
    the ``n - 1`` opponents. ``rule(own, histogram)`` must return a value
    in [0, 1]; use :meth:`normalized` to rescale a raw rule.
    """

    anonymous = True

    def __init__(self, n: int, k: int, rule: Callable[[int, tuple], float] | Mapping,
                 actions: Sequence[str] | None = None, rescale: tuple[float, float] = (0.0, 1.0)):
        if n < 1 or k < 1:
            raise ValueError("need n >= 1 players and k >= 1 actions")
        self.n = n
        self.k = k
        if isinstance(rule, Mapping):
            table = {(int(a), tuple(int(c) for c in h)): float(v) for (a, h), v in rule.items()}
            missing = [(a, h) for a in range(k) for h in compositions(n - 1, k) if (a, h) not in table]
            if missing:
                raise ValueError(f"anonymous payoff table is missing entries, e.g. {missing[0]}")
            self._table = table
            self._rule = lambda a, h: table[(a, h)]
        else:
            self._table = None
            self._rule = rule
        self.actions = tuple(actions) if actions is not None else tuple(str(a) for a in range(k))
        self.rescale = rescale
        self._cache: dict = {}

    @classmethod
    def normalized(cls, n: int, k: int, raw_rule: Callable[[int, tuple], float], actions=None,
                   guard: int = TENSOR_GUARD) -> "AnonymousGame":
        hists = compositions(n - 1, k) if math.comb(n + k - 2, k - 1) <= guard else None
        if hists is None:
            raise GuardError("too many histograms to normalize by enumeration")
        table = {(a, h): float(raw_rule(a, h)) for a in range(k) for h in hists}
        values = np.fromiter(table.values(), dtype=float)
        offset, scale = _normalizing_map(float(values.min()), float(values.max()))
        norm = {key: (v - offset) / scale for key, v in table.items()}
        return cls(n, k, norm, actions=actions, rescale=(offset, scale))

    @property
    def num_actions(self) -> tuple[int, ...]:
        return (self.k,) * self.n

    def table(self) -> dict[tuple[int, tuple], float]:
        if self._table is None:
            self._table = {(a, h): self.rule(a, h) for a in range(self.k)
                           for h in compositions(self.n - 1, self.k)}
        return self._table

    def rule(self, own: int, histogram: tuple) -> float:
        key = (own, tuple(histogram))
        if key not in self._cache:
            v = float(self._rule(own, tuple(histogram)))
            if v < -PAYOFF_TOL or v > 1 + PAYOFF_TOL:
                raise ValueError(f"anonymous payoff {v} at {key} is outside [0, 1]")
            self._cache[key] = min(max(v, 0.0), 1.0)
        return self._cache[key]

    def payoff(self, actions: Sequence[int]) -> np.ndarray:
        counts = np.bincount(np.asarray(actions), minlength=self.k)
        out = np.empty(self.n)
        for i, a in enumerate(actions):
            h = counts.copy()
            h[a] -= 1
            out[i] = self.rule(a, tuple(int(c) for c in h))
        return out

    def others_histogram(self, i: int, profile) -> dict[tuple, float]:
        return histogram_distribution([m for j, m in enumerate(profile) if j != i], self.k)

    def deviation_payoffs(self, i: int, profile) -> np.ndarray:
        dist = self.others_histogram(i, profile)
        return np.array([sum(p * self.rule(a, h) for h, p in dist.items()) for a in range(self.k)])

    def expected_payoff(self, profile) -> np.ndarray:
        out = np.empty(self.n)
        for group in self.equivalent_players(profile):
            i = group[0]
            out[group] = self.deviation_payoffs(i, profile) @ np.asarray(profile[i], dtype=float)
        return out

    def equivalent_players(self, profile) -> list[list[int]]:
        groups: dict[bytes, list[int]] = {}
        for i, mix in enumerate(profile):
            groups.setdefault(np.asarray(mix, dtype=float).tobytes(), []).append(i)
        return list(groups.values())

    def to_stage_game(self, guard: int = TENSOR_GUARD) -> StageGame:
        if self.k ** self.n > guard:
            raise GuardError(f"{self.k}^{self.n} profiles exceed the tensor guard")
        pay = np.empty((self.k,) * self.n + (self.n,))
        for a in itertools.product(range(self.k), repeat=self.n):
            pay[a] = self.payoff(a)
        return StageGame(pay, actions=(self.actions,) * self.n, rescale=self.rescale)


class AggregateGame:
    """Anonymous game whose payoff depends on own action and the total ``sum_{j != i} weights[a_j]``.

    Covers Cournot-style games on a quantity grid and two-action anonymous
    games without enumerating histograms. ``rule(own, others_total)`` must
    lie in [0, 1].
    """

    anonymous = True

    def __init__(self, n: int, weights: Sequence[int], rule: Callable[[int, int], float],
                 actions: Sequence[str] | None = None, rescale: tuple[float, float] = (0.0, 1.0)):
        if n < 1 or not weights:
            raise ValueError("need n >= 1 players and at least one action")
        self.n = n
        self.weights = tuple(int(w) for w in weights)
        if min(self.weights) < 0:
            raise ValueError("weights must be nonnegative integers")
        self.k = len(self.weights)
        self.actions = tuple(actions) if actions is not None else tuple(str(a) for a in range(self.k))
        self.rescale = rescale
        totals = np.flatnonzero(reachable_totals(n - 1, self.weights))
        table = np.zeros((self.k, (n - 1) * max(self.weights) + 1))
        for a in range(self.k):
            for t in totals:
                v = float(rule(a, int(t)))
                if v < -PAYOFF_TOL or v > 1 + PAYOFF_TOL:
                    raise ValueError(f"payoff {v} at ({a}, {t}) is outside [0, 1]")
                table[a, t] = min(max(v, 0.0), 1.0)
        self.table = table

    @classmethod
    def normalized(cls, n: int, weights: Sequence[int], raw_rule: Callable[[int, int], float],
                   actions=None) -> "AggregateGame":
        weights = tuple(int(w) for w in weights)
        totals = np.flatnonzero(reachable_totals(n - 1, weights))
        values = np.array([float(raw_rule(a, int(t))) for a in range(len(weights)) for t in totals])
        offset, scale = _normalizing_map(float(values.min()), float(values.max()))
        return cls(n, weights, lambda a, t: (raw_rule(a, t) - offset) / scale, actions, (offset, scale))

    @property
    def num_actions(self) -> tuple[int, ...]:
        return (self.k,) * self.n

    def payoff(self, actions: Sequence[int]) -> np.ndarray:
        w = np.asarray(self.weights)[list(actions)]
        total = int(w.sum())
        return np.array([self.table[a, total - self.weights[a]] for a in actions])

    def deviation_payoffs(self, i: int, profile) -> np.ndarray:
        dist = total_distribution([m for j, m in enumerate(profile) if j != i], self.weights)
        return self.table[:, : len(dist)] @ dist

    def expected_payoff(self, profile) -> np.ndarray:
        out = np.empty(self.n)
        for group in self.equivalent_players(profile):
            i = group[0]
            out[group] = self.deviation_payoffs(i, profile) @ np.asarray(profile[i], dtype=float)
        return out

    def equivalent_players(self, profile) -> list[list[int]]:
        groups: dict[bytes, list[int]] = {}
        for i, mix in enumerate(profile):
            groups.setdefault(np.asarray(mix, dtype=float).tobytes(), []).append(i)
        return list(groups.values())

    def to_stage_game(self, guard: int = TENSOR_GUARD) -> StageGame:
        if self.k ** self.n > guard:
            raise GuardError(f"{self.k}^{self.n} profiles exceed the tensor guard")
        pay = np.empty((self.k,) * self.n + (self.n,))
        for a in itertools.product(range(self.k), repeat=self.n):
            pay[a] = self.payoff(a)
        return StageGame(pay, actions=(self.actions,) * self.n, rescale=self.rescale)


@dataclass(frozen=True)
class NashRegret:
    regrets: np.ndarray
    best_actions: tuple[int, ...]

    @property
    def max_regret(self) -> float:
        return float(np.max(self.regrets))

    @property
    def worst_player(self) -> int:
        return int(np.argmax(self.regrets))


def expected_payoff(game, profile) -> np.ndarray:
    """Per-player expected utility of a mixed profile."""
    return game.expected_payoff(check_profile(game, profile))


def nash_regret(game, profile) -> NashRegret:
    """Largest gain any player gets from a unilateral pure deviation.

    The profile is an eta-approximate Nash equilibrium iff every regret is
    at most eta. Reported best actions break ties by lowest index.
    """
    profile = check_profile(game, profile)
    regrets = np.zeros(game.n)
    best = [0] * game.n
    for group in game.equivalent_players(profile):
        i = group[0]
        dev = float_array(game.deviation_payoffs(i, profile))
        current = float(dev @ float_array(profile[i]))
        b = int(np.argmax(dev))
        regrets[group] = max(0.0, float(dev[b]) - current)
        for j in group:
            best[j] = b
    return NashRegret(regrets, tuple(best))


@dataclass(frozen=True, eq=False)
class CorrelatedDevice:
    """Joint distribution over per-player signals plus signal-to-action maps.

    Stored sparsely: ``entries`` holds ``(signal_tuple, probability)`` with
    positive probability only. ``maps[i][s]`` is player ``i``'s mixed
    action after seeing signal ``s``.
    """

    entries: tuple
    maps: tuple

    def __post_init__(self):
        maps = tuple(check_distribution(np.asarray(m), what=f"signal map of player {i}")
                     for i, m in enumerate(self.maps))
        entries = tuple((tuple(int(x) for x in s), p) for s, p in self.entries if p > 0)
        if any(p < 0 for _, p in self.entries):
            raise ValueError("device has negative probabilities")
        total = sum(p for _, p in entries)
        exact = not isinstance(total, float)
        if (exact and total != 1) or (not exact and abs(total - 1) > PROB_TOL):
            raise ValueError(f"device distribution sums to {float(total)!r}, not 1")
        for s, _ in entries:
            if len(s) != len(maps) or any(not 0 <= x < len(m) for x, m in zip(s, maps)):
                raise ValueError(f"signal tuple {s} has no decision rule")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "maps", maps)

    @classmethod
    def from_joint(cls, joint, maps) -> "CorrelatedDevice":
        joint = np.asarray(joint)
        entries = [(idx, joint[idx]) for idx in np.ndindex(joint.shape) if joint[idx] > 0]
        return cls(tuple(entries), tuple(maps))

    @classmethod
    def product(cls, profile) -> "CorrelatedDevice":
        """Device that recommends independent draws from each player's mixed action."""
        maps = [np.eye(len(m)) for m in profile]
        entries = []
        for a in itertools.product(*(range(len(m)) for m in profile)):
            p = math.prod(float(profile[i][x]) for i, x in enumerate(a))
            if p > 0:
                entries.append((a, p))
        return cls(tuple(entries), tuple(maps))

    @property
    def n(self) -> int:
        return len(self.maps)

    def marginal(self, i: int) -> dict[int, float]:
        out: dict[int, float] = defaultdict(float)
        for s, p in self.entries:
            out[s[i]] += p
        return dict(out)


@dataclass(frozen=True)
class CorrelatedRegret:
    """Per (player, signal) conditional deviation values of a correlated device."""

    values: dict
    best_actions: dict

    @property
    def max_regret(self) -> float:
        return max(self.values.values(), default=0.0)

    @property
    def argmax(self):
        return max(self.values, key=self.values.get) if self.values else None


def correlated_regret(game, device: CorrelatedDevice) -> CorrelatedRegret:
    """Conditional gain of the best fixed deviation for each player and signal.

    For signal ``s`` of player ``i`` this is
    ``max_a sum_{s_-i} [u_i(a, sigma_-i(s_-i)) - u_i(sigma_i(s), sigma_-i(s_-i))] D(s_-i | s_i = s)``;
    only signals with positive marginal are conditioned on.
    """
    if device.n != game.n:
        raise ValueError("device and game disagree on the number of players")
    for i, (m, k) in enumerate(zip(device.maps, game.num_actions)):
        if m.shape[1] != k:
            raise ValueError(f"player {i} signal map has {m.shape[1]} actions, game has {k}")
    acc: dict = {}
    mass: dict = defaultdict(float)
    cache: dict = {}
    for s, p in device.entries:
        prof = tuple(float_array(device.maps[j][s[j]]) for j in range(game.n))
        for i in range(game.n):
            key = (i, s[:i] + s[i + 1:])
            if key not in cache:
                cache[key] = float_array(game.deviation_payoffs(i, prof))
            contrib = float(p) * cache[key]
            slot = (i, s[i])
            acc[slot] = acc[slot] + contrib if slot in acc else contrib
            mass[slot] += float(p)
    values, best = {}, {}
    for (i, si), vec in acc.items():
        cond = vec / mass[(i, si)]
        b = int(np.argmax(cond))
        values[(i, si)] = max(0.0, float(cond[b] - cond @ float_array(device.maps[i][si])))
        best[(i, si)] = b
    return CorrelatedRegret(values, best)
