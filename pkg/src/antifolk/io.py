"""JSON reading and writing for games, signal structures, and strategy automata.

Game::

    {"n": 2, "actions": [["C", "D"], ["C", "D"]],
     "payoffs": [[[3, 3], [0, 4]], [[4, 0], [1, 1]]]}

Raw payoffs are mapped to [0, 1] by one affine map when needed. An
anonymous game gives ``"type": "anonymous"`` with ``"k"`` and a ``"table"``
of ``{"own": a, "others": [counts], "payoff": v}`` rows.

Signals::

    {"kind": "public", "labels": ["good", "bad"],
     "dist": {"0,0": [0.9, 0.1], "0,1": [0.5, 0.5], ...}}

``"probs"`` (a nested array) may replace ``"dist"``. Probabilities may be
written as decimals or as ``"p/q"`` strings. Private structures list their
outcomes in row-major order over the players' signals.

Strategy::

    {"type": "public", "initial": 0, "states": ["coop", "punish"],
     "decisions": [[[1, 0], [0, 1]], [[1, 0], [0, 1]]],
     "transitions": [[0, 1], [1, 1]]}

    {"type": "private", "players": [{"decisions": ..., "transitions": ..., "initial": 0}, ...]}

where a private player's ``transitions[w][a][s]`` reads own action and own signal.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction

import numpy as np

from .errors import GuardError
from .game import AnonymousGame, StageGame, compositions
from .repeated.automata import PlayerAutomaton, PrivateStrategyAutomaton, PublicStrategyAutomaton
from .signals import SignalStructure

RATIONAL_MAX_SIGNALS = 12
RATIONAL_MAX_PLAYERS = 3


class InputError(ValueError):
    """Malformed or inconsistent input document."""


def _number(x, exact: bool):
    if isinstance(x, bool) or not isinstance(x, (int, float, str, Fraction)):
        raise InputError(f"expected a number, got {x!r}")
    try:
        # repr of a float is its shortest round-trip decimal, so 0.1 reads as 1/10
        value = Fraction(repr(x)) if isinstance(x, float) else Fraction(x)
    except (ValueError, ZeroDivisionError) as err:
        raise InputError(f"bad number {x!r}") from err
    return value if exact else float(value)


def _array(data, exact: bool) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=object)
    except ValueError as err:
        raise InputError("ragged array") from err
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(*arr.shape):
        out[idx] = _number(arr[idx], exact)
    return out if exact else out.astype(float)


def _require(doc: dict, *keys):
    if not isinstance(doc, dict):
        raise InputError("expected a JSON object")
    missing = [k for k in keys if k not in doc]
    if missing:
        raise InputError(f"missing field(s): {', '.join(missing)}")


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise InputError(f"{path}: {err}") from err


# -- games -----------------------------------------------------------------

def game_from_dict(doc: dict):
    if doc.get("type") == "anonymous":
        _require(doc, "n", "k", "table")
        n, k = int(doc["n"]), int(doc["k"])
        raw = {}
        for row in doc["table"]:
            _require(row, "own", "others", "payoff")
            raw[(int(row["own"]), tuple(int(c) for c in row["others"]))] = float(_number(row["payoff"], False))
        missing = [(a, h) for a in range(k) for h in compositions(n - 1, k) if (a, h) not in raw]
        if missing:
            raise InputError(f"anonymous payoff table misses {missing[0]}")
        return AnonymousGame.normalized(n, k, lambda a, h: raw[(a, h)], actions=doc.get("actions"))
    _require(doc, "payoffs")
    pay = _array(doc["payoffs"], False)
    n = doc.get("n", pay.ndim - 1)
    if pay.ndim - 1 != n or pay.shape[-1] != n:
        raise InputError(f"payoffs of shape {pay.shape} do not fit {n} players")
    try:
        return StageGame.normalized(pay, actions=doc.get("actions"))
    except ValueError as err:
        raise InputError(str(err)) from err


def game_to_dict(game) -> dict:
    if isinstance(game, AnonymousGame):
        table = [{"own": a, "others": list(h), "payoff": game.rule(a, h)}
                 for a in range(game.k) for h in compositions(game.n - 1, game.k)]
        return {"type": "anonymous", "n": game.n, "k": game.k, "actions": list(game.actions), "table": table}
    if not isinstance(game, StageGame):
        game = game.to_stage_game()
    return {"n": game.n, "actions": [list(a) for a in game.actions], "payoffs": game.payoffs.tolist()}


# -- signals ---------------------------------------------------------------

def _check_rational_size(n: int, num_signals: int):
    if num_signals > RATIONAL_MAX_SIGNALS or n > RATIONAL_MAX_PLAYERS:
        raise GuardError(f"exact-rational mode supports at most {RATIONAL_MAX_SIGNALS} signals and "
                         f"{RATIONAL_MAX_PLAYERS} players")


def signals_from_dict(doc: dict, exact: bool = False, num_actions=None) -> SignalStructure:
    _require(doc, "kind", "labels")
    labels = tuple(doc["labels"])
    if "probs" in doc:
        probs = _array(doc["probs"], exact)
    elif "dist" in doc:
        dist = doc["dist"]
        try:
            keys = {tuple(int(x) for x in str(key).split(",")): row for key, row in dist.items()}
        except ValueError as err:
            raise InputError("dist keys must be comma-separated action indices") from err
        if not keys:
            raise InputError("empty dist")
        shape = tuple(num_actions) if num_actions is not None else \
            tuple(max(k[i] for k in keys) + 1 for i in range(len(next(iter(keys)))))
        if len(keys) != math.prod(shape):
            raise InputError(f"dist has {len(keys)} profiles, expected {math.prod(shape)}")
        first = _array(next(iter(keys.values())), exact)
        probs = np.empty(shape + first.shape, dtype=object if exact else float)
        for a in np.ndindex(*shape):
            if a not in keys:
                raise InputError(f"dist misses profile {a}")
            probs[a] = _array(keys[a], exact)
    else:
        raise InputError("signals need 'probs' or 'dist'")
    if exact:
        _check_rational_size(probs.ndim - 1, len(labels))
    expost = doc.get("expost")
    if expost is not None:
        expost = tuple(_array(u, False) for u in expost)
    try:
        return SignalStructure(doc["kind"], probs, labels, expost=expost, name=doc.get("name", ""))
    except ValueError as err:
        raise InputError(str(err)) from err


def _plain(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else x.numerator
    return float(x)


def signals_to_dict(sig) -> dict:
    if not isinstance(sig, SignalStructure):
        sig = sig.to_explicit()
    probs = np.vectorize(_plain, otypes=[object])(sig.probs).tolist()
    doc = {"kind": sig.kind, "labels": [l if isinstance(l, (str, int, float)) else list(l) for l in sig.labels],
           "probs": probs}
    if sig.name:
        doc["name"] = sig.name
    if sig.expost is not None:
        doc["expost"] = [u.tolist() for u in sig.expost]
    return doc


# -- strategies ------------------------------------------------------------

def strategy_from_dict(doc: dict, exact: bool = False):
    kind = doc.get("type", "public")
    try:
        if kind == "public":
            _require(doc, "decisions", "transitions")
            decisions = tuple(_array(d, exact) for d in doc["decisions"])
            return PublicStrategyAutomaton(decisions, np.asarray(doc["transitions"], dtype=int),
                                           int(doc.get("initial", 0)), doc.get("states"))
        if kind == "private":
            _require(doc, "players")
            players = []
            for p in doc["players"]:
                _require(p, "decisions", "transitions")
                players.append(PlayerAutomaton(_array(p["decisions"], exact),
                                               np.asarray(p["transitions"], dtype=int), int(p.get("initial", 0))))
            return PrivateStrategyAutomaton(tuple(players))
    except (TypeError, ValueError) as err:
        if isinstance(err, InputError):
            raise
        raise InputError(str(err)) from err
    raise InputError(f"unknown strategy type {kind!r}")


def strategy_to_dict(auto) -> dict:
    def table(d):
        return np.vectorize(_plain, otypes=[object])(d).tolist()

    if isinstance(auto, PublicStrategyAutomaton):
        return {"type": "public", "initial": auto.initial, "states": list(auto.state_names),
                "decisions": [table(d) for d in auto.decisions], "transitions": auto.transitions.tolist()}
    return {"type": "private",
            "players": [{"decisions": table(p.decisions), "transitions": p.transitions.tolist(),
                         "initial": p.initial} for p in auto.players]}


def load_game(path):
    return game_from_dict(load_json(path))


def load_signals(path, exact: bool = False, num_actions=None):
    return signals_from_dict(load_json(path), exact, num_actions)


def load_strategy(path, exact: bool = False):
    return strategy_from_dict(load_json(path), exact)


def dump(doc, path=None) -> str:
    text = json.dumps(doc, indent=2) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
