"""Numerical checks that equilibrium play is approximately stage-equilibrium play.

Each verifier compares a stage regret against ``eta + xi / (1 - delta)``,
where ``eta = delta / (1 - delta) * min_eps (eps + gamma*(eps))`` comes from a
privacy curve and ``xi`` is the equilibrium slack. By default ``xi`` is
measured (the largest gain of the deviation used in the corresponding
argument), which certifies the bound on any input. Passing ``claimed_xi``
checks a claimed equilibrium instead; any violation then comes with an
explicitly constructed profitable deviation.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .._prob import float_array
from ..errors import IncompatibleMonitoringError
from ..game import CorrelatedDevice, correlated_regret, nash_regret, pure
from ..signals import check_full_support
from .automata import PublicStrategyAutomaton, as_private
from .beliefs import history_profiles, public_histories, track_beliefs, factorization_gap
from .values import (check_delta, check_public_pair, deviation_table, next_state_index,
                     pure_signal_distribution, reachable_states, solve_joint_values, solve_values_public)

SLACK_TOL = 1e-9


@dataclass
class StateCheck:
    state: str
    regret: float
    bound: float
    passed: bool
    player: int
    best_action: int
    probability: float | None = None

    def to_dict(self) -> dict:
        return {"state": self.state, "regret": self.regret, "bound": self.bound, "pass": self.passed,
                "player": self.player, "best_action": self.best_action, "probability": self.probability}


@dataclass
class DeviationWitness:
    """A deviation for ``player`` at ``state`` and its gains.

    ``continuation_gain`` is measured from the deviation point onward;
    ``gain`` is the ex-ante gain ``Pr[reach] * delta^t * continuation_gain``
    and ``gain_solved`` recomputes it by solving the deviating profile's
    values directly (None when not applicable).
    """

    player: int
    state: str
    action: int
    path: tuple
    path_probability: float | None
    continuation_gain: float
    gain: float | None = None
    gain_solved: float | None = None

    @property
    def profitable(self) -> bool:
        g = self.gain if self.gain is not None else self.continuation_gain
        return g > 0

    def to_dict(self) -> dict:
        return {"player": self.player, "state": self.state, "action": self.action, "path": list(self.path),
                "path_probability": self.path_probability, "continuation_gain": self.continuation_gain,
                "gain": self.gain, "gain_solved": self.gain_solved, "profitable": self.profitable}


@dataclass
class RegretReport:
    instance: str
    theorem: int
    delta: float
    eta: float
    eps_star: float
    gamma_star: float
    xi: float
    xi_used: float
    slack_mode: str
    per_state: list = field(default_factory=list)
    deviations: list = field(default_factory=list)
    rescale: tuple = (0.0, 1.0)
    horizon: int | None = None
    notes: list = field(default_factory=list)

    @property
    def adjusted_bound(self) -> float:
        return self.eta + self.xi_used / (1 - self.delta)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.per_state)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    @property
    def informative(self) -> bool:
        # regrets never exceed 1, so a bound of 1 or more says nothing
        return self.adjusted_bound < 1

    @property
    def violations(self) -> list:
        return [c for c in self.per_state if not c.passed]

    @property
    def max_regret(self) -> float:
        return max((c.regret for c in self.per_state), default=0.0)

    def to_dict(self) -> dict:
        return {
            "instance": self.instance, "theorem": self.theorem, "delta": self.delta, "eta": self.eta,
            "xi": self.xi, "per_state": [c.to_dict() for c in self.per_state], "verdict": self.verdict,
            "xi_used": self.xi_used, "slack_mode": self.slack_mode, "adjusted_bound": self.adjusted_bound,
            "eps_star": self.eps_star, "gamma_star": self.gamma_star, "informative": self.informative,
            "horizon": self.horizon, "rescale": list(self.rescale),
            "deviations": [d.to_dict() for d in self.deviations], "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["instance", "theorem", "delta", "eta", "xi", "state", "player", "regret", "bound", "pass"])
        for c in self.per_state:
            writer.writerow([self.instance, self.theorem, repr(self.delta), repr(self.eta), repr(self.xi),
                             c.state, c.player, repr(c.regret), repr(c.bound), c.passed])
        return buf.getvalue()


def _slack(xi: float, claimed_xi):
    if claimed_xi is None:
        return xi, "measured"
    if not claimed_xi >= 0:
        raise ValueError("claimed slack must be nonnegative")
    return float(claimed_xi), "claimed"


def _base_report(game, curve, delta, theorem, instance, xi, claimed_xi, horizon=None) -> RegretReport:
    xi_used, mode = _slack(xi, claimed_xi)
    report = RegretReport(instance, theorem, delta, curve.eta(delta), curve.eps_star, curve.gamma_star,
                          xi, xi_used, mode, rescale=tuple(getattr(game, "rescale", (0.0, 1.0))),
                          horizon=horizon)
    report.notes.append("slack xi is propagated as xi/(1-delta); approximate equilibrium notions are "
                        "an extrapolation of the exact-equilibrium argument")
    if mode == "claimed":
        report.notes.append(f"checking a claimed {claimed_xi!r}-approximate equilibrium (measured xi = {xi!r})")
    return report


def _augmented_deviation(auto: PublicStrategyAutomaton, path, player: int, action: int):
    """Automaton that follows ``auto`` except that ``player`` plays ``action`` after signal path ``path``.

    Node ``k`` (k <= T) tracks the first k path signals; off-path play
    falls back to copies of the original states.
    """
    T = len(path)
    num_w = auto.num_states
    off = T + 1
    states_on = [auto.initial] + [int(auto.transitions[w, s]) for w, s in path]
    size = off + num_w
    decisions = [np.empty((size, d.shape[1])) for d in auto.decisions]
    trans = np.empty((size, auto.num_signals), dtype=int)
    for k, w in enumerate(states_on):
        for i, d in enumerate(auto.decisions):
            decisions[i][k] = float_array(d[w])
        trans[k] = off + auto.transitions[w]
        if k < T:
            trans[k, path[k][1]] = k + 1
    decisions[player][T] = pure(auto.decisions[player].shape[1], action)
    for w in range(num_w):
        for i, d in enumerate(auto.decisions):
            decisions[i][off + w] = float_array(d[w])
        trans[off + w] = off + auto.transitions[w]
    return PublicStrategyAutomaton(tuple(decisions), trans, 0)


def construct_public_deviation(game, sig, auto, delta, state: int, player: int, action: int,
                               values=None, table=None, reach=None) -> DeviationWitness:
    """Deviate to ``action`` at ``state`` (reached along a shortest positive-probability path).

    Two routes give the ex-ante gain: the closed form
    ``Pr[path] * delta^T * (dev value - V)`` and a direct value solve of the
    deviating profile. States not reached with positive probability only
    get the continuation gain.
    """
    values = values if values is not None else solve_values_public(game, sig, auto, delta)
    table = table if table is not None else deviation_table(game, sig, auto, delta, values)
    reach = reach if reach is not None else reachable_states(auto, sig, mode="positive")
    cont = float(table.dev[player][state, action] - values.values[player, state])
    name = auto.state_names[state]
    if state not in reach.parents:
        return DeviationWitness(player, name, action, (), None, cont)
    path = reach.path_to(state)
    sig_f = sig.to_float() if sig.exact else sig
    prob = 1.0
    for w, s in path:
        prob *= float(sig_f.distribution(tuple(float_array(d) for d in auto.profile(w)))[s])
    gain = prob * delta ** len(path) * cont
    aug = _augmented_deviation(auto, path, player, action)
    solved = solve_values_public(game, sig, aug, delta)
    gain_solved = float(solved.values[player, 0] - values.values[player, auto.initial])
    return DeviationWitness(player, name, action, tuple(s for _, s in path), prob, cont, gain, gain_solved)


def _verify_public(game, sig, auto, delta, curve, claimed_xi, mode, theorem, instance):
    delta = check_delta(delta)
    check_public_pair(sig, auto, game)
    values = solve_values_public(game, sig, auto, delta)
    table = deviation_table(game, sig, auto, delta, values)
    reach = reachable_states(auto, sig, mode=mode)
    positive_reach = reach if mode == "positive" else reachable_states(auto, sig, mode="positive")
    xi, _ = table.max_gain(reach.states)
    report = _base_report(game, curve, delta, theorem, instance, xi, claimed_xi)
    bound = report.adjusted_bound
    for w in reach.states:
        nr = nash_regret(game, tuple(float_array(d) for d in auto.profile(w)))
        i = nr.worst_player
        ok = nr.max_regret <= bound + SLACK_TOL
        report.per_state.append(StateCheck(auto.state_names[w], nr.max_regret, bound, ok, i,
                                           nr.best_actions[i], float(reach.occupancy[w])))
        if not ok:
            report.deviations.append(construct_public_deviation(
                game, sig, auto, delta, w, i, nr.best_actions[i], values, table, positive_reach))
    scope = "every state reachable along some public history" if mode == "graph" else \
        "states reached with positive probability"
    report.notes.append(f"checked {scope}")
    if not report.informative:
        report.notes.append("bound is uninformative (adjusted bound >= 1)")
    return report


def verify_theorem1(game, sig, auto: PublicStrategyAutomaton, delta: float, curve, *,
                    claimed_xi: float | None = None, instance: str = "") -> RegretReport:
    """Stage play at every public-history state is within the anti-folk bound of Nash."""
    return _verify_public(game, sig, auto, delta, curve, claimed_xi, "graph", 1, instance)


def verify_theorem3(game, sig, auto: PublicStrategyAutomaton, delta: float, curve, *,
                    claimed_xi: float | None = None, instance: str = "") -> RegretReport:
    """As :func:`verify_theorem1`, restricted to states reached with positive probability."""
    return _verify_public(game, sig, auto, delta, curve, claimed_xi, "positive", 3, instance)


def _as_float_autos(autos):
    return [float_array(p.decisions) for p in autos.players]


def belief_deviation_values(game, sig, autos, joint_values, delta: float, player: int) -> dict:
    """Per joint state, the value of playing ``a'`` now and then acting as if the prescribed mix was played.

    Returns ``{joint_state: vector over a'}``; the own transition reads a
    draw from the prescribed mix, not the deviation.
    """
    sig_f = sig.to_float() if sig.exact else sig
    decisions = _as_float_autos(autos)
    outcome_signals = sig_f.outcome_signals()
    k = game.num_actions[player]
    out = {}
    for w in np.ndindex(*autos.state_shape):
        prof = tuple(decisions[j][w[j]] for j in range(autos.n))
        stage = float_array(game.deviation_payoffs(player, prof))
        cont = np.zeros(k)
        for a in np.ndindex(*autos.num_actions):
            q = math.prod(prof[j][a[j]] for j in range(autos.n))
            if q == 0:
                continue
            # the own machine steps on the prescribed draw, so the next state ignores the deviation
            after = joint_values.values[next_state_index(autos, w, a, outcome_signals), player]
            for dev in range(k):
                played = a[:player] + (dev,) + a[player + 1:]
                cont[dev] += q * float(float_array(pure_signal_distribution(sig_f, played)) @ after)
        out[w] = (1 - delta) * stage + delta * cont
    return out


def _history_gains(game, sig, autos, joint_values, delta, beliefs):
    dev_values = {i: belief_deviation_values(game, sig, autos, joint_values, delta, i) for i in range(autos.n)}
    gains = {}
    for b in beliefs:
        i = b.player
        dev = sum(float(p) * dev_values[i][w] for w, p in b.posterior.items())
        base = sum(float(p) * joint_values(w)[i] for w, p in b.posterior.items())
        a = int(np.argmax(dev))
        gains[(i, b.history)] = (float(dev[a] - base), a, b)
    return gains


def _history_label(h, sig, autos) -> str:
    return "".join(f"({a},{sig.labels[s]})" for a, s in h) or "()"


def _history_witness(delta, key, gains, sig, autos) -> DeviationWitness:
    g, a, b = gains[key]
    prob = float(b.probability)
    return DeviationWitness(key[0], _history_label(key[1], sig, autos), a, key[1], prob, g,
                            prob * delta ** len(key[1]) * g)


def _check_monitoring(sig, autos, game, kind: str, require_full_support: bool):
    """Monitoring kind must match; without full support, either refuse or return a note."""
    if sig.kind != kind:
        raise IncompatibleMonitoringError(f"this verifier needs {kind} monitoring")
    if tuple(game.num_actions) != tuple(autos.num_actions):
        raise ValueError("strategies and game disagree on action sets")
    ok, witness = check_full_support(sig)
    if ok:
        return None
    if require_full_support:
        raise IncompatibleMonitoringError(f"signal structure lacks full support (witness {witness}); "
                                          "Bayesian updating is not defined after every signal")
    return (f"signals lack full support (witness {witness}); only positive-probability histories "
            "are checked, where posteriors are well defined")


def verify_theorem2(game, sig, strategies, delta: float, curve, horizon: int, *,
                    claimed_xi: float | None = None, instance: str = "",
                    require_full_support: bool = True) -> RegretReport:
    """Conditional play given each public history is within the bound of Nash, up to ``horizon``.

    ``xi`` is the largest gain, over positive-probability private histories,
    of deviating once and continuing as if the prescribed mix was played.
    """
    delta = check_delta(delta)
    autos = as_private(strategies)
    support_note = _check_monitoring(sig, autos, game, "public", require_full_support)
    joint_values = solve_joint_values(game, sig, autos, delta)
    beliefs = track_beliefs(game, sig, autos, horizon)
    gains = _history_gains(game, sig, autos, joint_values, delta, beliefs)
    xi = max(0.0, max(g for g, _, _ in gains.values()))
    report = _base_report(game, curve, delta, 2, instance, xi, claimed_xi, horizon)
    bound = report.adjusted_bound
    worst_gap = 0.0
    for h, prob, sigma_hat in public_histories(sig, autos, horizon):
        nr = nash_regret(game, tuple(float_array(m) for m in sigma_hat))
        i = nr.worst_player
        ok = nr.max_regret <= bound + SLACK_TOL
        label = f"t={len(h) + 1} s=({','.join(str(sig.labels[s]) for s in h)})"
        report.per_state.append(StateCheck(label, nr.max_regret, bound, ok, i, nr.best_actions[i], float(prob)))
        worst_gap = max(worst_gap, factorization_gap(sig, autos, h))
        if not ok:
            keys = [k for k in gains if k[0] == i and tuple(s for _, s in k[1]) == h]
            report.deviations.append(_history_witness(delta, max(keys, key=lambda k: gains[k][0]),
                                                      gains, sig, autos))
    report.notes.append(f"necessary-condition check at horizon T={horizon}")
    if support_note:
        report.notes.append(support_note)
    report.notes.append(f"largest gap between joint conditional play and the product of marginals: {worst_gap!r}")
    return report


def verify_theorem4(game, sig, strategies, delta: float, curve, horizon: int, *,
                    claimed_xi: float | None = None, instance: str = "",
                    require_full_support: bool = True) -> RegretReport:
    """At each period, private histories act as correlating signals; check the correlated regret.

    Per (period, player, history) the value is the best fixed deviation's
    conditional gain against the posterior over opponents' histories.
    """
    delta = check_delta(delta)
    autos = as_private(strategies)
    support_note = _check_monitoring(sig, autos, game, "private", require_full_support)
    joint_values = solve_joint_values(game, sig, autos, delta)
    beliefs = track_beliefs(game, sig, autos, horizon)
    gains = _history_gains(game, sig, autos, joint_values, delta, beliefs)
    xi = max(0.0, max(g for g, _, _ in gains.values()))
    report = _base_report(game, curve, delta, 4, instance, xi, claimed_xi, horizon)
    bound = report.adjusted_bound
    decisions = _as_float_autos(autos)
    for t, level in history_profiles(sig, autos, horizon):
        regrets, index = period_correlated_regret(game, decisions, level)
        for (i, si), value in sorted(regrets.values.items()):
            h = index[i][si]
            ok = value <= bound + SLACK_TOL
            label = f"t={t} player={i} h={_history_label(h, sig, autos)}"
            report.per_state.append(StateCheck(label, value, bound, ok, i, regrets.best_actions[(i, si)],
                                               float(gains[(i, h)][2].probability)))
            if not ok:
                report.deviations.append(_history_witness(delta, (i, h), gains, sig, autos))
    report.notes.append(f"necessary-condition check at horizon T={horizon}")
    if support_note:
        report.notes.append(support_note)
    report.notes.append("private histories serve as the correlating signals of the stage device")
    return report


def period_correlated_regret(game, decisions, level: dict):
    """Correlated regret of the device whose signals are the period's private-history profiles."""
    n = len(decisions)
    ids: list[dict] = [{} for _ in range(n)]
    maps: list[list] = [[] for _ in range(n)]
    entries = []
    total = sum(float(p) for p, _ in level.values())
    for hp, (p, w) in level.items():
        sig_ids = []
        for j, h in enumerate(hp):
            if h not in ids[j]:
                ids[j][h] = len(maps[j])
                maps[j].append(decisions[j][w[j]])
            sig_ids.append(ids[j][h])
        entries.append((tuple(sig_ids), float(p) / total))
    device = CorrelatedDevice(tuple(entries), tuple(np.array(m) for m in maps))
    index = [{v: h for h, v in d.items()} for d in ids]
    return correlated_regret(game, device), index
