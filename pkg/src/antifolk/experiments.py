"""Sweeps over the number of players, and the cooperation-collapse demonstration."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .families import CournotSpec, cournot_sensitivity, gaussian_noise_grid, histogram_sensitivity
from .game import AggregateGame
from .privacy import SensitivitySpec, gaussian_privacy_curve, privacy_curve
from .repeated.automata import PublicStrategyAutomaton
from .repeated.values import one_shot_deviation_gain
from .signals import AggregateSignalStructure

FAMILIES = ("anonymous", "cournot", "counterfactual")
GAIN_TOL = 1e-9
MONOTONE_TOL = 1e-12


def parallel_map(fn, items: Sequence, workers: int = 1) -> list:
    """Order-preserving map, optionally over a process pool."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ScanConfig:
    family: str
    delta: float
    noise_std: float = 1.0
    shock_std: float = 0.25
    demand: str = "linear"
    mu: float = 0.05
    mu_decay: float = 1.0
    actions: int = 2
    eps_grid: tuple | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if not 0 <= self.delta < 1:
            raise ValueError("discount factor must lie in [0, 1)")


def scan_row(config: ScanConfig, n: int) -> dict:
    """Sensitivity, minimized eps + gamma, and eta for one n."""
    grid = None if config.eps_grid is None else np.asarray(config.eps_grid, dtype=float)
    if config.family == "anonymous":
        sens = histogram_sensitivity(n)
        noise, dim = config.noise_std, config.actions
    elif config.family == "cournot":
        sens = cournot_sensitivity(CournotSpec(n, demand=config.demand, shock_std=config.shock_std))
        noise, dim = config.shock_std, 1
    else:
        mu_n = config.mu * n ** (-config.mu_decay)
        sens = mu_n * math.sqrt(config.actions * (n - 1))
        noise, dim = config.noise_std, config.actions * n
    curve = gaussian_privacy_curve(SensitivitySpec(sens, dim=dim), noise, grid)
    total = curve.total_star
    row = {"n": n, "sensitivity": sens, "eps_star": curve.eps_star, "gamma_star": curve.gamma_star,
           "eps_plus_gamma": total, "eta_at_delta": curve.eta(config.delta)}
    if config.family != "counterfactual" and n > 1:
        row["normalized_rate"] = total * n / math.sqrt(math.log(n))
    return row


@dataclass
class ScanResult:
    config: ScanConfig
    rows: list
    band_ratio: float | None
    monotone: bool

    def to_csv(self) -> str:
        cols = ["n", "sensitivity", "eps_star", "gamma_star", "eps_plus_gamma", "eta_at_delta",
                "normalized_rate", "monotone"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for r in self.rows:
            writer.writerow([r["n"]] + [repr(r[c]) if c in r else "" for c in cols[1:-1]] + [r["monotone"]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"family": self.config.family, "delta": self.config.delta, "rows": self.rows,
                "band_ratio": self.band_ratio, "monotone": self.monotone}


def scan_n(config: ScanConfig, ns: Sequence[int], workers: int = 1) -> ScanResult:
    """Evaluate :func:`scan_row` on increasing ``ns`` and check that eps + gamma and eta decay."""
    ns = sorted(int(n) for n in ns)
    if not ns or ns[0] < 2:
        raise ValueError("need at least one n, each n >= 2")
    rows = parallel_map(partial(scan_row, config), ns, workers)
    ok = True
    for k, r in enumerate(rows):
        if k:
            prev = rows[k - 1]
            ok_k = (r["eps_plus_gamma"] <= prev["eps_plus_gamma"] + MONOTONE_TOL
                    and r["eta_at_delta"] <= prev["eta_at_delta"] + MONOTONE_TOL)
        else:
            ok_k = True
        r["monotone"] = ok_k
        ok = ok and ok_k
    rates = [r["normalized_rate"] for r in rows if "normalized_rate" in r]
    band = max(rates) / min(rates) if rates and min(rates) > 0 else None
    return ScanResult(config, rows, band, ok)


# -- cooperation collapse --------------------------------------------------

COOPERATION_GAP = 0.25


def anonymous_pd(n: int) -> AggregateGame:
    """n-player prisoner's dilemma: payoff 1/4 + x/2, plus 1/4 for defecting; x = share of others cooperating.

    Action 0 cooperates, action 1 defects; defecting gains exactly the
    cooperation gap 1/4 whatever the others do.
    """
    if n < 2:
        raise ValueError("need at least 2 players")
    return AggregateGame(n, (1, 0), lambda a, c: 0.25 + c / (2 * (n - 1)) + (0.25 if a == 1 else 0.0),
                         actions=("C", "D"))


def cooperation_signal(n: int, noise_std: float, grid_factor: float = 20.0,
                       truncation: float = 6.0) -> AggregateSignalStructure:
    """Public noisy share of cooperators; ``noise_std = 0`` gives the exact share."""
    shares = np.arange(n + 1) / n
    if noise_std == 0:
        probs = np.eye(n + 1)
        return AggregateSignalStructure(n, (1, 0), probs, tuple(float(s) for s in shares), f"share-n{n}")
    grid = gaussian_noise_grid(shares, noise_std, noise_std / grid_factor, truncation)
    return AggregateSignalStructure(n, (1, 0), grid.probs, grid.labels, f"noisy-share-n{n}")


def grim_trigger(sig, n: int) -> PublicStrategyAutomaton:
    """Cooperate while the announced share rounds to full cooperation; defect forever after."""
    threshold = 1 - 1 / (2 * n)
    keep = np.array([float(s) >= threshold for s in sig.labels])
    coop, punish = np.array([[1.0, 0.0], [0.0, 1.0]])
    trans = np.vstack([np.where(keep, 0, 1), np.ones(len(keep), dtype=int)])
    return PublicStrategyAutomaton(tuple(np.array([coop, punish]) for _ in range(n)), trans, 0,
                                   ("cooperate", "punish"))


def _collapse_row(args) -> dict:
    n, delta, noise_std, grid_factor, truncation = args
    game = anonymous_pd(n)
    sig = cooperation_signal(n, noise_std, grid_factor, truncation)
    auto = grim_trigger(sig, n)
    xi, witness = one_shot_deviation_gain(game, sig, auto, delta)
    exact_sig = cooperation_signal(n, 0.0)
    contrast, _ = one_shot_deviation_gain(game, exact_sig, grim_trigger(exact_sig, n), delta)
    if noise_std > 0:
        curve = gaussian_privacy_curve(SensitivitySpec(1 / n), noise_std)
        eps_star, gamma_star = curve.eps_star, curve.gamma_star
    else:
        curve = privacy_curve(sig)
        eps_star, gamma_star = curve.eps_star, curve.gamma_star
    return {"n": n, "xi": xi, "supported": xi <= GAIN_TOL, "eps_star": eps_star, "gamma_star": gamma_star,
            "eta": delta / (1 - delta) * (eps_star + gamma_star), "contrast_xi": contrast,
            "witness": list(witness) if witness else None}


@dataclass
class CollapseReport:
    delta: float
    noise_std: float
    rows: list
    n_star: int | None
    n_eta: int | None
    contrast_xi: float
    notes: list = field(default_factory=list)

    @property
    def contrast_certified(self) -> bool:
        return self.contrast_xi <= GAIN_TOL

    def to_dict(self) -> dict:
        return {"delta": self.delta, "noise_std": self.noise_std, "cooperation_gap": COOPERATION_GAP,
                "n_star": self.n_star, "n_eta": self.n_eta, "contrast_xi": self.contrast_xi,
                "contrast_certified": self.contrast_certified, "rows": self.rows, "notes": self.notes}

    def narrative(self) -> str:
        lines = [f"grim trigger in the {COOPERATION_GAP}-gap anonymous prisoner's dilemma, "
                 f"delta={self.delta!r}, noise_std={self.noise_std!r}"]
        for r in self.rows:
            lines.append(f"  n={r['n']:>6}  one-shot gain={r['xi']:.6g}  eta={r['eta']:.6g}  "
                         f"{'cooperation supported' if r['supported'] else 'cooperation unsupportable'}")
        lines.append(f"collapse threshold n* = {self.n_star}" if self.n_star is not None
                     else "no collapse on this grid")
        lines.append(f"eta first below the cooperation gap at n = {self.n_eta}")
        lines.append(f"perfect monitoring: max one-shot gain {self.contrast_xi:.3g} "
                     f"({'certified perfect public equilibrium' if self.contrast_certified else 'not an equilibrium'})")
        lines.extend(self.notes)
        return "\n".join(lines) + "\n"


def demo_collapse(delta: float, noise_std: float, ns: Sequence[int] | None = None, grid_factor: float = 20.0,
                  truncation: float = 6.0, workers: int = 1) -> CollapseReport:
    """Find where noisy monitoring stops supporting grim-trigger cooperation, on a doubling grid of n."""
    if not 0 <= delta < 1:
        raise ValueError("discount factor must lie in [0, 1)")
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    ns = sorted(ns) if ns is not None else [2 ** k for k in range(1, 13)]
    rows = parallel_map(_collapse_row, [(n, delta, noise_std, grid_factor, truncation) for n in ns], workers)
    n_star = next((r["n"] for r in rows if not r["supported"]), None)
    n_eta = next((r["n"] for r in rows if r["eta"] < COOPERATION_GAP), None)
    contrast = max(r["contrast_xi"] for r in rows)
    report = CollapseReport(delta, noise_std, rows, n_star, n_eta, contrast)
    if delta < 0.5:
        report.notes.append("delta < 1/2: grim trigger cannot sustain cooperation even under perfect monitoring")
    if n_star is not None and n_eta is not None and n_star > n_eta:
        report.notes.append("unexpected: eta fell below the gap before cooperation collapsed")
    return report

