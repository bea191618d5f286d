"""Example families with noised public or private signals.

Each builder returns the stage game, an exactly verifiable discretized
signal structure (when it fits the size guards), and two privacy curves:
the analytic Gaussian one from the sensitivity, and the exact one of the
discretized structure. The discretized structure is the object of study.
Its edge cells absorb the noise tails, so it is an exact post-processing
of the continuous mechanism.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.special import ndtr
from scipy.stats import laplace

from .errors import GuardError
from .game import AggregateGame, AnonymousGame, StageGame
from .privacy import PrivacyCurve, SensitivitySpec, gaussian_privacy_curve, privacy_curve
from .signals import AggregateSignalStructure, SignalStructure

GRID_GUARD = 10**4
TABLE_GUARD = 10**7
ENUM_GUARD = 10**6
MIN_TRUNCATION = 4.0


# -- sensitivities ---------------------------------------------------------

def histogram_sensitivity(n: int, count_space: bool = False) -> float:
    """L2 sensitivity of the action histogram: one switch moves 1/n (or one count) between two bins."""
    if n < 2:
        raise ValueError("need at least 2 players")
    return math.sqrt(2) if count_space else math.sqrt(2) / n


def _payoff_tensor(game, guard: int) -> np.ndarray:
    if isinstance(game, StageGame):
        return game.payoffs
    if hasattr(game, "to_stage_game"):
        return game.to_stage_game(guard).payoffs
    raise TypeError("mu sensitivity needs an explicit or convertible game")


def mu_sensitivity(game, guard: int = ENUM_GUARD) -> float:
    """Largest change in one player's payoff caused by a single other player's switch."""
    pay = _payoff_tensor(game, guard)
    n = pay.ndim - 1
    mu = 0.0
    for j in range(n):
        spread = pay.max(axis=j) - pay.min(axis=j)
        for i in range(n):
            if i != j:
                mu = max(mu, float(spread[..., i].max()))
    return mu


def counterfactual_sensitivity(game, mu: float) -> float:
    """``mu * sqrt(max_i sum_{j != i} |A_j|)``; a switch by i leaves i's own vector unchanged."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    k = list(game.num_actions)
    return mu * math.sqrt(max(sum(k) - k[i] for i in range(len(k))))


# -- discretization --------------------------------------------------------

def _axis_grid(lo: float, hi: float, width: float) -> np.ndarray:
    return np.arange(math.floor(lo / width), math.ceil(hi / width) + 1) * width


def _cell_masses(points: np.ndarray, centers: np.ndarray, cdf: Callable, sf: Callable) -> np.ndarray:
    """``(len(centers), len(points))`` mass of each cell around a point; edge cells absorb the tails.

    Cells right of the center are measured with upper tails, which keeps
    small masses accurate far from the center.
    """
    mids = (points[1:] + points[:-1]) / 2
    z = mids[None, :] - centers[:, None]
    rows = len(centers)
    low = np.hstack([np.zeros((rows, 1)), cdf(z), np.ones((rows, 1))])
    high = np.hstack([np.ones((rows, 1)), sf(z), np.zeros((rows, 1))])
    by_cdf = low[:, 1:] - low[:, :-1]
    by_sf = high[:, :-1] - high[:, 1:]
    masses = np.where(points[None, :] > centers[:, None], by_sf, by_cdf)
    return np.maximum(masses, 0.0)


def _point_masses(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    out = np.zeros((len(centers), len(points)))
    out[np.arange(len(centers)), np.abs(centers[:, None] - points[None, :]).argmin(axis=1)] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class NoiseGrid:
    """Discretized additive noise: ``probs[r]`` is the signal law for center row ``r``."""

    probs: np.ndarray
    axes: tuple
    labels: tuple


def _noise_grid(centers, spread: float, grid_width: float, truncation: float, guard: int,
                masses: Callable) -> NoiseGrid:
    centers = np.asarray(centers, dtype=float)
    if centers.ndim == 1:
        centers = centers[:, None]
    if not grid_width > 0:
        raise ValueError("grid_width must be positive")
    if truncation < MIN_TRUNCATION:
        raise ValueError(f"truncation must be at least {MIN_TRUNCATION} noise scales")
    axes = [_axis_grid(centers[:, d].min() - truncation * spread, centers[:, d].max() + truncation * spread,
                       grid_width) for d in range(centers.shape[1])]
    size = math.prod(len(a) for a in axes)
    if size > guard:
        raise GuardError(f"discretized signal set has {size} points, guard is {guard}")
    if spread > 0 and any(len(a) < 2 for a in axes):
        raise ValueError("degenerate grid: widen the truncation or shrink grid_width")
    per_axis = [masses(a, centers[:, d]) for d, a in enumerate(axes)]
    probs = per_axis[0]
    for m in per_axis[1:]:
        probs = (probs[:, :, None] * m[:, None, :]).reshape(len(centers), -1)
    probs = probs / probs.sum(axis=1, keepdims=True)
    if len(axes) == 1:
        labels = tuple(round(float(p), 12) for p in axes[0])
    else:
        labels = tuple(tuple(round(float(x), 12) for x in pt) for pt in itertools.product(*axes))
    return NoiseGrid(probs, tuple(axes), labels)


def gaussian_noise_grid(centers, noise_std: float, grid_width: float, truncation: float = 6.0,
                        guard: int = GRID_GUARD) -> NoiseGrid:
    """Discretize ``center + N(0, noise_std^2 I)`` on a grid anchored at multiples of ``grid_width``.

    ``centers`` has one row per signal law (a scalar or a d-vector each).
    The grid spans ``truncation`` standard deviations beyond the hull of
    the centers in every coordinate. ``noise_std = 0`` gives point masses
    at the nearest grid point.
    """
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    if noise_std == 0:
        return _noise_grid(centers, 0.0, grid_width, truncation, guard, _point_masses)

    def masses(points, c):
        return _cell_masses(points, c, lambda z: ndtr(z / noise_std), lambda z: ndtr(-z / noise_std))

    return _noise_grid(centers, noise_std, grid_width, truncation, guard, masses)


def laplace_noise_grid(centers, scale: float, grid_width: float, truncation: float = 20.0,
                       guard: int = GRID_GUARD) -> NoiseGrid:
    """As :func:`gaussian_noise_grid` for Laplace noise of the given scale (truncation in scales)."""
    if not scale > 0:
        raise ValueError("scale must be positive")

    def masses(points, c):
        return _cell_masses(points, c, lambda z: laplace.cdf(z, scale=scale), lambda z: laplace.sf(z, scale=scale))

    return _noise_grid(centers, scale, grid_width, truncation, guard, masses)


def discretize_gaussian_signal(centers, noise_std: float, grid_width: float, truncation: float = 6.0, *,
                               vector: bool = False, guard: int = GRID_GUARD, name: str = "") -> SignalStructure:
    """Public structure for a noised statistic given per pure profile.

    ``centers[a]`` is the statistic at profile ``a``; with ``vector=True``
    the last axis holds its coordinates.
    """
    arr = np.asarray(centers, dtype=float)
    shape = arr.shape[:-1] if vector else arr.shape
    if not shape:
        raise ValueError("need one center per pure profile")
    flat = arr.reshape((math.prod(shape), -1))
    grid = gaussian_noise_grid(flat, noise_std, grid_width, truncation, guard)
    return SignalStructure("public", grid.probs.reshape(shape + (-1,)), grid.labels, name=name)


# -- instances -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FamilyInstance:
    """A built example: stage game, discretized signals, analytic and exact privacy curves."""

    family: str
    n: int
    game: object
    sig: object | None
    sensitivity: float
    analytic: PrivacyCurve
    exact: PrivacyCurve | None
    meta: dict = field(default_factory=dict)

    def eta(self, delta: float, which: str = "analytic") -> float:
        curve = self.analytic if which == "analytic" else self.exact
        if curve is None:
            raise ValueError(f"instance has no {which} curve")
        return curve.eta(delta)


def _maybe_exact(exact, build):
    """Run ``build`` when forced, or when it fits the guards in auto mode."""
    if exact is False:
        return None, "skipped by request"
    try:
        return build(), None
    except GuardError as err:
        if exact:
            raise
        return None, f"skipped: {err}"


def public_goods_rule(n: int) -> Callable[[int, tuple], float]:
    """Two-action contribution game: action 1 contributes at a private cost of 1/4."""
    def rule(own: int, hist: tuple) -> float:
        contributed = hist[1] + (own == 1)
        return 0.5 + 0.5 * contributed / n - 0.25 * (own == 1)
    return rule


@dataclass(frozen=True)
class AnonymousGameSpec:
    """Anonymous game with a noised action histogram announced each period.

    ``rule(own, histogram_of_others)`` gives raw payoffs (rescaled to
    [0, 1] globally); the default is :func:`public_goods_rule` for k = 2.
    """

    n: int
    k: int = 2
    noise_std: float = 1.0
    rule: Callable | None = None
    count_space: bool = False
    grid_width: float | None = None
    truncation: float = 6.0

    def __post_init__(self):
        if self.n < 2 or self.k < 2:
            raise ValueError("need n >= 2 players and k >= 2 actions")
        if not self.noise_std > 0:
            raise ValueError("noise_std must be positive")
        if self.rule is None and self.k != 2:
            raise ValueError("the default payoff rule needs k = 2")


def build_anonymous_instance(spec: AnonymousGameSpec, eps_grid=None, exact: bool | None = None,
                             game: bool = True) -> FamilyInstance:
    n, k = spec.n, spec.k
    rule = spec.rule or public_goods_rule(n)
    built = AnonymousGame.normalized(n, k, rule) if game else None
    sens = histogram_sensitivity(n, spec.count_space)
    analytic = gaussian_privacy_curve(SensitivitySpec(sens, dim=k), spec.noise_std, eps_grid, f"anonymous-n{n}")
    scale = 1.0 if spec.count_space else 1.0 / n
    width = spec.grid_width or spec.noise_std / 4

    def build():
        if k == 2:
            centers = np.array([[n - t, t] for t in range(n + 1)], dtype=float) * scale
            grid = gaussian_noise_grid(centers, spec.noise_std, width, spec.truncation)
            return AggregateSignalStructure(n, (0, 1), grid.probs, grid.labels, f"anonymous-n{n}")
        if k ** n > ENUM_GUARD:
            raise GuardError(f"{k}^{n} profiles exceed the enumeration guard")
        centers = np.empty((k,) * n + (k,))
        for a in itertools.product(range(k), repeat=n):
            centers[a] = np.bincount(a, minlength=k) * scale
        return discretize_gaussian_signal(centers, spec.noise_std, width, spec.truncation, vector=True,
                                          name=f"anonymous-n{n}")

    sig, why = _maybe_exact(exact, build)
    curve = privacy_curve(sig, eps_grid, f"anonymous-n{n}") if sig is not None else None
    meta = {"noise_space": "counts" if spec.count_space else "fractions", "grid_width": width,
            "truncation": spec.truncation,
            "payoff_consistency": "the announced histogram is payoff-irrelevant; ex-post payoffs are "
                                  "the stage payoffs averaged over the signal"}
    if why:
        meta["exact_curve"] = why
    return FamilyInstance("anonymous", n, built, sig, sens, analytic, curve, meta)


DEMANDS = {
    "linear": (lambda x: 1 - x / 2, lambda x: -0.5 * np.ones_like(x)),
    "exponential": (lambda x: np.exp(-x), lambda x: -np.exp(-x)),
}


@dataclass(frozen=True)
class CournotSpec:
    """n-firm Cournot game on a quantity grid with a log-normal demand shock observed through the price.

    Price is ``theta * demand_scale * P(mean quantity)`` with
    ``E[theta] = 1`` and log-shock standard deviation ``shock_std``; cost
    is ``c(q) = q``. ``demand`` is a name in :data:`DEMANDS` or a callable
    (vectorized over numpy arrays).
    """

    n: int
    grid_size: int = 21
    demand: str | Callable = "linear"
    demand_derivative: Callable | None = None
    shock_std: float = 0.25
    demand_scale: float = 2.0
    grid_width: float | None = None
    truncation: float = 6.0

    def __post_init__(self):
        if self.n < 1 or self.grid_size < 2:
            raise ValueError("need n >= 1 firms and at least 2 grid quantities")
        if not self.shock_std > 0:
            raise ValueError("shock_std must be positive")
        if not self.demand_scale > 0:
            raise ValueError("demand_scale must be positive")
        x = np.linspace(0, 1, 1001)
        p = self.price_function()(x)
        if np.any(p <= 0):
            raise ValueError("demand must be positive on [0, 1]")
        if np.any(np.diff(p) > 0):
            raise ValueError("demand must be decreasing on [0, 1]")

    def price_function(self) -> Callable:
        return DEMANDS[self.demand][0] if isinstance(self.demand, str) else self.demand

    def derivative(self) -> Callable | None:
        if isinstance(self.demand, str):
            return DEMANDS[self.demand][1]
        return self.demand_derivative


def cournot_sensitivity(spec: CournotSpec, method: str = "finite-difference", points: int = 2001) -> float:
    """First-order sensitivity ``(1/n) sup_x |P'(x) / P(x)|`` of the log price."""
    x = np.linspace(0, 1, points)
    p = spec.price_function()(x)
    if method == "finite-difference":
        dp = np.gradient(p, x, edge_order=2)
    elif method == "closed-form":
        deriv = spec.derivative()
        if deriv is None:
            raise ValueError("closed form needs a demand derivative")
        dp = deriv(x)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(np.max(np.abs(dp / p))) / spec.n


def _log_price_by_total(spec: CournotSpec) -> np.ndarray:
    g = spec.grid_size - 1
    totals = np.arange(spec.n * g + 1)
    return np.log(spec.demand_scale * spec.price_function()(totals / (spec.n * g)))


def cournot_exact_sensitivity(spec: CournotSpec) -> float:
    """Largest change of the log price from one firm's unilateral quantity change, over the grid."""
    logp = _log_price_by_total(spec)
    window = np.lib.stride_tricks.sliding_window_view(logp, spec.grid_size)
    return float(np.max(window.max(axis=1) - window.min(axis=1)))


def cournot_game(spec: CournotSpec) -> AggregateGame:
    g = spec.grid_size - 1
    price = spec.price_function()
    scale = spec.demand_scale

    def raw(own: int, others: int) -> float:
        q = own / g
        return q * (scale * float(price((others + own) / (spec.n * g))) - 1)

    return AggregateGame.normalized(spec.n, tuple(range(spec.grid_size)), raw,
                                    actions=[f"{a / g:g}" for a in range(spec.grid_size)])


def build_cournot_instance(spec: CournotSpec, eps_grid=None, exact: bool | None = None,
                           game: bool = True) -> FamilyInstance:
    n = spec.n
    built = cournot_game(spec) if game else None
    first = cournot_sensitivity(spec)
    analytic = gaussian_privacy_curve(SensitivitySpec(first), spec.shock_std, eps_grid, f"cournot-n{n}")
    width = spec.grid_width or spec.shock_std / 4
    v = spec.shock_std

    def build():
        centers = _log_price_by_total(spec) - v * v / 2
        grid = gaussian_noise_grid(centers, v, width, spec.truncation)
        return AggregateSignalStructure(n, tuple(range(spec.grid_size)), grid.probs, grid.labels, f"cournot-n{n}")

    sig, why = _maybe_exact(exact, build)
    curve = privacy_curve(sig, eps_grid, f"cournot-n{n}") if sig is not None else None
    meta = {"first_order_sensitivity": first, "exact_sensitivity": cournot_exact_sensitivity(spec),
            "shock_std": v, "demand_scale": spec.demand_scale, "grid_width": width,
            "payoff_consistency": "profit q*(p - 1) is a function of own quantity and the observed price; "
                                  "the discretized log price recovers it to within one cell"}
    if why:
        meta["exact_curve"] = why
    return FamilyInstance("cournot", n, built, sig, first, analytic, curve, meta)


@dataclass(frozen=True)
class CounterfactualSpec:
    """Each player privately sees a noised vector of what each own action would have paid."""

    game: StageGame
    noise_std: float
    grid_width: float | None = None
    truncation: float = 6.0

    def __post_init__(self):
        if not self.noise_std > 0:
            raise ValueError("noise_std must be positive")


def build_counterfactual_instance(spec: CounterfactualSpec, eps_grid=None, exact: bool | None = None) -> FamilyInstance:
    game = spec.game
    n = game.n
    mu = mu_sensitivity(game)
    sens = counterfactual_sensitivity(game, mu)
    dims = sum(game.num_actions)
    analytic = gaussian_privacy_curve(SensitivitySpec(sens, dim=dims), spec.noise_std, eps_grid,
                                      f"counterfactual-n{n}")
    width = spec.grid_width or spec.noise_std / 2

    def build():
        ks = set(game.num_actions)
        if len(ks) != 1:
            raise GuardError("private alphabet needs equal action counts for all players")
        k = ks.pop()
        profiles = list(game.profiles())
        rows = []
        for i in range(n):
            for a in profiles:
                rows.append([game.payoff(a[:i] + (b,) + a[i + 1:])[i] for b in range(k)])
        grid = gaussian_noise_grid(np.array(rows), spec.noise_std, width, spec.truncation)
        m = len(grid.labels)
        if len(profiles) * m ** n > TABLE_GUARD:
            raise GuardError(f"joint private table needs {len(profiles) * m ** n} entries")
        probs = np.empty(tuple(game.num_actions) + (m ** n,))
        for idx, a in enumerate(profiles):
            joint = grid.probs[idx]
            for i in range(1, n):
                joint = np.kron(joint, grid.probs[i * len(profiles) + idx])
            probs[a] = joint
        return SignalStructure("private", probs, grid.labels, name=f"counterfactual-n{n}")

    sig, why = _maybe_exact(exact, build)
    curve = privacy_curve(sig, eps_grid, f"counterfactual-n{n}") if sig is not None else None
    meta = {"mu": mu, "dimension": dims, "grid_width": width,
            "monitoring": "private; the regret statement is checked with the private-monitoring "
                          "(correlated equilibrium) verifier",
            "payoff_consistency": "own realized payoff is the entry of the own played action, "
                                  "observed with noise"}
    if why:
        meta["exact_curve"] = why
    return FamilyInstance("counterfactual", n, game, sig, sens, analytic, curve, meta)


def subsample_structure(n: int, samples: int = 1) -> AggregateSignalStructure:
    """Exact public signal: how many of ``samples`` uniformly drawn players (without replacement) chose action 1."""
    if not 0 <= samples <= n:
        raise ValueError("need 0 <= samples <= n")
    probs = np.empty((n + 1, samples + 1), dtype=object)
    total = math.comb(n, samples)
    for t in range(n + 1):
        for j in range(samples + 1):
            probs[t, j] = Fraction(math.comb(t, j) * math.comb(n - t, samples - j), total)
    return AggregateSignalStructure(n, (0, 1), probs, tuple(range(samples + 1)), f"subsample-{samples}-of-{n}")
