"""(eps, gamma)-differential privacy of signal structures.

The exact verifier uses the fact that, for a fixed neighbor pair, the event
maximizing ``P_a(E) - e^eps P_a'(E)`` is the set of outcomes where the
pointwise ratio exceeds ``e^eps``, so the smallest admissible gamma is a
positive-part sum. Running over all ordered neighbor pairs covers both
inequalities of the definition.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from ._prob import float_array, is_exact
from .signals import AggregateSignalStructure, SignalStructure

EPS_GRID_SIZE = 64
EPS_GRID_RANGE = (1e-4, 10.0)
REFINE_TOL = 1e-9


def default_eps_grid() -> np.ndarray:
    return np.logspace(math.log10(EPS_GRID_RANGE[0]), math.log10(EPS_GRID_RANGE[1]), EPS_GRID_SIZE)


@dataclass(frozen=True)
class PrivacyParams:
    eps: float
    gamma: float

    def __post_init__(self):
        if not self.eps >= 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")

    @property
    def total(self) -> float:
        return self.eps + self.gamma


@dataclass(frozen=True)
class SensitivitySpec:
    """L2 (and optionally L1) sensitivity of a ``dim``-dimensional statistic."""

    l2: float
    dim: int = 1
    l1: float | None = None

    def __post_init__(self):
        if not self.l2 >= 0:
            raise ValueError("sensitivity must be nonnegative")


@dataclass(frozen=True)
class DPWitness:
    """Neighbor pair attaining gamma*.

    For explicit structures ``profile`` is the base profile and player
    ``player`` switches to ``alternative``. For aggregate structures
    ``player`` is None and the pair is the two totals.
    """

    player: int | None
    profile: tuple
    alternative: int


def _ratio_for(eps, ratio, exact: bool):
    if ratio is not None:
        return ratio
    if eps is None or eps < 0:
        raise ValueError("eps must be a nonnegative number")
    if exact:
        if eps == 0:
            return Fraction(1)
        raise ValueError("exact mode needs an explicit rational ratio = e^eps")
    return math.exp(eps)


def _hockey(p, q, ratio):
    if ratio == math.inf:
        # only outcomes the alternative never produces can separate the pair
        diff = np.where(q > 0, 0, p)
    else:
        diff = p - ratio * q
    return np.where(diff > 0, diff, 0).sum(axis=-1)


def _explicit_blocks(sig: SignalStructure):
    for i in range(sig.n):
        moved = np.moveaxis(sig.probs, i, 0)
        for b in range(moved.shape[0]):
            for c in range(moved.shape[0]):
                if b != c:
                    yield i, b, c, moved[b], moved[c]


def _clip_gamma(value, exact: bool):
    # an all-zero positive part sums to a plain integer, even in exact mode
    return min(Fraction(value), Fraction(1)) if exact else min(float(value), 1.0)


def finite_dp_gamma(sig, eps: float | None = 0.0, *, ratio=None):
    """Smallest gamma making ``sig`` (eps, gamma)-private, and a pair attaining it.

    In exact mode (fraction probabilities) pass ``ratio`` as a rational
    stand-in for ``e^eps``; the result is then an exact fraction.
    """
    exact = sig.exact
    r = _ratio_for(eps, ratio, exact)
    best = Fraction(0) if exact else 0.0
    witness = None
    if isinstance(sig, AggregateSignalStructure):
        pairs = sig.neighbor_pairs()
        if len(pairs):
            h = _hockey(sig.probs[pairs[:, 0]], sig.probs[pairs[:, 1]], r)
            k = int(np.argmax(h))
            best = h[k]
            witness = DPWitness(None, (int(pairs[k, 0]),), int(pairs[k, 1]))
        return _clip_gamma(best, exact), witness
    for i, b, c, pb, pc in _explicit_blocks(sig):
        h = _hockey(pb, pc, r)
        flat = np.asarray(h).reshape(-1)
        k = int(np.argmax(flat))
        if witness is None or flat[k] > best:
            best = flat[k]
            rest = list(np.unravel_index(k, np.shape(h))) if np.ndim(h) else []
            profile = tuple(int(x) for x in rest[:i]) + (b,) + tuple(int(x) for x in rest[i:])
            witness = DPWitness(i, profile, c)
    return _clip_gamma(best, exact), witness


def max_log_ratio(sig) -> float:
    """Largest ``|log(P_a(s) / P_a'(s))|`` over neighbor pairs; inf if supports differ."""
    worst = 0.0
    if isinstance(sig, AggregateSignalStructure):
        pairs = sig.neighbor_pairs()
        blocks = [(float_array(sig.probs[pairs[:, 0]]), float_array(sig.probs[pairs[:, 1]]))]
    else:
        blocks = [(float_array(pb), float_array(pc)) for *_, pb, pc in _explicit_blocks(sig)]
    for p, q in blocks:
        both = (p > 0) & (q > 0)
        if np.any((p > 0) != (q > 0)):
            return math.inf
        if np.any(both):
            worst = max(worst, float(np.max(np.abs(np.log(p[both]) - np.log(q[both])))))
    return worst


def _minimize_total(gamma_fn: Callable[[float], float], grid: np.ndarray, gammas: np.ndarray):
    totals = grid + gammas
    k = int(np.argmin(totals))
    best_eps, best_gamma = float(grid[k]), float(gammas[k])
    lo = float(grid[k - 1]) if k > 0 else 0.0
    hi = float(grid[k + 1]) if k + 1 < len(grid) else float(grid[k])
    if hi > lo:
        res = minimize_scalar(lambda e: e + gamma_fn(e), bounds=(lo, hi), method="bounded",
                              options={"xatol": REFINE_TOL})
        if res.success and res.fun < best_eps + best_gamma:
            best_eps, best_gamma = float(res.x), float(gamma_fn(res.x))
    g0 = float(gamma_fn(0.0))
    if g0 < best_eps + best_gamma:
        best_eps, best_gamma = 0.0, g0
    return best_eps, best_gamma


@dataclass(frozen=True, eq=False)
class PrivacyCurve:
    """Map eps -> gamma*(eps) on a grid, with the minimizer of eps + gamma*."""

    eps: np.ndarray
    gamma: np.ndarray
    provenance: str
    eps_star: float
    gamma_star: float
    structure_id: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def total_star(self) -> float:
        return self.eps_star + self.gamma_star

    @property
    def params_star(self) -> PrivacyParams:
        return PrivacyParams(self.eps_star, min(max(self.gamma_star, 0.0), 1.0))

    def eta(self, delta: float) -> float:
        return anti_folk_bound(delta, self.params_star)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("eps,gamma,provenance\n")
        for e, g in zip(self.eps, self.gamma):
            buf.write(f"{float(e)!r},{float(g)!r},{self.provenance}\n")
        return buf.getvalue()


def privacy_curve(sig, eps_grid: Sequence[float] | None = None, structure_id: str = "") -> PrivacyCurve:
    """Exact gamma*(eps) of a finite structure on a grid (computed in floating point)."""
    if sig.exact:
        sig = sig.to_float()
    grid = default_eps_grid() if eps_grid is None else np.asarray(eps_grid, dtype=float)

    def gamma_fn(e):
        return float(finite_dp_gamma(sig, float(e))[0])

    gammas = np.array([gamma_fn(e) for e in grid])
    eps_star, gamma_star = _minimize_total(gamma_fn, grid, gammas)
    return PrivacyCurve(grid, gammas, "exact-finite", eps_star, gamma_star,
                        structure_id or getattr(sig, "name", ""))


def gaussian_sigma(sens: SensitivitySpec, eps: float, gamma: float) -> float:
    """Noise standard deviation ``(s / eps) sqrt(log(1.25 / gamma))``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    return sens.l2 / eps * math.sqrt(math.log(1.25 / gamma))


def gaussian_gamma(sens: SensitivitySpec, noise_std: float, eps: float) -> float:
    """gamma(eps) from inverting the Gaussian calibration.

    The calibration holds for eps < 1 only, so larger eps reuse the value at
    eps = 1 (privacy at a smaller eps implies it at any larger one).
    """
    if sens.l2 == 0:
        return 0.0
    e = min(float(eps), 1.0)
    return min(1.0, 1.25 * math.exp(-((noise_std * e / sens.l2) ** 2)))


def gaussian_privacy_curve(sens: SensitivitySpec, noise_std: float,
                           eps_grid: Sequence[float] | None = None, structure_id: str = "") -> PrivacyCurve:
    if not noise_std > 0:
        raise ValueError("noise_std must be positive")
    grid = default_eps_grid() if eps_grid is None else np.asarray(eps_grid, dtype=float)

    def gamma_fn(e):
        return gaussian_gamma(sens, noise_std, e)

    gammas = np.array([gamma_fn(e) for e in grid])
    if sens.l2 == 0:
        eps_star, gamma_star = 0.0, 0.0
    else:
        eps_star, gamma_star = _minimize_total(gamma_fn, grid, gammas)
    return PrivacyCurve(grid, gammas, "analytic-gaussian", eps_star, gamma_star, structure_id,
                        {"l2_sensitivity": sens.l2, "noise_std": noise_std})


def compose_basic(params: Sequence[PrivacyParams]) -> PrivacyParams:
    if not params:
        raise ValueError("need at least one component")
    return PrivacyParams(sum(p.eps for p in params), min(1.0, sum(p.gamma for p in params)))


def compose_advanced(k: int, eps_each: float, gamma_each: float, gamma_slack: float) -> PrivacyParams:
    """k-fold composition of (eps_each, gamma_each)-private components with slack gamma_slack."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if not 0 < gamma_slack <= 1:
        raise ValueError("gamma_slack must lie in (0, 1]")
    if eps_each < 0 or not 0 <= gamma_each <= 1:
        raise ValueError("invalid component parameters")
    eps = math.sqrt(2 * math.log(1 / gamma_slack) * k) * eps_each + k * eps_each * (math.exp(eps_each) - 1)
    return PrivacyParams(eps, min(1.0, gamma_slack + k * gamma_each))


def subsample_privacy(k: int, n: int) -> PrivacyParams:
    """Observing k of n player actions chosen uniformly is (0, k/n)-private."""
    if n < 1 or not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n and n >= 1")
    return PrivacyParams(0.0, k / n)


def laplace_privacy(l1_sensitivity: float, eps: float) -> tuple[float, PrivacyParams]:
    """Laplace scale ``l1 / eps`` and the (eps, 0) guarantee it buys."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if l1_sensitivity < 0:
        raise ValueError("sensitivity must be nonnegative")
    return l1_sensitivity / eps, PrivacyParams(eps, 0.0)


def _merge_matrix(num_signals: int, merge_map, labels) -> tuple[np.ndarray, tuple]:
    if isinstance(merge_map, Mapping):
        lookup = dict(merge_map)
        try:
            targets = [lookup[labels[s]] if labels[s] in lookup else lookup[s] for s in range(num_signals)]
        except KeyError as exc:
            raise ValueError(f"merge map is not total: no image for signal {exc.args[0]!r}") from None
    else:
        targets = list(merge_map)
        if len(targets) != num_signals:
            raise ValueError("merge map is not total on the signal set")
    coarse = tuple(dict.fromkeys(targets))
    index = {c: j for j, c in enumerate(coarse)}
    mat = np.zeros((num_signals, len(coarse)), dtype=int)
    for s, t in enumerate(targets):
        mat[s, index[t]] = 1
    return mat, coarse


def coarsen_signals(sig, merge_map):
    """Push every signal distribution forward through a deterministic merge map.

    ``merge_map`` is a mapping (keyed by label or index) or a sequence
    indexed by signal. Private structures are coarsened componentwise.
    """
    mat, coarse = _merge_matrix(sig.num_signals, merge_map, sig.labels)
    if sig.exact:
        mat = mat.astype(object)
    if isinstance(sig, AggregateSignalStructure):
        return AggregateSignalStructure(sig.n, sig.weights, np.dot(sig.probs, mat), coarse, sig.name)
    if sig.kind == "private":
        full = mat
        for _ in range(sig.n - 1):
            full = np.kron(full, mat)
        mat = full
    probs = np.dot(sig.probs, mat)
    return SignalStructure(sig.kind, probs, coarse, name=sig.name)


def product_structure(first: SignalStructure, second: SignalStructure) -> SignalStructure:
    """Observe both structures' signals, drawn independently given the profile."""
    if first.kind != second.kind or first.num_actions != second.num_actions:
        raise ValueError("structures must share kind and action sets")
    labels = tuple((x, y) for x in first.labels for y in second.labels)
    shape = first.num_actions
    if first.kind == "public":
        probs = (first.probs[..., :, None] * second.probs[..., None, :]).reshape(shape + (-1,))
        return SignalStructure("public", probs, labels, name=f"{first.name}x{second.name}")
    n, m1, m2 = first.n, first.num_signals, second.num_signals
    p1 = first.probs.reshape(shape + (m1,) * n)
    p2 = second.probs.reshape(shape + (m2,) * n)
    k = len(shape)
    joint = p1.reshape(p1.shape + (1,) * n) * p2.reshape(shape + (1,) * n + (m2,) * n)
    order = list(range(k)) + [ax for j in range(n) for ax in (k + j, k + n + j)]
    probs = joint.transpose(order).reshape(shape + ((m1 * m2) ** n,))
    return SignalStructure("private", probs, labels, name=f"{first.name}x{second.name}")


def anti_folk_bound(delta: float, params: PrivacyParams) -> float:
    """Stage-game approximation ``delta / (1 - delta) * (eps + gamma)``."""
    if not 0 <= delta < 1:
        raise ValueError("discount factor must lie in [0, 1)")
    return delta / (1 - delta) * (params.eps + params.gamma)


def is_exact_structure(sig) -> bool:
    return is_exact(sig.probs)
