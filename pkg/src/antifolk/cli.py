"""Command-line runner.

Exit codes: 0 pass, 1 bound violation (or failed in-process check),
2 malformed input, 3 guard violation, 4 theorem/monitoring mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import io as aio
from .errors import GuardError, IncompatibleMonitoringError, ZeroProbabilityError
from .experiments import FAMILIES, ScanConfig, demo_collapse, scan_n
from .families import (AnonymousGameSpec, CournotSpec, build_anonymous_instance, build_cournot_instance)
from .privacy import SensitivitySpec, finite_dp_gamma, gaussian_privacy_curve, privacy_curve
from .repeated.automata import PublicStrategyAutomaton
from .repeated.theorems import verify_theorem1, verify_theorem2, verify_theorem3, verify_theorem4

EXIT_PASS, EXIT_VIOLATION, EXIT_PARSE, EXIT_GUARD, EXIT_INCOMPATIBLE = 0, 1, 2, 3, 4
BAND_LIMIT = 1.5
DEFAULT_SCAN_NS = tuple(2 ** k for k in range(4, 15))


@dataclass(frozen=True)
class RunConfig:
    command: str
    delta: float | None
    seed: int
    eps_grid: tuple | None
    horizon: int | None
    fmt: str
    out: str | None
    exact: bool

    def __post_init__(self):
        if self.delta is not None and not 0 <= self.delta < 1:
            raise ValueError("--delta must lie in [0, 1)")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("--seed must be a 64-bit unsigned integer")


def parse_eps_grid(text: str | None):
    """``"0.01,0.1,1"`` or ``"lo:hi:count"`` (geometric)."""
    if text is None:
        return None
    if ":" in text:
        lo, hi, count = text.split(":")
        grid = np.geomspace(float(lo), float(hi), int(count))
    else:
        grid = np.array([float(x) for x in text.split(",")])
    if grid.size == 0 or np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise ValueError("eps grid must hold nonnegative finite values")
    return tuple(float(x) for x in np.sort(grid))


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _emit(text: str, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(doc) -> str:
    return json.dumps(doc, indent=2, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _curve_doc(curve, cfg: RunConfig) -> dict:
    return {"structure_id": curve.structure_id, "provenance": curve.provenance,
            "eps": [float(e) for e in curve.eps], "gamma": [float(g) for g in curve.gamma],
            "eps_star": curve.eps_star, "gamma_star": curve.gamma_star, "total_star": curve.total_star,
            "meta": curve.meta, "seed": cfg.seed}


def cmd_analyze_signals(args, cfg: RunConfig) -> int:
    if args.signals:
        sig = aio.load_signals(args.signals, exact=cfg.exact)
        curve = privacy_curve(sig, cfg.eps_grid, sig.name or args.signals)
        doc = _curve_doc(curve, cfg)
        if sig.exact:
            gamma0, _ = finite_dp_gamma(sig, ratio=Fraction(1))
            doc["gamma_at_eps0_exact"] = str(gamma0)
    elif args.family == "anonymous":
        spec = AnonymousGameSpec(args.n, k=args.actions, noise_std=args.noise_std, count_space=args.count_space)
        inst = build_anonymous_instance(spec, cfg.eps_grid, exact=args.curve != "analytic", game=False)
        curve = inst.exact if args.curve == "exact" else inst.analytic
        doc = _curve_doc(curve, cfg)
    elif args.family == "cournot":
        spec = CournotSpec(args.n, demand=args.demand, shock_std=args.shock_std)
        inst = build_cournot_instance(spec, cfg.eps_grid, exact=args.curve != "analytic", game=False)
        curve = inst.exact if args.curve == "exact" else inst.analytic
        doc = _curve_doc(curve, cfg)
    elif args.family == "counterfactual":
        sens = args.mu * (args.actions * (args.n - 1)) ** 0.5
        curve = gaussian_privacy_curve(SensitivitySpec(sens, dim=args.actions * args.n), args.noise_std,
                                       cfg.eps_grid, f"counterfactual-n{args.n}")
        doc = _curve_doc(curve, cfg)
    else:
        raise aio.InputError("analyze-signals needs --signals or --family")
    _emit(curve.to_csv() if cfg.fmt == "csv" else _json(doc), cfg.out)
    return EXIT_PASS


def cmd_verify(args, cfg: RunConfig) -> int:
    if not (args.game and args.signals and args.strategy):
        raise aio.InputError("verify needs --game, --signals and --strategy")
    game = aio.load_game(args.game)
    sig = aio.load_signals(args.signals, exact=cfg.exact, num_actions=game.num_actions)
    strategy = aio.load_strategy(args.strategy, exact=cfg.exact)
    curve = privacy_curve(sig, cfg.eps_grid, sig.name)
    instance = sig.name or args.signals
    theorem = args.theorem
    if theorem in (1, 3):
        if not isinstance(strategy, PublicStrategyAutomaton):
            raise IncompatibleMonitoringError(f"theorem {theorem} needs a public strategy automaton")
        verify = verify_theorem1 if theorem == 1 else verify_theorem3
        report = verify(game, sig, strategy, cfg.delta, curve, claimed_xi=args.claimed_xi, instance=instance)
    else:
        verify = verify_theorem2 if theorem == 2 else verify_theorem4
        report = verify(game, sig, strategy, cfg.delta, curve, cfg.horizon or 4, claimed_xi=args.claimed_xi,
                        instance=instance)
    doc = report.to_dict()
    doc["seed"] = cfg.seed
    _emit(report.to_csv() if cfg.fmt == "csv" else _json(doc), cfg.out)
    for c in report.violations:
        print(f"violation at {c.state}: regret {c.regret!r} > bound {c.bound!r}", file=sys.stderr)
    return EXIT_PASS if report.passed else EXIT_VIOLATION


def cmd_scan_n(args, cfg: RunConfig) -> int:
    config = ScanConfig(args.family, cfg.delta if cfg.delta is not None else 0.9, noise_std=args.noise_std,
                        shock_std=args.shock_std, demand=args.demand, mu=args.mu, mu_decay=args.mu_decay,
                        actions=args.actions, eps_grid=cfg.eps_grid)
    ns = _int_list(args.ns) if args.ns else list(DEFAULT_SCAN_NS)
    result = scan_n(config, ns, workers=args.workers)
    band_ok = None if result.band_ratio is None else result.band_ratio <= BAND_LIMIT
    if cfg.fmt == "csv":
        band = "" if result.band_ratio is None else f" band_ratio={result.band_ratio!r} band_ok={band_ok}"
        text = result.to_csv() + f"# monotone={result.monotone}{band} seed={cfg.seed}\n"
    else:
        doc = result.to_dict()
        doc.update(band_limit=BAND_LIMIT, band_ok=band_ok, seed=cfg.seed)
        text = _json(doc)
    _emit(text, cfg.out)
    return EXIT_PASS if result.monotone else EXIT_VIOLATION


def cmd_demo_collapse(args, cfg: RunConfig) -> int:
    ns = _int_list(args.ns) if args.ns else None
    report = demo_collapse(cfg.delta if cfg.delta is not None else 0.9, args.noise_std, ns,
                           grid_factor=args.grid_factor, workers=args.workers)
    if cfg.fmt == "json":
        doc = report.to_dict()
        doc["seed"] = cfg.seed
        text = _json(doc)
    else:
        text = report.narrative()
    _emit(text, cfg.out)
    return EXIT_PASS


COMMANDS = {"analyze-signals": cmd_analyze_signals, "verify": cmd_verify, "scan-n": cmd_scan_n,
            "demo-collapse": cmd_demo_collapse}


def _common(p, fmt_choices=("json", "csv"), fmt_default="json"):
    p.add_argument("--delta", type=float, help="discount factor in [0, 1)")
    p.add_argument("--seed", type=int, default=0, help="master seed, recorded in the output")
    p.add_argument("--eps-grid", help="comma list or lo:hi:count (geometric)")
    p.add_argument("--format", choices=fmt_choices, default=fmt_default)
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--exact-rational", action="store_true", help="read probabilities as exact fractions")
    p.add_argument("--workers", type=int, default=1)


def _family_opts(p):
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--actions", type=int, default=2)
    p.add_argument("--noise-std", type=float, default=1.0)
    p.add_argument("--count-space", action="store_true", help="noise the counts instead of the fractions")
    p.add_argument("--shock-std", type=float, default=0.25)
    p.add_argument("--demand", choices=("linear", "exponential"), default="linear")
    p.add_argument("--mu", type=float, default=0.05)
    p.add_argument("--mu-decay", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="antifolk", description="Privacy of monitoring and repeated-game regret")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze-signals", help="privacy curve of a signal structure or family")
    _common(p)
    p.add_argument("--signals")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--curve", choices=("analytic", "exact"), default="analytic",
                   help="which curve to report for a family")
    _family_opts(p)

    p = sub.add_parser("verify", help="check a strategy profile against a regret theorem")
    _common(p)
    p.add_argument("--game")
    p.add_argument("--signals")
    p.add_argument("--strategy")
    p.add_argument("--theorem", type=int, choices=(1, 2, 3, 4), default=1)
    p.add_argument("--horizon", type=int)
    p.add_argument("--claimed-xi", type=float, help="check a claimed xi-approximate equilibrium")

    p = sub.add_parser("scan-n", help="eps + gamma and eta as n grows")
    _common(p, fmt_default="csv")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--ns", help="comma list of n (default 16..16384 doubling)")
    _family_opts(p)

    p = sub.add_parser("demo-collapse", help="where noisy monitoring breaks grim-trigger cooperation")
    _common(p, fmt_choices=("text", "json"), fmt_default="text")
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--ns", help="comma list of n (default 2..4096 doubling)")
    p.add_argument("--grid-factor", type=float, default=20.0, help="grid width is noise_std / factor")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(args.command, args.delta, args.seed, parse_eps_grid(args.eps_grid),
                        getattr(args, "horizon", None), args.format, args.out, args.exact_rational)
        if args.command == "verify" and cfg.delta is None:
            raise ValueError("verify needs --delta")
        return COMMANDS[args.command](args, cfg)
    except GuardError as err:
        print(f"guard: {err}", file=sys.stderr)
        return EXIT_GUARD
    except IncompatibleMonitoringError as err:
        print(f"incompatible: {err}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except (aio.InputError, ZeroProbabilityError, ValueError, OSError) as err:
        print(f"input: {err}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
