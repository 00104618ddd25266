"""Command-line interface.

Subcommands: ``weights``, ``decompose``, ``simulate``, ``optimize``,
``check`` and ``backtest``. Run settings come from an INI file given by
``--config``; individual flags and ``--set section.key=value`` override it.

Exit codes: 0 success, 2 bad input (arguments, config or files),
3 infeasible optimization problem, 4 numerical failure.
"""

import argparse
import configparser
import json
import sys
import warnings

import numpy as np

from . import __version__
from .dominance import (
    asset_one_weight,
    divergence_dominates,
    integral_condition,
    rmcm_cycle_test,
    two_asset_aggressiveness,
)
from .exceptions import InfeasibleProblemError, RuinError
from .fgp import CATALOG_NAMES, catalog, fernholz_decompose, shifted
from .intensity import JumpSample, RegionK, ReturnHistory, bootstrap_paths, collect_pairs, recenter_returns
from .io import CSVFormatError, dump_json, fingerprint, load_json, read_table, write_table
from .optimizer import (
    ConstraintSet,
    Grid,
    GridSolution,
    RegimeExitWarning,
    SolverConfig,
    build_problem,
    polyhedral_extension,
    solve,
)
from .simplex import MarketPath, weights_from_capitalizations

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERIC = 4

DEFAULTS = {
    "data": {"recenter": "true"},
    "bootstrap": {"paths": "50", "max_len": "10000", "rounding_decimals": "3"},
    "grid": {"lo": "0.1", "hi": "0.3", "step": "0.001"},
    "constraints": {"monotone": "false"},
    "solver": {},
    "output": {},
}


class InputError(Exception):
    """Bad arguments, configuration or input files (exit code 2)."""


# ---------------------------------------------------------------------------
# configuration


def load_config(path=None, overrides=()):
    """Read an INI file and apply ``section.key=value`` overrides.

    Returns a plain nested dict of strings.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read_dict(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise InputError(f"bad config {path}: {exc}") from None
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().partition(".")
        if not sep or not dot or not option:
            raise InputError(f"override {item!r} is not of the form section.key=value")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, option, value.strip())
    return {s: dict(cp.items(s)) for s in cp.sections()}


def _set(cfg, section, key, value):
    if value is not None:
        cfg.setdefault(section, {})[key] = str(value)


def _get(cfg, section, key, kind=str, default=None, required=False):
    raw = cfg.get(section, {}).get(key, "")
    if raw.strip() == "":
        if required:
            raise InputError(f"missing setting {section}.{key}")
        return default
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "yes", "1", "on")
        if kind == "floats":
            return [float(v) for v in raw.split(",")]
        return kind(raw)
    except ValueError:
        raise InputError(f"setting {section}.{key} = {raw!r} is not a valid {getattr(kind, '__name__', kind)}") from None


def _pair_setting(cfg, section, stem):
    lo = _get(cfg, section, f"{stem}_lo", float)
    hi = _get(cfg, section, f"{stem}_hi", float)
    if lo is None and hi is None:
        return None
    return (0.0 if lo is None else lo, np.inf if hi is None else hi)


def region_from_config(cfg):
    lo = _get(cfg, "region", "lo", "floats", required=True)
    hi = _get(cfg, "region", "hi", "floats", required=True)
    try:
        if len(lo) == 1 and len(hi) == 1:
            return RegionK.two_asset(lo[0], hi[0])
        return RegionK(lo, hi)
    except ValueError as exc:
        raise InputError(f"bad region: {exc}") from None


def grid_from_config(cfg):
    try:
        return Grid.from_range(_get(cfg, "grid", "lo", float, required=True),
                               _get(cfg, "grid", "hi", float, required=True),
                               _get(cfg, "grid", "step", float, required=True))
    except ValueError as exc:
        raise InputError(f"bad grid: {exc}") from None


def constraints_from_config(cfg):
    tracking = None
    eps = _get(cfg, "constraints", "tracking_eps", float)
    if eps is not None:
        sigma = _get(cfg, "constraints", "tracking_sigma", "floats", required=True)
        if len(sigma) != 4:
            raise InputError("constraints.tracking_sigma needs four comma-separated entries")
        tracking = (np.reshape(sigma, (2, 2)), eps)
    try:
        return ConstraintSet(_pair_setting(cfg, "constraints", "ratio"),
                             _pair_setting(cfg, "constraints", "weight"),
                             _get(cfg, "constraints", "monotone", bool, False), tracking)
    except ValueError as exc:
        raise InputError(f"bad constraints: {exc}") from None


def solver_from_config(cfg, seed):
    kinds = {"tol": float, "stat_tol": float, "max_outer": int, "max_inner": int, "rho0": float,
             "rho_growth": float, "rho_max": float, "shrink": float, "n_perturbed": int, "kappa": float}
    unknown = set(cfg.get("solver", {})) - set(kinds)
    if unknown:
        raise InputError(f"unknown solver settings: {sorted(unknown)}")
    kw = {k: _get(cfg, "solver", k, t) for k, t in kinds.items()}
    return SolverConfig(seed=seed, **{k: v for k, v in kw.items() if v is not None})


# ---------------------------------------------------------------------------
# inputs


def _read_table(path, positive=True):
    try:
        return read_table(path, positive=positive)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except CSVFormatError as exc:
        raise InputError(f"{path}: {exc}") from None


def _read_weights(path):
    labels, _, values = _read_table(path)
    try:
        return MarketPath(values, labels)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def _read_solution(path):
    try:
        return GridSolution.from_dict(load_json(path))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: not a valid solution file ({exc})") from None


def parse_portfolio(spec, outside="extend"):
    """Build an FGPair from a text spec.

    Accepted forms: ``market``, ``equal``, ``entropy``, ``diversity:R``,
    any of these followed by ``,shift=C`` and the path of a solution JSON
    file (optionally prefixed by ``solution:``).
    """
    text = spec.strip()
    if text.startswith("solution:"):
        return polyhedral_extension(_read_solution(text[len("solution:"):]), outside=outside)
    if text.endswith(".json"):
        return polyhedral_extension(_read_solution(text), outside=outside)
    head, *opts = [t.strip() for t in text.split(",")]
    name, _, r = head.partition(":")
    if name not in CATALOG_NAMES:
        raise InputError(f"unknown portfolio {spec!r}; use one of {CATALOG_NAMES}, diversity:R or a solution .json")
    try:
        fg = catalog(name, float(r) if r else None)
        for opt in opts:
            key, _, val = opt.partition("=")
            if key.strip() != "shift":
                raise InputError(f"unknown portfolio option {opt!r}")
            fg = shifted(fg, float(val))
    except ValueError as exc:
        raise InputError(f"bad portfolio {spec!r}: {exc}") from None
    return fg


# ---------------------------------------------------------------------------
# outputs


def _out(path):
    return sys.stdout if path in (None, "-") else path


def _stamp(command, fp):
    return f"relarb {__version__} {command} config_fingerprint={fp}"


def _report(msg):
    print(msg, file=sys.stderr)


def _ruin_message(exc, labels):
    i = exc.index
    if i is not None and labels is not None and i + 1 < len(labels):
        return f"portfolio ruined relative to market between {labels[i]} and {labels[i + 1]}"
    return str(exc)


# ---------------------------------------------------------------------------
# commands


def cmd_weights(args):
    labels, cols, caps = _read_table(args.prices)
    cfg = {"command": "weights", "input": args.prices}
    fp = fingerprint(cfg)
    mu = weights_from_capitalizations(caps, labels)
    write_table(_out(args.output), ["t"] + cols, labels, mu.points, comment=_stamp("weights", fp))
    return EXIT_OK


def _decompose(fg, path, out, command, fp):
    try:
        dec = fernholz_decompose(fg, path)
    except RuinError as exc:
        raise RuinError(_ruin_message(exc, path.timestamps), exc.index) from None
    dec.to_csv(_out(out), comment=_stamp(command, fp))
    return dec


def cmd_decompose(args):
    path = _read_weights(args.weights)
    fg = parse_portfolio(args.portfolio, outside="hold")
    fp = fingerprint({"command": "decompose", "input": args.weights, "portfolio": args.portfolio})
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RegimeExitWarning)
        _decompose(fg, path, args.output, "decompose", fp)
    for w in caught:
        _report(f"warning: {w.message}")
    return EXIT_OK


def cmd_simulate(args):
    cfg = load_config(args.config, args.set)
    _set(cfg, "data", "prices", args.prices)
    _set(cfg, "data", "mu0", args.mu0)
    _set(cfg, "bootstrap", "paths", args.paths)
    _set(cfg, "bootstrap", "max_len", args.max_len)
    prices = _get(cfg, "data", "prices", required=True)
    mu0 = _get(cfg, "data", "mu0", "floats", required=True)
    region = region_from_config(cfg)
    n_paths = _get(cfg, "bootstrap", "paths", int)
    max_len = _get(cfg, "bootstrap", "max_len", int)
    decimals = _get(cfg, "bootstrap", "rounding_decimals", int)
    fp = fingerprint({"command": "simulate", "config": cfg, "seed": args.seed})

    labels, _, values = _read_table(prices)
    try:
        hist = ReturnHistory.from_prices(values, labels)
    except ValueError as exc:
        raise InputError(f"{prices}: {exc}") from None
    if _get(cfg, "data", "recenter", bool, True):
        hist = recenter_returns(hist)
    try:
        paths = bootstrap_paths(hist, mu0, region, n_paths, max_len, args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    sample = collect_pairs(paths, decimals, region)
    sample.provenance["config_fingerprint"] = fp
    out = args.output or _get(cfg, "output", "sample")
    sample.to_csv(_out(out), comment=_stamp("simulate", fp))
    lengths = [len(p.points) for p in paths]
    _report(f"simulated {n_paths} paths (mean length {np.mean(lengths):.1f}, "
            f"{sum(p.truncated for p in paths)} truncated); {len(sample)} pairs, "
            f"{sample.provenance['dropped']} dropped after rounding")
    return EXIT_OK


def cmd_optimize(args):
    cfg = load_config(args.config, args.set)
    _set(cfg, "data", "sample", args.sample)
    # fall back to the file that simulate writes with the same config
    sample_path = _get(cfg, "data", "sample") or _get(cfg, "output", "sample")
    if sample_path is None:
        raise InputError("no jump sample: give SAMPLE, data.sample or output.sample")
    grid = grid_from_config(cfg)
    cons = constraints_from_config(cfg)
    scfg = solver_from_config(cfg, args.seed)
    fp = fingerprint({"command": "optimize", "config": cfg, "seed": args.seed})
    try:
        sample = JumpSample.from_csv(sample_path)
    except OSError as exc:
        raise InputError(f"cannot read {sample_path}: {exc.strerror}") from None
    except ValueError as exc:
        raise InputError(f"{sample_path}: {exc}") from None
    try:
        problem = build_problem(sample, grid, cons)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    sol = solve(problem, scfg)
    doc = sol.to_dict()
    doc["config_fingerprint"] = fp
    out = args.output or _get(cfg, "output", "solution")
    dump_json(doc, _out(out))
    _report(f"objective {sol.objective:.10g} from {sol.start!r}; converged={sol.converged}; "
            f"max residual {sol.residuals.max():.3g}; z in [{sol.z.min():.6g}, {sol.z.max():.6g}]")
    _report("residuals: " + ", ".join(f"{k}={v:.3g}" for k, v in sol.residuals.values.items()))
    return EXIT_OK


def _interior_points(rng, n, k, floor=0.05):
    return floor + (1 - n * floor) * rng.dirichlet(np.ones(n), size=k)


def cmd_check(args):
    fp = fingerprint({"command": "check", "a": args.a, "b": args.b, "mode": args.mode,
                      "n": args.n, "samples": args.samples, "seed": args.seed})
    a = parse_portfolio(args.a)
    rng = np.random.default_rng(args.seed)
    report = {"kind": "check", "mode": args.mode, "a": args.a, "b": args.b, "config_fingerprint": fp}
    if args.mode in ("rmcm", "divergence"):
        if args.b is None:
            raise InputError(f"mode {args.mode} compares two portfolios; give B")
        b = parse_portfolio(args.b)
    if args.mode == "rmcm":
        worst, violations = None, 0
        for _ in range(args.samples):
            pts = _interior_points(rng, args.n, int(rng.integers(2, 7)))
            cyc = np.vstack([pts, pts[:1]])
            r = rmcm_cycle_test(a.portfolio, b.portfolio, cyc)
            violations += r.verdict != "consistent"
            if worst is None or not r.value_ratio >= worst.value_ratio:
                worst = r
        report.update(verdict="consistent" if violations == 0 else "violates_RMCM", n_cycles=args.samples,
                      violations=violations, worst=worst.to_dict())
    elif args.mode == "divergence":
        p = _interior_points(rng, args.n, args.samples)
        q = _interior_points(rng, args.n, args.samples)
        rep = divergence_dominates(a, b, (p, q))
        report.update(verdict="dominates" if rep.dominates else "does_not_dominate", **rep.to_dict())
    elif args.mode == "integral":
        rep = integral_condition(a.generator, args.n)
        report.update(rep.to_dict())
    else:
        if args.n != 2:
            raise InputError("aggressiveness is defined for two assets")
        rep = two_asset_aggressiveness(asset_one_weight(a.portfolio))
        report.update(min_value=rep.min_value, argmin_y=rep.argmin_y)
    dump_json(report, _out(args.output))
    return EXIT_OK


def cmd_backtest(args):
    sol = _read_solution(args.solution)
    labels, _, caps = _read_table(args.prices)
    if caps.shape[1] != 2:
        raise InputError(f"{args.prices}: optimized portfolios are defined for two assets, got {caps.shape[1]}")
    path = weights_from_capitalizations(caps, labels)
    fp = fingerprint({"command": "backtest", "solution": args.solution, "input": args.prices})
    fg = polyhedral_extension(sol, outside="hold", warn=False)
    x = path.points[:, 0]
    outside = (x < sol.grid.x[0]) | (x > sol.grid.x[-1])
    if np.any(outside):
        first = int(np.argmax(outside))
        warnings.warn(f"regime exit at {labels[first]}: market weight {x[first]:.6g} left "
                      f"[{sol.grid.x[0]:g}, {sol.grid.x[-1]:g}] on {int(outside.sum())} dates; "
                      "holding nearest boundary weights", RegimeExitWarning, stacklevel=2)
    dec = _decompose(fg, path, args.output, "backtest", fp)
    last = len(dec.drift) - 1
    summary = {
        "kind": "backtest_summary",
        "config_fingerprint": fp,
        "n_steps": last,
        "t": dec.timestamps[last] if dec.timestamps is not None else last,
        "log_V": dec.log_relative_value[last],
        "generator_term": dec.generator_term[last],
        "drift": dec.drift[last],
        "relative_value": float(np.exp(dec.log_relative_value[last])),
        "identity_error": dec.identity_error(),
        "regime_exit_dates": int(outside.sum()),
        "clamp_policy": "hold",
    }
    if args.summary:
        dump_json(summary, args.summary)
    _report(f"final log relative value {summary['log_V']:.6g} (generator {summary['generator_term']:.6g}, "
            f"drift {summary['drift']:.6g}) over {last} steps")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="relarb", description="Functionally generated portfolio toolkit.")
    parser.add_argument("--version", action="version", version=f"relarb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def config_args(p):
        p.add_argument("--config", help="INI run configuration")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config setting (repeatable)")
        p.add_argument("--seed", type=int, required=True, help="random seed (required)")

    p = sub.add_parser("weights", help="market weights from a capitalization CSV")
    p.add_argument("prices")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("decompose", help="Fernholz decomposition along a weights CSV")
    p.add_argument("weights")
    p.add_argument("--portfolio", required=True, help="market, equal, entropy, diversity:R[,shift=C] or solution .json")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("simulate", help="bootstrap jump pairs inside the region")
    config_args(p)
    p.add_argument("--prices", help="price CSV (data.prices)")
    p.add_argument("--mu0", help="initial market weights, comma separated (data.mu0)")
    p.add_argument("--paths", type=int, help="number of paths (bootstrap.paths)")
    p.add_argument("--max-len", type=int, help="maximal path length (bootstrap.max_len)")
    p.add_argument("-o", "--output", help="jump sample CSV (output.sample)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="solve the grid portfolio problem on a jump sample")
    config_args(p)
    p.add_argument("sample", nargs="?", help="jump sample CSV (data.sample)")
    p.add_argument("-o", "--output", help="solution JSON (output.solution)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("check", help="dominance and maximality diagnostics")
    p.add_argument("a", help="portfolio A")
    p.add_argument("b", nargs="?", help="portfolio B (rmcm and divergence modes)")
    p.add_argument("--mode", required=True, choices=["rmcm", "divergence", "integral", "aggressiveness"])
    p.add_argument("--n", type=int, default=2, help="number of assets (default 2)")
    p.add_argument("--samples", type=int, default=1000, help="cycles or pairs to sample (default 1000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("backtest", help="decompose an optimized portfolio on a held-out price CSV")
    p.add_argument("solution")
    p.add_argument("prices")
    p.add_argument("-o", "--output", help="decomposition CSV")
    p.add_argument("--summary", help="summary JSON")
    p.set_defaults(func=cmd_backtest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    prev = np.seterr(all="ignore")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", RegimeExitWarning)
            warnings.showwarning = lambda msg, cat, *a, **k: _report(f"warning: {msg}")
            return args.func(args)
    except InputError as exc:
        _report(f"relarb: error: {exc}")
        return EXIT_PARSE
    except InfeasibleProblemError as exc:
        _report(f"relarb: infeasible: {exc}")
        return EXIT_INFEASIBLE
    except (ValueError, ArithmeticError, json.JSONDecodeError) as exc:
        _report(f"relarb: numerical failure: {exc}")
        return EXIT_NUMERIC
    finally:
        np.seterr(**prev)


if __name__ == "__main__":
    sys.exit(main())
