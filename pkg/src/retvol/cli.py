"""Command-line entry point.

Subcommands::

    analyze         leverage, volatility autocorrelation, persistence, tails
    decouple        calibrate C, remove the leverage effect, re-run analyze
    simulate        feedback simulation from a reference volatility
    threshold       leverage curves conditioned on |r(t')| < threshold
    generate-sigma  write a reference volatility sequence

Exit codes: 0 success, 2 bad input or usage, 3 estimator failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ComputationError, InputError, InsufficientPoints
from .estimators import (
    fit_decay_time,
    fit_power_law,
    leverage_curve,
    leverage_curve_conditional,
    persistence_curve,
    smooth_lag_window,
    tail_histogram,
    volatility_autocorrelation,
    window_for_days,
    write_curve,
    write_histogram,
)
from .generators import EZ_DEFAULTS, LONGMEMORY_DEFAULTS, GeneratorSpec, generate_sigma
from .retarded import (
    DEFAULT_C_GRID,
    NOISE_GENERATOR,
    calibrate_C,
    dump_report,
    kernel_exponential,
    kernel_from_leverage,
    simulate_feedback,
    write_kernel,
)
from .series import (
    ReturnSeries,
    intraday_profile,
    read_prices,
    read_returns,
    read_series_csv,
    remove_intraday,
    returns_from_prices,
    write_returns,
    write_series_csv,
)

log = logging.getLogger("retvol")

EXIT_OK, EXIT_INPUT, EXIT_COMPUTE = 0, 2, 3


class UsageError(InputError):
    pass


def _float_list(text: str) -> list[float]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        out.append(math.inf if part.lower() in ("inf", "infinity", "all") else float(part))
    return out


def _range(text: str) -> tuple[float, float]:
    vals = _float_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH, got {text!r}")
    return vals[0], vals[1]


# --- output handling -----------------------------------------------------


def _write_atomic(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(out_dir: Path, files: dict[str, str]):
    for name, text in files.items():
        target = out_dir / name
        target.parent.mkdir(parents=True, exist_ok=True)
        _write_atomic(target, text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _metadata(args, extra: dict | None = None) -> str:
    config = {
        k: (list(v) if isinstance(v, tuple) else v)
        for k, v in sorted(vars(args).items())
        if k not in ("func", "out", "verbose")
    }
    meta = {
        "package": "retvol",
        "version": __version__,
        "numpy": np.__version__,
        "command": args.command,
        "config": config,
        "noise_generator": NOISE_GENERATOR,
    }
    meta.update(extra or {})
    return _json(meta)


# --- shared pieces -------------------------------------------------------


def _load_returns(args) -> ReturnSeries:
    path = Path(args.input)
    if not path.is_file():
        raise UsageError(f"input file not found: {path}")
    if args.input_kind == "returns":
        r = read_returns(path)
        if args.steps_per_day:
            r = ReturnSeries(r.values, r.mean_removed, r.sigma, r.origin, args.steps_per_day)
        return r
    minutes_per_day = None
    prices = read_prices(path)
    if args.steps_per_day and prices.step_minutes:
        minutes_per_day = args.steps_per_day * prices.step_minutes
        prices = read_prices(path, minutes_per_day=minutes_per_day)
    r = returns_from_prices(prices)
    if args.steps_per_day and r.steps_per_day is None:
        r = ReturnSeries(r.values, r.mean_removed, r.sigma, r.origin, args.steps_per_day)
    return r


def _default_max_lag(args) -> int:
    if args.max_lag:
        return args.max_lag
    return 4 * args.steps_per_day if args.steps_per_day else 64


def _fit_or_error(fn, *a) -> dict:
    try:
        return fn(*a).to_json()
    except InsufficientPoints as exc:
        return {"error": str(exc)}


def analysis_suite(r: ReturnSeries, args, prefix: str = "") -> tuple[dict[str, str], dict]:
    """All estimator outputs for one series, keyed by file name."""
    max_lag = _default_max_lag(args)
    files = {}
    L = leverage_curve(r, max_lag)
    files["leverage.csv"] = write_curve(None, L)
    if args.smooth_days:
        window = window_for_days(args.smooth_days, args.steps_per_day or 1)
        files["leverage_smoothed.csv"] = write_curve(None, smooth_lag_window(L, window))

    vol = r
    if args.steps_per_day and args.steps_per_day > 1:
        vol = remove_intraday(r, intraday_profile(r, args.steps_per_day), args.steps_per_day)
    A = volatility_autocorrelation(vol, args.acf_max_lag)
    P = persistence_curve(vol, args.persistence_max_lag, "below")
    files["autocorr.csv"] = write_curve(None, A)
    files["persistence.csv"] = write_curve(None, P)

    hists = {}
    for side, name in (("positive", "tails_pos.csv"), ("negative", "tails_neg.csv")):
        hists[side] = tail_histogram(r, side, args.bins_per_decade)
        files[name] = write_histogram(None, hists[side])

    fits = {
        "volatility_autocorrelation": _fit_or_error(fit_power_law, A, args.beta_range),
        "persistence_below": _fit_or_error(fit_power_law, P, args.theta_range),
        "tail_positive": _fit_or_error(fit_power_law, hists["positive"], args.tail_range),
        "tail_negative": _fit_or_error(fit_power_law, hists["negative"], args.tail_range),
        "n_returns": len(r),
        "count_abs_above_8sigma": int(np.count_nonzero(np.abs(r.values) > 8.0)),
    }
    files["fits.json"] = _json(fits)
    return {prefix + k: v for k, v in files.items()}, fits


# --- subcommands ---------------------------------------------------------


def cmd_analyze(args) -> dict[str, str]:
    r = _load_returns(args)
    files, _ = analysis_suite(r, args)
    files["run_metadata.json"] = _metadata(args)
    return files


def cmd_decouple(args) -> dict[str, str]:
    grid = args.c_grid
    if not grid or any(not c > 0 for c in grid):
        raise UsageError("--c-grid must list at least one positive value")
    r = _load_returns(args)
    files, _ = analysis_suite(r, args)
    tmax = args.tmax or _default_max_lag(args)
    L = leverage_curve(r, tmax)
    C, report = calibrate_C(r, L, grid)
    log.info("selected C=%g", C)
    files["kernel.csv"] = write_kernel(None, kernel_from_leverage(L, C))
    files["decouple_report.json"] = dump_report(report)
    files["decoupled_returns.csv"] = write_returns(None, report.series)
    dec_files, _ = analysis_suite(report.series, args, prefix="decoupled/")
    files.update(dec_files)
    files["run_metadata.json"] = _metadata(args)
    return files


def _generator_spec(args, length: int) -> GeneratorSpec:
    return GeneratorSpec(
        args.generator,
        length,
        seed=args.seed,
        n_agents=args.n_agents,
        a=args.ez_a,
        hurst=args.hurst,
        vol_of_logvol=args.vol_of_logvol,
    )


def cmd_simulate(args) -> dict[str, str]:
    k = kernel_exponential(args.m, args.tau, args.tmax or 64)
    extra = {}
    if args.sigma_input:
        path = Path(args.sigma_input)
        if not path.is_file():
            raise UsageError(f"sigma file not found: {path}")
        sigma, _ = read_series_csv(path)
        extra["generator"] = {"kind": "file", "path": str(path)}
    else:
        length = args.length + (k.t_max if args.burn_in else 0)
        spec = _generator_spec(args, length)
        sigma = generate_sigma(spec)
        extra["generator"] = spec.describe()
    # noise stream derived from, but distinct from, the generator stream
    r = simulate_feedback(k, sigma, args.seed + 1, burn_in=args.burn_in)
    files, _ = analysis_suite(r, args)
    L = leverage_curve(r, _default_max_lag(args))
    # fit -L/2 (m > 0) or L/2 (m < 0) over roughly one decay time
    horizon = (1, min(L.max_lag, max(3, round(args.tau))))
    try:
        tau, amp = fit_decay_time(L, horizon, -1.0 if args.m >= 0 else 1.0)
        decay = {"tau": tau, "amplitude_of_L": amp, "lag_range": list(horizon)}
    except InsufficientPoints as exc:
        decay = {"error": str(exc)}
    files["kernel.csv"] = write_kernel(None, k)
    files["simulated_returns.csv"] = write_returns(None, r)
    files["leverage_decay.json"] = _json(decay)
    files["run_metadata.json"] = _metadata(args, extra)
    return files


def cmd_threshold(args) -> dict[str, str]:
    thresholds = args.thresholds
    if not thresholds or any(not t > 0 for t in thresholds):
        raise UsageError("--thresholds must list positive values")
    r = _load_returns(args)
    max_lag = _default_max_lag(args)
    files = {}
    summary = {}
    for thr in thresholds:
        label = "all" if math.isinf(thr) else f"{thr:g}"
        c = leverage_curve_conditional(r, max_lag, thr, global_z=args.global_z)
        files[f"leverage_lt_{label}.csv"] = write_curve(None, c)
        summary[label] = {"threshold": thr, "n_below": int(np.count_nonzero(np.abs(r.values) < thr))}
    files["threshold_summary.json"] = _json({"n_returns": len(r), "global_z": args.global_z, "curves": summary})
    files["run_metadata.json"] = _metadata(args)
    return files


def cmd_generate_sigma(args) -> dict[str, str]:
    spec = _generator_spec(args, args.length)
    sigma = generate_sigma(spec)
    meta = {k: v for k, v in spec.describe().items()}
    return {
        "sigma.csv": write_series_csv(None, sigma, meta),
        "run_metadata.json": _metadata(args, {"generator": spec.describe()}),
    }


# --- parser --------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, needs_input: bool = True):
    if needs_input:
        p.add_argument("--input", required=True, help="price CSV (timestamp,price) or return CSV (index,value)")
        p.add_argument("--input-kind", choices=("prices", "returns"), default="prices")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_analysis(p: argparse.ArgumentParser):
    p.add_argument("--max-lag", type=int, default=None, help="leverage horizon (default 64, or 4 days of minutely steps)")
    p.add_argument("--acf-max-lag", type=int, default=200)
    p.add_argument("--persistence-max-lag", type=int, default=100)
    p.add_argument("--steps-per-day", type=int, default=None, help="intraday steps; marks the input as minutely")
    p.add_argument("--smooth-days", type=int, default=None, help="lag window for smoothing L(t), in days")
    p.add_argument("--bins-per-decade", type=int, default=10)
    p.add_argument("--beta-range", type=_range, default=(1.0, 100.0))
    p.add_argument("--theta-range", type=_range, default=(1.0, 50.0))
    p.add_argument("--tail-range", type=_range, default=(2.0, 20.0))
    p.add_argument("--split-days", action="store_true", help=argparse.SUPPRESS)


def _add_generator(p: argparse.ArgumentParser):
    p.add_argument("--generator", choices=("gaussian", "ez", "longmemory"), default="gaussian")
    p.add_argument("--length", type=int, default=200_000)
    p.add_argument("--n-agents", type=int, default=EZ_DEFAULTS["n_agents"])
    p.add_argument("--ez-a", type=float, default=EZ_DEFAULTS["a"])
    p.add_argument("--hurst", type=float, default=LONGMEMORY_DEFAULTS["hurst"])
    p.add_argument("--vol-of-logvol", type=float, default=LONGMEMORY_DEFAULTS["vol_of_logvol"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retvol", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"retvol {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="estimate L(t), A(t), persistence and tail PDFs")
    _add_common(p)
    _add_analysis(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("decouple", help="remove the return-volatility correlation")
    _add_common(p)
    _add_analysis(p)
    p.add_argument("--tmax", type=int, default=None, help="kernel support (default: --max-lag)")
    p.add_argument("--c-grid", type=_float_list, default=list(DEFAULT_C_GRID))
    p.set_defaults(func=cmd_decouple)

    p = sub.add_parser("simulate", help="generate returns with kernel feedback")
    _add_common(p, needs_input=False)
    _add_analysis(p)
    _add_generator(p)
    p.add_argument("--sigma-input", default=None, help="reference volatility CSV (index,value)")
    p.add_argument("--m", type=float, default=0.1)
    p.add_argument("--tau", type=float, default=40.0)
    p.add_argument("--tmax", type=int, default=64)
    p.add_argument("--burn-in", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("threshold", help="leverage curves conditioned on |r| below thresholds")
    _add_common(p)
    p.add_argument("--max-lag", type=int, default=None)
    p.add_argument("--steps-per-day", type=int, default=None)
    p.add_argument("--thresholds", type=_float_list, default=[2.0, 8.0, math.inf])
    p.add_argument("--global-z", action="store_true", help="normalize with the full-series <r^2>^2")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("generate-sigma", help="write a reference volatility sequence")
    _add_common(p, needs_input=False)
    _add_generator(p)
    p.set_defaults(func=cmd_generate_sigma)
    return parser


def _read_config(path: str) -> dict[str, str]:
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        cfg[key.strip().lstrip("-").replace("-", "_")] = val.strip()
    return cfg


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]):
    """Install key=value config entries as subcommand defaults, so flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    command = next((a for a in rest if not a.startswith("-")), None)
    choices = parser._subparsers._group_actions[0].choices
    if not known.config or command not in choices:
        return
    cfg = _read_config(known.config)
    subparser = choices[command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, val in cfg.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r} for {command}")
        if isinstance(action, (argparse._StoreTrueAction, argparse.BooleanOptionalAction)):
            defaults[key] = val.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = action.type(val) if action.type else val
        if action.required:
            action.required = False
    subparser.set_defaults(**defaults)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except (InputError, OSError) as exc:
        print(f"retvol: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if getattr(args, "split_days", False):
            raise UsageError("--split-days is reserved and not implemented")
        files = args.func(args)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _emit(out_dir, files)
    except (InputError, OSError) as exc:
        print(f"retvol: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ComputationError as exc:
        print(f"retvol: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except SystemExit as exc:
        return int(exc.code or 0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
