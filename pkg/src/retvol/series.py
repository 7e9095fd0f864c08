"""Price ingestion, log returns, normalized returns and intraday deseasonalizing."""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .errors import (
    DeltaTooLarge,
    MalformedRow,
    NonMonotonicTimestamp,
    NonPositivePrice,
    ProfileMismatch,
    TooShort,
    ZeroVariance,
)

DAILY = "daily"
MINUTELY = "minutely"

ORIGINS = ("observed", "simulated", "decoupled")

# Tolerance on the normalized-series invariants (mean 0, std 1).
NORMALIZED_TOL = 1e-9


@dataclass(frozen=True)
class PriceSeries:
    timestamps: np.ndarray
    prices: np.ndarray
    interval: str = DAILY
    step_minutes: int | None = None
    minutes_per_day: int | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        px = np.asarray(self.prices, dtype=float)
        if ts.shape != px.shape or ts.ndim != 1:
            raise MalformedRow("timestamps and prices must be 1-d and equally long")
        if len(px) < 2:
            raise TooShort(f"need at least 2 observations, got {len(px)}")
        bad = np.flatnonzero(~(px > 0))
        if bad.size:
            raise NonPositivePrice(f"price {px[bad[0]]!r} at position {bad[0]} is not positive")
        back = np.flatnonzero(np.diff(ts) <= 0)
        if back.size:
            raise NonMonotonicTimestamp(f"timestamp {ts[back[0] + 1]} at position {back[0] + 1} does not increase")
        if self.interval not in (DAILY, MINUTELY):
            raise ValueError(f"unknown interval {self.interval!r}")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "prices", px)

    def __len__(self):
        return len(self.prices)

    @property
    def steps_per_day(self) -> int | None:
        if self.interval != MINUTELY or not self.minutes_per_day or not self.step_minutes:
            return None
        return self.minutes_per_day // self.step_minutes


@dataclass(frozen=True)
class ReturnSeries:
    """Normalized return series r(t') with the shift and scale that produced it."""

    values: np.ndarray
    mean_removed: float = 0.0
    sigma: float = 1.0
    origin: str = "observed"
    steps_per_day: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")

    def __len__(self):
        return len(self.values)

    def is_normalized(self, tol: float = NORMALIZED_TOL) -> bool:
        v = self.values
        return len(v) >= 2 and abs(v.mean()) <= tol and abs(v.std() - 1.0) <= tol


@dataclass(frozen=True)
class IntradayProfile:
    step_volatility: np.ndarray
    floor: float = 1e-8

    def __len__(self):
        return len(self.step_volatility)


def _as_text_lines(source) -> Iterable[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8")).read().splitlines()
    if isinstance(source, str):
        return source.splitlines()
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data.splitlines()


def load_prices(source: bytes | str | IO, *, minutes_per_day: int | None = None) -> PriceSeries:
    """Parse header-less ``timestamp,price`` rows.

    ``source`` may be raw bytes, a string holding the CSV text, or an open
    file object (text or binary). Lines starting with ``#`` and blank lines
    are skipped; CRLF endings are accepted. The sampling interval is read off
    the median timestamp spacing: half a day or more is daily, anything
    shorter is minutely with that spacing as the step.
    """
    ts, px = [], []
    for lineno, raw in enumerate(_as_text_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise MalformedRow(f"line {lineno}: expected 2 fields, got {len(parts)}")
        try:
            t = int(parts[0].strip())
            p = float(parts[1].strip())
        except ValueError as exc:
            raise MalformedRow(f"line {lineno}: {exc}") from None
        if not p > 0:
            raise NonPositivePrice(f"line {lineno}: price {p!r} is not positive")
        if ts and t <= ts[-1]:
            raise NonMonotonicTimestamp(f"line {lineno}: timestamp {t} does not increase")
        ts.append(t)
        px.append(p)
    if len(px) < 2:
        raise TooShort(f"need at least 2 rows, got {len(px)}")

    spacing = float(np.median(np.diff(ts)))
    if spacing >= 43200:
        return PriceSeries(np.array(ts), np.array(px), DAILY)
    step = max(1, int(round(spacing / 60.0)))
    return PriceSeries(np.array(ts), np.array(px), MINUTELY, step, minutes_per_day)


def read_prices(path: str | Path, **kwargs) -> PriceSeries:
    with open(path, "rb") as fh:
        return load_prices(fh, **kwargs)


def dump_prices(p: PriceSeries) -> str:
    # repr() of a float is the shortest string that round-trips exactly
    return "".join(f"{int(t)},{float(x)!r}\n" for t, x in zip(p.timestamps, p.prices))


def log_returns(p: PriceSeries, delta_steps: int = 1) -> np.ndarray:
    if delta_steps < 1:
        raise ValueError("delta_steps must be positive")
    if delta_steps >= len(p):
        raise DeltaTooLarge(f"delta_steps={delta_steps} but only {len(p)} prices")
    lp = np.log(p.prices)
    return lp[delta_steps:] - lp[:-delta_steps]


def normalize(raw, origin: str = "observed", steps_per_day: int | None = None) -> ReturnSeries:
    """Subtract the time average and divide by the population standard deviation."""
    x = np.asarray(raw, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise TooShort("need at least 2 values to normalize")
    mean = x.mean()
    centered = x - mean
    sigma = np.sqrt(np.mean(centered * centered))
    if not sigma > 0 or sigma <= 1e-14 * max(1.0, abs(mean)):
        raise ZeroVariance("series has zero variance")
    return ReturnSeries(centered / sigma, float(mean), float(sigma), origin, steps_per_day)


def returns_from_prices(p: PriceSeries, delta_steps: int = 1) -> ReturnSeries:
    return normalize(log_returns(p, delta_steps), "observed", p.steps_per_day)


def intraday_profile(r: ReturnSeries | np.ndarray, steps_per_day: int, floor: float = 1e-8) -> IntradayProfile:
    """Mean |r| at each intraday step, averaged over complete days."""
    v = r.values if isinstance(r, ReturnSeries) else np.asarray(r, dtype=float)
    if steps_per_day < 1:
        raise ValueError("steps_per_day must be positive")
    if not floor > 0:
        raise ValueError("floor must be positive")
    n_days = len(v) // steps_per_day
    if n_days < 1:
        raise TooShort(f"series of length {len(v)} is shorter than one day ({steps_per_day} steps)")
    days = np.abs(v[: n_days * steps_per_day]).reshape(n_days, steps_per_day)
    return IntradayProfile(np.maximum(days.mean(axis=0), floor), floor)


def remove_intraday(
    r: ReturnSeries, prof: IntradayProfile, steps_per_day: int | None = None
) -> ReturnSeries:
    spd = steps_per_day or r.steps_per_day or len(prof)
    if len(prof) != spd:
        raise ProfileMismatch(f"profile has {len(prof)} steps, series has {spd} per day")
    phase = np.arange(len(r)) % spd
    scaled = r.values / prof.step_volatility[phase]
    return normalize(scaled, r.origin, spd)


def write_series_csv(path: str | Path | None, values, meta: dict | None = None) -> str:
    """Serialize as ``index,value`` lines at 17 significant digits.

    ``meta`` entries become leading ``# key=value`` comment lines. Returns the
    text, and also writes it when ``path`` is given.
    """
    lines = [f"# {k}={v}\n" for k, v in (meta or {}).items()]
    lines += [f"{i},{x:.17g}\n" for i, x in enumerate(np.asarray(values, dtype=float))]
    text = "".join(lines)
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_series_csv(text: str) -> tuple[np.ndarray, dict]:
    meta, vals = {}, []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = val.strip()
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise MalformedRow(f"line {lineno}: expected index,value")
        try:
            idx, x = int(parts[0]), float(parts[1])
        except ValueError as exc:
            raise MalformedRow(f"line {lineno}: {exc}") from None
        if idx != len(vals):
            raise MalformedRow(f"line {lineno}: index {idx} out of sequence")
        vals.append(x)
    return np.array(vals, dtype=float), meta


def read_series_csv(path: str | Path) -> tuple[np.ndarray, dict]:
    return parse_series_csv(Path(path).read_text())


def return_series_meta(r: ReturnSeries) -> dict:
    meta = {"origin": r.origin, "mean_removed": f"{r.mean_removed:.17g}", "sigma": f"{r.sigma:.17g}"}
    if r.steps_per_day:
        meta["steps_per_day"] = r.steps_per_day
    return meta


def write_returns(path: str | Path | None, r: ReturnSeries) -> str:
    return write_series_csv(path, r.values, return_series_meta(r))


def parse_returns(text: str, renormalize: bool = True) -> ReturnSeries:
    """Read a ReturnSeries back; files without metadata are normalized on load."""
    values, meta = parse_series_csv(text)
    if "sigma" in meta:
        spd = int(meta["steps_per_day"]) if "steps_per_day" in meta else None
        return ReturnSeries(values, float(meta["mean_removed"]), float(meta["sigma"]), meta.get("origin", "observed"), spd)
    if not renormalize:
        return ReturnSeries(values)
    return normalize(values)


def read_returns(path: str | Path, renormalize: bool = True) -> ReturnSeries:
    return parse_returns(Path(path).read_text(), renormalize)
