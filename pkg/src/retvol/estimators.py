"""Lag statistics and return distributions.

All curves are indexed by lag t = 1..max_lag and carry the number of
(t', t'+t) pairs behind each value. Averages over t' use numpy's pairwise
summation on contiguous arrays, which is deterministic for a given input.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import (
    EmptyCondition,
    EmptySide,
    InsufficientPoints,
    LagTooLarge,
    MalformedRow,
    WindowTooLarge,
    ZeroVariance,
)
from .series import ReturnSeries

KINDS = ("leverage", "autocorrelation", "persistence_below", "persistence_above")


@dataclass(frozen=True)
class LagCurve:
    kind: str
    values: np.ndarray
    counts: np.ndarray
    stderr: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        values = np.asarray(self.values, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if values.ndim != 1 or values.shape != counts.shape or len(values) < 1:
            raise ValueError("values and counts must be equal-length, non-empty 1-d arrays")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "counts", counts)
        if self.stderr is not None:
            object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=float))

    @property
    def max_lag(self) -> int:
        return len(self.values)

    @property
    def lags(self) -> np.ndarray:
        return np.arange(1, self.max_lag + 1)


@dataclass(frozen=True)
class TailHistogram:
    side: str
    bin_edges: np.ndarray
    densities: np.ndarray
    counts: np.ndarray
    total_count: int

    @property
    def bin_centers(self) -> np.ndarray:
        return np.sqrt(self.bin_edges[:-1] * self.bin_edges[1:])

    @property
    def bin_widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)


@dataclass(frozen=True)
class TailFit:
    exponent: float
    fit_range: tuple[float, float]
    n_points_used: int
    stderr: float

    def to_json(self) -> dict:
        return {
            "exponent": self.exponent,
            "stderr": self.stderr,
            "range": [self.fit_range[0], self.fit_range[1]],
            "n": self.n_points_used,
        }

    @classmethod
    def from_json(cls, d: dict) -> "TailFit":
        return cls(float(d["exponent"]), (float(d["range"][0]), float(d["range"][1])), int(d["n"]), float(d["stderr"]))


def _values(r) -> np.ndarray:
    v = r.values if isinstance(r, ReturnSeries) else np.asarray(r, dtype=float)
    if v.ndim != 1:
        raise ValueError("expected a 1-d series")
    return v


def _check_lag(n: int, max_lag: int):
    if max_lag < 1:
        raise LagTooLarge("max_lag must be at least 1")
    if max_lag >= n or n - max_lag < 2:
        raise LagTooLarge(f"max_lag={max_lag} leaves fewer than 2 pairs in a series of length {n}")


def _leverage(v: np.ndarray, max_lag: int, mask: np.ndarray | None, global_z: bool) -> LagCurve:
    n = len(v)
    _check_lag(n, max_lag)
    sq = v * v
    if mask is None or global_z:
        z = np.mean(sq) ** 2
    else:
        if not mask.any():
            raise EmptyCondition("no sample passes the threshold")
        z = np.mean(sq[mask]) ** 2
    if not z > 0:
        raise ZeroVariance("series is identically zero")

    values = np.empty(max_lag)
    counts = np.empty(max_lag, dtype=np.int64)
    stderr = np.empty(max_lag)
    for t in range(1, max_lag + 1):
        terms = v[: n - t] * sq[t:]
        if mask is not None:
            terms = terms[mask[: n - t]]
            if len(terms) == 0:
                raise EmptyCondition(f"no sample passes the threshold at lag {t}")
        terms = terms / z
        values[t - 1] = terms.mean()
        counts[t - 1] = len(terms)
        stderr[t - 1] = terms.std() / math.sqrt(len(terms))
    return LagCurve("leverage", values, counts, stderr)


def leverage_curve(r, max_lag: int) -> LagCurve:
    """Return-volatility correlation L(t) = <r(t') r(t'+t)^2> / <r^2>^2."""
    return _leverage(_values(r), max_lag, None, False)


def leverage_curve_conditional(r, max_lag: int, threshold: float, global_z: bool = False) -> LagCurve:
    """L(t) averaged only over t' with |r(t')| < threshold.

    By default the normalization <r^2>^2 is also taken over the retained
    t'; ``global_z=True`` uses the full series instead.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    v = _values(r)
    mask = np.abs(v) < threshold
    if mask.all():
        mask = None
    return _leverage(v, max_lag, mask, global_z)


def volatility_autocorrelation(r, max_lag: int) -> LagCurve:
    """A(t) = (<|r(t')||r(t'+t)|> - <|r|>^2) / (<|r|^2> - <|r|>^2)."""
    a = np.abs(_values(r))
    n = len(a)
    _check_lag(n, max_lag)
    m1 = a.mean()
    m2 = np.mean(a * a)
    a0 = m2 - m1 * m1
    if not a0 > 1e-14 * m2:
        raise ZeroVariance("|r| is constant")
    values = np.empty(max_lag)
    stderr = np.empty(max_lag)
    for t in range(1, max_lag + 1):
        prod = a[: n - t] * a[t:]
        values[t - 1] = (prod.mean() - m1 * m1) / a0
        stderr[t - 1] = prod.std() / math.sqrt(n - t) / a0
    return LagCurve("autocorrelation", values, n - np.arange(1, max_lag + 1), stderr)


def persistence_curve(r, max_lag: int, side: str = "below") -> LagCurve:
    """Fraction of t' whose volatility stays strictly below (above) |r(t')| for t steps.

    Ties count as failures on both sides. Each lag averages over its own
    admissible origins t' = 0..N-1-t.
    """
    if side not in ("below", "above"):
        raise ValueError("side must be 'below' or 'above'")
    a = np.abs(_values(r))
    n = len(a)
    if max_lag < 1 or max_lag >= n:
        raise LagTooLarge(f"max_lag={max_lag} too large for series of length {n}")
    alive = np.ones(n, dtype=bool)
    values = np.empty(max_lag)
    for t in range(1, max_lag + 1):
        if side == "below":
            alive = alive[: n - t] & (a[t:] < a[: n - t])
        else:
            alive = alive[: n - t] & (a[t:] > a[: n - t])
        values[t - 1] = np.count_nonzero(alive) / (n - t)
    counts = n - np.arange(1, max_lag + 1)
    p = values
    stderr = np.sqrt(p * (1 - p) / counts)
    return LagCurve("persistence_" + side, values, counts, stderr)


def smooth_lag_window(c: LagCurve, window: int) -> LagCurve:
    """Centered boxcar over the lag axis, truncated (one-sided) at the ends."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if window > c.max_lag:
        raise WindowTooLarge(f"window {window} exceeds max_lag {c.max_lag}")
    half = window // 2
    n = c.max_lag
    values = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    stderr = None if c.stderr is None else np.empty(n)
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        values[i] = c.values[lo:hi].mean()
        counts[i] = c.counts[lo:hi].min()
        if stderr is not None:
            stderr[i] = math.sqrt(np.sum(c.stderr[lo:hi] ** 2)) / (hi - lo)
    return LagCurve(c.kind, values, counts, stderr)


def window_for_days(days: int, steps_per_day: int = 1) -> int:
    """Lag window covering ``days`` trading days, rounded down to an odd width."""
    w = days * steps_per_day
    return w if w % 2 else max(1, w - 1)


def tail_histogram(r, side: str, bins_per_decade: int = 10) -> TailHistogram:
    """Log-binned density of |r| for the positive or negative returns.

    Densities are normalized by the full series length, so they integrate to
    the fraction of samples on the requested side.
    """
    if side not in ("positive", "negative"):
        raise ValueError("side must be 'positive' or 'negative'")
    if bins_per_decade < 1:
        raise ValueError("bins_per_decade must be positive")
    v = _values(r)
    x = v[v > 0] if side == "positive" else -v[v < 0]
    if len(x) == 0:
        raise EmptySide(f"no {side} returns")
    lo, hi = float(x.min()), float(x.max())
    if hi > lo:
        nbins = max(1, math.ceil(math.log10(hi / lo) * bins_per_decade))
        edges = np.logspace(math.log10(lo), math.log10(hi), nbins + 1)
        edges[0], edges[-1] = lo, hi
    else:
        pad = 10 ** (0.5 / bins_per_decade)
        edges = np.array([lo / pad, lo * pad])
    counts, _ = np.histogram(x, bins=edges)
    densities = counts / (len(v) * np.diff(edges))
    return TailHistogram(side, edges, densities, counts.astype(np.int64), len(v))


def fit_power_law(c: LagCurve | TailHistogram, fit_range: tuple[float, float]) -> TailFit:
    """Least-squares line through (log x, log y) inside ``fit_range``.

    The exponent is minus the slope, so y ~ x^(-exponent). Points with
    non-positive y are skipped.
    """
    low, high = float(fit_range[0]), float(fit_range[1])
    if not low < high:
        raise ValueError("fit_range must satisfy low < high")
    if isinstance(c, TailHistogram):
        x, y = c.bin_centers, c.densities
    else:
        x, y = c.lags.astype(float), c.values
    sel = (x >= low) & (x <= high) & (y > 0) & np.isfinite(y)
    if np.count_nonzero(sel) < 3:
        raise InsufficientPoints(f"only {np.count_nonzero(sel)} positive points in [{low}, {high}]")
    res = stats.linregress(np.log(x[sel]), np.log(y[sel]))
    return TailFit(float(-res.slope), (low, high), int(np.count_nonzero(sel)), float(res.stderr))


def fit_decay_time(c: LagCurve, lag_range: tuple[int, int], sign: float = 1.0) -> tuple[float, float]:
    """Exponential decay time of ``sign * values`` from a fit of log(y) against t.

    Returns (tau, amplitude). Lags where the signed value is not positive are
    skipped.
    """
    lags = c.lags
    y = sign * c.values
    sel = (lags >= lag_range[0]) & (lags <= lag_range[1]) & (y > 0)
    if np.count_nonzero(sel) < 3:
        raise InsufficientPoints("fewer than 3 positive points to fit a decay time")
    res = stats.linregress(lags[sel], np.log(y[sel]))
    if not res.slope < 0:
        return math.inf, float(math.exp(res.intercept))
    return float(-1.0 / res.slope), float(math.exp(res.intercept))


# --- serialization -------------------------------------------------------


def write_curve(path: str | Path | None, c: LagCurve) -> str:
    se = c.stderr if c.stderr is not None else np.full(c.max_lag, np.nan)
    lines = [f"# kind={c.kind}\n", "lag,value,count,stderr\n"]
    lines += [f"{t},{v:.17g},{n},{s:.17g}\n" for t, v, n, s in zip(c.lags, c.values, c.counts, se)]
    text = "".join(lines)
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_curve(text: str) -> LagCurve:
    kind, rows = None, []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "kind":
                kind = val.strip()
            continue
        if line.startswith("lag,"):
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise MalformedRow(f"bad curve row {line!r}")
        rows.append((int(parts[0]), float(parts[1]), int(parts[2]), float(parts[3])))
    if kind is None:
        raise MalformedRow("curve file lacks a '# kind=' header")
    if [row[0] for row in rows] != list(range(1, len(rows) + 1)):
        raise MalformedRow("curve lags must run 1..max_lag")
    se = np.array([row[3] for row in rows])
    return LagCurve(
        kind,
        np.array([row[1] for row in rows]),
        np.array([row[2] for row in rows]),
        None if np.isnan(se).all() else se,
    )


def read_curve(path: str | Path) -> LagCurve:
    return parse_curve(Path(path).read_text())


def write_histogram(path: str | Path | None, h: TailHistogram) -> str:
    edges = ";".join(f"{e:.17g}" for e in h.bin_edges)
    lines = [f"# side={h.side}\n", f"# total_count={h.total_count}\n", f"# edges={edges}\n", "bin_center,density,count\n"]
    lines += [f"{c:.17g},{d:.17g},{n}\n" for c, d, n in zip(h.bin_centers, h.densities, h.counts)]
    text = "".join(lines)
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_histogram(text: str) -> TailHistogram:
    meta, rows = {}, []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("bin_center"):
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise MalformedRow(f"bad histogram row {line!r}")
        rows.append((float(parts[1]), int(parts[2])))
    try:
        edges = np.array([float(e) for e in meta["edges"].split(";")])
        side, total = meta["side"], int(meta["total_count"])
    except KeyError as exc:
        raise MalformedRow(f"histogram file lacks header {exc}") from None
    if len(edges) != len(rows) + 1:
        raise MalformedRow("edge count does not match bin rows")
    return TailHistogram(side, edges, np.array([d for d, _ in rows]), np.array([n for _, n in rows], dtype=np.int64), total)


def read_histogram(path: str | Path) -> TailHistogram:
    return parse_histogram(Path(path).read_text())


def dump_fit(fit: TailFit) -> str:
    return json.dumps(fit.to_json(), sort_keys=True)


def load_fit(text: str) -> TailFit:
    return TailFit.from_json(json.loads(text))
