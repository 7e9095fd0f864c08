"""Retarded volatility model.

Feedback direction (generation)::

    r(t') = [1 - sum_t K(t) r(t'-t)] * sigma(t') * eps(t')

Decoupling direction (elimination), with the sign of the coupling reversed::

    r0(t') = [1 + sum_t K(t) r(t'-t)] * r(t')

with the kernel calibrated from the measured leverage curve as
K(t) = -(C/2) L(t). Returns before the start of the series are taken as 0.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadParameters, MalformedRow, RefTooShort, SeriesTooShort, WrongCurveKind
from .estimators import LagCurve, leverage_curve
from .series import ReturnSeries, normalize

log = logging.getLogger(__name__)

# Pinned so that simulated series are reproducible for a given seed.
NOISE_GENERATOR = "numpy.random.Generator(PCG64), standard_normal (ziggurat)"

DEFAULT_C_GRID = tuple(round(0.05 * i, 2) for i in range(1, 11))


@dataclass(frozen=True)
class Kernel:
    values: np.ndarray
    form: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 1:
            raise BadParameters("kernel needs at least one lag")
        object.__setattr__(self, "values", v)

    @property
    def t_max(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class DecoupleReport:
    series: ReturnSeries
    C_used: float | None
    frac_large_terms: float
    frac_factor_nonpositive: float
    mean_decoupled: float
    max_abs_sum: float = 0.0
    scores: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = {
            "C": self.C_used,
            "frac_large_terms": self.frac_large_terms,
            "frac_factor_nonpositive": self.frac_factor_nonpositive,
            "mean_decoupled": self.mean_decoupled,
            "max_abs_sum": self.max_abs_sum,
        }
        if self.scores:
            d["scores"] = {repr(c): s for c, s in self.scores.items()}
        return d


def kernel_exponential(m: float, tau: float, t_max: int) -> Kernel:
    """K(t) = m exp(-t/tau) for t = 1..t_max."""
    if not tau > 0:
        raise BadParameters("tau must be positive")
    if t_max < 1:
        raise BadParameters("t_max must be at least 1")
    t = np.arange(1, t_max + 1)
    return Kernel(m * np.exp(-t / tau), "exponential", {"m": float(m), "tau": float(tau)})


def kernel_from_leverage(L: LagCurve, C: float) -> Kernel:
    if L.kind != "leverage":
        raise WrongCurveKind(f"expected a leverage curve, got {L.kind!r}")
    if not C > 0:
        raise BadParameters("C must be positive")
    return Kernel(-(C / 2.0) * L.values, "from_curve", {"C": float(C)})


def simulate_feedback(
    k: Kernel, sigma_ref, noise_seed: int, burn_in: bool = True
) -> ReturnSeries:
    """Generate returns from a reference volatility under kernel feedback.

    With ``burn_in`` the first ``t_max`` outputs, which still feel the zero
    initial history, are dropped.
    """
    sigma = np.asarray(sigma_ref, dtype=float)
    T = k.t_max
    if len(sigma) < T + 2:
        raise RefTooShort(f"reference volatility has {len(sigma)} points, need at least {T + 2}")
    if not np.all(sigma > 0):
        raise BadParameters("reference volatility must be strictly positive")
    n = len(sigma)
    eps = np.random.default_rng(noise_seed).standard_normal(n)
    scale = sigma * eps
    # hist[T + i] holds r(i); hist[i:i+T] is r(i-T)..r(i-1), dotted against K(T)..K(1)
    hist = np.zeros(n + T)
    kr = k.values[::-1].copy()
    for i in range(n):
        hist[T + i] = (1.0 - kr @ hist[i : i + T]) * scale[i]
    r = hist[T:]
    if burn_in:
        r = r[T:]
    return normalize(r, "simulated")


def _feedback_sum(v: np.ndarray, kv: np.ndarray) -> np.ndarray:
    """S(t') = sum_t K(t) v(t'-t) with v(<0) = 0."""
    n = len(v)
    s = np.zeros(n)
    for t in range(1, min(len(kv), n - 1) + 1):
        s[t:] += kv[t - 1] * v[: n - t]
    return s


def audit_perturbation(r, k: Kernel) -> tuple[float, float, float]:
    """Size of the decoupling interaction relative to 1.

    Returns (fraction of (t', t) terms with |K(t)| |r(t'-t)| > 1, fraction of
    t' whose bracket 1 + sum K r is <= 0, max over t' of |sum K r|).
    """
    v = r.values if isinstance(r, ReturnSeries) else np.asarray(r, dtype=float)
    if len(v) <= k.t_max:
        raise SeriesTooShort(f"series of length {len(v)} does not exceed kernel support {k.t_max}")
    return _audit(v, k, _feedback_sum(v, k.values))


def _audit(v: np.ndarray, k: Kernel, s: np.ndarray) -> tuple[float, float, float]:
    n, T = len(v), k.t_max
    av = np.abs(v)
    large = 0
    for t in range(1, T + 1):
        large += int(np.count_nonzero(abs(k.values[t - 1]) * av[: n - t] > 1.0))
    total = T * n - T * (T + 1) // 2
    return large / total, float(np.count_nonzero(1.0 + s <= 0) / n), float(np.max(np.abs(s)))


def decouple(r: ReturnSeries, k: Kernel) -> DecoupleReport:
    v = r.values
    if len(v) <= k.t_max:
        raise SeriesTooShort(f"series of length {len(v)} does not exceed kernel support {k.t_max}")
    s = _feedback_sum(v, k.values)
    frac_large, frac_nonpos, max_abs = _audit(v, k, s)
    raw = (1.0 + s) * v
    if not np.any(s) and r.is_normalized():
        # identity transform on an already canonical series
        out = ReturnSeries(v.copy(), 0.0, 1.0, "decoupled", r.steps_per_day)
    else:
        out = normalize(raw, "decoupled", r.steps_per_day)
    return DecoupleReport(
        out, k.params.get("C"), frac_large, frac_nonpos, float(raw.mean()), max_abs
    )


def residual_score(curve: LagCurve) -> float:
    """Sum over lags of (L0(t) / stderr(t))^2; lags with zero stderr are skipped."""
    se = curve.stderr
    ok = se > 0
    return float(np.sum((curve.values[ok] / se[ok]) ** 2))


def calibrate_C(
    r: ReturnSeries, L: LagCurve, c_grid=DEFAULT_C_GRID
) -> tuple[float, DecoupleReport]:
    """Pick the C whose decoupled series has the flattest leverage curve.

    Ties go to the smaller C.
    """
    grid = sorted(float(c) for c in c_grid)
    if not grid:
        raise BadParameters("C grid is empty")
    if grid[0] <= 0:
        raise BadParameters("C grid values must be positive")
    best = None
    scores = {}
    for C in grid:
        rep = decouple(r, kernel_from_leverage(L, C))
        score = residual_score(leverage_curve(rep.series, L.max_lag))
        scores[C] = score
        log.debug("C=%g residual score %.6g", C, score)
        if best is None or score < best[0]:
            best = (score, C, rep)
    _, C, rep = best
    return C, DecoupleReport(
        rep.series, C, rep.frac_large_terms, rep.frac_factor_nonpositive, rep.mean_decoupled, rep.max_abs_sum, scores
    )


# --- serialization -------------------------------------------------------


def write_kernel(path: str | Path | None, k: Kernel) -> str:
    lines = [f"# form={k.form}\n"] + [f"# {key}={val:.17g}\n" for key, val in sorted(k.params.items())]
    lines.append("lag,K\n")
    lines += [f"{t},{x:.17g}\n" for t, x in enumerate(k.values, start=1)]
    text = "".join(lines)
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_kernel(text: str) -> Kernel:
    meta, vals = {}, []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("lag,"):
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
            continue
        parts = line.split(",")
        if len(parts) != 2 or int(parts[0]) != len(vals) + 1:
            raise MalformedRow(f"bad kernel row {line!r}")
        vals.append(float(parts[1]))
    form = meta.pop("form", "from_curve")
    return Kernel(np.array(vals), form, {key: float(val) for key, val in meta.items()})


def read_kernel(path: str | Path) -> Kernel:
    return parse_kernel(Path(path).read_text())


def dump_report(rep: DecoupleReport) -> str:
    return json.dumps(rep.to_json(), indent=2, sort_keys=True) + "\n"
