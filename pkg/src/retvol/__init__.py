"""Return-volatility correlation toolkit.

Measures the leverage (and anti-leverage) effect of a return series together
with the usual volatility stylized facts, and implements the retarded
volatility model in both directions: generating a return-volatility
correlation from a reference volatility, and removing it from an observed
series.
"""

__version__ = "0.1.0"

from .errors import ComputationError, InputError, RetvolError
from .estimators import (
    LagCurve,
    TailFit,
    TailHistogram,
    fit_decay_time,
    fit_power_law,
    leverage_curve,
    leverage_curve_conditional,
    persistence_curve,
    smooth_lag_window,
    tail_histogram,
    volatility_autocorrelation,
)
from .generators import EZState, GeneratorSpec, ez_step, fractional_gaussian_noise, generate_sigma
from .retarded import (
    DecoupleReport,
    Kernel,
    audit_perturbation,
    calibrate_C,
    decouple,
    kernel_exponential,
    kernel_from_leverage,
    simulate_feedback,
)
from .series import (
    IntradayProfile,
    PriceSeries,
    ReturnSeries,
    intraday_profile,
    load_prices,
    log_returns,
    normalize,
    remove_intraday,
    read_prices,
    returns_from_prices,
)
