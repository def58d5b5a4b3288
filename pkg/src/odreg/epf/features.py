"""Expert feature rows for hourly day-ahead price models.

One row per (delivery day, delivery hour): own-hour price lags, the full
previous-day price profile, day-ahead load and renewable forecasts, the
latest daily fuel prices and weekday dummies.  The default layout carries
the 37 distinct regressors; ``include_own_hour=True`` widens the
previous-day block to all 24 hours (duplicating the first own-hour lag)
for a 38-column design.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from .data import MarketDataset

MIN_HISTORY_DAYS = 14
_OWN_LAGS = (1, 2, 7, 14)


def feature_names(include_own_hour: bool = False, hour: int = 0) -> list:
    names = ["intercept"]
    names += [f"price_lag{l}_h{hour}" for l in _OWN_LAGS]
    hours = range(24) if include_own_hour else [s for s in range(24) if s != hour]
    names += [f"price_lag1_h{s}" for s in hours]
    names += ["load_fc", "res_fc", "eua", "gas", "coal", "oil", "mon", "sat", "sun"]
    return names


def feature_width(include_own_hour: bool = False) -> int:
    return 38 if include_own_hour else 37


def scale_skip_mask(include_own_hour: bool = False) -> np.ndarray:
    """Columns the scaler passes through: the intercept and the dummies."""
    width = feature_width(include_own_hour)
    mask = np.zeros(width, dtype=bool)
    mask[0] = True
    mask[-3:] = True
    return mask


def build_feature_row(
    ds: MarketDataset, d: int, h: int, include_own_hour: bool = False
) -> np.ndarray:
    """Assemble the regressor vector for delivery day index ``d``, hour ``h``.

    Requires 14 days of price history before ``d``.  Fuel prices enter with
    the value of day ``d - 1``, the latest one available at the day-ahead
    auction.
    """
    if not 0 <= h <= 23:
        raise ValueError(f"hour {h} out of range")
    if d < MIN_HISTORY_DAYS:
        raise DataError(f"day index {d} has insufficient history (need >= {MIN_HISTORY_DAYS})")
    if d >= ds.n_days:
        raise DataError(f"day index {d} beyond dataset")
    row = np.empty(feature_width(include_own_hour))
    row[0] = 1.0
    for i, lag in enumerate(_OWN_LAGS):
        row[1 + i] = ds.price[d - lag, h]
    hours = range(24) if include_own_hour else [s for s in range(24) if s != h]
    block = 5
    for i, s in enumerate(hours):
        row[block + i] = ds.price[d - 1, s]
    pos = block + len(list(hours))
    row[pos] = ds.load_fc[d, h]
    row[pos + 1] = ds.res_fc[d, h]
    row[pos + 2 : pos + 6] = ds.fuels[d - 1]
    wd = ds.weekday[d]
    row[pos + 6] = 1.0 if wd == 0 else 0.0
    row[pos + 7] = 1.0 if wd == 5 else 0.0
    row[pos + 8] = 1.0 if wd == 6 else 0.0
    return row


def build_design(
    ds: MarketDataset, day_indices, h: int, include_own_hour: bool = False
) -> np.ndarray:
    """Stack feature rows for many delivery days of one hour."""
    return np.stack([build_feature_row(ds, d, h, include_own_hour) for d in day_indices])
