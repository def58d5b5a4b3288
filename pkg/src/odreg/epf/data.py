"""Day-ahead market data ingestion.

Reads an hourly CSV with the schema

    timestamp,price,load_fc,res_fc,eua,gas,coal,oil

into a day-by-hour dataset.  Timestamps are ISO-8601 in market local time,
so clock changes show up as a duplicated autumn hour (averaged) or a
missing spring hour (interpolated).  Short gaps of up to three hours are
linearly interpolated and reported; anything longer is an error.  Daily
fuel prices are forward-filled across non-trading days.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta

import numpy as np

from ..errors import DataError

SCHEMA = ("timestamp", "price", "load_fc", "res_fc", "eua", "gas", "coal", "oil")
_HOURLY_COLUMNS = ("price", "load_fc", "res_fc")
_FUEL_COLUMNS = ("eua", "gas", "coal", "oil")
_MAX_GAP_HOURS = 3


@dataclass
class MarketDataset:
    """Hourly market data on a complete daily calendar.

    Attributes:
        days: Calendar dates, one per row of the (D, 24) panels.
        price: Realized day-ahead prices, EUR/MWh.
        load_fc: Published load forecasts, MW.
        res_fc: Published renewable in-feed forecasts, MW.
        fuels: Daily (D, 4) panel of EUA, gas, coal and oil prices.
        weekday: 0 = Monday ... 6 = Sunday.
        report: Human-readable ingestion notes (fills, averages, trims).
    """

    days: list
    price: np.ndarray
    load_fc: np.ndarray
    res_fc: np.ndarray
    fuels: np.ndarray
    weekday: np.ndarray
    report: list = field(default_factory=list)

    @property
    def n_days(self) -> int:
        return len(self.days)

    def day_index(self, day: date) -> int:
        try:
            return self.days.index(day)
        except ValueError:
            raise DataError(f"day {day} not covered by the dataset")


def _parse_timestamp(text: str) -> datetime:
    try:
        ts = datetime.fromisoformat(text.strip())
    except ValueError as exc:
        raise DataError(f"bad timestamp {text!r}") from exc
    # wall-clock time drives the daily calendar; drop any offset
    return ts.replace(tzinfo=None)


def _parse_value(text: str, column: str, line: int) -> float:
    text = text.strip()
    if text == "" or text.lower() in ("nan", "na"):
        return float("nan")
    try:
        return float(text)
    except ValueError as exc:
        raise DataError(f"line {line}: bad value {text!r} in column {column}") from exc


def load_dataset(path) -> MarketDataset:
    """Read, validate and regularize an hourly market CSV."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file")
        if tuple(h.strip() for h in header) != SCHEMA:
            raise DataError(
                f"schema mismatch: expected {','.join(SCHEMA)}, got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(SCHEMA):
                raise DataError(f"line {lineno}: expected {len(SCHEMA)} fields")
            ts = _parse_timestamp(row[0])
            values = [_parse_value(v, c, lineno) for v, c in zip(row[1:], SCHEMA[1:])]
            rows.append((ts, values))

    if not rows:
        raise DataError("no data rows")

    report: list[str] = []
    filled = []
    prev_ts = None
    for ts, values in rows:
        if prev_ts is not None:
            if ts <= prev_ts:
                if ts == prev_ts:
                    # duplicated clock-change hour: average with the prior row
                    old = filled[-1][1]
                    filled[-1] = (ts, [0.5 * (a + b) for a, b in zip(old, values)])
                    report.append(f"averaged duplicated hour {ts.isoformat()}")
                    prev_ts = ts
                    continue
                raise DataError(f"timestamps not increasing at {ts.isoformat()}")
            gap = int((ts - prev_ts) / timedelta(hours=1)) - 1
            if (ts - prev_ts) % timedelta(hours=1) != timedelta(0):
                raise DataError(f"timestamp {ts.isoformat()} is not on the hourly grid")
            if gap > _MAX_GAP_HOURS:
                raise DataError(
                    f"gap of {gap} hours before {ts.isoformat()} exceeds {_MAX_GAP_HOURS}"
                )
            if gap > 0:
                last_vals = filled[-1][1]
                for g in range(1, gap + 1):
                    frac = g / (gap + 1)
                    interp = [
                        a + frac * (b - a) for a, b in zip(last_vals, values)
                    ]
                    t_fill = prev_ts + timedelta(hours=g)
                    filled.append((t_fill, interp))
                    report.append(f"interpolated missing hour {t_fill.isoformat()}")
        filled.append((ts, values))
        prev_ts = ts

    # trim leading/trailing partial days so every day has exactly 24 hours
    start = 0
    while start < len(filled) and filled[start][0].hour != 0:
        start += 1
    if start:
        report.append(f"trimmed {start} leading rows before the first full day")
    end = len(filled)
    while end > start and filled[end - 1][0].hour != 23:
        end -= 1
    if end < len(filled):
        report.append(f"trimmed {len(filled) - end} trailing rows after the last full day")
    filled = filled[start:end]
    if not filled:
        raise DataError("no complete days after trimming")

    n = len(filled)
    if n % 24 != 0:
        raise DataError("hour grid is not aligned to full days")
    d = n // 24
    days = [filled[i * 24][0].date() for i in range(d)]
    for i in range(d):
        for h in range(24):
            ts = filled[i * 24 + h][0]
            if ts.date() != days[i] or ts.hour != h:
                raise DataError(f"misaligned hour {ts.isoformat()}")

    raw = np.array([vals for _, vals in filled])  # (n, 7)
    price = raw[:, 0].reshape(d, 24)
    load_fc = raw[:, 1].reshape(d, 24)
    res_fc = raw[:, 2].reshape(d, 24)
    for name, panel in zip(_HOURLY_COLUMNS, (price, load_fc, res_fc)):
        if np.isnan(panel).any():
            raise DataError(f"column {name} still contains missing values")

    fuels = np.empty((d, 4))
    fuel_hourly = raw[:, 3:].reshape(d, 24, 4)
    for i in range(d):
        for f in range(4):
            col = fuel_hourly[i, :, f]
            finite = col[~np.isnan(col)]
            fuels[i, f] = finite[0] if finite.size else np.nan
    for f, name in enumerate(_FUEL_COLUMNS):
        col = fuels[:, f]
        for i in range(d):
            if np.isnan(col[i]):
                if i == 0:
                    raise DataError(f"fuel column {name} starts with a missing value")
                col[i] = col[i - 1]
                report.append(f"forward-filled {name} on {days[i].isoformat()}")

    weekday = np.array([day.weekday() for day in days], dtype=int)
    return MarketDataset(
        days=days,
        price=price,
        load_fc=load_fc,
        res_fc=res_fc,
        fuels=fuels,
        weekday=weekday,
        report=report,
    )
