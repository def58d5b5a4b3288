"""Synthetic day-ahead market data for demos and benchmarks."""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np

from .data import MarketDataset


def synthetic_market(
    n_days: int,
    start: date = date(2021, 1, 1),
    seed: int = 0,
    base_price: float = 40.0,
) -> MarketDataset:
    """Generate a price panel with daily/weekly structure and fundamentals.

    Prices follow an autoregressive daily profile driven by load, renewables
    and fuel levels plus heteroskedastic noise, which gives the expert
    feature set something real to recover.
    """
    rng = np.random.default_rng(seed)
    days = [start + timedelta(days=i) for i in range(n_days)]
    weekday = np.array([d.weekday() for d in days])
    hours = np.arange(24)

    profile = 8.0 * np.sin((hours - 6) / 24 * 2 * np.pi) + 4.0 * np.sin(
        (hours - 17) / 12 * 2 * np.pi
    )
    load = 30_000 + 8_000 * np.sin((hours - 8) / 24 * 2 * np.pi)
    load = load[None, :] + 2_000 * rng.normal(size=(n_days, 24))
    load *= np.where(weekday >= 5, 0.85, 1.0)[:, None]
    res = 12_000 + 5_000 * rng.normal(size=(n_days, 24)).cumsum(axis=1) / 24
    res = np.clip(res, 500, None)

    fuels = np.empty((n_days, 4))
    fuels[0] = (25.0, 20.0, 70.0, 60.0)
    steps = rng.normal(size=(n_days - 1, 4)) * (0.3, 0.25, 0.8, 0.7)
    fuels[1:] = fuels[0] + np.cumsum(steps, axis=0)
    fuels = np.clip(fuels, 5.0, None)

    price = np.empty((n_days, 24))
    price[0] = base_price + profile + rng.normal(size=24)
    for d in range(1, n_days):
        vol = 2.0 + 1.5 * np.abs(np.sin(hours / 24 * np.pi))
        price[d] = (
            0.55 * price[d - 1]
            + 0.45 * (base_price + profile)
            + 0.0004 * (load[d] - 30_000)
            - 0.0003 * (res[d] - 12_000)
            + 0.15 * (fuels[d - 1, 1] - 20.0)
            - 2.0 * (weekday[d] >= 5)
            + vol * rng.normal(size=24)
        )

    return MarketDataset(
        days=days,
        price=price,
        load_fc=load,
        res_fc=res,
        fuels=fuels,
        weekday=weekday,
        report=["synthetic dataset"],
    )


def dataset_to_csv(ds: MarketDataset, path) -> None:
    """Write a dataset back to the ingestion CSV schema."""
    with open(path, "w", newline="\n") as fh:
        fh.write("timestamp,price,load_fc,res_fc,eua,gas,coal,oil\n")
        for i, day in enumerate(ds.days):
            for h in range(24):
                fh.write(
                    f"{day.isoformat()}T{h:02d}:00:00,"
                    f"{ds.price[i, h]:.6f},{ds.load_fc[i, h]:.3f},{ds.res_fc[i, h]:.3f},"
                    f"{ds.fuels[i, 0]:.4f},{ds.fuels[i, 1]:.4f},"
                    f"{ds.fuels[i, 2]:.4f},{ds.fuels[i, 3]:.4f}\n"
                )
