"""Day-ahead forecasting studies across 24 hourly models.

One independent distributional model per delivery hour.  The study fits on
a training window, then walks the test window day by day: the one-day-ahead
predictive parameters are recorded before the day's realization is absorbed
(no leakage), after which the model either takes an incremental update
(online mode) or is refit on the grown window (batch mode).  Outputs are a
forecast CSV, a score table, a Diebold-Mariano matrix and a timing report.
"""

from __future__ import annotations

import json
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date

import numpy as np

from ..errors import ConfigError, DataError
from ..estimator import (
    EstimatorConfig,
    EstimatorState,
    fit_batch,
    predict,
    state_from_bytes,
    state_to_bytes,
    update,
)
from ..families import get_family
from ..scoring import (
    DEFAULT_QUANTILE_GRID,
    ForecastRecord,
    ScoreTable,
    build_score_table,
    dm_matrix,
    dm_matrix_to_csv,
)
from .data import MarketDataset
from .features import build_design, feature_width, scale_skip_mask
from . import features

PARAM_NAMES = ("location", "scale", "tail", "skew")
_SNAP_MAGIC = b"ODRS"
_SNAP_VERSION = 1


@dataclass
class StudyConfig:
    """Configuration of a forecasting study.

    ``designs`` maps the distribution parameter names (location, scale,
    tail, skew) to "full" (the expert feature row) or "intercept".  The
    default windows reproduce a 2015-2018 training / 2019-2020 test split.
    """

    family: str = "normal"
    estimation: str = "ols"
    mode: str = "online"
    gamma: dict = field(default_factory=dict)
    ic: str = "bic"
    eps_lambda: dict = field(default_factory=dict)
    grid_count: int = 100
    train_start: date = date(2015, 1, 15)
    train_end: date = date(2018, 12, 26)
    test_start: date = date(2018, 12, 27)
    test_end: date = date(2020, 12, 31)
    designs: dict = field(default_factory=dict)
    include_own_hour: bool = False
    scale_inputs: bool = True
    rolling_window: int | None = None
    crps_factor: float = 2.0
    is_factor: str = "2/alpha"
    seed: int = 0
    out_dir: str = "study_out"
    threads: int = 1
    hours: tuple = tuple(range(24))
    model_name: str | None = None
    max_outer: int = 10
    max_inner: int = 30

    def validate(self) -> None:
        if self.mode not in ("online", "batch"):
            raise ConfigError(f"mode must be 'online' or 'batch', got {self.mode!r}")
        if self.estimation not in ("ols", "lasso"):
            raise ConfigError(f"estimation must be 'ols' or 'lasso', got {self.estimation!r}")
        if self.is_factor not in ("2/alpha", "alpha/2"):
            raise ConfigError("is_factor must be '2/alpha' or 'alpha/2'")
        if not (self.train_start <= self.train_end < self.test_start <= self.test_end):
            raise ConfigError("windows must be ordered: train before test, disjoint")
        get_family(self.family)
        for name in self.designs:
            if name not in PARAM_NAMES:
                raise ConfigError(f"unknown design key {name!r}")
            if self.designs[name] not in ("full", "intercept", "fixed"):
                raise ConfigError("designs must be 'full', 'intercept' or 'fixed'")
        for name in self.gamma:
            if name not in PARAM_NAMES:
                raise ConfigError(f"unknown forget key {name!r}")
        if self.rolling_window is not None and self.rolling_window < 30:
            raise ConfigError("rolling window must cover at least 30 days")
        if any(h < 0 or h > 23 for h in self.hours):
            raise ConfigError("hours must lie in 0..23")

    @property
    def name(self) -> str:
        if self.model_name:
            return self.model_name
        return f"{self.family}-{self.estimation}-{self.mode}"


def _param_designs(config: StudyConfig, p: int) -> list:
    designs = []
    for k in range(p):
        name = PARAM_NAMES[k]
        default = "full" if k == 0 else "intercept"
        designs.append(config.designs.get(name, default))
    return designs


def estimator_config(config: StudyConfig, p: int) -> EstimatorConfig:
    """Translate a study configuration into the fitting-engine config."""
    designs = _param_designs(config, p)
    width_full = feature_width(config.include_own_hour)
    widths = [width_full if d == "full" else 1 for d in designs]
    gamma = [float(config.gamma.get(PARAM_NAMES[k], 1.0)) for k in range(p)]
    eps_default = [1e-3 if k == 0 else 1e-4 for k in range(p)]
    eps = [float(config.eps_lambda.get(PARAM_NAMES[k], eps_default[k])) for k in range(p)]
    if config.scale_inputs:
        skip = {
            k: (
                scale_skip_mask(config.include_own_hour)
                if designs[k] == "full"
                else np.array([True])
            )
            for k in range(p)
        }
    else:
        skip = {k: np.ones(widths[k], dtype=bool) for k in range(p)}
    fit_params = tuple(k for k in range(p) if designs[k] != "fixed")
    if not fit_params:
        raise ConfigError("at least one distribution parameter must be estimated")
    return EstimatorConfig(
        family=config.family,
        method=config.estimation,
        gamma=gamma,
        ic=config.ic,
        eps_lambda=eps,
        grid_count=config.grid_count,
        scale_skip=skip,
        order_seed=config.seed,
        fit_params=fit_params,
        max_outer=config.max_outer,
        max_inner=config.max_inner,
    ), widths, designs


def _designs_for_days(ds, day_indices, h, designs, include_own_hour):
    full = build_design(ds, day_indices, h, include_own_hour)
    ones = np.ones((len(day_indices), 1))
    return [full if d == "full" else ones for d in designs]


def _window_indices(ds: MarketDataset, start: date, end: date) -> list:
    idx = [i for i, day in enumerate(ds.days) if start <= day <= end]
    if not idx:
        raise DataError(f"no days between {start} and {end} in the dataset")
    return idx


def run_hour(ds: MarketDataset, config: StudyConfig, h: int):
    """Fit and walk one delivery hour; returns records, timings and flags."""
    family = get_family(config.family)
    p = family.n_params
    est_config, _, designs = estimator_config(config, p)

    train_idx = _window_indices(ds, config.train_start, config.train_end)
    if train_idx[0] < features.MIN_HISTORY_DAYS:
        raise DataError(
            f"training window must start at least {features.MIN_HISTORY_DAYS} days "
            "after the first dataset day"
        )
    try:
        test_idx = _window_indices(ds, config.test_start, config.test_end)
    except DataError:
        test_idx = []

    y_train = ds.price[train_idx, h]
    X_train = _designs_for_days(ds, train_idx, h, designs, config.include_own_hour)

    t0 = time.perf_counter()
    state = fit_batch(est_config, X_train, y_train)
    fit_seconds = time.perf_counter() - t0

    records = []
    quantiles = []
    step_seconds = []
    flags = list(state.flags)
    window = list(train_idx)
    for d in test_idx:
        x_rows = [
            build_design(ds, [d], h, config.include_own_hour)[0] if dk == "full" else np.ones(1)
            for dk in designs
        ]
        theta = predict(state, x_rows)
        q = np.asarray(family.quantile(DEFAULT_QUANTILE_GRID, theta))
        records.append(
            ForecastRecord(day=d, hour=h, family=config.family, theta=theta,
                           realized=float(ds.price[d, h]))
        )
        quantiles.append(q)
        t0 = time.perf_counter()
        try:
            if config.mode == "online":
                state = update(state, x_rows, float(ds.price[d, h]))
            else:
                window.append(d)
                if config.rolling_window is not None:
                    window = window[-config.rolling_window:]
                Xw = _designs_for_days(ds, window, h, designs, config.include_own_hour)
                state = fit_batch(est_config, Xw, ds.price[window, h])
        except Exception as exc:  # noqa: BLE001 - study must survive a bad step
            flags.append(f"hour {h} day {d}: estimation failed ({exc}); coefficients kept")
        step_seconds.append(time.perf_counter() - t0)

    return h, records, quantiles, fit_seconds, step_seconds, flags, state


def _run_hour_args(args):
    return run_hour(*args)


def run_study(ds: MarketDataset, config: StudyConfig) -> dict:
    """Run the full study and write forecasts, scores, DM matrix and timings."""
    import os

    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)

    jobs = [(ds, config, h) for h in sorted(config.hours)]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(_run_hour_args, jobs))
    else:
        results = [run_hour(*job) for job in jobs]
    results.sort(key=lambda r: r[0])

    model = config.name
    all_records = []
    rows = []
    timing = {"mode": config.mode, "model": model, "hours": {}}
    flags = []
    for h, records, quantiles, fit_seconds, step_seconds, hour_flags, _ in results:
        all_records.extend(records)
        for rec, q in zip(records, quantiles):
            theta_cols = list(rec.theta) + [float("nan")] * (4 - len(rec.theta))
            rows.append(
                (ds.days[rec.day].isoformat(), rec.hour, model, theta_cols, q, rec.realized)
            )
        timing["hours"][str(h)] = {
            "fit_seconds": fit_seconds,
            "step_seconds": step_seconds,
            "total_seconds": fit_seconds + sum(step_seconds),
        }
        flags.extend(hour_flags)
    timing["total_estimation_seconds"] = sum(
        v["total_seconds"] for v in timing["hours"].values()
    )

    rows.sort(key=lambda r: (r[0], r[1]))
    q_cols = ",".join(f"q{int(round(a * 100)):02d}" for a in DEFAULT_QUANTILE_GRID)
    fc_lines = [f"day,hour,model,theta1,theta2,theta3,theta4,{q_cols},realized"]
    for day, hour, mdl, theta_cols, q, realized in rows:
        fc_lines.append(
            f"{day},{hour},{mdl},"
            + ",".join(f"{t:.12g}" for t in theta_cols)
            + ","
            + ",".join(f"{v:.12g}" for v in q)
            + f",{realized:.12g}"
        )
    _write(config.out_dir, "forecasts.csv", "\n".join(fc_lines) + "\n")

    if all_records:
        table = build_score_table(
            {model: all_records},
            crps_factor=config.crps_factor,
            is_factor=config.is_factor,
        )
        _write(config.out_dir, "scores.csv", table.to_csv())
        models, matrix = dm_matrix(table)
        _write(config.out_dir, "dm_matrix.csv", dm_matrix_to_csv(models, matrix))
        scores = table.metrics[model]
    else:
        _write(config.out_dir, "scores.csv", "model," + ",".join(ScoreTable.COLUMNS) + "\n")
        _write(config.out_dir, "dm_matrix.csv", "model\n")
        scores = {}

    with open(f"{config.out_dir}/timing.json", "w") as fh:
        json.dump(timing, fh, indent=1, sort_keys=True)

    manifest = _manifest(config)
    _write(config.out_dir, "manifest.txt", manifest)

    return {
        "model": model,
        "scores": scores,
        "timing": timing,
        "flags": flags,
        "out_dir": config.out_dir,
        "n_forecasts": len(all_records),
    }


def _write(out_dir, name, text) -> None:
    with open(f"{out_dir}/{name}", "w", newline="\n") as fh:
        fh.write(text)


def _manifest(config: StudyConfig) -> str:
    width = feature_width(config.include_own_hour)
    layout_note = (
        "38 columns: the previous-day price block spans all 24 hours, so the "
        "first own-hour lag appears twice"
        if config.include_own_hour
        else "37 columns: the previous-day price block excludes the delivery hour, "
        "keeping every regressor distinct"
    )
    lines = [
        f"model={config.name}",
        f"family={config.family}",
        f"estimation={config.estimation}",
        f"mode={config.mode}",
        f"feature_columns={width}",
        f"feature_layout_note={layout_note}",
        "feature_layout_alternatives=37 distinct regressors (default) or 38 with the "
        "duplicated own-hour lag; the two layouts differ by exactly that one column",
        f"train={config.train_start.isoformat()}..{config.train_end.isoformat()}",
        f"test={config.test_start.isoformat()}..{config.test_end.isoformat()}",
        f"ic={config.ic}",
        f"seed={config.seed}",
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# snapshot container for the fit / update / predict workflow


@dataclass
class StudySnapshot:
    """Bundle of per-hour estimator states plus the data cursor."""

    config: StudyConfig
    last_day: date
    estimators: dict


def snapshot_to_bytes(snap: StudySnapshot) -> bytes:
    blobs = {str(h): state_to_bytes(st) for h, st in snap.estimators.items()}
    header = {
        "last_day": snap.last_day.isoformat(),
        "hours": sorted(int(h) for h in snap.estimators),
        "config": _config_to_dict(snap.config),
        "blob_lens": {h: len(b) for h, b in blobs.items()},
    }
    head = json.dumps(header, sort_keys=True).encode()
    out = [_SNAP_MAGIC, struct.pack("<IIQ", _SNAP_VERSION, 0, len(head)), head]
    for h in sorted(blobs, key=int):
        out.append(blobs[h])
    return b"".join(out)


def snapshot_from_bytes(buf: bytes) -> StudySnapshot:
    if buf[:4] != _SNAP_MAGIC:
        raise DataError("bad magic in study snapshot")
    version, _, head_len = struct.unpack("<IIQ", buf[4:20])
    if version != _SNAP_VERSION:
        raise DataError(f"unsupported study snapshot version {version}")
    header = json.loads(buf[20 : 20 + head_len].decode())
    offset = 20 + head_len
    estimators = {}
    for h in sorted(header["blob_lens"], key=int):
        length = header["blob_lens"][h]
        estimators[int(h)] = state_from_bytes(buf[offset : offset + length])
        offset += length
    config = _config_from_dict(header["config"])
    return StudySnapshot(
        config=config,
        last_day=date.fromisoformat(header["last_day"]),
        estimators=estimators,
    )


def _config_to_dict(config: StudyConfig) -> dict:
    d = {
        "family": config.family,
        "estimation": config.estimation,
        "mode": config.mode,
        "gamma": config.gamma,
        "ic": config.ic,
        "eps_lambda": config.eps_lambda,
        "grid_count": config.grid_count,
        "train_start": config.train_start.isoformat(),
        "train_end": config.train_end.isoformat(),
        "test_start": config.test_start.isoformat(),
        "test_end": config.test_end.isoformat(),
        "designs": config.designs,
        "include_own_hour": config.include_own_hour,
        "scale_inputs": config.scale_inputs,
        "rolling_window": config.rolling_window,
        "crps_factor": config.crps_factor,
        "is_factor": config.is_factor,
        "seed": config.seed,
        "out_dir": config.out_dir,
        "threads": config.threads,
        "hours": list(config.hours),
        "model_name": config.model_name,
        "max_outer": config.max_outer,
        "max_inner": config.max_inner,
    }
    return d


def _config_from_dict(d: dict) -> StudyConfig:
    kwargs = dict(d)
    for key in ("train_start", "train_end", "test_start", "test_end"):
        kwargs[key] = date.fromisoformat(kwargs[key])
    kwargs["hours"] = tuple(kwargs["hours"])
    return StudyConfig(**kwargs)
