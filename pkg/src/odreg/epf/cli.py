"""Command line front end for day-ahead forecasting workflows.

Subcommands:
    fit      initial fit on the training window, written to a snapshot
    update   absorb new days from a CSV into an existing snapshot
    predict  emit next-day predictive quantiles from a snapshot
    study    full train/test forecasting study

Configuration files are plain ``key=value`` lines; see ``KNOWN_KEYS``.
Exit codes: 0 ok, 2 configuration error, 3 data error, 4 estimation failure.
"""

from __future__ import annotations

import argparse
import sys
from datetime import date, timedelta

import numpy as np

from ..errors import ConfigError, DataError, EstimationError
from ..estimator import predict as predict_theta
from ..estimator import update as update_state
from ..families import get_family
from ..scoring import DEFAULT_QUANTILE_GRID
from . import features
from .data import MarketDataset, load_dataset
from .study import (
    PARAM_NAMES,
    StudyConfig,
    StudySnapshot,
    _designs_for_days,
    _param_designs,
    estimator_config,
    run_hour,
    run_study,
    snapshot_from_bytes,
    snapshot_to_bytes,
)
from ..estimator import fit_batch

KNOWN_KEYS = {
    "family", "estimation", "mode", "ic", "grid_count",
    "gamma.location", "gamma.scale", "gamma.tail", "gamma.skew",
    "eps_lambda.location", "eps_lambda.scale", "eps_lambda.tail", "eps_lambda.skew",
    "design.location", "design.scale", "design.tail", "design.skew",
    "train_start", "train_end", "test_start", "test_end",
    "crps_factor", "is_factor", "seed", "out_dir", "rolling_window",
    "include_own_hour", "scale_inputs", "threads", "hours", "model_name",
    "max_outer", "max_inner",
}


def parse_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, _, value = line.partition("=")
                key, value = key.strip(), value.strip()
                if key not in KNOWN_KEYS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = value
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    return values


def study_config_from_values(values: dict) -> StudyConfig:
    config = StudyConfig()
    try:
        for key, value in values.items():
            if key.startswith("gamma."):
                config.gamma[key.split(".", 1)[1]] = float(value)
            elif key.startswith("eps_lambda."):
                config.eps_lambda[key.split(".", 1)[1]] = float(value)
            elif key.startswith("design."):
                config.designs[key.split(".", 1)[1]] = value
            elif key in ("train_start", "train_end", "test_start", "test_end"):
                setattr(config, key, date.fromisoformat(value))
            elif key in ("grid_count", "seed", "threads", "rolling_window", "max_outer", "max_inner"):
                setattr(config, key, int(value))
            elif key == "crps_factor":
                config.crps_factor = float(value)
            elif key in ("include_own_hour", "scale_inputs"):
                setattr(config, key, value.lower() in ("1", "true", "yes"))
            elif key == "hours":
                config.hours = tuple(int(h) for h in value.split(",") if h.strip())
            else:
                setattr(config, key, value)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad config value: {exc}")
    config.validate()
    return config


def _load_config(path: str | None) -> StudyConfig:
    values = parse_config_file(path) if path else {}
    return study_config_from_values(values)


def _fit_snapshot(config: StudyConfig, ds: MarketDataset) -> StudySnapshot:
    estimators = {}
    for h in sorted(config.hours):
        _, _, _, _, _, _, state = run_hour(
            ds, _fit_only(config), h
        )
        estimators[h] = state
    return StudySnapshot(config=config, last_day=config.train_end, estimators=estimators)


def _fit_only(config: StudyConfig):
    # a fit covers only the training window; no test walk
    from dataclasses import replace

    return replace(
        config,
        test_start=config.train_end + timedelta(days=1),
        test_end=config.train_end,  # empty test window
    )


def cmd_fit(args) -> int:
    config = _load_config(args.config)
    ds = load_dataset(args.data)
    snap = _fit_snapshot(config, ds)
    with open(args.snapshot, "wb") as fh:
        fh.write(snapshot_to_bytes(snap))
    print(f"fitted {len(snap.estimators)} hourly models through {snap.last_day.isoformat()}")
    return 0


def cmd_update(args) -> int:
    with open(args.snapshot, "rb") as fh:
        snap = snapshot_from_bytes(fh.read())
    config = snap.config
    ds = load_dataset(args.data)
    family = get_family(config.family)
    designs = _param_designs(config, family.n_params)
    through = date.fromisoformat(args.through) if args.through else ds.days[-1]
    new_days = [
        i for i, day in enumerate(ds.days)
        if snap.last_day < day <= through and i >= features.MIN_HISTORY_DAYS
    ]
    if not new_days:
        print("no new complete days to absorb")
        return 0
    for d in new_days:
        for h in sorted(snap.estimators):
            x_rows = [
                features.build_feature_row(ds, d, h, config.include_own_hour)
                if dk == "full" else np.ones(1)
                for dk in designs
            ]
            snap.estimators[h] = update_state(
                snap.estimators[h], x_rows, float(ds.price[d, h])
            )
        snap.last_day = ds.days[d]
    with open(args.snapshot, "wb") as fh:
        fh.write(snapshot_to_bytes(snap))
    print(f"absorbed {len(new_days)} days; snapshot now through {snap.last_day.isoformat()}")
    return 0


def cmd_predict(args) -> int:
    with open(args.snapshot, "rb") as fh:
        snap = snapshot_from_bytes(fh.read())
    config = snap.config
    ds = load_dataset(args.data)
    family = get_family(config.family)
    designs = _param_designs(config, family.n_params)
    target = snap.last_day + timedelta(days=1)
    d = ds.day_index(target)
    q_cols = ",".join(f"q{int(round(a * 100)):02d}" for a in DEFAULT_QUANTILE_GRID)
    lines = [f"day,hour,model,theta1,theta2,theta3,theta4,{q_cols}"]
    for h in sorted(snap.estimators):
        x_rows = [
            features.build_feature_row(ds, d, h, config.include_own_hour)
            if dk == "full" else np.ones(1)
            for dk in designs
        ]
        theta = predict_theta(snap.estimators[h], x_rows)
        q = np.asarray(family.quantile(DEFAULT_QUANTILE_GRID, theta))
        theta_cols = list(theta) + [float("nan")] * (4 - len(theta))
        lines.append(
            f"{target.isoformat()},{h},{config.name},"
            + ",".join(f"{t:.12g}" for t in theta_cols)
            + ","
            + ",".join(f"{v:.12g}" for v in q)
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_study(args) -> int:
    config = _load_config(args.config)
    if args.threads is not None:
        config.threads = args.threads
    ds = load_dataset(args.data)
    summary = run_study(ds, config)
    print(
        f"study {summary['model']}: {summary['n_forecasts']} forecasts, "
        f"outputs in {summary['out_dir']}"
    )
    for key in ("crps", "rmse", "mae", "log_score"):
        if key in summary["scores"]:
            print(f"  {key} = {summary['scores'][key]:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odreg",
        description="Online distributional regression studies for day-ahead prices",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="initial fit, written to a snapshot")
    p_fit.add_argument("--config", required=False)
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--snapshot", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_upd = sub.add_parser("update", help="absorb new CSV rows into a snapshot")
    p_upd.add_argument("--data", required=True)
    p_upd.add_argument("--snapshot", required=True)
    p_upd.add_argument("--through", required=False,
                       help="absorb only days up to this ISO date")
    p_upd.set_defaults(func=cmd_update)

    p_pred = sub.add_parser("predict", help="emit quantiles from a snapshot")
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--snapshot", required=True)
    p_pred.add_argument("--out", required=False)
    p_pred.set_defaults(func=cmd_predict)

    p_study = sub.add_parser("study", help="full forecasting study")
    p_study.add_argument("--config", required=False)
    p_study.add_argument("--data", required=True)
    p_study.add_argument("--threads", type=int, default=None)
    p_study.set_defaults(func=cmd_study)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (EstimationError, np.linalg.LinAlgError) as exc:
        print(f"estimation failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
