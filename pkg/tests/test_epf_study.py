import json
from datetime import date, timedelta

import numpy as np
import pytest

from odreg.epf.study import (
    StudyConfig,
    StudySnapshot,
    run_study,
    snapshot_from_bytes,
    snapshot_to_bytes,
)
from odreg.epf.synthetic import synthetic_market
from odreg.errors import ConfigError

START = date(2021, 1, 1)


def _config(tmp_path, ds, train_days=60, test_days=8, **kwargs):
    train_start = ds.days[20]
    train_end = ds.days[20 + train_days - 1]
    test_start = ds.days[20 + train_days]
    test_end = ds.days[20 + train_days + test_days - 1]
    defaults = dict(
        family="normal",
        estimation="ols",
        mode="online",
        train_start=train_start,
        train_end=train_end,
        test_start=test_start,
        test_end=test_end,
        hours=(0, 13),
        out_dir=str(tmp_path / "out"),
        designs={"location": "full", "scale": "intercept"},
    )
    defaults.update(kwargs)
    return StudyConfig(**defaults)


@pytest.fixture(scope="module")
def ds():
    return synthetic_market(110, start=START, seed=3)


def _read_rows(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def test_study_outputs_and_formats(tmp_path, ds):
    config = _config(tmp_path, ds)
    summary = run_study(ds, config)
    out = tmp_path / "out"
    for name in ("forecasts.csv", "scores.csv", "dm_matrix.csv", "timing.json", "manifest.txt"):
        assert (out / name).exists()
    header, rows = _read_rows(out / "forecasts.csv")
    assert header[:7] == ["day", "hour", "model", "theta1", "theta2", "theta3", "theta4"]
    assert header[7] == "q01" and header[-2] == "q99" and header[-1] == "realized"
    assert len(rows) == 8 * 2
    assert summary["n_forecasts"] == 16
    timing = json.loads((out / "timing.json").read_text())
    assert timing["mode"] == "online"
    assert set(timing["hours"]) == {"0", "13"}
    manifest = (out / "manifest.txt").read_text()
    assert "feature_columns=37" in manifest
    # quantiles increase across the grid
    q = np.array([float(v) for v in rows[0][7:-1]])
    assert np.all(np.diff(q) >= 0)


def test_determinism_byte_identical(tmp_path, ds):
    c1 = _config(tmp_path / "a", ds)
    c2 = _config(tmp_path / "b", ds)
    run_study(ds, c1)
    run_study(ds, c2)
    for name in ("forecasts.csv", "scores.csv", "dm_matrix.csv"):
        a = (tmp_path / "a" / "out" / name).read_bytes()
        b = (tmp_path / "b" / "out" / name).read_bytes()
        assert a == b


def test_no_leakage_day_d_forecast_invariant(tmp_path, ds):
    config = _config(tmp_path / "base", ds, test_days=6)
    run_study(ds, config)
    perturbed = synthetic_market(110, start=START, seed=3)
    d_idx = ds.days.index(config.test_start) + 3
    perturbed.price[d_idx] += 500.0
    perturbed.fuels[d_idx] += 50.0
    config2 = _config(tmp_path / "pert", ds, test_days=6)
    run_study(perturbed, config2)
    day_iso = ds.days[d_idx].isoformat()
    _, rows_a = _read_rows(tmp_path / "base" / "out" / "forecasts.csv")
    _, rows_b = _read_rows(tmp_path / "pert" / "out" / "forecasts.csv")
    rows_a = [r for r in rows_a if r[0] == day_iso]
    rows_b = [r for r in rows_b if r[0] == day_iso]
    assert rows_a and len(rows_a) == len(rows_b)
    for ra, rb in zip(rows_a, rows_b):
        assert ra[:-1] == rb[:-1]  # all thetas and quantiles identical


def test_online_matches_batch_refit_for_frozen_scale(tmp_path, ds):
    # constant working weights and raw (unscaled) designs make the online
    # location coefficients exactly the batch normal-equation solution
    common = dict(
        designs={"location": "full", "scale": "fixed"},
        test_days=6,
        hours=(5,),
        scale_inputs=False,
    )
    online = _config(tmp_path / "on", ds, **common)
    batch = _config(tmp_path / "off", ds, mode="batch", **common)
    run_study(ds, online)
    run_study(ds, batch)
    _, rows_on = _read_rows(tmp_path / "on" / "out" / "forecasts.csv")
    _, rows_off = _read_rows(tmp_path / "off" / "out" / "forecasts.csv")
    for ra, rb in zip(rows_on, rows_off):
        assert float(ra[3]) == pytest.approx(float(rb[3]), abs=1e-6)


def test_hour_independence(tmp_path, ds):
    both = _config(tmp_path / "both", ds, hours=(0, 13), test_days=4)
    solo = _config(tmp_path / "solo", ds, hours=(13,), test_days=4)
    run_study(ds, both)
    run_study(ds, solo)
    _, rows_both = _read_rows(tmp_path / "both" / "out" / "forecasts.csv")
    _, rows_solo = _read_rows(tmp_path / "solo" / "out" / "forecasts.csv")
    rows_both_13 = [r for r in rows_both if r[1] == "13"]
    assert rows_both_13 == rows_solo


def test_empty_test_window(tmp_path, ds):
    config = _config(tmp_path, ds, test_days=1)
    config.test_start = ds.days[-1] + timedelta(days=30)
    config.test_end = ds.days[-1] + timedelta(days=40)
    summary = run_study(ds, config)
    assert summary["n_forecasts"] == 0
    header, rows = _read_rows(tmp_path / "out" / "forecasts.csv")
    assert rows == []
    scores = (tmp_path / "out" / "scores.csv").read_text().splitlines()
    assert scores[0].startswith("model,rmse")
    assert len(scores) == 1


def test_config_validation():
    with pytest.raises(ConfigError):
        StudyConfig(mode="stream").validate()
    with pytest.raises(ConfigError):
        StudyConfig(designs={"location": "everything"}).validate()
    with pytest.raises(ConfigError):
        StudyConfig(train_start=date(2020, 1, 1), train_end=date(2019, 1, 1)).validate()
    with pytest.raises(ConfigError):
        StudyConfig(hours=(25,)).validate()


def test_lasso_study_runs(tmp_path, ds):
    config = _config(
        tmp_path, ds, estimation="lasso", test_days=3, hours=(7,),
        gamma={"location": 0.99, "scale": 0.99}, grid_count=25,
    )
    summary = run_study(ds, config)
    assert summary["n_forecasts"] == 3
    assert np.isfinite(summary["scores"]["crps"])


def test_snapshot_container_round_trip(tmp_path, ds):
    from odreg.epf.study import run_hour

    config = _config(tmp_path, ds, test_days=2, hours=(4,))
    _, _, _, _, _, _, state = run_hour(ds, config, 4)
    snap = StudySnapshot(config=config, last_day=config.test_end, estimators={4: state})
    blob = snapshot_to_bytes(snap)
    back = snapshot_from_bytes(blob)
    assert back.last_day == snap.last_day
    assert back.config.family == config.family
    assert back.config.test_end == config.test_end
    assert back.estimators[4].betas[0].tobytes() == state.betas[0].tobytes()
    assert snapshot_to_bytes(back) == blob


def test_parallel_workers_match_sequential(tmp_path, ds):
    seq = _config(tmp_path / "seq", ds, hours=(0, 13), test_days=3)
    par = _config(tmp_path / "par", ds, hours=(0, 13), test_days=3, threads=2)
    run_study(ds, seq)
    run_study(ds, par)
    a = (tmp_path / "seq" / "out" / "forecasts.csv").read_bytes()
    b = (tmp_path / "par" / "out" / "forecasts.csv").read_bytes()
    assert a == b
