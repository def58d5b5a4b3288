from datetime import date

import numpy as np
import pytest

from odreg.epf.data import load_dataset
from odreg.epf.synthetic import dataset_to_csv, synthetic_market
from odreg.errors import DataError

HEADER = "timestamp,price,load_fc,res_fc,eua,gas,coal,oil"


def _rows(day, hours, price=None, fuels="25,20,70,60"):
    out = []
    for h in hours:
        p = price if price is not None else 40.0 + h
        out.append(f"2021-03-0{day}T{h:02d}:00:00,{p},30000,12000,{fuels}")
    return out


def _write(tmp_path, lines, name="data.csv"):
    path = tmp_path / name
    path.write_text(HEADER + "\n" + "\n".join(lines) + "\n")
    return path


def test_two_full_days(tmp_path):
    path = _write(tmp_path, _rows(1, range(24)) + _rows(2, range(24)))
    ds = load_dataset(path)
    assert ds.n_days == 2
    assert ds.days[0] == date(2021, 3, 1)
    assert ds.price.shape == (2, 24)
    assert ds.price[0, 5] == pytest.approx(45.0)
    assert ds.weekday[0] == 0  # 2021-03-01 is a Monday


def test_missing_single_hour_interpolated(tmp_path):
    rows = _rows(1, range(24)) + _rows(2, [h for h in range(24) if h != 5])
    path = _write(tmp_path, rows)
    ds = load_dataset(path)
    assert ds.n_days == 2
    assert ds.price[1, 5] == pytest.approx(0.5 * (ds.price[1, 4] + ds.price[1, 6]))
    assert any("interpolated" in note for note in ds.report)


def test_gap_longer_than_three_hours_errors(tmp_path):
    rows = _rows(1, range(24)) + _rows(2, [h for h in range(24) if h not in (5, 6, 7, 8)])
    with pytest.raises(DataError, match="gap"):
        load_dataset(_write(tmp_path, rows))


def test_shuffled_timestamps_error(tmp_path):
    rows = _rows(1, range(24))
    rows[3], rows[4] = rows[4], rows[3]
    with pytest.raises(DataError, match="not increasing"):
        load_dataset(_write(tmp_path, rows))


def test_duplicated_autumn_hour_averaged(tmp_path):
    rows = _rows(1, range(24))
    dup = "2021-03-01T03:00:00,100.0,30000,12000,25,20,70,60"
    rows.insert(4, dup)
    ds = load_dataset(_write(tmp_path, rows))
    assert ds.price[0, 3] == pytest.approx(0.5 * (43.0 + 100.0))
    assert any("averaged duplicated hour" in note for note in ds.report)


def test_schema_mismatch_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,price\n2021-01-01T00:00:00,1\n")
    with pytest.raises(DataError, match="schema"):
        load_dataset(path)


def test_partial_days_trimmed(tmp_path):
    rows = _rows(1, range(12, 24)) + _rows(2, range(24)) + _rows(3, range(0, 7))
    ds = load_dataset(_write(tmp_path, rows))
    assert ds.n_days == 1
    assert ds.days[0] == date(2021, 3, 2)
    assert sum("trimmed" in note for note in ds.report) == 2


def test_fuel_forward_fill(tmp_path):
    rows = _rows(1, range(24)) + _rows(2, range(24), fuels=",,,")
    ds = load_dataset(_write(tmp_path, rows))
    np.testing.assert_allclose(ds.fuels[1], ds.fuels[0])
    assert any("forward-filled" in note for note in ds.report)


def test_bad_value_errors(tmp_path):
    rows = _rows(1, range(24))
    rows[2] = rows[2].replace("30000", "not-a-number")
    with pytest.raises(DataError, match="bad value"):
        load_dataset(_write(tmp_path, rows))


def test_off_grid_timestamp_errors(tmp_path):
    rows = _rows(1, range(24))
    rows.insert(4, "2021-03-01T03:30:00,10,30000,12000,25,20,70,60")
    with pytest.raises(DataError, match="hourly grid"):
        load_dataset(_write(tmp_path, rows))


def test_synthetic_round_trip(tmp_path):
    ds = synthetic_market(30, seed=1)
    path = tmp_path / "synthetic.csv"
    dataset_to_csv(ds, path)
    back = load_dataset(path)
    assert back.n_days == 30
    np.testing.assert_allclose(back.price, ds.price, atol=1e-5)
    np.testing.assert_allclose(back.fuels, ds.fuels, atol=1e-3)
