import numpy as np
import pytest
from scipy import stats

from odreg.families import get_family
from odreg.scoring import (
    DEFAULT_QUANTILE_GRID,
    ForecastRecord,
    build_score_table,
    crps_pinball,
    dm_matrix,
    dm_matrix_to_csv,
    dm_test,
    interval_scores,
    log_score,
    pinball_loss,
    point_scores,
)


def _records(mus, sigmas, realized, family="normal"):
    return [
        ForecastRecord(day=i // 24, hour=i % 24, family=family,
                       theta=np.array([m, s]), realized=r)
        for i, (m, s, r) in enumerate(zip(mus, sigmas, realized))
    ]


def gaussian_crps(mu, sigma, y):
    """Closed-form CRPS of a Gaussian forecast (oracle)."""
    z = (y - mu) / sigma
    return sigma * (z * (2 * stats.norm.cdf(z) - 1) + 2 * stats.norm.pdf(z) - 1 / np.sqrt(np.pi))


def test_point_scores_perfect():
    recs = _records([1.0, 2.0], [1.0, 1.0], [1.0, 2.0])
    rmse, mae = point_scores(recs)
    assert rmse == 0.0 and mae == 0.0


def test_point_scores_single_record():
    recs = _records([2.0], [1.0], [5.0])
    rmse, mae = point_scores(recs)
    assert rmse == pytest.approx(3.0)
    assert mae == pytest.approx(3.0)


def test_point_scores_symmetric_median_equals_mean():
    rng = np.random.default_rng(0)
    mus = rng.normal(size=40)
    recs = _records(mus, np.full(40, 1.3), rng.normal(size=40))
    _, mae = point_scores(recs)
    mae_via_mean = np.mean(np.abs(mus - np.array([r.realized for r in recs])))
    assert mae == pytest.approx(mae_via_mean)


def test_rmse_flagged_for_undefined_mean():
    recs = [
        ForecastRecord(0, 0, "t", np.array([0.0, 1.0, 0.8]), 1.0),
        ForecastRecord(0, 1, "t", np.array([0.0, 1.0, 0.9]), -1.0),
    ]
    with pytest.warns(RuntimeWarning):
        rmse, mae = point_scores(recs)
    assert np.isnan(rmse)
    assert np.isfinite(mae)


def test_interval_score_no_penalty_inside():
    recs = _records([0.0], [1.0], [0.5])
    family = get_family("normal")
    lo = family.quantile(0.05, np.array([0.0, 1.0]))
    hi = family.quantile(0.95, np.array([0.0, 1.0]))
    coverage, score = interval_scores(recs, 0.1)
    assert coverage == 1.0
    assert score == pytest.approx(hi - lo)


def test_interval_score_miss_penalty_two_over_alpha():
    # realized above the upper bound: width + (2/alpha) * overshoot
    theta = np.array([0.5, 0.30397841595588447])  # 90% interval ~ [0, 1]
    realized = 2.0
    recs = [ForecastRecord(0, 0, "normal", theta, realized)]
    family = get_family("normal")
    lo, hi = family.quantile(0.05, theta), family.quantile(0.95, theta)
    coverage, score = interval_scores(recs, 0.1)
    assert coverage == 0.0
    assert score == pytest.approx((hi - lo) + (2 / 0.1) * (realized - hi))
    assert score == pytest.approx(21.0, abs=1e-6)


def test_interval_score_compat_factor():
    theta = np.array([0.5, 0.30397841595588447])
    recs = [ForecastRecord(0, 0, "normal", theta, 2.0)]
    family = get_family("normal")
    lo, hi = family.quantile(0.05, theta), family.quantile(0.95, theta)
    _, lenient = interval_scores(recs, 0.1, miss_factor=0.1 / 2)
    assert lenient == pytest.approx((hi - lo) + 0.05 * (2.0 - hi))


def test_interval_score_degenerate_point_forecast():
    recs = _records([1.0], [1e-12], [1.0])
    coverage, score = interval_scores(recs, 0.1)
    assert coverage == 1.0
    assert score == pytest.approx(0.0, abs=1e-10)


def test_pinball_median_case():
    assert pinball_loss(3.0, 1.0, 0.5) == pytest.approx(0.5 * 2.0)
    assert pinball_loss(-1.0, 1.0, 0.5) == pytest.approx(0.5 * 2.0)


def test_crps_grid_matches_gaussian_closed_form():
    rng = np.random.default_rng(1)
    n = 4000
    mus = rng.normal(size=n)
    sigmas = rng.uniform(0.5, 2.0, size=n)
    realized = mus + sigmas * rng.normal(size=n)
    recs = _records(mus, sigmas, realized)
    approx = crps_pinball(recs)
    exact = np.mean(gaussian_crps(mus, sigmas, realized))
    assert approx == pytest.approx(exact, rel=0.01)


def test_crps_perfect_deterministic_forecast():
    recs = _records([2.0], [1e-12], [2.0])
    assert crps_pinball(recs) == pytest.approx(0.0, abs=1e-10)


def test_crps_grid_refinement_stable():
    rng = np.random.default_rng(2)
    n = 500
    mus = rng.normal(size=n)
    recs = _records(mus, np.full(n, 1.0), mus + rng.normal(size=n))
    coarse = crps_pinball(recs, DEFAULT_QUANTILE_GRID)
    fine = crps_pinball(recs, np.linspace(0.005, 0.995, 199))
    assert abs(fine - coarse) / coarse < 0.005


def test_crps_factor_convention():
    recs = _records([0.0, 1.0], [1.0, 2.0], [0.3, 0.7])
    assert crps_pinball(recs, factor=1.0) == pytest.approx(0.5 * crps_pinball(recs))


def test_log_score_standard_normal():
    recs = _records([0.0], [1.0], [0.0])
    assert log_score(recs) == pytest.approx(0.5 * np.log(2 * np.pi), abs=1e-4)


def test_log_score_matches_family_logpdf():
    rng = np.random.default_rng(3)
    mus = rng.normal(size=30)
    sigmas = rng.uniform(0.5, 2, size=30)
    realized = rng.normal(size=30)
    recs = _records(mus, sigmas, realized)
    family = get_family("normal")
    theta = np.column_stack([mus, sigmas])
    assert log_score(recs) == pytest.approx(-family.log_pdf(realized, theta).mean())


def test_log_score_tail_is_large_and_clamped():
    recs = _records([0.0], [1.0], [40.0])
    with pytest.warns(RuntimeWarning):
        score = log_score(recs)
    assert score == pytest.approx(-np.log(1e-300))


def test_dm_identical_panels_degenerate_symmetric():
    panel = np.random.default_rng(4).normal(size=(40, 24)) ** 2
    stat, p = dm_test(panel, panel)
    assert stat == 0.0 and p == 0.5


def test_dm_detects_uniformly_worse_model():
    rng = np.random.default_rng(5)
    base = rng.uniform(1, 2, size=(200, 24))
    worse = base + 0.5 + 0.05 * rng.normal(size=(200, 24))
    stat, p = dm_test(worse, base)
    assert stat > 0 and p < 0.05
    stat_rev, p_rev = dm_test(base, worse)
    assert stat_rev == pytest.approx(-stat)
    assert p_rev > 0.95


def test_dm_requires_thirty_days():
    panel = np.ones((10, 24))
    with pytest.raises(ValueError):
        dm_test(panel, panel)


def test_propriety_smoke():
    # the true predictive law scores no worse than a shifted one, on average
    rng = np.random.default_rng(6)
    n = 10_000
    mus = rng.normal(size=n)
    sig = np.full(n, 1.0)
    realized = mus + rng.normal(size=n)
    true_recs = _records(mus, sig, realized)
    shifted_recs = _records(mus + 1.0, sig, realized)
    assert crps_pinball(true_recs) < crps_pinball(shifted_recs)
    assert log_score(true_recs) < log_score(shifted_recs)
    assert interval_scores(true_recs, 0.1)[1] < interval_scores(shifted_recs, 0.1)[1]


def test_score_table_aggregates_match_panels():
    rng = np.random.default_rng(7)
    days, hours = 35, 24
    n = days * hours
    mus = rng.normal(size=n)
    recs = _records(mus, np.full(n, 1.0), mus + rng.normal(size=n))
    table = build_score_table({"m": recs})
    panel = table.panels["m"]["crps"]
    assert table.metrics["m"]["crps"] == pytest.approx(panel.mean(), abs=1e-12)
    csv = table.to_csv()
    assert csv.startswith("model,rmse,mae,cr50")
    assert csv.count("\n") == 2


def test_dm_matrix_round_trip():
    rng = np.random.default_rng(8)
    days, hours = 40, 24
    n = days * hours
    mus = rng.normal(size=n)
    realized = mus + rng.normal(size=n)
    recs_a = _records(mus, np.full(n, 1.0), realized)
    recs_b = _records(mus + 0.8, np.full(n, 1.0), realized)
    table = build_score_table({"good": recs_a, "bad": recs_b})
    models, matrix = dm_matrix(table)
    assert models == ["bad", "good"]
    bad_row = matrix[0, 1]  # "good" beats "bad"
    assert bad_row < 0.05
    assert matrix[1, 0] > 0.5
    text = dm_matrix_to_csv(models, matrix)
    assert text.splitlines()[0] == "model,bad,good"


def test_records_validate_inputs():
    with pytest.raises(ValueError):
        ForecastRecord(0, 24, "normal", np.array([0.0, 1.0]), 0.0)
    with pytest.raises(ValueError):
        ForecastRecord(0, 0, "normal", np.array([0.0, -1.0]), 0.0)
    with pytest.raises(ValueError):
        point_scores([])
