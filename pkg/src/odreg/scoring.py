"""Proper scoring rules and forecast comparison for predictive distributions.

Scores operate on records carrying the predictive distribution parameters
and the realized value.  Aggregates are plain means over per-observation
panels, which are retained day-by-hour so that forecast accuracy of two
models can be compared with the Diebold-Mariano test.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .families import get_family

_LOG_DENSITY_FLOOR = math.log(1e-300)
DEFAULT_QUANTILE_GRID = np.round(np.arange(0.01, 1.00, 0.01), 2)


@dataclass(frozen=True)
class ForecastRecord:
    """One day-ahead predictive distribution and its realized value."""

    day: int
    hour: int
    family: str
    theta: np.ndarray
    realized: float

    def __post_init__(self):
        if not 0 <= self.hour <= 23:
            raise ValueError(f"hour {self.hour} out of range")
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        get_family(self.family).check_domain(self.theta)


def _family_and_thetas(records):
    if not records:
        raise ValueError("no forecast records")
    names = {r.family for r in records}
    if len(names) > 1:
        raise ValueError(f"records mix families: {sorted(names)}")
    family = get_family(names.pop())
    theta = np.stack([r.theta for r in records])
    realized = np.array([r.realized for r in records])
    return family, theta, realized


def point_scores(records) -> tuple[float, float]:
    """(RMSE of the predictive mean, MAE of the predictive median).

    When the predictive mean does not exist (Student-t with df <= 1) the
    RMSE is reported as NaN and a warning is emitted.
    """
    family, theta, realized = _family_and_thetas(records)
    try:
        means = np.asarray(family.mean(theta), dtype=float)
        rmse = float(np.sqrt(np.mean((means - realized) ** 2)))
    except ValueError as exc:
        warnings.warn(f"RMSE unavailable: {exc}", RuntimeWarning)
        rmse = float("nan")
    medians = np.asarray(family.quantile(0.5, theta), dtype=float)
    mae = float(np.mean(np.abs(medians - realized)))
    return rmse, mae


def interval_scores(records, alpha: float, miss_factor: float | None = None):
    """Coverage and interval (Winkler) score of the central (1-alpha) interval.

    The miss penalty defaults to the strictly proper ``2 / alpha``; pass an
    explicit ``miss_factor`` (e.g. ``alpha / 2``) for compatibility with
    other conventions.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if miss_factor is None:
        miss_factor = 2.0 / alpha
    family, theta, realized = _family_and_thetas(records)
    lower = np.asarray(family.quantile(alpha / 2.0, theta), dtype=float)
    upper = np.asarray(family.quantile(1.0 - alpha / 2.0, theta), dtype=float)
    covered = (lower <= realized) & (realized <= upper)
    width = upper - lower
    score = width + miss_factor * (
        np.where(realized < lower, lower - realized, 0.0)
        + np.where(realized > upper, realized - upper, 0.0)
    )
    return float(covered.mean()), float(score.mean())


def pinball_loss(realized, quantile_value, alpha):
    """Two-case pinball loss of one quantile forecast."""
    realized = np.asarray(realized, dtype=float)
    quantile_value = np.asarray(quantile_value, dtype=float)
    return np.where(
        realized >= quantile_value,
        alpha * (realized - quantile_value),
        (1.0 - alpha) * (quantile_value - realized),
    )


def crps_pinball(records, quantile_grid=None, factor: float = 2.0) -> float:
    """CRPS approximated by the average pinball loss over a quantile grid.

    ``factor = 2`` gives the proper CRPS scale; ``factor = 1`` halves it
    (the average-pinball convention used in some forecasting competitions).
    """
    if quantile_grid is None:
        quantile_grid = DEFAULT_QUANTILE_GRID
    grid = np.asarray(quantile_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("quantile grid is empty")
    if np.any(grid <= 0) or np.any(grid >= 1) or np.any(np.diff(grid) <= 0):
        raise ValueError("quantile grid must be sorted strictly inside (0, 1)")
    family, theta, realized = _family_and_thetas(records)
    q = np.stack([np.asarray(family.quantile(a, theta), dtype=float) for a in grid], axis=1)
    losses = pinball_loss(realized[:, None], q, grid[None, :])
    return float(factor * losses.mean())


def log_score(records) -> float:
    """Mean negative predictive log-density; lower is better.

    Density underflow is clamped at ``-log(1e-300)`` per record and flagged.
    """
    family, theta, realized = _family_and_thetas(records)
    logps = np.asarray(family.log_pdf(realized, theta), dtype=float)
    if np.any(logps < _LOG_DENSITY_FLOOR):
        warnings.warn("predictive density underflow clamped", RuntimeWarning)
        logps = np.maximum(logps, _LOG_DENSITY_FLOOR)
    return float(-logps.mean())


def dm_test(scores_a: np.ndarray, scores_b: np.ndarray) -> tuple[float, float]:
    """One-sided Diebold-Mariano test on daily l1-aggregated score panels.

    ``scores_a`` and ``scores_b`` are (days, hours) panels of per-hour
    scores.  The loss differential is ``Delta_d = |S_d^A|_1 - |S_d^B|_1``;
    the statistic is ``mean(Delta) / (sd(Delta) / sqrt(D))`` and the
    p-value ``1 - Phi(statistic)``.  Small p-values reject the null that
    model A scores no worse than B on average, i.e. B forecasts
    significantly better.  A degenerate zero-variance differential yields
    p = 0.5 when identically zero, else 0 or 1 by sign.
    """
    a = np.atleast_2d(np.asarray(scores_a, dtype=float))
    b = np.atleast_2d(np.asarray(scores_b, dtype=float))
    if a.shape != b.shape:
        raise ValueError("score panels differ in shape")
    d = a.shape[0]
    if d < 30:
        raise ValueError(f"need at least 30 days for the DM test, got {d}")
    delta = np.abs(a).sum(axis=1) - np.abs(b).sum(axis=1)
    mean = float(delta.mean())
    sd = float(delta.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 0.5
        stat = math.inf if mean > 0 else -math.inf
        return stat, 0.0 if mean > 0 else 1.0
    stat = mean / (sd / math.sqrt(d))
    return stat, float(1.0 - ndtr(stat))


@dataclass
class ScoreTable:
    """Aggregated scores per model plus the per-(day, hour) panels."""

    models: list
    metrics: dict
    panels: dict = field(default_factory=dict)

    COLUMNS = (
        "rmse", "mae",
        "cr50", "cr75", "cr90", "cr95",
        "is50", "is75", "is90", "is95",
        "log_score", "crps",
    )

    def to_csv(self) -> str:
        lines = ["model," + ",".join(self.COLUMNS)]
        for model in self.models:
            row = self.metrics[model]
            lines.append(model + "," + ",".join(_fmt(row[c]) for c in self.COLUMNS))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return f"{v:.12g}"


def build_score_table(
    records_by_model: dict,
    alphas=(0.5, 0.25, 0.1, 0.05),
    quantile_grid=None,
    crps_factor: float = 2.0,
    is_factor: str = "2/alpha",
) -> ScoreTable:
    """Score every model and retain daily panels for significance testing.

    ``alphas`` are the miss levels of the 50/75/90/95% central intervals.
    ``is_factor`` selects the interval-score miss penalty: the strictly
    proper ``"2/alpha"`` (default) or the lenient ``"alpha/2"`` variant.
    """
    if is_factor not in ("2/alpha", "alpha/2"):
        raise ValueError("is_factor must be '2/alpha' or 'alpha/2'")
    models = sorted(records_by_model)
    metrics: dict = {}
    panels: dict = {}
    for model in models:
        records = sorted(records_by_model[model], key=lambda r: (r.day, r.hour))
        family, theta, realized = _family_and_thetas(records)
        rmse, mae = point_scores(records)
        row = {"rmse": rmse, "mae": mae}
        for alpha, label in zip(alphas, ("50", "75", "90", "95")):
            mf = 2.0 / alpha if is_factor == "2/alpha" else alpha / 2.0
            cr, isc = interval_scores(records, alpha, miss_factor=mf)
            row[f"cr{label}"] = cr
            row[f"is{label}"] = isc
        row["log_score"] = log_score(records)
        row["crps"] = crps_pinball(records, quantile_grid, factor=crps_factor)
        metrics[model] = row

        days = sorted({r.day for r in records})
        day_pos = {d: i for i, d in enumerate(days)}
        crps_panel = np.zeros((len(days), 24))
        grid = DEFAULT_QUANTILE_GRID if quantile_grid is None else np.asarray(quantile_grid)
        q = np.stack([np.asarray(family.quantile(a, theta), dtype=float) for a in grid], axis=1)
        losses = crps_factor * pinball_loss(realized[:, None], q, grid[None, :]).mean(axis=1)
        for rec, loss in zip(records, losses):
            crps_panel[day_pos[rec.day], rec.hour] = loss
        panels[model] = {"crps": crps_panel}
    return ScoreTable(models=models, metrics=metrics, panels=panels)


def dm_matrix(table: ScoreTable, metric: str = "crps"):
    """Pairwise one-sided DM p-values; entry (row A, col B) small means B beats A."""
    models = table.models
    n = len(models)
    out = np.full((n, n), 0.5)
    for i, a in enumerate(models):
        for j, b in enumerate(models):
            if i == j:
                continue
            _, p = dm_test(table.panels[a][metric], table.panels[b][metric])
            out[i, j] = p
    return models, out


def dm_matrix_to_csv(models, matrix) -> str:
    lines = ["model," + ",".join(models)]
    for i, model in enumerate(models):
        lines.append(model + "," + ",".join(_fmt(v) for v in matrix[i]))
    return "\n".join(lines) + "\n"
