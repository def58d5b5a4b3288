"""Online model selection along the regularization path.

Tracks exponentially discounted residual sums of squares (in mean-square
form, one entry per lambda) and turns them into a Gaussian pseudo
log-likelihood that feeds a generalised information criterion.  Old RSS mass
is discounted with the same gamma-multiplier convention as the Gramian
recursions, so the selection statistics forget at the same rate as the
coefficients.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .gram import discount_vector
from .ocd import CoefficientPath


@dataclass(frozen=True)
class ICSpec:
    """Penalty triplet (nu0, nu1, nu2) of the generalised information criterion."""

    nu: tuple[float, float, float]


AIC = ICSpec((2.0, 0.0, 0.0))
BIC = ICSpec((0.0, 1.0, 0.0))
HQC = ICSpec((0.0, 0.0, 2.0))

_PRESETS = {"aic": AIC, "bic": BIC, "hqc": HQC}


def ic_from_name(name: str | ICSpec) -> ICSpec:
    if isinstance(name, ICSpec):
        return name
    try:
        return _PRESETS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown information criterion {name!r}; expected aic/bic/hqc")


def information_criterion(log_lik: float, k: int, n_eff: float, spec: ICSpec) -> float:
    """``-2 log L + nu0*k + nu1*k*log(n) + nu2*k*log(log(n))``.

    ``n_eff`` is the (effective, possibly discounted) sample size; ``k`` the
    number of nonzero coefficients.
    """
    nu0, nu1, nu2 = spec.nu
    if nu2 > 0 and n_eff <= 1:
        raise ValueError("log(log(n_eff)) undefined for n_eff <= 1")
    if k == 0:
        return -2.0 * log_lik
    penalty = nu0 * k
    if nu1 > 0:
        penalty += nu1 * k * math.log(n_eff)
    if nu2 > 0:
        penalty += nu2 * k * math.log(math.log(n_eff))
    return -2.0 * log_lik + penalty


def rss_to_loglik(rss: float, n_eff: float) -> float:
    """Gaussian profile log-likelihood ``-(n/2) log(RSS/n)``, constant dropped.

    The additive constant depends only on the data, so it cancels whenever
    models are ranked on the same observations.  A perfect fit is clamped to
    ``RSS = 1e-12`` and flagged.
    """
    if n_eff <= 0:
        raise ValueError("n_eff must be positive")
    if rss < 0:
        raise ValueError("rss must be nonnegative")
    if rss == 0.0:
        warnings.warn("zero RSS clamped to 1e-12 (degenerate perfect fit)", RuntimeWarning)
        rss = 1e-12
    return -0.5 * n_eff * math.log(rss / n_eff)


@dataclass(frozen=True)
class RssTracker:
    """Discounted mean-square working residuals, one entry per lambda."""

    rss: np.ndarray
    omega: float
    gamma: float

    @property
    def count(self) -> int:
        return self.rss.shape[0]


def init_tracker(count: int, gamma: float) -> RssTracker:
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"forget factor must be in (0, 1], got {gamma}")
    return RssTracker(rss=np.zeros(count), omega=0.0, gamma=float(gamma))


def update_rss(tracker: RssTracker, preds: np.ndarray, z: float, w: float) -> RssTracker:
    """Absorb one working observation into the per-lambda mean squares.

    ``rss' = (w (z - pred)^2 + gamma * rss * omega) / (w + gamma * omega)``.
    """
    preds = np.asarray(preds, dtype=float)
    if preds.shape[0] != tracker.count:
        raise ValueError("prediction vector does not match tracker length")
    if not (np.isfinite(w) and w > 0):
        raise ValueError(f"weight must be positive and finite, got {w}")
    resid = z - preds
    if not np.all(np.isfinite(resid)):
        raise ValueError("non-finite working residual")
    gamma = tracker.gamma
    new_omega = gamma * tracker.omega + w
    rss = (w * resid**2 + gamma * tracker.rss * tracker.omega) / new_omega
    return RssTracker(rss=rss, omega=new_omega, gamma=gamma)


def update_rss_block(
    tracker: RssTracker, preds: np.ndarray, z: np.ndarray, w: np.ndarray
) -> RssTracker:
    """Mini-batch form of :func:`update_rss` with per-row discounts.

    ``preds`` has shape (t, count); row ``i`` enters with discount
    ``gamma^(t-1-i)`` so the result matches ``t`` sequential updates.
    """
    preds = np.atleast_2d(np.asarray(preds, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    t = z.shape[0]
    if preds.shape != (t, tracker.count):
        raise ValueError("prediction block does not match tracker length")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be positive and finite")
    resid = z[:, None] - preds
    if not np.all(np.isfinite(resid)):
        raise ValueError("non-finite working residual")
    gamma = tracker.gamma
    f = discount_vector(gamma, t)
    fw = f * w
    new_omega = gamma**t * tracker.omega + float(fw.sum())
    rss = (fw @ resid**2 + gamma**t * tracker.rss * tracker.omega) / new_omega
    return RssTracker(rss=rss, omega=new_omega, gamma=gamma)


def select_lambda(
    tracker: RssTracker,
    path: CoefficientPath,
    spec: ICSpec,
    n_eff: float | None = None,
) -> int:
    """Index of the GIC-minimizing lambda; ties break toward larger lambda.

    ``k`` counts nonzero coefficients (intercept included).  ``n_eff``
    defaults to the tracker's discounted weight mass; callers tracking the
    observation count can pass the effective training length instead.
    """
    if path.betas.shape[0] != tracker.count:
        raise ValueError("tracker and path are not aligned")
    if tracker.count == 0:
        raise ValueError("empty path")
    if n_eff is None:
        n_eff = tracker.omega
    k = np.count_nonzero(path.betas, axis=1)
    gic = np.empty(tracker.count)
    for ell in range(tracker.count):
        ll = rss_to_loglik(max(tracker.rss[ell], 0.0) * n_eff, n_eff)
        gic[ell] = information_criterion(ll, int(k[ell]), n_eff, spec)
    return int(np.argmin(gic))


def select_lambda_min_rss(tracker: RssTracker) -> int:
    """Plain discounted-RSS minimizer (converges to the unpenalized fit)."""
    if tracker.count == 0:
        raise ValueError("empty path")
    return int(np.argmin(tracker.rss))
