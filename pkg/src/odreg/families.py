"""Parametric response families for distributional regression.

Each family exposes the capability set the fitting engine needs: log-density,
per-parameter first and second log-likelihood derivatives, default links,
starting values, CDF/quantile and the analytic mean.  Parameters are passed
as an array whose last axis has length ``n_params``; all methods broadcast
over leading axes.

Implemented families:

* ``normal``     -- mean / standard deviation, links (identity, log)
* ``normal_mv``  -- mean / variance with identity links; its working
                    responses collapse to ``y`` and the squared residuals,
                    which makes it the bridge to classic IRLS variance
                    fitting (the curvature used for the variance parameter
                    is the averaged one, ``-1/(2 v^2)``, exactly so that
                    this collapse is literal)
* ``t``          -- location / scale / degrees of freedom
* ``jsu``        -- Johnson's S_U in the classical (location, scale, tail,
                    skew) parameterization
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import special, stats

from .links import IDENTITY, LOG, LogShiftLink

_LOG_2PI = np.log(2.0 * np.pi)
_SD_FLOOR = 1e-6


def _split(theta, n_params):
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != n_params:
        raise ValueError(f"theta last axis must have length {n_params}")
    return tuple(theta[..., k] for k in range(n_params))


class DistributionFamily:
    """Base class; concrete families fill in the derivative table."""

    name: str = ""
    n_params: int = 0
    links: tuple = ()
    param_names: tuple = ()

    def check_domain(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        for k in range(self.n_params):
            low = self.links[k].lower_bound
            if np.any(theta[..., k] <= low):
                raise ValueError(
                    f"{self.name}: parameter {self.param_names[k]} out of domain (> {low})"
                )

    def clamp(self, theta_k, k, margin=1e-10):
        """Pull a parameter back inside its open domain after link inversion."""
        low = self.links[k].lower_bound
        if low == -np.inf:
            return np.asarray(theta_k, dtype=float)
        return np.maximum(theta_k, low + margin)

    def derivatives(self, y, theta, k):
        """First and second log-likelihood derivative w.r.t. parameter ``k``."""
        return self.dl_dtheta(y, theta, k), self.d2l_dtheta2(y, theta, k)

    # subclasses implement:
    #   log_pdf, dl_dtheta, d2l_dtheta2, cdf, quantile, mean, initial_values


class Normal(DistributionFamily):
    """Gaussian in mean / standard deviation."""

    name = "normal"
    n_params = 2
    links = (IDENTITY, LOG)
    param_names = ("loc", "scale")

    def log_pdf(self, y, theta):
        mu, sigma = _split(theta, 2)
        z = (y - mu) / sigma
        return -0.5 * _LOG_2PI - np.log(sigma) - 0.5 * z**2

    def dl_dtheta(self, y, theta, k):
        mu, sigma = _split(theta, 2)
        r = y - mu
        if k == 0:
            return r / sigma**2
        return (r**2 - sigma**2) / sigma**3

    def d2l_dtheta2(self, y, theta, k):
        mu, sigma = _split(theta, 2)
        if k == 0:
            return -1.0 / sigma**2 * np.ones_like(np.asarray(y, dtype=float))
        return (sigma**2 - 3.0 * (y - mu) ** 2) / sigma**4

    def cdf(self, y, theta):
        mu, sigma = _split(theta, 2)
        return stats.norm.cdf(y, loc=mu, scale=sigma)

    def quantile(self, prob, theta):
        _check_prob(prob)
        mu, sigma = _split(theta, 2)
        return stats.norm.ppf(prob, loc=mu, scale=sigma)

    def mean(self, theta):
        return _split(theta, 2)[0]

    def initial_values(self, y):
        y = np.asarray(y, dtype=float)
        if y.size < 2:
            raise ValueError("need at least two observations for starting values")
        sd = float(np.std(y, ddof=1))
        if sd < _SD_FLOOR:
            warnings.warn("zero-variance sample; scale floored at 1e-6", RuntimeWarning)
            sd = _SD_FLOOR
        return np.array([float(np.mean(y)), sd])


class NormalMeanVariance(DistributionFamily):
    """Gaussian in mean / variance with identity links.

    The second derivative for the variance parameter is the averaged
    curvature ``-1/(2 v^2)`` rather than the pointwise one; with it, the
    Newton working response for the variance is exactly the squared
    residual, which reproduces iteratively reweighted variance regression.
    """

    name = "normal_mv"
    n_params = 2
    links = (IDENTITY, IDENTITY)
    param_names = ("loc", "var")

    def check_domain(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        if np.any(theta[..., 1] <= 0):
            raise ValueError("normal_mv: variance must be positive")

    def clamp(self, theta_k, k, margin=1e-10):
        if k == 1:
            return np.maximum(theta_k, margin)
        return np.asarray(theta_k, dtype=float)

    def log_pdf(self, y, theta):
        mu, v = _split(theta, 2)
        return -0.5 * _LOG_2PI - 0.5 * np.log(v) - 0.5 * (y - mu) ** 2 / v

    def dl_dtheta(self, y, theta, k):
        mu, v = _split(theta, 2)
        r = y - mu
        if k == 0:
            return r / v
        return 0.5 * (r**2 - v) / v**2

    def d2l_dtheta2(self, y, theta, k):
        mu, v = _split(theta, 2)
        ones = np.ones_like(np.asarray(y, dtype=float))
        if k == 0:
            return -ones / v
        return -0.5 * ones / v**2

    def cdf(self, y, theta):
        mu, v = _split(theta, 2)
        return stats.norm.cdf(y, loc=mu, scale=np.sqrt(v))

    def quantile(self, prob, theta):
        _check_prob(prob)
        mu, v = _split(theta, 2)
        return stats.norm.ppf(prob, loc=mu, scale=np.sqrt(v))

    def mean(self, theta):
        return _split(theta, 2)[0]

    def initial_values(self, y):
        y = np.asarray(y, dtype=float)
        if y.size < 2:
            raise ValueError("need at least two observations for starting values")
        sd = float(np.std(y, ddof=1))
        if sd < _SD_FLOOR:
            warnings.warn("zero-variance sample; scale floored at 1e-6", RuntimeWarning)
            sd = _SD_FLOOR
        return np.array([float(np.mean(y)), sd**2])


class StudentT(DistributionFamily):
    """Location-scale Student-t; degrees of freedom linked above 2."""

    name = "t"
    n_params = 3
    links = (IDENTITY, LOG, LogShiftLink(2.0))
    param_names = ("loc", "scale", "df")

    def check_domain(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        if np.any(theta[..., 1] <= 0):
            raise ValueError("t: scale must be positive")
        if np.any(theta[..., 2] <= 0):
            raise ValueError("t: degrees of freedom must be positive")

    def clamp(self, theta_k, k, margin=1e-10):
        if k == 1:
            return np.maximum(theta_k, margin)
        if k == 2:
            return np.maximum(theta_k, 2.0 + margin)
        return np.asarray(theta_k, dtype=float)

    def log_pdf(self, y, theta):
        mu, sigma, nu = _split(theta, 3)
        z = (y - mu) / sigma
        return (
            special.gammaln(0.5 * (nu + 1.0))
            - special.gammaln(0.5 * nu)
            - 0.5 * np.log(np.pi * nu)
            - np.log(sigma)
            - 0.5 * (nu + 1.0) * np.log1p(z**2 / nu)
        )

    def dl_dtheta(self, y, theta, k):
        mu, sigma, nu = _split(theta, 3)
        z = (y - mu) / sigma
        d = nu + z**2
        if k == 0:
            return (nu + 1.0) * z / (sigma * d)
        if k == 1:
            return nu * (z**2 - 1.0) / (sigma * d)
        return (
            0.5 * (special.digamma(0.5 * (nu + 1.0)) - special.digamma(0.5 * nu))
            - 0.5 / nu
            - 0.5 * np.log1p(z**2 / nu)
            + 0.5 * (nu + 1.0) * z**2 / (nu * d)
        )

    def d2l_dtheta2(self, y, theta, k):
        mu, sigma, nu = _split(theta, 3)
        z = (y - mu) / sigma
        d = nu + z**2
        if k == 0:
            return -(nu + 1.0) * (nu - z**2) / (sigma**2 * d**2)
        if k == 1:
            return nu * (nu - (3.0 * nu + 1.0) * z**2 - z**4) / (sigma**2 * d**2)
        return (
            0.25 * (special.polygamma(1, 0.5 * (nu + 1.0)) - special.polygamma(1, 0.5 * nu))
            + 0.5 / nu**2
            + 0.5 * z**2 / (nu * d)
            - 0.5 * z**2 * (nu**2 + 2.0 * nu + z**2) / (nu**2 * d**2)
        )

    def cdf(self, y, theta):
        mu, sigma, nu = _split(theta, 3)
        return stats.t.cdf(y, df=nu, loc=mu, scale=sigma)

    def quantile(self, prob, theta):
        _check_prob(prob)
        mu, sigma, nu = _split(theta, 3)
        return stats.t.ppf(prob, df=nu, loc=mu, scale=sigma)

    def mean(self, theta):
        mu, _, nu = _split(theta, 3)
        if np.any(nu <= 1):
            raise ValueError("t: mean undefined for df <= 1")
        return mu

    def initial_values(self, y):
        y = np.asarray(y, dtype=float)
        if y.size < 2:
            raise ValueError("need at least two observations for starting values")
        sd = float(np.std(y, ddof=1))
        if sd < _SD_FLOOR:
            warnings.warn("zero-variance sample; scale floored at 1e-6", RuntimeWarning)
            sd = _SD_FLOOR
        return np.array([float(np.mean(y)), sd, 10.0])


class JohnsonSU(DistributionFamily):
    """Johnson's S_U in the classical (location, scale, tail, skew) form.

    With ``u = (y - xi) / lam`` the transform ``W = skew + tail * asinh(u)``
    is standard normal; ``tail`` (delta) controls the kurtosis, ``skew``
    (gamma) the asymmetry.
    """

    name = "jsu"
    n_params = 4
    links = (IDENTITY, LOG, LOG, IDENTITY)
    param_names = ("loc", "scale", "tail", "skew")

    def check_domain(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        if np.any(theta[..., 1] <= 0):
            raise ValueError("jsu: scale must be positive")
        if np.any(theta[..., 2] <= 0):
            raise ValueError("jsu: tail must be positive")

    @staticmethod
    def _uscw(y, theta):
        xi, lam, tail, skew = _split(theta, 4)
        u = (y - xi) / lam
        s = np.arcsinh(u)
        c2 = 1.0 + u**2
        w = skew + tail * s
        return xi, lam, tail, skew, u, s, c2, w

    def log_pdf(self, y, theta):
        _, lam, tail, _, _, _, c2, w = self._uscw(y, theta)
        return np.log(tail) - np.log(lam) - 0.5 * _LOG_2PI - 0.5 * np.log(c2) - 0.5 * w**2

    def dl_dtheta(self, y, theta, k):
        _, lam, tail, _, u, s, c2, w = self._uscw(y, theta)
        c = np.sqrt(c2)
        if k == 0:
            return (u / c2 + w * tail / c) / lam
        if k == 1:
            return (-1.0 + u**2 / c2 + w * tail * u / c) / lam
        if k == 2:
            return 1.0 / tail - w * s
        return -w

    def d2l_dtheta2(self, y, theta, k):
        _, lam, tail, _, u, s, c2, w = self._uscw(y, theta)
        c = np.sqrt(c2)
        if k == 0:
            return (-(1.0 - u**2) / c2**2 - tail**2 / c2 + tail * w * u / (c2 * c)) / lam**2
        if k == 1:
            h = -1.0 + u**2 / c2 + w * tail * u / c
            hp = 2.0 * u / c2**2 + tail**2 * u / c2 + tail * w / (c2 * c)
            return -(h + u * hp) / lam**2
        if k == 2:
            return -1.0 / tail**2 - s**2
        return -np.ones_like(w)

    def cdf(self, y, theta):
        _, _, tail, skew, u, s, _, _ = self._uscw(y, theta)
        return special.ndtr(skew + tail * s)

    def quantile(self, prob, theta):
        _check_prob(prob)
        xi, lam, tail, skew = _split(theta, 4)
        zp = special.ndtri(prob)
        return xi + lam * np.sinh((zp - skew) / tail)

    def mean(self, theta):
        xi, lam, tail, skew = _split(theta, 4)
        return xi - lam * np.exp(0.5 / tail**2) * np.sinh(skew / tail)

    def initial_values(self, y):
        y = np.asarray(y, dtype=float)
        if y.size < 2:
            raise ValueError("need at least two observations for starting values")
        sd = float(np.std(y, ddof=1))
        if sd < _SD_FLOOR:
            warnings.warn("zero-variance sample; scale floored at 1e-6", RuntimeWarning)
            sd = _SD_FLOOR
        return np.array([float(np.median(y)), sd, 1.0, 0.0])


_FAMILIES = {
    cls.name: cls for cls in (Normal, NormalMeanVariance, StudentT, JohnsonSU)
}


def get_family(name: str) -> DistributionFamily:
    """Look up a family instance by its string id."""
    if isinstance(name, DistributionFamily):
        return name
    try:
        return _FAMILIES[name]()
    except KeyError:
        raise ValueError(
            f"unknown family {name!r}; expected one of {sorted(_FAMILIES)}"
        )


def _check_prob(prob) -> None:
    prob = np.asarray(prob, dtype=float)
    if np.any(prob <= 0) or np.any(prob >= 1):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
