"""Online distributional regression engine.

Every distribution parameter gets its own linear predictor through a link
function.  Fitting alternates over parameters (outer cycle) and, per
parameter, iterates a Newton-type weighted regression of the working
response on the design (inner cycle).  The regression layer is pluggable:
plain weighted least squares on the Gramian normal equations, or a LASSO
path solved by coordinate descent with the regularization strength chosen
by an information criterion.

Because all regression state lives in discounted Gramian pairs and RSS
trackers, a fitted model absorbs new rows in O(J^2) per parameter without
revisiting old data.  Within one update step the candidate Gramians are
always formed from the previous step's committed statistics, so a row is
absorbed exactly once no matter how many inner iterations run.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EstimationError
from .families import DistributionFamily, get_family
from .gram import (
    GramState,
    discount_vector,
    effective_sample_size,
    gram_from_bytes,
    gram_to_bytes,
)
from .ocd import CoefficientPath, compute_lambda_grid, fit_path
from .scaler import (
    ScalerState,
    init_scaler,
    partial_fit,
    partial_fit_batch,
    scaler_from_bytes,
    scaler_to_bytes,
    transform,
)
from .selection import (
    ICSpec,
    RssTracker,
    ic_from_name,
    init_tracker,
    select_lambda,
    select_lambda_min_rss,
    update_rss_block,
)

_SNAP_MAGIC = b"ODRE"
_SNAP_VERSION = 1


@dataclass(frozen=True)
class WorkingPoint:
    """Newton working quantities of one observation for one parameter."""

    eta: float
    theta: float
    u: float
    w: float
    z: float


@dataclass
class EstimatorConfig:
    """Configuration of the fitting engine.

    ``gamma``, ``eps_lambda``, ``bounds``, ``regularized`` and
    ``scale_skip`` may be given per distribution parameter (sequence or
    ``{param: value}`` dict) or as a single value for all parameters.

    Attributes:
        family: Response family id ("normal", "normal_mv", "t", "jsu").
        method: "ols" (weighted normal equations) or "lasso" (path + IC).
        gamma: Forget factor(s) in (0, 1].
        ic: Information criterion for path selection (aic/bic/hqc).
        eps_lambda: Grid depth ratio(s); default 1e-3 for the location
            parameter and 1e-4 for higher parameters.
        grid_count: Number of lambda grid points.
        eps_rss: Inner cycle breaks when the working RSS grows by more than
            this factor; must exceed 1, may be +inf to disable.
        bounds: Optional per-parameter (lower, upper) coefficient bounds.
        regularized: Optional per-parameter penalty masks; by default every
            coefficient except the intercept column is penalized.
        scale_skip: Optional per-parameter masks of columns the scaler must
            pass through (default: the intercept column).
        fit_params: Parameter indices to estimate; others stay frozen at
            their starting values.
        selection: "gic" (default) or "rss" (plain discounted-RSS minimum,
            which drifts toward the unpenalized fit).
        select_every: Run lambda selection every "inner" iteration
            (default) or once per "outer" cycle.
    """

    family: str = "normal"
    method: str = "ols"
    gamma: object = 1.0
    ic: object = "aic"
    eps_lambda: object = None
    grid_count: int = 100
    rel_tol_outer: float = 1e-5
    rel_tol_inner: float = 1e-5
    max_outer: int = 10
    max_inner: int = 30
    eps_rss: float = 1.5
    cd_tol: float = 1e-4
    cd_max_iter: int = 1000
    bounds: object = None
    regularized: object = None
    scale_skip: object = None
    fit_params: object = None
    selection: str = "gic"
    select_every: str = "inner"
    order_seed: object = None
    weight_floor: float = 1e-10


@dataclass
class EstimatorState:
    """Complete state of a fitted online model; value semantics throughout."""

    config: EstimatorConfig
    betas: list
    grams: list
    trackers: list
    paths: list
    lambda_idx: list
    scalers: list
    theta_start: np.ndarray
    deviance: float
    n_obs: int
    fitted: bool
    flags: list = field(default_factory=list)

    @property
    def family(self) -> DistributionFamily:
        return get_family(self.config.family)


class _Resolved:
    """Per-parameter view of an EstimatorConfig for given design widths."""

    def __init__(self, config: EstimatorConfig, widths: list[int]):
        self.config = config
        family = get_family(config.family)
        p = family.n_params
        if len(widths) != p:
            raise ValueError(f"expected {p} design matrices, got {len(widths)}")
        self.family = family
        self.p = p
        self.widths = widths
        if config.method not in ("ols", "lasso"):
            raise ValueError(f"method must be 'ols' or 'lasso', got {config.method!r}")
        if config.selection not in ("gic", "rss"):
            raise ValueError(f"selection must be 'gic' or 'rss', got {config.selection!r}")
        if config.select_every not in ("inner", "outer"):
            raise ValueError("select_every must be 'inner' or 'outer'")
        if not config.eps_rss > 1.0:
            raise ValueError(f"eps_rss must exceed 1, got {config.eps_rss}")
        self.gamma = [float(g) for g in _per_param(config.gamma, p, 1.0)]
        for g in self.gamma:
            if not 0.0 < g <= 1.0:
                raise ValueError(f"forget factor must be in (0, 1], got {g}")
        eps_default = [1e-3 if k == 0 else 1e-4 for k in range(p)]
        if config.eps_lambda is None:
            self.eps_lambda = eps_default
        else:
            self.eps_lambda = [
                float(e) for e in _per_param(config.eps_lambda, p, None, eps_default)
            ]
        self.ic: ICSpec = ic_from_name(config.ic)
        if config.fit_params is None:
            self.fit_set = list(range(p))
        else:
            self.fit_set = sorted(int(k) for k in config.fit_params)
            if any(k < 0 or k >= p for k in self.fit_set) or not self.fit_set:
                raise ValueError("fit_params out of range")
        reg = _per_param(config.regularized, p, None)
        self.regularized = []
        for k, j in enumerate(widths):
            if reg[k] is None:
                mask = np.ones(j, dtype=bool)
                mask[0] = False
            else:
                mask = np.asarray(reg[k], dtype=bool)
                if mask.shape != (j,):
                    raise ValueError(f"regularized mask for parameter {k} has wrong width")
            self.regularized.append(mask)
        bounds = _per_param(config.bounds, p, None)
        self.lower, self.upper = [], []
        for k, j in enumerate(widths):
            if bounds[k] is None:
                lo, hi = np.full(j, -np.inf), np.full(j, np.inf)
            else:
                lo = np.broadcast_to(np.asarray(bounds[k][0], dtype=float), (j,)).copy()
                hi = np.broadcast_to(np.asarray(bounds[k][1], dtype=float), (j,)).copy()
            self.lower.append(lo)
            self.upper.append(hi)
        skip = _per_param(config.scale_skip, p, None)
        self.scale_skip = []
        for k, j in enumerate(widths):
            if skip[k] is None:
                mask = np.zeros(j, dtype=bool)
                mask[0] = True
            else:
                mask = np.asarray(skip[k], dtype=bool)
                if mask.shape != (j,):
                    raise ValueError(f"scale_skip mask for parameter {k} has wrong width")
            self.scale_skip.append(mask)


def _per_param(value, p, default, defaults_by_k=None):
    if value is None:
        if defaults_by_k is not None:
            return list(defaults_by_k)
        return [default] * p
    if isinstance(value, dict):
        base = list(defaults_by_k) if defaults_by_k is not None else [default] * p
        for k, v in value.items():
            base[int(k)] = v
        return base
    if np.isscalar(value):
        return [value] * p
    value = list(value)
    if len(value) != p:
        raise ValueError(f"expected {p} per-parameter values, got {len(value)}")
    return value


def _working(family, k, eta, theta, y, floor):
    """Vectorized Newton working quantities for parameter ``k``.

    Returns ``(u, w, z, wz, anomalous)`` where ``wz = w*eta + u`` is the
    algebraically equivalent but numerically stable form of ``w * z`` used
    for the moment updates, and ``anomalous`` is True when non-finite
    quantities had to be sanitized to a zero-information observation.
    """
    link = family.links[k]
    dtheta = link.inverse_derivative(eta)
    d1 = family.dl_dtheta(y, theta, k)
    d2 = family.d2l_dtheta2(y, theta, k)
    u = d1 * dtheta
    w = -d2 * dtheta**2
    w = np.where(w < floor, floor, w)
    bad = ~(np.isfinite(u) & np.isfinite(w))
    anomalous = bool(bad.any())
    if anomalous:
        u = np.where(bad, 0.0, u)
        w = np.where(bad, floor, w)
    z = eta + u / w
    wz = w * eta + u
    return u, w, z, wz, anomalous


def working_point(family, k, x_rows, betas, y) -> WorkingPoint:
    """Working quantities of a single observation for parameter ``k``.

    ``x_rows`` and ``betas`` hold one (scaled) design row and one
    coefficient vector per distribution parameter; the current fitted
    values of all parameters enter the derivatives.
    """
    family = get_family(family)
    p = family.n_params
    if len(x_rows) != p or len(betas) != p:
        raise ValueError(f"need one design row and one coefficient vector per parameter ({p})")
    eta = np.array([float(np.dot(x_rows[j], betas[j])) for j in range(p)])
    theta = np.array(
        [float(family.clamp(family.links[j].inverse(eta[j]), j)) for j in range(p)]
    )
    u, w, z, _, _ = _working(
        family, k, np.array([eta[k]]), theta[None, :], np.array([float(y)]), 1e-10
    )
    return WorkingPoint(eta=float(eta[k]), theta=float(theta[k]), u=float(u[0]),
                        w=float(w[0]), z=float(z[0]))


def _deviance(family, y, theta, f):
    return float(-2.0 * (f * family.log_pdf(y, theta)).sum())


def _uses_path(res, k) -> bool:
    # a parameter with nothing to penalize (intercept-only design) is
    # estimated by plain weighted least squares even in lasso mode
    return res.config.method == "lasso" and bool(res.regularized[k].any())


def _solve_ols(G, H):
    beta = np.linalg.solve(G, H)
    if not np.all(np.isfinite(beta)):
        raise np.linalg.LinAlgError("non-finite solution")
    return beta


class _Candidate:
    __slots__ = ("G", "H", "omega", "tracker", "path", "idx", "beta", "ms")

    def __init__(self, G, H, omega, tracker, path, idx, beta, ms):
        self.G, self.H, self.omega = G, H, omega
        self.tracker, self.path, self.idx = tracker, path, idx
        self.beta, self.ms = beta, ms


def fit_batch(config: EstimatorConfig, X_list, y) -> EstimatorState:
    """Initial fit on a batch of observations.

    Runs the alternating outer/inner cycles until the discounted penalized
    deviance settles, then freezes the final working weights into per
    parameter Gramian states and RSS trackers so that subsequent calls of
    :func:`update` can resume incrementally.

    Each design matrix must carry the intercept as its first column.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    X_list = [np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float))) for X in X_list]
    res = _Resolved(config, [X.shape[1] for X in X_list])
    family = res.family
    p = res.p
    for k in res.fit_set:
        if X_list[k].shape[0] != n:
            raise ValueError(f"design for parameter {k} has wrong row count")
        if n < res.widths[k] + 1:
            raise ValueError(
                f"need at least {res.widths[k] + 1} rows for parameter {k}, got {n}"
            )
        if not np.allclose(X_list[k][:, 0], 1.0):
            raise ValueError(f"design for parameter {k} must carry an intercept first column")
        if not np.all(np.isfinite(X_list[k])):
            raise ValueError("design contains non-finite entries")
    if not np.all(np.isfinite(y)):
        raise ValueError("response contains non-finite entries")

    scalers = []
    Xs = []
    for k in range(p):
        s = init_scaler(res.widths[k], res.gamma[k], res.scale_skip[k])
        s = partial_fit_batch(s, X_list[k])
        scalers.append(s)
        Xs.append(transform(s, X_list[k]))

    theta_start = family.initial_values(y)
    theta = np.tile(theta_start, (n, 1))
    eta = [np.asarray(family.links[k].forward(theta[:, k])) for k in range(p)]
    betas = []
    for k in range(p):
        b = np.zeros(res.widths[k])
        b[0] = float(family.links[k].forward(theta_start[k]))
        betas.append(b)

    gamma0 = res.gamma[0]
    f0 = discount_vector(gamma0, n)
    dv = _deviance(family, y, theta, f0)
    committed = {k: None for k in res.fit_set}
    paths_warm = {k: None for k in res.fit_set}
    flags: list[str] = []

    ctx = {"dv": dv}
    converged_outer = False
    for m in range(config.max_outer):
        dv_start = ctx["dv"]
        snapshot = (
            [b.copy() for b in betas],
            [e.copy() for e in eta],
            theta.copy(),
            {k: committed[k] for k in res.fit_set},
            ctx["dv"],
        )
        for k in res.fit_set:
            _fit_param_batch(
                res, k, m, Xs[k], y, f0, eta, theta, betas, committed, paths_warm, ctx, flags
            )
        if ctx["dv"] > dv_start + 1e-10 * (1.0 + abs(dv_start)) and m > 0:
            betas, eta, theta_arr, committed_snap, dv_snap = snapshot
            theta[:] = theta_arr
            committed.update(committed_snap)
            ctx["dv"] = dv_snap
            flags.append(f"outer cycle {m}: deviance increased; reverted")
            break
        if abs(dv_start - ctx["dv"]) <= config.rel_tol_outer * (abs(dv_start) + 1e-10):
            converged_outer = True
            break
    if not converged_outer and config.max_outer > 1 and not any("reverted" in f for f in flags):
        flags.append("outer cycle did not converge; returning best so far")

    grams, trackers, paths, idxs = [], [], [], []
    for k in range(p):
        if k in res.fit_set:
            c = committed[k]
            grams.append(
                GramState(G=c.G, H=c.H, omega=c.omega, n_seen=n, gamma=res.gamma[k])
            )
            trackers.append(c.tracker)
            paths.append(c.path)
            idxs.append(c.idx)
        else:
            grams.append(None)
            trackers.append(None)
            paths.append(None)
            idxs.append(0)

    return EstimatorState(
        config=config,
        betas=betas,
        grams=grams,
        trackers=trackers,
        paths=paths,
        lambda_idx=idxs,
        scalers=scalers,
        theta_start=theta_start,
        deviance=ctx["dv"],
        n_obs=n,
        fitted=True,
        flags=flags,
    )


def _fit_param_batch(res, k, m, X, y, f0, eta, theta, betas, committed, paths_warm, ctx, flags):
    config = res.config
    family = res.family
    gamma_k = res.gamma[k]
    n = y.shape[0]
    fk = discount_vector(gamma_k, n)
    dv_prev = ctx["dv"]
    ms_prev = None
    idx_prev = committed[k].idx if committed[k] is not None else 0
    for r in range(config.max_inner):
        u, w, z, wz, anomalous = _working(family, k, eta[k], theta, y, config.weight_floor)
        if anomalous:
            flags.append(f"param {k}: non-finite working quantities sanitized (outer {m})")
        fw = fk * w
        G = (X * fw[:, None]).T @ X
        G = 0.5 * (G + G.T)
        H = X.T @ (fk * wz)
        omega = float(fw.sum())
        use_path = _uses_path(res, k)
        if not use_path:
            try:
                beta_new = _solve_ols(G, H)
            except np.linalg.LinAlgError as exc:
                raise EstimationError(f"singular design for parameter {k} in OLS mode") from exc
            preds = (X @ beta_new)[:, None]
            path, idx = None, 0
        else:
            grid = compute_lambda_grid(H, res.regularized[k], res.eps_lambda[k], config.grid_count)
            path = fit_path(
                G, H, grid,
                warm=paths_warm[k],
                lower=res.lower[k], upper=res.upper[k],
                regularized=res.regularized[k],
                tol=config.cd_tol, max_iter=config.cd_max_iter,
                order_seed=config.order_seed,
            )
            preds = X @ path.betas.T
        ms_vec = fw @ (z[:, None] - preds) ** 2 / omega
        tracker = RssTracker(rss=ms_vec, omega=omega, gamma=gamma_k)
        if use_path:
            if config.select_every == "outer" and r > 0:
                idx = idx_prev
            elif config.selection == "rss":
                idx = select_lambda_min_rss(tracker)
            else:
                n_eff = effective_sample_size(gamma_k, n)
                idx = select_lambda(tracker, path, res.ic, n_eff=n_eff)
            beta_new = path.betas[idx].copy()
        ms = float(ms_vec[idx])
        eta_new = X @ beta_new
        theta_k_new = family.clamp(family.links[k].inverse(eta_new), k)
        theta_try = theta.copy()
        theta_try[:, k] = theta_k_new
        dv_new = _deviance(family, y, theta_try, f0)
        if ms_prev is not None and ms > config.eps_rss * ms_prev:
            break
        first_ever = m == 0 and r == 0
        grace = 1e-10 * (1.0 + abs(dv_prev))
        if dv_new > dv_prev + grace and not first_ever:
            break
        betas[k] = beta_new
        eta[k] = eta_new
        theta[:, k] = theta_k_new
        committed[k] = _Candidate(G, H, omega, tracker, path, idx, beta_new, ms)
        paths_warm[k] = path
        idx_prev = idx
        ctx["dv"] = dv_new
        settled = abs(dv_prev - dv_new) <= config.rel_tol_inner * (abs(dv_prev) + 1e-10)
        dv_prev = dv_new
        ms_prev = ms
        if settled and not first_ever:
            break


def update(state: EstimatorState, x_rows, y: float) -> EstimatorState:
    """Absorb a single observation; equivalent to a one-row mini-batch."""
    x_rows = [np.asarray(x, dtype=float).reshape(1, -1) for x in x_rows]
    return update_minibatch(state, x_rows, np.array([float(y)]))


def update_minibatch(state: EstimatorState, X_list, y) -> EstimatorState:
    """Absorb a block of ``t`` new rows into a fitted model.

    Scales the rows (fit-then-transform), initializes the fitted values from
    the previous coefficients and iterates the outer/inner cycles.  Candidate
    Gramians and RSS trackers are always formed from the previous step's
    committed statistics; exactly one absorption is committed at the end.
    Iterations that increase the discounted deviance, or blow the working
    RSS up by more than ``eps_rss``, are rejected.  If nothing can be
    accepted the previous coefficients are carried forward and the step is
    flagged, but the rows still enter the Gramians once.
    """
    if not state.fitted:
        raise EstimationError("state is not fitted")
    config = state.config
    y = np.asarray(y, dtype=float).ravel()
    t = y.shape[0]
    if t < 1:
        raise ValueError("mini-batch must contain at least one row")
    if not np.all(np.isfinite(y)):
        raise ValueError("response contains non-finite entries")
    X_list = [np.atleast_2d(np.asarray(X, dtype=float)) for X in X_list]
    res = _Resolved(config, [X.shape[1] for X in X_list])
    family = res.family
    p = res.p
    for k in res.fit_set:
        if X_list[k].shape != (t, res.widths[k]):
            raise ValueError(f"rows for parameter {k} have wrong shape")
        if not np.all(np.isfinite(X_list[k])):
            raise ValueError("design contains non-finite entries")

    # scaler: each row updates the moments before it is standardized
    scalers = list(state.scalers)
    Xs = []
    for k in range(p):
        s = scalers[k]
        rows = np.empty_like(X_list[k])
        for i in range(t):
            s = partial_fit(s, X_list[k][i])
            rows[i] = transform(s, X_list[k][i])
        scalers[k] = s
        Xs.append(rows)

    betas = [b.copy() for b in state.betas]
    eta = []
    theta = np.empty((t, p))
    for k in range(p):
        if k in res.fit_set:
            e = Xs[k] @ betas[k]
        else:
            e = np.full(t, float(family.links[k].forward(state.theta_start[k])))
        eta.append(e)
        theta[:, k] = family.clamp(family.links[k].inverse(e), k)
    theta_entry = theta.copy()
    eta_entry = [e.copy() for e in eta]

    gamma0 = res.gamma[0]
    f0 = discount_vector(gamma0, t)
    past = gamma0**t * state.deviance
    dv = past + _deviance(family, y, theta, f0)
    committed = {k: None for k in res.fit_set}
    paths_warm = {k: state.paths[k] for k in res.fit_set}
    flags: list[str] = []
    ctx = {"dv": dv}

    converged_outer = False
    for m in range(config.max_outer):
        dv_start = ctx["dv"]
        snapshot = (
            [b.copy() for b in betas],
            [e.copy() for e in eta],
            theta.copy(),
            {k: committed[k] for k in res.fit_set},
            ctx["dv"],
        )
        for k in res.fit_set:
            _update_param(
                res, k, m, state, Xs[k], y, f0, past, eta, theta, betas,
                committed, paths_warm, ctx, flags, t,
            )
        if ctx["dv"] > dv_start + 1e-10 * (1.0 + abs(dv_start)) and m > 0:
            betas, eta, theta_arr, committed_snap, dv_snap = snapshot
            theta[:] = theta_arr
            committed.update(committed_snap)
            ctx["dv"] = dv_snap
            flags.append(f"update outer cycle {m}: deviance increased; reverted")
            break
        if abs(dv_start - ctx["dv"]) <= config.rel_tol_outer * (abs(dv_start) + 1e-10):
            converged_outer = True
            break

    new_grams = list(state.grams)
    new_trackers = list(state.trackers)
    new_paths = list(state.paths)
    new_idx = list(state.lambda_idx)
    for k in res.fit_set:
        c = committed[k]
        if c is None:
            # reject the step but still absorb the rows once, at the entry point
            c = _entry_candidate(res, k, state, Xs[k], eta_entry, theta_entry, y, betas[k], flags)
            flags.append(f"param {k}: update step rejected; coefficients carried forward")
        new_grams[k] = GramState(
            G=c.G, H=c.H, omega=c.omega,
            n_seen=state.grams[k].n_seen + t, gamma=res.gamma[k],
        )
        new_trackers[k] = c.tracker
        if c.path is not None:
            new_paths[k] = c.path
        new_idx[k] = c.idx
        betas[k] = c.beta

    theta_final = np.empty((t, p))
    for k in range(p):
        if k in res.fit_set:
            e = Xs[k] @ betas[k]
        else:
            e = np.full(t, float(family.links[k].forward(state.theta_start[k])))
        theta_final[:, k] = family.clamp(family.links[k].inverse(e), k)
    new_dev = past + _deviance(family, y, theta_final, f0)

    return EstimatorState(
        config=config,
        betas=betas,
        grams=new_grams,
        trackers=new_trackers,
        paths=new_paths,
        lambda_idx=new_idx,
        scalers=scalers,
        theta_start=state.theta_start,
        deviance=new_dev,
        n_obs=state.n_obs + t,
        fitted=True,
        flags=state.flags + flags,
    )


def _candidate_grams(res, k, state, X, w, wz, t):
    gamma_k = res.gamma[k]
    fk = discount_vector(gamma_k, t)
    fw = fk * w
    gram = state.grams[k]
    G = gamma_k**t * gram.G + (X * fw[:, None]).T @ X
    G = 0.5 * (G + G.T)
    H = gamma_k**t * gram.H + X.T @ (fk * wz)
    omega = gamma_k**t * gram.omega + float(fw.sum())
    return G, H, omega


def _entry_candidate(res, k, state, X, eta_entry, theta_entry, y, beta, flags):
    config = res.config
    u, w, z, wz, anomalous = _working(
        res.family, k, eta_entry[k], theta_entry, y, config.weight_floor
    )
    if anomalous:
        flags.append(f"param {k}: entry-point working quantities sanitized")
    t = y.shape[0]
    G, H, omega = _candidate_grams(res, k, state, X, w, wz, t)
    tracker = state.trackers[k]
    preds = np.repeat((X @ beta)[:, None], tracker.count, axis=1)
    tracker = update_rss_block(tracker, preds, z, w)
    return _Candidate(G, H, omega, tracker, None, state.lambda_idx[k], beta.copy(), float(tracker.rss[state.lambda_idx[k]]))


def _update_param(res, k, m, state, X, y, f0, past, eta, theta, betas, committed,
                  paths_warm, ctx, flags, t):
    config = res.config
    family = res.family
    gamma_k = res.gamma[k]
    dv_prev = ctx["dv"]
    ms_prev = None
    idx_prev = committed[k].idx if committed[k] is not None else state.lambda_idx[k]
    for r in range(config.max_inner):
        u, w, z, wz, anomalous = _working(family, k, eta[k], theta, y, config.weight_floor)
        if anomalous:
            flags.append(f"param {k}: non-finite working quantities sanitized (update outer {m})")
        G, H, omega = _candidate_grams(res, k, state, X, w, wz, t)
        if not _uses_path(res, k):
            try:
                beta_new = _solve_ols(G, H)
            except np.linalg.LinAlgError:
                flags.append(f"param {k}: singular normal equations during update")
                break
            preds_sel = X @ beta_new
            tracker = update_rss_block(state.trackers[k], preds_sel[:, None], z, w)
            path, idx = None, 0
            ms = float(tracker.rss[0])
        else:
            grid = compute_lambda_grid(H, res.regularized[k], res.eps_lambda[k], config.grid_count)
            path = fit_path(
                G, H, grid,
                warm=paths_warm[k],
                lower=res.lower[k], upper=res.upper[k],
                regularized=res.regularized[k],
                tol=config.cd_tol, max_iter=config.cd_max_iter,
                order_seed=config.order_seed,
            )
            old_tracker = state.trackers[k]
            if old_tracker is None or old_tracker.count != grid.count:
                old_tracker = init_tracker(grid.count, gamma_k)
                flags.append(f"param {k}: RSS tracker re-initialized to grid length {grid.count}")
            preds = X @ path.betas.T
            tracker = update_rss_block(old_tracker, preds, z, w)
            if config.select_every == "outer" and r > 0:
                idx = min(idx_prev, grid.count - 1)
            elif config.selection == "rss":
                idx = select_lambda_min_rss(tracker)
            else:
                n_eff = effective_sample_size(gamma_k, state.grams[k].n_seen + t)
                idx = select_lambda(tracker, path, res.ic, n_eff=n_eff)
            beta_new = path.betas[idx].copy()
            ms = float(tracker.rss[idx])
        eta_new = X @ beta_new
        theta_k_new = family.clamp(family.links[k].inverse(eta_new), k)
        theta_try = theta.copy()
        theta_try[:, k] = theta_k_new
        dv_new = past + _deviance(family, y, theta_try, f0)
        if ms_prev is not None and ms > config.eps_rss * ms_prev:
            break
        grace = 1e-10 * (1.0 + abs(dv_prev))
        if dv_new > dv_prev + grace:
            break
        betas[k] = beta_new
        eta[k] = eta_new
        theta[:, k] = theta_k_new
        committed[k] = _Candidate(G, H, omega, tracker, path, idx, beta_new, ms)
        if path is not None:
            paths_warm[k] = path
        idx_prev = idx
        ctx["dv"] = dv_new
        settled = abs(dv_prev - dv_new) <= config.rel_tol_inner * (abs(dv_prev) + 1e-10)
        dv_prev = dv_new
        ms_prev = ms
        if settled:
            break


def predict(state: EstimatorState, x_rows) -> np.ndarray:
    """One-step-ahead distribution parameters for a single observation."""
    thetas = predict_matrix(state, [np.asarray(x, dtype=float).reshape(1, -1) for x in x_rows])
    return thetas[0]


def predict_matrix(state: EstimatorState, X_list) -> np.ndarray:
    """Distribution parameters for many rows; shape (n, p)."""
    if not state.fitted:
        raise EstimationError("state is not fitted")
    family = state.family
    p = family.n_params
    res = _Resolved(state.config, [len(b) for b in state.betas])
    X_list = [np.atleast_2d(np.asarray(X, dtype=float)) for X in X_list]
    n = X_list[0].shape[0]
    theta = np.empty((n, p))
    for k in range(p):
        if k in res.fit_set:
            eta = transform(state.scalers[k], X_list[k]) @ state.betas[k]
        else:
            eta = np.full(n, float(family.links[k].forward(state.theta_start[k])))
        theta[:, k] = family.clamp(family.links[k].inverse(eta), k)
    return theta


def predict_quantiles(state: EstimatorState, x_rows, probs) -> np.ndarray:
    """Predictive quantiles at ``probs`` for a single observation."""
    probs = np.asarray(probs, dtype=float)
    theta = predict(state, x_rows)
    return np.asarray(state.family.quantile(probs, theta))


# ---------------------------------------------------------------------------
# snapshot serialization


def _pack_array(arr) -> tuple[dict, bytes]:
    arr = np.ascontiguousarray(arr)
    meta = {"dtype": str(arr.dtype), "shape": list(arr.shape)}
    return meta, arr.tobytes()


def _unpack_array(meta, buf):
    return np.frombuffer(buf, dtype=meta["dtype"]).reshape(meta["shape"]).copy()


def state_to_bytes(state: EstimatorState) -> bytes:
    """Serialize a fitted state; floating payloads round-trip bit-exactly."""
    cfg = state.config
    config_dict = {
        f: getattr(cfg, f)
        for f in (
            "family", "method", "gamma", "ic", "eps_lambda", "grid_count",
            "rel_tol_outer", "rel_tol_inner", "max_outer", "max_inner",
            "eps_rss", "cd_tol", "cd_max_iter", "fit_params", "selection",
            "select_every", "order_seed", "weight_floor",
        )
    }
    if isinstance(config_dict["ic"], ICSpec):
        config_dict["ic"] = list(config_dict["ic"].nu)
    if isinstance(config_dict["gamma"], (list, tuple, np.ndarray)):
        config_dict["gamma"] = [float(g) for g in config_dict["gamma"]]
    if isinstance(config_dict["eps_lambda"], (list, tuple, np.ndarray)):
        config_dict["eps_lambda"] = [float(e) for e in config_dict["eps_lambda"]]
    if isinstance(config_dict["fit_params"], (list, tuple, np.ndarray)):
        config_dict["fit_params"] = [int(k) for k in config_dict["fit_params"]]

    blocks: list[bytes] = []
    manifest: list[dict] = []

    def add(name, payload):
        manifest.append({"name": name, "len": len(payload)})
        blocks.append(payload)

    def add_array(name, arr):
        meta, payload = _pack_array(arr)
        manifest.append({"name": name, "len": len(payload), **meta})
        blocks.append(payload)

    p = len(state.betas)
    res = _Resolved(cfg, [len(b) for b in state.betas])
    add_array("theta_start", state.theta_start)
    for k in range(p):
        add_array(f"beta{k}", state.betas[k])
        add_array(f"cfg_reg{k}", res.regularized[k])
        add_array(f"cfg_skip{k}", res.scale_skip[k])
        add_array(f"cfg_lower{k}", res.lower[k])
        add_array(f"cfg_upper{k}", res.upper[k])
        if state.grams[k] is not None:
            add(f"gram{k}", gram_to_bytes(state.grams[k]))
        if state.trackers[k] is not None:
            add_array(f"rss{k}", state.trackers[k].rss)
        if state.paths[k] is not None:
            path = state.paths[k]
            add_array(f"path_betas{k}", path.betas)
            add_array(f"path_reg{k}", path.regularized)
            add_array(f"path_lower{k}", path.lower)
            add_array(f"path_upper{k}", path.upper)
            add_array(f"path_conv{k}", path.converged)
        add(f"scaler{k}", scaler_to_bytes(state.scalers[k]))

    header = {
        "config": config_dict,
        "n_params": p,
        "n_obs": state.n_obs,
        "fitted": state.fitted,
        "flags": state.flags,
        "lambda_idx": [int(i) for i in state.lambda_idx],
        "tracker_omega": [
            None if tr is None else tr.omega for tr in state.trackers
        ],
        "tracker_gamma": [
            None if tr is None else tr.gamma for tr in state.trackers
        ],
        "deviance": state.deviance,
        "blocks": manifest,
    }
    head = json.dumps(header, sort_keys=True).encode()
    out = _SNAP_MAGIC + struct.pack("<II", _SNAP_VERSION, 0) + struct.pack("<Q", len(head)) + head
    return out + b"".join(blocks)


def state_from_bytes(buf: bytes) -> EstimatorState:
    if buf[:4] != _SNAP_MAGIC:
        raise ValueError("bad magic in estimator snapshot")
    version, _ = struct.unpack("<II", buf[4:12])
    if version != _SNAP_VERSION:
        raise ValueError(f"unsupported estimator snapshot version {version}")
    (head_len,) = struct.unpack("<Q", buf[12:20])
    header = json.loads(buf[20 : 20 + head_len].decode())
    raw: dict[str, tuple[dict, bytes]] = {}
    offset = 20 + head_len
    for meta in header["blocks"]:
        raw[meta["name"]] = (meta, buf[offset : offset + meta["len"]])
        offset += meta["len"]

    cfg_dict = dict(header["config"])
    if isinstance(cfg_dict.get("ic"), list):
        cfg_dict["ic"] = ICSpec(tuple(cfg_dict["ic"]))
    if isinstance(cfg_dict.get("fit_params"), list):
        cfg_dict["fit_params"] = tuple(cfg_dict["fit_params"])
    p = header["n_params"]

    def arr(name):
        meta, payload = raw[name]
        return _unpack_array(meta, payload)

    cfg_dict["regularized"] = {k: arr(f"cfg_reg{k}") for k in range(p)}
    cfg_dict["scale_skip"] = {k: arr(f"cfg_skip{k}") for k in range(p)}
    cfg_dict["bounds"] = {k: (arr(f"cfg_lower{k}"), arr(f"cfg_upper{k}")) for k in range(p)}
    config = EstimatorConfig(**cfg_dict)

    betas, grams, trackers, paths, scalers = [], [], [], [], []
    for k in range(p):
        betas.append(arr(f"beta{k}"))
        grams.append(gram_from_bytes(raw[f"gram{k}"][1]) if f"gram{k}" in raw else None)
        if f"rss{k}" in raw:
            trackers.append(
                RssTracker(
                    rss=arr(f"rss{k}"),
                    omega=float(header["tracker_omega"][k]),
                    gamma=float(header["tracker_gamma"][k]),
                )
            )
        else:
            trackers.append(None)
        if f"path_betas{k}" in raw:
            paths.append(
                CoefficientPath(
                    betas=arr(f"path_betas{k}"),
                    regularized=arr(f"path_reg{k}"),
                    lower=arr(f"path_lower{k}"),
                    upper=arr(f"path_upper{k}"),
                    converged=arr(f"path_conv{k}"),
                )
            )
        else:
            paths.append(None)
        scalers.append(scaler_from_bytes(raw[f"scaler{k}"][1]))

    return EstimatorState(
        config=config,
        betas=betas,
        grams=grams,
        trackers=trackers,
        paths=paths,
        lambda_idx=list(header["lambda_idx"]),
        scalers=scalers,
        theta_start=arr("theta_start"),
        deviance=float(header["deviance"]),
        n_obs=int(header["n_obs"]),
        fitted=bool(header["fitted"]),
        flags=list(header["flags"]),
    )
