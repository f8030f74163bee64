"""L1-penalized estimation: quadratic surrogate of the profiled objective,
cyclic coordinate descent with soft thresholding, a warm-started tuning path,
BIC model selection, and post-selection refitting on the original scale.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .data import BaselineHazard, ParameterSet, SurvivalData
from .em import (
    FitConfig,
    FitResult,
    breslow_update,
    build_risk_index,
    fit_npmle,
    initialize_params,
    profile_q,
    profile_score_hessian,
    update_mu_sigma,
)
from .errors import (
    AscentError,
    ContractViolationError,
    CoxemError,
    DataError,
    NonConvergenceError,
)
from .estep import build_workspace, compute_estep, loglik_from_cache
from .em import _log_jumps  # shared baseline-jump lookup

CD_TOL = 1e-8
CD_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class QuadSurrogate:
    """Quadratic model of the profiled objective: maximize -b'Qb/2 - l'b."""

    quad: np.ndarray  # PSD matrix, -hessian/n
    lin: np.ndarray   # linear term


@dataclass(frozen=True)
class PathPoint:
    gamma: float
    beta: np.ndarray          # penalized estimate (original covariate scale)
    active: tuple             # indices with nonzero penalized coefficient
    loglik: float             # observed log-likelihood of the refit
    bic: float
    failed: bool = False
    message: str = ""


@dataclass(frozen=True)
class LassoPath:
    gammas: np.ndarray
    points: tuple             # one PathPoint per gamma
    refits: dict              # active set tuple -> FitResult
    selected_index: int

    @property
    def selected(self):
        return self.points[self.selected_index]

    @property
    def selected_refit(self):
        return self.refits[self.selected.active]


def soft_threshold(x, gamma):
    """sign(x) * max(|x| - gamma, 0), elementwise."""
    return np.sign(x) * np.maximum(np.abs(x) - gamma, 0.0)


def build_surrogate(grad, hess, beta_k, n):
    """Second-order expansion of the per-subject profiled objective at beta_k."""
    quad = -hess / n
    lin = (hess @ beta_k - grad) / n
    return QuadSurrogate(quad=quad, lin=lin)


def coordinate_descent(surrogate, gamma, beta_init=None, tol=CD_TOL,
                       max_sweeps=CD_MAX_SWEEPS):
    """Cyclic soft-threshold updates until the largest coordinate move is below tol.

    Coordinates with non-positive curvature are frozen at zero with a warning.
    Raises NonConvergenceError (carrying the last iterate) at the sweep cap.
    """
    a, lin = surrogate.quad, surrogate.lin
    p = lin.shape[0]
    beta = np.zeros(p) if beta_init is None else np.asarray(beta_init, dtype=float).copy()
    diag = np.diag(a).copy()
    frozen = diag <= 0.0
    if frozen.any():
        warnings.warn("coordinate(s) with non-positive curvature frozen at zero")
    r = a @ beta
    for _ in range(max_sweeps):
        max_change = 0.0
        for j in range(p):
            old = beta[j]
            if frozen[j]:
                if old != 0.0:
                    r -= a[:, j] * old
                    beta[j] = 0.0
                continue
            z = r[j] - diag[j] * old + lin[j]
            new = -soft_threshold(z, gamma) / diag[j]
            if new != old:
                r += a[:, j] * (new - old)
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        if max_change < tol:
            return beta
    raise NonConvergenceError(
        f"coordinate descent did not converge in {max_sweeps} sweeps", beta=beta,
    )


def kkt_violation(surrogate, gamma, beta):
    """Largest violation of the stationarity conditions at ``beta``.

    Zero coordinates require |(A beta + lin)_j| <= gamma; active ones require
    (A beta + lin)_j = -gamma * sign(beta_j).
    """
    r = surrogate.quad @ beta + surrogate.lin
    zero = beta == 0.0
    viol = 0.0
    if zero.any():
        viol = max(viol, float(np.max(np.abs(r[zero]) - gamma, initial=0.0)))
    if (~zero).any():
        viol = max(viol, float(np.max(np.abs(r[~zero] + gamma * np.sign(beta[~zero])))))
    return viol


@dataclass(frozen=True)
class PenalizedFit:
    params: ParameterSet      # original covariate scale
    active: tuple
    loglik: float             # observed log-likelihood (unpenalized value)
    penalized_loglik: float
    iterations: int
    converged: bool
    trace: np.ndarray         # penalized observed log-likelihood per iteration


def _column_scales(data):
    """Available-case standard deviation per covariate column (1.0 fallback)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sd = np.nanstd(data.x, axis=0)
    sd = np.where(np.isfinite(sd) & (sd > 0), sd, 1.0)
    return sd


def _scaled_data(data, scales):
    return SurvivalData(data.y, data.delta, data.x / scales, names=data.names,
                        gauss_idx=data.gauss_idx)


def _descale_params(params, scales):
    gauss = params.gauss_idx
    sg = scales[gauss]
    return ParameterSet(
        beta=params.beta / scales,
        baseline=params.baseline,
        mu=params.mu * sg,
        sigma=params.sigma * np.outer(sg, sg),
        gauss_idx=gauss,
    )


def _scale_params(params, scales):
    gauss = params.gauss_idx
    sg = scales[gauss]
    return ParameterSet(
        beta=params.beta * scales,
        baseline=params.baseline,
        mu=params.mu / sg,
        sigma=params.sigma / np.outer(sg, sg),
        gauss_idx=gauss,
    )


def _fit_penalized_core(data, gamma, config, init=None):
    """EM loop with the coefficient update replaced by surrogate coordinate descent.

    The accepted coefficient step never decreases the profiled penalized
    objective (step halving toward the current iterate), which keeps the
    penalized observed log-likelihood nondecreasing.
    """
    n = data.n
    risk = build_risk_index(data)
    ws = build_workspace(data)
    params = init if init is not None else initialize_params(data, risk)
    cache = compute_estep(ws, params, quad_order=config.quad_order,
                          workers=config.workers)

    def penalty(beta):
        return gamma * np.abs(beta).sum()

    ll = float(loglik_from_cache(cache, _log_jumps(data, risk, params.baseline)).sum())
    trace = [ll - n * penalty(params.beta)]
    converged = False
    iterations = 0
    for it in range(1, config.max_iter + 1):
        iterations = it
        mu, sigma = update_mu_sigma(cache)
        grad, hess = profile_score_hessian(cache, risk)
        surr = build_surrogate(grad, hess, params.beta, n)
        beta_cd = coordinate_descent(surr, gamma, beta_init=params.beta)
        h0 = profile_q(params.beta, cache, risk) / n - penalty(params.beta)
        beta_next = params.beta.copy()
        t = 1.0
        for _ in range(config.step_halving_max + 1):
            trial = params.beta + t * (beta_cd - params.beta)
            if profile_q(trial, cache, risk) / n - penalty(trial) >= h0:
                beta_next = trial
                break
            t *= 0.5
        erisk_new = cache.erisk_at(beta_next)
        jumps = breslow_update(risk, erisk_new)
        new_params = ParameterSet(beta_next, BaselineHazard(risk.times, jumps),
                                  mu, sigma, gauss_idx=data.gauss_idx)
        delta = max(
            np.abs(new_params.beta - params.beta).max(),
            np.abs(mu - params.mu).max(),
            np.abs(sigma - params.sigma).max(),
            np.abs(jumps - params.baseline.jumps).max(),
        )
        params = new_params
        cache = compute_estep(ws, params, quad_order=config.quad_order,
                              workers=config.workers)
        ll = float(loglik_from_cache(cache, _log_jumps(data, risk, params.baseline)).sum())
        pll = ll - n * penalty(params.beta)
        if config.debug and pll < trace[-1] - 1e-10:
            raise AscentError(
                f"penalized log-likelihood decreased at iteration {it}"
            )
        trace.append(pll)
        if delta < config.tol:
            converged = True
            break
    active = tuple(int(j) for j in np.flatnonzero(params.beta))
    return PenalizedFit(params=params, active=active, loglik=ll,
                        penalized_loglik=trace[-1], iterations=iterations,
                        converged=converged, trace=np.asarray(trace))


def fit_penalized(data, gamma, config=None, init=None, standardize=True):
    """Penalized fit at one tuning value; returns parameters on the original scale.

    Covariates are standardized to unit available-case standard deviation for
    the penalty when ``standardize`` (the penalty then treats coordinates
    symmetrically); the returned parameters are mapped back.
    """
    if gamma <= 0:
        raise ContractViolationError(f"tuning parameter must be positive, got {gamma}")
    config = config or FitConfig()
    if data.p >= data.n:
        raise DataError("penalized fitting requires fewer covariates than subjects")
    if not standardize:
        return _fit_penalized_core(data, gamma, config, init=init)
    scales = _column_scales(data)
    sdata = _scaled_data(data, scales)
    sinit = _scale_params(init, scales) if init is not None else None
    fit = _fit_penalized_core(sdata, gamma, config, init=sinit)
    return replace(fit, params=_descale_params(fit.params, scales))


def gamma_grid(gamma_max, n_gammas=50, min_ratio=0.01):
    """Geometric grid from gamma_max down to min_ratio * gamma_max."""
    if n_gammas == 1:
        return np.array([gamma_max])
    ratio = min_ratio ** (1.0 / (n_gammas - 1))
    return gamma_max * ratio ** np.arange(n_gammas)


def tune_path(data, config=None, n_gammas=50, gamma_min_ratio=0.01,
              standardize=True, refit_config=None):
    """Fit the whole tuning path and select by BIC.

    Each tuning value is fit warm-started from the previous one; each distinct
    active set is refit once without penalty (restricted to the set, original
    covariate scale) and scored by -2 * refit log-likelihood + log(n) * |set|.
    Individual tuning values may fail without aborting the path.
    """
    config = config or FitConfig()
    refit_config = refit_config or config
    if data.p >= data.n:
        raise DataError("penalized fitting requires fewer covariates than subjects")
    if data.n_events < 2:
        raise DataError("the tuning path requires at least two events")
    scales = _column_scales(data) if standardize else np.ones(data.p)
    sdata = _scaled_data(data, scales)

    risk = build_risk_index(sdata)
    ws = build_workspace(sdata)
    init0 = initialize_params(sdata, risk)
    cache0 = compute_estep(ws, init0, quad_order=config.quad_order,
                           workers=config.workers)
    grad0, hess0 = profile_score_hessian(cache0, risk)
    surr0 = build_surrogate(grad0, hess0, init0.beta, sdata.n)
    gamma_max = float(np.abs(surr0.lin).max())
    if gamma_max <= 0:
        raise DataError("degenerate data: the null-fit score is identically zero")
    gammas = gamma_grid(gamma_max, n_gammas, gamma_min_ratio)

    logn = np.log(data.n)
    points = []
    refits = {}
    warm = init0
    for gamma in gammas:
        try:
            pf = _fit_penalized_core(sdata, float(gamma), config, init=warm)
        except CoxemError as exc:
            points.append(PathPoint(gamma=float(gamma), beta=np.full(data.p, np.nan),
                                    active=(), loglik=np.nan, bic=np.inf,
                                    failed=True, message=str(exc)))
            continue
        warm = pf.params
        active = pf.active
        if active not in refits:
            refits[active] = fit_npmle(data, config=refit_config,
                                       support=np.asarray(active, dtype=int))
        refit = refits[active]
        bic = -2.0 * refit.loglik + logn * len(active)
        points.append(PathPoint(gamma=float(gamma), beta=pf.params.beta / scales,
                                active=active, loglik=refit.loglik, bic=bic))
    if not points or all(pt.failed for pt in points):
        raise CoxemError("every tuning value failed; no model selected")
    bics = np.array([pt.bic for pt in points])
    selected = int(np.argmin(bics))
    return LassoPath(gammas=gammas, points=tuple(points), refits=refits,
                     selected_index=selected)
