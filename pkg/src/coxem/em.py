"""EM driver for the unpenalized estimator: coefficient Newton step, Gaussian
moment updates, baseline-jump update, and convergence control.

The maximization step profiles the baseline jumps out of the expected
complete-data log-likelihood, leaving a partial-likelihood-shaped objective in
the coefficients. One guarded Newton step per iteration (with step halving on
that objective) keeps the observed-data log-likelihood nondecreasing; the
jumps are then refreshed by a ratio-of-expectations estimator at the new
coefficients.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .data import BaselineHazard, ParameterSet, SurvivalData
from .errors import AscentError, CoxemError, DataError, IntegrationError
from .estep import build_workspace, compute_estep, loglik_from_cache
from .gaussian import spd_factor
from .quadrature import DEFAULT_ORDER


@dataclass(frozen=True)
class FitConfig:
    max_iter: int = 500
    tol: float = 1e-5              # max-abs change of any parameter
    quad_order: int = DEFAULT_ORDER
    step_halving_max: int = 20
    workers: int = 1               # E-step thread fan-out; results worker-count invariant
    verbose: bool = False
    debug: bool = False            # raise if the log-likelihood trace ever decreases


@dataclass(frozen=True)
class FitResult:
    params: ParameterSet
    loglik: float
    iterations: int
    converged: bool
    loglik_trace: np.ndarray
    stalled: bool = False          # a Newton step found no ascent at some iteration


@dataclass(frozen=True)
class RiskIndex:
    """Sorted-order index structure for risk-set suffix sums."""

    order: np.ndarray        # subject indices sorted by follow-up time (stable)
    y_sorted: np.ndarray
    event_pos: np.ndarray    # positions of events in sorted order
    event_left: np.ndarray   # leftmost sorted position with the same time, per event
    times: np.ndarray        # unique event times, ascending
    tie_counts: np.ndarray   # events per unique time
    time_left: np.ndarray    # leftmost sorted position per unique time


def build_risk_index(data):
    order = np.argsort(data.y, kind="stable")
    y_s = data.y[order]
    delta_s = data.delta[order]
    event_pos = np.flatnonzero(delta_s == 1)
    if event_pos.size == 0:
        raise DataError("at least one event is required")
    event_left = np.searchsorted(y_s, y_s[event_pos], side="left")
    times, tie_counts = np.unique(y_s[event_pos], return_counts=True)
    time_left = np.searchsorted(y_s, times, side="left")
    return RiskIndex(order=order, y_sorted=y_s, event_pos=event_pos,
                     event_left=event_left, times=times,
                     tie_counts=tie_counts, time_left=time_left)


def _suffix_sums(v):
    """Cumulative sums from the end along axis 0."""
    return np.cumsum(v[::-1], axis=0)[::-1]


def update_mu_sigma(cache):
    """Gaussian-block mean and (1/n) covariance from the expectation cache."""
    ws = cache.ws
    n = ws.n
    gauss = ws.data.gauss_idx
    mu = cache.ex[:, gauss].sum(axis=0) / n
    sigma = cache.sum_exx_gauss / n - np.outer(mu, mu)
    sigma = 0.5 * (sigma + sigma.T)
    spd_factor(sigma, "updated covariance")  # jitter retry inside, else raises
    return mu, sigma


def profile_score_hessian(cache, risk):
    """Gradient and Hessian of the profiled coefficient objective.

    Both are in the workspace's score-coordinate space and are computed in
    O(n k^2) by suffix accumulation over subjects sorted by follow-up time.
    """
    order = risk.order
    er_s = cache.erisk[order]
    erx_s = cache.erisk_x[order]
    erxx_s = cache.erisk_xx[order]
    s0 = _suffix_sums(er_s)[risk.event_left]
    if np.any(s0 <= 0):
        raise CoxemError("risk-set denominator is non-positive; expectation state is corrupt")
    s1 = _suffix_sums(erx_s)[risk.event_left]
    s2 = _suffix_sums(erxx_s)[risk.event_left]
    ex_events = cache.ex[order[risk.event_pos]][:, cache.ws.score_idx]
    r1 = s1 / s0[:, None]
    grad = ex_events.sum(axis=0) - r1.sum(axis=0)
    hess = -(s2 / s0[:, None, None]).sum(axis=0) + np.einsum("mi,mj->ij", r1, r1)
    return grad, hess


def profile_q(beta, cache, risk):
    """Profiled coefficient objective at an arbitrary coefficient vector.

    Uses the cached conditional laws to re-evaluate the risk expectations at
    ``beta``; the baseline jumps are profiled out.
    """
    er = cache.erisk_at(beta)[risk.order]
    s0 = _suffix_sums(er)[risk.event_left]
    ex_events = cache.ex[risk.order[risk.event_pos]]
    return float((ex_events @ beta).sum() - np.log(s0).sum())


def newton_update(beta_k, grad, hess, cache, risk, step_halving_max=20,
                  support=None):
    """One ascent-guarded Newton step on the profiled objective.

    Halves the step until the objective does not decrease; returns the
    accepted point and whether the step stalled at the current iterate.
    """
    if not np.any(grad):
        return beta_k.copy(), False
    neg_h = -hess
    ridge = 0.0
    for _ in range(8):
        try:
            factor = linalg.cho_factor(neg_h + ridge * np.eye(neg_h.shape[0]), lower=True)
            break
        except linalg.LinAlgError:
            ridge = 1e-8 if ridge == 0.0 else ridge * 100.0
    else:
        raise CoxemError("profiled Hessian could not be regularized to negative definite")
    step = linalg.cho_solve(factor, grad)
    idx = cache.ws.score_idx if support is None else support
    q0 = profile_q(beta_k, cache, risk)
    t = 1.0
    for _ in range(step_halving_max + 1):
        beta_try = beta_k.copy()
        beta_try[idx] = beta_try[idx] + t * step
        q_try = profile_q(beta_try, cache, risk)
        if q_try >= q0:
            return beta_try, False
        t *= 0.5
    return beta_k.copy(), True


def breslow_update(risk, erisk_new):
    """Baseline jumps: events at each unique time over the risk-set expectation sum."""
    s0 = _suffix_sums(erisk_new[risk.order])[risk.time_left]
    return risk.tie_counts / s0


def _log_jumps(data, risk, baseline):
    """Per-subject log jump size at the subject's event time (0 for censored)."""
    out = np.zeros(data.n)
    ev = np.flatnonzero(data.delta == 1)
    idx = np.searchsorted(baseline.times, data.y[ev])
    if np.any(idx >= baseline.times.size) or not np.allclose(
            baseline.times[np.minimum(idx, baseline.times.size - 1)], data.y[ev]):
        raise DataError("an event time has no baseline jump; baseline does not match data")
    out[ev] = np.log(baseline.jumps[idx])
    return out


def observed_loglik(params, data, quad_order=DEFAULT_ORDER):
    """Observed-data log-likelihood, constants included.

    Each subject contributes the log of the integral of the complete-data
    likelihood over its missing block under the fitted Gaussian law, plus the
    Gaussian log density of its observed modeled coordinates.
    """
    ws = build_workspace(data)
    cache = compute_estep(ws, params, quad_order=quad_order)
    risk = build_risk_index(data)
    return float(loglik_from_cache(cache, _log_jumps(data, risk, params.baseline)).sum())


def initialize_params(data, risk=None):
    """Starting point: zero coefficients, available-case Gaussian moments,
    event-count-over-risk-count baseline jumps."""
    risk = risk or build_risk_index(data)
    gauss = data.gauss_idx
    xg = data.x[:, gauss]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mu = np.nanmean(xg, axis=0)
    all_nan = ~np.isfinite(mu)
    if all_nan.any():
        warnings.warn("covariate column(s) with no observed values; using zero means")
        mu = np.where(all_nan, 0.0, mu)
    observed = np.isfinite(xg)
    z = np.where(observed, xg - mu, 0.0)
    counts = observed.astype(float).T @ observed.astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        sigma = (z.T @ z) / counts
    sigma[~np.isfinite(sigma)] = 0.0
    dg = np.diag(sigma).copy()
    dg[dg <= 0] = 1.0
    np.fill_diagonal(sigma, dg)
    # project to positive definite
    vals, vecs = np.linalg.eigh(0.5 * (sigma + sigma.T))
    floor = 1e-8 * max(1.0, float(vals.max()))
    sigma = (vecs * np.maximum(vals, floor)) @ vecs.T
    sigma = 0.5 * (sigma + sigma.T)
    # Nelson-Aalen jumps
    jumps = breslow_update(risk, np.ones(data.n))
    return ParameterSet(
        beta=np.zeros(data.p),
        baseline=BaselineHazard(risk.times, jumps),
        mu=mu, sigma=sigma, gauss_idx=gauss,
    )


def _param_delta(a, b):
    return max(
        np.abs(a.beta - b.beta).max(initial=0.0),
        np.abs(a.mu - b.mu).max(initial=0.0),
        np.abs(a.sigma - b.sigma).max(initial=0.0),
        np.abs(a.baseline.jumps - b.baseline.jumps).max(initial=0.0),
    )


def fit_npmle(data, config=None, support=None, init=None):
    """Fit the unpenalized estimator by EM.

    ``support`` restricts the coefficients allowed to be nonzero (used by the
    post-selection refit); coefficients outside it are pinned at zero. Returns
    a FitResult with converged=False (not an exception) on hitting max_iter.
    """
    config = config or FitConfig()
    risk = build_risk_index(data)
    if support is not None:
        support = np.asarray(support, dtype=int)
        if support.size == 0:
            return _fit_null(data, config, risk, init)
    ws = build_workspace(data, score_idx=support)
    params = init if init is not None else initialize_params(data, risk)
    if support is not None:
        beta0 = params.beta.copy()
        mask = np.ones(data.p, dtype=bool)
        mask[support] = False
        beta0[mask] = 0.0
        params = ParameterSet(beta0, params.baseline, params.mu, params.sigma,
                              gauss_idx=params.gauss_idx)

    cache = compute_estep(ws, params, quad_order=config.quad_order,
                          workers=config.workers)
    trace = [float(loglik_from_cache(cache, _log_jumps(data, risk, params.baseline)).sum())]
    converged = False
    stalled_any = False
    iterations = 0
    for it in range(1, config.max_iter + 1):
        iterations = it
        mu, sigma = update_mu_sigma(cache)
        grad, hess = profile_score_hessian(cache, risk)
        beta_next, stalled = newton_update(
            params.beta, grad, hess, cache, risk,
            step_halving_max=config.step_halving_max, support=support,
        )
        stalled_any = stalled_any or stalled
        erisk_new = cache.erisk_at(beta_next)
        jumps = breslow_update(risk, erisk_new)
        new_params = ParameterSet(beta_next, BaselineHazard(risk.times, jumps),
                                  mu, sigma, gauss_idx=data.gauss_idx)
        delta = _param_delta(new_params, params)
        params = new_params
        cache = compute_estep(ws, params, quad_order=config.quad_order,
                              workers=config.workers)
        ll = float(loglik_from_cache(cache, _log_jumps(data, risk, params.baseline)).sum())
        if config.debug and ll < trace[-1] - 1e-10:
            raise AscentError(
                f"log-likelihood decreased at iteration {it}: {trace[-1]:.12f} -> {ll:.12f}"
            )
        trace.append(ll)
        if config.verbose:
            print(f"iter {it:4d}  loglik {ll:.8f}  max-change {delta:.3g}")
        if delta < config.tol:
            converged = True
            break
    return FitResult(params=params, loglik=trace[-1], iterations=iterations,
                     converged=converged, loglik_trace=np.asarray(trace),
                     stalled=stalled_any)


def _fit_null(data, config, risk, init):
    """All-zero coefficient model: Gaussian moments and jumps still iterate."""
    ws = build_workspace(data, score_idx=np.arange(0))
    params = init if init is not None else initialize_params(data, risk)
    params = ParameterSet(np.zeros(data.p), params.baseline, params.mu,
                          params.sigma, gauss_idx=data.gauss_idx)
    cache = compute_estep(ws, params, quad_order=config.quad_order,
                          workers=config.workers)
    trace = [float(loglik_from_cache(cache, _log_jumps(data, risk, params.baseline)).sum())]
    converged = False
    iterations = 0
    for it in range(1, config.max_iter + 1):
        iterations = it
        mu, sigma = update_mu_sigma(cache)
        jumps = breslow_update(risk, cache.erisk_at(params.beta))
        new_params = ParameterSet(params.beta, BaselineHazard(risk.times, jumps),
                                  mu, sigma, gauss_idx=data.gauss_idx)
        delta = _param_delta(new_params, params)
        params = new_params
        cache = compute_estep(ws, params, quad_order=config.quad_order,
                              workers=config.workers)
        ll = float(loglik_from_cache(cache, _log_jumps(data, risk, params.baseline)).sum())
        if config.debug and ll < trace[-1] - 1e-10:
            raise AscentError(f"log-likelihood decreased at iteration {it}")
        trace.append(ll)
        if delta < config.tol:
            converged = True
            break
    return FitResult(params=params, loglik=trace[-1], iterations=iterations,
                     converged=converged, loglik_trace=np.asarray(trace))
