"""Comparator estimators on fully observed data.

``cox_fit`` is a self-contained Newton solver for the standard partial
likelihood (Breslow tie handling); it deliberately shares no expectation code
with the EM modules so it can serve as an independent oracle for them.
Complete-case analysis and conditional-mean single imputation wrap it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .data import BaselineHazard, SurvivalData
from .errors import DataError, NonConvergenceError, SingularCovarianceError
from .gaussian import MissingMask, conditional_mvn
from .lasso import QuadSurrogate, coordinate_descent, gamma_grid, soft_threshold


@dataclass(frozen=True)
class CompleteDataset:
    """Survival data with every covariate observed."""

    y: np.ndarray
    delta: np.ndarray
    x: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        delta = np.asarray(self.delta, dtype=int)
        x = np.asarray(self.x, dtype=float)
        if np.isnan(x).any():
            raise DataError("complete dataset contains missing covariate values")
        if x.ndim != 2 or y.shape[0] != x.shape[0] or delta.shape[0] != x.shape[0]:
            raise DataError("y, delta, and x must share the same number of rows")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    def to_survival_data(self):
        return SurvivalData(self.y, self.delta, self.x, names=self.names)


@dataclass(frozen=True)
class CoxFit:
    beta: np.ndarray
    baseline: BaselineHazard
    loglik: float             # log partial likelihood at beta
    iterations: int
    converged: bool
    score_norm: float


class _PartialLik:
    """Breslow log partial likelihood with score/information by suffix sums."""

    def __init__(self, complete):
        self.y = complete.y
        self.delta = complete.delta
        self.x = complete.x
        order = np.argsort(self.y, kind="stable")
        self.order = order
        self.y_s = self.y[order]
        self.x_s = self.x[order]
        delta_s = self.delta[order]
        self.event_pos = np.flatnonzero(delta_s == 1)
        if self.event_pos.size == 0:
            raise DataError("at least one event is required")
        self.event_left = np.searchsorted(self.y_s, self.y_s[self.event_pos], side="left")
        self.times, self.tie_counts = np.unique(self.y_s[self.event_pos], return_counts=True)
        self.time_left = np.searchsorted(self.y_s, self.times, side="left")
        self.x_events = self.x_s[self.event_pos]

    @staticmethod
    def _suffix(v):
        return np.cumsum(v[::-1], axis=0)[::-1]

    def loglik(self, beta):
        w = np.exp(self.x_s @ beta)
        s0 = self._suffix(w)[self.event_left]
        return float((self.x_events @ beta).sum() - np.log(s0).sum())

    def score_info(self, beta):
        w = np.exp(self.x_s @ beta)
        s0 = self._suffix(w)[self.event_left]
        s1 = self._suffix(w[:, None] * self.x_s)[self.event_left]
        xx = np.einsum("ij,ik->ijk", self.x_s, self.x_s)
        s2 = self._suffix(w[:, None, None] * xx)[self.event_left]
        r1 = s1 / s0[:, None]
        grad = self.x_events.sum(axis=0) - r1.sum(axis=0)
        info = (s2 / s0[:, None, None]).sum(axis=0) - np.einsum("mi,mj->ij", r1, r1)
        return grad, info

    def breslow_jumps(self, beta):
        w = np.exp(self.x_s @ beta)
        s0 = self._suffix(w)[self.time_left]
        return self.tie_counts / s0


def cox_fit(complete, l1_gamma=None, max_iter=200, tol=1e-9, step_halving_max=30):
    """Standard Cox regression; with ``l1_gamma``, the L1-penalized version.

    Unpenalized: Newton-Raphson with step halving until the score vanishes.
    Penalized: repeated quadratic expansion of the partial likelihood solved
    by the same coordinate-descent routine used for the expected objective.
    """
    pl = _PartialLik(complete)
    n, p = complete.n, complete.p
    beta = np.zeros(p)
    if l1_gamma is None:
        ll = pl.loglik(beta)
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            grad, info = pl.score_info(beta)
            gnorm = np.abs(grad).max()
            if gnorm < tol:
                converged = True
                break
            ridge = 0.0
            for _ in range(8):
                try:
                    factor = linalg.cho_factor(info + ridge * np.eye(p), lower=True)
                    break
                except linalg.LinAlgError:
                    ridge = 1e-8 if ridge == 0.0 else ridge * 100.0
            else:
                raise NonConvergenceError("information matrix is singular", beta=beta)
            step = linalg.cho_solve(factor, grad)
            t = 1.0
            for _ in range(step_halving_max + 1):
                trial = beta + t * step
                with np.errstate(over="ignore"):
                    ll_try = pl.loglik(trial)
                if np.isfinite(ll_try) and ll_try >= ll:
                    beta, ll = trial, ll_try
                    break
                t *= 0.5
            else:
                raise NonConvergenceError(
                    "no ascent direction found; estimates may diverge", beta=beta,
                )
        if not converged:
            raise NonConvergenceError(
                f"Newton did not converge in {max_iter} iterations", beta=beta,
            )
    else:
        obj = pl.loglik(beta) / n - l1_gamma * np.abs(beta).sum()
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            grad, info = pl.score_info(beta)
            surr = QuadSurrogate(quad=info / n, lin=(-info @ beta - grad) / n)
            beta_cd = coordinate_descent(surr, l1_gamma, beta_init=beta)
            t = 1.0
            accepted = beta
            for _ in range(step_halving_max + 1):
                trial = beta + t * (beta_cd - beta)
                with np.errstate(over="ignore"):
                    val = pl.loglik(trial) / n - l1_gamma * np.abs(trial).sum()
                if np.isfinite(val) and val >= obj:
                    accepted, obj = trial, val
                    break
                t *= 0.5
            change = np.abs(accepted - beta).max()
            beta = accepted
            if change < 1e-8:
                converged = True
                break
        if not converged:
            raise NonConvergenceError("penalized partial-likelihood fit did not converge",
                                      beta=beta)
        ll = pl.loglik(beta)
        grad, _ = pl.score_info(beta)
    grad_final, _ = pl.score_info(beta)
    return CoxFit(beta=beta, baseline=BaselineHazard(pl.times, pl.breslow_jumps(beta)),
                  loglik=pl.loglik(beta), iterations=it, converged=converged,
                  score_norm=float(np.abs(grad_final).max()))


@dataclass(frozen=True)
class CoxSelection:
    """Penalized partial-likelihood path with BIC selection and refit."""

    gammas: np.ndarray
    actives: tuple            # active set per gamma
    bics: np.ndarray
    selected_index: int
    refit: CoxFit             # unpenalized fit on the selected active set
    beta: np.ndarray          # refit coefficients scattered to full dimension


def cox_lasso_select(complete, n_gammas=50, gamma_min_ratio=0.01, standardize=True):
    """Tuning path for the penalized partial likelihood, selected by BIC.

    Selection runs on covariates scaled to unit standard deviation; the
    selected active set is refit unpenalized on the original scale.
    """
    n, p = complete.n, complete.p
    scales = complete.x.std(axis=0)
    scales = np.where(scales > 0, scales, 1.0) if standardize else np.ones(p)
    scaled = CompleteDataset(complete.y, complete.delta, complete.x / scales,
                             names=complete.names)
    pl = _PartialLik(scaled)
    grad0, _ = pl.score_info(np.zeros(p))
    gamma_max = float(np.abs(grad0).max()) / n
    if gamma_max <= 0:
        raise DataError("degenerate data: the null score is identically zero")
    gammas = gamma_grid(gamma_max, n_gammas, gamma_min_ratio)
    logn = np.log(n)
    beta = np.zeros(p)
    actives, bics = [], []
    refits = {}
    for gamma in gammas:
        fit = cox_fit(scaled, l1_gamma=float(gamma))
        beta = fit.beta
        active = tuple(int(j) for j in np.flatnonzero(beta))
        if active not in refits:
            refits[active] = _refit_active(complete, active)
        actives.append(active)
        bics.append(-2.0 * refits[active].loglik + logn * len(active))
    bics = np.asarray(bics)
    sel = int(np.argmin(bics))
    refit = refits[actives[sel]]
    beta_full = np.zeros(p)
    beta_full[list(actives[sel])] = refit.beta
    return CoxSelection(gammas=gammas, actives=tuple(actives), bics=bics,
                        selected_index=sel, refit=refit, beta=beta_full)


def _refit_active(complete, active):
    if len(active) == 0:
        pl = _PartialLik(complete)
        beta = np.zeros(0)
        return CoxFit(beta=beta,
                      baseline=BaselineHazard(pl.times, pl.breslow_jumps(np.zeros(complete.p))),
                      loglik=pl.loglik(np.zeros(complete.p)), iterations=0,
                      converged=True, score_norm=0.0)
    sub = CompleteDataset(complete.y, complete.delta, complete.x[:, list(active)],
                          names=tuple(complete.names[j] for j in active) if complete.names else ())
    return cox_fit(sub)


def complete_case(data, l1_gamma=None, select=False, **select_kwargs):
    """Drop every subject with a missing covariate, then fit the standard model.

    ``select=True`` runs the penalized path with BIC selection and refit
    instead of a single fit.
    """
    rows = data.complete_rows()
    if rows.size == 0:
        raise DataError("no fully observed subjects; complete-case analysis impossible")
    complete = CompleteDataset(data.y[rows], data.delta[rows], data.x[rows],
                               names=data.names)
    if select:
        return cox_lasso_select(complete, **select_kwargs)
    return cox_fit(complete, l1_gamma=l1_gamma)


def single_impute(data):
    """Replace missing covariates by conditional means under a Gaussian model
    fit (by maximum likelihood) to the fully observed subjects."""
    rows = data.complete_rows()
    if rows.size < 2:
        raise DataError("single imputation requires at least two fully observed subjects")
    xc = data.x[rows]
    mu = xc.mean(axis=0)
    centered = xc - mu
    sigma = centered.T @ centered / rows.size  # maximum-likelihood divisor
    x_new = data.x.copy()
    patterns, inverse = np.unique(data.missing, axis=0, return_inverse=True)
    for gidx in range(patterns.shape[0]):
        flags = patterns[gidx]
        if not flags.any():
            continue
        grp_rows = np.flatnonzero(inverse == gidx)
        mask = MissingMask(flags)
        obs = mask.observed
        s_oo = sigma[np.ix_(obs, obs)]
        s_mo = sigma[np.ix_(mask.missing, obs)]
        try:
            coef = np.linalg.solve(s_oo, s_mo.T).T
        except np.linalg.LinAlgError as exc:
            raise SingularCovarianceError(
                "complete-row covariance is singular on an observed block"
            ) from exc
        means = mu[mask.missing] + (data.x[np.ix_(grp_rows, obs)] - mu[obs]) @ coef.T
        x_new[np.ix_(grp_rows, mask.missing)] = means
    return CompleteDataset(data.y, data.delta, x_new, names=data.names)
