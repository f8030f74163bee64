"""Core data containers: survival records with missing covariates and the model parameters."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DataError
from .gaussian import MissingMask


@dataclass(frozen=True)
class ObservedSubject:
    """One study subject: follow-up time, event indicator, and partial covariates."""

    y: float
    delta: int
    mask: MissingMask
    x_obs: np.ndarray  # observed covariate values, in mask.observed order

    def __post_init__(self):
        if not (np.isfinite(self.y) and self.y > 0):
            raise DataError(f"follow-up time must be a positive finite number, got {self.y}")
        if self.delta not in (0, 1):
            raise DataError(f"event indicator must be 0 or 1, got {self.delta}")
        x = np.asarray(self.x_obs, dtype=float)
        if x.shape[0] != self.mask.observed.shape[0]:
            raise DataError("x_obs length does not match the mask's observed set")
        object.__setattr__(self, "x_obs", x)


@dataclass(frozen=True)
class SurvivalData:
    """A dataset of n subjects; missing covariate entries are NaN.

    ``gauss_idx`` lists the columns modeled as jointly Gaussian (and therefore
    allowed to be missing). Columns outside it are treated as fixed,
    always-observed regressors that enter the hazard only through beta.
    """

    y: np.ndarray          # (n,)
    delta: np.ndarray      # (n,) int
    x: np.ndarray          # (n, p), NaN marks missing
    names: tuple = ()      # covariate column names, optional
    gauss_idx: np.ndarray | None = None  # default: every column

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        delta = np.asarray(self.delta, dtype=int)
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2 or y.shape[0] != x.shape[0] or delta.shape[0] != x.shape[0]:
            raise DataError("y, delta, and x must share the same number of rows")
        if not np.all(np.isfinite(y)) or np.any(y <= 0):
            raise DataError("all follow-up times must be positive and finite")
        if not np.all(np.isin(delta, (0, 1))):
            raise DataError("event indicators must be 0 or 1")
        gi = self.gauss_idx
        gi = np.arange(x.shape[1]) if gi is None else np.asarray(gi, dtype=int)
        fixed = np.setdiff1d(np.arange(x.shape[1]), gi)
        if fixed.size and np.isnan(x[:, fixed]).any():
            raise DataError("columns outside the Gaussian block must be fully observed")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "gauss_idx", gi)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    @cached_property
    def missing(self):
        """Boolean missingness matrix, (n, p)."""
        return np.isnan(self.x)

    @cached_property
    def n_events(self):
        return int(self.delta.sum())

    def subject(self, i):
        mask = MissingMask(self.missing[i])
        return ObservedSubject(
            y=float(self.y[i]),
            delta=int(self.delta[i]),
            mask=mask,
            x_obs=self.x[i, ~self.missing[i]],
        )

    def subset(self, rows):
        rows = np.asarray(rows)
        return SurvivalData(self.y[rows], self.delta[rows], self.x[rows],
                            names=self.names, gauss_idx=self.gauss_idx)

    def complete_rows(self):
        """Indices of subjects with every covariate observed."""
        return np.flatnonzero(~self.missing.any(axis=1))


@dataclass(frozen=True)
class BaselineHazard:
    """Step-function cumulative hazard: jumps at sorted unique event times."""

    times: np.ndarray
    jumps: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        jumps = np.asarray(self.jumps, dtype=float)
        if times.shape != jumps.shape:
            raise DataError("baseline times and jumps must have equal length")
        if times.size and np.any(np.diff(times) <= 0):
            raise DataError("baseline jump times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "jumps", jumps)

    @cached_property
    def cum_jumps(self):
        return np.cumsum(self.jumps)


def cumulative_hazard(baseline, t):
    """Right-continuous cumulative hazard at time(s) t."""
    t = np.asarray(t, dtype=float)
    idx = np.searchsorted(baseline.times, t, side="right")
    cum = np.concatenate([[0.0], baseline.cum_jumps])
    out = cum[idx]
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ParameterSet:
    """Full model parameter vector: regression coefficients, baseline hazard, and the Gaussian law.

    ``mu`` and ``sigma`` describe the Gaussian-modeled covariate block whose
    columns are listed in ``gauss_idx`` (all columns when None).
    """

    beta: np.ndarray
    baseline: BaselineHazard
    mu: np.ndarray
    sigma: np.ndarray
    gauss_idx: np.ndarray | None = None

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape != (mu.shape[0], mu.shape[0]):
            raise DataError("sigma must be square with the same dimension as mu")
        if not np.allclose(sigma, sigma.T, atol=1e-8):
            raise DataError("sigma must be symmetric")
        gi = self.gauss_idx
        gi = np.arange(beta.shape[0]) if gi is None else np.asarray(gi, dtype=int)
        if gi.shape[0] != mu.shape[0]:
            raise DataError("gauss_idx length must match the Gaussian dimension")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "gauss_idx", gi)

    @property
    def p(self):
        return self.beta.shape[0]
