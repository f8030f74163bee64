"""Conditional multivariate-normal algebra under a missingness mask.

Everything here is pure linear algebra: Schur-complement conditionals for the
missing coordinates given the observed ones, an orthogonal rotation whose first
row points along the regression-coefficient direction of the missing block, and
the moment-generating function of the rotated remainder. These are the
building blocks that let higher-level code reduce expectations over a
d-dimensional missing block to one-dimensional integrals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from .errors import ContractViolationError, SingularCovarianceError

# Retry jitter added to the diagonal when a covariance factorization fails.
_SPD_JITTER = 1e-10


def spd_factor(a, context=""):
    """Cholesky-factor a symmetric PSD matrix, retrying once with diagonal jitter.

    Returns the (lower) Cholesky factor in scipy's cho_factor form. Raises
    SingularCovarianceError if the matrix is singular even after jitter.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return None
    try:
        return linalg.cho_factor(a, lower=True)
    except linalg.LinAlgError:
        pass
    scale = max(np.abs(np.diag(a)).max(), 1.0)
    try:
        return linalg.cho_factor(a + _SPD_JITTER * scale * np.eye(a.shape[0]), lower=True)
    except linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            f"covariance block is numerically singular{': ' + context if context else ''}"
        ) from exc


@dataclass(frozen=True)
class MissingMask:
    """Partition of the covariate coordinates into missing and observed sets."""

    flags: np.ndarray  # bool, shape (p,); True marks a missing coordinate

    def __post_init__(self):
        object.__setattr__(self, "flags", np.asarray(self.flags, dtype=bool))

    @classmethod
    def from_missing_indices(cls, indices, p):
        flags = np.zeros(p, dtype=bool)
        flags[np.asarray(indices, dtype=int)] = True
        return cls(flags)

    @cached_property
    def missing(self):
        return np.flatnonzero(self.flags)

    @cached_property
    def observed(self):
        return np.flatnonzero(~self.flags)

    @property
    def n_missing(self):
        return int(self.flags.sum())

    @property
    def p(self):
        return self.flags.shape[0]


@dataclass(frozen=True)
class ConditionalNormal:
    """Gaussian law of the missing block given the observed block."""

    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self):
        return self.mean.shape[0]


@dataclass(frozen=True)
class RotatedSlice:
    """Conditional normal after rotating the missing block.

    ``psi`` is orthogonal with first row along the missing-block coefficient
    direction, so the first rotated coordinate carries the whole linear
    predictor of the missing block. Given that coordinate, the remainder is
    Gaussian with mean affine in it (``intercept + slope * x1``) and constant
    residual covariance ``resid_cov``.
    """

    psi: np.ndarray        # (d, d) orthogonal
    eta: np.ndarray        # (d,) rotated conditional mean
    nu: np.ndarray         # (d, d) rotated conditional covariance
    slope: np.ndarray      # (d-1,) regression of remainder on first coord
    intercept: np.ndarray  # (d-1,)
    resid_cov: np.ndarray  # (d-1, d-1)
    degenerate: bool = False  # first-coordinate variance below tolerance

    @property
    def dim(self):
        return self.eta.shape[0]

    @property
    def var1(self):
        """Variance of the first rotated coordinate."""
        return float(self.nu[0, 0])

    def mean_given_x1(self, x1):
        """Conditional mean of the remainder given the first rotated coordinate."""
        return self.intercept + self.slope * x1


def conditional_mvn(mu, sigma, mask, x_obs):
    """Condition N(mu, sigma) on the observed coordinates of ``mask``.

    Returns the ConditionalNormal of the missing block. With nothing observed
    the unconditioned (mu, sigma) restricted to the missing block is returned;
    with nothing missing the result is zero-dimensional.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    x_obs = np.asarray(x_obs, dtype=float)
    mis, obs = mask.missing, mask.observed
    if x_obs.shape[0] != obs.shape[0]:
        raise ContractViolationError(
            f"x_obs has length {x_obs.shape[0]}, mask has {obs.shape[0]} observed coordinates"
        )
    if obs.size == 0:
        return ConditionalNormal(mu[mis].copy(), sigma[np.ix_(mis, mis)].copy())
    if mis.size == 0:
        return ConditionalNormal(np.empty(0), np.empty((0, 0)))
    s_oo = sigma[np.ix_(obs, obs)]
    s_mo = sigma[np.ix_(mis, obs)]
    factor = spd_factor(s_oo, context=f"observed block of mask {mask.flags.astype(int)}")
    # regression coefficients of the missing block on the observed block
    bcoef = linalg.cho_solve(factor, s_mo.T).T
    mean = mu[mis] + bcoef @ (x_obs - mu[obs])
    cov = sigma[np.ix_(mis, mis)] - bcoef @ s_mo.T
    cov = 0.5 * (cov + cov.T)
    return ConditionalNormal(mean, cov)


def householder_completion(beta_r):
    """Orthogonal matrix whose first row is ``beta_r`` normalized.

    Uses the Householder reflection exchanging e1 and the normalized vector;
    the result is symmetric, involutory, and deterministic.
    """
    beta_r = np.asarray(beta_r, dtype=float)
    norm = np.linalg.norm(beta_r)
    if norm == 0.0:
        raise ContractViolationError(
            "completion of a zero vector is undefined; use the closed-form branch"
        )
    d = beta_r.shape[0]
    u = beta_r / norm
    v = u.copy()
    v[0] -= 1.0
    vnorm2 = v @ v  # equals 2(1 - u[0])
    if vnorm2 < 1e-32:
        return np.eye(d)
    return np.eye(d) - np.outer(v, v) * (2.0 / vnorm2)


def gram_schmidt_completion(beta_r):
    """Alternative orthogonal completion of the same first row.

    Orthonormalizes the canonical basis (dropping the axis most aligned with
    the input) against the normalized input via QR. Used to verify that
    downstream expectations do not depend on how the rotation is completed.
    """
    beta_r = np.asarray(beta_r, dtype=float)
    norm = np.linalg.norm(beta_r)
    if norm == 0.0:
        raise ContractViolationError(
            "completion of a zero vector is undefined; use the closed-form branch"
        )
    d = beta_r.shape[0]
    u = beta_r / norm
    if d == 1:
        return np.ones((1, 1))
    drop = int(np.argmax(np.abs(u)))
    cols = [u] + [np.eye(d)[:, j] for j in range(d) if j != drop]
    q, _ = np.linalg.qr(np.column_stack(cols))
    if q[:, 0] @ u < 0:
        q[:, 0] = -q[:, 0]
    q[:, 0] = u  # pin exactly; QR already matched it to rounding error
    return q.T


_COMPLETIONS = {
    "householder": householder_completion,
    "gram_schmidt": gram_schmidt_completion,
}

# Below this, the first rotated coordinate is treated as a point mass.
DEGENERATE_VAR = 1e-12


def rotate_slice(cond, beta_r, completion="householder"):
    """Rotate a conditional normal so the first coordinate is the predictor direction.

    ``beta_r`` must be nonzero. The returned slice carries the affine
    conditional of the remaining coordinates given the first one; if the first
    coordinate has (numerically) zero variance the slice is flagged degenerate
    and the affine regression is replaced by a constant at the mean.
    """
    psi = _COMPLETIONS[completion](beta_r)
    eta = psi @ cond.mean
    nu = psi @ cond.cov @ psi.T
    nu = 0.5 * (nu + nu.T)
    var1 = nu[0, 0]
    d = eta.shape[0]
    if var1 < DEGENERATE_VAR:
        slope = np.zeros(d - 1)
        intercept = eta[1:].copy()
        resid = nu[1:, 1:].copy()
        return RotatedSlice(psi, eta, nu, slope, intercept, resid, degenerate=True)
    slope = nu[1:, 0] / var1
    intercept = eta[1:] - slope * eta[0]
    resid = nu[1:, 1:] - np.outer(nu[1:, 0], nu[1:, 0]) / var1
    resid = 0.5 * (resid + resid.T)
    return RotatedSlice(psi, eta, nu, slope, intercept, resid, degenerate=False)


def mgf_phi(slice_, x1, a):
    """E[exp(a . remainder) | first coordinate = x1] under the slice law.

    Equals exp(a . m(x1) + a' V a / 2); returns 1.0 for an empty ``a``.
    Overflow is returned as +inf and treated by callers as integration failure.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 1.0
    m = slice_.mean_given_x1(x1)
    with np.errstate(over="ignore"):
        return float(np.exp(a @ m + 0.5 * a @ slice_.resid_cov @ a))
