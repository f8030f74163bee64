"""One-dimensional adaptive Gauss-Hermite integration against a tilted Gaussian.

The density being integrated is a Gaussian tilted by survival factors,

    f(x) = exp{ delta * bnorm * x
                - cumhaz * exp(bnorm * x + offset)
                - (x - center)^2 / (2 * variance) },

whose log is strictly concave with a unique mode. Expectations E[h(X)] =
(integral of h f) / (integral of f) are computed by recentering the quadrature
nodes at the mode and rescaling by the curvature there (Liu-Pierce adaptive
recentering), with all weights handled in log space: the cumhaz * exp(b x)
term under- and overflows double precision at extreme nodes otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import logsumexp

from .errors import IntegrationError

DEFAULT_ORDER = 30

_MODE_TOL = 1e-10
_MAX_MODE_ITER = 100


@dataclass(frozen=True)
class TiltedDensity:
    """Parameters of the unnormalized tilted-Gaussian density f above."""

    delta: int       # event indicator, 0 or 1
    bnorm: float     # nonnegative coefficient on x in the tilt
    cumhaz: float    # nonnegative cumulative hazard at the follow-up time
    offset: float    # linear predictor of the fully observed coordinates
    center: float    # Gaussian center
    variance: float  # Gaussian variance, > 0

    def logpdf(self, x):
        """Unnormalized log density; -inf where the hazard term overflows."""
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore"):
            haz = self.cumhaz * np.exp(self.bnorm * x + self.offset)
        out = self.delta * self.bnorm * x - haz
        out -= (x - self.center) ** 2 / (2.0 * self.variance)
        return np.where(np.isfinite(out), out, -np.inf)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite abscissae with log weights (weight function exp(-z^2))."""

    nodes: np.ndarray
    log_weights: np.ndarray

    @property
    def order(self):
        return self.nodes.shape[0]


@lru_cache(maxsize=32)
def gauss_hermite_rule(order):
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    nodes, weights = hermgauss(order)
    return QuadratureRule(nodes=nodes, log_weights=np.log(weights))


def _grad_arrays(x, delta, bnorm, cumhaz, offset, center, variance):
    # d/dx log f; the hazard term saturates to inf (grad -> -inf), which only
    # ever happens far right of the mode, so signs remain correct.
    with np.errstate(over="ignore"):
        haz = cumhaz * np.exp(bnorm * x + offset)
    return delta * bnorm - bnorm * haz - (x - center) / variance


def find_mode_arrays(delta, bnorm, cumhaz, offset, center, variance):
    """Vectorized mode and negative curvature of log f.

    All inputs broadcast to a common shape. Uses a guaranteed bracket (the
    mode of the untilted Gaussian bounds the mode from above) with bisection,
    then Newton polishing; log f is strictly concave so this cannot fail to
    bracket.
    """
    delta, bnorm, cumhaz, offset, center, variance = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (delta, bnorm, cumhaz, offset, center, variance))
    )
    hi = center + variance * delta * bnorm  # gradient <= 0 here
    g_hi = _grad_arrays(hi, delta, bnorm, cumhaz, offset, center, variance)
    done = g_hi >= 0.0  # exactly the untilted mode (cumhaz or bnorm zero)

    lo = hi - np.sqrt(variance) - 1.0
    step = np.sqrt(variance) + 1.0
    for _ in range(200):
        g_lo = _grad_arrays(lo, delta, bnorm, cumhaz, offset, center, variance)
        need = (~done) & (g_lo <= 0.0)
        if not need.any():
            break
        step = np.where(need, step * 2.0, step)
        lo = np.where(need, lo - step, lo)
    else:
        raise IntegrationError("failed to bracket the tilted-density mode")

    lo = np.where(done, hi, lo)
    hi_b = hi.copy()
    for _ in range(44):
        mid = 0.5 * (lo + hi_b)
        g_mid = _grad_arrays(mid, delta, bnorm, cumhaz, offset, center, variance)
        take_hi = g_mid <= 0.0
        hi_b = np.where(take_hi, mid, hi_b)
        lo = np.where(take_hi, lo, mid)
    mode = 0.5 * (lo + hi_b)
    # Newton polish: strictly concave, quadratic convergence near the root
    for _ in range(4):
        g = _grad_arrays(mode, delta, bnorm, cumhaz, offset, center, variance)
        with np.errstate(over="ignore"):
            haz = cumhaz * np.exp(bnorm * mode + offset)
        curv = bnorm**2 * haz + 1.0 / variance
        step_n = np.where(np.isfinite(g), g / curv, 0.0)
        mode = mode + np.clip(step_n, lo - mode, hi_b - mode)
    mode = np.where(done, hi, mode)
    with np.errstate(over="ignore"):
        haz = cumhaz * np.exp(bnorm * mode + offset)
    neg_curv = bnorm**2 * haz + 1.0 / variance
    return mode, neg_curv


def find_mode(density):
    """Mode of log f and the negative second derivative there."""
    mode, neg_curv = find_mode_arrays(
        density.delta, density.bnorm, density.cumhaz,
        density.offset, density.center, density.variance,
    )
    mode, neg_curv = float(mode), float(neg_curv)
    g = float(_grad_arrays(np.asarray(mode), density.delta, density.bnorm,
                           density.cumhaz, density.offset, density.center,
                           density.variance))
    if not np.isfinite(mode) or abs(g) > _MODE_TOL * max(1.0, neg_curv):
        raise IntegrationError(
            f"mode search did not converge (residual gradient {g:.3e})"
        )
    return mode, neg_curv


def node_log_weights(density, rule=None):
    """Shifted nodes and unnormalized log quadrature weights for f.

    Nodes are mode + z / sqrt(neg_curvature); the log weight of node j is
    log w_j + z_j^2 + log f(x_j), so that sum(exp(lw)) * scale approximates
    the integral of f, with scale = 1/sqrt(neg_curvature).
    """
    rule = rule or gauss_hermite_rule(DEFAULT_ORDER)
    mode, neg_curv = find_mode(density)
    scale = 1.0 / np.sqrt(neg_curv)
    x = mode + scale * rule.nodes
    lw = rule.log_weights + rule.nodes**2 + density.logpdf(x)
    return x, lw, scale


def agh_expect(h, density, rule=None):
    """E[h(X)] under the normalized tilted density, for scalar or vector h.

    The normalizing constant cancels: weights are softmax of the log terms.
    Non-finite h values at the shifted nodes are an integration failure.
    """
    x, lw, _ = node_log_weights(density, rule)
    lw_max = lw.max()
    if not np.isfinite(lw_max):
        raise IntegrationError("tilted density vanished at every quadrature node")
    w = np.exp(lw - lw_max)
    w /= w.sum()
    hx = np.asarray([np.asarray(h(xi), dtype=float) for xi in x])
    if not np.all(np.isfinite(hx[w > 0])):
        raise IntegrationError("integrand non-finite at a quadrature node")
    return np.tensordot(w, hx, axes=(0, 0))


def agh_log_norm(density, rule=None):
    """log of the integral of the unnormalized f over the real line."""
    _, lw, scale = node_log_weights(density, rule)
    total = logsumexp(lw)
    if not np.isfinite(total):
        raise IntegrationError("tilted-density normalization is not finite")
    return float(total + np.log(scale))
