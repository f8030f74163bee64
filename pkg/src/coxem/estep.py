"""Conditional expectations of covariate functionals given the observed data.

For a subject with missing covariates, the quantities needed by the
maximization steps are conditional expectations of X, X X', exp(X'b),
exp(X'b) X, and exp(X'b) X X' given the follow-up data. After rotating the
missing block so its first coordinate carries the whole linear predictor,
every one of these reduces to scalar moments of that single coordinate under
a tilted Gaussian law: the remainder is Gaussian given the first coordinate
with mean affine in it, so its contribution is closed-form. The heavy lifting
is therefore n one-dimensional quadratures per pass, independent of how many
covariates are missing.

The module exposes both a per-subject API (``subject_expectations`` and
friends) and a batched path (``build_workspace`` / ``compute_estep``) that
groups subjects by missing pattern and vectorizes everything group-wise; the
two agree to floating-point resolution because the per-subject API is the
batched path with a batch of one. Groups are split into fixed-size row chunks
so that results are bitwise identical no matter how many worker threads run
the chunks.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .data import ObservedSubject, ParameterSet, SurvivalData, cumulative_hazard
from .errors import ContractViolationError, IntegrationError
from .gaussian import (
    DEGENERATE_VAR,
    MissingMask,
    conditional_mvn,
    rotate_slice,
    spd_factor,
)
from .quadrature import DEFAULT_ORDER, find_mode_arrays, gauss_hermite_rule

# Below this norm the missing-block coefficients are treated as exactly zero
# and the closed-form Gaussian branch is used.
ZERO_BETA_TOL = 1e-12

# Rows per work unit; fixed so arithmetic does not depend on the worker count.
CHUNK_ROWS = 256


@dataclass(frozen=True)
class SubjectExpectations:
    """The five expectation blocks for one subject, in full covariate dimension."""

    ex: np.ndarray        # E[X | observed], (p,)
    exx: np.ndarray       # E[X X' | observed], (p, p)
    erisk: float          # E[exp(X'beta) | observed]
    erisk_x: np.ndarray   # E[exp(X'beta) X | observed], (p,)
    erisk_xx: np.ndarray  # E[exp(X'beta) X X' | observed], (p, p)


# ---------------------------------------------------------------------------
# workspace: static per-dataset structure reused across EM iterations
# ---------------------------------------------------------------------------

@dataclass
class _Group:
    """A chunk of subjects sharing one missing pattern, with index maps."""

    rows: np.ndarray          # dataset row indices in this chunk
    mis: np.ndarray           # missing columns (full covariate space)
    obs: np.ndarray           # observed columns (full covariate space)
    gmask: MissingMask | None  # missing pattern restricted to the Gaussian block
    gobs_pos: np.ndarray      # positions of observed Gaussian columns within the block
    gmis_pos: np.ndarray      # positions of missing columns within the block
    x_obs: np.ndarray         # (g, len(obs)) observed values
    x_gobs: np.ndarray        # (g, len(gobs_pos)) observed Gaussian values
    obs_k: np.ndarray         # positions in score space of observed score columns
    mis_k: np.ndarray         # positions in score space of missing score columns
    mis_sel: np.ndarray       # positions within mis of the missing score columns
    x_obs_k: np.ndarray       # (g, len(obs_k)) observed values on score columns
    xx_obs_k: np.ndarray      # (g, ko, ko) outer products on observed score columns


@dataclass
class Workspace:
    data: SurvivalData
    score_idx: np.ndarray
    groups: list

    @property
    def n(self):
        return self.data.n

    @property
    def k(self):
        return self.score_idx.shape[0]


def build_workspace(data, score_idx=None):
    """Group subjects by missing pattern and precompute index structures.

    ``score_idx`` restricts the coordinates for which the exp-weighted first
    and second moment blocks are produced (the score and information only need
    the coordinates currently allowed to be nonzero).
    """
    p = data.p
    score_idx = np.arange(p) if score_idx is None else np.asarray(score_idx, dtype=int)
    kpos = np.full(p, -1, dtype=int)
    kpos[score_idx] = np.arange(score_idx.shape[0])
    gauss = data.gauss_idx
    gpos = np.full(p, -1, dtype=int)
    gpos[gauss] = np.arange(gauss.shape[0])

    patterns, inverse = np.unique(data.missing, axis=0, return_inverse=True)
    groups = []
    for gidx in range(patterns.shape[0]):
        all_rows = np.flatnonzero(inverse == gidx)
        flags = patterns[gidx]
        mis = np.flatnonzero(flags)
        obs = np.flatnonzero(~flags)
        gmask = MissingMask(flags[gauss]) if mis.size else None
        in_k_obs = kpos[obs] >= 0
        in_k_mis = kpos[mis] >= 0
        obs_in_gauss = np.isin(obs, gauss)
        for start in range(0, all_rows.shape[0], CHUNK_ROWS):
            rows = all_rows[start:start + CHUNK_ROWS]
            x_obs = data.x[np.ix_(rows, obs)]
            x_obs_k = data.x[np.ix_(rows, obs[in_k_obs])]
            groups.append(_Group(
                rows=rows,
                mis=mis,
                obs=obs,
                gmask=gmask,
                gobs_pos=gpos[obs[obs_in_gauss]],
                gmis_pos=gpos[mis],
                x_obs=x_obs,
                x_gobs=data.x[np.ix_(rows, obs[obs_in_gauss])],
                obs_k=kpos[obs[in_k_obs]],
                mis_k=kpos[mis[in_k_mis]],
                mis_sel=np.flatnonzero(in_k_mis),
                x_obs_k=x_obs_k,
                xx_obs_k=np.einsum("ij,ik->ijk", x_obs_k, x_obs_k),
            ))
    return Workspace(data=data, score_idx=score_idx, groups=groups)


# ---------------------------------------------------------------------------
# per-group state retained for the maximization steps
# ---------------------------------------------------------------------------

@dataclass
class _GroupState:
    kind: str                 # "complete" | "zero" | "quad" | "point"
    group: _Group
    offset: np.ndarray | None = None    # observed linear predictor, (g,)
    cumhaz: np.ndarray | None = None    # baseline cumulative hazard at y, (g,)
    # zero branch
    cmean: np.ndarray | None = None     # conditional means, (g, d)
    ccov: np.ndarray | None = None      # shared conditional covariance, (d, d)
    # rotated branches
    bnorm: float | None = None
    psi: np.ndarray | None = None
    slope: np.ndarray | None = None
    resid_cov: np.ndarray | None = None
    icept: np.ndarray | None = None     # (g, d-1)
    center: np.ndarray | None = None    # (g,)
    var1: float | None = None
    # quadrature state (quad branch only)
    xn: np.ndarray | None = None        # nodes, (g, order)
    lw: np.ndarray | None = None        # log weights, (g, order)
    den_log: np.ndarray | None = None   # logsumexp(lw, axis=1)
    log_scale: np.ndarray | None = None  # log of the node scale, (g,)


@dataclass
class EStepCache:
    """All E-step output needed by one maximization step, in dataset order."""

    ws: Workspace
    params: ParameterSet
    quad_order: int
    ex: np.ndarray          # (n, p)
    erisk: np.ndarray       # (n,)
    erisk_x: np.ndarray     # (n, k)
    erisk_xx: np.ndarray    # (n, k, k)
    sum_exx_gauss: np.ndarray  # sum over subjects of E[X X'] on the Gaussian block
    states: list
    exx: np.ndarray | None = None  # (n, p, p), only when requested

    def erisk_at(self, beta_new):
        """E[exp(X'beta_new) | observed] per subject, under the cached law.

        The conditional law (and the rotation) is the one fixed by the
        parameters this cache was built at; only the coefficient vector moves.
        """
        beta_new = np.asarray(beta_new, dtype=float)
        out = np.empty(self.ws.n)
        for st in self.states:
            grp = st.group
            off = grp.x_obs @ beta_new[grp.obs] if grp.obs.size else np.zeros(grp.rows.shape[0])
            if st.kind == "complete":
                out[grp.rows] = np.exp(off)
                continue
            b_mis = beta_new[grp.mis]
            if st.kind == "zero":
                expo = off + st.cmean @ b_mis + 0.5 * b_mis @ st.ccov @ b_mis
                out[grp.rows] = np.exp(expo)
                continue
            a = st.psi @ b_mis
            coef = a[0] + st.slope @ a[1:]
            const = st.icept @ a[1:] + 0.5 * a[1:] @ st.resid_cov @ a[1:]
            if st.kind == "point":
                log_e = coef * st.center
            else:
                log_e = logsumexp(st.lw + coef * st.xn, axis=1) - st.den_log
            vals = np.exp(off + const + log_e)
            if not np.all(np.isfinite(vals)):
                bad = grp.rows[~np.isfinite(vals)][0]
                raise IntegrationError(
                    f"risk expectation overflowed for subject {bad} at the proposed coefficients"
                )
            out[grp.rows] = vals
        return out


def _tilted_scalar_moments(lw, xn, bnorm):
    """First/second moments of the node distribution, plain and exp-tilted.

    Returns (m1, m2, t1, t2, log_tilt) where m1/m2 are E[x], E[x^2] under the
    normalized weights, t1/t2 the same under weights multiplied by e^{b x},
    and log_tilt = log E[e^{b x}].
    """
    lmax = lw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(lmax)):
        raise IntegrationError("tilted density vanished at every quadrature node")
    w = np.exp(lw - lmax)
    den = w.sum(axis=1)
    wn = w / den[:, None]
    m1 = (wn * xn).sum(axis=1)
    m2 = (wn * xn**2).sum(axis=1)
    lw2 = lw + bnorm * xn
    lmax2 = lw2.max(axis=1, keepdims=True)
    w2 = np.exp(lw2 - lmax2)
    den2 = w2.sum(axis=1)
    w2n = w2 / den2[:, None]
    t1 = (w2n * xn).sum(axis=1)
    t2 = (w2n * xn**2).sum(axis=1)
    log_tilt = (lmax2[:, 0] + np.log(den2)) - (lmax[:, 0] + np.log(den))
    return m1, m2, t1, t2, log_tilt


def _affine_moment_blocks(m1, m2, slope, icept, resid_cov):
    """Rotated-space E[h(x1) Xt] and E[h(x1) Xt Xt'] from scalar moments of x1.

    The remainder given x1 is Gaussian with mean icept + slope * x1 and
    covariance resid_cov, so both blocks are affine in (1, m1, m2).
    """
    g = m1.shape[0]
    d = slope.shape[0] + 1
    vec = np.empty((g, d))
    vec[:, 0] = m1
    vec[:, 1:] = icept + np.outer(m1, slope)
    mat = np.empty((g, d, d))
    mat[:, 0, 0] = m2
    cross = icept * m1[:, None] + np.outer(m2, slope)
    mat[:, 0, 1:] = cross
    mat[:, 1:, 0] = cross
    ii = np.einsum("gi,gj->gij", icept, icept)
    is_ = np.einsum("gi,j->gij", icept, slope)
    ss = np.outer(slope, slope)
    mat[:, 1:, 1:] = (
        resid_cov[None, :, :]
        + ii
        + (is_ + is_.transpose(0, 2, 1)) * m1[:, None, None]
        + ss[None, :, :] * m2[:, None, None]
    )
    return vec, mat


def _process_group(grp, data, params, rule, completion, ex, erisk, erisk_x,
                   erisk_xx, exx, n_gauss):
    """Compute one chunk's expectations, writing into its disjoint row slices.

    Returns (group state, partial Gaussian-block second-moment sum).
    """
    beta = params.beta
    rows = grp.rows
    g = rows.shape[0]
    sum_part = np.zeros((n_gauss, n_gauss))
    off = grp.x_obs @ beta[grp.obs] if grp.obs.size else np.zeros(g)

    if grp.mis.size == 0:
        ex[rows] = data.x[rows]
        er = np.exp(off)
        erisk[rows] = er
        if grp.obs_k.size:
            erisk_x[np.ix_(rows, grp.obs_k)] = er[:, None] * grp.x_obs_k
            erisk_xx[np.ix_(rows, grp.obs_k, grp.obs_k)] = er[:, None, None] * grp.xx_obs_k
        xg = grp.x_gobs
        if grp.gobs_pos.size:
            sum_part[np.ix_(grp.gobs_pos, grp.gobs_pos)] += xg.T @ xg
        if exx is not None:
            exx[np.ix_(rows, grp.obs, grp.obs)] = np.einsum("ij,ik->ijk", grp.x_obs, grp.x_obs)
        return _GroupState(kind="complete", group=grp, offset=off), sum_part

    cond = conditional_mvn(params.mu, params.sigma, grp.gmask, grp.x_gobs[0])
    d = grp.mis.size
    if grp.gobs_pos.size:
        s_oo = params.sigma[np.ix_(grp.gobs_pos, grp.gobs_pos)]
        s_mo = params.sigma[np.ix_(grp.gmis_pos, grp.gobs_pos)]
        bcoef = linalg.cho_solve(spd_factor(s_oo, "observed block"), s_mo.T).T
        cmean = params.mu[grp.gmis_pos] + (grp.x_gobs - params.mu[grp.gobs_pos]) @ bcoef.T
    else:
        cmean = np.broadcast_to(params.mu[grp.gmis_pos], (g, d)).copy()
    ccov = cond.cov
    cumhaz = np.atleast_1d(cumulative_hazard(params.baseline, data.y[rows]))
    delta = data.delta[rows].astype(float)

    b_mis = beta[grp.mis]
    bnorm = float(np.linalg.norm(b_mis))
    if bnorm < ZERO_BETA_TOL:
        er = np.exp(off)
        exx_mis = ccov[None] + np.einsum("gi,gj->gij", cmean, cmean)
        _scatter_group(grp, rows, cmean, exx_mis, er, er[:, None] * cmean,
                       er[:, None, None] * exx_mis,
                       ex, erisk, erisk_x, erisk_xx, exx, sum_part)
        state = _GroupState(kind="zero", group=grp, offset=off,
                            cumhaz=cumhaz, cmean=cmean, ccov=ccov)
        return state, sum_part

    slc = rotate_slice(cond, b_mis, completion=completion)
    psi, slope, resid = slc.psi, slc.slope, slc.resid_cov
    eta = cmean @ psi.T
    center = eta[:, 0]
    icept = eta[:, 1:] - np.outer(center, slope)
    var1 = slc.var1

    if slc.degenerate:
        m1 = t1 = center
        m2 = t2 = center**2
        log_tilt = bnorm * center
        state = _GroupState(kind="point", group=grp, offset=off, cumhaz=cumhaz,
                            bnorm=bnorm, psi=psi, slope=slope, resid_cov=resid,
                            icept=icept, center=center, var1=var1)
    else:
        mode, neg_curv = find_mode_arrays(delta, bnorm, cumhaz, off, center, var1)
        scale = 1.0 / np.sqrt(neg_curv)
        xn = mode[:, None] + scale[:, None] * rule.nodes[None, :]
        with np.errstate(over="ignore"):
            haz = cumhaz[:, None] * np.exp(bnorm * xn + off[:, None])
        lw = (rule.log_weights + rule.nodes**2)[None, :] \
            + delta[:, None] * bnorm * xn - haz \
            - (xn - center[:, None]) ** 2 / (2.0 * var1)
        lw = np.where(np.isfinite(lw), lw, -np.inf)
        m1, m2, t1, t2, log_tilt = _tilted_scalar_moments(lw, xn, bnorm)
        state = _GroupState(kind="quad", group=grp, offset=off, cumhaz=cumhaz,
                            bnorm=bnorm, psi=psi, slope=slope, resid_cov=resid,
                            icept=icept, center=center, var1=var1,
                            xn=xn, lw=lw, den_log=logsumexp(lw, axis=1),
                            log_scale=np.log(scale))

    vec1, mat1 = _affine_moment_blocks(m1, m2, slope, icept, resid)
    vec2, mat2 = _affine_moment_blocks(t1, t2, slope, icept, resid)
    ex_mis = vec1 @ psi
    exx_mis = np.einsum("ba,gbc,cd->gad", psi, mat1, psi, optimize=True)
    er = np.exp(off + log_tilt)
    if not np.all(np.isfinite(er)):
        bad = rows[~np.isfinite(er)][0]
        raise IntegrationError(f"risk expectation overflowed for subject {bad}")
    erx_mis = er[:, None] * (vec2 @ psi)
    erxx_mis = er[:, None, None] * np.einsum("ba,gbc,cd->gad", psi, mat2, psi, optimize=True)
    _scatter_group(grp, rows, ex_mis, exx_mis, er, erx_mis, erxx_mis,
                   ex, erisk, erisk_x, erisk_xx, exx, sum_part)
    return state, sum_part


def _scatter_group(grp, rows, ex_mis, exx_mis, er, erx_mis, erxx_mis,
                   ex, erisk, erisk_x, erisk_xx, exx, sum_part):
    """Write one chunk's missing-block results into the full-dimension arrays."""
    ex[np.ix_(rows, grp.obs)] = grp.x_obs
    ex[np.ix_(rows, grp.mis)] = ex_mis
    erisk[rows] = er
    if grp.obs_k.size:
        erisk_x[np.ix_(rows, grp.obs_k)] = er[:, None] * grp.x_obs_k
        erisk_xx[np.ix_(rows, grp.obs_k, grp.obs_k)] = er[:, None, None] * grp.xx_obs_k
    if grp.mis_k.size:
        erisk_x[np.ix_(rows, grp.mis_k)] = erx_mis[:, grp.mis_sel]
        erisk_xx[np.ix_(rows, grp.mis_k, grp.mis_k)] = \
            erxx_mis[np.ix_(np.arange(rows.shape[0]), grp.mis_sel, grp.mis_sel)]
        if grp.obs_k.size:
            cross = grp.x_obs_k[:, :, None] * erx_mis[:, None, grp.mis_sel]
            erisk_xx[np.ix_(rows, grp.obs_k, grp.mis_k)] = cross
            erisk_xx[np.ix_(rows, grp.mis_k, grp.obs_k)] = cross.transpose(0, 2, 1)
    # Gaussian-block second-moment accumulation for the covariance update
    xg = grp.x_gobs
    if grp.gobs_pos.size:
        sum_part[np.ix_(grp.gobs_pos, grp.gobs_pos)] += xg.T @ xg
        cross_g = xg.T @ ex_mis
        sum_part[np.ix_(grp.gobs_pos, grp.gmis_pos)] += cross_g
        sum_part[np.ix_(grp.gmis_pos, grp.gobs_pos)] += cross_g.T
    sum_part[np.ix_(grp.gmis_pos, grp.gmis_pos)] += exx_mis.sum(axis=0)
    if exx is not None:
        exx[np.ix_(rows, grp.obs, grp.obs)] = np.einsum("ij,ik->ijk", grp.x_obs, grp.x_obs)
        exx[np.ix_(rows, grp.mis, grp.mis)] = exx_mis
        if grp.obs.size:
            cross_f = grp.x_obs[:, :, None] * ex_mis[:, None, :]
            exx[np.ix_(rows, grp.obs, grp.mis)] = cross_f
            exx[np.ix_(rows, grp.mis, grp.obs)] = cross_f.transpose(0, 2, 1)


def compute_estep(ws, params, quad_order=DEFAULT_ORDER, keep_exx=False,
                  completion="householder", workers=1):
    """Run the E-step for every subject at the given parameters.

    Chunks are processed independently (optionally on a thread pool) and
    reduced in a fixed order, so the result does not depend on ``workers``.
    """
    data = ws.data
    n, p, k = ws.n, data.p, ws.k
    rule = gauss_hermite_rule(quad_order)
    n_gauss = params.mu.shape[0]

    ex = np.empty((n, p))
    erisk = np.empty(n)
    erisk_x = np.zeros((n, k))
    erisk_xx = np.zeros((n, k, k))
    exx = np.zeros((n, p, p)) if keep_exx else None

    def run(grp):
        return _process_group(grp, data, params, rule, completion,
                              ex, erisk, erisk_x, erisk_xx, exx, n_gauss)

    if workers > 1 and len(ws.groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, ws.groups))
    else:
        results = [run(grp) for grp in ws.groups]

    sum_exx_g = np.zeros((n_gauss, n_gauss))
    states = []
    for state, part in results:
        states.append(state)
        sum_exx_g += part
    return EStepCache(ws=ws, params=params, quad_order=quad_order,
                      ex=ex, erisk=erisk, erisk_x=erisk_x, erisk_xx=erisk_xx,
                      sum_exx_gauss=sum_exx_g, states=states, exx=exx)


# ---------------------------------------------------------------------------
# per-subject API
# ---------------------------------------------------------------------------

def _single_row_data(subject, params):
    p = params.p
    x = np.full(p, np.nan)
    x[subject.mask.observed] = subject.x_obs
    return SurvivalData(
        y=np.array([subject.y]), delta=np.array([subject.delta]),
        x=x[None, :], gauss_idx=params.gauss_idx,
    )


def subject_expectations(subject, params, quad_order=DEFAULT_ORDER,
                         completion="householder"):
    """All five expectation blocks for one subject at the given parameters.

    Dispatches to the closed-form Gaussian branch when the missing-block
    coefficients are zero; otherwise runs the rotated one-dimensional
    quadrature.
    """
    data = _single_row_data(subject, params)
    ws = build_workspace(data)
    cache = compute_estep(ws, params, quad_order=quad_order, keep_exx=True,
                          completion=completion)
    return SubjectExpectations(
        ex=cache.ex[0], exx=cache.exx[0], erisk=float(cache.erisk[0]),
        erisk_x=cache.erisk_x[0], erisk_xx=cache.erisk_xx[0],
    )


def closed_form_expectations(subject, params):
    """Expectation blocks when the missing-block coefficients are exactly zero.

    In that case exp(X'beta) is a constant given the observed coordinates and
    the missing block keeps its plain Gaussian conditional, unaffected by the
    follow-up data.
    """
    mis = subject.mask.missing
    if np.linalg.norm(params.beta[mis]) >= ZERO_BETA_TOL:
        raise ContractViolationError(
            "closed-form branch requires zero coefficients on the missing block"
        )
    p = params.p
    gauss = params.gauss_idx
    gmask = MissingMask(subject.mask.flags[gauss])
    x_full = np.full(p, np.nan)
    x_full[subject.mask.observed] = subject.x_obs
    cond = conditional_mvn(params.mu, params.sigma, gmask,
                           x_full[gauss][~gmask.flags])
    obs = subject.mask.observed
    ex = x_full.copy()
    ex[mis] = cond.mean
    exx = np.outer(ex, ex)
    exx[np.ix_(mis, mis)] += cond.cov
    erisk = float(np.exp(subject.x_obs @ params.beta[obs]))
    return SubjectExpectations(ex=ex, exx=exx, erisk=erisk,
                               erisk_x=erisk * ex, erisk_xx=erisk * exx)


def erisk_at_new_beta(subject, params, beta_new, quad_order=DEFAULT_ORDER):
    """E[exp(X'beta_new) | observed] with the conditional law fixed at ``params``.

    The rotation and the tilted one-dimensional law come from the current
    coefficients; the new coefficients enter through the first rotated
    coordinate and the moment-generating function of the remainder.
    """
    data = _single_row_data(subject, params)
    ws = build_workspace(data)
    cache = compute_estep(ws, params, quad_order=quad_order)
    return float(cache.erisk_at(np.asarray(beta_new, dtype=float))[0])


# ---------------------------------------------------------------------------
# observed-data log-likelihood pieces
# ---------------------------------------------------------------------------

def _gauss_logpdf_rows(x, mu, sigma):
    """Multivariate normal log density per row; x is (g, q)."""
    q = x.shape[1]
    if q == 0:
        return np.zeros(x.shape[0])
    factor = spd_factor(sigma, "observed Gaussian block")
    diff = x - mu
    sol = linalg.cho_solve(factor, diff.T)
    qf = np.einsum("ij,ji->i", diff, sol)
    logdet = 2.0 * np.log(np.diag(factor[0])).sum()
    return -0.5 * (q * np.log(2.0 * np.pi) + logdet + qf)


def loglik_from_cache(cache, log_jump):
    """Per-subject observed-data log-likelihood using an E-step cache.

    ``log_jump`` is the log baseline jump at each subject's event time (any
    value for censored subjects; multiplied by the event indicator). The cache
    must have been computed at the same parameters the likelihood is wanted at.
    """
    ws, params = cache.ws, cache.params
    data = ws.data
    delta = data.delta.astype(float)
    out = np.empty(ws.n)
    for st in cache.states:
        grp = st.group
        rows = grp.rows
        d_r = delta[rows]
        gpart = _gauss_logpdf_rows(grp.x_gobs, params.mu[grp.gobs_pos],
                                   params.sigma[np.ix_(grp.gobs_pos, grp.gobs_pos)])
        if st.kind == "complete":
            lp = st.offset
            ch = np.atleast_1d(cumulative_hazard(params.baseline, data.y[rows]))
            out[rows] = d_r * (log_jump[rows] + lp) - ch * np.exp(lp) + gpart
            continue
        base = d_r * (log_jump[rows] + st.offset)
        if st.kind == "zero":
            out[rows] = base - st.cumhaz * np.exp(st.offset) + gpart
        elif st.kind == "point":
            lp1 = st.bnorm * st.center
            out[rows] = base + d_r * lp1 - st.cumhaz * np.exp(lp1 + st.offset) + gpart
        else:
            log_integral = st.log_scale + st.den_log
            out[rows] = base + log_integral \
                - 0.5 * np.log(2.0 * np.pi * st.var1) + gpart
    return out
