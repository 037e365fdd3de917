"""Multiresolution Gaussian-process emulator for reduced scores.

One GP is fitted per principal component.  The expensive process is modeled
as rho times the latent cheap process plus an independent GP, linear trend
coefficients for both fidelities carry a normal prior and are integrated
out analytically, and the remaining hyperparameters are estimated by MAP
with multi-start L-BFGS.  A single-resolution variant using only the
expensive rows provides the comparison baseline.

All covariance evaluation happens in unit-scaled parameter coordinates;
``fit_multires`` / ``fit_singleres`` handle the scaling, the lower-level
operations expect scaled inputs.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .design import Design, ParameterSpace
from .errors import AllStartsFailed, ExtrapolationWarning, NotPositiveDefinite
from . import kernels

JITTER_START = 1e-10  # relative to trace(M)/dim, escalates x10
JITTER_MAX = 1e-6
LOG_BOUNDS = (-16.0, 10.0)
RHO_BOUNDS = (-10.0, 10.0)


@dataclass(frozen=True)
class EmulatorParams:
    """Hyperparameters of one per-component multiresolution GP.

    ``range_cheap`` / ``range_exp`` are the squared-exponential range
    parameters (one per input dimension, scaled units squared); ``var_*``
    the process variances and ``nugget_*`` the nugget variances, all in
    score units squared.
    """

    rho: float
    var_cheap: float
    var_exp: float
    nugget_cheap: float
    nugget_exp: float
    range_cheap: np.ndarray
    range_exp: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "range_cheap", np.atleast_1d(np.asarray(self.range_cheap, dtype=float)))
        object.__setattr__(self, "range_exp", np.atleast_1d(np.asarray(self.range_exp, dtype=float)))
        for name in ("var_cheap", "var_exp", "nugget_cheap", "nugget_exp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if np.any(self.range_cheap <= 0) or np.any(self.range_exp <= 0):
            raise ValueError("range parameters must be positive")


@dataclass(frozen=True)
class HrParams:
    """Hyperparameters of one single-resolution (expensive-only) GP."""

    var: float
    nugget: float
    range_: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "range_", np.atleast_1d(np.asarray(self.range_, dtype=float)))
        if not (self.var > 0 and self.nugget > 0) or np.any(self.range_ <= 0):
            raise ValueError("HR parameters must be positive")


@dataclass(frozen=True)
class TrendPrior:
    """Normal prior on the stacked (cheap, expensive) trend coefficients."""

    mean: np.ndarray
    cov_cheap: np.ndarray
    cov_exp: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov_cheap", np.asarray(self.cov_cheap, dtype=float))
        object.__setattr__(self, "cov_exp", np.asarray(self.cov_exp, dtype=float))
        k1 = self.cov_cheap.shape[0]
        if self.cov_cheap.shape != (k1, k1) or self.cov_exp.shape != (k1, k1):
            raise ValueError("trend covariance blocks must be square and equal-sized")
        if self.mean.shape != (2 * k1,):
            raise ValueError("trend mean must have length 2*(k+1)")

    @property
    def block_cov(self) -> np.ndarray:
        k1 = self.cov_cheap.shape[0]
        cov = np.zeros((2 * k1, 2 * k1))
        cov[:k1, :k1] = self.cov_cheap
        cov[k1:, k1:] = self.cov_exp
        return cov


def default_trend_prior(k: int) -> TrendPrior:
    """Standard-normal prior on all trend coefficients."""
    return TrendPrior(np.zeros(2 * (k + 1)), np.eye(k + 1), np.eye(k + 1))


@dataclass(frozen=True)
class HyperPriors:
    """Priors on the GP hyperparameters.

    Variances and nuggets are inverse-gamma (shape, rate), ranges are gamma
    (shape, rate), rho is normal (mean, variance).
    """

    var_cheap: tuple = (2.0, 2.0)
    var_exp: tuple = (2.0, 2.0)
    nugget_cheap: tuple = (2.0, 2.0)
    nugget_exp: tuple = (2.0, 2.0)
    range_cheap: tuple = (2.0, 2.0)
    range_exp: tuple = (2.0, 2.0)
    rho_mean: float = 1.0
    rho_var: float = 1.0 / 3.0

    def __post_init__(self):
        for name in ("var_cheap", "var_exp", "nugget_cheap", "nugget_exp", "range_cheap", "range_exp"):
            shape, rate = getattr(self, name)
            if not (shape > 0 and rate > 0):
                raise ValueError(f"{name} shape and rate must be positive")
        if not self.rho_var > 0:
            raise ValueError("rho_var must be positive")


@dataclass(frozen=True)
class PredictiveDistribution:
    """Per-component predictive means and variances at one setting."""

    mean: np.ndarray
    variance: np.ndarray
    extrapolated: bool = False


# --- covariance functions --------------------------------------------------


def _sq_dist(a: np.ndarray, b: np.ndarray, inv_range: np.ndarray) -> np.ndarray:
    d2 = (np.atleast_2d(a)[:, None, :] - np.atleast_2d(b)[None, :, :]) ** 2
    return d2 @ inv_range


def _eq_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.all(np.atleast_2d(a)[:, None, :] == np.atleast_2d(b)[None, :, :], axis=2)


def cov_cc(theta_i, theta_j, params: EmulatorParams) -> float:
    """Cheap-cheap covariance at two (scaled) settings."""
    theta_i = np.atleast_1d(np.asarray(theta_i, dtype=float))
    theta_j = np.atleast_1d(np.asarray(theta_j, dtype=float))
    d2 = np.sum((theta_i - theta_j) ** 2 / params.range_cheap)
    val = params.var_cheap * math.exp(-d2)
    if np.array_equal(theta_i, theta_j):
        val += params.nugget_cheap
    return val


def cov_ee(theta_i, theta_j, params: EmulatorParams) -> float:
    """Expensive-expensive covariance: rho^2 cheap kernel + own GP + nugget."""
    theta_i = np.atleast_1d(np.asarray(theta_i, dtype=float))
    theta_j = np.atleast_1d(np.asarray(theta_j, dtype=float))
    diff2 = (theta_i - theta_j) ** 2
    val = params.rho**2 * params.var_cheap * math.exp(-np.sum(diff2 / params.range_cheap))
    val += params.var_exp * math.exp(-np.sum(diff2 / params.range_exp))
    if np.array_equal(theta_i, theta_j):
        val += params.nugget_exp
    return val


def cov_ce(theta_cheap_i, theta_exp_j, params: EmulatorParams) -> float:
    """Cheap-expensive cross covariance; carries rho once and no nugget."""
    ti = np.atleast_1d(np.asarray(theta_cheap_i, dtype=float))
    tj = np.atleast_1d(np.asarray(theta_exp_j, dtype=float))
    d2 = np.sum((ti - tj) ** 2 / params.range_cheap)
    return params.rho * params.var_cheap * math.exp(-d2)


# --- gram assembly ----------------------------------------------------------


def _mean_basis(theta: np.ndarray) -> np.ndarray:
    """Linear trend basis (1, theta) per row."""
    theta = np.atleast_2d(theta)
    return np.hstack([np.ones((theta.shape[0], 1)), theta])


def _trend_matrix(theta_cheap: np.ndarray, theta_exp: np.ndarray, rho: float) -> np.ndarray:
    """Block matrix [[h(theta_c), 0], [rho h(theta_e), h(theta_e)]]."""
    k1 = theta_exp.shape[1] + 1
    p_c, p_e = theta_cheap.shape[0], theta_exp.shape[0]
    h = np.zeros((p_c + p_e, 2 * k1))
    if p_c:
        h[:p_c, :k1] = _mean_basis(theta_cheap)
    he = _mean_basis(theta_exp)
    h[p_c:, :k1] = rho * he
    h[p_c:, k1:] = he
    return h


def _chol_with_jitter(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lower Cholesky factor, escalating diagonal jitter on failure.

    Returns (chol, possibly-jittered matrix); raises NotPositiveDefinite
    once the jitter cap is reached.
    """
    try:
        return cholesky(m, lower=True), m
    except np.linalg.LinAlgError:
        pass
    base = np.trace(m) / m.shape[0]
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-12):
        mj = m + jitter * base * np.eye(m.shape[0])
        try:
            return cholesky(mj, lower=True), mj
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NotPositiveDefinite(
        f"gram matrix not positive definite after jitter escalation to {JITTER_MAX}"
    )


def _gp_cov_blocks(theta_cheap, theta_exp, params: EmulatorParams) -> np.ndarray:
    """GP + nugget covariance of the stacked (cheap, expensive) scores."""
    p_c, p_e = theta_cheap.shape[0], theta_exp.shape[0]
    n = p_c + p_e
    stacked = np.vstack([theta_cheap, theta_exp]) if p_c else theta_exp
    corr_c = np.exp(-_sq_dist(stacked, stacked, 1.0 / params.range_cheap))
    amp = np.concatenate([np.ones(p_c), np.full(p_e, params.rho)])
    v = params.var_cheap * np.outer(amp, amp) * corr_c
    ee = np.s_[p_c:, p_c:]
    v[ee] += params.var_exp * np.exp(-_sq_dist(theta_exp, theta_exp, 1.0 / params.range_exp))
    if p_c:
        v[:p_c, :p_c][_eq_matrix(theta_cheap, theta_cheap)] += params.nugget_cheap
    v[ee][_eq_matrix(theta_exp, theta_exp)] += params.nugget_exp
    return v


def joint_gram(
    theta_cheap: np.ndarray,
    theta_exp: np.ndarray,
    params: EmulatorParams,
    trend_prior: TrendPrior,
) -> tuple[np.ndarray, np.ndarray]:
    """Trend matrix H and marginal covariance M = V + H B H^T.

    M comes back with whatever diagonal jitter was needed for a Cholesky
    factorization to succeed.
    """
    theta_cheap = np.atleast_2d(np.asarray(theta_cheap, dtype=float))
    theta_exp = np.atleast_2d(np.asarray(theta_exp, dtype=float))
    v = _gp_cov_blocks(theta_cheap, theta_exp, params)
    h = _trend_matrix(theta_cheap, theta_exp, params.rho)
    m = v + h @ trend_prior.block_cov @ h.T
    m = 0.5 * (m + m.T)
    _, m = _chol_with_jitter(m)
    return h, m


# --- posterior density -------------------------------------------------------


def _invgamma_logpdf(x: float, shape: float, rate: float) -> float:
    return shape * math.log(rate) - math.lgamma(shape) - (shape + 1) * math.log(x) - rate / x


def _gamma_logpdf(x: float, shape: float, rate: float) -> float:
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1) * math.log(x) - rate * x


def _normal_logpdf(x: float, mean: float, var: float) -> float:
    return -0.5 * (math.log(2 * math.pi * var) + (x - mean) ** 2 / var)


def _log_hyperprior(params: EmulatorParams, hp: HyperPriors) -> float:
    out = _invgamma_logpdf(params.var_cheap, *hp.var_cheap)
    out += _invgamma_logpdf(params.var_exp, *hp.var_exp)
    out += _invgamma_logpdf(params.nugget_cheap, *hp.nugget_cheap)
    out += _invgamma_logpdf(params.nugget_exp, *hp.nugget_exp)
    out += sum(_gamma_logpdf(v, *hp.range_cheap) for v in params.range_cheap)
    out += sum(_gamma_logpdf(v, *hp.range_exp) for v in params.range_exp)
    out += _normal_logpdf(params.rho, hp.rho_mean, hp.rho_var)
    return out


def _gauss_loglik(chol_m: np.ndarray, resid: np.ndarray) -> float:
    white = solve_triangular(chol_m, resid, lower=True)
    n = resid.shape[0]
    return -0.5 * (n * math.log(2 * math.pi) + white @ white) - np.sum(np.log(np.diag(chol_m)))


def log_posterior(
    params: EmulatorParams,
    hyperpriors: HyperPriors,
    scores: np.ndarray,
    theta_cheap: np.ndarray,
    theta_exp: np.ndarray,
    trend_prior: TrendPrior,
) -> float:
    """Marginal log posterior of one component's hyperparameters.

    Non-positive-definite grams count as rejected points (-inf).
    """
    try:
        h, m = joint_gram(theta_cheap, theta_exp, params, trend_prior)
    except NotPositiveDefinite:
        return -np.inf
    chol_m, _ = _chol_with_jitter(m)
    resid = np.asarray(scores, dtype=float) - h @ trend_prior.mean
    return _gauss_loglik(chol_m, resid) + _log_hyperprior(params, hyperpriors)


# --- MAP fitting -------------------------------------------------------------


def _params_to_x(params: EmulatorParams) -> np.ndarray:
    return np.concatenate(
        [
            np.log(
                [params.var_cheap, params.var_exp, params.nugget_cheap, params.nugget_exp]
            ),
            np.log(params.range_cheap),
            np.log(params.range_exp),
            [params.rho],
        ]
    )


def _x_to_params(x: np.ndarray, k: int) -> EmulatorParams:
    logs = np.exp(x[: 4 + 2 * k])
    return EmulatorParams(
        rho=float(x[-1]),
        var_cheap=float(logs[0]),
        var_exp=float(logs[1]),
        nugget_cheap=float(logs[2]),
        nugget_exp=float(logs[3]),
        range_cheap=logs[4 : 4 + k],
        range_exp=logs[4 + k : 4 + 2 * k],
    )


class _FitWorkspace:
    """Per-component cached pieces of the MAP objective.

    Squared-distance tensors and trend cross products are fixed given the
    designs; each objective evaluation then costs two dense exponentials
    and a Cholesky.
    """

    def __init__(self, scores, theta_cheap, theta_exp, hyperpriors, trend_prior):
        self.scores = np.asarray(scores, dtype=float)
        self.theta_cheap = np.atleast_2d(np.asarray(theta_cheap, dtype=float))
        self.theta_exp = np.atleast_2d(np.asarray(theta_exp, dtype=float))
        self.hp = hyperpriors
        self.trend = trend_prior
        self.k = self.theta_exp.shape[1]
        self.p_c = self.theta_cheap.shape[0]
        self.p_e = self.theta_exp.shape[0]
        n = self.p_c + self.p_e
        stacked = np.vstack([self.theta_cheap, self.theta_exp]) if self.p_c else self.theta_exp
        d = stacked[:, None, :] - stacked[None, :, :]
        self.d2_full = np.ascontiguousarray(np.moveaxis(d**2, 2, 0))  # (k, n, n)
        de = self.theta_exp[:, None, :] - self.theta_exp[None, :, :]
        self.d2_exp = np.ascontiguousarray(np.moveaxis(de**2, 2, 0))
        self.eq_cc = _eq_matrix(self.theta_cheap, self.theta_cheap) if self.p_c else None
        self.eq_ee = _eq_matrix(self.theta_exp, self.theta_exp)

        k1 = self.k + 1
        he = _mean_basis(self.theta_exp)
        h0 = np.zeros((n, 2 * k1))
        if self.p_c:
            h0[: self.p_c, :k1] = _mean_basis(self.theta_cheap)
        h0[self.p_c :, k1:] = he
        h1 = np.zeros((n, 2 * k1))
        h1[self.p_c :, :k1] = he
        b = trend_prior.block_cov
        self.g00 = h0 @ b @ h0.T
        self.g01 = h0 @ b @ h1.T
        self.g11 = h1 @ b @ h1.T
        self.h0 = h0
        self.h1 = h1

    def gram(self, params: EmulatorParams) -> np.ndarray:
        rho = params.rho
        corr_c = np.exp(-np.tensordot(1.0 / params.range_cheap, self.d2_full, axes=1))
        amp = np.concatenate([np.ones(self.p_c), np.full(self.p_e, rho)])
        m = params.var_cheap * np.outer(amp, amp) * corr_c
        ee = np.s_[self.p_c :, self.p_c :]
        m[ee] += params.var_exp * np.exp(
            -np.tensordot(1.0 / params.range_exp, self.d2_exp, axes=1)
        )
        if self.p_c:
            m[: self.p_c, : self.p_c][self.eq_cc] += params.nugget_cheap
        m[ee][self.eq_ee] += params.nugget_exp
        m += self.g00 + rho * (self.g01 + self.g01.T) + rho**2 * self.g11
        return 0.5 * (m + m.T)

    def trend_mean_vector(self, rho: float) -> np.ndarray:
        return (self.h0 + rho * self.h1) @ self.trend.mean

    def log_posterior(self, params: EmulatorParams) -> float:
        m = self.gram(params)
        try:
            chol_m, _ = _chol_with_jitter(m)
        except NotPositiveDefinite:
            return -np.inf
        resid = self.scores - self.trend_mean_vector(params.rho)
        return _gauss_loglik(chol_m, resid) + _log_hyperprior(params, self.hp)


def _draw_start(hp: HyperPriors, k: int, rng: np.random.Generator) -> EmulatorParams:
    def ig(shape_rate):
        shape, rate = shape_rate
        return 1.0 / rng.gamma(shape, 1.0 / rate)

    def gam(shape_rate, size=None):
        shape, rate = shape_rate
        return rng.gamma(shape, 1.0 / rate, size=size)

    return EmulatorParams(
        rho=float(rng.normal(hp.rho_mean, math.sqrt(hp.rho_var))),
        var_cheap=ig(hp.var_cheap),
        var_exp=ig(hp.var_exp),
        nugget_cheap=ig(hp.nugget_cheap),
        nugget_exp=ig(hp.nugget_exp),
        range_cheap=gam(hp.range_cheap, k),
        range_exp=gam(hp.range_exp, k),
    )


def fit(
    scores: np.ndarray,
    theta_cheap: np.ndarray,
    theta_exp: np.ndarray,
    hyperpriors: HyperPriors | None = None,
    trend_prior: TrendPrior | None = None,
    n_starts: int = 8,
    seed: int = 0,
    extra_starts: tuple = (),
) -> EmulatorParams:
    """MAP estimate of one component's hyperparameters.

    L-BFGS-B runs from ``n_starts`` hyperprior draws (plus any
    ``extra_starts``) over log-transformed positive parameters and raw rho;
    the best end point wins and is never worse than any probed start.
    """
    theta_cheap = np.atleast_2d(np.asarray(theta_cheap, dtype=float))
    theta_exp = np.atleast_2d(np.asarray(theta_exp, dtype=float))
    if theta_exp.shape[0] < 2 or theta_cheap.shape[0] < 2:
        raise ValueError("need at least 2 cheap and 2 expensive design points")
    k = theta_exp.shape[1]
    if hyperpriors is None:
        hyperpriors = HyperPriors()
    if trend_prior is None:
        trend_prior = default_trend_prior(k)
    ws = _FitWorkspace(scores, theta_cheap, theta_exp, hyperpriors, trend_prior)

    def objective(x):
        val = ws.log_posterior(_x_to_params(x, k))
        return -val if np.isfinite(val) else 1e12

    rng = np.random.default_rng(seed)
    starts = [_draw_start(hyperpriors, k, rng) for _ in range(n_starts)]
    starts.extend(extra_starts)

    n_log = 4 + 2 * k
    bounds = [LOG_BOUNDS] * n_log + [RHO_BOUNDS]
    best_x = None
    best_val = np.inf
    for start in starts:
        x0 = np.clip(
            _params_to_x(start),
            [b[0] for b in bounds],
            [b[1] for b in bounds],
        )
        f0 = objective(x0)
        if f0 < best_val:
            best_val, best_x = f0, x0
        if f0 >= 1e12:
            continue
        res = minimize(
            objective,
            x0,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": 200},
        )
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_x = res.fun, res.x
    if best_x is None or best_val >= 1e12:
        raise AllStartsFailed("no optimizer start produced a finite posterior")
    return _x_to_params(best_x, k)


# --- fitted emulators --------------------------------------------------------


@dataclass
class _Packed:
    """Contiguous per-component arrays in the kernel layout."""

    theta_cheap: np.ndarray
    theta_exp: np.ndarray
    rho: np.ndarray
    var_c: np.ndarray
    var_e: np.ndarray
    nug_e: np.ndarray
    inv_range_c: np.ndarray
    inv_range_e: np.ndarray
    trend_mean: np.ndarray
    trend_cov_c: np.ndarray
    trend_cov_e: np.ndarray
    trend_w: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray


def _pack(theta_cheap, theta_exp, params_list, trend_prior, grams, chols, alphas) -> _Packed:
    n_comp = len(params_list)
    k = theta_exp.shape[1]
    n = theta_cheap.shape[0] + theta_exp.shape[0]
    k1 = k + 1
    trend_w = np.empty((n_comp, 2 * k1, n))
    for j, params in enumerate(params_list):
        h = _trend_matrix(theta_cheap, theta_exp, params.rho)
        trend_w[j] = trend_prior.block_cov @ h.T
    return _Packed(
        theta_cheap=np.ascontiguousarray(theta_cheap),
        theta_exp=np.ascontiguousarray(theta_exp),
        rho=np.array([p.rho for p in params_list]),
        var_c=np.array([p.var_cheap for p in params_list]),
        var_e=np.array([p.var_exp for p in params_list]),
        nug_e=np.array([p.nugget_exp for p in params_list]),
        inv_range_c=np.array([1.0 / p.range_cheap for p in params_list]),
        inv_range_e=np.array([1.0 / p.range_exp for p in params_list]),
        trend_mean=np.ascontiguousarray(trend_prior.mean),
        trend_cov_c=np.ascontiguousarray(trend_prior.cov_cheap),
        trend_cov_e=np.ascontiguousarray(trend_prior.cov_exp),
        trend_w=trend_w,
        chol=np.ascontiguousarray(np.stack(chols)),
        alpha=np.ascontiguousarray(np.stack(alphas)),
    )


class MultiResEmulator:
    """Fitted per-component multiresolution GPs over a parameter space."""

    uses_cheap = True

    def __init__(self, space, theta_cheap, theta_exp, scores_cheap, scores_exp,
                 params_list, trend_prior, hyperpriors, seed, n_starts):
        self.space = space
        self.theta_cheap = np.atleast_2d(theta_cheap)
        self.theta_exp = np.atleast_2d(theta_exp)
        self.scores_cheap = np.atleast_2d(scores_cheap)
        self.scores_exp = np.atleast_2d(scores_exp)
        self.params_list = list(params_list)
        self.trend_prior = trend_prior
        self.hyperpriors = hyperpriors
        self.seed = seed
        self.n_starts = n_starts
        self.grams = []
        self.chols = []
        alphas = []
        for j, params in enumerate(self.params_list):
            h, m = joint_gram(self.theta_cheap, self.theta_exp, params, trend_prior)
            chol_m, m = _chol_with_jitter(m)
            t = np.concatenate([self.scores_cheap[:, j], self.scores_exp[:, j]])
            alpha = cho_solve((chol_m, True), t - h @ trend_prior.mean)
            self.grams.append(m)
            self.chols.append(chol_m)
            alphas.append(alpha)
        self._packed = _pack(
            self.theta_cheap, self.theta_exp, self.params_list, trend_prior,
            self.grams, self.chols, alphas,
        )

    @property
    def n_components(self) -> int:
        return len(self.params_list)

    @property
    def n_trend_params(self) -> int:
        return self.trend_prior.mean.shape[0]

    def stacked_scores(self, j: int) -> np.ndarray:
        return np.concatenate([self.scores_cheap[:, j], self.scores_exp[:, j]])


class SingleResEmulator:
    """Expensive-only GP baseline; shares the prediction kernel via an
    inert cheap block (rho = 0, zero trend-prior coupling)."""

    uses_cheap = False

    def __init__(self, space, theta_exp, scores_exp, params_list,
                 trend_mean, trend_cov, hyperpriors, seed, n_starts):
        self.space = space
        self.theta_exp = np.atleast_2d(theta_exp)
        self.scores_exp = np.atleast_2d(scores_exp)
        self.params_list = list(params_list)
        self.trend_mean = np.asarray(trend_mean, dtype=float)
        self.trend_cov = np.asarray(trend_cov, dtype=float)
        self.hyperpriors = hyperpriors
        self.seed = seed
        self.n_starts = n_starts
        k = self.theta_exp.shape[1]
        k1 = k + 1
        self.theta_cheap = np.zeros((0, k))
        full_prior = TrendPrior(
            np.concatenate([np.zeros(k1), self.trend_mean]),
            np.zeros((k1, k1)),
            self.trend_cov,
        )
        self.trend_prior = full_prior
        self.grams = []
        self.chols = []
        alphas = []
        for j, hr in enumerate(self.params_list):
            mr = _hr_as_mr(hr)
            h, m = joint_gram(self.theta_cheap, self.theta_exp, mr, full_prior)
            chol_m, m = _chol_with_jitter(m)
            alpha = cho_solve((chol_m, True), self.scores_exp[:, j] - h @ full_prior.mean)
            self.grams.append(m)
            self.chols.append(chol_m)
            alphas.append(alpha)
        self._packed = _pack(
            self.theta_cheap, self.theta_exp,
            [_hr_as_mr(p) for p in self.params_list], full_prior,
            self.grams, self.chols, alphas,
        )

    @property
    def n_components(self) -> int:
        return len(self.params_list)

    @property
    def n_trend_params(self) -> int:
        return self.trend_mean.shape[0]

    def stacked_scores(self, j: int) -> np.ndarray:
        return self.scores_exp[:, j]


def _hr_as_mr(hr: HrParams) -> EmulatorParams:
    # inert cheap parameters: rho = 0 removes them from every formula
    return EmulatorParams(
        rho=0.0,
        var_cheap=1.0,
        var_exp=hr.var,
        nugget_cheap=1.0,
        nugget_exp=hr.nugget,
        range_cheap=np.ones_like(hr.range_),
        range_exp=hr.range_,
    )


def _component_seeds(seed: int, n_comp: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n_comp)
    return [int(c.generate_state(1)[0]) for c in children]


def fit_multires(
    design: Design,
    scores: np.ndarray,
    hyperpriors: HyperPriors | None = None,
    trend_prior: TrendPrior | None = None,
    n_starts: int = 8,
    seed: int = 0,
    threads: int = 1,
) -> MultiResEmulator:
    """Fit one multiresolution GP per score column.

    ``scores`` rows follow the ensemble convention (expensive block first).
    Components are fitted independently with per-component seeds derived
    from ``seed``, so thread count does not change results.
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    space = design.space
    p_e = design.n_expensive
    theta_exp = space.scale(design.expensive_points)
    theta_cheap = space.scale(design.cheap_points)
    scores_exp = scores[:p_e]
    scores_cheap = scores[p_e:]
    if hyperpriors is None:
        hyperpriors = HyperPriors()
    if trend_prior is None:
        trend_prior = default_trend_prior(space.k)
    seeds = _component_seeds(seed, scores.shape[1])

    def fit_one(j):
        t = np.concatenate([scores_cheap[:, j], scores_exp[:, j]])
        return fit(t, theta_cheap, theta_exp, hyperpriors, trend_prior,
                   n_starts=n_starts, seed=seeds[j])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            params_list = list(pool.map(fit_one, range(scores.shape[1])))
    else:
        params_list = [fit_one(j) for j in range(scores.shape[1])]
    return MultiResEmulator(
        space, theta_cheap, theta_exp, scores_cheap, scores_exp,
        params_list, trend_prior, hyperpriors, seed, n_starts,
    )


def fit_hr(
    scores: np.ndarray,
    theta_exp: np.ndarray,
    hyperpriors: HyperPriors | None = None,
    trend_mean: np.ndarray | None = None,
    trend_cov: np.ndarray | None = None,
    n_starts: int = 8,
    seed: int = 0,
) -> HrParams:
    """MAP hyperparameters of the expensive-only GP for one component."""
    theta_exp = np.atleast_2d(np.asarray(theta_exp, dtype=float))
    if theta_exp.shape[0] < 2:
        raise ValueError("need at least 2 expensive design points")
    k = theta_exp.shape[1]
    if hyperpriors is None:
        hyperpriors = HyperPriors()
    if trend_mean is None:
        trend_mean = np.zeros(k + 1)
    if trend_cov is None:
        trend_cov = np.eye(k + 1)
    k1 = k + 1
    full_prior = TrendPrior(
        np.concatenate([np.zeros(k1), trend_mean]), np.zeros((k1, k1)), trend_cov
    )
    ws = _FitWorkspace(scores, np.zeros((0, k)), theta_exp, hyperpriors, full_prior)

    def objective(x):
        params = EmulatorParams(
            rho=0.0,
            var_cheap=1.0,
            var_exp=math.exp(x[0]),
            nugget_cheap=1.0,
            nugget_exp=math.exp(x[1]),
            range_cheap=np.ones(k),
            range_exp=np.exp(x[2:]),
        )
        m = ws.gram(params)
        try:
            chol_m, _ = _chol_with_jitter(m)
        except NotPositiveDefinite:
            return 1e12
        resid = ws.scores - ws.trend_mean_vector(0.0)
        val = _gauss_loglik(chol_m, resid)
        val += _invgamma_logpdf(params.var_exp, *hyperpriors.var_exp)
        val += _invgamma_logpdf(params.nugget_exp, *hyperpriors.nugget_exp)
        val += sum(_gamma_logpdf(v, *hyperpriors.range_exp) for v in params.range_exp)
        return -val if np.isfinite(val) else 1e12

    rng = np.random.default_rng(seed)
    bounds = [LOG_BOUNDS] * (2 + k)
    best_x, best_val = None, np.inf
    for _ in range(n_starts):
        draw = _draw_start(hyperpriors, k, rng)
        x0 = np.clip(
            np.concatenate([np.log([draw.var_exp, draw.nugget_exp]), np.log(draw.range_exp)]),
            LOG_BOUNDS[0],
            LOG_BOUNDS[1],
        )
        f0 = objective(x0)
        if f0 < best_val:
            best_val, best_x = f0, x0
        if f0 >= 1e12:
            continue
        res = minimize(objective, x0, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 200})
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_x = res.fun, res.x
    if best_x is None or best_val >= 1e12:
        raise AllStartsFailed("no optimizer start produced a finite posterior")
    return HrParams(
        var=math.exp(best_x[0]), nugget=math.exp(best_x[1]), range_=np.exp(best_x[2:])
    )


def fit_singleres(
    design: Design,
    scores_exp: np.ndarray,
    hyperpriors: HyperPriors | None = None,
    trend_mean: np.ndarray | None = None,
    trend_cov: np.ndarray | None = None,
    n_starts: int = 8,
    seed: int = 0,
    threads: int = 1,
) -> SingleResEmulator:
    """Fit the expensive-only baseline to every score column."""
    scores_exp = np.atleast_2d(np.asarray(scores_exp, dtype=float))
    space = design.space
    theta_exp = space.scale(design.expensive_points)
    if hyperpriors is None:
        hyperpriors = HyperPriors()
    if trend_mean is None:
        trend_mean = np.zeros(space.k + 1)
    if trend_cov is None:
        trend_cov = np.eye(space.k + 1)
    seeds = _component_seeds(seed, scores_exp.shape[1])

    def fit_one(j):
        return fit_hr(scores_exp[:, j], theta_exp, hyperpriors, trend_mean,
                      trend_cov, n_starts=n_starts, seed=seeds[j])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            params_list = list(pool.map(fit_one, range(scores_exp.shape[1])))
    else:
        params_list = [fit_one(j) for j in range(scores_exp.shape[1])]
    return SingleResEmulator(
        space, theta_exp, scores_exp, params_list,
        trend_mean, trend_cov, hyperpriors, seed, n_starts,
    )


# --- prediction ---------------------------------------------------------------


def predict_scaled(emulator, theta0_scaled: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Kernel call on already unit-scaled coordinates."""
    p = emulator._packed
    theta0 = np.ascontiguousarray(np.atleast_1d(theta0_scaled), dtype=float)
    return kernels.predict_scores(
        theta0, p.theta_cheap, p.theta_exp, p.rho, p.var_c, p.var_e, p.nug_e,
        p.inv_range_c, p.inv_range_e, p.trend_mean, p.trend_cov_c, p.trend_cov_e,
        p.trend_w, p.chol, p.alpha,
    )


def predict(emulator, theta0: np.ndarray) -> PredictiveDistribution:
    """Predictive distribution of the expensive scores at ``theta0``.

    ``theta0`` is in native units.  Settings outside the training space are
    allowed but flagged (and warned about): the GP extrapolates there.
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    extrapolated = not emulator.space.contains(theta0)
    if extrapolated:
        warnings.warn(
            f"predicting outside the parameter space at {theta0.tolist()}",
            ExtrapolationWarning,
            stacklevel=2,
        )
    mean, var = predict_scaled(emulator, emulator.space.scale(theta0))
    return PredictiveDistribution(mean=mean, variance=var, extrapolated=extrapolated)


def predict_hr(emulator: SingleResEmulator, theta0: np.ndarray) -> PredictiveDistribution:
    """Single-resolution counterpart of :func:`predict`."""
    return predict(emulator, theta0)


def predict_many(emulator, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Means and variances, shape (m, n_components) each, at m settings."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    means = np.empty((thetas.shape[0], emulator.n_components))
    variances = np.empty_like(means)
    scaled = emulator.space.scale(thetas)
    for i in range(thetas.shape[0]):
        means[i], variances[i] = predict_scaled(emulator, scaled[i])
    return means, variances


def predict_joint(emulator, thetas: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Joint predictive (mean vector, covariance matrix) per component.

    Used by validation diagnostics that whiten a whole test set at once;
    cross-covariances between test settings are included.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    scaled = emulator.space.scale(thetas)
    p = emulator._packed
    basis = _mean_basis(scaled)
    out = []
    for j, params in enumerate(
        emulator.params_list if emulator.uses_cheap
        else [_hr_as_mr(q) for q in emulator.params_list]
    ):
        a0 = np.hstack([params.rho * basis, basis])
        corr_c_cheap = np.exp(-_sq_dist(scaled, p.theta_cheap, 1.0 / params.range_cheap))
        corr_c_exp = np.exp(-_sq_dist(scaled, p.theta_exp, 1.0 / params.range_cheap))
        corr_e_exp = np.exp(-_sq_dist(scaled, p.theta_exp, 1.0 / params.range_exp))
        cross = np.hstack(
            [
                params.rho * params.var_cheap * corr_c_cheap,
                params.rho**2 * params.var_cheap * corr_c_exp + params.var_exp * corr_e_exp,
            ]
        )
        cross = cross + a0 @ p.trend_w[j]
        mean = a0 @ p.trend_mean + cross @ p.alpha[j]
        prior = params.rho**2 * params.var_cheap * np.exp(
            -_sq_dist(scaled, scaled, 1.0 / params.range_cheap)
        )
        prior += params.var_exp * np.exp(-_sq_dist(scaled, scaled, 1.0 / params.range_exp))
        prior += a0 @ emulator.trend_prior.block_cov @ a0.T
        prior[np.diag_indices_from(prior)] += params.nugget_exp
        white = solve_triangular(emulator.chols[j], cross.T, lower=True)
        cov = prior - white.T @ white
        out.append((mean, 0.5 * (cov + cov.T)))
    return out


# --- archive --------------------------------------------------------------


def save_emulator(emulator, directory) -> None:
    """Persist the fitted emulator; reloading reproduces predictions exactly."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    is_mr = emulator.uses_cheap
    manifest = {
        "type": "multires" if is_mr else "singleres",
        "space": [list(d) for d in emulator.space.dims],
        "seed": emulator.seed,
        "n_starts": emulator.n_starts,
        "hyperpriors": {
            "var_cheap": list(emulator.hyperpriors.var_cheap),
            "var_exp": list(emulator.hyperpriors.var_exp),
            "nugget_cheap": list(emulator.hyperpriors.nugget_cheap),
            "nugget_exp": list(emulator.hyperpriors.nugget_exp),
            "range_cheap": list(emulator.hyperpriors.range_cheap),
            "range_exp": list(emulator.hyperpriors.range_exp),
            "rho_mean": emulator.hyperpriors.rho_mean,
            "rho_var": emulator.hyperpriors.rho_var,
        },
        "input_scaling": "unit-hypercube",
    }
    with open(directory / "emulator.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    np.save(directory / "theta_exp.npy", emulator.theta_exp)
    np.save(directory / "scores_exp.npy", emulator.scores_exp)
    if is_mr:
        np.save(directory / "theta_cheap.npy", emulator.theta_cheap)
        np.save(directory / "scores_cheap.npy", emulator.scores_cheap)
        np.save(directory / "trend_mean.npy", emulator.trend_prior.mean)
        np.save(directory / "trend_cov_cheap.npy", emulator.trend_prior.cov_cheap)
        np.save(directory / "trend_cov_exp.npy", emulator.trend_prior.cov_exp)
    else:
        np.save(directory / "trend_mean.npy", emulator.trend_mean)
        np.save(directory / "trend_cov_exp.npy", emulator.trend_cov)

    k = emulator.theta_exp.shape[1]
    with open(directory / "params.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        if is_mr:
            header = ["component", "rho", "var_cheap", "var_exp", "nugget_cheap", "nugget_exp"]
            header += [f"range_cheap_{d}" for d in range(k)]
            header += [f"range_exp_{d}" for d in range(k)]
            writer.writerow(header)
            for j, prm in enumerate(emulator.params_list):
                row = [j, prm.rho, prm.var_cheap, prm.var_exp, prm.nugget_cheap, prm.nugget_exp]
                row += list(prm.range_cheap) + list(prm.range_exp)
                writer.writerow([row[0]] + [f"{v:.17g}" for v in row[1:]])
        else:
            header = ["component", "var", "nugget"] + [f"range_{d}" for d in range(k)]
            writer.writerow(header)
            for j, prm in enumerate(emulator.params_list):
                row = [prm.var, prm.nugget] + list(prm.range_)
                writer.writerow([j] + [f"{v:.17g}" for v in row])


def load_emulator(directory):
    directory = Path(directory)
    with open(directory / "emulator.json") as fh:
        manifest = json.load(fh)
    space = ParameterSpace(tuple((n, lo, hi) for n, lo, hi in manifest["space"]))
    hp_raw = manifest["hyperpriors"]
    hyperpriors = HyperPriors(
        var_cheap=tuple(hp_raw["var_cheap"]),
        var_exp=tuple(hp_raw["var_exp"]),
        nugget_cheap=tuple(hp_raw["nugget_cheap"]),
        nugget_exp=tuple(hp_raw["nugget_exp"]),
        range_cheap=tuple(hp_raw["range_cheap"]),
        range_exp=tuple(hp_raw["range_exp"]),
        rho_mean=hp_raw["rho_mean"],
        rho_var=hp_raw["rho_var"],
    )
    theta_exp = np.load(directory / "theta_exp.npy")
    scores_exp = np.load(directory / "scores_exp.npy")
    k = theta_exp.shape[1]
    rows = []
    with open(directory / "params.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            rows.append([float(v) for v in row[1:]])
    if manifest["type"] == "multires":
        params_list = [
            EmulatorParams(
                rho=r[0], var_cheap=r[1], var_exp=r[2], nugget_cheap=r[3],
                nugget_exp=r[4], range_cheap=np.array(r[5 : 5 + k]),
                range_exp=np.array(r[5 + k : 5 + 2 * k]),
            )
            for r in rows
        ]
        trend_prior = TrendPrior(
            np.load(directory / "trend_mean.npy"),
            np.load(directory / "trend_cov_cheap.npy"),
            np.load(directory / "trend_cov_exp.npy"),
        )
        return MultiResEmulator(
            space,
            np.load(directory / "theta_cheap.npy"),
            theta_exp,
            np.load(directory / "scores_cheap.npy"),
            scores_exp,
            params_list,
            trend_prior,
            hyperpriors,
            manifest["seed"],
            manifest["n_starts"],
        )
    params_list = [
        HrParams(var=r[0], nugget=r[1], range_=np.array(r[2 : 2 + k])) for r in rows
    ]
    return SingleResEmulator(
        space,
        theta_exp,
        scores_exp,
        params_list,
        np.load(directory / "trend_mean.npy"),
        np.load(directory / "trend_cov_exp.npy"),
        hyperpriors,
        manifest["seed"],
        manifest["n_starts"],
    )
