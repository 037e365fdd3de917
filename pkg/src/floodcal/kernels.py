"""Hot numeric kernels with numba and pure-numpy implementations.

The multiresolution predictive distribution is evaluated once per
Metropolis-Hastings proposal, i.e. hundreds of thousands of times per
calibration run, so the per-parameter-setting score prediction is kept in a
tight kernel.  Two interchangeable implementations are provided:

* ``*_numba`` -- ``@njit``-compiled loops (default when numba imports),
* ``*_numpy`` -- vectorized numpy fallback.

Set ``FLOODCAL_DISABLE_NUMBA=1`` in the environment before import to force
the numpy path (useful for debugging and for the benchmark in
``benchmarks/bench_kernels.py``, which times both).

All kernels work in unit-scaled parameter coordinates and use float64
contiguous arrays.  Packed per-component arrays are laid out as

* ``rho, var_c, var_e, nug_e`` -- shape ``(J,)``
* ``inv_range_c, inv_range_e`` -- shape ``(J, k)``
* ``trend_w`` -- shape ``(J, 2*(k+1), n)``, the trend-prior cross block
* ``chol`` -- shape ``(J, n, n)``, lower Cholesky factors of the joint gram
* ``alpha`` -- shape ``(J, n)``, gram-solved centered training scores

with ``n = p_cheap + p_exp`` training rows ordered cheap block first.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("FLOODCAL_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

try:
    if _DISABLE:
        raise ImportError("numba disabled by FLOODCAL_DISABLE_NUMBA")
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised via env flag
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


def sqexp_corr_numpy(x1, x2, inv_range):
    """Squared-exponential correlation matrix exp(-sum_d d_ij^2 / range_d).

    ``inv_range`` holds 1/range per dimension; ranges are in squared
    scaled-distance units.
    """
    d2 = (x1[:, None, :] - x2[None, :, :]) ** 2
    return np.exp(-d2 @ inv_range)


@njit(cache=True)
def sqexp_corr_numba(x1, x2, inv_range):
    n1, k = x1.shape
    n2 = x2.shape[0]
    out = np.empty((n1, n2))
    for i in range(n1):
        for j in range(n2):
            s = 0.0
            for d in range(k):
                diff = x1[i, d] - x2[j, d]
                s += diff * diff * inv_range[d]
            out[i, j] = np.exp(-s)
    return out


def predict_scores_numpy(
    theta0,
    theta_cheap,
    theta_exp,
    rho,
    var_c,
    var_e,
    nug_e,
    inv_range_c,
    inv_range_e,
    trend_mean,
    trend_cov_c,
    trend_cov_e,
    trend_w,
    chol,
    alpha,
):
    """Per-component predictive mean and variance at one parameter setting.

    Returns ``(means, variances)`` of shape ``(J,)`` each.  The variance is
    floored at the expensive nugget, which it dominates exactly in exact
    arithmetic; the floor only absorbs round-off at training points.
    """
    from scipy.linalg import solve_triangular

    n_comp = rho.shape[0]
    k1 = theta0.shape[0] + 1
    h0 = np.concatenate(([1.0], theta0))
    quad_c = h0 @ trend_cov_c @ h0
    quad_e = h0 @ trend_cov_e @ h0
    trend_c = h0 @ trend_mean[:k1]
    trend_e = h0 @ trend_mean[k1:]

    means = np.empty(n_comp)
    variances = np.empty(n_comp)
    for j in range(n_comp):
        corr_c_cheap = np.exp(-((theta_cheap - theta0) ** 2) @ inv_range_c[j])
        corr_c_exp = np.exp(-((theta_exp - theta0) ** 2) @ inv_range_c[j])
        corr_e_exp = np.exp(-((theta_exp - theta0) ** 2) @ inv_range_e[j])
        cross = np.concatenate(
            (
                rho[j] * var_c[j] * corr_c_cheap,
                rho[j] ** 2 * var_c[j] * corr_c_exp + var_e[j] * corr_e_exp,
            )
        )
        a0 = np.concatenate((rho[j] * h0, h0))
        cross = cross + a0 @ trend_w[j]
        means[j] = rho[j] * trend_c + trend_e + cross @ alpha[j]
        white = solve_triangular(chol[j], cross, lower=True)
        var = (
            rho[j] ** 2 * var_c[j]
            + var_e[j]
            + nug_e[j]
            + rho[j] ** 2 * quad_c
            + quad_e
            - white @ white
        )
        variances[j] = var if var > nug_e[j] else nug_e[j]
    return means, variances


@njit(cache=True)
def predict_scores_numba(
    theta0,
    theta_cheap,
    theta_exp,
    rho,
    var_c,
    var_e,
    nug_e,
    inv_range_c,
    inv_range_e,
    trend_mean,
    trend_cov_c,
    trend_cov_e,
    trend_w,
    chol,
    alpha,
):
    k = theta0.shape[0]
    k1 = k + 1
    p_cheap = theta_cheap.shape[0]
    p_exp = theta_exp.shape[0]
    n = p_cheap + p_exp
    n_comp = rho.shape[0]

    h0 = np.empty(k1)
    h0[0] = 1.0
    for d in range(k):
        h0[d + 1] = theta0[d]

    quad_c = 0.0
    quad_e = 0.0
    trend_c = 0.0
    trend_e = 0.0
    for a in range(k1):
        trend_c += h0[a] * trend_mean[a]
        trend_e += h0[a] * trend_mean[k1 + a]
        for b in range(k1):
            quad_c += h0[a] * trend_cov_c[a, b] * h0[b]
            quad_e += h0[a] * trend_cov_e[a, b] * h0[b]

    means = np.empty(n_comp)
    variances = np.empty(n_comp)
    cross = np.empty(n)
    white = np.empty(n)

    for j in range(n_comp):
        rj = rho[j]
        for i in range(p_cheap):
            s = 0.0
            for d in range(k):
                diff = theta0[d] - theta_cheap[i, d]
                s += diff * diff * inv_range_c[j, d]
            cross[i] = rj * var_c[j] * np.exp(-s)
        for i in range(p_exp):
            sc = 0.0
            se = 0.0
            for d in range(k):
                diff = theta0[d] - theta_exp[i, d]
                sc += diff * diff * inv_range_c[j, d]
                se += diff * diff * inv_range_e[j, d]
            cross[p_cheap + i] = rj * rj * var_c[j] * np.exp(-sc) + var_e[j] * np.exp(-se)

        # trend-prior block: [rho*h0, h0] @ trend_w[j]
        for col in range(n):
            s = 0.0
            for a in range(k1):
                s += rj * h0[a] * trend_w[j, a, col] + h0[a] * trend_w[j, k1 + a, col]
            cross[col] += s

        mean = rj * trend_c + trend_e
        for col in range(n):
            mean += cross[col] * alpha[j, col]
        means[j] = mean

        # forward substitution: chol[j] @ white = cross
        ssq = 0.0
        for row in range(n):
            s = cross[row]
            for col in range(row):
                s -= chol[j, row, col] * white[col]
            w = s / chol[j, row, row]
            white[row] = w
            ssq += w * w

        var = rj * rj * var_c[j] + var_e[j] + nug_e[j] + rj * rj * quad_c + quad_e - ssq
        if var < nug_e[j]:
            var = nug_e[j]
        variances[j] = var
    return means, variances


if NUMBA_AVAILABLE:
    BACKEND = "numba"
    sqexp_corr = sqexp_corr_numba
    predict_scores = predict_scores_numba
else:
    BACKEND = "numpy"
    sqexp_corr = sqexp_corr_numpy
    predict_scores = predict_scores_numpy
