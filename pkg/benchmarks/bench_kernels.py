#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

Times the per-setting score prediction (the MCMC hot path) and a short
calibration chain under both backends at a few realistic training sizes.
The packaged dispatch is driven by FLOODCAL_DISABLE_NUMBA at import; here
both implementations are called explicitly so one process can compare them.

Usage: python benchmarks/bench_kernels.py [--iterations 2000]
"""

import argparse
import time

import numpy as np

from floodcal import kernels
from floodcal.calibrate import (
    CalibrationPriors,
    McmcConfig,
    ReducedObservation,
    run_mh,
)
from floodcal.design import ParameterSpace
from floodcal.emulator import (
    EmulatorParams,
    HyperPriors,
    MultiResEmulator,
    default_trend_prior,
    predict,
)
from floodcal.reduce import ReducedBasis


def build_emulator(p_exp, p_cheap, n_comp, seed=0):
    rng = np.random.default_rng(seed)
    k = 2
    space = ParameterSpace((("a", 0.0, 1.0), ("b", 0.0, 1.0)))
    theta_e = rng.random((p_exp, k))
    theta_c = np.vstack([theta_e, rng.random((p_cheap - p_exp, k))])
    params = [
        EmulatorParams(
            rho=rng.normal(0.9, 0.1),
            var_cheap=rng.uniform(0.5, 1.5),
            var_exp=rng.uniform(0.2, 0.8),
            nugget_cheap=0.01,
            nugget_exp=0.01,
            range_cheap=rng.uniform(0.3, 0.8, k),
            range_exp=rng.uniform(0.3, 0.8, k),
        )
        for _ in range(n_comp)
    ]
    emu = MultiResEmulator(
        space, theta_c, theta_e,
        rng.standard_normal((p_cheap, n_comp)),
        rng.standard_normal((p_exp, n_comp)),
        params, default_trend_prior(k), HyperPriors(), 0, 0,
    )
    return emu


def time_predict(emu, impl, n_eval, seed=1):
    rng = np.random.default_rng(seed)
    p = emu._packed
    args = (p.theta_cheap, p.theta_exp, p.rho, p.var_c, p.var_e, p.nug_e,
            p.inv_range_c, p.inv_range_e, p.trend_mean, p.trend_cov_c,
            p.trend_cov_e, p.trend_w, p.chol, p.alpha)
    thetas = rng.random((n_eval, 2))
    impl(np.ascontiguousarray(thetas[0]), *args)  # warm-up / JIT compile
    start = time.perf_counter()
    for i in range(n_eval):
        impl(np.ascontiguousarray(thetas[i]), *args)
    return (time.perf_counter() - start) / n_eval


def time_chain(emu, impl, iterations, seed=2):
    saved = kernels.predict_scores
    kernels.predict_scores = impl
    try:
        rng = np.random.default_rng(seed)
        n_comp = emu.n_components
        eig = np.sort(rng.uniform(0.5, 5.0, n_comp))[::-1]
        basis = ReducedBasis(
            column_mean=np.zeros(4),
            components=np.zeros((4, n_comp)),  # only eigenvalues matter here
            eigenvalues=eig,
            variance_fraction=0.95,
            total_variance=float(eig.sum()),
            target_fraction=0.95,
        )
        out = predict(emu, np.array([0.5, 0.5]))
        z_r = ReducedObservation(out.mean.copy(), n_comp, 0)
        start = time.perf_counter()
        run_mh(z_r, emu, basis, CalibrationPriors(0.1),
               McmcConfig(iterations=iterations, seed=3, burn_in=iterations // 5))
        return time.perf_counter() - start
    finally:
        kernels.predict_scores = saved


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iterations", type=int, default=2000,
                        help="MH iterations for the chain benchmark")
    args = parser.parse_args()

    cases = [
        ("50e200c, 5 comps", 50, 200, 5),
        ("100e400c, 8 comps", 100, 400, 8),
    ]
    print(f"{'case':<22} {'kernel':<8} {'predict (us)':>14} {'chain (s)':>12}")
    for label, p_exp, p_cheap, n_comp in cases:
        emu = build_emulator(p_exp, p_cheap, n_comp)
        for name, impl in (("numba", kernels.predict_scores_numba),
                           ("numpy", kernels.predict_scores_numpy)):
            per_eval = time_predict(emu, impl, n_eval=400)
            chain_s = time_chain(emu, impl, args.iterations)
            print(f"{label:<22} {name:<8} {per_eval * 1e6:>14.1f} {chain_s:>12.2f}")


if __name__ == "__main__":
    main()
