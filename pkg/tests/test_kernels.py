import os
import subprocess
import sys

import numpy as np
import pytest

from floodcal import kernels


def test_sqexp_twins_agree():
    rng = np.random.default_rng(0)
    x1 = rng.random((7, 3))
    x2 = rng.random((5, 3))
    inv_range = rng.uniform(0.5, 3.0, 3)
    a = kernels.sqexp_corr_numpy(x1, x2, inv_range)
    b = kernels.sqexp_corr_numba(x1, x2, inv_range)
    assert np.max(np.abs(a - b)) < 1e-14


def test_predict_twins_agree(gp_setup):
    emu = gp_setup["emu_mr"]
    p = emu._packed
    args = (p.theta_cheap, p.theta_exp, p.rho, p.var_c, p.var_e, p.nug_e,
            p.inv_range_c, p.inv_range_e, p.trend_mean, p.trend_cov_c,
            p.trend_cov_e, p.trend_w, p.chol, p.alpha)
    rng = np.random.default_rng(1)
    for _ in range(25):
        theta0 = np.ascontiguousarray(rng.random(2))
        m_nb, v_nb = kernels.predict_scores_numba(theta0, *args)
        m_np, v_np = kernels.predict_scores_numpy(theta0, *args)
        assert np.max(np.abs(m_nb - m_np)) < 1e-10
        assert np.max(np.abs(v_nb - v_np)) < 1e-10


def test_predict_twins_agree_without_cheap_block(gp_setup):
    emu = gp_setup["emu_hr"]
    p = emu._packed
    args = (p.theta_cheap, p.theta_exp, p.rho, p.var_c, p.var_e, p.nug_e,
            p.inv_range_c, p.inv_range_e, p.trend_mean, p.trend_cov_c,
            p.trend_cov_e, p.trend_w, p.chol, p.alpha)
    theta0 = np.array([0.3, 0.7])
    m_nb, v_nb = kernels.predict_scores_numba(theta0, *args)
    m_np, v_np = kernels.predict_scores_numpy(theta0, *args)
    assert np.max(np.abs(m_nb - m_np)) < 1e-10
    assert np.max(np.abs(v_nb - v_np)) < 1e-10


def test_env_flag_selects_numpy_backend():
    code = (
        "import os; os.environ['FLOODCAL_DISABLE_NUMBA'] = '1';"
        "from floodcal import kernels;"
        "assert kernels.BACKEND == 'numpy', kernels.BACKEND;"
        "assert kernels.predict_scores is kernels.predict_scores_numpy"
    )
    subprocess.run([sys.executable, "-c", code], check=True)


@pytest.mark.skipif(
    os.environ.get("FLOODCAL_DISABLE_NUMBA", "").lower() in ("1", "true", "yes"),
    reason="numba disabled via environment",
)
def test_default_backend_is_numba():
    assert kernels.BACKEND == "numba"
    assert kernels.NUMBA_AVAILABLE
