"""Parity between the compiled kernel and the NumPy fallback."""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ebmfit.ssm import _kernel_py, compiled_available, simulate_ssm
from ebmfit.ssm import filter as flt

from conftest import make_panel, random_model

pytestmark = pytest.mark.skipif(
    not compiled_available(), reason="compiled kernel not built"
)


def kernel_inputs(seed: int, missing: bool):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 12))
    model = random_model(rng, time_varying=bool(seed % 2), n_steps=n)
    _, obs = simulate_ssm(model, n, rng_seed=seed + 1)
    if missing:
        obs[rng.random(obs.shape) < 0.25] = np.nan
    return flt._prepare(model, make_panel(obs))


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("missing", [False, True])
def test_loglik_parity(seed, missing):
    from ebmfit.ssm import _kernel_cy

    args = kernel_inputs(seed, missing)
    ll_c, a_c = _kernel_cy.kernel_loglik(*args)
    ll_p, a_p = _kernel_py.kernel_loglik(*args)
    assert_allclose(ll_c, ll_p, rtol=1e-10, atol=1e-10)
    assert_allclose(a_c, a_p, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_simulate_states_parity(seed):
    from ebmfit.ssm import _kernel_cy

    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 6))
    n = 50
    T = rng.standard_normal((m, m)) * 0.4
    x1 = rng.standard_normal(m)
    etas = rng.standard_normal((n - 1, m))
    slot_vals = rng.standard_normal(n - 1)
    for slot in [(-1, -1), (0, m - 1)]:
        s_c = _kernel_cy.kernel_simulate_states(x1, T.copy(), slot[0], slot[1], slot_vals, etas)
        s_p = _kernel_py.kernel_simulate_states(x1, T.copy(), slot[0], slot[1], slot_vals, etas)
        assert_allclose(np.asarray(s_c), s_p, rtol=1e-12, atol=1e-12)


def test_full_filter_matches_fast_kernel_loglik():
    from ebmfit.ssm import kalman_filter, loglik

    rng = np.random.default_rng(99)
    model = random_model(rng, m=3, p=2, n_steps=20)
    _, obs = simulate_ssm(model, 20, rng_seed=4)
    obs[0, 5] = np.nan
    panel = make_panel(obs)
    assert_allclose(kalman_filter(model, panel).loglik, loglik(model, panel), rtol=1e-10)
