"""Filter, smoother, and simulation checks against brute-force oracles."""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ebmfit.ssm import (
    FilterNumericalError,
    ObservationPanel,
    SeriesMeta,
    SystemMatrices,
    kalman_filter,
    kalman_smoother,
    loglik,
    simulate_ssm,
    standardized_innovations,
)

from conftest import (
    bruteforce_loglik,
    bruteforce_smoothed_state,
    make_panel,
    random_model,
)


def local_level(q: float = 1.0, h: float = 1.0, p1: float = 1.0) -> SystemMatrices:
    return SystemMatrices(
        transition=[[1.0]],
        measurement=[[1.0]],
        state_cov=[[q]],
        obs_cov=[[h]],
        init_mean=[0.0],
        init_cov=[[p1]],
    )


class TestFilter:
    def test_scalar_local_level_single_obs(self):
        fr = kalman_filter(local_level(), make_panel([[0.0]]))
        expected = -0.5 * (np.log(2 * np.pi) + np.log(2.0))
        assert_allclose(fr.loglik, expected, rtol=1e-12)

    def test_entirely_missing_panel(self):
        fr = kalman_filter(local_level(), make_panel([[np.nan, np.nan]]))
        assert fr.loglik == 0.0
        assert_allclose(fr.pred_mean[1], 0.0)
        assert_allclose(fr.pred_cov[1], [[2.0]])

    def test_three_step_bivariate_matches_bruteforce(self):
        rng = np.random.default_rng(7)
        model = random_model(rng, m=2, p=2)
        _, obs = simulate_ssm(model, 3, rng_seed=1)
        panel = make_panel(obs)
        assert_allclose(loglik(model, panel), bruteforce_loglik(model, panel), atol=1e-8)

    @pytest.mark.parametrize("seed", range(12))
    def test_random_models_match_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9))
        model = random_model(rng, time_varying=bool(seed % 2), n_steps=n)
        _, obs = simulate_ssm(model, n, rng_seed=seed + 100)
        panel = make_panel(obs)
        assert_allclose(loglik(model, panel), bruteforce_loglik(model, panel), atol=1e-8)

    @pytest.mark.parametrize("seed", range(6))
    def test_random_models_with_missing_cells(self, seed):
        rng = np.random.default_rng(200 + seed)
        n = 6
        model = random_model(rng, n_steps=n)
        _, obs = simulate_ssm(model, n, rng_seed=seed)
        obs[rng.random(obs.shape) < 0.3] = np.nan
        panel = make_panel(obs)
        assert_allclose(loglik(model, panel), bruteforce_loglik(model, panel), atol=1e-8)

    def test_missing_row_equals_deleted_row(self):
        rng = np.random.default_rng(42)
        model = random_model(rng, m=3, p=3, n_steps=6)
        _, obs = simulate_ssm(model, 6, rng_seed=3)
        obs[1, :] = np.nan
        full = loglik(model, make_panel(obs))
        reduced_model = SystemMatrices(
            transition=model.transition,
            measurement=model.measurement[[0, 2]],
            state_cov=model.state_cov,
            obs_cov=model.obs_cov[np.ix_([0, 2], [0, 2])],
            init_mean=model.init_mean,
            init_cov=model.init_cov,
        )
        reduced = loglik(reduced_model, make_panel(obs[[0, 2]]))
        assert_allclose(full, reduced, rtol=1e-12)

    def test_filter_covariances_symmetric_and_psd(self):
        rng = np.random.default_rng(5)
        model = random_model(rng, m=4, p=3, n_steps=8)
        _, obs = simulate_ssm(model, 8, rng_seed=11)
        fr = kalman_filter(model, make_panel(obs))
        for covs in (fr.pred_cov, fr.filt_cov):
            for c in covs:
                assert_allclose(c, c.T, atol=1e-10)
                assert np.linalg.eigvalsh(c).min() >= -1e-8
        assert_allclose(fr.loglik, fr.loglik_terms.sum(), rtol=1e-12)

    def test_degenerate_obs_cov_raises(self):
        model = SystemMatrices(
            transition=[[1.0]],
            measurement=[[1.0], [1.0]],
            state_cov=[[0.0]],
            obs_cov=np.zeros((2, 2)),
            init_mean=[0.0],
            init_cov=[[0.0]],
        )
        panel = make_panel([[0.1], [0.2]])
        with pytest.raises(FilterNumericalError):
            kalman_filter(model, panel)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(Exception):
            kalman_filter(local_level(), make_panel([[0.0], [1.0]]))


class TestSmoother:
    def test_boundary_matches_filter_exactly(self):
        rng = np.random.default_rng(9)
        model = random_model(rng, n_steps=5)
        _, obs = simulate_ssm(model, 5, rng_seed=2)
        fr = kalman_filter(model, make_panel(obs))
        sm = kalman_smoother(model, fr)
        assert np.array_equal(sm.smooth_mean[-1], fr.filt_mean[-1])
        assert np.array_equal(sm.smooth_cov[-1], fr.filt_cov[-1])

    def test_two_step_local_level_matches_conditioning(self):
        model = local_level(q=0.7, h=0.4, p1=1.3)
        panel = make_panel([[0.5, -0.2]])
        fr = kalman_filter(model, panel)
        sm = kalman_smoother(model, fr)
        mean, cov = bruteforce_smoothed_state(model, panel, 0)
        assert_allclose(sm.smooth_mean[0], mean, atol=1e-10)
        assert_allclose(sm.smooth_cov[0], cov, atol=1e-10)

    @pytest.mark.parametrize("seed", range(4))
    def test_random_model_matches_conditioning(self, seed):
        rng = np.random.default_rng(300 + seed)
        n = 5
        model = random_model(rng, time_varying=bool(seed % 2), n_steps=n)
        _, obs = simulate_ssm(model, n, rng_seed=seed)
        if seed == 1:
            obs[0, 2] = np.nan
        panel = make_panel(obs)
        sm = kalman_smoother(model, kalman_filter(model, panel))
        for t in (0, n // 2):
            mean, cov = bruteforce_smoothed_state(model, panel, t)
            assert_allclose(sm.smooth_mean[t], mean, atol=1e-8)
            assert_allclose(sm.smooth_cov[t], cov, atol=1e-8)

    def test_static_state_constant_smoothed_path(self):
        model = SystemMatrices(
            transition=np.eye(2),
            measurement=np.eye(2),
            state_cov=np.zeros((2, 2)),
            obs_cov=0.3 * np.eye(2),
            init_mean=[0.2, -0.1],
            init_cov=0.5 * np.eye(2),
        )
        rng = np.random.default_rng(0)
        panel = make_panel(rng.standard_normal((2, 6)))
        sm = kalman_smoother(model, kalman_filter(model, panel))
        for t in range(6):
            assert_allclose(sm.smooth_mean[t], sm.smooth_mean[0], atol=1e-10)


class TestStandardizedInnovations:
    def test_scalar_scaling(self):
        # P1 + H = 4 so F_1 = 4; y_1 = 2 gives v_1 = 2 and a unit residual.
        model = local_level(q=0.1, h=1.0, p1=3.0)
        fr = kalman_filter(model, make_panel([[2.0]]))
        out = standardized_innovations(fr)
        assert_allclose(out[0, 0], 1.0, rtol=1e-12)

    def test_missing_cells_stay_missing(self):
        rng = np.random.default_rng(3)
        model = random_model(rng, m=2, p=2, n_steps=5)
        _, obs = simulate_ssm(model, 5, rng_seed=8)
        obs[0, 1] = np.nan
        fr = kalman_filter(model, make_panel(obs))
        out = standardized_innovations(fr)
        assert np.isnan(out[0, 1])
        assert np.isfinite(out[1, 1])

    def test_long_run_calibration(self):
        rng = np.random.default_rng(21)
        model = random_model(rng, m=2, p=2, n_steps=10_000)
        _, obs = simulate_ssm(model, 10_000, rng_seed=77)
        fr = kalman_filter(model, make_panel(obs))
        out = standardized_innovations(fr)
        for i in range(out.shape[0]):
            assert abs(np.nanmean(out[i])) < 0.05
            assert abs(np.nanvar(out[i]) - 1.0) < 0.05


class TestSimulate:
    def test_noise_free_recursion_is_deterministic(self):
        T = np.array([[0.9, 0.1], [0.0, 0.95]])
        model = SystemMatrices(
            transition=T,
            measurement=np.eye(2),
            state_cov=np.zeros((2, 2)),
            obs_cov=np.zeros((2, 2)),
            init_mean=[1.0, 2.0],
            init_cov=np.zeros((2, 2)),
        )
        states, obs = simulate_ssm(model, 5, rng_seed=0)
        expected = [np.array([1.0, 2.0])]
        for _ in range(4):
            expected.append(T @ expected[-1])
        assert_allclose(states, np.array(expected), rtol=0, atol=0)
        assert_allclose(obs, states.T, rtol=0, atol=0)

    def test_same_seed_bit_identical(self):
        rng = np.random.default_rng(1)
        model = random_model(rng, n_steps=10)
        s1, o1 = simulate_ssm(model, 10, rng_seed=123)
        s2, o2 = simulate_ssm(model, 10, rng_seed=123)
        assert np.array_equal(s1, s2) and np.array_equal(o1, o2)
        s3, _ = simulate_ssm(model, 10, rng_seed=124)
        assert not np.array_equal(s1, s3)

    def test_local_level_difference_variance(self):
        q, h = 0.5, 0.25
        model = local_level(q=q, h=h, p1=0.0)
        _, obs = simulate_ssm(model, 1_000_000, rng_seed=5)
        dy = np.diff(obs[0])
        assert abs(dy.var() / (q + 2 * h) - 1.0) < 0.01


class TestRoundTrip:
    def test_generating_model_beats_perturbed(self):
        """Simulated data should be more likely under the generating model
        than under one with each physical parameter scaled by 1.5."""
        from ebmfit.model import build_system
        from conftest import CONFIG_FULL, DGP_FULL, reference_anthro_series

        import dataclasses

        natural = reference_anthro_series()[0], np.zeros(66)
        model = build_system(DGP_FULL, CONFIG_FULL, natural)
        perturbed_params = dataclasses.replace(
            DGP_FULL,
            physical=dataclasses.replace(
                DGP_FULL.physical,
                lam=DGP_FULL.physical.lam * 1.5,
                gamma=DGP_FULL.physical.gamma * 1.5,
                c_m=DGP_FULL.physical.c_m * 1.5,
                c_d=DGP_FULL.physical.c_d * 1.5,
            ),
        )
        perturbed = build_system(perturbed_params, CONFIG_FULL, natural)
        meta = (
            [SeriesMeta(f"g{k}", "gmst") for k in range(8)]
            + [SeriesMeta(f"t{j}", "ocean_temp", pair_id=f"p{j}") for j in range(2)]
            + [SeriesMeta(f"o{j}", "ohc", pair_id=f"p{j}") for j in range(2)]
            + [SeriesMeta("f", "forcing_total")]
        )
        wins = 0
        for trial in range(100):
            _, obs = simulate_ssm(model, 66, rng_seed=trial)
            panel = ObservationPanel(
                years=np.arange(1955, 2021), values=obs, series_meta=meta
            )
            if loglik(model, panel) > loglik(perturbed, panel):
                wins += 1
        assert wins >= 95
