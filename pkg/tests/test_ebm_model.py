"""System-matrix construction, ECS, and parameter-transform checks."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ebmfit.model import (
    STATE_A,
    STATE_CONST,
    STATE_N,
    STATE_TD,
    STATE_TM,
    STATE_TREND,
    EbmParamVector,
    MeasurementConfig,
    NoiseParams,
    PhysicalParams,
    build_system,
    ecs,
    ecs_std_error,
    param_names,
    transform,
    untransform,
)

from conftest import CONFIG_FULL, DGP_FULL, SAMPLE_YEARS


def small_params(J: int = 1) -> EbmParamVector:
    return EbmParamVector(
        physical=PhysicalParams(lam=1.0828, gamma=1.3027, c_m=9.6376, c_d=98.4886),
        noise=NoiseParams(
            var_eta_tm=0.0122,
            var_eta_td=3.66e-5,
            var_eta_a=4.73e-5,
            var_eta_beta=9.72e-6,
            var_eps_gmst=(0.001,),
            var_eps_td=(0.00014,) * J,
            var_eps_ohc=(1.5311,) * J,
            var_eps_forcing=1.61e-11,
            rho=(0.9092,) * J,
            mu_td=(-0.2738,) * J,
        ),
    )


def natural_zero(n: int = 66):
    return SAMPLE_YEARS[:n], np.zeros(n)


class TestBuildSystem:
    def test_temperature_block_entries(self):
        model = build_system(small_params(), MeasurementConfig(1, 1), natural_zero())
        T = model.transition
        assert_allclose(T[STATE_TM, STATE_TM], 0.75248, atol=1e-5)
        assert_allclose(T[STATE_TM, STATE_TD], 0.13517, atol=1e-5)
        assert_allclose(T[STATE_TM, STATE_N], 0.10376, atol=1e-5)
        assert_allclose(T[STATE_TM, STATE_A], 0.10376, atol=1e-5)
        assert_allclose(T[STATE_TD, STATE_TM], 0.013227, atol=1e-5)
        assert_allclose(T[STATE_TD, STATE_TD], 0.98677, atol=1e-5)

    def test_zero_heat_transfer_decouples_deep_ocean(self):
        params = small_params()
        params = dataclasses.replace(
            params, physical=dataclasses.replace(params.physical, gamma=1e-12)
        )
        model = build_system(params, MeasurementConfig(1, 1), natural_zero())
        assert_allclose(model.transition[STATE_TD, STATE_TM], 0.0, atol=1e-13)
        assert_allclose(model.transition[STATE_TD, STATE_TD], 1.0, atol=1e-13)

    def test_constant_column_carries_pair_offsets(self):
        model = build_system(small_params(), MeasurementConfig(1, 1), natural_zero())
        Z = model.measurement
        # rows: gmst, ocean temp, ohc, forcing
        assert_allclose(Z[1, STATE_CONST], -0.2738, rtol=1e-12)
        assert_allclose(Z[2, STATE_CONST], 98.4886 * -0.2738, rtol=1e-12)
        assert_allclose(Z[2, STATE_CONST], -26.966, atol=1e-3)

    def test_ohc_row_is_cd_times_ocean_row(self):
        model = build_system(DGP_FULL, CONFIG_FULL, natural_zero())
        Z = model.measurement
        K, J = 8, 2
        for j in range(J):
            assert_allclose(Z[K + J + j], DGP_FULL.physical.c_d * Z[K + j], rtol=0, atol=0)

    def test_forcing_row_and_row_sums(self):
        model = build_system(DGP_FULL, CONFIG_FULL, natural_zero())
        Z = model.measurement
        expected = np.zeros(6)
        expected[STATE_N] = 1.0
        expected[STATE_A] = 1.0
        assert_allclose(Z[-1], expected, rtol=0, atol=0)
        T = model.transition
        ph = DGP_FULL.physical
        # identical response to natural and anthropogenic forcing
        assert T[STATE_TM, STATE_N] == T[STATE_TM, STATE_A]
        assert_allclose(
            T[STATE_TM, STATE_TM] + T[STATE_TM, STATE_TD], 1.0 - ph.lam / ph.c_m, rtol=1e-12
        )
        assert_allclose(T[STATE_TD, STATE_TM] + T[STATE_TD, STATE_TD], 1.0, rtol=1e-12)

    def test_obs_cov_pairs_and_psd(self):
        model = build_system(DGP_FULL, CONFIG_FULL, natural_zero())
        H = model.obs_cov
        no = DGP_FULL.noise
        K, J = 8, 2
        for j in range(J):
            expected = no.rho[j] * np.sqrt(no.var_eps_td[j] * no.var_eps_ohc[j])
            assert_allclose(H[K + j, K + J + j], expected, rtol=1e-12)
        assert np.linalg.eigvalsh(H).min() >= -1e-10

    @pytest.mark.parametrize("rho", [-0.999, -0.5, 0.0, 0.9, 0.999])
    def test_h_psd_across_correlations(self, rho):
        params = small_params()
        params = dataclasses.replace(
            params, noise=dataclasses.replace(params.noise, rho=(rho,))
        )
        model = build_system(params, MeasurementConfig(1, 1), natural_zero())
        assert np.linalg.eigvalsh(model.obs_cov).min() >= -1e-10

    def test_natural_forcing_slot_and_init(self):
        years = np.arange(1955, 1960)
        values = np.array([0.1, -0.2, 0.05, 0.0, -1.3])
        model = build_system(small_params(), MeasurementConfig(1, 1), (years, values))
        assert model.slot_index == (STATE_N, STATE_CONST)
        assert_allclose(model.slot_values, values[1:], rtol=0, atol=0)
        assert model.init_mean[STATE_N] == 0.1
        assert model.init_mean[STATE_CONST] == 1.0
        assert model.init_cov[STATE_N, STATE_N] == 0.0
        assert model.init_cov[STATE_TM, STATE_TM] == 1e6
        assert model.init_cov[STATE_TREND, STATE_TREND] == 1e6

    def test_coverage_gap_raises(self):
        years = np.arange(1960, 1970)
        with pytest.raises(ValueError, match="cover"):
            build_system(
                small_params(),
                MeasurementConfig(1, 1),
                (years, np.zeros(10)),
                sample_years=np.arange(1955, 1966),
            )

    def test_invalid_params_raise(self):
        bad = dataclasses.replace(
            small_params(), physical=PhysicalParams(lam=1.0, gamma=1.0, c_m=200.0, c_d=98.0)
        )
        with pytest.raises(ValueError):
            build_system(bad, MeasurementConfig(1, 1), natural_zero())


class TestEcs:
    def test_table_value(self):
        assert_allclose(ecs(1.0828, 3.93), 3.6294, atol=1e-4)

    def test_unit_ratio(self):
        assert ecs(3.93, 3.93) == 1.0

    def test_low_feedback(self):
        assert_allclose(ecs(0.66, 3.93), 5.95, atol=5e-3)

    def test_identity_with_lambda(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            lam = float(rng.uniform(0.05, 5.0))
            f2x = float(rng.uniform(0.5, 8.0))
            assert_allclose(ecs(lam, f2x) * lam, f2x, rtol=1e-12)

    def test_nonpositive_lambda_raises(self):
        with pytest.raises(ValueError):
            ecs(0.0, 3.93)

    def test_std_error_reference_point(self):
        se = ecs_std_error(1.0828, 0.25, 3.93, 0.47 / 1.645)
        assert 0.84 <= se <= 0.93

    def test_std_error_degenerate_cases(self):
        assert ecs_std_error(1.0828, 0.0, 3.93, 0.0) == 0.0
        assert_allclose(ecs_std_error(1.0, 0.0, 2.7, 0.4), 0.4, rtol=1e-12)


class TestTransforms:
    def test_log_identity_for_unit_variance(self):
        params = small_params()
        params = dataclasses.replace(
            params, noise=dataclasses.replace(params.noise, var_eps_ohc=(1.0,))
        )
        vec = transform(params)
        names = param_names(1, 1)
        assert vec[names.index("var_eps_ohc_1")] == 0.0

    def test_zero_correlation_maps_to_zero(self):
        params = dataclasses.replace(
            small_params(), noise=dataclasses.replace(small_params().noise, rho=(0.0,))
        )
        vec = transform(params)
        assert vec[param_names(1, 1).index("rho_1")] == 0.0

    def test_full_dgp_round_trip(self):
        vec = transform(DGP_FULL)
        back = untransform(vec, 8, 2)
        assert_allclose(back.to_array(), DGP_FULL.to_array(), rtol=1e-12)

    def test_untransform_accepts_any_reals(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            vec = rng.standard_normal(9 + 8 + 4 * 2) * 5
            theta = untransform(vec, 8, 2)
            arr = theta.to_array()
            assert np.all(np.isfinite(arr))
            assert all(abs(r) < 1 for r in theta.noise.rho)

    def test_floor_clamps_tiny_variances(self):
        vec = transform(DGP_FULL)
        vec[4] = -200.0
        theta = untransform(vec, 8, 2)
        assert theta.noise.var_eta_tm == 1e-12
        assert "var_eta_tm" in theta.variances_at_floor()

    def test_param_name_count(self):
        assert len(param_names(8, 2)) == 25
        assert len(param_names(1, 1)) == 14
        assert len(param_names(1, 0)) == 10
