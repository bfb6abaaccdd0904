"""
確率的Morris-Lecarモデルのユニットテスト

ドリフト、拡散係数、平衡点、ノイズスケールを検証します。
"""

import numpy as np
import pytest

from src.models.errors import NoRootInBracket, NoStableEquilibrium
from src.models.parameters import MLParameters, State2
from src.services.linearization import finite_difference_jacobian
from src.services.ml_model import (
    alpha_rate,
    beta_rate,
    channels_for_sigma_star,
    diffusion_w,
    drift,
    drift_jacobian,
    equilibrium,
    m_inf,
    noise_coefficient,
    sigma_star_of_N,
    step_kernel,
    w_inf,
)

STATES = [State2(-60.0, 0.05), State2(-26.6, 0.13), State2(0.0, 0.4), State2(35.0, 0.9)]


class TestRates:
    """ゲート関数のテストクラス"""

    def test_m_inf_half_at_v1(self, default_params):
        assert m_inf(default_params.V1, default_params) == pytest.approx(0.5)

    def test_w_inf_is_rate_ratio(self, default_params):
        v = np.linspace(-80, 40, 13)
        a = alpha_rate(v, default_params)
        b = beta_rate(v, default_params)
        np.testing.assert_allclose(w_inf(v, default_params), a / (a + b), rtol=1e-12)

    def test_rates_positive(self, default_params):
        v = np.linspace(-84, 120, 50)
        assert np.all(alpha_rate(v, default_params) > 0)
        assert np.all(beta_rate(v, default_params) > 0)


class TestDrift:
    """ドリフトと拡散係数のテストクラス"""

    def test_vectorized_drift(self, default_params):
        v = np.array([-60.0, -20.0])
        w = np.array([0.1, 0.2])
        dv, dw = drift(State2(v, w), default_params)
        assert dv.shape == (2,)
        for i in range(2):
            sv, sw = drift(State2(v[i], w[i]), default_params)
            assert dv[i] == pytest.approx(sv)
            assert dw[i] == pytest.approx(sw)

    def test_diffusion_vanishes_at_boundaries(self, default_params):
        assert diffusion_w(State2(-20.0, 0.0), default_params) == 0.0
        assert diffusion_w(State2(-20.0, 1.0), default_params) == 0.0
        assert diffusion_w(State2(-20.0, 1.5), default_params) == 0.0

    def test_diffusion_scales_with_sigma_star(self, default_params):
        s = State2(-26.6, 0.13)
        doubled = default_params.with_sigma_star(0.1)
        assert diffusion_w(s, doubled) == pytest.approx(2.0 * diffusion_w(s, default_params))

    @pytest.mark.parametrize("state", STATES)
    def test_jacobian_matches_finite_difference(self, default_params, state):
        analytic = drift_jacobian(state, default_params)
        numeric = finite_difference_jacobian(default_params, state)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-10)

    @pytest.mark.parametrize("state", STATES)
    def test_step_kernel_agrees_with_drift(self, default_params, state):
        kernel = step_kernel(default_params)
        dv, dw, g = kernel(state.v, state.w)
        expected_dv, expected_dw = drift(state, default_params)
        assert dv == pytest.approx(float(expected_dv), rel=1e-12)
        assert dw == pytest.approx(float(expected_dw), rel=1e-12, abs=1e-15)
        assert g == pytest.approx(float(diffusion_w(state, default_params)), rel=1e-12)


class TestEquilibrium:
    """平衡点のテストクラス"""

    def test_default_equilibrium(self, eq_state):
        """標準パラメータで (-26.6 mV, 0.129)"""
        assert eq_state.v == pytest.approx(-26.597, abs=0.01)
        assert eq_state.w == pytest.approx(0.12936, abs=1e-4)

    def test_residual_is_small(self, default_params, eq_state):
        dv, dw = drift(eq_state, default_params)
        assert abs(dv) < 1e-9
        assert abs(dw) < 1e-9

    def test_w_on_nullcline(self, default_params, eq_state):
        assert eq_state.w == pytest.approx(float(w_inf(eq_state.v, default_params)), rel=1e-12)

    def test_independent_of_noise(self, eq_state):
        assert equilibrium(MLParameters(sigma_star=0.0)) == eq_state

    def test_no_root(self):
        """電流が大きすぎると dv/dt が符号を変えない"""
        with pytest.raises(NoRootInBracket):
            equilibrium(MLParameters(I=5000.0))

    def test_no_stable_root(self, default_params, mocker):
        mocker.patch("src.services.ml_model._is_stable", return_value=False)
        with pytest.raises(NoStableEquilibrium):
            equilibrium(default_params)


class TestNoiseScale:
    """ノイズスケールのテストクラス"""

    def test_noise_coefficient(self, default_params, eq_state):
        """σ = 0.034·σ*"""
        assert noise_coefficient(default_params, eq_state) == pytest.approx(0.034, abs=0.001)

    def test_coefficient_matches_diffusion(self, default_params, eq_state):
        expected = float(diffusion_w(eq_state, default_params)) / default_params.sigma_star
        assert noise_coefficient(default_params, eq_state) == pytest.approx(expected, rel=1e-12)

    def test_sigma_star_for_900_channels(self, default_params, eq_state):
        """σ* ≈ 3/√N"""
        assert sigma_star_of_N(900, default_params, eq_state) == pytest.approx(0.1, abs=0.005)

    def test_channels_inverse(self, default_params, eq_state):
        n = channels_for_sigma_star(0.05, default_params, eq_state)
        assert sigma_star_of_N(n, default_params, eq_state) == pytest.approx(0.05, rel=1e-12)

    def test_invalid_arguments(self, default_params, eq_state):
        with pytest.raises(ValueError):
            sigma_star_of_N(0, default_params, eq_state)
        with pytest.raises(ValueError):
            channels_for_sigma_star(0.0, default_params, eq_state)
