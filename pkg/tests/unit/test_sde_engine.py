"""
SDEエンジンのユニットテスト
"""

import numpy as np
import pytest
from scipy.linalg import expm, solve_continuous_lyapunov

from src.models.errors import InsufficientSegments, InvalidConfig
from src.models.parameters import MLParameters, State2
from src.models.simulation import BoundaryPolicy, Path, SimConfig
from src.services.sde_engine import (
    BOUNDARY_EPS,
    MLStepper,
    collect_quiescent_segments,
    detect_spike,
    extract_quiescent_segments,
    linear_covariance,
    linear_em_endpoints,
    quiescent_attempt,
    replicate_rng,
    simulate_isi_ml,
    simulate_isi_replicate,
    simulate_linear,
    simulate_ml,
    simulate_until_spike,
)


class TestReplicateRng:
    """複製ごとの乱数生成器のテストクラス"""

    def test_same_key_same_stream(self):
        a = replicate_rng(42, 3).standard_normal(5)
        b = replicate_rng(42, 3).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_different_keys_differ(self):
        a = replicate_rng(42, 3).standard_normal(5)
        b = replicate_rng(42, 4).standard_normal(5)
        assert not np.array_equal(a, b)

    def test_multi_part_key(self):
        a = replicate_rng(1, 2, 3).standard_normal(3)
        b = replicate_rng(1, 3, 2).standard_normal(3)
        assert not np.array_equal(a, b)


class TestMLStepper:
    """Euler-Maruyamaステッパーのテストクラス"""

    def test_invalid_dt(self, default_params, eq_state):
        with pytest.raises(InvalidConfig):
            MLStepper(default_params, eq_state, 0.0, replicate_rng(1))

    def test_invalid_initial_w(self, default_params):
        with pytest.raises(InvalidConfig):
            MLStepper(default_params, State2(-26.6, 1.0), 0.01, replicate_rng(1))

    def test_run_yields_time(self, default_params, eq_state):
        stepper = MLStepper(default_params, eq_state, 0.5, replicate_rng(1))
        times = [t for t, _, _ in stepper.run(4)]
        assert times == pytest.approx([0.5, 1.0, 1.5, 2.0])

    @pytest.mark.parametrize("policy", [BoundaryPolicy.REFLECT, BoundaryPolicy.CLAMP])
    def test_w_stays_inside_interval(self, policy):
        """大きなノイズでもwは(0,1)の内側に留まる"""
        noisy = MLParameters(sigma_star=1.0)
        stepper = MLStepper(noisy, State2(-50.0, 1e-4), 0.1, replicate_rng(3), policy)
        ws = np.array([w for _, _, w in stepper.run(2000)])
        assert ws.min() >= BOUNDARY_EPS
        assert ws.max() <= 1.0 - BOUNDARY_EPS
        assert stepper.boundary_events > 0


class TestSimulateML:
    """Morris-Lecarパス生成のテストクラス"""

    def test_noiseless_equilibrium_is_fixed(self, eq_state):
        quiet = MLParameters(sigma_star=0.0)
        path = simulate_ml(quiet, eq_state, SimConfig(dt=0.05, t_max=100.0))
        np.testing.assert_allclose(path.v, eq_state.v, atol=1e-8)
        np.testing.assert_allclose(path.w, eq_state.w, atol=1e-10)

    def test_deterministic_for_seed(self, default_params, eq_state):
        cfg = SimConfig(dt=0.05, t_max=20.0, seed=9)
        a = simulate_ml(default_params, eq_state, cfg)
        b = simulate_ml(default_params, eq_state, cfg)
        np.testing.assert_array_equal(a.states, b.states)

    def test_record_stride(self, default_params, eq_state):
        cfg = SimConfig(dt=0.01, t_max=10.0, record_stride=10)
        path = simulate_ml(default_params, eq_state, cfg)
        assert len(path) == 101
        assert path.dt == pytest.approx(0.1)
        assert path.states[0] == pytest.approx([eq_state.v, eq_state.w])

    def test_stride_matches_full_path(self, default_params, eq_state):
        """間引きは同じ乱数列の部分列"""
        full = simulate_ml(default_params, eq_state, SimConfig(dt=0.01, t_max=1.0, seed=4))
        strided = simulate_ml(default_params, eq_state, SimConfig(dt=0.01, t_max=1.0, seed=4, record_stride=5))
        np.testing.assert_allclose(strided.states, full.states[::5])


class TestSpikeDetection:
    """発火検出のテストクラス"""

    def test_linear_interpolation(self):
        path = Path(dt=1.0, t0=0.0, states=[[-10.0, 0.1], [-5.0, 0.1], [5.0, 0.1]])
        assert detect_spike(path) == pytest.approx(1.5)

    def test_no_crossing(self):
        path = Path(dt=1.0, t0=0.0, states=[[-10.0, 0.1], [-5.0, 0.1]])
        assert detect_spike(path) is None

    def test_starting_above_threshold_is_not_a_crossing(self):
        path = Path(dt=1.0, t0=0.0, states=[[5.0, 0.1], [10.0, 0.1]])
        assert detect_spike(path) is None

    def test_depolarized_start_fires_quickly(self, eq_state):
        """v = -1 mV では dv/dt > 0 なので直ちに0 mVを越える"""
        quiet = MLParameters(sigma_star=0.0)
        t, censored = simulate_until_spike(
            quiet, State2(-1.0, eq_state.w), SimConfig(dt=0.001, t_max=5.0), replicate_rng(1)
        )
        assert censored is False
        assert 0.0 < t < 0.5

    def test_resting_start_is_censored(self, eq_state):
        quiet = MLParameters(sigma_star=0.0)
        t, censored = simulate_until_spike(quiet, eq_state, SimConfig(dt=0.1, t_max=50.0), replicate_rng(1))
        assert censored is True
        assert t == pytest.approx(50.0)


class TestISISimulation:
    """ISIサンプル生成のテストクラス"""

    def test_replicate_is_deterministic(self, default_params, eq_state):
        cfg = SimConfig(dt=0.05, t_max=30.0, seed=5)
        assert simulate_isi_replicate(default_params, cfg, 2, eq_state) == simulate_isi_replicate(
            default_params, cfg, 2, eq_state
        )

    def test_sample_fields(self, default_params, eq_state):
        cfg = SimConfig(dt=0.05, t_max=20.0, seed=5)
        sample = simulate_isi_ml(default_params, 3, cfg, eq_state)
        assert len(sample) == 3
        assert sample.model_tag == "ml"
        assert sample.seed == 5
        assert np.all(sample.times <= 20.0 + 1e-9)
        assert sample.metadata["sigma_star"] == default_params.sigma_star

    def test_start_index_selects_replicates(self, default_params, eq_state):
        """start_indexをずらしても同じ複製番号なら同じ結果"""
        cfg = SimConfig(dt=0.05, t_max=20.0, seed=5)
        whole = simulate_isi_ml(default_params, 3, cfg, eq_state)
        tail = simulate_isi_ml(default_params, 2, cfg, eq_state, start_index=1)
        np.testing.assert_array_equal(whole.times[1:], tail.times)

    def test_invalid_count(self, default_params, eq_state):
        with pytest.raises(InvalidConfig):
            simulate_isi_ml(default_params, 0, SimConfig(dt=0.05, t_max=10.0), eq_state)


class TestQuiescentSegments:
    """閾値下セグメント抽出のテストクラス"""

    @pytest.fixture
    def spiking_path(self):
        v = np.concatenate([np.full(100, -26.6), np.full(5, 10.0), np.full(5, -20.0), np.full(60, -26.6)])
        states = np.column_stack([v, np.full(len(v), 0.13)])
        return Path(dt=1.0, t0=0.0, states=states)

    def test_splits_at_spikes(self, spiking_path):
        segments = extract_quiescent_segments(spiking_path, 50.0, State2(-26.6, 0.13))
        assert len(segments) == 2
        assert len(segments[0]) == 100
        assert segments[1].t0 == pytest.approx(110.0)
        assert segments[1].columns == ("x1", "x2")
        np.testing.assert_allclose(segments[0].states, 0.0, atol=1e-12)

    def test_short_segments_dropped(self, spiking_path):
        segments = extract_quiescent_segments(spiking_path, 70.0, State2(-26.6, 0.13))
        assert len(segments) == 1

    def test_invalid_min_len(self, spiking_path):
        with pytest.raises(InvalidConfig):
            extract_quiescent_segments(spiking_path, 0.0, State2(-26.6, 0.13))

    def test_attempt_covers_min_len_with_stride(self, eq_state):
        """記録間隔で割り切れなくてもmin_len以上の長さになる"""
        quiet = MLParameters(sigma_star=0.0)
        cfg = SimConfig(dt=0.1, t_max=100.0, record_stride=3)
        segment = quiescent_attempt(quiet, eq_state, 10.0, cfg, attempt=0)
        assert segment is not None
        assert segment.duration >= 10.0
        assert len(segment) == 35
        np.testing.assert_allclose(segment.states, 0.0, atol=1e-8)

    def test_collect_returns_requested_count(self, eq_state):
        quiet = MLParameters(sigma_star=0.0)
        segments = collect_quiescent_segments(quiet, 3, 5.0, SimConfig(dt=0.1, t_max=100.0), eq_state)
        assert len(segments) == 3

    def test_collect_raises_when_every_attempt_fires(self, default_params, eq_state, mocker):
        mocker.patch("src.services.sde_engine.quiescent_attempt", return_value=None)
        with pytest.raises(InsufficientSegments):
            collect_quiescent_segments(default_params, 2, 5.0, SimConfig(dt=0.1, t_max=100.0), eq_state, max_attempts=10)


class TestLinearSDE:
    """線形SDEのテストクラス"""

    def test_noiseless_matches_matrix_exponential(self, linear_system):
        x0 = (1.0, 0.01)
        path = simulate_linear(linear_system.M, np.zeros((2, 2)), x0, SimConfig(dt=0.001, t_max=10.0))
        expected = expm(linear_system.M * 10.0) @ np.array(x0)
        np.testing.assert_allclose(path.states[-1], expected, rtol=1e-3)

    def test_columns(self, linear_system):
        path = simulate_linear(linear_system.M, linear_system.G, (0.0, 0.0), SimConfig(dt=0.1, t_max=1.0))
        assert path.columns == ("x1", "x2")
        assert len(path) == 11

    def test_covariance_converges_to_stationary(self, linear_system):
        """十分長い時間で定常リアプノフ方程式の解に一致"""
        M, G = linear_system.M, linear_system.G
        stationary = solve_continuous_lyapunov(M, -G @ G.T)
        np.testing.assert_allclose(linear_covariance(M, G, 5000.0), stationary, rtol=1e-6)

    def test_covariance_at_zero(self, linear_system):
        np.testing.assert_allclose(linear_covariance(linear_system.M, linear_system.G, 0.0), 0.0, atol=1e-15)

    def test_em_endpoints_match_covariance(self, linear_system):
        M, G = linear_system.M, linear_system.G
        endpoints = linear_em_endpoints(M, G, (0.0, 0.0), t=50.0, dt=0.1, n=4000, seed=3)
        empirical = np.cov(endpoints.T)
        exact = linear_covariance(M, G, 50.0)
        assert empirical[0, 0] == pytest.approx(exact[0, 0], rel=0.1)
        assert empirical[1, 1] == pytest.approx(exact[1, 1], rel=0.1)
