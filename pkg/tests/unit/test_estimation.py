"""
推定手順のユニットテスト

スペクトル推定、発火確率とシグモイド回帰、Nelson-Aalen推定、
指数型ハザードの較正、ISI分布の比較を検証します。
"""

import math

import numpy as np
import pytest
from scipy import stats

from src.models.errors import DegenerateData, InsufficientSegments
from src.models.parameters import MLParameters
from src.models.results import CumulativeHazardCurve
from src.models.simulation import BoundaryPolicy, ISISample, Path, SimConfig
from src.services.estimation import (
    assemble_firing_fit,
    average_periodogram,
    compare_isi,
    estimate_firing_point,
    estimate_spectrum,
    firing_grid,
    firing_trial,
    fit_exponential_hazard,
    fit_sigmoid,
    nelson_aalen,
    peak_frequency,
    sigmoid,
    wilson_interval,
)
from src.services.linearization import build_linearized
from src.services.ou_approx import spectrum_xa, xa_segment
from src.services.radial_lif import cumulative_hazard_exact, cumulative_hazard_theoretical
from src.services.sde_engine import MLStepper, replicate_rng


def _sinusoid(dt: float, n: int, freq: float, phase: float = 0.0) -> Path:
    t = dt * np.arange(n)
    return Path(dt=dt, t0=0.0, states=np.column_stack([np.sin(freq * t + phase), np.zeros(n)]))


class TestSpectrumEstimation:
    """スペクトル推定のテストクラス"""

    def test_periodogram_peak_of_sinusoid(self):
        segments = [_sinusoid(0.5, 1000, 0.08, phase) for phase in (0.0, 1.0, 2.0)]
        sd = average_periodogram(segments)
        assert abs(peak_frequency(sd) - 0.08) <= sd.resolution

    def test_frequencies_in_rad_per_ms(self):
        sd = average_periodogram([_sinusoid(0.5, 1000, 0.08)])
        assert sd.resolution == pytest.approx(2.0 * math.pi / 500.0)
        assert sd.freqs[-1] == pytest.approx(math.pi / 0.5)

    def test_truncates_to_shortest_segment(self):
        sd = average_periodogram([_sinusoid(0.5, 1000, 0.08), _sinusoid(0.5, 800, 0.08)])
        assert sd.resolution == pytest.approx(2.0 * math.pi / 400.0)

    def test_empty_input(self):
        with pytest.raises(InsufficientSegments):
            average_periodogram([])

    def test_mismatched_spacing(self):
        with pytest.raises(InsufficientSegments):
            average_periodogram([_sinusoid(0.5, 100, 0.08), _sinusoid(1.0, 100, 0.08)])

    def test_scaled_to_theoretical_maximum(self, linear_system):
        segments = [xa_segment(linear_system, 1.0, 450.0, seed=3, index=i) for i in range(20)]
        sd = estimate_spectrum(segments, 0, linear_system)
        assert sd.power.max() == pytest.approx(np.max(spectrum_xa(linear_system, sd.freqs)), rel=1e-12)

    def test_requires_enough_segments(self, linear_system):
        segments = [xa_segment(linear_system, 1.0, 450.0, seed=3, index=i) for i in range(5)]
        with pytest.raises(InsufficientSegments):
            estimate_spectrum(segments, 0, linear_system)

    def test_short_segments_are_not_counted(self, linear_system):
        segments = [xa_segment(linear_system, 1.0, 100.0, seed=3, index=i) for i in range(20)]
        with pytest.raises(InsufficientSegments):
            estimate_spectrum(segments, 0, linear_system)


class TestFiringTrials:
    """直線L上の発火試行のテストクラス"""

    @pytest.fixture
    def quiet(self, eq_state):
        params = MLParameters(sigma_star=0.0)
        return params, build_linearized(params, eq_state)

    def test_inside_unstable_cycle_does_not_fire(self, quiet):
        params, sys = quiet
        assert firing_trial(params, sys, 0.005, 0.05, replicate_rng(1)) is False

    def test_far_from_equilibrium_fires(self, quiet):
        params, sys = quiet
        assert firing_trial(params, sys, 0.1, 0.05, replicate_rng(1)) is True

    def test_point_is_deterministic(self, default_params, linear_system):
        cfg = SimConfig(dt=0.1, t_max=1000.0, seed=6)
        a = estimate_firing_point(default_params, linear_system, 0.0172, 3, cfg, 4)
        b = estimate_firing_point(default_params, linear_system, 0.0172, 3, cfg, 4)
        assert a == b
        assert a[0] == 0.0172
        assert a[2] == 3
        assert 0 <= a[1] <= 3

    def test_boundary_policy_is_forwarded(self, default_params, linear_system, mocker):
        stepper = mocker.patch("src.services.estimation.MLStepper", wraps=MLStepper)
        cfg = SimConfig(dt=0.1, seed=6, boundary_policy=BoundaryPolicy.CLAMP)
        estimate_firing_point(default_params, linear_system, 0.0172, 2, cfg, 0)
        assert stepper.call_count == 2
        assert all(call.args[4] is BoundaryPolicy.CLAMP for call in stepper.call_args_list)

    def test_grid_records_dropped_points(self, default_params, eq_state):
        """w ≤ 0 になる点を除いた数が情報に残る"""
        distances, info = firing_grid(default_params, eq_state, n_points=200)
        assert info["requested_points"] == 200
        assert info["dropped_points"] > 0
        assert len(distances) + info["dropped_points"] == 200
        assert np.all(distances < eq_state.w)


class TestSigmoidFit:
    """シグモイド回帰のテストクラス"""

    GRID = np.linspace(0.005, 0.03, 11)

    def test_sigmoid_midpoint(self):
        assert sigmoid(0.0175, 0.0175, 0.002) == pytest.approx(0.5)

    def test_recovers_exact_parameters(self):
        y = sigmoid(self.GRID, 0.0175, 0.002)
        alpha, beta = fit_sigmoid(self.GRID, y)
        assert alpha == pytest.approx(0.0175, rel=1e-5)
        assert beta == pytest.approx(0.002, rel=1e-5)

    def test_order_independent(self):
        y = sigmoid(self.GRID, 0.0175, 0.002)
        order = np.random.default_rng(0).permutation(len(self.GRID))
        a = fit_sigmoid(self.GRID, y)
        b = fit_sigmoid(self.GRID[order], y[order])
        assert a == pytest.approx(b, rel=1e-6)

    def test_weighted_mode(self):
        y = sigmoid(self.GRID, 0.0175, 0.002)
        alpha, beta = fit_sigmoid(self.GRID, y, weights=np.linspace(1.0, 2.0, len(self.GRID)))
        assert alpha == pytest.approx(0.0175, rel=1e-4)
        assert beta == pytest.approx(0.002, rel=1e-4)

    def test_degenerate_data(self):
        y = (self.GRID > 0.0175).astype(float)
        with pytest.raises(DegenerateData):
            fit_sigmoid(self.GRID, y)

    def test_wilson_interval(self):
        low, high = wilson_interval(5, 10)
        assert low == pytest.approx(0.2366, abs=1e-4)
        assert high == pytest.approx(0.7634, abs=1e-4)

    def test_assemble_transforms_parameters(self, linear_system):
        n = 1000
        points = [(l, int(round(n * sigmoid(l, 0.0175, 0.002))), n) for l in self.GRID]
        fit = assemble_firing_fit(linear_system, points, {"delta": 0.001})
        scale = math.sqrt(2.0 * linear_system.lam) / linear_system.sigma
        assert fit.alpha_hat == pytest.approx(0.0175, abs=3e-4)
        assert fit.alpha_star == pytest.approx(fit.alpha_hat * scale)
        assert fit.beta_star == pytest.approx(fit.beta_hat * scale)
        assert len(fit.intervals) == len(points)
        assert fit.to_dict()["delta"] == 0.001

    def test_assemble_keeps_degenerate_grid(self, linear_system):
        points = [(0.01, 0, 10), (0.02, 10, 10)]
        fit = assemble_firing_fit(linear_system, points)
        assert fit.alpha_hat is None
        assert fit.probabilities.tolist() == [0.0, 1.0]


class TestNelsonAalen:
    """Nelson-Aalen推定のテストクラス"""

    def test_uncensored(self):
        curve = nelson_aalen(ISISample(times=[1.0, 2.0, 3.0], censored=[False] * 3, model_tag="file"))
        assert curve.times[0] == 0.0
        assert curve(1.0) == pytest.approx(1 / 3)
        assert curve(2.5) == pytest.approx(1 / 3 + 1 / 2)
        assert curve(3.0) == pytest.approx(1 / 3 + 1 / 2 + 1)

    def test_censored_times_only_shrink_risk_set(self):
        curve = nelson_aalen(ISISample(times=[1.0, 2.0, 3.0], censored=[False, True, False], model_tag="file"))
        assert curve(2.5) == pytest.approx(1 / 3)
        assert curve(3.0) == pytest.approx(1 / 3 + 1)

    def test_all_censored(self):
        with pytest.raises(DegenerateData):
            nelson_aalen(ISISample(times=[5.0, 5.0], censored=[True, True], model_tag="file"))


class TestHazardCalibration:
    """指数型ハザードの較正のテストクラス"""

    @pytest.mark.parametrize("form", ["exact", "simplified"])
    def test_recovers_generating_parameters(self, linear_system, form):
        """理論曲線そのものに当てはめると生成パラメータに戻る"""
        alpha, beta, lam = 6.31, 0.76, linear_system.lam
        times = np.concatenate([[0.0], np.geomspace(1.0, 2000.0, 3000)])
        if form == "exact":
            values = cumulative_hazard_exact(alpha, beta, lam, times)
        else:
            values = cumulative_hazard_theoretical(alpha, beta, lam, times)
        curve = CumulativeHazardCurve(times=times, values=np.maximum.accumulate(values))
        fit = fit_exponential_hazard(curve, lam, form=form)
        assert fit.form == form
        assert fit.alpha == pytest.approx(alpha, rel=0.05)
        assert fit.beta == pytest.approx(beta, rel=0.05)
        assert len(fit.to_dict()["grid"]) == 40

    def test_unknown_form(self, linear_system):
        curve = CumulativeHazardCurve(times=[0.0, 1.0, 2.0], values=[0.0, 0.1, 0.2])
        with pytest.raises(ValueError):
            fit_exponential_hazard(curve, linear_system.lam, form="bogus")

    def test_too_few_jumps(self, linear_system):
        curve = CumulativeHazardCurve(times=[0.0, 1.0], values=[0.0, 0.1])
        with pytest.raises(DegenerateData):
            fit_exponential_hazard(curve, linear_system.lam)


class TestCompareIsi:
    """ISI分布の比較のテストクラス"""

    def test_identical_samples(self):
        times = np.random.default_rng(1).exponential(100.0, 500) + 1.0
        sample = ISISample(times=times, censored=np.zeros(500, dtype=bool), model_tag="file")
        result = compare_isi(sample, sample)
        assert result["ks_distance"] == 0.0
        assert result["mean_diff"] == 0.0
        assert result["variance_ratio"] == pytest.approx(1.0)

    def test_sample_against_density_curve(self):
        times = np.random.default_rng(2).exponential(100.0, 2000)
        sample = ISISample(times=times, censored=np.zeros(2000, dtype=bool), model_tag="file")
        grid = np.linspace(0.0, 2000.0, 4001)
        result = compare_isi(sample, (grid, np.exp(-grid / 100.0) / 100.0))
        assert result["ks_distance"] < 0.05
        assert result["mean_diff"] == pytest.approx(0.0, abs=10.0)

    def test_survival_column_defines_cdf(self):
        """生存関数があれば格子の外でも 1 - S(t) をCDFとして使う"""
        times = np.random.default_rng(3).exponential(100.0, 1000)
        sample = ISISample(times=times, censored=np.zeros(1000, dtype=bool), model_tag="file")
        grid = np.linspace(0.0, 200.0, 401)
        density, surv = np.exp(-grid / 100.0) / 100.0, np.exp(-grid / 100.0)

        result = compare_isi(sample, (grid, density, surv))
        expected = stats.kstest(times, lambda q: np.interp(q, grid, 1.0 - surv))
        assert result["ks_distance"] == pytest.approx(expected.statistic)
        # 格子の外ではCDFが 1 - e^{-2} にとどまるので、最大の標本で e^{-2} の差が出る
        assert result["ks_distance"] == pytest.approx(math.exp(-2.0))

    def test_censored_times_excluded(self):
        a = ISISample(times=[10.0, 20.0, 500.0], censored=[False, False, True], model_tag="file")
        b = ISISample(times=[10.0, 20.0], censored=[False, False], model_tag="file")
        assert compare_isi(a, b)["ks_distance"] == 0.0

    def test_nothing_to_compare(self):
        empty = ISISample(times=[500.0], censored=[True], model_tag="file")
        with pytest.raises(DegenerateData):
            compare_isi(empty, empty)
