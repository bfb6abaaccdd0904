"""
radial OU型LIFモデルのユニットテスト

遷移密度、ハザード、ISI密度、累積ハザード、初到達時間、
ブロック単位のシミュレーションを検証します。
"""

import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad, trapezoid

from src.models.errors import HardThresholdHasNoRate, InvalidConfig, ModelError, ThinningBoundExceeded
from src.models.hazard import HazardModel
from src.models.simulation import SimConfig
from src.services.radial_lif import (
    RAYLEIGH_MEAN,
    block_layout,
    cumulative_hazard_exact,
    cumulative_hazard_monte_carlo,
    cumulative_hazard_theoretical,
    cumulative_integral,
    hazard,
    hazard_form_discrepancy,
    isi_curves,
    isi_density,
    log_integrand_exact,
    log_integrand_simplified,
    mean_first_passage,
    radial_skeleton,
    radial_transition_sample,
    simulate_lif,
    simulate_lif_block,
    stationary_density_r,
    survival,
    threshold_for_mean,
    transition_density_r,
)


@pytest.fixture
def logistic_hazard(linear_system):
    """既定のロジスティック型ハザード"""
    return HazardModel.logistic(1.3922, 0.2718, linear_system.omega)


class TestTransitionLaw:
    """動径の遷移則のテストクラス"""

    @pytest.mark.parametrize("u", [0.05, 0.5, 3.0])
    @pytest.mark.parametrize("s", [0.0, 1.0, 3.0])
    def test_density_integrates_to_one(self, s, u):
        center = s * math.exp(-u)
        total, _ = quad(
            lambda r: transition_density_r(r, s, u), 0.0, s + 10.0,
            points=[center] if center > 0 else None, epsabs=1e-12, epsrel=1e-12, limit=200,
        )
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_density_converges_to_stationary(self):
        r = np.linspace(0.1, 3.0, 7)
        np.testing.assert_allclose(transition_density_r(r, 2.0, 20.0), stationary_density_r(r), rtol=1e-10)

    def test_stationary_mean(self):
        mean, _ = quad(lambda r: r * stationary_density_r(r), 0.0, np.inf)
        assert mean == pytest.approx(RAYLEIGH_MEAN, rel=1e-10)

    def test_sample_second_moment(self):
        """E[R_u²] = s²e^{-2u} + 1 - e^{-2u}"""
        s, u = 1.5, 0.4
        sample = radial_transition_sample(s, u, seed=7, size=100_000)
        expected = s ** 2 * math.exp(-2 * u) + 1.0 - math.exp(-2 * u)
        assert np.mean(sample ** 2) == pytest.approx(expected, rel=0.02)

    def test_sample_matches_noncentral_chi2(self):
        s, u = 1.5, 0.4
        var = (1.0 - math.exp(-2 * u)) / 2.0
        delta = s ** 2 * math.exp(-2 * u) / var
        sample = radial_transition_sample(s, u, seed=7, size=20_000)
        result = stats.kstest(sample ** 2 / var, stats.ncx2(2, delta).cdf)
        assert result.pvalue > 0.001

    def test_invalid_elapsed_time(self):
        with pytest.raises(ValueError):
            radial_transition_sample(1.0, 0.0, seed=1)

    def test_skeleton_starts_at_zero(self):
        times, radii = radial_skeleton(0.01, 100.0, 11, 5, np.random.default_rng(1))
        assert times[-1] == pytest.approx(100.0)
        assert radii.shape == (5, 11)
        np.testing.assert_array_equal(radii[:, 0], 0.0)

    def test_skeleton_requires_two_points(self):
        with pytest.raises(InvalidConfig):
            radial_skeleton(0.01, 100.0, 1, 5, np.random.default_rng(1))


class TestHazard:
    """ハザード率のテストクラス"""

    def test_logistic_half_rate_at_alpha(self, logistic_hazard, linear_system):
        assert hazard(logistic_hazard, 1.3922) == pytest.approx(linear_system.omega / (4 * math.pi))

    def test_logistic_is_bounded(self, logistic_hazard):
        assert hazard(logistic_hazard, 100.0) == pytest.approx(logistic_hazard.base_rate)

    def test_exponential_unit_rate_at_alpha(self):
        assert hazard(HazardModel.exponential(6.31, 0.76), 6.31) == pytest.approx(1.0)

    def test_array_shape(self, logistic_hazard):
        assert hazard(logistic_hazard, np.zeros((3, 4))).shape == (3, 4)

    def test_hard_threshold_has_no_rate(self):
        with pytest.raises(HardThresholdHasNoRate):
            hazard(HazardModel.hard(2.0), 1.0)


class TestIsiDensity:
    """ISI密度と生存関数のテストクラス"""

    def test_survival_at_zero(self, logistic_hazard, linear_system):
        assert survival(logistic_hazard, linear_system.lam, 0.0) == 1.0

    def test_survival_rejects_negative_time(self, logistic_hazard, linear_system):
        with pytest.raises(InvalidConfig):
            survival(logistic_hazard, linear_system.lam, -1.0)

    def test_density_requires_positive_time(self, logistic_hazard, linear_system):
        with pytest.raises(InvalidConfig):
            isi_density(logistic_hazard, linear_system.lam, 0.0)

    def test_density_is_deterministic_for_seed(self, logistic_hazard, linear_system):
        a = isi_density(logistic_hazard, linear_system.lam, 200.0, M=200, n=50, seed=3)
        b = isi_density(logistic_hazard, linear_system.lam, 200.0, M=200, n=50, seed=3)
        assert a == b
        assert a > 0

    def test_curves_are_consistent(self, logistic_hazard, linear_system):
        """生存関数は単調非増加で、密度の積分は 1 - S(T) に一致する"""
        times, density, surv = isi_curves(logistic_hazard, linear_system.lam, 1000.0, M=300, n=501, seed=5)
        assert surv[0] == 1.0
        assert np.all(np.diff(surv) <= 1e-12)
        assert np.all(density >= 0)
        assert trapezoid(density, times) == pytest.approx(1.0 - surv[-1], rel=0.02)


class TestCumulativeHazard:
    """指数型ハザードの累積ハザードのテストクラス"""

    def test_zero_at_origin(self, linear_system):
        assert cumulative_hazard_theoretical(2.0, 1.0, linear_system.lam, 0.0) == 0.0
        assert cumulative_hazard_exact(2.0, 1.0, linear_system.lam, 0.0) == 0.0

    def test_monotone_and_order_independent(self, linear_system):
        t = np.array([300.0, 50.0, 150.0])
        values = cumulative_hazard_exact(2.0, 1.0, linear_system.lam, t)
        assert values[1] < values[2] < values[0]
        assert values[0] == pytest.approx(cumulative_hazard_exact(2.0, 1.0, linear_system.lam, 300.0))

    def test_exact_form_matches_monte_carlo(self, linear_system):
        t = np.array([100.0, 300.0])
        exact = cumulative_hazard_exact(2.0, 1.0, linear_system.lam, t)
        estimate = cumulative_hazard_monte_carlo(2.0, 1.0, linear_system.lam, t, M=5000, n=601, seed=3)
        np.testing.assert_allclose(estimate, exact, rtol=0.03)

    def test_discrepancy_is_reported(self, linear_system):
        """2つの式は原点付近で √π 倍異なる"""
        report = hazard_form_discrepancy(2.0, 1.0, linear_system.lam, [0.01, 100.0])
        assert set(report) == {"t", "simplified", "exact", "relative_difference"}
        assert report["relative_difference"][0] == pytest.approx(math.sqrt(math.pi) - 1.0, rel=0.05)

    @pytest.mark.parametrize(
        "log_integrand, prefactor, closed_form",
        [
            (log_integrand_simplified, math.sqrt(math.pi), cumulative_hazard_theoretical),
            (log_integrand_exact, 1.0, cumulative_hazard_exact),
        ],
    )
    def test_forms_share_integrand(self, linear_system, log_integrand, prefactor, closed_form):
        """当てはめで使う被積分関数から両方の累積ハザードを再構成できる"""
        t = np.array([200.0, 50.0])
        rebuilt = prefactor * math.exp(-2.0) * cumulative_integral(log_integrand, 1.0, linear_system.lam, t)
        np.testing.assert_allclose(rebuilt, closed_form(2.0, 1.0, linear_system.lam, t), rtol=1e-12)

    def test_negative_time_rejected(self, linear_system):
        with pytest.raises(ValueError):
            cumulative_hazard_exact(2.0, 1.0, linear_system.lam, -1.0)


class TestFirstPassage:
    """硬い閾値の初到達時間のテストクラス"""

    def test_mean_at_unit_threshold(self):
        """E(T) = (1/2)·₂F₂(1,1;2,2;1)"""
        assert mean_first_passage(1.0) == pytest.approx(0.658951, abs=1e-5)

    def test_mean_is_increasing(self):
        values = mean_first_passage(np.array([0.5, 1.0, 2.0, 3.0]))
        assert np.all(np.diff(values) > 0)

    def test_threshold_for_dimensionless_target(self):
        """無次元のE(T)を447と比較すると S ≈ 2.97"""
        S = threshold_for_mean(447.0)
        assert S == pytest.approx(2.97, abs=0.01)
        assert mean_first_passage(S) == pytest.approx(447.0, rel=1e-9)

    def test_threshold_for_target_in_ms(self, linear_system):
        S = threshold_for_mean(447.0, lam=linear_system.lam)
        assert S == pytest.approx(1.74, abs=0.02)
        assert mean_first_passage(S) / linear_system.lam == pytest.approx(447.0, rel=1e-9)

    def test_invalid_targets(self):
        with pytest.raises(ModelError):
            threshold_for_mean(0.0)
        with pytest.raises(ModelError):
            threshold_for_mean(1e60)


class TestLifSimulation:
    """ブロック単位のLIFシミュレーションのテストクラス"""

    def test_block_layout(self):
        assert block_layout(600) == [(0, 256), (1, 256), (2, 88)]
        assert block_layout(1) == [(0, 1)]

    def test_block_is_deterministic(self, logistic_hazard, linear_system):
        cfg = SimConfig(dt=1.0, t_max=300.0, seed=4)
        a = simulate_lif_block(logistic_hazard, linear_system.lam, cfg, 1, 20)
        b = simulate_lif_block(logistic_hazard, linear_system.lam, cfg, 1, 20)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_sample_is_assembled_from_blocks(self, logistic_hazard, linear_system):
        cfg = SimConfig(dt=1.0, t_max=300.0, seed=4)
        sample = simulate_lif(logistic_hazard, linear_system.lam, cfg, 300)
        first, _ = simulate_lif_block(logistic_hazard, linear_system.lam, cfg, 0, 256)
        assert len(sample) == 300
        assert sample.model_tag == "lif-logistic"
        np.testing.assert_array_equal(sample.times[:256], first)
        assert np.all(sample.times <= 300.0)
        assert np.all(sample.times[sample.censored] == 300.0)

    def test_hard_threshold_mean(self):
        """無次元時間でのシミュレーション平均が (S²/2)·₂F₂(1,1;2,2;S²) に一致する"""
        S = 1.5
        sample = simulate_lif(HazardModel.hard(S), 1.0, SimConfig(dt=0.01, t_max=100.0, seed=2), 2000)
        assert sample.n_censored == 0
        assert sample.times.mean() == pytest.approx(mean_first_passage(S), rel=0.06)

    def test_thinning_bound_violation(self, linear_system, mocker):
        """局所上界が小さすぎる場合は黙って偏らせずにエラーにする"""
        h = HazardModel.logistic(0.5, 0.2, 2.0 * math.pi)
        mocker.patch(
            "src.services.radial_lif._monotone_bound",
            side_effect=lambda model, r, sd: 0.5 * np.asarray(hazard(model, r)),
        )
        with pytest.raises(ThinningBoundExceeded):
            simulate_lif_block(h, 0.01, SimConfig(dt=1.0, t_max=200.0, seed=1), 0, 64)

    def test_invalid_count(self, logistic_hazard, linear_system):
        with pytest.raises(InvalidConfig):
            simulate_lif(logistic_hazard, linear_system.lam, SimConfig(dt=1.0, t_max=10.0), 0)
