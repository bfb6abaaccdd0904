"""
推定手順

ピリオドグラムによるスペクトル推定、直線L上の条件付き発火確率、
シグモイド回帰、Nelson-Aalen推定、指数型ハザードの較正、
ISI分布の比較を提供します。
"""

import math
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from lifelines import NelsonAalenFitter
from scipy import stats
from scipy.integrate import cumulative_trapezoid, solve_ivp, trapezoid
from scipy.optimize import least_squares
from scipy.signal import periodogram
from scipy.special import expit

from ..config.logging import get_logger
from ..models.errors import DegenerateData, InsufficientSegments, LimitCycleNotFound
from ..models.parameters import MLParameters, State2
from ..models.results import (
    CumulativeHazardCurve,
    FiringProbabilityFit,
    HazardFit,
    SpectralDensity,
    SpectrumKind,
)
from ..models.simulation import BoundaryPolicy, ISISample, Path, SimConfig
from .linearization import LinearizedSystem, build_linearized, line_point
from .ml_model import drift, equilibrium
from .ou_approx import spectrum_xa
from .radial_lif import cumulative_integral, log_integrand_exact, log_integrand_simplified
from .sde_engine import MLStepper, replicate_rng

logger = get_logger(__name__)

MIN_SEGMENTS = 20
MIN_SEGMENT_MS = 450.0
# 不安定リミットサイクルと直線Lの交点の参照値
REFERENCE_UNSTABLE_DISTANCE = 0.0172
# 1回の積分で追跡する時間（約10周期）
SECTION_SPAN_MS = 800.0

# (時刻, 密度) または (時刻, 密度, 生存関数)
DensityCurve = Union[Tuple[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]


def average_periodogram(segments: Sequence[Path], coord: int = 0) -> SpectralDensity:
    """
    セグメントごとの生ピリオドグラムの平均（スケーリングなし）

    すべてのセグメントを最短の長さに切り詰め、矩形窓・平均除去の
    ピリオドグラムを平滑化せずに平均します。周波数は rad/ms に変換します。

    Args:
        segments: 同じ記録間隔のパス
        coord: 座標（0 = 第1座標）

    Returns:
        経験スペクトル密度
    """
    if not segments:
        raise InsufficientSegments("セグメントがありません")
    dt = segments[0].dt
    if any(not math.isclose(s.dt, dt) for s in segments):
        raise InsufficientSegments("セグメントの記録間隔が揃っていません")
    length = min(len(s) for s in segments)
    powers = []
    for segment in segments:
        freqs, power = periodogram(
            segment.states[:length, coord],
            fs=1.0 / dt,
            window="boxcar",
            detrend="constant",
            scaling="density",
        )
        powers.append(power)
    return SpectralDensity(
        freqs=2.0 * math.pi * freqs,
        power=np.mean(powers, axis=0) / (2.0 * math.pi),
        kind=SpectrumKind.EMPIRICAL,
    )


def estimate_spectrum(
    segments: Sequence[Path],
    coord: int,
    sys: LinearizedSystem,
    min_segments: int = MIN_SEGMENTS,
    min_len: float = MIN_SEGMENT_MS,
) -> SpectralDensity:
    """
    閾値下セグメントからスペクトル密度を推定

    平均ピリオドグラムの最大値を、同じ周波数格子上の X^a の理論スペクトルの
    最大値に合わせてスケーリングします。

    Args:
        segments: 中心化されたセグメント
        coord: 座標
        sys: 線形化系
        min_segments: 必要なセグメント数
        min_len: セグメントの最短長（ms）

    Returns:
        スケーリング済みの経験スペクトル密度

    Raises:
        InsufficientSegments: 条件を満たすセグメントが不足する場合
    """
    usable = [s for s in segments if s.duration >= min_len - 1e-9]
    if len(usable) < min_segments:
        raise InsufficientSegments(
            f"{min_len} ms以上のセグメントが{len(usable)}本しかありません（必要数 {min_segments}）"
        )
    raw = average_periodogram(usable, coord)
    theory_max = float(np.max(spectrum_xa(sys, raw.freqs)))
    scale = theory_max / float(np.max(raw.power))
    return SpectralDensity(freqs=raw.freqs, power=raw.power * scale, kind=SpectrumKind.EMPIRICAL)


def peak_frequency(sd: SpectralDensity) -> float:
    """スペクトルのピーク角周波数（rad/ms）"""
    return sd.peak_frequency


def _section_crossings(
    p: MLParameters,
    eq: State2,
    start_w: float,
    reverse: bool,
    span: float,
) -> np.ndarray:
    # 直線L（v = V_eq, w < W_eq）を通過した点のwを時刻順に返す
    sign = -1.0 if reverse else 1.0

    def rhs(_t, y):
        dv, dw = drift(State2(y[0], y[1]), p)
        return [sign * dv, sign * dw]

    def on_line(_t, y):
        return y[0] - eq.v

    on_line.direction = -1.0 if reverse else 1.0
    solution = solve_ivp(
        rhs,
        (0.0, span),
        [eq.v, start_w],
        events=on_line,
        rtol=1e-10,
        atol=1e-12,
        max_step=1.0,
    )
    times = solution.t_events[0]
    if len(times) == 0:
        return np.zeros(0)
    points = np.asarray(solution.y_events[0]).reshape(-1, 2)
    keep = (times > 1e-6) & (points[:, 1] < eq.w)
    return points[keep, 1]


def find_limit_cycle_crossing(
    p: MLParameters,
    kind: str,
    eq: Optional[State2] = None,
    tol: float = 1e-6,
    max_rounds: int = 40,
    start_distance: Optional[float] = None,
) -> float:
    """
    リミットサイクルと直線Lの交点までの距離

    決定論的な系（σ* = 0）をポアンカレ断面 L 上で追跡し、連続する交点の
    差が tol 未満になった時点で収束とします。安定リミットサイクルは順方向、
    不安定リミットサイクルは時間反転した系で求めます。

    Args:
        p: モデルパラメータ
        kind: "stable" または "unstable"
        eq: 平衡点（未指定なら計算する）
        tol: 収束判定
        max_rounds: 積分を継続する回数の上限
        start_distance: 初期点の距離（既定は stable: W_eq/2, unstable: W_eq/20）

    Returns:
        W_eq からの距離 l

    Raises:
        LimitCycleNotFound: 収束しない場合
    """
    if kind not in ("stable", "unstable"):
        raise ValueError(f"未知のリミットサイクルです: {kind}")
    if eq is None:
        eq = equilibrium(p)
    reverse = kind == "unstable"
    if start_distance is None:
        start_distance = eq.w / 20.0 if reverse else eq.w / 2.0
    span = SECTION_SPAN_MS
    w = eq.w - start_distance
    previous: Optional[float] = None
    for _ in range(max_rounds):
        crossings = _section_crossings(p, eq, w, reverse, span)
        if len(crossings) == 0:
            break
        history = np.concatenate([[previous] if previous is not None else [], crossings])
        gaps = np.abs(np.diff(history))
        converged = np.flatnonzero(gaps < tol)
        if len(converged):
            l = float(eq.w - history[converged[0] + 1])
            logger.debug("limit_cycle_found", kind=kind, distance=l)
            return l
        previous = float(crossings[-1])
        w = previous
    raise LimitCycleNotFound(f"{kind}リミットサイクルの交点が収束しませんでした")


def firing_trial(
    p: MLParameters,
    sys: LinearizedSystem,
    l: float,
    dt: float,
    rng: np.random.Generator,
    cycles_cap: float = 3.0,
    v_threshold: float = 0.0,
    boundary_policy: BoundaryPolicy = BoundaryPolicy.REFLECT,
) -> bool:
    """
    直線L上の点から1周する間に発火するか

    変換座標での角度を連続的に追跡し、原点のまわりを2π回るか、
    vが閾値を超えるか、3·(2π/ω) msに達するまで進めます。

    Returns:
        発火した場合True
    """
    start = line_point(sys, l)
    stepper = MLStepper(p, start, dt, rng, boundary_policy)
    (q11, q12), (q21, q22) = sys.Q_inv
    v_eq, w_eq = sys.eq
    max_steps = int(math.ceil(cycles_cap * sys.period / dt))
    dv, dw = start.v - v_eq, start.w - w_eq
    angle = math.atan2(q21 * dv + q22 * dw, q11 * dv + q12 * dw)
    turned = 0.0
    for _ in range(max_steps):
        v, w = stepper.step()
        if v >= v_threshold:
            return True
        dv, dw = v - v_eq, w - w_eq
        current = math.atan2(q21 * dv + q22 * dw, q11 * dv + q12 * dw)
        delta = current - angle
        if delta > math.pi:
            delta -= 2.0 * math.pi
        elif delta < -math.pi:
            delta += 2.0 * math.pi
        turned += delta
        angle = current
        if abs(turned) >= 2.0 * math.pi:
            return False
    return False


def estimate_firing_point(
    p: MLParameters,
    sys: LinearizedSystem,
    l: float,
    n_trials: int,
    cfg: SimConfig,
    point_index: int,
) -> Tuple[float, int, int]:
    """
    格子点1つ分の試行（ワーカーの処理単位）

    試行jは replicate_rng(cfg.seed, point_index, j) を使います。

    Returns:
        (l, 発火数, 試行数)
    """
    fired = sum(
        firing_trial(
            p, sys, l, cfg.dt, replicate_rng(cfg.seed, point_index, j), boundary_policy=cfg.boundary_policy
        )
        for j in range(n_trials)
    )
    return l, int(fired), n_trials


def firing_grid(
    p: MLParameters,
    eq: Optional[State2] = None,
    n_points: int = 25,
    divisions: int = 20,
) -> Tuple[np.ndarray, Dict[str, float]]:
    """
    直線L上の格子 l_i = i·δ（δ = 安定リミットサイクルまでの距離 / divisions）

    w ≤ 0 になる点は除き、除いた点数を dropped_points に記録します。

    Returns:
        (距離の配列, リミットサイクルの情報)
    """
    if eq is None:
        eq = equilibrium(p)
    stable = find_limit_cycle_crossing(p, "stable", eq)
    unstable = find_limit_cycle_crossing(p, "unstable", eq)
    delta = stable / divisions
    distances = delta * np.arange(1, n_points + 1)
    valid = distances < eq.w
    if not np.all(valid):
        logger.warning("firing_grid_truncated", dropped=int((~valid).sum()), w_eq=eq.w)
    info = {
        "stable_distance": stable,
        "unstable_distance": unstable,
        "delta": delta,
        "requested_points": int(n_points),
        "dropped_points": int((~valid).sum()),
        "unstable_reference_relative_difference": abs(unstable - REFERENCE_UNSTABLE_DISTANCE)
        / REFERENCE_UNSTABLE_DISTANCE,
    }
    return distances[valid], info


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> Tuple[float, float]:
    """二項比率のWilson信頼区間"""
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def sigmoid(l: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """1/(1 + exp((α - l)/β))"""
    return expit((np.asarray(l, dtype=float) - alpha) / beta)


def fit_sigmoid(
    distances: Sequence[float],
    probabilities: Sequence[float],
    weights: Optional[Sequence[float]] = None,
) -> Tuple[float, float]:
    """
    条件付き発火確率へのシグモイドの最小二乗当てはめ

    粗いグリッド探索の後、(α, log β) についてLevenberg-Marquardt法で精密化します。

    Args:
        distances: 直線L上の距離
        probabilities: 発火頻度
        weights: 各点の重み（Noneなら重みなし）

    Returns:
        (α̂, β̂)

    Raises:
        DegenerateData: すべての頻度が0か1の場合
    """
    l = np.asarray(distances, dtype=float)
    y = np.asarray(probabilities, dtype=float)
    root_w = np.sqrt(np.asarray(weights, dtype=float)) if weights is not None else np.ones_like(l)
    if not np.any((y > 0) & (y < 1)):
        raise DegenerateData("すべての発火頻度が0か1のため、シグモイドの幅が推定できません")

    span = float(l.max() - l.min()) or 1.0
    spacing = float(np.min(np.diff(np.unique(l)))) if len(np.unique(l)) > 1 else span
    alphas = np.linspace(l.min(), l.max(), 81)
    betas = np.geomspace(spacing / 50.0, span, 60)
    sse = np.array([[np.sum((root_w * (sigmoid(l, a, b) - y)) ** 2) for b in betas] for a in alphas])
    i, j = np.unravel_index(np.argmin(sse), sse.shape)

    def residuals(theta: np.ndarray) -> np.ndarray:
        return root_w * (sigmoid(l, theta[0], math.exp(theta[1])) - y)

    result = least_squares(
        residuals,
        x0=[alphas[i], math.log(betas[j])],
        method="lm",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=10000,
    )
    alpha, beta = float(result.x[0]), math.exp(result.x[1])
    if np.sum(result.fun ** 2) > sse[i, j]:
        alpha, beta = float(alphas[i]), float(betas[j])
    return alpha, beta


def assemble_firing_fit(
    sys: LinearizedSystem,
    points: Sequence[Tuple[float, int, int]],
    info: Optional[Dict[str, Any]] = None,
    weighted: bool = False,
) -> FiringProbabilityFit:
    """
    格子点の結果からシグモイド回帰と変換座標でのパラメータを求める

    当てはめに失敗した場合は推定値なしで返します。
    """
    grid = [(float(l), k / n, int(n)) for l, k, n in points]
    intervals = [wilson_interval(k, n) for _l, k, n in points]
    fit = FiringProbabilityFit(
        sigma_star=sys.params.sigma_star,
        grid=grid,
        intervals=intervals,
        metadata=dict(info or {}),
    )
    weights = None
    if weighted:
        # 0と1を避けるため (k+1)/(n+2) で分散を見積もる
        smoothed = np.array([(k + 1) / (n + 2) for _l, k, n in points])
        weights = np.array([n for _l, _k, n in points]) / (smoothed * (1.0 - smoothed))
    try:
        alpha_hat, beta_hat = fit_sigmoid(fit.distances, fit.probabilities, weights)
    except DegenerateData as e:
        logger.warning("sigmoid_fit_failed", sigma_star=sys.params.sigma_star, reason=str(e))
        return fit

    scale = math.sqrt(2.0 * sys.lam) / sys.sigma
    fit.alpha_hat = alpha_hat
    fit.beta_hat = beta_hat
    fit.alpha_star = alpha_hat * scale
    fit.beta_star = beta_hat * scale
    fit.metadata["weighted"] = weighted
    return fit


def estimate_firing_probability(
    p: MLParameters,
    cfg: SimConfig,
    sigma_star: Optional[float] = None,
    n_trials: int = 1000,
    n_points: int = 25,
    divisions: int = 20,
    weighted: bool = False,
) -> FiringProbabilityFit:
    """
    直線L上の条件付き発火確率を推定してシグモイドを当てはめる

    Args:
        p: モデルパラメータ
        cfg: dt, seed を使用
        sigma_star: 指定すれば p の σ* を置き換える
        n_trials: 格子点ごとの試行数
        n_points: 格子点数
        divisions: 安定リミットサイクルまでの分割数
        weighted: Wilson流の二項分散で重み付けするか

    Returns:
        FiringProbabilityFit
    """
    if sigma_star is not None:
        p = p.with_sigma_star(sigma_star)
    sys = build_linearized(p)
    distances, info = firing_grid(p, sys.eq, n_points, divisions)
    points = [estimate_firing_point(p, sys, l, n_trials, cfg, i) for i, l in enumerate(distances)]
    return assemble_firing_fit(sys, points, info, weighted)


def nelson_aalen(isi: ISISample) -> CumulativeHazardCurve:
    """
    Nelson-Aalen推定量による累積ハザード

    打ち切られた時刻はリスク集合を減らすだけです。

    Raises:
        DegenerateData: 打ち切られていない時刻がない場合
    """
    if np.all(isi.censored):
        raise DegenerateData("打ち切られていない発火時刻がありません")
    fitter = NelsonAalenFitter(nelson_aalen_smoothing=False)
    fitter.fit(isi.times, event_observed=~isi.censored)
    table = fitter.cumulative_hazard_
    times = table.index.to_numpy(dtype=float)
    values = table.iloc[:, 0].to_numpy(dtype=float)
    if times[0] > 0.0:
        times = np.concatenate([[0.0], times])
        values = np.concatenate([[0.0], values])
    values[0] = 0.0
    return CumulativeHazardCurve(times=times, values=np.maximum.accumulate(values))


_FORMS = {
    "simplified": (log_integrand_simplified, math.sqrt(math.pi)),
    "exact": (log_integrand_exact, 1.0),
}


def fit_exponential_hazard(
    curve: CumulativeHazardCurve,
    lam: float,
    form: str = "simplified",
    n_grid: int = 40,
    upper_quantile: float = 0.9,
    beta_grid: Optional[np.ndarray] = None,
) -> HazardFit:
    """
    理論累積ハザードをNelson-Aalen曲線に最小二乗で当てはめる

    A(t) = e^{-α/β}·J(β, t) なので、βを固定すればαは閉形式で最適化できます。
    βの粗いグリッドでこのプロファイルを最小化した後、(α, log β) について
    Levenberg-Marquardt法で精密化し、良い方を返します。

    Args:
        curve: Nelson-Aalen曲線
        lam: 時間スケール λ（1/ms）
        form: "simplified"（簡略化された閉形式）または "exact"
        n_grid: 対数等間隔の時刻格子の点数
        upper_quantile: 格子の上端にするジャンプ時刻の分位点
        beta_grid: βの粗いグリッド

    Returns:
        HazardFit
    """
    if form not in _FORMS:
        raise ValueError(f"未知の累積ハザードの式です: {form}")
    log_integrand, prefactor = _FORMS[form]
    jumps = curve.times[1:]
    if len(jumps) < 2:
        raise DegenerateData("累積ハザードのジャンプが不足しています")
    t_lo = float(jumps[0])
    t_hi = float(np.quantile(jumps, upper_quantile))
    if t_hi <= t_lo:
        t_hi = float(jumps[-1])
    times = np.geomspace(t_lo, t_hi, n_grid)
    empirical = np.asarray(curve(times), dtype=float)

    def base(beta: float) -> np.ndarray:
        return prefactor * cumulative_integral(log_integrand, beta, lam, times)

    def profile(beta: float) -> Tuple[float, float]:
        j = base(beta)
        c = max(float(np.dot(j, empirical) / np.dot(j, j)), 1e-300)
        alpha = -beta * math.log(c)
        return alpha, float(np.sum((c * j - empirical) ** 2))

    if beta_grid is None:
        beta_grid = np.geomspace(0.05, 5.0, 40)
    coarse = [(b,) + profile(b) for b in beta_grid]
    best_beta, best_alpha, best_objective = min(coarse, key=lambda row: row[2])

    def residuals(theta: np.ndarray) -> np.ndarray:
        beta = math.exp(theta[1])
        return math.exp(-theta[0] / beta) * base(beta) - empirical

    converged = False
    try:
        result = least_squares(
            residuals,
            x0=[best_alpha, math.log(best_beta)],
            method="lm",
            xtol=1e-12,
            ftol=1e-12,
            max_nfev=400,
        )
        converged = bool(result.status > 0)
        objective = float(np.sum(result.fun ** 2))
        if np.all(np.isfinite(result.x)) and objective <= best_objective:
            best_alpha, best_beta, best_objective = float(result.x[0]), math.exp(result.x[1]), objective
    except (ValueError, OverflowError) as e:
        logger.warning("hazard_refinement_failed", reason=str(e))

    if not converged:
        logger.warning("hazard_fit_not_converged", alpha=best_alpha, beta=best_beta, objective=best_objective)
    fitted = math.exp(-best_alpha / best_beta) * base(best_beta)
    return HazardFit(
        alpha=best_alpha,
        beta=best_beta,
        objective=best_objective,
        converged=converged,
        form=form,
        grid_times=times,
        empirical=empirical,
        fitted=fitted,
    )


def _curve_moments(times: np.ndarray, density: np.ndarray) -> Tuple[np.ndarray, float, float]:
    mass = cumulative_trapezoid(density, times, initial=0.0)
    total = float(mass[-1])
    if not total > 0:
        raise DegenerateData("密度曲線の積分が0です")
    mean = float(trapezoid(times * density, times)) / total
    second = float(trapezoid(times ** 2 * density, times)) / total
    return mass / total, mean, second - mean ** 2


def compare_isi(a: ISISample, b: Union[ISISample, DensityCurve]) -> Dict[str, float]:
    """
    ISI分布の比較

    bがISISampleなら2標本、曲線なら標本対CDFの
    Kolmogorov-Smirnov距離を求めます。打ち切られた時刻は除きます。
    曲線に生存関数があればCDFは 1 - S(t) とし、格子の外ではS(t)の端の値を使います。
    生存関数がなければ格子上で密度を正規化します。

    Returns:
        ks_distance, ks_pvalue, mean_diff (a - b), variance_ratio (a / b)
    """
    x = a.observed
    if len(x) == 0:
        raise DegenerateData("比較する発火時刻がありません")
    if isinstance(b, ISISample):
        y = b.observed
        if len(y) == 0:
            raise DegenerateData("比較する発火時刻がありません")
        test = stats.ks_2samp(x, y)
        mean_b, var_b = float(np.mean(y)), float(np.var(y, ddof=1)) if len(y) > 1 else float("nan")
    else:
        times, density, *rest = (np.asarray(v, dtype=float) for v in b)
        cdf, mean_b, var_b = _curve_moments(times, density)
        if rest:
            cdf = np.clip(1.0 - rest[0], 0.0, 1.0)
        test = stats.kstest(x, lambda q: np.interp(q, times, cdf))
    var_a = float(np.var(x, ddof=1)) if len(x) > 1 else float("nan")
    return {
        "ks_distance": float(test.statistic),
        "ks_pvalue": float(test.pvalue),
        "mean_diff": float(np.mean(x)) - mean_b,
        "variance_ratio": var_a / var_b if var_b else float("nan"),
    }
