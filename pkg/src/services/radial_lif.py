"""
radial OU型の漏れ積分発火（LIF）モデル

2次元標準化OU過程の動径 R_u を閾値下の状態とし、状態依存のハザード率で
発火して0にリセットされるモデルです。R は非心χ²分布による厳密な遷移で
シミュレーションし、無次元時間 u からmsへの変換は u = λt の1か所だけで行います。
"""

import math
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy import special
from scipy.integrate import cumulative_trapezoid, quad, trapezoid
from scipy.optimize import brentq

from ..config.logging import get_logger
from ..models.errors import HardThresholdHasNoRate, InvalidConfig, ModelError, ThinningBoundExceeded
from ..models.hazard import HazardKind, HazardModel
from ..models.simulation import ISISample, SimConfig
from .sde_engine import replicate_rng
from .specfun import as_generator, hyp2f2_1122, log_i0, sample_noncentral_chi2_2

logger = get_logger(__name__)

ArrayLike = Union[float, np.ndarray]
SeedLike = Union[int, np.random.Generator, None]

# 定常Rayleigh分布 2r·exp(-r²) の平均 √π/2
RAYLEIGH_MEAN = math.sqrt(math.pi) / 2.0
# 間引き法の局所上界に使う遷移標準偏差の倍数（超過確率 < 1e-6）
BOUND_SIGMAS = 6.0
# 1ブロックで同時にシミュレーションする複製数
LIF_BLOCK = 256
# 閾値探索の上限
MAX_THRESHOLD = 10.0


def _transition_variance(du: ArrayLike) -> ArrayLike:
    # (1 - e^{-2u}) / 2
    return -np.expm1(-2.0 * np.asarray(du, dtype=float)) / 2.0


def _advance(r: ArrayLike, du: ArrayLike, rng: np.random.Generator) -> ArrayLike:
    # R_{u+du} | R_u = r の厳密サンプル
    var = _transition_variance(du)
    delta = np.asarray(r, dtype=float) ** 2 * np.exp(-2.0 * np.asarray(du)) / var
    y = var * sample_noncentral_chi2_2(delta, rng)
    return np.sqrt(y)


def radial_transition_sample(
    s: ArrayLike,
    u: float,
    seed: SeedLike = None,
    size: Optional[int] = None,
) -> ArrayLike:
    """
    R_u | R_0 = s の厳密サンプル

    Y = R² について 2Y/(1-e^{-2u}) が自由度2・非心度
    δ = 2s²e^{-2u}/(1-e^{-2u}) の非心χ²分布に従うことを使います。

    Args:
        s: 初期半径（非負、配列可）
        u: 経過時間（無次元、正）
        seed: シードまたは生成器
        size: sがスカラーの場合のサンプル数

    Returns:
        半径のサンプル
    """
    if not u > 0:
        raise ValueError(f"uは正である必要があります: {u}")
    rng = as_generator(seed)
    var = _transition_variance(u)
    delta = np.asarray(s, dtype=float) ** 2 * math.exp(-2.0 * u) / var
    y = var * sample_noncentral_chi2_2(delta, rng, size=size)
    return np.sqrt(y) if np.ndim(y) else math.sqrt(y)


def transition_density_r(r: ArrayLike, s: float, u: float) -> ArrayLike:
    """
    R の遷移密度

    (2r/(1-e^{-2u}))·exp(-(r² + s²e^{-2u})/(1-e^{-2u}))·I0(rs/sinh u) を
    対数空間で評価します。
    """
    rr = np.asarray(r, dtype=float)
    c = -math.expm1(-2.0 * u)
    with np.errstate(divide="ignore"):
        log_f = (
            np.log(2.0 * rr / c)
            - (rr ** 2 + s ** 2 * math.exp(-2.0 * u)) / c
            + log_i0(rr * s / math.sinh(u))
        )
    out = np.where(rr > 0, np.exp(log_f), 0.0)
    return out if np.ndim(r) else float(out)


def stationary_density_r(r: ArrayLike) -> ArrayLike:
    """定常Rayleigh密度 2r·exp(-r²)"""
    rr = np.asarray(r, dtype=float)
    out = np.where(rr > 0, 2.0 * rr * np.exp(-rr ** 2), 0.0)
    return out if np.ndim(r) else float(out)


def hazard(h: HazardModel, r: ArrayLike) -> ArrayLike:
    """
    半径rでのハザード率（1/ms）

    Raises:
        HardThresholdHasNoRate: 硬い閾値モデルの場合
    """
    rr = np.asarray(r, dtype=float)
    if h.kind is HazardKind.LOGISTIC:
        out = h.base_rate * special.expit((rr - h.alpha_star) / h.beta_star)
    elif h.kind is HazardKind.EXPONENTIAL:
        out = np.exp((rr - h.alpha) / h.beta)
    else:
        raise HardThresholdHasNoRate("硬い閾値モデルのハザード率は定義されません（初到達時刻で扱います）")
    return out if np.ndim(r) else float(out)


def radial_skeleton(
    lam: float,
    t: float,
    n: int,
    M: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    R_0 = 0 から始めた R_{λs} の骨格をM本生成

    Args:
        lam: 時間スケール λ（1/ms）
        t: 終了時刻（ms）
        n: 格子点数（端点を含む）
        M: パス数
        rng: 乱数生成器

    Returns:
        (時刻格子 形状 (n,), 半径 形状 (M, n))
    """
    if n < 2:
        raise InvalidConfig(f"格子点数は2以上である必要があります: {n}")
    times = np.linspace(0.0, t, n)
    du = lam * t / (n - 1)
    radii = np.zeros((M, n))
    for k in range(1, n):
        radii[:, k] = _advance(radii[:, k - 1], du, rng)
    return times, radii


def _weights_and_hazard(h: HazardModel, lam: float, t: float, M: int, n: int, seed: SeedLike):
    rng = as_generator(seed)
    times, radii = radial_skeleton(lam, t, n, M, rng)
    rates = hazard(h, radii)
    integrated = trapezoid(rates, times, axis=1)
    return rates[:, -1], np.exp(-integrated)


def isi_density(
    h: HazardModel,
    lam: float,
    t: float,
    M: int = 1000,
    n: int = 100,
    seed: SeedLike = None,
) -> float:
    """
    ISI密度 g(t) のモンテカルロ推定

    M本の骨格について α(R_{λt})·exp(-∫₀ᵗ α(R_{λs})ds) を平均します。
    積分はn点の台形則です。

    Args:
        h: ハザードモデル
        lam: 時間スケール λ（1/ms）
        t: 時刻（ms、正）
        M: パス数
        n: 台形則の点数
        seed: シードまたは生成器

    Returns:
        密度（1/ms）
    """
    if not t > 0:
        raise InvalidConfig(f"tは正である必要があります: {t}")
    final_rate, weight = _weights_and_hazard(h, lam, t, M, n, seed)
    return float(np.mean(final_rate * weight))


def survival(
    h: HazardModel,
    lam: float,
    t: float,
    M: int = 1000,
    n: int = 100,
    seed: SeedLike = None,
) -> float:
    """生存関数 E[exp(-∫₀ᵗ α(R_{λs})ds)] のモンテカルロ推定（S(0) = 1）"""
    if not t >= 0:
        raise InvalidConfig(f"tは非負である必要があります: {t}")
    if t == 0:
        return 1.0
    _, weight = _weights_and_hazard(h, lam, t, M, n, seed)
    return float(np.mean(weight))


def isi_curves(
    h: HazardModel,
    lam: float,
    t_max: float,
    M: int = 1000,
    n: int = 1001,
    seed: SeedLike = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    時刻格子上のISI密度と生存関数

    [0, t_max] のn点格子で共通の骨格を使うため、生存関数は単調非増加で、
    その差分は密度と整合します。

    Returns:
        (時刻 ms, 密度, 生存関数)
    """
    rng = as_generator(seed)
    times, radii = radial_skeleton(lam, t_max, n, M, rng)
    rates = hazard(h, radii)
    integrated = cumulative_trapezoid(rates, times, axis=1, initial=0.0)
    weight = np.exp(-integrated)
    return times, np.mean(rates * weight, axis=0), np.mean(weight, axis=0)


def log_integrand_simplified(s: float, beta: float, lam: float) -> float:
    """簡約形の累積ハザードの被積分関数の対数（前因子 √π は呼び出し側）"""
    g = math.sqrt(-math.expm1(-2.0 * lam * s)) / beta
    if g == 0.0:
        return 0.0
    return float(np.logaddexp(0.0, math.log(g) + g * g / 4.0 + special.log_ndtr(g)))


def log_integrand_exact(s: float, beta: float, lam: float) -> float:
    """R_u のRayleigh則から導いた被積分関数の対数"""
    g = math.sqrt(-math.expm1(-2.0 * lam * s)) / beta
    if g == 0.0:
        return 0.0
    return float(np.logaddexp(0.0, 0.5 * math.log(math.pi) + math.log(g) + g * g / 4.0
                              + special.log_ndtr(g / math.sqrt(2.0))))


def cumulative_integral(log_integrand, beta: float, lam: float, t: ArrayLike) -> ArrayLike:
    """
    exp(log_integrand) の [0, t] での積分

    時刻は任意の順序で渡せます。
    """
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt < 0):
        raise ValueError("時刻は非負である必要があります")
    order = np.argsort(tt)
    out = np.empty_like(tt)
    total, previous = 0.0, 0.0
    for idx in order:
        if tt[idx] > previous:
            piece, _ = quad(lambda s: math.exp(log_integrand(s, beta, lam)), previous, tt[idx], limit=200)
            total += piece
            previous = tt[idx]
        out[idx] = total
    return out if np.ndim(t) else float(out[0])


def cumulative_hazard_theoretical(alpha: float, beta: float, lam: float, t: ArrayLike) -> ArrayLike:
    """
    指数型ハザードの理論累積ハザード（簡略化された閉形式）

    √π·e^{-α/β}·∫₀ᵗ (g e^{g²/4}Φ(g) + 1) ds、g(s) = √(1 - e^{-2λs})/β を
    適応的求積で評価します。

    Args:
        alpha, beta: ハザードパラメータ
        lam: 時間スケール λ（1/ms）
        t: 時刻（ms、配列可）

    Returns:
        A(t)
    """
    integral = cumulative_integral(log_integrand_simplified, beta, lam, t)
    return math.sqrt(math.pi) * math.exp(-alpha / beta) * integral


def cumulative_hazard_exact(alpha: float, beta: float, lam: float, t: ArrayLike) -> ArrayLike:
    """
    R_0 = 0 から始めた R の Rayleigh 分布から導いた累積ハザード

    e^{-α/β}·∫₀ᵗ (1 + √π g e^{g²/4}Φ(g/√2)) ds
    """
    integral = cumulative_integral(log_integrand_exact, beta, lam, t)
    return math.exp(-alpha / beta) * integral


def cumulative_hazard_monte_carlo(
    alpha: float,
    beta: float,
    lam: float,
    t: ArrayLike,
    M: int = 10000,
    n: int = 2001,
    seed: SeedLike = None,
) -> ArrayLike:
    """∫₀ᵗ E[exp((R_{λs} - α)/β)] ds の骨格シミュレーションによる推定"""
    tt = np.asarray(t, dtype=float)
    t_end = float(np.max(tt))
    times, radii = radial_skeleton(lam, t_end, n, M, as_generator(seed))
    mean_rate = np.mean(np.exp((radii - alpha) / beta), axis=0)
    cumulative = cumulative_trapezoid(mean_rate, times, initial=0.0)
    out = np.interp(tt, times, cumulative)
    return out if np.ndim(t) else float(out)


def hazard_form_discrepancy(alpha: float, beta: float, lam: float, t: ArrayLike) -> Dict[str, ArrayLike]:
    """簡略化された閉形式とRayleigh分布から導いた式の差"""
    simplified = np.atleast_1d(cumulative_hazard_theoretical(alpha, beta, lam, t))
    exact = np.atleast_1d(cumulative_hazard_exact(alpha, beta, lam, t))
    return {
        "t": np.atleast_1d(np.asarray(t, dtype=float)).tolist(),
        "simplified": simplified.tolist(),
        "exact": exact.tolist(),
        "relative_difference": (np.abs(simplified - exact) / np.maximum(exact, 1e-300)).tolist(),
    }


def mean_first_passage(S: ArrayLike) -> ArrayLike:
    """
    R_0 = 0 から閾値Sへの平均初到達時間（無次元）

    (S²/2)·₂F₂(1,1;2,2;S²)。msに直すには 1/λ を掛けます。
    """
    s2 = np.asarray(S, dtype=float) ** 2
    out = 0.5 * s2 * hyp2f2_1122(s2)
    return out if np.ndim(out) else float(out)


def threshold_for_mean(target: float, lam: Optional[float] = None) -> float:
    """
    平均初到達時間が target になる閾値S（S ∈ (0, 10] の二分法系の探索）

    Args:
        target: 目標の平均
        lam: Noneなら target を無次元の E(T) と直接比較する
            （447で S ≈ 2.97 になる慣習）。指定するとtargetはmsとみなし
            E(T)/λ と比較する

    Returns:
        閾値S

    Raises:
        ModelError: 目標が探索範囲外の場合
    """
    if not target > 0:
        raise ModelError(f"目標の平均は正である必要があります: {target}")
    scale = 1.0 if lam is None else 1.0 / lam

    def gap(s: float) -> float:
        return mean_first_passage(s) * scale - target

    if gap(MAX_THRESHOLD) < 0:
        raise ModelError(f"S ≤ {MAX_THRESHOLD} では平均 {target} に届きません")
    return float(brentq(gap, 1e-12, MAX_THRESHOLD, xtol=1e-12))


def _monotone_bound(h: HazardModel, r: np.ndarray, sd: float) -> np.ndarray:
    # ロジスティック型・指数型ともにrについて単調増加
    return np.asarray(hazard(h, r + BOUND_SIGMAS * sd))


def simulate_lif_block(
    h: HazardModel,
    lam: float,
    cfg: SimConfig,
    block_index: int,
    size: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    LIFモデルの複製を1ブロック分まとめてシミュレーション（ワーカーの処理単位）

    各複製は R = 0 から始まり、長さ Δ = cfg.dt（ms）の窓ごとに進みます。
    ハザード型では窓の開始時の半径から局所上界 ᾱ を取り、指数分布の
    提案時刻で間引き法を行います。硬い閾値では窓の終点が閾値を超えるか、
    ブラウン橋の通過確率 exp(-2(S-R_k)(S-R_{k+1})/Δu) で発火とします。

    Args:
        h: ハザードモデル
        lam: 時間スケール λ（1/ms）
        cfg: dt（窓幅 ms）, t_max, seed を使用
        block_index: ブロック番号（乱数は replicate_rng(cfg.seed, block_index)）
        size: ブロック内の複製数

    Returns:
        (発火時刻 ms, 打ち切りフラグ)

    Raises:
        ThinningBoundExceeded: 提案時刻でハザード率が局所上界を超えた場合
    """
    rng = replicate_rng(cfg.seed, block_index)
    radius = np.zeros(size)
    clock = np.zeros(size)
    fired_at = np.full(size, cfg.t_max)
    alive = np.ones(size, dtype=bool)
    window = cfg.dt
    sd = math.sqrt(_transition_variance(lam * window))
    hard = h.kind is HazardKind.HARD

    while np.any(alive):
        idx = np.flatnonzero(alive)
        r = radius[idx]
        remaining = cfg.t_max - clock[idx]
        if hard:
            step = np.minimum(window, remaining)
            r_new = _advance(r, lam * step, rng)
            gap_start = h.threshold - r
            gap_end = h.threshold - r_new
            bridge = np.exp(-2.0 * np.clip(gap_start, 0, None) * np.clip(gap_end, 0, None) / (lam * step))
            crossed_end = r_new >= h.threshold
            fire = crossed_end | (rng.random(len(idx)) < bridge)
            frac = np.where(crossed_end, gap_start / np.maximum(r_new - r, 1e-300), 0.5)
            event_time = clock[idx] + step * np.clip(frac, 0.0, 1.0)
        else:
            bound = _monotone_bound(h, r, sd)
            with np.errstate(divide="ignore"):
                proposal = rng.exponential(1.0, len(idx)) / bound
            step = np.minimum(np.minimum(proposal, window), remaining)
            r_new = _advance(r, lam * step, rng)
            proposed = (proposal <= window) & (proposal <= remaining)
            rate = np.asarray(hazard(h, r_new))
            if np.any(proposed & (rate > bound * (1.0 + 1e-12))):
                raise ThinningBoundExceeded(
                    f"ハザード率が局所上界を超えました（窓幅 {window} ms を小さくしてください）"
                )
            accept_ratio = np.where(proposed, rate / np.where(bound > 0, bound, 1.0), 0.0)
            fire = proposed & (rng.random(len(idx)) < accept_ratio)
            event_time = clock[idx] + step

        clock[idx] += step
        radius[idx] = r_new
        fire_idx = idx[fire]
        fired_at[fire_idx] = event_time[fire]
        alive[fire_idx] = False
        alive[idx[clock[idx] >= cfg.t_max * (1.0 - 1e-12)]] = False

    censored = fired_at >= cfg.t_max
    fired_at[censored] = cfg.t_max
    return fired_at, censored


def block_layout(n: int, block: int = LIF_BLOCK) -> list:
    """n複製を固定サイズのブロックに分けた (ブロック番号, サイズ) のリスト"""
    return [(b, min(block, n - b * block)) for b in range((n + block - 1) // block)]


def simulate_lif(h: HazardModel, lam: float, cfg: SimConfig, n: int) -> ISISample:
    """
    ジャンプ拡散型LIFモデルのISIサンプル

    複製は固定サイズのブロックに分けられ、ブロックbは
    replicate_rng(cfg.seed, b) を使うため、結果は実行順序に依存しません。

    Args:
        h: ハザードモデル
        lam: 時間スケール λ（1/ms）
        cfg: シミュレーション設定
        n: 複製数

    Returns:
        ISIサンプル
    """
    if n < 1:
        raise InvalidConfig(f"複製数は1以上である必要があります: {n}")
    parts = [simulate_lif_block(h, lam, cfg, b, size) for b, size in block_layout(n)]
    return assemble_lif_sample(h, lam, cfg, parts)


def assemble_lif_sample(
    h: HazardModel,
    lam: float,
    cfg: SimConfig,
    parts: list,
) -> ISISample:
    """ブロックごとの結果をブロック番号順に連結してISIサンプルにする"""
    sample = ISISample(
        times=np.concatenate([t for t, _ in parts]),
        censored=np.concatenate([c for _, c in parts]),
        model_tag=h.tag,
        seed=cfg.seed,
        metadata={"hazard": h.to_dict(), "lambda": lam, "dt": cfg.dt, "t_max": cfg.t_max},
    )
    if sample.n_censored:
        logger.info("censored_replicates", model=h.tag, count=sample.n_censored, t_max=cfg.t_max)
    return sample
