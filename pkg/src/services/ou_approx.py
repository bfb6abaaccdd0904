"""
回転変調OU近似

標準化2次元OU過程の厳密シミュレーション、回転による X^a の構成、
X^a のSDEによる構成、2つの理論スペクトル密度を提供します。
周波数の単位はすべて rad/ms です。
"""

import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import lfilter

from ..models.results import SpectralDensity, SpectrumKind
from ..models.simulation import Path, SimConfig
from .linearization import LinearizedSystem
from .sde_engine import linear_em_endpoints, replicate_rng, simulate_linear

ArrayLike = Union[float, np.ndarray]

CONSTRUCTIONS = ("rotation", "sde")


def rotation(s: float) -> np.ndarray:
    """角度sの反時計回り回転行列 R_s"""
    c, si = math.cos(s), math.sin(s)
    return np.array([[c, -si], [si, c]])


def ou_transition_moments(x: ArrayLike, dt: float) -> Tuple[ArrayLike, float]:
    """
    標準化OU過程 dS = -S dt + dB の1ステップの厳密な遷移モーメント

    Returns:
        (平均 x·e^{-dt}, 座標ごとの分散 (1 - e^{-2dt})/2)
    """
    return np.asarray(x, dtype=float) * math.exp(-dt), -math.expm1(-2.0 * dt) / 2.0


def simulate_ou2d(
    dt: float,
    t_max: float,
    seed: Union[int, np.random.Generator],
    s0: Sequence[float] = (0.0, 0.0),
) -> Path:
    """
    標準化2次元OU過程を厳密なガウス遷移でシミュレーション

    各座標は独立なAR(1)過程 S_{k+1} = e^{-dt}·S_k + sd·Z_k として
    lfilterで一括計算します。

    Args:
        dt: 時間刻み（無次元時間）
        t_max: 終了時刻
        seed: シードまたは生成器
        s0: 初期値

    Returns:
        列名 (s1, s2) のパス（初期値を含む）
    """
    if not dt > 0:
        raise ValueError(f"dtは正の値である必要があります: {dt}")
    rng = seed if isinstance(seed, np.random.Generator) else replicate_rng(seed)
    n_steps = int(round(t_max / dt))
    a = math.exp(-dt)
    sd = math.sqrt(-math.expm1(-2.0 * dt) / 2.0)
    noise = sd * rng.standard_normal((2, n_steps))
    states = np.empty((n_steps + 1, 2))
    states[0] = s0
    for j in range(2):
        states[1:, j], _ = lfilter([1.0], [1.0, -a], noise[j], zi=[a * s0[j]])
    return Path(dt=dt, t0=0.0, states=states, columns=("s1", "s2"))


def _rotate_back(omega_t: np.ndarray, s: np.ndarray) -> np.ndarray:
    # R_{-ωt}·S を行ごとに適用
    c = np.cos(omega_t)
    si = np.sin(omega_t)
    return np.column_stack([c * s[:, 0] + si * s[:, 1], -si * s[:, 0] + c * s[:, 1]])


def xa_path(
    sys: LinearizedSystem,
    dt: float,
    t_max: float,
    seed: Union[int, np.random.Generator],
    construction: str = "rotation",
) -> Path:
    """
    X^a のパス

    rotation: X^a_t = (τ/√λ)·Q·R_{-ωt}·S_{λt}（Sは厳密遷移のOU過程）
    sde: dX^a = M X^a dt + τQ dB をEuler-Maruyama法で解く

    Args:
        sys: 線形化系
        dt: 時間刻み（ms）
        t_max: 終了時刻（ms）
        seed: シードまたは生成器
        construction: "rotation" または "sde"

    Returns:
        原点から始まる列名 (x1, x2) のパス
    """
    if construction not in CONSTRUCTIONS:
        raise ValueError(f"未知の構成方法です: {construction}")
    rng = seed if isinstance(seed, np.random.Generator) else replicate_rng(seed)
    if construction == "sde":
        return simulate_linear(sys.M, sys.tau * sys.Q, (0.0, 0.0), SimConfig(dt=dt, t_max=t_max), rng)

    ou = simulate_ou2d(sys.lam * dt, sys.lam * t_max, rng)
    times = dt * np.arange(len(ou))
    rotated = _rotate_back(sys.omega * times, ou.states)
    states = (sys.tau / math.sqrt(sys.lam)) * rotated @ sys.Q.T
    return Path(dt=dt, t0=0.0, states=states, columns=("x1", "x2"))


def xa_segment(
    sys: LinearizedSystem,
    dt: float,
    length: float,
    seed: int,
    index: int,
    construction: str = "rotation",
) -> Path:
    """原点から始めた長さ length（ms）の X^a のセグメント（乱数は replicate_rng(seed, index)）"""
    return xa_path(sys, dt, length, replicate_rng(seed, index), construction)


def xa_endpoint_samples(
    sys: LinearizedSystem,
    t: float,
    n: int,
    seed: int,
    construction: str = "rotation",
    dt: float = 0.01,
) -> np.ndarray:
    """
    原点から始めた X^a の時刻tでの値をn複製分生成

    Returns:
        形状 (n, 2) の配列
    """
    if construction not in CONSTRUCTIONS:
        raise ValueError(f"未知の構成方法です: {construction}")
    if construction == "sde":
        return linear_em_endpoints(sys.M, sys.tau * sys.Q, (0.0, 0.0), t, dt, n, seed)
    rng = replicate_rng(seed)
    _, var = ou_transition_moments(0.0, sys.lam * t)
    s = math.sqrt(var) * rng.standard_normal((n, 2))
    rotated = _rotate_back(np.full(n, sys.omega * t), s)
    return (sys.tau / math.sqrt(sys.lam)) * rotated @ sys.Q.T


def spectrum_linearized(sys: LinearizedSystem, f: ArrayLike) -> ArrayLike:
    """
    線形化系の第1座標のスペクトル密度

    (1/2π)·σ²m12² / ((f² - det M)² + (f·tr M)²)
    """
    f = np.asarray(f, dtype=float)
    m12 = sys.M[0, 1]
    out = sys.sigma ** 2 * m12 ** 2 / (2.0 * math.pi * ((f ** 2 - sys.det) ** 2 + (f * sys.trace) ** 2))
    return out if np.ndim(out) else float(out)


def spectrum_xa(sys: LinearizedSystem, f: ArrayLike) -> ArrayLike:
    """X^a の第1座標のスペクトル密度（線形化系の値 × (f² + det M)/(2ω²)）"""
    f = np.asarray(f, dtype=float)
    out = spectrum_linearized(sys, f) * (f ** 2 + sys.det) / (2.0 * sys.omega ** 2)
    return out if np.ndim(out) else float(out)


def theoretical_spectrum(
    sys: LinearizedSystem,
    freqs: np.ndarray,
    kind: SpectrumKind = SpectrumKind.XA,
) -> SpectralDensity:
    """周波数格子上の理論スペクトル"""
    if kind is SpectrumKind.LINEARIZED:
        power = spectrum_linearized(sys, freqs)
    elif kind is SpectrumKind.XA:
        power = spectrum_xa(sys, freqs)
    else:
        raise ValueError(f"理論スペクトルの種類ではありません: {kind}")
    return SpectralDensity(freqs=np.asarray(freqs, dtype=float), power=np.atleast_1d(power), kind=kind)


def default_frequency_grid(sys: LinearizedSystem, n: int = 400, upper: Optional[float] = None) -> np.ndarray:
    """0から 3ω（既定）までの等間隔の周波数格子（rad/ms）"""
    upper = upper if upper is not None else 3.0 * sys.omega
    return np.linspace(0.0, upper, n)
