"""
特殊関数

変形ベッセル関数 I0、標準正規分布関数 Φ、超幾何関数 ₂F₂(1,1;2,2;x)、
自由度2の非心χ²分布からのサンプリングを提供します。
"""

import math
from typing import Optional, Union

import numpy as np
from scipy import special

ArrayLike = Union[float, np.ndarray]

# 級数と漸近展開の切り替え点
_SERIES_LIMIT = 30.0
_MAX_TERMS = 500


def as_generator(seed: Union[int, np.random.Generator, np.random.SeedSequence, None]) -> np.random.Generator:
    """シードまたは生成器から np.random.Generator を得る"""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _i0_series(x: np.ndarray) -> np.ndarray:
    # Σ (x²/4)^k / (k!)²、全項正なので打ち切り誤差は最初の省略項で抑えられる
    q = 0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, _MAX_TERMS):
        term = term * q / (k * k)
        total = total + term
        if np.all(term <= 1e-17 * total):
            break
    return total


def _log_i0_asymptotic(x: np.ndarray) -> np.ndarray:
    # e^x / sqrt(2πx) · Σ ((2k-1)!!)² / (k! (8x)^k)
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 60):
        term = term * (2 * k - 1) ** 2 / (8.0 * k * x)
        total = total + term
        if np.all(term <= 1e-17 * total):
            break
    return x - 0.5 * np.log(2.0 * np.pi * x) + np.log(total)


def log_i0(x: ArrayLike) -> ArrayLike:
    """
    log I0(x)

    x ≤ 30 では冪級数、それ以上では漸近展開を対数空間で評価します。

    Args:
        x: 引数（負の値は対称性 I0(-x) = I0(x) で扱う）

    Returns:
        log I0(x)
    """
    arr = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(arr)
    small = arr <= _SERIES_LIMIT
    if np.any(small):
        out[small] = np.log(_i0_series(arr[small]))
    if np.any(~small):
        out[~small] = _log_i0_asymptotic(arr[~small])
    return out if np.ndim(x) else float(out)


def bessel_i0(x: ArrayLike) -> ArrayLike:
    """
    第1種変形ベッセル関数 I0(x)

    Args:
        x: 引数

    Returns:
        I0(x)（x ≤ 30 で相対誤差 < 1e-12）
    """
    arr = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(arr)
    small = arr <= _SERIES_LIMIT
    if np.any(small):
        out[small] = _i0_series(arr[small])
    if np.any(~small):
        with np.errstate(over="ignore"):
            out[~small] = np.exp(_log_i0_asymptotic(arr[~small]))
    return out if np.ndim(x) else float(out)


def norm_cdf(x: ArrayLike) -> ArrayLike:
    """
    標準正規分布の累積分布関数 Φ(x)

    erfcで評価するので左裾でも桁落ちせず正の値を返します。
    """
    out = 0.5 * special.erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))
    return out if np.ndim(x) else float(out)


def _hyp2f2_scalar(x: float) -> float:
    if x < 0:
        raise ValueError(f"hyp2f2_1122の引数は非負である必要があります: {x}")
    terms = [1.0]
    term = 1.0
    running = 1.0
    for k in range(10 * _MAX_TERMS):
        # t_{k+1} = t_k · x (k+1) / (k+2)²
        term *= x * (k + 1) / ((k + 2) ** 2)
        terms.append(term)
        running += term
        # 項の比は k > x で1未満になり、以降は単調減少する
        if k + 1 > x and term < 1e-17 * running:
            break
    return math.fsum(terms)


def hyp2f2_1122(x: ArrayLike) -> ArrayLike:
    """
    一般化超幾何関数 ₂F₂(1,1;2,2;x)

    Σ x^k / ((k+1)² k!) を補償加算（math.fsum）で足し合わせます。

    Args:
        x: 非負の引数（x = 100 まで安定）

    Returns:
        関数値
    """
    if np.ndim(x) == 0:
        return _hyp2f2_scalar(float(x))
    return np.vectorize(_hyp2f2_scalar, otypes=[float])(np.asarray(x, dtype=float))


def sample_noncentral_chi2_2(
    delta: ArrayLike,
    seed: Union[int, np.random.Generator, None] = None,
    size: Optional[int] = None,
) -> ArrayLike:
    """
    自由度2・非心度δの非心χ²分布から厳密にサンプリング

    K ~ Poisson(δ/2) とし、χ²(2+2K) = 2·Gamma(1+K) を返すポアソン混合法です。

    Args:
        delta: 非心度（非負、配列可）
        seed: シードまたは生成器
        size: 出力数（deltaがスカラーの場合）

    Returns:
        サンプル（平均 2+δ、分散 4+4δ）
    """
    rng = as_generator(seed)
    delta_arr = np.asarray(delta, dtype=float)
    if np.any(delta_arr < 0):
        raise ValueError("非心度は非負である必要があります")
    k = rng.poisson(0.5 * delta_arr, size=size)
    sample = 2.0 * rng.gamma(1.0 + k)
    if size is None and np.ndim(delta) == 0:
        return float(sample)
    return sample


def noncentral_chi2_2_pdf(x: ArrayLike, delta: float) -> ArrayLike:
    """自由度2の非心χ²密度 ½·exp(-(x+δ)/2)·I0(√(δx))（検証用）"""
    arr = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore"):
        log_pdf = -math.log(2.0) - 0.5 * (arr + delta) + log_i0(np.sqrt(delta * np.clip(arr, 0, None)))
    out = np.where(arr > 0, np.exp(log_pdf), 0.0)
    return out if np.ndim(x) else float(out)
