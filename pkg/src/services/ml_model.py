"""
確率的Morris-Lecarモデル

ドリフト（膜電位とK⁺コンダクタンスの方程式）、Jacobi拡散の拡散係数、
平衡点の数値計算を提供します。関数はスカラーとnumpy配列の両方を受け付けます。
"""

import math
from typing import Callable, List, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from ..config.logging import get_logger
from ..models.errors import NoRootInBracket, NoStableEquilibrium
from ..models.parameters import MLParameters, State2

logger = get_logger(__name__)

ArrayLike = Union[float, np.ndarray]


def m_inf(v: ArrayLike, p: MLParameters) -> ArrayLike:
    """Ca²⁺コンダクタンスの平衡値 (1 + tanh((v-V1)/V2)) / 2"""
    return 0.5 * (1.0 + np.tanh((v - p.V1) / p.V2))


def alpha_rate(v: ArrayLike, p: MLParameters) -> ArrayLike:
    """K⁺チャネルの開口率（1/ms）"""
    x = (v - p.V3) / p.V4
    return 0.5 * p.phi * np.cosh(0.5 * x) * (1.0 + np.tanh(x))


def beta_rate(v: ArrayLike, p: MLParameters) -> ArrayLike:
    """K⁺チャネルの閉口率（1/ms）"""
    x = (v - p.V3) / p.V4
    return 0.5 * p.phi * np.cosh(0.5 * x) * (1.0 - np.tanh(x))


def w_inf(v: ArrayLike, p: MLParameters) -> ArrayLike:
    """dw/dt = 0 となる w = α/(α+β) = (1 + tanh((v-V3)/V4)) / 2"""
    return 0.5 * (1.0 + np.tanh((v - p.V3) / p.V4))


def drift(s: State2, p: MLParameters) -> Tuple[ArrayLike, ArrayLike]:
    """
    決定論的な右辺

    Args:
        s: 状態 (v, w)。各成分は配列でもよい
        p: モデルパラメータ

    Returns:
        (dv/dt [mV/ms], dw/dt [1/ms])
    """
    v, w = s
    dv = (
        -p.gCa * m_inf(v, p) * (v - p.VCa)
        - p.gK * w * (v - p.VK)
        - p.gL * (v - p.VL)
        + p.I
    ) / p.C
    dw = alpha_rate(v, p) * (1.0 - w) - beta_rate(v, p) * w
    return dv, dw


def diffusion_w(s: State2, p: MLParameters) -> ArrayLike:
    """
    wのJacobi拡散係数 σ*·sqrt(2αβ/(α+β)·w(1-w))

    w ∈ {0, 1} で0になり、区間外の入力は0に切り詰めます。
    """
    v, w = s
    a = alpha_rate(v, p)
    b = beta_rate(v, p)
    ww = np.clip(w, 0.0, 1.0)
    return p.sigma_star * np.sqrt(2.0 * a * b / (a + b) * ww * (1.0 - ww))


def drift_jacobian(s: State2, p: MLParameters) -> np.ndarray:
    """
    ドリフトの解析的ヤコビアン

    Args:
        s: 評価点
        p: モデルパラメータ

    Returns:
        2×2行列 [[∂f/∂v, ∂f/∂w], [∂g/∂v, ∂g/∂w]]（単位 1/ms 系）
    """
    v, w = float(s[0]), float(s[1])
    tm = math.tanh((v - p.V1) / p.V2)
    m = 0.5 * (1.0 + tm)
    dm = (1.0 - tm * tm) / (2.0 * p.V2)

    x = (v - p.V3) / p.V4
    c = math.cosh(0.5 * x)
    sh = math.sinh(0.5 * x)
    t = math.tanh(x)
    sech2 = 1.0 - t * t
    da = 0.5 * p.phi * (sh / (2.0 * p.V4) * (1.0 + t) + c * sech2 / p.V4)
    db = 0.5 * p.phi * (sh / (2.0 * p.V4) * (1.0 - t) - c * sech2 / p.V4)

    f_v = (-p.gCa * (dm * (v - p.VCa) + m) - p.gK * w - p.gL) / p.C
    f_w = -p.gK * (v - p.VK) / p.C
    g_v = da * (1.0 - w) - db * w
    g_w = -p.phi * c
    return np.array([[f_v, f_w], [g_v, g_w]])


def step_kernel(p: MLParameters) -> Callable[[float, float], Tuple[float, float, float]]:
    """
    時間発展用のスカラー版右辺を作成

    numpyのufuncを避けてmathで評価するので、1ステップずつ進める
    ループから高速に呼び出せます。

    Returns:
        (v, w) -> (dv/dt, dw/dt, 拡散係数) を返す関数
    """
    V1, V2, V3, V4 = p.V1, p.V2, p.V3, p.V4
    gCa, gK, gL = p.gCa, p.gK, p.gL
    VCa, VK, VL = p.VCa, p.VK, p.VL
    inv_c, phi, current, noise = 1.0 / p.C, p.phi, p.I, p.sigma_star
    tanh, cosh, sqrt = math.tanh, math.cosh, math.sqrt

    def kernel(v: float, w: float) -> Tuple[float, float, float]:
        m = 0.5 * (1.0 + tanh((v - V1) / V2))
        x = (v - V3) / V4
        total = phi * cosh(0.5 * x)
        t = tanh(x)
        a = 0.5 * total * (1.0 + t)
        b = 0.5 * total * (1.0 - t)
        dv = (-gCa * m * (v - VCa) - gK * w * (v - VK) - gL * (v - VL) + current) * inv_c
        dw = a * (1.0 - w) - b * w
        q = w * (1.0 - w)
        g = noise * sqrt(2.0 * a * b / total * q) if q > 0.0 else 0.0
        return dv, dw, g

    return kernel


def _reduced(v: float, p: MLParameters) -> float:
    # w = w∞(v) 上での dv/dt
    return float(drift(State2(v, w_inf(v, p)), p)[0])


def _is_stable(s: State2, p: MLParameters) -> bool:
    jac = drift_jacobian(s, p)
    return bool(np.trace(jac) < 0 and np.linalg.det(jac) > 0)


def equilibrium(p: MLParameters, resolution: float = 1.0) -> State2:
    """
    安定な平衡点 (V_eq, W_eq) を求める

    w = w∞(v) 上の dv/dt を [VK, VCa] で resolution 刻みに走査し、
    符号変化のある区間ごとにBrent法で根を精密化します。
    複数の根がある場合は固有値の実部が負のものを返します。

    Args:
        p: モデルパラメータ
        resolution: 走査刻み（mV）

    Returns:
        平衡点

    Raises:
        NoRootInBracket: 区間内で符号変化がない場合
        NoStableEquilibrium: 安定な根がない、または複数ある場合
    """
    grid = np.arange(p.VK, p.VCa + 0.5 * resolution, resolution)
    grid[-1] = min(grid[-1], p.VCa)
    values = np.array([_reduced(v, p) for v in grid])

    roots: List[float] = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
        if fa == 0.0:
            roots.append(float(a))
        elif fa * fb < 0:
            roots.append(brentq(_reduced, a, b, args=(p,), xtol=1e-13, rtol=1e-15, maxiter=200))
    if values[-1] == 0.0:
        roots.append(float(grid[-1]))

    if not roots:
        raise NoRootInBracket(
            f"[{p.VK}, {p.VCa}] mV の範囲で dv/dt の符号が変化しません（I={p.I}）"
        )

    candidates = [State2(v, float(w_inf(v, p))) for v in roots]
    stable = [s for s in candidates if _is_stable(s, p)]
    if len(stable) != 1:
        raise NoStableEquilibrium(
            f"安定な平衡点が一意に定まりません: 根={roots}, 安定={len(stable)}"
        )

    eq = stable[0]
    residual = drift(eq, p)
    logger.debug(
        "equilibrium_found",
        v_eq=eq.v,
        w_eq=eq.w,
        residual_v=float(residual[0]),
        residual_w=float(residual[1]),
        n_roots=len(roots),
    )
    return eq


def noise_coefficient(p: MLParameters, eq: State2 = None) -> float:
    """
    平衡点での拡散係数と σ* の比（σ = 係数·σ*、標準パラメータで約0.034）

    Args:
        p: モデルパラメータ
        eq: 平衡点（未指定なら計算する）

    Returns:
        sqrt(2(α+β))·W_eq(1-W_eq)
    """
    if eq is None:
        eq = equilibrium(p)
    total = float(alpha_rate(eq.v, p) + beta_rate(eq.v, p))
    return math.sqrt(2.0 * total) * eq.w * (1.0 - eq.w)


def sigma_star_of_N(n_channels: float, p: MLParameters, eq: State2 = None) -> float:
    """
    チャネル数Nに対応するノイズ強度 σ* = 1/sqrt(W_eq(1-W_eq)N)

    Args:
        n_channels: イオンチャネル数
        p: モデルパラメータ
        eq: 平衡点（未指定なら計算する）

    Returns:
        σ*（おおよそ 3/√N）
    """
    if n_channels <= 0:
        raise ValueError(f"チャネル数は正である必要があります: {n_channels}")
    if eq is None:
        eq = equilibrium(p)
    return 1.0 / math.sqrt(eq.w * (1.0 - eq.w) * n_channels)


def channels_for_sigma_star(sigma_star: float, p: MLParameters, eq: State2 = None) -> float:
    """sigma_star_of_N の逆関数"""
    if sigma_star <= 0:
        raise ValueError(f"sigma_starは正である必要があります: {sigma_star}")
    if eq is None:
        eq = equilibrium(p)
    return 1.0 / (eq.w * (1.0 - eq.w) * sigma_star ** 2)
