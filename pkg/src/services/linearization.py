"""
平衡点まわりの線形化

ヤコビアンM、ノイズ行列G、固有構造 (λ, ω)、共役行列Q、分散スケールτ²、
減衰振動解、発火確率の解析に使う変換座標を扱います。
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Union

import numpy as np

from ..config.logging import get_logger
from ..models.errors import DegenerateTransform, JacobianMismatch, ModelError, RealEigenvalues
from ..models.parameters import MLParameters, State2
from .ml_model import (
    alpha_rate,
    beta_rate,
    diffusion_w,
    drift,
    drift_jacobian,
    equilibrium,
    m_inf,
)

logger = get_logger(__name__)

# 解析的ヤコビアンと差分ヤコビアンの許容相対誤差
JACOBIAN_TOLERANCE = 1e-4
# 構築時に検証する恒等式の許容相対誤差
IDENTITY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class LinearizedSystem:
    """
    平衡点まわりの線形化系 dX = MX dt + G dB

    Attributes:
        params: モデルパラメータ
        eq: 平衡点
        M: ヤコビアン（1/ms）
        G: ノイズ行列（(2,2)成分のみσ）
        lam: 減衰率 λ > 0（固有値は -λ ± ωi）
        omega: 回転角速度 ω（rad/ms）
        Q: Q⁻¹MQ = [[-λ, ω], [-ω, -λ]] となる行列
        Q_inv: Qの逆行列
        tau2: 分散スケール τ²
        sigma: 平衡点での拡散係数 σ
        transcribed_M: 転記された閉形式をそのまま評価した行列（比較用）
    """
    params: MLParameters
    eq: State2
    M: np.ndarray
    G: np.ndarray
    lam: float
    omega: float
    Q: np.ndarray
    Q_inv: np.ndarray
    tau2: float
    sigma: float
    transcribed_M: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def tau(self) -> float:
        return math.sqrt(self.tau2)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.M))

    @property
    def trace(self) -> float:
        return float(np.trace(self.M))

    @property
    def canonical(self) -> np.ndarray:
        """回転・減衰の標準形 A = [[-λ, ω], [-ω, -λ]]"""
        return np.array([[-self.lam, self.omega], [-self.omega, -self.lam]])

    @property
    def period(self) -> float:
        """回転周期 2π/ω（ms）"""
        return 2.0 * math.pi / self.omega

    def to_dict(self) -> Dict[str, Any]:
        """
        JSON出力用の辞書

        転記された閉形式との差（transcription_relative_difference）も含めます。
        """
        data: Dict[str, Any] = {
            "equilibrium": {"v": self.eq.v, "w": self.eq.w},
            "M": self.M.tolist(),
            "G": self.G.tolist(),
            "lambda": self.lam,
            "omega": self.omega,
            "eigenvalues": [[-self.lam, self.omega], [-self.lam, -self.omega]],
            "rotation_period_ms": self.period,
            "Q": self.Q.tolist(),
            "Q_inv": self.Q_inv.tolist(),
            "tau2": self.tau2,
            "tau": self.tau,
            "sigma": self.sigma,
            "sigma_star": self.params.sigma_star,
            "det_M": self.det,
            "trace_M": self.trace,
        }
        if self.transcribed_M is not None:
            data["transcribed_M"] = self.transcribed_M.tolist()
            data["transcription_relative_difference"] = _relative_difference(self.transcribed_M, self.M).tolist()
        return data


def _relative_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.abs(b), 1e-300)


def finite_difference_jacobian(p: MLParameters, eq: State2, h: float = 1e-6) -> np.ndarray:
    """
    ドリフトの中心差分ヤコビアン

    vの刻みは h·max(1, |v|)、wの刻みは h です。
    """
    hv = h * max(1.0, abs(eq.v))
    hw = h
    jac = np.empty((2, 2))
    plus = np.array(drift(State2(eq.v + hv, eq.w), p))
    minus = np.array(drift(State2(eq.v - hv, eq.w), p))
    jac[:, 0] = (plus - minus) / (2.0 * hv)
    plus = np.array(drift(State2(eq.v, eq.w + hw), p))
    minus = np.array(drift(State2(eq.v, eq.w - hw), p))
    jac[:, 1] = (plus - minus) / (2.0 * hw)
    return jac


def transcribed_jacobian(p: MLParameters, eq: State2) -> np.ndarray:
    """
    転記された閉形式をそのまま評価したヤコビアン

    m12にW_eqの因子、m11にV_eqの因子が含まれるなど解析的な偏微分と
    一致しないため、差の報告にのみ使います。
    """
    v, w = eq.v, eq.w
    a = float(alpha_rate(v, p))
    b = float(beta_rate(v, p))
    m11 = -(v / p.C) * (
        2.0 * p.gCa * (v - p.VCa) * a * b / (p.V2 * (a + b) ** 2)
        + p.gCa * float(m_inf(v, p))
        + p.gK * w
        + p.gL
    )
    m12 = -p.gK * w * (v - p.VK) / p.C
    m21 = 2.0 * v * w * b / p.V4
    m22 = -a
    return np.array([[m11, m12], [m21, m22]])


def jacobian(p: MLParameters, eq: State2, tolerance: float = JACOBIAN_TOLERANCE) -> np.ndarray:
    """
    平衡点でのヤコビアンM

    解析的な偏微分を中心差分と照合します。

    Args:
        p: モデルパラメータ
        eq: 平衡点
        tolerance: 成分ごとの許容相対誤差

    Returns:
        2×2行列

    Raises:
        JacobianMismatch: 解析値と差分値が許容誤差を超えて異なる場合
    """
    analytic = drift_jacobian(eq, p)
    numeric = finite_difference_jacobian(p, eq)
    mismatch = np.abs(analytic - numeric) > tolerance * np.abs(numeric) + 1e-12
    if np.any(mismatch):
        raise JacobianMismatch(
            f"解析的ヤコビアンと差分ヤコビアンが一致しません: analytic={analytic.tolist()}, "
            f"finite_difference={numeric.tolist()}"
        )
    return analytic


def eigen_structure(M: np.ndarray) -> tuple:
    """
    固有値 -λ ± ωi の (λ, ω)

    Args:
        M: 2×2行列

    Returns:
        (λ, ω)。λ = -tr(M)/2、ω = sqrt(det(M) - λ²)

    Raises:
        RealEigenvalues: 固有値が実数の場合
    """
    M = np.asarray(M, dtype=float)
    lam = -float(np.trace(M)) / 2.0
    det = float(np.linalg.det(M))
    discriminant = lam * lam - det
    if discriminant >= 0:
        raise RealEigenvalues(f"固有値が実数です（λ²-det M = {discriminant:.6g}）")
    return lam, math.sqrt(-discriminant)


def build_linearized(
    p: MLParameters,
    eq: Optional[State2] = None,
    report_transcription: bool = True,
) -> LinearizedSystem:
    """
    線形化系を構築

    共役関係 Q⁻¹MQ = A とτ²の2通りの表現を構築時に検証します。

    Args:
        p: モデルパラメータ
        eq: 平衡点（未指定なら計算する）
        report_transcription: 転記された閉形式との差を記録・警告するか

    Returns:
        LinearizedSystem

    Raises:
        RealEigenvalues: 安定焦点でない場合
        JacobianMismatch: ヤコビアンの照合に失敗した場合
    """
    if eq is None:
        eq = equilibrium(p)
    M = jacobian(p, eq)
    lam, omega = eigen_structure(M)
    (m11, m12), (m21, _m22) = M
    if lam <= 0:
        raise RealEigenvalues(f"平衡点が安定ではありません（λ = {lam:.6g}）")
    if lam >= omega:
        logger.warning("slow_rotation_regime", lam=lam, omega=omega)

    sigma = float(diffusion_w(eq, p))
    G = np.array([[0.0, 0.0], [0.0, sigma]])
    Q = np.array([[-omega, m11 + lam], [0.0, m21]])
    Q_inv = np.linalg.inv(Q)
    tau2 = -sigma ** 2 * m12 / (2.0 * omega ** 2 * m21)

    canonical = np.array([[-lam, omega], [-omega, -lam]])
    residual = np.linalg.norm(Q_inv @ M @ Q - canonical) / np.linalg.norm(M)
    if residual > IDENTITY_TOLERANCE:
        raise ModelError(f"共役関係が成り立ちません（相対誤差 {residual:.3g}）")
    B = Q_inv @ G @ G.T @ Q_inv.T
    if sigma > 0 and abs(np.trace(B) / 2.0 - tau2) > IDENTITY_TOLERANCE * tau2 * 10:
        raise ModelError(f"τ²の2つの表現が一致しません: {tau2} != {np.trace(B) / 2.0}")

    transcribed = None
    if report_transcription:
        transcribed = transcribed_jacobian(p, eq)
        worst = float(np.max(_relative_difference(transcribed, M)))
        if worst > JACOBIAN_TOLERANCE:
            logger.warning(
                "transcribed_jacobian_differs",
                max_relative_difference=worst,
                transcribed=transcribed.tolist(),
                analytic=M.tolist(),
            )

    return LinearizedSystem(
        params=p,
        eq=eq,
        M=M,
        G=G,
        lam=lam,
        omega=omega,
        Q=Q,
        Q_inv=Q_inv,
        tau2=tau2,
        sigma=sigma,
        transcribed_M=transcribed,
    )


def rotation_period(sys: LinearizedSystem) -> float:
    """回転周期 2π/ω（ms）"""
    return sys.period


def damped_solution(
    sys: LinearizedSystem,
    x0: np.ndarray,
    t: Union[float, np.ndarray],
) -> np.ndarray:
    """
    σ = 0 の線形化系の解 C·(cos ωt, sin ωt)ᵀ·e^{-λt}

    Args:
        sys: 線形化系
        x0: 中心化した初期値 (x0, y0)
        t: 時刻（ms、配列可）

    Returns:
        tがスカラーなら形状 (2,)、配列なら (len(t), 2)
    """
    (m11, m12), (m21, _m22) = sys.M
    x, y = float(x0[0]), float(x0[1])
    lam, omega = sys.lam, sys.omega
    C = np.array([
        [x, (m12 * y + (m11 + lam) * x) / omega],
        [y, (m21 * x - (m11 + lam) * y) / omega],
    ])
    tt = np.asarray(t, dtype=float)
    basis = np.stack([np.cos(omega * tt), np.sin(omega * tt)]) * np.exp(-lam * tt)
    out = C @ basis
    return out if np.ndim(t) == 0 else out.T


def _scale(sys: LinearizedSystem) -> float:
    if sys.sigma <= 0:
        raise DegenerateTransform("σ = 0 では変換座標が定義できません")
    return math.sqrt(sys.lam) / sys.tau


def to_transformed(sys: LinearizedSystem, s: Union[State2, np.ndarray]) -> np.ndarray:
    """
    変換座標 (√λ/τ)·Q⁻¹·(v - V_eq, w - W_eq)ᵀ

    Args:
        sys: 線形化系
        s: 状態（形状 (2,) または (n, 2)）

    Returns:
        sと同じ形状の変換座標

    Raises:
        DegenerateTransform: σ = 0 の場合
    """
    scale = _scale(sys)
    centered = np.asarray(s, dtype=float) - np.array([sys.eq.v, sys.eq.w])
    return scale * centered @ sys.Q_inv.T


def from_transformed(sys: LinearizedSystem, y: np.ndarray) -> np.ndarray:
    """to_transformed の逆変換（形状 (2,) または (n, 2)）"""
    scale = _scale(sys)
    return np.asarray(y, dtype=float) @ sys.Q.T / scale + np.array([sys.eq.v, sys.eq.w])


def line_point(sys: LinearizedSystem, l: float) -> State2:
    """平衡点から距離lだけwを下げた直線L上の点 (V_eq, W_eq - l)"""
    return State2(sys.eq.v, sys.eq.w - l)


def radius_on_line(sys: LinearizedSystem, l: float) -> float:
    """直線L上の点の変換座標での半径（= √(2λ)·l/σ）"""
    return float(np.linalg.norm(to_transformed(sys, np.array(line_point(sys, l)))))
