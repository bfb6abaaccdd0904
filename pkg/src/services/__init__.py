"""
数値計算サービスモジュール

確率的Morris-Lecarモデル、線形化、OU近似、radial OU型LIFモデル、
推定手順、複製の並列実行を提供します。
"""

from .ml_model import (
    m_inf,
    alpha_rate,
    beta_rate,
    w_inf,
    drift,
    diffusion_w,
    drift_jacobian,
    step_kernel,
    equilibrium,
    noise_coefficient,
    sigma_star_of_N,
    channels_for_sigma_star,
)
from .linearization import LinearizedSystem, build_linearized
from .worker_pool import ReplicatePool

__all__ = [
    "m_inf",
    "alpha_rate",
    "beta_rate",
    "w_inf",
    "drift",
    "diffusion_w",
    "drift_jacobian",
    "step_kernel",
    "equilibrium",
    "noise_coefficient",
    "sigma_star_of_N",
    "channels_for_sigma_star",
    "LinearizedSystem",
    "build_linearized",
    "ReplicatePool",
]
