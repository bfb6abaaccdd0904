"""
解析的な実験

平衡点、線形化、平均初到達時間の表を計算するサブコマンドです。
線形化系と比較する非線形系は σ* = 0 で解くため、結果は決定論的です。
"""

import math
from typing import Any, Dict

import numpy as np

from ..models.errors import ModelError
from ..models.parameters import State2
from ..models.simulation import SimConfig
from ..services.linearization import build_linearized, damped_solution
from ..services.ml_model import (
    channels_for_sigma_star,
    drift,
    equilibrium,
    noise_coefficient,
    sigma_star_of_N,
)
from ..services.radial_lif import mean_first_passage, threshold_for_mean
from ..services.sde_engine import simulate_ml
from .base_experiment import BaseExperiment, ExperimentResult, csv_table

THRESHOLD_UNITS = ("dimensionless", "ms")


class EquilibriumExperiment(BaseExperiment):
    """安定平衡点とノイズスケール"""

    name = "equilibrium"

    async def run(self) -> ExperimentResult:
        eq = equilibrium(self.params)
        dv, dw = drift(eq, self.params)
        coefficient = noise_coefficient(self.params, eq)
        summary: Dict[str, Any] = {
            "v_eq": eq.v,
            "w_eq": eq.w,
            "residual": [float(dv), float(dw)],
            "noise_coefficient": coefficient,
            "sigma_star": self.params.sigma_star,
            "sigma": coefficient * self.params.sigma_star,
        }
        if self.params.sigma_star > 0:
            summary["channels_for_sigma_star"] = channels_for_sigma_star(self.params.sigma_star, self.params, eq)
        channels = self.get_config("channels")
        if channels is not None:
            summary["sigma_star_for_channels"] = {"N": channels, "sigma_star": sigma_star_of_N(channels, self.params, eq)}
        return ExperimentResult(summary=summary)


class LinearizeExperiment(BaseExperiment):
    """
    線形化系

    M, G, λ, ω, Q, τ² に加えて、σ* = 0 の非線形系と減衰振動解を
    直線L上の点から2周期分比較した表を出力します。
    """

    name = "linearize"

    async def run(self) -> ExperimentResult:
        sys = build_linearized(self.params)
        summary = sys.to_dict()
        if sys.sigma > 0:
            summary["tau2_over_sigma2"] = sys.tau2 / sys.sigma ** 2

        start_distance = float(self.get_config("start_distance", 0.01))
        stride = max(1, int(round(1.0 / self.sim_config.dt)))
        cfg = SimConfig(
            dt=self.sim_config.dt,
            t_max=2.0 * sys.period,
            seed=self.sim_config.seed,
            record_stride=stride,
        )
        start = State2(sys.eq.v, sys.eq.w - start_distance)
        nonlinear = simulate_ml(self.params.with_sigma_star(0.0), start, cfg)
        centered = nonlinear.states - np.array([sys.eq.v, sys.eq.w])
        linear = damped_solution(sys, centered[0], nonlinear.times)

        first_period = nonlinear.times <= sys.period
        scale = np.max(np.abs(centered[first_period]), axis=0)
        error = np.max(np.abs(linear[first_period] - centered[first_period]), axis=0) / scale
        summary["damped_comparison"] = {
            "start_distance": start_distance,
            "relative_sup_error_v": float(error[0]),
            "relative_sup_error_w": float(error[1]),
            "envelope_decay_per_period": math.exp(-sys.lam * sys.period),
        }
        rows = [
            [float(t), float(a), float(b), float(c), float(d)]
            for t, (a, b), (c, d) in zip(nonlinear.times, linear, centered)
        ]
        return ExperimentResult(
            summary=summary,
            tables={"damped.csv": csv_table(["t", "x_linear", "y_linear", "x_ml", "y_ml"], rows)},
        )


def resolve_threshold(target: float, units: str, lam: float) -> float:
    """
    平均初到達時間が target になる硬い閾値

    units が "dimensionless" なら無次元のE(T)をtargetと直接比較し、
    "ms" ならtargetをmsとみなして E(T)/λ と比較します。
    """
    if units not in THRESHOLD_UNITS:
        raise ModelError(f"未知の閾値の単位です: {units}")
    return threshold_for_mean(target, None if units == "dimensionless" else lam)


class MeanPassageExperiment(BaseExperiment):
    """平均初到達時間 E(T) の表と目標平均に対する閾値"""

    name = "mean-passage"

    async def run(self) -> ExperimentResult:
        sys = build_linearized(self.params, report_transcription=False)
        target = float(self.get_config("target_mean", 447.0))
        units = self.get_config("threshold_units", "dimensionless")
        threshold = resolve_threshold(target, units, sys.lam)

        grid = np.round(np.arange(1, 51) * 0.1, 10)
        means = mean_first_passage(grid)
        rows = [[float(s), float(m), float(m / sys.lam)] for s, m in zip(grid, means)]
        summary = {
            "target_mean": target,
            "threshold_units": units,
            "threshold": threshold,
            "lambda": sys.lam,
            "mean_dimensionless": mean_first_passage(threshold),
            "mean_ms": mean_first_passage(threshold) / sys.lam,
        }
        return ExperimentResult(
            summary=summary,
            tables={"mean_passage.csv": csv_table(["S", "mean_dimensionless", "mean_ms"], rows)},
        )
