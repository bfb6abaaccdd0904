"""
条件付き発火確率の実験

直線L上の格子点ごとの試行をプールで並列に実行し、
シグモイドを当てはめます。
"""

from typing import Any, Dict

from ..config.logging import get_logger
from ..services.estimation import (
    REFERENCE_UNSTABLE_DISTANCE,
    assemble_firing_fit,
    estimate_firing_point,
    firing_grid,
    wilson_interval,
)
from ..services.linearization import build_linearized, radius_on_line
from .base_experiment import BaseExperiment, ExperimentResult

logger = get_logger(__name__)


class FiringProbExperiment(BaseExperiment):
    """
    直線L上の条件付き発火確率

    格子点iの試行jは (seed, i, j) の乱数を使います。不安定リミットサイクル
    の報告値 l = 0.0172 での発火頻度も、格子の次の番号で推定します。
    """

    name = "firing-prob"

    async def run(self) -> ExperimentResult:
        n_trials = int(self.get_config("trials", 1000))
        n_points = int(self.get_config("points", 25))
        divisions = int(self.get_config("divisions", 20))
        weighted = bool(self.get_config("weighted", False))
        cfg = self.sim_config

        sys = build_linearized(self.params)
        distances, info = firing_grid(self.params, sys.eq, n_points, divisions)
        arguments = [(self.params, sys, float(l), n_trials, cfg, i) for i, l in enumerate(distances)]
        arguments.append((self.params, sys, REFERENCE_UNSTABLE_DISTANCE, n_trials, cfg, len(distances)))
        logger.info("firing_trials_started", points=len(arguments), trials=n_trials, sigma_star=sys.params.sigma_star)

        results = await self.pool.map(estimate_firing_point, arguments)
        points, (ref_l, ref_k, ref_n) = results[:-1], results[-1]
        fit = assemble_firing_fit(sys, points, info, weighted)

        summary: Dict[str, Any] = fit.to_dict()
        summary["trials_per_point"] = n_trials
        if sys.sigma > 0:
            summary["unstable_radius_transformed"] = radius_on_line(sys, info["unstable_distance"])
        summary["reference_point"] = {
            "l": ref_l,
            "p_hat": ref_k / ref_n,
            "n": ref_n,
            "interval": list(wilson_interval(ref_k, ref_n)),
        }
        return ExperimentResult(summary=summary, tables={"firing_grid.csv": fit.write_grid_csv})
