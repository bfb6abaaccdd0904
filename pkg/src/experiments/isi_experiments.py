"""
発火時刻（ISI）の実験

確率的Morris-LecarモデルとLIFモデル（ロジスティック型・指数型・硬い閾値）の
ISIサンプル生成、理論密度曲線、Nelson-Aalen推定と指数型ハザードの較正を行います。
"""

from pathlib import Path as FilePath
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..config.logging import get_logger
from ..models.errors import ConfigError, ModelError
from ..models.hazard import HazardKind, HazardModel
from ..models.simulation import ISISample, SimConfig
from ..services.estimation import compare_isi, fit_exponential_hazard, nelson_aalen
from ..services.linearization import LinearizedSystem, build_linearized
from ..services.ml_model import equilibrium
from ..services.radial_lif import (
    assemble_lif_sample,
    block_layout,
    hazard_form_discrepancy,
    isi_curves,
    mean_first_passage,
    simulate_lif_block,
)
from ..services.sde_engine import assemble_ml_sample, simulate_isi_replicate
from .analytic_experiments import resolve_threshold
from .base_experiment import BaseExperiment, ExperimentResult, csv_table

logger = get_logger(__name__)

ISI_MODELS = ("ml", "lif-logistic", "lif-exp", "lif-hard")

# σ* = 0.05 でのロジスティック型の当てはめ値（変換座標）
DEFAULT_ALPHA_STAR = 1.3922
DEFAULT_BETA_STAR = 0.2718
# σ* = 0.05 のML発火時刻から較正した指数型ハザード
DEFAULT_EXP_ALPHA = 6.31
DEFAULT_EXP_BETA = 0.76
# LIFの窓幅（無次元時間）
DEFAULT_LIF_DU = 0.01

_MODEL_KINDS = {
    "lif-logistic": HazardKind.LOGISTIC,
    "lif-exp": HazardKind.EXPONENTIAL,
    "lif-hard": HazardKind.HARD,
}


def resolve_hazard(
    model: str,
    sys: LinearizedSystem,
    hazard_config: Optional[str] = None,
    target_mean: float = 447.0,
    threshold_units: str = "dimensionless",
) -> Tuple[HazardModel, float]:
    """
    LIFモデルのハザードと時間スケールを決める

    hazard_config があればそのファイルを読み、なければ既定値を使います。
    硬い閾値は target_mean から求め、threshold_units が "dimensionless" のときは
    無次元時間をそのままmsとして扱う（時間スケール1）ため、平均は target_mean になります。

    Args:
        model: lif-logistic / lif-exp / lif-hard
        sys: 線形化系（λ, ω を使用）
        hazard_config: キー・値形式のハザード設定ファイル
        target_mean: 硬い閾値の目標平均
        threshold_units: "dimensionless" または "ms"

    Returns:
        (ハザードモデル, 時間スケール 1/ms)

    Raises:
        ConfigError: 設定ファイルの種類がモデルと一致しない場合
    """
    kind = _MODEL_KINDS[model]
    if hazard_config is not None:
        h = HazardModel.from_text(FilePath(hazard_config).read_text(encoding="utf-8"))
        if h.kind is not kind:
            raise ConfigError(f"ハザード設定の種類 {h.kind.value} がモデル {model} と一致しません")
    elif kind is HazardKind.LOGISTIC:
        h = HazardModel.logistic(DEFAULT_ALPHA_STAR, DEFAULT_BETA_STAR, sys.omega)
    elif kind is HazardKind.EXPONENTIAL:
        h = HazardModel.exponential(DEFAULT_EXP_ALPHA, DEFAULT_EXP_BETA)
    else:
        h = HazardModel.hard(resolve_threshold(target_mean, threshold_units, sys.lam))

    if kind is HazardKind.HARD and threshold_units == "dimensionless":
        return h, 1.0
    return h, sys.lam


class IsiExperiment(BaseExperiment):
    """
    ISIサンプルと理論密度曲線

    ML は複製ごと、LIF は固定サイズのブロックごとにプールへ投入します。
    ハザード型のLIFでは isi_curves で密度と生存関数も出力します。
    """

    name = "isi"

    async def simulate_ml_sample(self, n: int) -> ISISample:
        """ML の複製を平衡点から n 本生成"""
        eq = equilibrium(self.params)
        cfg = self.sim_config
        results = await self.pool.map(simulate_isi_replicate, [(self.params, cfg, i, eq) for i in range(n)])
        return assemble_ml_sample(self.params, cfg, results)

    async def simulate_lif_sample(self, h: HazardModel, time_scale: float, n: int) -> ISISample:
        """LIF の複製をブロック単位で n 本生成"""
        du = float(self.get_config("lif_du", DEFAULT_LIF_DU))
        cfg = SimConfig(
            dt=du / time_scale,
            t_max=self.sim_config.t_max,
            seed=self.sim_config.seed,
        )
        parts = await self.pool.map(
            simulate_lif_block, [(h, time_scale, cfg, b, size) for b, size in block_layout(n)]
        )
        return assemble_lif_sample(h, time_scale, cfg, parts)

    async def run(self) -> ExperimentResult:
        model = self.get_config("model", "ml")
        if model not in ISI_MODELS:
            raise ModelError(f"isiで使えないモデルです: {model}")
        n = int(self.get_config("n", 300))
        if n < 1:
            raise ConfigError(f"複製数は1以上である必要があります: {n}")

        isi_file = self.get_config("isi_file")
        reference = ISISample.from_csv(isi_file) if isi_file is not None else None

        tables = {}
        summary: Dict[str, Any] = {}
        curve = None
        if model == "ml":
            sample = await self.simulate_ml_sample(n)
        else:
            sys = build_linearized(self.params, report_transcription=False)
            units = self.get_config("threshold_units", "dimensionless")
            h, time_scale = resolve_hazard(
                model,
                sys,
                self.get_config("hazard_config"),
                float(self.get_config("target_mean", 447.0)),
                units,
            )
            sample = await self.simulate_lif_sample(h, time_scale, n)
            summary.update({"hazard": h.to_dict(), "lambda": sys.lam, "time_scale": time_scale})
            if h.kind is HazardKind.HARD:
                summary["threshold_units"] = units
                summary["predicted_mean"] = mean_first_passage(h.threshold) / time_scale
            else:
                curve = self._density_curve(h, time_scale, sample, reference)
                times, density, surv = curve
                tables["density.csv"] = csv_table(
                    ["t", "density", "survival"],
                    [[float(t), float(g), float(s)] for t, g, s in zip(times, density, surv)],
                )

        summary["sample"] = sample.summary()
        tables["isi.csv"] = sample.to_csv

        if reference is not None:
            summary["comparison"] = {"sample": compare_isi(reference, sample)}
            if curve is not None:
                summary["comparison"]["density"] = compare_isi(reference, curve)
        return ExperimentResult(summary=summary, tables=tables)

    def _density_curve(
        self,
        h: HazardModel,
        time_scale: float,
        sample: ISISample,
        reference: Optional[ISISample] = None,
    ):
        # 比較対象の発火時刻も格子に収める
        m_paths = int(self.get_config("m_paths", 1000))
        points = int(self.get_config("trapezoid_points", 1001))
        t_end = float(np.max(sample.times))
        if reference is not None and len(reference.times) > 0:
            t_end = max(t_end, float(np.max(reference.times)))
        return isi_curves(h, time_scale, t_end, m_paths, points, self.sim_config.seed)


class FitHazardExperiment(BaseExperiment):
    """
    Nelson-Aalen推定と指数型ハザード (α, β) の当てはめ

    発火時刻は --isi-file から読むか、ML の複製を生成します。
    """

    name = "fit-hazard"

    async def run(self) -> ExperimentResult:
        sys = build_linearized(self.params, report_transcription=False)
        tables = {}
        isi_file = self.get_config("isi_file")
        if isi_file is not None:
            sample = ISISample.from_csv(isi_file)
        else:
            runner = IsiExperiment(self.params, self.sim_config, {"model": "ml"}, self.pool)
            sample = await runner.simulate_ml_sample(int(self.get_config("n", 300)))
            tables["isi.csv"] = sample.to_csv

        curve = nelson_aalen(sample)
        form = self.get_config("hazard_form", "simplified")
        fit = fit_exponential_hazard(curve, sys.lam, form=form)

        rows: List[List[float]] = [
            [float(t), float(e), float(f)] for t, e, f in zip(fit.grid_times, fit.empirical, fit.fitted)
        ]
        tables["nelson_aalen.csv"] = curve.write_csv
        tables["hazard_fit.csv"] = csv_table(["t", "empirical", "fitted"], rows)

        checkpoints = fit.grid_times[:: max(1, len(fit.grid_times) // 8)]
        summary: Dict[str, Any] = {
            "fit": {k: v for k, v in fit.to_dict().items() if k != "grid"},
            "lambda": sys.lam,
            "sample": sample.summary(),
            "form_discrepancy": hazard_form_discrepancy(fit.alpha, fit.beta, sys.lam, checkpoints),
        }
        return ExperimentResult(summary=summary, tables=tables)
