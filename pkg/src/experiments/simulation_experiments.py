"""
パスとスペクトルの実験

Morris-Lecarモデル・線形化系・X^a のパス生成と、
閾値下セグメントのスペクトル推定を行うサブコマンドです。
"""

import math
from typing import Any, Dict, List

import numpy as np

from ..config.logging import get_logger
from ..models.errors import InsufficientSegments, ModelError
from ..models.results import SpectralDensity, SpectrumKind
from ..models.simulation import Path
from ..services.estimation import MIN_SEGMENT_MS, MIN_SEGMENTS, estimate_spectrum
from ..services.linearization import build_linearized
from ..services.ml_model import equilibrium
from ..services.ou_approx import (
    default_frequency_grid,
    spectrum_linearized,
    spectrum_xa,
    theoretical_spectrum,
    xa_path,
    xa_segment,
)
from ..services.sde_engine import detect_spike, quiescent_attempt, simulate_linear, simulate_ml
from .base_experiment import BaseExperiment, ExperimentResult

logger = get_logger(__name__)

PATH_MODELS = ("ml", "linear", "xa")
SPECTRUM_MODELS = ("ml", "xa")


def _downsample(path: Path, stride: int) -> Path:
    if stride == 1:
        return path
    return Path(dt=path.dt * stride, t0=path.t0, states=path.states[::stride], columns=path.columns)


class SimulateExperiment(BaseExperiment):
    """
    1本のパスを生成してCSVに書き出す

    model:
        ml: 平衡点から始めた確率的Morris-Lecarモデル（列 v, w）
        linear: 線形化系 dX = MX dt + G dB（中心化座標、列 x1, x2）
        xa: 回転変調OU近似 X^a（中心化座標、列 x1, x2）
    """

    name = "simulate"

    async def run(self) -> ExperimentResult:
        model = self.get_config("model", "ml")
        if model not in PATH_MODELS:
            raise ModelError(f"simulateで使えないモデルです: {model}")
        cfg = self.sim_config
        summary: Dict[str, Any] = {"model": model, "dt": cfg.dt, "t_max": cfg.t_max, "seed": cfg.seed}

        if model == "ml":
            eq = equilibrium(self.params)
            path = simulate_ml(self.params, eq, cfg)
            spike = detect_spike(path)
            summary["equilibrium"] = {"v": eq.v, "w": eq.w}
            summary["first_spike_ms"] = spike
        else:
            sys = build_linearized(self.params, report_transcription=False)
            if model == "linear":
                path = simulate_linear(sys.M, sys.G, (0.0, 0.0), cfg)
            else:
                construction = self.get_config("construction", "rotation")
                path = _downsample(xa_path(sys, cfg.dt, cfg.t_max, cfg.seed, construction), cfg.record_stride)
                summary["construction"] = construction
            summary["lambda"] = sys.lam
            summary["omega"] = sys.omega

        summary["n_points"] = len(path)
        summary["sample_std"] = [float(s) for s in np.std(path.states, axis=0)]
        return ExperimentResult(summary=summary, tables={"path.csv": path.to_csv})


class SpectrumExperiment(BaseExperiment):
    """
    第1座標（既定）のスペクトル密度

    平衡点から始めて min_len の間発火しなかったセグメント（または X^a の
    セグメント）のピリオドグラムを平均し、2つの理論スペクトルと並べます。
    """

    name = "spectrum"

    async def _ml_segments(self, n_segments: int, min_len: float) -> List[Path]:
        # 試行番号順に成功した最初の n_segments 本を使う
        eq = equilibrium(self.params)
        cfg = self.sim_config
        max_attempts = 50 * n_segments
        batch = max(n_segments, 4 * self.pool.workers)
        segments: List[Path] = []
        attempt = 0
        while len(segments) < n_segments and attempt < max_attempts:
            indices = range(attempt, min(attempt + batch, max_attempts))
            results = await self.pool.map(
                quiescent_attempt, [(self.params, eq, min_len, cfg, i) for i in indices]
            )
            segments.extend(s for s in results if s is not None)
            attempt = indices.stop
        if len(segments) < n_segments:
            raise InsufficientSegments(
                f"{max_attempts}回の試行で閾値下セグメントが{len(segments)}本しか得られませんでした"
                f"（必要数 {n_segments}）"
            )
        logger.info("quiescent_segments_collected", count=n_segments, attempts=attempt)
        return segments[:n_segments]

    async def run(self) -> ExperimentResult:
        model = self.get_config("model", "ml")
        if model not in SPECTRUM_MODELS:
            raise ModelError(f"spectrumで使えないモデルです: {model}")
        n_segments = int(self.get_config("segments", MIN_SEGMENTS))
        min_len = float(self.get_config("min_len", MIN_SEGMENT_MS))
        coord = int(self.get_config("coord", 0))
        sys = build_linearized(self.params, report_transcription=False)
        cfg = self.sim_config

        if model == "ml":
            segments = await self._ml_segments(n_segments, min_len)
        else:
            construction = self.get_config("construction", "rotation")
            segments = await self.pool.map(
                xa_segment, [(sys, cfg.dt, min_len, cfg.seed, i, construction) for i in range(n_segments)]
            )
            segments = [_downsample(s, cfg.record_stride) for s in segments]

        empirical = estimate_spectrum(segments, coord, sys, min_segments=n_segments, min_len=min_len)
        freqs = empirical.freqs
        linearized = theoretical_spectrum(sys, freqs, SpectrumKind.LINEARIZED)
        xa = theoretical_spectrum(sys, freqs, SpectrumKind.XA)

        fine = default_frequency_grid(sys, n=4001)
        resolution = empirical.resolution
        ratio = spectrum_xa(sys, freqs) / spectrum_linearized(sys, freqs)
        expected_ratio = (freqs ** 2 + sys.det) / (2.0 * sys.omega ** 2)
        summary: Dict[str, Any] = {
            "model": model,
            "coord": coord,
            "segments": len(segments),
            "min_len": min_len,
            "omega": sys.omega,
            "bin_resolution": resolution,
            "peak_empirical": empirical.peak_frequency,
            "peak_linearized": float(fine[np.argmax(spectrum_linearized(sys, fine))]),
            "peak_xa": float(fine[np.argmax(spectrum_xa(sys, fine))]),
            "max_ratio_identity_error": float(np.max(np.abs(ratio - expected_ratio) / expected_ratio)),
        }
        summary["peak_within_one_bin"] = all(
            abs(summary["peak_empirical"] - summary[key]) <= resolution + 1e-12
            for key in ("peak_linearized", "peak_xa")
        )
        summary["period_ms"] = 2.0 * math.pi / sys.omega

        def write(path) -> None:
            SpectralDensity.write_csv(path, [empirical, linearized, xa])

        return ExperimentResult(summary=summary, tables={"spectrum.csv": write})
