"""
解析結果のデータモデル

スペクトル密度、発火確率の回帰結果、累積ハザード曲線、
実行マニフェストを定義します。
"""

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path as FilePath
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import InvalidConfig


class SpectrumKind(Enum):
    """スペクトル密度の種類"""
    LINEARIZED = "linearized"    # 線形化系の理論値
    XA = "xa"                    # 回転変調OU近似の理論値
    EMPIRICAL = "empirical"      # ピリオドグラム平均


@dataclass
class SpectralDensity:
    """
    第1座標のスペクトル密度

    Attributes:
        freqs: 角周波数（rad/ms）、狭義単調増加
        power: 非負のパワー
        kind: 種類
    """
    freqs: np.ndarray
    power: np.ndarray
    kind: SpectrumKind

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        if self.freqs.shape != self.power.shape:
            raise InvalidConfig("周波数とパワーの長さが一致しません")
        if np.any(np.diff(self.freqs) <= 0):
            raise InvalidConfig("周波数は狭義単調増加である必要があります")
        if np.any(self.power < 0):
            raise InvalidConfig("パワーは非負である必要があります")

    @property
    def peak_frequency(self) -> float:
        """最大パワーの角周波数（rad/ms）"""
        return float(self.freqs[int(np.argmax(self.power))])

    @property
    def resolution(self) -> float:
        """周波数格子の間隔（rad/ms）"""
        return float(np.min(np.diff(self.freqs))) if len(self.freqs) > 1 else float("nan")

    def rows(self) -> List[Tuple[str, str, str]]:
        """CSV行（freq, power, kind）"""
        return [(f"{f:.10g}", f"{p:.10g}", self.kind.value) for f, p in zip(self.freqs, self.power)]

    @staticmethod
    def write_csv(path: Union[str, FilePath], spectra: List["SpectralDensity"]) -> None:
        """複数のスペクトルをヘッダー `freq,power,kind` で1つのCSVに書き出す"""
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["freq", "power", "kind"])
            for spectrum in spectra:
                writer.writerows(spectrum.rows())


@dataclass
class FiringProbabilityFit:
    """
    直線L上の条件付き発火確率とシグモイド回帰の結果

    Attributes:
        sigma_star: ノイズ強度 σ*
        grid: (l, p̂, 試行数) のリスト
        alpha_hat, beta_hat: 元の空間でのシグモイドパラメータ
        alpha_star, beta_star: 変換座標でのパラメータ
        intervals: 各点のWilson区間
        metadata: リミットサイクル交点など
    """
    sigma_star: float
    grid: List[Tuple[float, float, int]]
    alpha_hat: Optional[float] = None
    beta_hat: Optional[float] = None
    alpha_star: Optional[float] = None
    beta_star: Optional[float] = None
    intervals: List[Tuple[float, float]] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for l, p_hat, n in self.grid:
            if not 0.0 <= p_hat <= 1.0:
                raise InvalidConfig(f"p̂は[0,1]の範囲である必要があります: {p_hat}")
        if self.beta_hat is not None and not self.beta_hat > 0:
            raise InvalidConfig("beta_hatは正である必要があります")

    @property
    def distances(self) -> np.ndarray:
        return np.array([g[0] for g in self.grid])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([g[1] for g in self.grid])

    def to_dict(self) -> Dict[str, Any]:
        """JSON出力用の辞書"""
        return {
            "sigma_star": self.sigma_star,
            "alpha_hat": self.alpha_hat,
            "beta_hat": self.beta_hat,
            "alpha_star": self.alpha_star,
            "beta_star": self.beta_star,
            "grid": [{"l": l, "p_hat": p, "n": n} for l, p, n in self.grid],
            "intervals": [list(ci) for ci in self.intervals],
            **self.metadata,
        }

    def write_grid_csv(self, path: Union[str, FilePath]) -> None:
        """ヘッダー `l,p_hat,n` でCSVに書き出す"""
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["l", "p_hat", "n"])
            for l, p_hat, n in self.grid:
                writer.writerow([f"{l:.10g}", f"{p_hat:.10g}", n])


@dataclass
class CumulativeHazardCurve:
    """
    右連続な階段関数としての累積ハザード

    Attributes:
        times: 時刻（ms）、先頭は0
        values: 各時刻以降の累積ハザード、単調非減少
    """
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or len(self.times) == 0:
            raise InvalidConfig("累積ハザードの時刻と値の長さが一致しません")
        if self.times[0] != 0.0 or self.values[0] != 0.0:
            raise InvalidConfig("累積ハザードは時刻0で0から始まる必要があります")
        if np.any(np.diff(self.values) < 0):
            raise InvalidConfig("累積ハザードは単調非減少である必要があります")

    def __call__(self, t: Union[float, np.ndarray]) -> np.ndarray:
        """時刻tでの値（右連続な階段関数として評価）"""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.values[np.clip(idx, 0, None)]

    def write_csv(self, path: Union[str, FilePath]) -> None:
        """ヘッダー `t,cumulative_hazard` でCSVに書き出す"""
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "cumulative_hazard"])
            for t, a in zip(self.times, self.values):
                writer.writerow([f"{t:.10g}", f"{a:.10g}"])


@dataclass
class RunManifest:
    """
    実行マニフェスト

    出力の再現に必要な情報をすべて含みます。時刻は含めません。

    Attributes:
        subcommand: 実行したサブコマンド
        arguments: 解決済みの引数
        parameters: モデルパラメータ
        seed: 乱数シード
        versions: パッケージのバージョン
        outputs: 書き出したファイル名
        config_hash: 上記（outputs除く）の正規化JSONのSHA-256
    """
    subcommand: str
    arguments: Dict[str, Any]
    parameters: Dict[str, Any]
    seed: int
    versions: Dict[str, str]
    outputs: List[str] = field(default_factory=list)
    config_hash: str = ""

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return {
            "subcommand": self.subcommand,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "arguments": self.arguments,
            "parameters": self.parameters,
            "versions": self.versions,
            "outputs": self.outputs,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        """辞書からマニフェストを作成"""
        return cls(
            subcommand=data["subcommand"],
            arguments=data.get("arguments", {}),
            parameters=data.get("parameters", {}),
            seed=int(data["seed"]),
            versions=data.get("versions", {}),
            outputs=list(data.get("outputs", [])),
            config_hash=data.get("config_hash", ""),
        )

    def __repr__(self) -> str:
        return f"RunManifest({self.subcommand}, hash={self.config_hash[:12]}, seed={self.seed})"


@dataclass
class HazardFit:
    """
    指数型ハザード (α, β) の最小二乗当てはめ結果

    Attributes:
        alpha, beta: 推定値
        objective: 残差二乗和
        converged: 精密化が収束したか
        form: 理論累積ハザードの式（"simplified" または "exact"）
        grid_times: 当てはめに使った時刻格子（ms）
        empirical: 格子上のNelson-Aalen推定値
        fitted: 格子上の理論値
    """
    alpha: float
    beta: float
    objective: float
    converged: bool
    form: str
    grid_times: np.ndarray
    empirical: np.ndarray
    fitted: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        """JSON出力用の辞書"""
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "objective": self.objective,
            "converged": self.converged,
            "form": self.form,
            "grid": [
                {"t": float(t), "empirical": float(e), "fitted": float(f)}
                for t, e, f in zip(self.grid_times, self.empirical, self.fitted)
            ],
        }
