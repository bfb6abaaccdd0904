"""
シミュレーションのデータモデル

時間刻み設定、記録されたパス、発火時刻サンプルを定義します。
"""

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path as FilePath
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import InvalidConfig


class BoundaryPolicy(Enum):
    """wが(0,1)から出た場合の処理"""
    REFLECT = "reflect"          # 境界εで鏡映
    CLAMP = "clamp"              # [ε, 1-ε]に切り詰め


@dataclass(frozen=True)
class SimConfig:
    """
    シミュレーション設定

    Attributes:
        dt: 時間刻み（ms）
        t_max: 打ち切り時刻（ms）
        seed: 乱数シード
        boundary_policy: w境界の処理方法
        record_stride: 何ステップごとに記録するか
    """
    dt: float = 0.01
    t_max: float = 20000.0
    seed: int = 1
    boundary_policy: BoundaryPolicy = BoundaryPolicy.REFLECT
    record_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidConfig(f"dtは正の値である必要があります: {self.dt}")
        if not self.t_max >= self.dt:
            raise InvalidConfig(f"t_maxはdt以上である必要があります: {self.t_max}")
        if self.record_stride < 1:
            raise InvalidConfig(f"record_strideは1以上である必要があります: {self.record_stride}")
        if self.seed < 0:
            raise InvalidConfig(f"seedは非負である必要があります: {self.seed}")

    @property
    def n_steps(self) -> int:
        """t_maxまでのステップ数"""
        return int(round(self.t_max / self.dt))

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return {
            "dt": self.dt,
            "t_max": self.t_max,
            "seed": self.seed,
            "boundary_policy": self.boundary_policy.value,
            "record_stride": self.record_stride,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SimConfig":
        """辞書から設定を作成"""
        return cls(
            dt=float(data.get("dt", 0.01)),
            t_max=float(data.get("t_max", 20000.0)),
            seed=int(data.get("seed", 1)),
            boundary_policy=BoundaryPolicy(data.get("boundary_policy", "reflect")),
            record_stride=int(data.get("record_stride", 1)),
        )


@dataclass
class Path:
    """
    等間隔に記録された2次元パス

    Attributes:
        dt: 記録間隔（ms）
        t0: 開始時刻（ms）
        states: 形状 (n, 2) の状態配列
        columns: CSV出力時の列名
    """
    dt: float
    t0: float
    states: np.ndarray
    columns: Tuple[str, str] = ("v", "w")

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float).reshape(-1, 2)
        if not self.dt > 0:
            raise InvalidConfig(f"パスの記録間隔は正である必要があります: {self.dt}")
        if len(self.states) < 1:
            raise InvalidConfig("パスは1点以上を含む必要があります")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        """各記録点の時刻（ms）"""
        return self.t0 + self.dt * np.arange(len(self.states))

    @property
    def duration(self) -> float:
        """パスの長さ（ms）"""
        return self.dt * (len(self.states) - 1)

    @property
    def v(self) -> np.ndarray:
        """第1座標"""
        return self.states[:, 0]

    @property
    def w(self) -> np.ndarray:
        """第2座標"""
        return self.states[:, 1]

    def slice(self, start: int, stop: int) -> "Path":
        """インデックス範囲 [start, stop) の部分パス"""
        return Path(
            dt=self.dt,
            t0=self.t0 + start * self.dt,
            states=self.states[start:stop].copy(),
            columns=self.columns,
        )

    def to_csv(self, path: Union[str, FilePath]) -> None:
        """ヘッダー `t,v,w`（線形系は `t,x1,x2`）でCSVに書き出す"""
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["t", *self.columns])
            for t, (a, b) in zip(self.times, self.states):
                writer.writerow([f"{t:.10g}", f"{a:.12g}", f"{b:.12g}"])

    def __repr__(self) -> str:
        return f"Path(n={len(self)}, dt={self.dt}, t0={self.t0})"


@dataclass
class ISISample:
    """
    発火時刻（ISI）のサンプル

    打ち切られた複製は t_max を時刻として保持し、censored=True とします。

    Attributes:
        times: 発火時刻（ms）
        censored: 打ち切りフラグ
        model_tag: 生成モデル（ml / lif-logistic / lif-exp / lif-hard / file）
        seed: 生成に使用したシード
        metadata: 生成条件などの追加情報
    """
    times: np.ndarray
    censored: np.ndarray
    model_tag: str
    seed: Optional[int] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.censored = np.asarray(self.censored, dtype=bool)
        if self.times.shape != self.censored.shape:
            raise InvalidConfig("timesとcensoredの長さが一致しません")
        if np.any(self.times <= 0):
            raise InvalidConfig("発火時刻は正である必要があります")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def observed(self) -> np.ndarray:
        """打ち切られていない発火時刻"""
        return self.times[~self.censored]

    @property
    def n_censored(self) -> int:
        """打ち切り数"""
        return int(self.censored.sum())

    def summary(self) -> Dict[str, Any]:
        """観測された発火時刻の要約統計"""
        observed = self.observed
        return {
            "model": self.model_tag,
            "n": len(self),
            "n_censored": self.n_censored,
            "mean_ms": float(observed.mean()) if len(observed) else None,
            "std_ms": float(observed.std(ddof=1)) if len(observed) > 1 else None,
            "median_ms": float(np.median(observed)) if len(observed) else None,
            "p95_ms": float(np.percentile(observed, 95)) if len(observed) else None,
        }

    def to_csv(self, path: Union[str, FilePath]) -> None:
        """ヘッダー `replicate,firing_time_ms,censored` でCSVに書き出す"""
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["replicate", "firing_time_ms", "censored"])
            for i, (t, c) in enumerate(zip(self.times, self.censored)):
                writer.writerow([i, f"{t:.10g}", int(c)])

    @classmethod
    def from_csv(cls, path: Union[str, FilePath], model_tag: str = "file") -> "ISISample":
        """to_csvで書き出したファイルを読み込む"""
        times: List[float] = []
        censored: List[bool] = []
        with open(path, newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                times.append(float(row["firing_time_ms"]))
                censored.append(bool(int(row["censored"])))
        return cls(times=np.array(times), censored=np.array(censored), model_tag=model_tag)

    def __repr__(self) -> str:
        return f"ISISample(model={self.model_tag}, n={len(self)}, censored={self.n_censored})"
