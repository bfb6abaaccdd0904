"""
発火ハザードモデル

radial OU型LIFモデルの発火機構（ロジスティック型・指数型・硬い閾値）を
タグ付きの値として定義します。
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional

from .errors import ConfigError
from .parameters import format_key_values, parse_key_values


class HazardKind(Enum):
    """ハザードモデルの種類"""
    LOGISTIC = "logistic"        # 有界なシグモイド型
    EXPONENTIAL = "exponential"  # 非有界な指数型
    HARD = "hard"                # 硬い閾値（初到達時刻）


@dataclass(frozen=True)
class HazardModel:
    """
    ハザードモデル

    種類ごとに使うフィールドが異なります:
    logistic は alpha_star, beta_star, base_rate（1/ms）、
    exponential は alpha, beta、hard は threshold を使います。
    """
    kind: HazardKind
    alpha_star: Optional[float] = None
    beta_star: Optional[float] = None
    base_rate: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    threshold: Optional[float] = None

    def __post_init__(self):
        if self.kind is HazardKind.LOGISTIC:
            self._require("alpha_star", "beta_star", "base_rate")
            if not self.beta_star > 0:
                raise ConfigError("beta_starは正である必要があります")
            if self.base_rate < 0:
                raise ConfigError("base_rateは非負である必要があります")
        elif self.kind is HazardKind.EXPONENTIAL:
            self._require("alpha", "beta")
            if not self.beta > 0:
                raise ConfigError("betaは正である必要があります")
        else:
            self._require("threshold")
            if not self.threshold > 0:
                raise ConfigError("thresholdは正である必要があります")

    def _require(self, *names: str) -> None:
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise ConfigError(f"{self.kind.value}モデルに必要な値がありません: {', '.join(missing)}")

    @classmethod
    def logistic(cls, alpha_star: float, beta_star: float, omega: float) -> "HazardModel":
        """
        ロジスティック型ハザードを作成

        Args:
            alpha_star: 変換座標での半値距離
            beta_star: 変換座標での遷移幅
            omega: 回転角速度（rad/ms）。上限 base_rate = ω/2π になる

        Returns:
            HazardModelインスタンス
        """
        return cls(
            kind=HazardKind.LOGISTIC,
            alpha_star=alpha_star,
            beta_star=beta_star,
            base_rate=omega / (2.0 * math.pi),
        )

    @classmethod
    def exponential(cls, alpha: float, beta: float) -> "HazardModel":
        """指数型ハザード exp((r-α)/β) を作成"""
        return cls(kind=HazardKind.EXPONENTIAL, alpha=alpha, beta=beta)

    @classmethod
    def hard(cls, threshold: float) -> "HazardModel":
        """硬い閾値 S を作成"""
        return cls(kind=HazardKind.HARD, threshold=threshold)

    @property
    def tag(self) -> str:
        """ISIサンプルのモデルタグ"""
        return {
            HazardKind.LOGISTIC: "lif-logistic",
            HazardKind.EXPONENTIAL: "lif-exp",
            HazardKind.HARD: "lif-hard",
        }[self.kind]

    def to_dict(self) -> Dict[str, Any]:
        """使用しているフィールドのみを辞書に変換"""
        data: Dict[str, Any] = {"kind": self.kind.value}
        for name in ("alpha_star", "beta_star", "base_rate", "alpha", "beta", "threshold"):
            value = getattr(self, name)
            if value is not None:
                data[name] = value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HazardModel":
        """
        辞書からハザードモデルを作成

        Raises:
            ConfigError: 未知のキー・種類、または値が不足している場合
        """
        allowed = {"kind", "alpha_star", "beta_star", "base_rate", "alpha", "beta", "threshold"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"未知のハザードキーです: {', '.join(unknown)}")
        try:
            kind = HazardKind(str(data["kind"]))
        except (KeyError, ValueError) as e:
            raise ConfigError(f"ハザードの種類が不正です: {data.get('kind')}") from e
        try:
            values = {k: float(v) for k, v in data.items() if k != "kind"}
        except ValueError as e:
            raise ConfigError(f"ハザードの値が数値ではありません: {e}") from e
        return cls(kind=kind, **values)

    def to_text(self) -> str:
        """キー・値テキストに変換"""
        return format_key_values(self.to_dict())

    @classmethod
    def from_text(cls, text: str) -> "HazardModel":
        """キー・値テキストから作成"""
        return cls.from_dict(parse_key_values(text))
