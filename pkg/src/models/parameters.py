"""
Morris-Lecarモデルのパラメータ

パラメータ集合と相空間の点を定義し、フラットなキー・値形式の
テキストとの相互変換を提供します。
"""

from pathlib import Path as FilePath
from typing import Any, Dict, NamedTuple, Union

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from .errors import ConfigError


class State2(NamedTuple):
    """相空間の点 (v [mV], w [無次元])"""
    v: float
    w: float


class MLParameters(BaseModel):
    """
    Morris-Lecarモデルの定数

    既定値は標準的な表の値（I = 90 µA/cm²）を再現します。
    不変なモデルとして扱い、未知のキーはエラーになります。

    Attributes:
        V1, V2, V3, V4: スケーリングパラメータ（mV）
        gCa, gK, gL: 最大コンダクタンス（µS/cm²）
        VCa, VK, VL: 反転電位（mV）
        C: 膜容量（µF/cm²）
        phi: 速度スケール（1/ms）
        I: 入力電流（µA/cm²）
        sigma_star: チャネルノイズ強度 σ*（(0, 1]）
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    V1: float = -1.2
    V2: float = 18.0
    V3: float = 2.0
    V4: float = 30.0
    gCa: float = 4.4
    gK: float = 8.0
    gL: float = 2.0
    VCa: float = 120.0
    VK: float = -84.0
    VL: float = -60.0
    C: float = 20.0
    phi: float = 0.04
    I: float = 90.0
    sigma_star: float = 0.05

    @field_validator("C", "phi")
    @classmethod
    def _positive(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("正の値である必要があります")
        return value

    @field_validator("V2", "V4")
    @classmethod
    def _nonzero(cls, value: float) -> float:
        if value == 0:
            raise ValueError("0以外である必要があります")
        return value

    @field_validator("gCa", "gK", "gL")
    @classmethod
    def _nonnegative(cls, value: float) -> float:
        if value < 0:
            raise ValueError("コンダクタンスは非負である必要があります")
        return value

    @field_validator("sigma_star")
    @classmethod
    def _noise_range(cls, value: float) -> float:
        # σ* = 0 は決定論的モデルとして許容する
        if not 0.0 <= value <= 1.0:
            raise ValueError("sigma_starは[0, 1]の範囲である必要があります")
        return value

    @model_validator(mode="after")
    def _reversal_order(self) -> "MLParameters":
        if self.VK >= self.VCa:
            raise ValueError("VK < VCa である必要があります")
        return self

    def with_sigma_star(self, sigma_star: float) -> "MLParameters":
        """σ*のみを置き換えた新しいパラメータを返す"""
        return MLParameters(**{**self.model_dump(), "sigma_star": sigma_star})

    def to_dict(self) -> Dict[str, float]:
        """辞書形式に変換"""
        return self.model_dump()

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MLParameters":
        """
        辞書からパラメータを作成

        Args:
            data: パラメータの辞書

        Returns:
            MLParametersインスタンス

        Raises:
            ConfigError: 未知のキーまたは不正な値がある場合
        """
        try:
            return cls(**data)
        except ValidationError as e:
            raise ConfigError(f"パラメータが不正です: {e}") from e


def parse_key_values(text: str) -> Dict[str, str]:
    """
    フラットなキー・値テキストを解析

    `name = value` の行を読み、`#` 以降はコメントとして無視します。

    Args:
        text: 設定テキスト

    Returns:
        キーと文字列値の辞書

    Raises:
        ConfigError: 書式が不正、またはキーが重複している場合
    """
    result: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{lineno}行目: 'key = value' 形式ではありません: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{lineno}行目: キーが空です")
        if key in result:
            raise ConfigError(f"{lineno}行目: キーが重複しています: {key}")
        result[key] = value
    return result


def format_key_values(data: Dict[str, Any]) -> str:
    """辞書をキー・値テキストに整形（浮動小数点は往復可能な表現）"""
    lines = []
    for key, value in data.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def load_parameters(source: Union[str, FilePath]) -> MLParameters:
    """
    キー・値形式のテキストまたはファイルからパラメータを読み込む

    指定されなかったキーは既定値を使用します。

    Args:
        source: ファイルパス、または設定テキストそのもの

    Returns:
        MLParametersインスタンス

    Raises:
        ConfigError: 未知のキー、数値でない値、不変条件違反の場合
    """
    if isinstance(source, FilePath) or ("=" not in str(source) and FilePath(str(source)).exists()):
        text = FilePath(source).read_text(encoding="utf-8")
    else:
        text = str(source)

    raw = parse_key_values(text)
    unknown = sorted(set(raw) - set(MLParameters.model_fields))
    if unknown:
        raise ConfigError(f"未知のパラメータキーです: {', '.join(unknown)}")

    values: Dict[str, float] = {}
    for key, value in raw.items():
        try:
            values[key] = float(value)
        except ValueError as e:
            raise ConfigError(f"数値ではありません: {key} = {value}") from e

    return MLParameters.from_dict(values)


def dump_parameters(params: MLParameters) -> str:
    """パラメータをキー・値テキストに変換"""
    return format_key_values(params.to_dict())
