"""
例外定義

数値モデルと推定手順で発生するドメインエラーを定義します。
すべてValueErrorの派生クラスで、CLIでは終了コード1に対応します。
"""


class ModelError(ValueError):
    """ドメインエラーの基底クラス"""


class NoRootInBracket(ModelError):
    """探索区間で関数の符号が変化しない"""


class NoStableEquilibrium(ModelError):
    """安定な平衡点が一意に定まらない"""


class InvalidConfig(ModelError):
    """シミュレーション設定が不正"""


class ConfigError(ModelError):
    """設定ファイルの書式・キーが不正（CLIでは終了コード2）"""


class RealEigenvalues(ModelError):
    """線形化行列の固有値が実数（安定焦点ではない）"""


class JacobianMismatch(ModelError):
    """解析的ヤコビアンと差分ヤコビアンが一致しない"""


class DegenerateTransform(ModelError):
    """ノイズ強度0のため変換座標が定義できない"""


class HardThresholdHasNoRate(ModelError):
    """硬い閾値モデルにはハザード率が存在しない"""


class ThinningBoundExceeded(ModelError):
    """間引き法の局所上界をハザード率が超えた"""


class InsufficientSegments(ModelError):
    """スペクトル推定に必要なセグメントが不足"""


class DegenerateData(ModelError):
    """回帰に使える情報を含まないデータ"""


class LimitCycleNotFound(ModelError):
    """リミットサイクルの交点が収束しない"""
