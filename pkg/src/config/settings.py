"""
アプリケーション設定

環境変数から実験の既定値を読み込みます。
"""

import os
from typing import Optional
from dotenv import load_dotenv

# 環境変数の読み込み
load_dotenv()


class Settings:
    """
    アプリケーション設定クラス

    環境変数から設定を読み込み、CLIと実験クラスの既定値として
    使用できるようにします。

    Attributes:
        seed (int): 乱数シードの既定値
        dt (float): 時間刻みの既定値（ms）
        t_max (float): シミュレーション打ち切り時刻の既定値（ms）
        workers (int): ワーカープロセス数
        output_dir (str): 出力ディレクトリ
        app_name (str): アプリケーション名
        app_env (str): 実行環境（development/production/test）
        log_level (str): ログレベル
    """

    def __init__(self):
        """設定の初期化"""
        # 実験設定
        self.seed: int = int(os.getenv("ML_LIF_SEED", "1"))
        self.dt: float = float(os.getenv("ML_LIF_DT", "0.01"))
        self.t_max: float = float(os.getenv("ML_LIF_T_MAX", "20000.0"))
        self.workers: int = int(os.getenv("ML_LIF_WORKERS", "1"))
        self.output_dir: str = os.getenv("ML_LIF_OUTPUT_DIR", "results")

        # アプリケーション設定
        self.app_name: str = os.getenv("APP_NAME", "ml_lif")
        self.app_env: str = os.getenv("APP_ENV", "development")
        self.log_level: str = os.getenv("LOG_LEVEL", "INFO")

    def is_development(self) -> bool:
        """
        開発環境かどうかを判定

        Returns:
            開発環境の場合True
        """
        return self.app_env == "development"

    def is_production(self) -> bool:
        """
        本番環境かどうかを判定

        Returns:
            本番環境の場合True
        """
        return self.app_env == "production"

    def validate(self) -> bool:
        """
        設定の妥当性をチェック

        Returns:
            設定が有効な場合True

        Raises:
            ValueError: 設定値が範囲外の場合
        """
        if self.dt <= 0:
            raise ValueError(f"ML_LIF_DTは正の値である必要があります: {self.dt}")
        if self.t_max < self.dt:
            raise ValueError(f"ML_LIF_T_MAXはdt以上である必要があります: {self.t_max}")
        if self.workers < 1:
            raise ValueError(f"ML_LIF_WORKERSは1以上である必要があります: {self.workers}")
        if self.seed < 0:
            raise ValueError(f"ML_LIF_SEEDは非負である必要があります: {self.seed}")

        return True


# シングルトンインスタンス
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """
    設定のシングルトンインスタンスを取得

    Returns:
        設定インスタンス
    """
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings() -> None:
    """シングルトンを破棄して次回呼び出し時に環境変数を再読込させる"""
    global _settings
    _settings = None
