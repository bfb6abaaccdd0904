"""
基底実験クラス

すべての実験（CLIのサブコマンド）が継承する基底クラスを定義します。
"""

import csv
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import Any, Callable, Dict, List, Optional

from ..config.logging import get_logger
from ..models.errors import ModelError
from ..models.parameters import MLParameters
from ..models.simulation import SimConfig
from ..services.worker_pool import ReplicatePool

logger = get_logger(__name__)

TableWriter = Callable[[FilePath], None]


@dataclass
class ExperimentResult:
    """
    実験の結果

    Attributes:
        summary: summary.jsonに書き出すスカラー値と当てはめ結果
        tables: ファイル名 → 書き出し関数（ランナーが単一スレッドで呼ぶ）
    """
    summary: Dict[str, Any]
    tables: Dict[str, TableWriter] = field(default_factory=dict)


class BaseExperiment(ABC):
    """
    すべての実験の基底クラス

    このクラスを継承して、サブコマンドごとの実験を実装します。

    Attributes:
        name (str): サブコマンド名
        params (MLParameters): モデルパラメータ
        sim_config (SimConfig): シミュレーション設定
        config (Dict[str, Any]): サブコマンド固有の設定
        pool (ReplicatePool): 複製の並列実行プール
        history (List[Dict[str, Any]]): 実行履歴
    """

    name: str = "experiment"

    def __init__(
        self,
        params: MLParameters,
        sim_config: SimConfig,
        config: Optional[Dict[str, Any]] = None,
        pool: Optional[ReplicatePool] = None,
    ):
        """
        実験の初期化

        Args:
            params: モデルパラメータ
            sim_config: シミュレーション設定
            config: サブコマンド固有の設定（オプション）
            pool: 並列実行プール（未指定なら同一プロセスで実行）
        """
        self.params = params
        self.sim_config = sim_config
        self.config = config or {}
        self.pool = pool or ReplicatePool(workers=1)
        self.history: List[Dict[str, Any]] = []

    @abstractmethod
    async def run(self) -> ExperimentResult:
        """
        実験を実行

        このメソッドは、サブクラスで必ず実装する必要があります。

        Returns:
            実験結果

        Raises:
            ModelError: 数値計算や推定が失敗した場合
        """

    async def execute(self) -> Dict[str, Any]:
        """
        実験を実行して結果を辞書で返す

        ドメインエラーは捕捉して {"success": False, "error": ...} にします。

        Returns:
            {"success": bool, "result": ExperimentResult} または
            {"success": False, "error": str, "error_type": str}
        """
        logger.info("experiment_started", experiment=self.name, seed=self.sim_config.seed)
        try:
            result = await self.run()
        except ModelError as e:
            logger.error("experiment_failed", experiment=self.name, error_type=type(e).__name__, error=str(e))
            outcome = {"success": False, "error": str(e), "error_type": type(e).__name__}
            self.add_to_history({"experiment": self.name, **outcome})
            return outcome

        self.add_to_history({"experiment": self.name, "success": True, "outputs": sorted(result.tables)})
        return {"success": True, "result": result}

    def add_to_history(self, entry: Dict[str, Any]) -> None:
        """
        実行履歴に追加

        Args:
            entry: 実行内容
        """
        self.history.append(entry)

    def get_history(self) -> List[Dict[str, Any]]:
        """
        実行履歴を取得

        Returns:
            実行履歴のリスト（コピー）
        """
        return self.history.copy()

    def get_config(self, key: str, default: Any = None) -> Any:
        """
        設定値を取得

        Noneが設定されている場合もdefaultを返します。

        Args:
            key: 設定キー
            default: デフォルト値

        Returns:
            設定値
        """
        value = self.config.get(key)
        return default if value is None else value

    def update_config(self, updates: Dict[str, Any]) -> None:
        """
        設定を更新

        Args:
            updates: 更新する設定の辞書
        """
        self.config.update(updates)

    def __repr__(self) -> str:
        """
        実験の文字列表現

        Returns:
            実験の情報を含む文字列
        """
        return f"{self.__class__.__name__}(name='{self.name}', history_length={len(self.history)})"


def csv_table(header: List[str], rows: List[List[Any]]) -> TableWriter:
    """ヘッダーと行からCSVの書き出し関数を作成（浮動小数点は10桁の%g）"""

    def write(path: FilePath) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in rows:
                writer.writerow([f"{value:.10g}" if isinstance(value, float) else value for value in row])

    return write
