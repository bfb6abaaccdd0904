"""
ロギング設定

structlogによる構造化ログの初期化を行います。
ログは標準エラー出力に書き出し、データ出力には混ぜません。
"""

import logging
import sys
from typing import Any, Optional

import structlog

_configured = False


def configure_logging(level: Optional[str] = None) -> None:
    """
    structlogを設定する

    2回目以降の呼び出しではログレベルのみ更新します。

    Args:
        level: ログレベル名（未指定の場合は設定から取得）
    """
    global _configured

    if level is None:
        from .settings import get_settings
        level = get_settings().log_level

    numeric_level = logging.getLevelName(level.upper())
    if not isinstance(numeric_level, int):
        numeric_level = logging.INFO

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(numeric_level),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )
    _configured = True


def get_logger(name: str) -> Any:
    """
    名前付きロガーを取得

    Args:
        name: ロガー名（通常はモジュール名）

    Returns:
        束縛済みロガー
    """
    if not _configured:
        configure_logging()
    return structlog.get_logger(name)
