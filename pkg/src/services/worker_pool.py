"""
複製並列実行プール

独立な複製（ISIの複製、LIFのブロック、発火確率の格子点）をプロセスプールで
並列に実行します。乱数は呼び出し側で複製ごとに割り当て済みで、結果は
投入順に返すため、ワーカー数によらず同じ結果になります。
"""

import asyncio
import functools
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Optional, Sequence

from ..config.logging import get_logger

logger = get_logger(__name__)


class ReplicatePool:
    """
    asyncioから使うプロセスプール

    workers = 1 の場合はプロセスを起動せず、同じプロセスで順に実行します。

    Attributes:
        workers: ワーカープロセス数
        timeout: 1回のmap全体のタイムアウト（秒、Noneなら無制限）

    Example:
        >>> async with ReplicatePool(workers=4) as pool:
        ...     results = await pool.map(simulate_isi_replicate, [(p, cfg, i) for i in range(100)])
    """

    def __init__(self, workers: int = 1, timeout: Optional[float] = None):
        """
        Args:
            workers: ワーカープロセス数（1以上）
            timeout: タイムアウト（秒）
        """
        if workers < 1:
            raise ValueError(f"ワーカー数は1以上である必要があります: {workers}")
        self.workers = workers
        self.timeout = timeout
        self._executor: Optional[ProcessPoolExecutor] = None

    async def __aenter__(self) -> "ReplicatePool":
        if self.workers > 1:
            self._executor = ProcessPoolExecutor(max_workers=self.workers)
        return self

    async def __aexit__(self, exc_type, exc, tb) -> None:
        self.close()

    def close(self) -> None:
        """プロセスプールを停止"""
        if self._executor is not None:
            self._executor.shutdown(wait=True, cancel_futures=True)
            self._executor = None

    async def map(self, fn: Callable[..., Any], arguments: Sequence[tuple]) -> List[Any]:
        """
        各引数タプルについて fn(*args) を実行

        Args:
            fn: モジュールレベルの関数（プロセス間で受け渡せること）
            arguments: 引数タプルのリスト

        Returns:
            投入順に並んだ結果

        Raises:
            asyncio.TimeoutError: タイムアウトした場合
        """
        if self._executor is None:
            return [fn(*args) for args in arguments]

        loop = asyncio.get_running_loop()
        futures = [loop.run_in_executor(self._executor, functools.partial(fn, *args)) for args in arguments]
        logger.debug("pool_dispatch", tasks=len(futures), workers=self.workers, fn=fn.__name__)
        return list(await asyncio.wait_for(asyncio.gather(*futures), timeout=self.timeout))

    def __repr__(self) -> str:
        return f"ReplicatePool(workers={self.workers})"
