"""
複製並列実行プールのユニットテスト
"""

import asyncio
import operator

import numpy as np
import pytest

from src.models.simulation import SimConfig
from src.services.sde_engine import simulate_isi_replicate
from src.services.worker_pool import ReplicatePool


class TestReplicatePool:
    """ReplicatePoolのテストクラス"""

    def test_invalid_workers(self):
        with pytest.raises(ValueError):
            ReplicatePool(workers=0)

    @pytest.mark.asyncio
    async def test_single_worker_runs_in_process(self):
        """workers = 1 ではプロセスを起動しない"""
        async with ReplicatePool(workers=1) as pool:
            assert pool._executor is None
            results = await pool.map(operator.add, [(i, 10) for i in range(5)])
        assert results == [10, 11, 12, 13, 14]

    @pytest.mark.asyncio
    async def test_order_preserved_with_processes(self):
        async with ReplicatePool(workers=2) as pool:
            results = await pool.map(pow, [(2, k) for k in range(10)])
        assert results == [2 ** k for k in range(10)]

    @pytest.mark.asyncio
    async def test_close_is_idempotent(self):
        pool = ReplicatePool(workers=2)
        await pool.__aenter__()
        pool.close()
        pool.close()
        assert pool._executor is None

    @pytest.mark.asyncio
    async def test_timeout(self, mocker):
        """タイムアウトはasyncio.TimeoutErrorとして伝える"""
        pool = ReplicatePool(workers=2, timeout=0.01)
        pool._executor = mocker.Mock()

        async def never(*_args, **_kwargs):
            await asyncio.sleep(10)

        loop = asyncio.get_running_loop()
        mocker.patch.object(loop, "run_in_executor", side_effect=lambda *a: asyncio.ensure_future(never()))
        with pytest.raises(asyncio.TimeoutError):
            await pool.map(pow, [(2, 1)])
        pool._executor = None

    @pytest.mark.integration
    @pytest.mark.asyncio
    async def test_worker_count_invariance(self, default_params, eq_state):
        """複製ごとに乱数を割り当てるため、ワーカー数によらず同じ結果"""
        cfg = SimConfig(dt=0.05, t_max=20.0, seed=11)
        arguments = [(default_params, cfg, i, eq_state) for i in range(4)]
        async with ReplicatePool(workers=1) as pool:
            sequential = await pool.map(simulate_isi_replicate, arguments)
        async with ReplicatePool(workers=2) as pool:
            parallel = await pool.map(simulate_isi_replicate, arguments)
        np.testing.assert_array_equal(np.array(sequential), np.array(parallel))

    def test_repr(self):
        assert repr(ReplicatePool(workers=3)) == "ReplicatePool(workers=3)"
