"""
Pytestフィクスチャ

テスト全体で使用される共通のフィクスチャを定義します。
"""

import pytest

from src.config.logging import configure_logging
from src.config.settings import reset_settings
from src.models.parameters import MLParameters, State2
from src.models.simulation import SimConfig
from src.services.linearization import LinearizedSystem, build_linearized
from src.services.ml_model import equilibrium


@pytest.fixture(scope="session")
def default_params() -> MLParameters:
    """
    既定パラメータ（I = 90, σ* = 0.05）を提供するフィクスチャ

    Returns:
        MLParameters
    """
    return MLParameters()


@pytest.fixture(scope="session")
def eq_state(default_params) -> State2:
    """既定パラメータの安定平衡点"""
    return equilibrium(default_params)


@pytest.fixture(scope="session")
def linear_system(default_params, eq_state) -> LinearizedSystem:
    """既定パラメータの線形化系"""
    return build_linearized(default_params, eq_state)


@pytest.fixture
def quick_config() -> SimConfig:
    """
    短時間のシミュレーション設定を提供するフィクスチャ

    Returns:
        dt = 0.05 ms、t_max = 200 ms の設定
    """
    return SimConfig(dt=0.05, t_max=200.0, seed=7)


@pytest.fixture
def output_dir(tmp_path):
    """実験出力用の一時ディレクトリ"""
    out = tmp_path / "out"
    out.mkdir()
    return out


@pytest.fixture(autouse=True)
def setup_test_env(monkeypatch):
    """
    テスト環境を自動的にセットアップするフィクスチャ

    各テストの実行前に、テスト用の環境変数を設定して設定を読み直させます。

    Args:
        monkeypatch: pytestのmonkeypatchフィクスチャ
    """
    monkeypatch.setenv("APP_ENV", "test")
    monkeypatch.setenv("LOG_LEVEL", "WARNING")
    for key in ("ML_LIF_SEED", "ML_LIF_DT", "ML_LIF_T_MAX", "ML_LIF_WORKERS", "ML_LIF_OUTPUT_DIR"):
        monkeypatch.delenv(key, raising=False)
    reset_settings()
    configure_logging("WARNING")
    yield
    reset_settings()
