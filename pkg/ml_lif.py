"""
ML-LIF 実験実行プログラム

確率的Morris-Lecarモデルとradial OU型LIFモデルの実験をサブコマンドとして実行し、
結果をCSV（曲線・サンプル）とJSON（スカラー値・当てはめ結果）に書き出します。
すべての出力ディレクトリには再現に必要な manifest.json が付きます。

使い方:
    python ml_lif.py equilibrium
    python ml_lif.py isi --model ml --n 300 --sigma-star 0.05 --seed 1 --workers 4
    python ml_lif.py mean-passage --target-mean 447
"""

import argparse
import asyncio
import hashlib
import json
import math
import platform
import sys
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src import __version__
from src.config.logging import configure_logging, get_logger
from src.config.settings import get_settings
from src.experiments import EXPERIMENTS
from src.models.errors import ConfigError, InvalidConfig
from src.models.parameters import MLParameters, load_parameters
from src.models.results import RunManifest
from src.models.simulation import BoundaryPolicy, SimConfig
from src.services.worker_pool import ReplicatePool

EXIT_OK = 0
EXIT_DOMAIN_ERROR = 1
EXIT_USAGE_ERROR = 2

# 結果に影響しないため manifest に含めない引数
_RUNTIME_ONLY = ("command", "out", "workers", "log_level")
# 内容のハッシュを manifest に記録する入力ファイル
_INPUT_FILES = ("config", "isi_file", "hazard_config")
_USAGE_ERRORS = (ConfigError.__name__, InvalidConfig.__name__)
_VERSIONED_PACKAGES = ("numpy", "scipy", "lifelines", "pydantic", "structlog")

logger = get_logger(__name__)


class UsageError(Exception):
    """コマンドライン引数が不正"""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise UsageError(message)


def package_versions() -> Dict[str, str]:
    """出力に影響するパッケージのバージョン"""
    versions = {"ml_lif": __version__, "python": platform.python_version()}
    for name in _VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def to_json_compatible(value: Any) -> Any:
    """numpyの値や非有限の浮動小数点をJSONで表せる値に変換"""
    if isinstance(value, dict):
        return {str(k): to_json_compatible(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_json_compatible(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_json_compatible(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def canonical_json(data: Any) -> str:
    """キーを整列した区切り文字なしのJSON（ハッシュ用）"""
    return json.dumps(to_json_compatible(data), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(manifest: RunManifest) -> str:
    """outputs と config_hash を除いたマニフェストのSHA-256"""
    data = manifest.to_dict()
    data.pop("outputs")
    data.pop("config_hash")
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


class ExperimentRunner:
    """
    実験実行クラス

    プロセスプールを所有して実験を実行し、出力ファイルを
    単一スレッドで書き出します。

    Attributes:
        subcommand: サブコマンド名
        params: モデルパラメータ
        sim_config: シミュレーション設定
        config: サブコマンド固有の設定
        out_dir: 出力ディレクトリ
        workers: ワーカープロセス数
        arguments: manifest に記録する解決済みの引数
    """

    def __init__(
        self,
        subcommand: str,
        params: MLParameters,
        sim_config: SimConfig,
        config: Dict[str, Any],
        out_dir: Path,
        workers: int = 1,
        arguments: Optional[Dict[str, Any]] = None,
    ):
        """
        Args:
            subcommand: サブコマンド名
            params: モデルパラメータ
            sim_config: シミュレーション設定
            config: サブコマンド固有の設定
            out_dir: 出力ディレクトリ
            workers: ワーカープロセス数
            arguments: manifest に記録する引数（未指定ならconfigとsim_config）
        """
        if subcommand not in EXPERIMENTS:
            raise UsageError(f"未知のサブコマンドです: {subcommand}")
        self.subcommand = subcommand
        self.params = params
        self.sim_config = sim_config
        self.config = config
        self.out_dir = out_dir
        self.workers = workers
        self.arguments = arguments if arguments is not None else {**sim_config.to_dict(), **config}

    def build_manifest(self, outputs: List[str]) -> RunManifest:
        """書き出したファイル名から manifest を作成"""
        manifest = RunManifest(
            subcommand=self.subcommand,
            arguments=to_json_compatible(self.arguments),
            parameters=self.params.to_dict(),
            seed=self.sim_config.seed,
            versions=package_versions(),
            outputs=sorted(outputs),
        )
        manifest.config_hash = config_hash(manifest)
        return manifest

    async def run(self) -> Dict[str, Any]:
        """
        実験を実行して出力を書き出す

        Returns:
            成功時は {"success": True, "summary": ..., "manifest": ...}、
            失敗時は {"success": False, "error": ..., "error_type": ...}
        """
        async with ReplicatePool(workers=self.workers) as pool:
            experiment = EXPERIMENTS[self.subcommand](self.params, self.sim_config, dict(self.config), pool)
            outcome = await experiment.execute()
        if not outcome["success"]:
            return outcome

        result = outcome["result"]
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for name in sorted(result.tables):
            result.tables[name](self.out_dir / name)
        summary = to_json_compatible(result.summary)
        (self.out_dir / "summary.json").write_text(
            json.dumps(summary, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        manifest = self.build_manifest([*result.tables, "summary.json"])
        (self.out_dir / "manifest.json").write_text(
            json.dumps(to_json_compatible(manifest.to_dict()), sort_keys=True, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        logger.info("outputs_written", out=str(self.out_dir), files=manifest.outputs, config_hash=manifest.config_hash)
        return {"success": True, "summary": summary, "manifest": manifest.to_dict()}


def _add_common(parser: argparse.ArgumentParser) -> None:
    settings = get_settings()
    parser.add_argument("--sigma-star", type=float, default=None, help="ノイズ強度 σ*（既定: パラメータの値 0.05）")
    parser.add_argument(
        "--dt", type=float, default=settings.dt, help=f"時間刻み ms（デフォルト: {settings.dt}、環境変数: ML_LIF_DT）"
    )
    parser.add_argument(
        "--t-max",
        type=float,
        default=settings.t_max,
        help=f"打ち切り時刻 ms（デフォルト: {settings.t_max}、環境変数: ML_LIF_T_MAX）",
    )
    parser.add_argument(
        "--seed", type=int, default=settings.seed, help=f"乱数シード（デフォルト: {settings.seed}、環境変数: ML_LIF_SEED）"
    )
    parser.add_argument(
        "--out",
        type=Path,
        default=Path(settings.output_dir),
        help=f"出力ディレクトリ（デフォルト: {settings.output_dir}、環境変数: ML_LIF_OUTPUT_DIR）",
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=settings.workers,
        help=f"ワーカープロセス数（デフォルト: {settings.workers}、環境変数: ML_LIF_WORKERS）",
    )
    parser.add_argument("--config", type=Path, default=None, help="キー・値形式のパラメータファイル")
    parser.add_argument("--record-stride", type=int, default=1, help="パスを何ステップごとに記録するか")
    parser.add_argument(
        "--boundary-policy",
        choices=[p.value for p in BoundaryPolicy],
        default=BoundaryPolicy.REFLECT.value,
        help="wが(0,1)から出た場合の処理",
    )
    parser.add_argument("--log-level", default=None, help="ログレベル（環境変数: LOG_LEVEL）")


def _add_threshold_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--target-mean", type=float, default=447.0, help="硬い閾値の目標平均（デフォルト: 447）")
    parser.add_argument(
        "--threshold-units",
        choices=["dimensionless", "ms"],
        default="dimensionless",
        help="dimensionless: 無次元のE(T)と比較、ms: E(T)/λと比較",
    )


def build_parser() -> argparse.ArgumentParser:
    """サブコマンドを含む引数パーサーを作成"""
    parser = _Parser(description="確率的Morris-Lecarモデルとradial OU型LIFモデルの実験")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text, description=help_text)
        _add_common(sub)
        return sub

    sub = command("equilibrium", "安定平衡点とノイズスケール")
    sub.add_argument("--channels", type=float, default=None, help="σ*に換算するチャネル数N")

    sub = command("linearize", "線形化系と減衰振動解の比較")
    sub.add_argument("--start-distance", type=float, default=0.01, help="比較の初期点の距離l")

    sub = command("simulate", "パスの生成")
    sub.add_argument("--model", choices=["ml", "linear", "xa"], default="ml")
    sub.add_argument("--construction", choices=["rotation", "sde"], default="rotation", help="X^a の構成方法")

    sub = command("spectrum", "理論スペクトルと経験スペクトル")
    sub.add_argument("--model", choices=["ml", "xa"], default="ml")
    sub.add_argument("--segments", type=int, default=20, help="セグメント数（デフォルト: 20）")
    sub.add_argument("--min-len", type=float, default=450.0, help="セグメント長 ms（デフォルト: 450）")
    sub.add_argument("--coord", type=int, choices=[0, 1], default=0, help="座標")
    sub.add_argument("--construction", choices=["rotation", "sde"], default="rotation", help="X^a の構成方法")

    sub = command("firing-prob", "直線L上の条件付き発火確率")
    sub.add_argument("--trials", type=int, default=1000, help="格子点ごとの試行数（デフォルト: 1000）")
    sub.add_argument("--points", type=int, default=25, help="格子点数（デフォルト: 25）")
    sub.add_argument("--divisions", type=int, default=20, help="安定リミットサイクルまでの分割数")
    sub.add_argument("--weighted", action="store_true", help="二項分散で重み付けして当てはめる")

    sub = command("fit-hazard", "Nelson-Aalen推定と指数型ハザードの当てはめ")
    sub.add_argument("--n", type=int, default=300, help="MLの複製数（--isi-file がない場合）")
    sub.add_argument("--isi-file", type=Path, default=None, help="isi.csv 形式の発火時刻")
    sub.add_argument("--hazard-form", choices=["simplified", "exact"], default="simplified", help="理論累積ハザードの式")

    sub = command("isi", "ISIサンプルと密度曲線")
    sub.add_argument("--model", choices=["ml", "lif-logistic", "lif-exp", "lif-hard"], default="ml")
    sub.add_argument("--n", type=int, default=300, help="複製数（デフォルト: 300）")
    sub.add_argument("--hazard-config", type=Path, default=None, help="キー・値形式のハザード設定")
    _add_threshold_flags(sub)
    sub.add_argument("--m-paths", type=int, default=1000, help="密度曲線のパス数M")
    sub.add_argument("--trapezoid-points", type=int, default=1001, help="密度曲線の台形則の点数")
    sub.add_argument("--lif-du", type=float, default=0.01, help="LIFの窓幅（無次元時間）")
    sub.add_argument("--isi-file", type=Path, default=None, help="比較するisi.csv")

    sub = command("mean-passage", "平均初到達時間の表と閾値")
    _add_threshold_flags(sub)
    return parser


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def resolve(args: argparse.Namespace) -> ExperimentRunner:
    """
    引数からパラメータと設定を解決して ExperimentRunner を作成

    Raises:
        ConfigError: パラメータファイルや σ* が不正な場合
        InvalidConfig: シミュレーション設定が不正な場合
        UsageError: ワーカー数が不正な場合
    """
    params = load_parameters(args.config) if args.config is not None else MLParameters()
    if args.sigma_star is not None:
        params = MLParameters.from_dict({**params.to_dict(), "sigma_star": args.sigma_star})
    sim_config = SimConfig(
        dt=args.dt,
        t_max=args.t_max,
        seed=args.seed,
        boundary_policy=BoundaryPolicy(args.boundary_policy),
        record_stride=args.record_stride,
    )
    if args.workers < 1:
        raise UsageError(f"--workers は1以上である必要があります: {args.workers}")

    skip = set(_RUNTIME_ONLY) | set(sim_config.to_dict()) | {"sigma_star", "config", "boundary_policy"}
    config = {key: value for key, value in vars(args).items() if key not in skip}
    arguments: Dict[str, Any] = {**sim_config.to_dict(), **config}
    for key in _INPUT_FILES:
        path = getattr(args, key, None)
        if path is not None:
            arguments[key] = str(path)
            arguments[f"{key}_sha256"] = _file_digest(path)
            if key in config:
                config[key] = str(path)

    return ExperimentRunner(
        subcommand=args.command,
        params=params,
        sim_config=sim_config,
        config=config,
        out_dir=args.out,
        workers=args.workers,
        arguments=arguments,
    )


def _report_error(error_type: str, message: str) -> None:
    print(json.dumps({"error": message, "error_type": error_type}, ensure_ascii=False), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    メイン実行関数

    Args:
        argv: コマンドライン引数（未指定なら sys.argv）

    Returns:
        終了コード（0: 成功、1: ドメインエラー、2: 使い方・設定のエラー）
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        _report_error("UsageError", str(e))
        return EXIT_USAGE_ERROR
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    configure_logging(args.log_level)
    try:
        runner = resolve(args)
    except (UsageError, ConfigError, InvalidConfig, OSError) as e:
        _report_error(type(e).__name__, str(e))
        return EXIT_USAGE_ERROR

    try:
        outcome = asyncio.run(runner.run())
    except OSError as e:
        _report_error(type(e).__name__, str(e))
        return EXIT_USAGE_ERROR
    except (ValueError, asyncio.TimeoutError) as e:
        _report_error(type(e).__name__, str(e))
        return EXIT_DOMAIN_ERROR

    if not outcome["success"]:
        _report_error(outcome["error_type"], outcome["error"])
        return EXIT_USAGE_ERROR if outcome["error_type"] in _USAGE_ERRORS else EXIT_DOMAIN_ERROR

    print(json.dumps(outcome["summary"], sort_keys=True, indent=2, ensure_ascii=False))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
