"""
確率微分方程式の時間発展エンジン

確率的Morris-LecarモデルのEuler-Maruyama法による時間発展、
2次元線形SDEのシミュレーション、発火検出、閾値下セグメントの抽出を提供します。
"""

import math
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from ..config.logging import get_logger
from ..models.errors import InsufficientSegments, InvalidConfig
from ..models.parameters import MLParameters, State2
from ..models.simulation import BoundaryPolicy, ISISample, Path, SimConfig
from .ml_model import equilibrium, step_kernel

logger = get_logger(__name__)

# wの境界処理に使う距離
BOUNDARY_EPS = 1e-9
# 正規乱数をまとめて生成する数
NOISE_BLOCK = 65536


def replicate_rng(seed: int, *key: int) -> np.random.Generator:
    """
    複製ごとの乱数生成器を作成

    SeedSequenceのspawn_keyで派生させるため、複製iの乱数列は
    実行順序やワーカー数に依存しません。

    Args:
        seed: 基底シード
        *key: 複製を識別する整数列（通常は複製番号）

    Returns:
        np.random.Generator
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


class MLStepper:
    """
    確率的Morris-LecarモデルのEuler-Maruyamaステッパー

    ノイズはwの方程式にのみ入ります。wが(0,1)から出た場合は
    boundary_policyに従って戻し、その回数をboundary_eventsに数えます。

    Example:
        >>> stepper = MLStepper(params, eq, dt=0.01, rng=replicate_rng(1, 0))
        >>> for t, v, w in stepper.run(1000):
        ...     pass
    """

    def __init__(
        self,
        params: MLParameters,
        x0: State2,
        dt: float,
        rng: np.random.Generator,
        boundary_policy: BoundaryPolicy = BoundaryPolicy.REFLECT,
    ):
        """
        Args:
            params: モデルパラメータ
            x0: 初期状態（wは(0,1)の内部）
            dt: 時間刻み（ms）
            rng: 乱数生成器
            boundary_policy: w境界の処理方法

        Raises:
            InvalidConfig: dtが正でない、または初期状態のwが(0,1)の外
        """
        if not dt > 0:
            raise InvalidConfig(f"dtは正の値である必要があります: {dt}")
        if not 0.0 < x0[1] < 1.0:
            raise InvalidConfig(f"初期状態のwは(0,1)の内部である必要があります: {x0[1]}")
        self.params = params
        self.dt = dt
        self.rng = rng
        self.boundary_policy = boundary_policy
        self.v = float(x0[0])
        self.w = float(x0[1])
        self.steps = 0
        self.boundary_events = 0
        self._kernel = step_kernel(params)
        self._sqrt_dt = math.sqrt(dt)
        self._noise = np.empty(0)
        self._cursor = 0

    @property
    def t(self) -> float:
        """経過時間（ms）"""
        return self.steps * self.dt

    @property
    def state(self) -> State2:
        """現在の状態"""
        return State2(self.v, self.w)

    def _next_normal(self) -> float:
        if self._cursor >= len(self._noise):
            self._noise = self.rng.standard_normal(NOISE_BLOCK)
            self._cursor = 0
        z = self._noise[self._cursor]
        self._cursor += 1
        return z

    def _apply_boundary(self, w: float) -> float:
        self.boundary_events += 1
        lo, hi = BOUNDARY_EPS, 1.0 - BOUNDARY_EPS
        if self.boundary_policy is BoundaryPolicy.REFLECT:
            w = 2.0 * lo - w if w < lo else 2.0 * hi - w
        # 鏡映で反対側を越えた場合も区間内に収める
        return min(max(w, lo), hi)

    def step(self) -> State2:
        """1ステップ進めて新しい状態を返す"""
        dv, dw, g = self._kernel(self.v, self.w)
        z = self._next_normal()
        v = self.v + dv * self.dt
        w = self.w + dw * self.dt + g * self._sqrt_dt * z
        if not BOUNDARY_EPS <= w <= 1.0 - BOUNDARY_EPS:
            w = self._apply_boundary(w)
        self.v, self.w = v, w
        self.steps += 1
        return State2(v, w)

    def run(self, n_steps: int) -> Iterator[Tuple[float, float, float]]:
        """n_stepsだけ進めながら (t, v, w) を返す"""
        for _ in range(n_steps):
            v, w = self.step()
            yield self.t, v, w


def simulate_ml(
    params: MLParameters,
    x0: State2,
    cfg: SimConfig,
    rng: Optional[np.random.Generator] = None,
) -> Path:
    """
    確率的Morris-LecarモデルのパスをEuler-Maruyama法で生成

    Args:
        params: モデルパラメータ
        x0: 初期状態（wは(0,1)の内部）
        cfg: シミュレーション設定（record_strideステップごとに記録）
        rng: 乱数生成器（未指定なら cfg.seed から派生）

    Returns:
        記録間隔 dt·record_stride のパス（初期状態を含む）

    Raises:
        InvalidConfig: 初期状態が不正な場合
    """
    rng = rng if rng is not None else replicate_rng(cfg.seed)
    stepper = MLStepper(params, x0, cfg.dt, rng, cfg.boundary_policy)
    stride = cfg.record_stride
    n_steps = cfg.n_steps
    states = np.empty((n_steps // stride + 1, 2))
    states[0] = (stepper.v, stepper.w)
    row = 1
    for k in range(1, n_steps + 1):
        v, w = stepper.step()
        if k % stride == 0:
            states[row] = (v, w)
            row += 1

    if stepper.boundary_events:
        logger.debug("boundary_events", count=stepper.boundary_events, policy=cfg.boundary_policy.value)
    return Path(dt=cfg.dt * stride, t0=0.0, states=states[:row])


def detect_spike(path: Path, v_threshold: float = 0.0) -> Optional[float]:
    """
    最初の発火時刻を検出

    v(t-dt) < 閾値 ≤ v(t) となる最初のステップ内で線形補間します。

    Args:
        path: パス
        v_threshold: 発火閾値（mV）

    Returns:
        発火時刻（ms）。交差がない場合はNone
    """
    v = path.v
    crossings = np.flatnonzero((v[:-1] < v_threshold) & (v[1:] >= v_threshold))
    if len(crossings) == 0:
        return None
    i = int(crossings[0])
    frac = (v_threshold - v[i]) / (v[i + 1] - v[i])
    return float(path.t0 + (i + frac) * path.dt)


def simulate_until_spike(
    params: MLParameters,
    x0: State2,
    cfg: SimConfig,
    rng: np.random.Generator,
    v_threshold: float = 0.0,
) -> Tuple[float, bool]:
    """
    発火するまで時間発展させる

    Args:
        params: モデルパラメータ
        x0: 初期状態
        cfg: シミュレーション設定
        rng: 乱数生成器
        v_threshold: 発火閾値（mV）

    Returns:
        (発火時刻 ms, 打ち切りフラグ)。t_maxまで発火しなければ (t_max, True)
    """
    stepper = MLStepper(params, x0, cfg.dt, rng, cfg.boundary_policy)
    v_prev = stepper.v
    for _ in range(cfg.n_steps):
        v, _w = stepper.step()
        if v_prev < v_threshold <= v:
            frac = (v_threshold - v_prev) / (v - v_prev)
            return (stepper.steps - 1 + frac) * cfg.dt, False
        v_prev = v
    return cfg.n_steps * cfg.dt, True


def simulate_isi_replicate(
    params: MLParameters,
    cfg: SimConfig,
    index: int,
    eq: Optional[State2] = None,
) -> Tuple[float, bool]:
    """
    ISIの複製を1つ生成（ワーカーの処理単位）

    平衡点から開始し、発火までの時間を返します。
    乱数は replicate_rng(cfg.seed, index) から派生します。

    Returns:
        (発火時刻 ms, 打ち切りフラグ)
    """
    if eq is None:
        eq = equilibrium(params)
    return simulate_until_spike(params, eq, cfg, replicate_rng(cfg.seed, index))


def simulate_isi_ml(
    params: MLParameters,
    n: int,
    cfg: SimConfig,
    eq: Optional[State2] = None,
    start_index: int = 0,
) -> ISISample:
    """
    確率的Morris-LecarモデルのISIサンプルを生成

    各複製は平衡点から始まる独立なパスで、発火後は平衡点にリセットされます。

    Args:
        params: モデルパラメータ
        n: 複製数
        cfg: シミュレーション設定
        eq: 平衡点（未指定なら計算する）
        start_index: 最初の複製番号

    Returns:
        ISIサンプル（t_maxまで発火しない複製は打ち切り）
    """
    if n < 1:
        raise InvalidConfig(f"複製数は1以上である必要があります: {n}")
    if eq is None:
        eq = equilibrium(params)
    results = [simulate_isi_replicate(params, cfg, start_index + i, eq) for i in range(n)]
    return assemble_ml_sample(params, cfg, results)


def assemble_ml_sample(
    params: MLParameters,
    cfg: SimConfig,
    results: Sequence[Tuple[float, bool]],
) -> ISISample:
    """複製番号順の (発火時刻, 打ち切り) をISIサンプルにまとめる"""
    sample = ISISample(
        times=np.array([t for t, _ in results]),
        censored=np.array([c for _, c in results]),
        model_tag="ml",
        seed=cfg.seed,
        metadata={"sigma_star": params.sigma_star, "dt": cfg.dt, "t_max": cfg.t_max},
    )
    if sample.n_censored:
        logger.info("censored_replicates", model="ml", count=sample.n_censored, t_max=cfg.t_max)
    return sample


def _centered(path: Path, eq: State2) -> Path:
    return Path(
        dt=path.dt,
        t0=path.t0,
        states=path.states - np.array([eq.v, eq.w]),
        columns=("x1", "x2"),
    )


def extract_quiescent_segments(
    path: Path,
    min_len: float,
    eq: State2,
    v_threshold: float = 0.0,
    restart_tolerance: float = 1.0,
) -> List[Path]:
    """
    閾値下のゆらぎだけからなる部分パスを抽出

    最初のセグメントはパスの先頭から始まり、発火後のセグメントは
    vが平衡点から restart_tolerance mV 以内に戻った最初の点から始まります。

    Args:
        path: Morris-Lecarモデルのパス
        min_len: セグメントの最短長（ms）
        eq: 平衡点（中心化に使用）
        v_threshold: 発火閾値（mV）
        restart_tolerance: 再開判定の許容幅（mV）

    Returns:
        (V_eq, W_eq) を引いて中心化したセグメントのリスト
    """
    if not min_len > 0:
        raise InvalidConfig(f"min_lenは正である必要があります: {min_len}")
    v = path.v
    above = v >= v_threshold
    near_rest = (~above) & (np.abs(v - eq.v) <= restart_tolerance)
    n = len(v)
    segments: List[Path] = []
    start = 0
    while start < n:
        hits = np.flatnonzero(above[start:])
        stop = start + int(hits[0]) if len(hits) else n
        if stop - start >= 2 and (stop - start - 1) * path.dt >= min_len:
            segments.append(_centered(path.slice(start, stop), eq))
        if stop >= n:
            break
        restart = np.flatnonzero(near_rest[stop:])
        if len(restart) == 0:
            break
        start = stop + int(restart[0])
    return segments


def quiescent_attempt(
    params: MLParameters,
    eq: State2,
    min_len: float,
    cfg: SimConfig,
    attempt: int,
    v_threshold: float = 0.0,
) -> Optional[Path]:
    """
    平衡点から min_len の間発火しなければ中心化したパスを返す（ワーカーの処理単位）

    試行番号 attempt は replicate_rng(cfg.seed, attempt) を決めます。
    発火した時点で打ち切り、Noneを返します。
    """
    stepper = MLStepper(params, eq, cfg.dt, replicate_rng(cfg.seed, attempt), cfg.boundary_policy)
    stride = cfg.record_stride
    n_steps = int(math.ceil(min_len / (cfg.dt * stride) - 1e-9)) * stride
    states = [(eq.v, eq.w)]
    for k in range(1, n_steps + 1):
        v, w = stepper.step()
        if v >= v_threshold:
            return None
        if k % stride == 0:
            states.append((v, w))
    return _centered(Path(dt=cfg.dt * stride, t0=0.0, states=np.array(states)), eq)


def collect_quiescent_segments(
    params: MLParameters,
    n_segments: int,
    min_len: float,
    cfg: SimConfig,
    eq: Optional[State2] = None,
    max_attempts: Optional[int] = None,
    v_threshold: float = 0.0,
) -> List[Path]:
    """
    平衡点から始めて min_len の間発火しなかったパスを集める

    試行は番号順に行い、成功した最初の n_segments 本を返します。

    Args:
        params: モデルパラメータ
        n_segments: 必要なセグメント数
        min_len: セグメント長（ms）
        cfg: シミュレーション設定（dt, seed, record_strideを使用）
        eq: 平衡点（未指定なら計算する）
        max_attempts: 試行回数の上限（既定は 50·n_segments）
        v_threshold: 発火閾値（mV）

    Returns:
        中心化されたセグメントのリスト（長さ n_segments）

    Raises:
        InsufficientSegments: 上限までに必要数が集まらない場合
    """
    if eq is None:
        eq = equilibrium(params)
    max_attempts = max_attempts or 50 * n_segments
    segments: List[Path] = []
    attempt = 0
    while len(segments) < n_segments and attempt < max_attempts:
        segment = quiescent_attempt(params, eq, min_len, cfg, attempt, v_threshold)
        attempt += 1
        if segment is not None:
            segments.append(segment)

    if len(segments) < n_segments:
        raise InsufficientSegments(
            f"{max_attempts}回の試行で閾値下セグメントが{len(segments)}本しか得られませんでした"
            f"（必要数 {n_segments}）"
        )
    logger.debug("quiescent_segments", count=len(segments), attempts=attempt, min_len=min_len)
    return segments


def simulate_linear(
    M: np.ndarray,
    G: np.ndarray,
    x0: Sequence[float],
    cfg: SimConfig,
    rng: Optional[np.random.Generator] = None,
) -> Path:
    """
    線形SDE dX = MX dt + G dB のEuler-Maruyama法によるパス

    Args:
        M: ドリフト行列（2×2）
        G: 拡散行列（2×2）
        x0: 初期値
        cfg: シミュレーション設定
        rng: 乱数生成器（未指定なら cfg.seed から派生）

    Returns:
        列名 (x1, x2) のパス
    """
    rng = rng if rng is not None else replicate_rng(cfg.seed)
    n_steps = cfg.n_steps
    stride = cfg.record_stride
    increments = rng.standard_normal((n_steps, 2)) @ (np.asarray(G, dtype=float).T * math.sqrt(cfg.dt))
    step_matrix = np.eye(2) + np.asarray(M, dtype=float) * cfg.dt
    (a11, a12), (a21, a22) = step_matrix
    x1, x2 = float(x0[0]), float(x0[1])
    states = np.empty((n_steps // stride + 1, 2))
    states[0] = (x1, x2)
    row = 1
    for k in range(n_steps):
        x1, x2 = a11 * x1 + a12 * x2 + increments[k, 0], a21 * x1 + a22 * x2 + increments[k, 1]
        if (k + 1) % stride == 0:
            states[row] = (x1, x2)
            row += 1
    return Path(dt=cfg.dt * stride, t0=0.0, states=states[:row], columns=("x1", "x2"))


def linear_em_endpoints(
    M: np.ndarray,
    G: np.ndarray,
    x0: Sequence[float],
    t: float,
    dt: float,
    n: int,
    seed: int,
) -> np.ndarray:
    """
    線形SDEの時刻tでの値をn複製まとめてEuler-Maruyama法で生成

    Returns:
        形状 (n, 2) の配列
    """
    rng = replicate_rng(seed)
    n_steps = int(round(t / dt))
    step_matrix_t = (np.eye(2) + np.asarray(M, dtype=float) * dt).T
    noise_t = np.asarray(G, dtype=float).T * math.sqrt(dt)
    x = np.tile(np.asarray(x0, dtype=float), (n, 1))
    for _ in range(n_steps):
        x = x @ step_matrix_t + rng.standard_normal((n, 2)) @ noise_t
    return x


def linear_covariance(M: np.ndarray, G: np.ndarray, t: float) -> np.ndarray:
    """
    線形SDEの時刻tでの共分散 ∫₀ᵗ e^{Ms}GGᵀe^{Mᵀs} ds

    Van Loanのブロック行列指数関数で評価します。
    """
    M = np.asarray(M, dtype=float)
    G = np.asarray(G, dtype=float)
    block = np.zeros((4, 4))
    block[:2, :2] = -M
    block[:2, 2:] = G @ G.T
    block[2:, 2:] = M.T
    F = expm(block * t)
    transition = F[2:, 2:].T
    return transition @ F[:2, 2:]
