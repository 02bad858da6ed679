"""
Lyapunov 谱估计
QR（Benettin）累积、正指数之和的积分以及外幂增长率的积分
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .exceptions import ArgumentError, EscapeError
from .measure import InvariantMeasure
from .settings import Settings
from .streams import StreamKeys, chunked_map
from .system import NEG_INF, SmoothSystem, exterior_log_growth, mgs_qr

logger = logging.getLogger(__name__)

# 累积标架的列范数超出此范围时提前重正交化，防止溢出
_FRAME_CEILING = 1e150
_FRAME_FLOOR = 1e-150
# 逃逸轨道比例超过此值时中止
MAX_ESCAPE_FRACTION = 0.5


@dataclass
class CocycleState:
    """
    一批轨道上的导数余环状态

    frames 为当前（未必正交的）推进标架，log_diagonal_sums 为已累积的 log R_ii
    """

    base_points: np.ndarray
    points: np.ndarray
    frames: np.ndarray
    log_diagonal_sums: np.ndarray
    steps: int = 0
    escaped_at: Optional[np.ndarray] = None

    @classmethod
    def start(cls, points: np.ndarray) -> "CocycleState":
        k, d = points.shape
        return cls(
            base_points=points.copy(),
            points=points.copy(),
            frames=np.repeat(np.eye(d)[None, :, :], k, axis=0),
            log_diagonal_sums=np.zeros((k, d)),
            escaped_at=np.full(k, -1, dtype=np.int64),
        )

    @property
    def alive(self) -> np.ndarray:
        return self.escaped_at < 0

    def reorthonormalize(self) -> np.ndarray:
        """对存活轨道做 QR，返回本次的 log R_ii 增量 (k, d)，逃逸轨道为 0"""
        increment = np.zeros_like(self.log_diagonal_sums)
        ok = self.alive
        if ok.any():
            Q, R = mgs_qr(self.frames[ok])
            with np.errstate(divide="ignore"):
                increment[ok] = np.log(np.diagonal(R, axis1=1, axis2=2))
            self.frames[ok] = Q
            self.log_diagonal_sums += increment
        return increment

    def advance(self, sys: SmoothSystem, rng: Optional[np.random.Generator], last: bool) -> None:
        """推进一步：标架左乘 D f，点走到像点；离开 U（最后一步为离开 M∖∂M）的轨道记为逃逸"""
        ok = np.flatnonzero(self.alive)
        if len(ok) == 0:
            self.steps += 1
            return
        current = self.points[ok]
        self.frames[ok] = sys.jacobians(current) @ self.frames[ok]
        image = sys.step(current, rng)
        inside = sys.domain.contains(image) if last else sys.in_u(image)
        self.steps += 1
        self.escaped_at[ok[~inside]] = self.steps
        self.points[ok[inside]] = image[inside]
        self.points[ok[~inside]] = np.nan

    def frame_out_of_range(self) -> bool:
        ok = self.alive
        if not ok.any():
            return False
        norms = np.linalg.norm(self.frames[ok], axis=1)
        positive = norms[norms > 0]
        return bool(np.any(norms > _FRAME_CEILING) or (positive.size and np.any(positive < _FRAME_FLOOR)))


@dataclass
class SpectrumEstimate:
    """Lyapunov 谱估计，指数降序；-inf 为退化标记"""

    exponents: np.ndarray
    horizon: int
    stderr: np.ndarray
    reorth_every: int = 1

    def __post_init__(self):
        order = np.argsort(-self.exponents, kind="stable")
        self.exponents = np.asarray(self.exponents, dtype=float)[order]
        self.stderr = np.asarray(self.stderr, dtype=float)[order]

    @property
    def positive_sum(self) -> float:
        """Σ max{λ_i, 0}；-inf 不计入"""
        return float(np.sum(np.maximum(self.exponents, 0.0)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "exponents": [e if math.isfinite(e) else "-inf" for e in self.exponents.tolist()],
            "stderr": self.stderr.tolist(),
            "horizon": self.horizon,
            "reorth_every": self.reorth_every,
            "positive_sum": self.positive_sum,
        }


def _burn(sys: SmoothSystem, points: np.ndarray, steps: int, rng) -> np.ndarray:
    """预热；返回逃逸步（未逃逸为 -1），点原地更新"""
    escaped_at = np.full(len(points), -1, dtype=np.int64)
    if steps == 0:
        return escaped_at
    orbit, escaped_at = sys.trajectory(points, steps, rng)
    points[:] = orbit[steps]
    return escaped_at


def spectrum_batch(
    sys: SmoothSystem,
    points: np.ndarray,
    n: int,
    reorth_every: int = 1,
    burn_in: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    blocks: int = 10,
):
    """
    批量 Benettin 累积

    Returns:
        (指数 (k, d)，块均值标准误 (k, d)，逃逸步 (k,))，指数按 QR 对角顺序排列
    """
    if burn_in is None:
        burn_in = Settings().burn_in
    if reorth_every < 1:
        raise ArgumentError("reorth_every 必须为正整数")
    if n < 10 * reorth_every:
        raise ArgumentError("轨道长度必须不少于 10 倍的重正交化间隔")
    pts = sys.domain.points(points).copy()
    burned = _burn(sys, pts, burn_in, rng)

    state = CocycleState.start(pts)
    state.escaped_at = np.where(burned >= 0, burned, -1)
    state.points[burned >= 0] = np.nan
    k, d = pts.shape
    block_len = n // blocks
    block_sums = np.zeros((k, blocks, d))

    for step in range(n):
        state.advance(sys, rng, last=step == n - 1)
        if state.steps % reorth_every == 0 or step == n - 1 or state.frame_out_of_range():
            increment = state.reorthonormalize()
            block = min((state.steps - 1) // block_len, blocks - 1)
            block_sums[:, block] += increment

    escaped_at = state.escaped_at.copy()
    escaped_at[(burned < 0) & (escaped_at >= 0)] += burn_in
    exponents = state.log_diagonal_sums / n
    lengths = np.full(blocks, block_len, dtype=float)
    lengths[-1] = n - block_len * (blocks - 1)
    with np.errstate(invalid="ignore"):
        block_means = block_sums / lengths[None, :, None]
        stderr = np.std(block_means, axis=1, ddof=1) / math.sqrt(blocks)
    stderr = np.where(np.isfinite(stderr), stderr, 0.0)
    exponents[state.escaped_at >= 0] = np.nan
    return exponents, stderr, escaped_at


def spectrum(
    sys: SmoothSystem,
    x,
    n: int,
    reorth_every: int = 1,
    burn_in: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> SpectrumEstimate:
    """
    单条轨道的 Lyapunov 谱

    声明了影子扰动的系统在未给随机流时使用种子 0 的默认流

    Args:
        sys: 系统
        x: 初始点
        n: 轨道长度，至少 10·reorth_every
        reorth_every: 重正交化间隔
        burn_in: 预热步数，缺省取 Settings 的 burn_in
        rng: 随机流

    Raises:
        EscapeError: 轨道离开 U
    """
    if rng is None and sys.jitter > 0:
        rng = StreamKeys(0).generator("lyapunov.spectrum")
    exponents, stderr, escaped_at = spectrum_batch(sys, sys.domain.points(x)[:1], n, reorth_every, burn_in, rng)
    if escaped_at[0] >= 0:
        raise EscapeError(int(escaped_at[0]), f"谱估计轨道在第 {escaped_at[0]} 步逃逸")
    values = np.where(np.isneginf(exponents[0]), NEG_INF, exponents[0])
    return SpectrumEstimate(values, n, stderr[0], reorth_every)


def _escape_statistics(escaped_at: np.ndarray) -> Dict[str, Any]:
    steps = escaped_at[escaped_at >= 0]
    return {
        "escaped": int(len(steps)),
        "total": int(len(escaped_at)),
        "fraction": float(len(steps) / max(len(escaped_at), 1)),
        "first_step": int(steps.min()) if len(steps) else None,
        "median_step": float(np.median(steps)) if len(steps) else None,
    }


def _check_escapes(escaped_at: np.ndarray, what: str) -> Dict[str, Any]:
    stats = _escape_statistics(escaped_at)
    if stats["fraction"] > MAX_ESCAPE_FRACTION:
        raise EscapeError(stats["first_step"], f"{what}: 逃逸轨道比例 {stats['fraction']:.1%} 超过 50%", stats)
    if stats["escaped"]:
        logger.warning("%s: %d/%d 条轨道逃逸，已剔除", what, stats["escaped"], stats["total"])
    return stats


@dataclass
class OrbitAverage:
    """轨道平均的估计值、标准误与逐轨道明细"""

    estimate: float
    stderr: float
    horizon: int
    n_orbits: int
    escape_statistics: Dict[str, Any] = field(default_factory=dict)
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "horizon": self.horizon,
            "n_orbits": self.n_orbits,
            "escape_statistics": dict(self.escape_statistics),
        }


def _mean_and_stderr(values: np.ndarray):
    if len(values) == 0:
        return float("nan"), float("nan")
    stderr = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return float(values.mean()), stderr


def positive_sum_integral(
    sys: SmoothSystem,
    mu: InvariantMeasure,
    horizon: int,
    n_orbits: int,
    seed: int = 0,
    reorth_every: int = 1,
    settings: Optional[Settings] = None,
    workers: int = 1,
) -> OrbitAverage:
    """
    ∫ Σλ_i⁺ dμ：μ 采样初始点上 positive_sum 的平均

    Raises:
        ArgumentError: 轨道数少于 10
        EscapeError: 超过一半的轨道逃逸
    """
    if n_orbits < 10:
        raise ArgumentError("轨道数不能少于 10")
    settings = settings or Settings()
    keys = StreamKeys(seed)

    def run(chunk, rng):
        x0 = mu.sample(len(chunk), rng)
        exponents, _, escaped_at = spectrum_batch(sys, x0, horizon, reorth_every, settings.burn_in, rng)
        return x0, exponents, escaped_at

    parts = chunked_map(run, n_orbits, keys, "lyapunov.positive_sum", settings.chunk_size, workers)
    x0 = np.concatenate([p[0] for p in parts])
    exponents = np.concatenate([p[1] for p in parts])
    escaped_at = np.concatenate([p[2] for p in parts])
    stats = _check_escapes(escaped_at, f"{sys.name} 正指数积分")

    ok = escaped_at < 0
    ordered = -np.sort(-exponents, axis=1)
    positive = np.sum(np.maximum(np.where(np.isneginf(ordered), 0.0, ordered), 0.0), axis=1)
    estimate, stderr = _mean_and_stderr(positive[ok])

    rows = []
    for index in range(len(x0)):
        row: Dict[str, Any] = {"seed": seed, "orbit": index}
        row.update({f"x0_{axis}": float(x0[index, axis]) for axis in range(x0.shape[1])})
        row.update({f"lambda_{i + 1}": float(ordered[index, i]) for i in range(ordered.shape[1])})
        row["positive_sum"] = float(positive[index]) if ok[index] else float("nan")
        row["escaped_at"] = int(escaped_at[index])
        rows.append(row)

    logger.info("%s: ∫Σλ⁺dμ = %.6g ± %.2g（%d 条轨道，长度 %d）", sys.name, estimate, stderr, int(ok.sum()), horizon)
    return OrbitAverage(estimate, stderr, horizon, int(ok.sum()), stats, rows)


def exterior_growth_integral(
    sys: SmoothSystem,
    mu: InvariantMeasure,
    m: int,
    n_samples: int,
    seed: int = 0,
    settings: Optional[Settings] = None,
    workers: int = 1,
) -> OrbitAverage:
    """
    (1/m) ∫ log‖(D_x f^m)^∧‖ dμ 的 Monte Carlo 估计

    Raises:
        ArgumentError: m < 1 或样本数 < 2
        EscapeError: 超过一半的样本逃逸
    """
    if m < 1:
        raise ArgumentError("m 必须为正整数")
    if n_samples < 2:
        raise ArgumentError("样本数不能少于 2")
    settings = settings or Settings()

    def run(chunk, rng):
        return exterior_log_growth(sys, mu.sample(len(chunk), rng), m, rng)

    parts = chunked_map(run, n_samples, StreamKeys(seed), "lyapunov.exterior_growth", settings.chunk_size, workers)
    values = np.concatenate([p[0] for p in parts])
    escaped_at = np.concatenate([p[1] for p in parts])
    stats = _check_escapes(escaped_at, f"{sys.name} 外幂增长积分")
    estimate, stderr = _mean_and_stderr(values[escaped_at < 0] / m)
    logger.info("%s: (1/%d)∫log‖(Df^m)^∧‖dμ = %.6g ± %.2g", sys.name, m, estimate, stderr)
    return OrbitAverage(estimate, stderr, m, int((escaped_at < 0).sum()), stats)
