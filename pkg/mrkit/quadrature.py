"""
一维求积
自适应部分交给 scipy.integrate.quad，这里负责区间切分、断点分配与发散检测
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .exceptions import ArgumentError

logger = logging.getLogger(__name__)

# 截断层数与每层向端点推进的二进位数
CUTOFF_LEVELS = 4
CUTOFF_BITS = 8
# 判定发散时的增长比例与连续次数
DIVERGENCE_GROWTH = 1.1
DIVERGENCE_STREAK = 3
# quad 每个子区间的求值次数（21 点 Kronrod）与子区间下限
KRONROD_NODES = 21
MIN_SUBINTERVALS = 10


@dataclass
class QuadratureResult:
    """求积结果"""

    value: float
    error: float
    nodes: int
    diverged: bool
    cutoffs: List[float] = field(default_factory=list)


class EndpointSubstitution:
    """把 [lo, hi]（允许无穷）映到 t ∈ [0, 1]，有限端点附近按 sin² 加密；用于 CDF 表的取点"""

    def __init__(self, lo: float, hi: float):
        if not hi > lo:
            raise ArgumentError("积分区间必须满足 lo < hi")
        self.lo, self.hi = float(lo), float(hi)
        self.kind = ("finite" if math.isfinite(lo) else "inf") + "-" + ("finite" if math.isfinite(hi) else "inf")

    def x(self, t: np.ndarray) -> np.ndarray:
        half = np.pi * t / 2
        if self.kind == "finite-finite":
            width = self.hi - self.lo
            return np.where(t <= 0.5, self.lo + width * np.sin(half) ** 2, self.hi - width * np.cos(half) ** 2)
        if self.kind == "finite-inf":
            return self.lo + np.tan(half) ** 2
        if self.kind == "inf-finite":
            return self.hi - np.tan(np.pi * (1 - t) / 2) ** 2
        return np.tan(np.pi * (t - 0.5))


def _ladder(lo: float, hi: float) -> Tuple[List[float], List[float]]:
    """
    逐层逼近两端的截断点

    有限端点按 2^{-8k}（两端都有限时乘区间宽度）靠近，无穷端点按 2^{8k} 外推
    """
    levels = range(1, CUTOFF_LEVELS + 1)
    if math.isfinite(lo) and math.isfinite(hi):
        width = hi - lo
        return [lo + width * 2.0 ** (-CUTOFF_BITS * k) for k in levels], [hi - width * 2.0 ** (-CUTOFF_BITS * k) for k in levels]
    anchor = lo if math.isfinite(lo) else hi if math.isfinite(hi) else 0.0
    reach = [max(1.0, abs(anchor)) * 2.0 ** (CUTOFF_BITS * k) for k in levels]
    if math.isfinite(lo):
        left = [lo + 2.0 ** (-CUTOFF_BITS * k) for k in levels]
    else:
        left = [anchor - r for r in reach]
    if math.isfinite(hi):
        right = [hi - 2.0 ** (-CUTOFF_BITS * k) for k in levels]
    else:
        right = [anchor + r for r in reach]
    return left, right


def _quad_piece(scalar, a: float, b: float, breakpoints: Sequence[float], limit: int, rel_tol: float, abs_tol: float) -> Tuple[float, float, int]:
    if not b > a:
        return 0.0, 0.0, 0
    inner = [p for p in breakpoints if a < p < b]
    kwargs = {"epsabs": abs_tol, "epsrel": rel_tol, "limit": limit + len(inner), "full_output": 1}
    # quad 只在有限区间上接受断点
    if inner and math.isfinite(a) and math.isfinite(b):
        kwargs["points"] = inner
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        out = quad(scalar, a, b, **kwargs)
    return float(out[0]), float(out[1]), int(out[2]["neval"])


def _diverging(cutoffs: Sequence[float]) -> bool:
    streak = 0
    for prev, cur in zip(cutoffs, cutoffs[1:]):
        if abs(cur) > DIVERGENCE_GROWTH * abs(prev) and abs(cur - prev) > 1e-8:
            streak += 1
            if streak >= DIVERGENCE_STREAK:
                return True
        else:
            streak = 0
    return False


def integrate_interval(
    func: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    breakpoints: Sequence[float] = (),
    max_nodes: int = 100_000,
    rel_tol: float = 1e-10,
    abs_tol: float = 1e-13,
    detect_divergence: bool = True,
) -> QuadratureResult:
    """
    计算 ∫_lo^hi func(x) dx

    区间按逐层逼近端点的截断点切成核心段、若干壳层和两个端段，各段分别交给 quad，
    截断积分序列 cutoffs 即核心段依次并上壳层后的部分和。

    Args:
        func: 对一维数组向量化的被积函数
        lo: 下限，可为 -inf
        hi: 上限，可为 +inf
        breakpoints: 被积函数的间断点，传给 quad 的 points
        max_nodes: 求值预算，折算成每段的子区间上限
        rel_tol: 相对误差目标
        abs_tol: 绝对误差目标
        detect_divergence: 为 False 时整段一次求积，不做截断序列

    Returns:
        QuadratureResult；截断序列连续三级增长超过 10% 时 diverged 为 True

    Raises:
        ArgumentError: 预算不足或区间为空
    """
    if max_nodes < 100:
        raise ArgumentError("求积预算不能少于 100 个节点")
    if not hi > lo:
        raise ArgumentError("积分区间必须满足 lo < hi")
    lo, hi = float(lo), float(hi)
    breakpoints = sorted({float(p) for p in breakpoints if lo < p < hi})

    def scalar(x: float) -> float:
        return float(np.asarray(func(np.array([x], dtype=float)), dtype=float).reshape(-1)[0])

    if not detect_divergence:
        limit = max(MIN_SUBINTERVALS, max_nodes // KRONROD_NODES)
        value, error, nodes = _quad_piece(scalar, lo, hi, breakpoints, limit, rel_tol, abs_tol)
        return QuadratureResult(value, error, nodes, not math.isfinite(value), [])

    left, right = _ladder(lo, hi)
    pieces = 2 * CUTOFF_LEVELS + 1
    limit = max(MIN_SUBINTERVALS, max_nodes // (KRONROD_NODES * pieces))

    value, error, used = _quad_piece(scalar, left[0], right[0], breakpoints, limit, rel_tol, abs_tol)
    cutoffs = [value]
    for k in range(1, CUTOFF_LEVELS):
        for a, b in ((left[k], left[k - 1]), (right[k - 1], right[k])):
            v, e, n = _quad_piece(scalar, a, b, breakpoints, limit, rel_tol, abs_tol)
            value, error, used = value + v, error + e, used + n
        cutoffs.append(value)
    for a, b in ((lo, left[-1]), (right[-1], hi)):
        v, e, n = _quad_piece(scalar, a, b, breakpoints, limit, rel_tol, abs_tol)
        value, error, used = value + v, error + e, used + n

    if not (math.isfinite(value) and all(math.isfinite(c) for c in cutoffs)):
        logger.warning("被积函数在求积节点处取到非有限值")
        return QuadratureResult(float("nan"), float("inf"), used, True, cutoffs)

    diverged = _diverging(cutoffs)
    if diverged:
        logger.info("检测到积分发散: 截断序列 %s", cutoffs)
    return QuadratureResult(value, error, used, diverged, cutoffs)
