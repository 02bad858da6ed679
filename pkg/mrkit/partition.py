"""
自适应分划模块
正则层级 A_s、尺度 ε_s 与 l₁ 约束、盒子分划 𝒫_n^{(l)} 的构造与查找、分划熵及其上界
"""

import dataclasses
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import ArgumentError, DomainError, EscapeError
from .geometry import BoxElement, ChartDomain, CustomMetric, RegularityProfile, box_tolerance, default_c01, separated_net, subdivide_box
from .measure import InvariantMeasure
from .settings import Settings
from .streams import StreamKeys, chunked_map
from .system import SmoothSystem, spectral_norms

logger = logging.getLogger(__name__)

# 截断与未覆盖两个合法符号
TRUNCATED = "truncated"
UNCOVERED = "uncovered"
TRUNCATED_CODE = -1
UNCOVERED_CODE = -2

# 层级取整的容差
LEVEL_SLACK = 1e-9
MIN_SAMPLE_BUDGET = 10_000

CellId = Union[Tuple[int, int, Optional[int]], str]


@dataclass(frozen=True)
class LevelParams:
    """
    分划参数：g = f^m，基准层 n，尺度指数 l₁，细分层 l，计算截断层 s_max
    """

    m: int
    n: int
    l1: int
    l: int
    b: float
    alpha: float
    C: float
    a: float
    s_max: int
    C01: Optional[float] = None

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ArgumentError("m 与 n 必须为正整数")
        if self.l < 0:
            raise ArgumentError("细分层数 l 不能为负")
        if self.b < 1:
            raise ArgumentError("b 不能小于 1")
        if self.s_max < self.n:
            raise ArgumentError("s_max 不能小于 n")

    def epsilon(self, s: int, d: int) -> float:
        """ε_s = 1/(√d·2^{s·l₁})"""
        return 1.0 / (math.sqrt(d) * 2.0 ** (s * self.l1))

    def c01(self, d: int) -> float:
        return float(self.C01) if self.C01 is not None else float(default_c01(self.b, d))

    def c0(self, d: int) -> float:
        """C₀ = C₀,₁·⌈4√d⌉^d"""
        return self.c01(d) * math.ceil(4 * math.sqrt(d)) ** d

    def log_cell_bound(self, s: int, d: int) -> float:
        """log(C₀·2^{s(1+l₁d)+l·d})"""
        return math.log(self.c0(d)) + (s * (1 + self.l1 * d) + self.l * d) * math.log(2.0)

    def replace(self, **changes) -> "LevelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


# ---- 层级 ----

PENALTY_NAMES = ("prodDf", "prodD", "prodRho", "prodN")


def penalty_logs(sys: SmoothSystem, profile: RegularityProfile, points: np.ndarray) -> np.ndarray:
    """
    每点的四个以 2 为底的惩罚对数 (k, 4)：
    log₂‖D f‖*、−log₂ d_*、−log₂ ρ_b、log₂ N_b；非有限点为 nan
    """
    pts = np.atleast_2d(points)
    out = np.full((len(pts), 4), np.nan)
    ok = np.all(np.isfinite(pts), axis=1)
    if not ok.any():
        return out
    p = pts[ok]
    with np.errstate(divide="ignore"):
        out[ok, 0] = np.log2(np.maximum(spectral_norms(sys.jacobians(p)), 1.0))
        out[ok, 1] = -np.log2(np.minimum(sys.domain.d0_values(p), 1.0))
        out[ok, 2] = -np.log2(np.asarray(profile.rho_sublevel(p), dtype=float))
        out[ok, 3] = np.log2(np.asarray(profile.tankage(p), dtype=float))
    return out


def window_sums(logs: np.ndarray, m: int) -> np.ndarray:
    """沿时间轴长度为 m 的窗口和，逐项顺序相加：(T, k, 4) → (T−m+1, k, 4)"""
    count = logs.shape[0] - m + 1
    total = logs[0:count].copy()
    for j in range(1, m):
        total = total + logs[j : j + count]
    return total


def levels_from_sums(sums: np.ndarray) -> np.ndarray:
    """s = ⌈max 惩罚⌉，下截到 0；含 nan 的记为 -1"""
    worst = np.max(sums, axis=-1)
    bad = np.isnan(worst)
    worst = np.where(bad, 0.0, np.minimum(worst, float(np.iinfo(np.int32).max)))
    level = np.maximum(np.ceil(worst - LEVEL_SLACK), 0).astype(np.int64)
    return np.where(bad, -1, level)


def orbit_levels(sys: SmoothSystem, profile: RegularityProfile, orbit: np.ndarray, m: int) -> np.ndarray:
    """沿轨道数组 (T+m, k, d) 逐时刻的层级 (T+1, k)；轨道中的 nan 给出 -1"""
    T1, k, d = orbit.shape
    logs = penalty_logs(sys, profile, orbit[: T1 - 1].reshape(-1, d)).reshape(T1 - 1, k, 4)
    tail_ok = np.all(np.isfinite(orbit[m:]), axis=-1)
    levels = levels_from_sums(window_sums(logs, m))
    return np.where(tail_ok, levels, -1)


@dataclass
class LevelProducts:
    """沿 m 步轨道的四个乘积，以及它们的以 2 为底对数"""

    prodDf: float
    prodD: float
    prodRho: float
    prodN: float
    log2: Dict[str, float] = field(default_factory=dict)

    @property
    def level(self) -> int:
        worst = max(self.log2["prodDf"], -self.log2["prodD"], -self.log2["prodRho"], self.log2["prodN"])
        return max(0, int(math.ceil(worst - LEVEL_SLACK)))


def _single_orbit(sys: SmoothSystem, x, m: int) -> np.ndarray:
    orbit, escaped_at = sys.trajectory(sys.domain.points(x)[:1], m)
    if escaped_at[0] >= 0:
        raise EscapeError(int(escaped_at[0]), f"层级计算中轨道在第 {escaped_at[0]} 步逃逸")
    return orbit


def level_products(sys: SmoothSystem, profile: RegularityProfile, x, m: int) -> LevelProducts:
    """
    Π‖D_{f^j x} f‖*、Π d_*(f^j x)、Π ρ_b(f^j x)、Π N_b(f^j x)，j = 0..m−1，在对数空间计算

    Raises:
        EscapeError: m 步轨道离开 U
    """
    if m < 1:
        raise ArgumentError("m 必须为正整数")
    orbit = _single_orbit(sys, x, m)
    logs = window_sums(penalty_logs(sys, profile, orbit[:m, 0]).reshape(m, 1, 4), m)[0, 0]
    log2 = {"prodDf": float(logs[0]), "prodD": float(-logs[1]), "prodRho": float(-logs[2]), "prodN": float(logs[3])}
    return LevelProducts(*(float(2.0 ** log2[name]) for name in PENALTY_NAMES), log2=log2)


def level_of(sys: SmoothSystem, profile: RegularityProfile, x, m: int) -> int:
    """满足 x ∈ A_s 的最小 s"""
    return level_products(sys, profile, x, m).level


def classify_levels(sys: SmoothSystem, profile: RegularityProfile, points: np.ndarray, m: int) -> np.ndarray:
    """批量层级（未截断、未下截到 n）；m 步内逃逸的点为 -1"""
    orbit, _ = sys.trajectory(points, m)
    return orbit_levels(sys, profile, orbit, m)[0]


# ---- l₁ 与 l 的约束 ----

@dataclass
class ConstraintCheck:
    """约束检验：是否通过、首个违反的约束序号及见证，以及搜索得到的最小可行值"""

    ok: bool
    violated: Optional[int] = None
    witness_n: Optional[int] = None
    minimal: Optional[int] = None
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _l1_violation(l1: int, m: int, a: float, alpha: float, C: float, d: int, n_check: int) -> Tuple[Optional[int], Optional[int]]:
    if not l1 > a:
        return 1, None
    slack2 = 1 + math.log2(math.sqrt(d))
    target3 = math.log2(2.0 ** (1.0 / m) - 1.0)
    log2C = math.log2(C)
    for n in range(1, n_check + 1):
        gap = n * (l1 - 2 * m)
        if not gap > n + slack2:
            return 2, n
        if not log2C - alpha * gap + a * n < target3:
            return 3, n
    return None, None


def check_l1(params: LevelParams, d: int, n_check: int = 64, l1_max: int = 128) -> ConstraintCheck:
    """
    l₁ > a；2^{−n(l₁−2m)} < 1/(√d·2^{n+1})；C·2^{−αn(l₁−2m)}·2^{an} < 2^{1/m} − 1，n = 1..n_check

    同时按递增搜索给出最小可行 l₁（找不到为 None）
    """
    if d < 1:
        raise ArgumentError("维数必须为正整数")
    violated, witness = _l1_violation(params.l1, params.m, params.a, params.alpha, params.C, d, n_check)
    minimal = next(
        (
            candidate
            for candidate in range(1, l1_max + 1)
            if _l1_violation(candidate, params.m, params.a, params.alpha, params.C, d, n_check)[0] is None
        ),
        None,
    )
    return ConstraintCheck(violated is None, violated, witness, minimal, {"n_check": n_check, "l1_max": l1_max})


def _l_violation(l: int, m: int, L: float, alpha: float, C: float, a: float) -> Optional[int]:
    E = l - 2 - m * (L + 1)
    if not -E < math.log2(min(1 - 2.0 ** (-1.0 / m), 2.0 ** (-1 - 1.0 / m))) - L:
        return 1
    if not -alpha * E + math.log2(C) + a * L < math.log2(2.0 ** (1.0 / m) - 1.0):
        return 2
    return None


def check_l(params: LevelParams, L: float, l_max: int = 4096) -> ConstraintCheck:
    """
    细分层 l 的可行性：记 E = l − 2 − m(L+1)，
    2^{−E} < min{1 − 2^{−1/m}, 2^{−1−1/m}}·2^{−L} 且 C·2^{−αE}·2^{aL} < 2^{1/m} − 1
    """
    violated = _l_violation(params.l, params.m, L, params.alpha, params.C, params.a)
    minimal = next(
        (l for l in range(0, l_max + 1) if _l_violation(l, params.m, L, params.alpha, params.C, params.a) is None),
        None,
    )
    return ConstraintCheck(violated is None, violated, None, minimal, {"L": L})


# ---- 分划 ----

@dataclass
class LevelNet:
    """第 s 层的 ε_s-网与立方体"""

    level: int
    eps: float
    anchors: np.ndarray
    frames: np.ndarray
    n_samples: int
    tree: Optional[cKDTree] = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return len(self.anchors)

    def cube(self, i: int) -> BoxElement:
        return BoxElement.cube(self.anchors[i], self.eps, self.frames[i], self.level, i)


def _frames(domain: ChartDomain, anchors: np.ndarray) -> np.ndarray:
    if not isinstance(domain.metric, CustomMetric):
        return np.repeat(np.eye(domain.dim)[None, :, :], len(anchors), axis=0)
    return np.stack([domain.metric.frame(anchor) for anchor in anchors]) if len(anchors) else np.empty((0, domain.dim, domain.dim))


def overlap_bound(b: float, d: int) -> int:
    """半径 √d·ε_s 的球最多与 (4⌈b·d⌉)^d 个同层立方体相交"""
    return (4 * math.ceil(b * d)) ** d


@dataclass
class OverlapCheck:
    """球与同层立方体相交数的检查；per_level 为每层的最大相交数"""

    ok: bool
    bound: int
    worst: int
    centers: int
    per_level: Dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ok": self.ok,
            "bound": self.bound,
            "worst": self.worst,
            "centers": self.centers,
            "per_level": {str(s): count for s, count in self.per_level.items()},
        }


def _candidate_count(d: int) -> int:
    """半径 √d·ε 球内两两距离 > ε 的点数上界，外加 1"""
    return (2 * math.ceil(math.sqrt(d)) + 1) ** d + 1


class AdaptivePartition:
    """
    𝒫_n^{(l)}：各层网点立方体的 2^{l·d} 细分，按 (s, i, j) 构造顺序先到先得

    只存在于 μ 样本与查询点上；层级由 m 步轨道逐点计算
    """

    def __init__(
        self,
        sys: SmoothSystem,
        profile: RegularityProfile,
        params: LevelParams,
        levels: Dict[int, LevelNet],
        samples: np.ndarray,
        sample_levels: np.ndarray,
        escape_statistics: Optional[Dict[str, Any]] = None,
    ):
        self.sys = sys
        self.profile = profile
        self.params = params
        self.levels = levels
        self.samples = samples
        self.sample_levels = sample_levels
        self.escape_statistics = escape_statistics or {}
        self.dim = sys.dim
        self.cells_per_cube = 2 ** (params.l * self.dim)
        self._offsets: Dict[int, int] = {}
        offset = 0
        for s in sorted(levels):
            self._offsets[s] = offset
            offset += levels[s].size * self.cells_per_cube
        self.n_cells = offset

    @property
    def lookahead(self) -> int:
        return self.params.m

    @property
    def truncation_mass(self) -> float:
        if len(self.sample_levels) == 0:
            return 0.0
        return float(np.mean(self.clip_levels(self.sample_levels) > self.params.s_max))

    def clip_levels(self, raw: np.ndarray) -> np.ndarray:
        """把层级下截到 n；-1（逃逸）保持不变"""
        raw = np.asarray(raw, dtype=np.int64)
        return np.where(raw < 0, raw, np.maximum(raw, self.params.n))

    def classify(self, points: np.ndarray) -> np.ndarray:
        return self.clip_levels(classify_levels(self.sys, self.profile, self.sys.domain.points(points), self.params.m))

    def with_refinement(self, l: int) -> "AdaptivePartition":
        """相同网点、不同细分层的分划"""
        return AdaptivePartition(
            self.sys, self.profile, self.params.replace(l=l), self.levels, self.samples, self.sample_levels, self.escape_statistics
        )

    # ---- 查找 ----

    def _subcube_index(self, u: np.ndarray, eps: float, tol: float) -> np.ndarray:
        side = 2 ** self.params.l
        half = eps / side
        v = u / half
        q = np.ceil((v + side - 2) / 2 - tol / (2 * half))
        q = np.clip(q, 0, side - 1).astype(np.int64)
        j = np.zeros(len(u), dtype=np.int64)
        for axis in range(self.dim):
            j = j * side + q[:, axis]
        return j

    def _lookup_level(self, net: LevelNet, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """返回 (网点序号，子立方体序号)；不被任何立方体包含的点序号为 -1"""
        k = len(points)
        index = np.full(k, -1, dtype=np.int64)
        sub = np.zeros(k, dtype=np.int64)
        if net.size == 0 or k == 0:
            return index, sub
        tol = box_tolerance(net.eps / 2 ** self.params.l)
        metric = self.sys.domain.metric

        if net.tree is None:
            candidates = np.broadcast_to(np.arange(net.size), (k, net.size))
        else:
            K = min(_candidate_count(self.dim), net.size)
            radius = math.sqrt(self.dim) * (net.eps + tol) * (1 + 1e-9) + tol
            _, candidates = net.tree.query(points, k=K, distance_upper_bound=radius)
            candidates = np.asarray(candidates).reshape(k, K)
        valid = candidates < net.size
        safe = np.where(valid, candidates, 0)

        anchors = net.anchors[safe]
        frames = net.frames[safe]
        repeated = np.broadcast_to(points[:, None, :], anchors.shape)
        v = metric.exp_inverse(anchors.reshape(-1, self.dim), repeated.reshape(-1, self.dim)).reshape(anchors.shape)
        u = np.einsum("kcd,kcde->kce", v, frames)
        inside = valid & np.all(np.abs(u) <= net.eps + tol, axis=-1)

        order = np.where(inside, safe, np.iinfo(np.int64).max)
        best = np.argmin(order, axis=1)
        hit = inside[np.arange(k), best]
        index[hit] = safe[np.arange(k), best][hit]
        if hit.any():
            sub[hit] = self._subcube_index(u[np.arange(k), best][hit], net.eps, tol)
        return index, sub

    def codes(self, points: np.ndarray, levels: Optional[np.ndarray] = None) -> np.ndarray:
        """
        整数单元编码；TRUNCATED_CODE 为截断层以外，UNCOVERED_CODE 为逃逸或不被任何立方体包含

        Args:
            points: (k, d) 点集
            levels: 已下截的层级；缺省时逐点计算
        """
        pts = self.sys.domain.points(points)
        levels = self.classify(pts) if levels is None else self.clip_levels(levels)
        out = np.full(len(pts), UNCOVERED_CODE, dtype=np.int64)
        out[levels > self.params.s_max] = TRUNCATED_CODE
        for s, net in self.levels.items():
            mask = levels == s
            if not mask.any():
                continue
            index, sub = self._lookup_level(net, pts[mask])
            codes = np.where(index >= 0, self._offsets[s] + index * self.cells_per_cube + sub, UNCOVERED_CODE)
            out[mask] = codes
        return out

    def orbit_codes(self, orbit: np.ndarray) -> np.ndarray:
        """轨道数组 (T+m+1, k, d) → 前 T+1 个时刻的编码 (T+1, k)"""
        levels = self.clip_levels(orbit_levels(self.sys, self.profile, orbit, self.params.m))
        T1, k = levels.shape
        codes = self.codes(np.nan_to_num(orbit[:T1].reshape(-1, self.dim), nan=0.0), levels.reshape(-1))
        codes = codes.reshape(T1, k)
        return np.where(levels < 0, UNCOVERED_CODE, codes)

    def decode(self, code: int) -> CellId:
        if code == TRUNCATED_CODE:
            return TRUNCATED
        if code < 0:
            return UNCOVERED
        for s in sorted(self._offsets, reverse=True):
            if code >= self._offsets[s]:
                i, j = divmod(int(code - self._offsets[s]), self.cells_per_cube)
                return (s, i, j if self.params.l > 0 else None)
        return UNCOVERED

    def encode(self, cell: Tuple[int, int, Optional[int]]) -> int:
        s, i, j = cell
        if s not in self._offsets or not 0 <= i < self.levels[s].size:
            raise ArgumentError(f"单元 {cell} 不存在")
        return self._offsets[s] + i * self.cells_per_cube + (j or 0)

    def locate(self, x, level: Optional[int] = None) -> CellId:
        """
        单点所在单元 (s, i, j)；l = 0 时 j 为 None；否则返回 TRUNCATED 或 UNCOVERED
        """
        pts = self.sys.domain.points(x)[:1]
        levels = None if level is None else np.array([level])
        return self.decode(int(self.codes(pts, levels)[0]))

    def level_of_code(self, codes: np.ndarray) -> np.ndarray:
        """编码所在层级；截断为 s_max+1，未覆盖为 -1"""
        codes = np.asarray(codes)
        out = np.where(codes == TRUNCATED_CODE, self.params.s_max + 1, -1)
        for s in sorted(self._offsets):
            lo = self._offsets[s]
            hi = lo + self.levels[s].size * self.cells_per_cube
            out = np.where((codes >= lo) & (codes < hi), s, out)
        return out

    # ---- 盒子 ----

    def cubes(self, level: int) -> List[BoxElement]:
        net = self.levels.get(level)
        return [net.cube(i) for i in range(net.size)] if net else []

    def boxes(self, level: int) -> List[BoxElement]:
        """第 level 层的全部单元盒，按构造顺序"""
        cubes = self.cubes(level)
        if self.params.l == 0:
            return cubes
        return [cell for cube in cubes for cell in subdivide_box(cube, self.params.l)]

    def cubes_meeting_ball(self, center, radius: float, level: int) -> np.ndarray:
        """与闭球 B(center, radius) 相交的第 level 层立方体序号"""
        net = self.levels.get(level)
        if net is None or net.size == 0:
            return np.empty(0, dtype=np.int64)
        c = np.asarray(center, dtype=float).reshape(1, -1)
        v = self.sys.domain.metric.exp_inverse(net.anchors, np.repeat(c, net.size, axis=0))
        u = np.einsum("kd,kde->ke", v, net.frames)
        gap = np.linalg.norm(np.maximum(np.abs(u) - net.eps, 0.0), axis=1)
        return np.flatnonzero(gap <= radius + box_tolerance(net.eps))

    def overlap_check(self, max_centers: Optional[int] = None) -> "OverlapCheck":
        """
        以每个第 s 层样本为心、半径 √d·ε_s 的闭球，与第 s 层立方体的相交数不超过 (4⌈b·d⌉)^d

        Args:
            max_centers: 每层最多检查的样本数，缺省逐个检查
        """
        bound = overlap_bound(self.params.b, self.dim)
        clipped = self.clip_levels(self.sample_levels)
        per_level: Dict[int, int] = {}
        checked = 0
        for s, net in sorted(self.levels.items()):
            centers = self.samples[clipped == s]
            if max_centers is not None:
                centers = centers[:max_centers]
            radius = math.sqrt(self.dim) * net.eps
            per_level[s] = max((len(self.cubes_meeting_ball(c, radius, s)) for c in centers), default=0)
            checked += len(centers)
        worst = max(per_level.values(), default=0)
        if worst > bound:
            logger.warning("球与同层立方体相交 %d 个，超过上界 %d", worst, bound)
        return OverlapCheck(worst <= bound, bound, worst, checked, per_level)

    def level_cell_counts(self) -> Dict[int, Dict[str, Any]]:
        """各层网点数、单元数与 C₀·2^{s(1+l₁d)+l·d}"""
        out = {}
        for s, net in sorted(self.levels.items()):
            out[s] = {
                "anchors": net.size,
                "cells": net.size * self.cells_per_cube,
                "samples": net.n_samples,
                "eps": net.eps,
                "log_bound": self.params.log_cell_bound(s, self.dim),
            }
        return out

    def to_dict(self, include_anchors: bool = True) -> Dict[str, Any]:
        levels = {}
        for s, info in self.level_cell_counts().items():
            entry = dict(info)
            if include_anchors:
                entry["anchor_list"] = self.levels[s].anchors.tolist()
            levels[str(s)] = entry
        return {
            "params": self.params.to_dict(),
            "dim": self.dim,
            "n_cells": self.n_cells,
            "n_samples": int(len(self.samples)),
            "truncation_mass": self.truncation_mass,
            "escape_statistics": dict(self.escape_statistics),
            "levels": levels,
        }


def build_partition(
    sys: SmoothSystem,
    mu: InvariantMeasure,
    profile: RegularityProfile,
    params: LevelParams,
    sample_budget: int = MIN_SAMPLE_BUDGET,
    seed: int = 0,
    settings: Optional[Settings] = None,
    workers: int = 1,
) -> AdaptivePartition:
    """
    从 μ 样本构造 𝒫_n^{(l)}

    样本按层级分组（下截到 n），每层在 ε_s 尺度上取字典序贪心网，空层跳过

    Raises:
        ArgumentError: l₁ 约束不满足或样本预算不足
        EscapeError: 超过一半的样本在 m 步内逃逸
    """
    l1_check = check_l1(params, sys.dim)
    if not l1_check.ok:
        raise ArgumentError(f"l₁ = {params.l1} 不满足第 {l1_check.violated} 个约束，最小可行 l₁ 为 {l1_check.minimal}")
    if sample_budget < MIN_SAMPLE_BUDGET:
        raise ArgumentError(f"样本预算不能少于 {MIN_SAMPLE_BUDGET}")
    settings = settings or Settings()
    keys = StreamKeys(seed)
    samples = mu.sample(sample_budget, keys.generator("partition.samples"))

    def classify(chunk, _rng):
        return classify_levels(sys, profile, samples[chunk.start : chunk.stop], params.m)

    raw = np.concatenate(chunked_map(classify, len(samples), keys, "partition.classify", settings.chunk_size, workers))
    escaped = raw < 0
    stats = {"escaped": int(escaped.sum()), "total": int(len(raw)), "fraction": float(escaped.mean())}
    if stats["fraction"] > 0.5:
        raise EscapeError(params.m, "分划样本中超过一半在 m 步内逃逸", stats)

    clipped = np.where(escaped, -1, np.maximum(raw, params.n))
    d = sys.dim
    nets: Dict[int, LevelNet] = {}
    for s in range(params.n, params.s_max + 1):
        members = samples[clipped == s]
        if len(members) == 0:
            continue
        eps = params.epsilon(s, d)
        anchors = separated_net(members, eps, domain=sys.domain)
        use_tree = not (isinstance(sys.domain.metric, CustomMetric))
        tree = cKDTree(anchors, boxsize=sys.domain.metric.boxsize) if use_tree else None
        nets[s] = LevelNet(s, eps, anchors, _frames(sys.domain, anchors), int(len(members)), tree)
        logger.debug("第 %d 层: %d 个样本, %d 个网点, ε = %.3g", s, len(members), len(anchors), eps)

    partition = AdaptivePartition(sys, profile, params, nets, samples, raw, stats)
    logger.info(
        "%s 分划: n=%d, l=%d, %d 层, %d 个单元, 截断质量 %.3g",
        sys.name,
        params.n,
        params.l,
        len(nets),
        partition.n_cells,
        partition.truncation_mass,
    )
    return partition


# ---- 参考分划 ----

class ReferencePartition:
    """
    基准的（生成）参考分划：单位坐标下的二进分划、连分数位、整数部分
    """

    lookahead = 0

    def __init__(self, domain: ChartDomain, kind: str = "dyadic", depth: int = 1, max_digit: int = 2 ** 62):
        if kind not in ("dyadic", "cf_digits", "integer_part"):
            raise ArgumentError(f"未知参考分划: {kind}")
        if kind == "dyadic" and depth < 0:
            raise ArgumentError("二进分划深度不能为负")
        if kind != "dyadic" and domain.dim != 1:
            raise ArgumentError(f"{kind} 分划只支持一维")
        self.domain = domain
        self.kind = kind
        self.depth = depth
        self.max_digit = max_digit

    @classmethod
    def dyadic(cls, domain: ChartDomain, depth: int = 1) -> "ReferencePartition":
        return cls(domain, "dyadic", depth)

    @classmethod
    def cf_digits(cls, domain: ChartDomain, max_digit: int = 2 ** 62) -> "ReferencePartition":
        """x 落在 (1/(k+1), 1/k] 的编号 k = ⌊1/x⌋，大于 max_digit 的位并为一个符号"""
        return cls(domain, "cf_digits", max_digit=max_digit)

    @classmethod
    def integer_part(cls, domain: ChartDomain, max_digit: int = 2 ** 62) -> "ReferencePartition":
        return cls(domain, "integer_part", max_digit=max_digit)

    @property
    def name(self) -> str:
        return f"dyadic({self.depth})" if self.kind == "dyadic" else self.kind

    def codes(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.all(np.isfinite(pts), axis=1)
        ok[ok] = self.domain.contains(pts[ok])
        out = np.full(len(pts), UNCOVERED_CODE, dtype=np.int64)
        if not ok.any():
            return out
        p = pts[ok]
        if self.kind == "dyadic":
            side = 2 ** self.depth
            q = np.clip(np.floor(self.domain.unit_coordinates(p) * side), 0, side - 1).astype(np.int64)
            code = np.zeros(len(p), dtype=np.int64)
            for axis in range(self.domain.dim):
                code = code * side + q[:, axis]
        elif self.kind == "cf_digits":
            code = np.minimum(np.floor(1.0 / p[:, 0]), self.max_digit).astype(np.int64)
        else:
            code = np.minimum(np.floor(p[:, 0]), self.max_digit).astype(np.int64)
        out[ok] = code
        return out

    def orbit_codes(self, orbit: np.ndarray) -> np.ndarray:
        T1, k, d = orbit.shape
        return self.codes(orbit.reshape(-1, d)).reshape(T1, k)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "depth": self.depth, "max_digit": self.max_digit, "name": self.name}


Partition = Union[AdaptivePartition, ReferencePartition]


# ---- 分划熵 ----

def plugin_entropy(codes: Sequence[int]) -> float:
    """−Σ p̂ log p̂（自然对数）"""
    counts = np.array(list(Counter(np.asarray(codes).tolist()).values()), dtype=float)
    if counts.size == 0:
        return 0.0
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


@dataclass
class PartitionEntropy:
    """H_μ(𝒫_n^{(l)}) 的插入估计与截断的上界"""

    entropy: float
    bound: float
    truncation_mass: float
    truncation_correction: float
    level_entropy: float
    level_masses: Dict[int, float]
    n_samples: int

    @property
    def gap(self) -> float:
        """bound + 修正 − entropy，应非负"""
        return self.bound + self.truncation_correction - self.entropy

    def to_dict(self) -> Dict[str, Any]:
        return {
            "entropy": self.entropy,
            "bound": self.bound,
            "gap": self.gap,
            "truncation_mass": self.truncation_mass,
            "truncation_correction": self.truncation_correction,
            "level_entropy": self.level_entropy,
            "level_masses": {str(s): v for s, v in self.level_masses.items()},
            "n_samples": self.n_samples,
        }


def partition_entropy(
    partition: AdaptivePartition,
    mu: Optional[InvariantMeasure] = None,
    sample_budget: Optional[int] = None,
    seed: int = 0,
) -> PartitionEntropy:
    """
    插入熵 −Σ p̂ log p̂ 与 Σ_{s≤s_max} μ̂(E_s) log(C₀·2^{s(1+l₁d)+l·d})

    截断与未覆盖的质量 τ 作为单独符号，上界另加二元熵 h(τ)；
    缺省使用构造分划时的样本

    Raises:
        DomainError: 分划支撑上没有样本
    """
    if mu is None:
        levels = partition.clip_levels(partition.sample_levels)
        codes = partition.codes(partition.samples, levels)
    else:
        budget = sample_budget or len(partition.samples)
        points = mu.sample(budget, StreamKeys(seed).generator("partition.entropy"))
        levels = partition.classify(points)
        codes = partition.codes(points, levels)
    if len(codes) == 0 or np.all(codes < 0):
        raise DomainError("分划支撑上没有样本")

    n = len(codes)
    tau = float(np.mean(codes < 0))
    masses: Dict[int, float] = {}
    bound = 0.0
    for s in range(partition.params.n, partition.params.s_max + 1):
        mass = float(np.sum((levels == s) & (codes >= 0)) / n)
        if mass > 0:
            masses[s] = mass
            bound += mass * partition.params.log_cell_bound(s, partition.dim)
    level_entropy = plugin_entropy(np.where(codes < 0, codes, levels))
    return PartitionEntropy(plugin_entropy(codes), bound, tau, binary_entropy(tau), level_entropy, masses, n)
