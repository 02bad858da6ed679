"""
熵估计模块
符号轨道的分块熵、条件熵 H(g⁻¹𝒫 | 𝒫)、I/II 分解诊断以及盒子相交计数
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ArgumentError, DomainError, ResolutionError
from .geometry import BoxElement, subdivide_box
from .measure import InvariantMeasure
from .partition import AdaptivePartition, ConstraintCheck, Partition, check_l
from .settings import Settings
from .streams import StreamKeys, chunked_map
from .system import SmoothSystem, exterior_log_growth, exterior_norm

logger = logging.getLogger(__name__)

# 词数不足不同词数的这么多倍时记为欠采样
UNDERSAMPLING_FACTOR = 10
# s_B 的分位数，作为 L 的替代
L_PERCENTILE = 99.9
# 栅格化候选格子数上限
MAX_GRID_CANDIDATES = 5_000_000


@dataclass
class ItinerarySample:
    """一条符号轨道；逃逸的轨道在逃逸步之后为 UNCOVERED_CODE"""

    start: np.ndarray
    symbols: np.ndarray
    escaped_at: int = -1

    @property
    def length(self) -> int:
        return len(self.symbols)


@dataclass
class Itineraries:
    """一批符号轨道：codes 为 (t, k)，按轨道列存放"""

    starts: np.ndarray
    codes: np.ndarray
    escaped_at: np.ndarray

    def sample(self, index: int) -> ItinerarySample:
        return ItinerarySample(self.starts[index], self.codes[:, index], int(self.escaped_at[index]))

    @property
    def kept(self) -> np.ndarray:
        return self.escaped_at < 0

    def escape_statistics(self) -> Dict[str, Any]:
        escaped = int((~self.kept).sum())
        return {"escaped": escaped, "total": int(len(self.escaped_at)), "fraction": escaped / max(len(self.escaped_at), 1)}


def itineraries(
    sys: SmoothSystem,
    mu: InvariantMeasure,
    partition: Partition,
    t: int,
    n_orbits: int,
    seed: int = 0,
    stage: str = "entropy.itineraries",
    settings: Optional[Settings] = None,
    workers: int = 1,
) -> Itineraries:
    """
    从 μ 采样初始点，生成长度 t 的符号轨道

    自适应分划需要额外向前看 m 步来计算层级
    """
    if t < 1 or n_orbits < 1:
        raise ArgumentError("轨道长度与轨道数必须为正整数")
    settings = settings or Settings()
    steps = t - 1 + partition.lookahead

    def run(chunk, rng):
        x0 = mu.sample(len(chunk), rng)
        orbit, escaped_at = sys.trajectory(x0, steps, rng)
        return x0, partition.orbit_codes(orbit)[:t], escaped_at

    parts = chunked_map(run, n_orbits, StreamKeys(seed), stage, settings.chunk_size, workers)
    starts = np.concatenate([p[0] for p in parts])
    codes = np.concatenate([p[1] for p in parts], axis=1)
    escaped_at = np.concatenate([p[2] for p in parts])
    return Itineraries(starts, codes, escaped_at)


def word_entropy(codes: np.ndarray) -> Tuple[float, int]:
    """(t, k) 的 k 个长度 t 的词的插入熵与不同词数"""
    if codes.shape[1] == 0:
        return 0.0, 0
    _, counts = np.unique(codes.T, axis=0, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p))), int(len(counts))


def conditional_plugin(x: np.ndarray, y: np.ndarray) -> float:
    """H(Y | X) = H(X, Y) − H(X)"""
    joint, _ = word_entropy(np.vstack([x, y]))
    marginal, _ = word_entropy(np.asarray(x)[None, :])
    return max(joint - marginal, 0.0)


def _batches(k: int, count: int) -> List[np.ndarray]:
    return [idx for idx in np.array_split(np.arange(k), count) if len(idx) > 1]


def _batch_stderr(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(len(values)))


@dataclass
class BlockEntropy:
    """分块熵：逐 t 的 H_t、H_t/t、增量，以及斜率估计"""

    rows: List[Dict[str, Any]]
    slope: float
    slope_stderr: float
    slope_t: int
    undersampled: bool
    token_share: float
    n_orbits: int
    escape_statistics: Dict[str, Any] = field(default_factory=dict)
    m: int = 1

    @property
    def rate(self) -> float:
        """每次作用 f 的熵率 slope/m"""
        return self.slope / self.m

    @property
    def rate_stderr(self) -> float:
        return self.slope_stderr / self.m

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rows": [dict(row) for row in self.rows],
            "m": self.m,
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "rate": self.rate,
            "rate_stderr": self.rate_stderr,
            "slope_t": self.slope_t,
            "undersampled": self.undersampled,
            "token_share": self.token_share,
            "n_orbits": self.n_orbits,
            "escape_statistics": dict(self.escape_statistics),
        }


def _block_rows(codes: np.ndarray, t_max: int, m: int = 1) -> List[Dict[str, Any]]:
    """f^m 的第 t 个块符号是 f 的 m 个连续符号"""
    rows = []
    previous = 0.0
    k = codes.shape[1]
    for t in range(1, t_max + 1):
        H, distinct = word_entropy(codes[: m * t])
        rows.append(
            {
                "t": t,
                "H": H,
                "H_per_t": H / t,
                "increment": H - previous,
                "distinct_words": distinct,
                "undersampled": k < UNDERSAMPLING_FACTOR * distinct,
            }
        )
        previous = H
    return rows


def _slope_t(rows: List[Dict[str, Any]]) -> int:
    ok = [row["t"] for row in rows if not row["undersampled"]]
    return max(ok) if ok else 1


def block_entropy(
    sys: SmoothSystem,
    mu: InvariantMeasure,
    partition: Partition,
    t_max: int,
    n_orbits: int,
    seed: int = 0,
    settings: Optional[Settings] = None,
    workers: int = 1,
    m: int = 1,
) -> BlockEntropy:
    """
    h_μ(f^m, ξ ∨ f⁻¹ξ ∨ … ∨ f^{−(m−1)}ξ) 的插入估计，m = 1 即 h_μ(f, ξ)

    斜率取最大的未欠采样 t 处的增量 H_t − H_{t−1}；标准误来自分批重算。
    截断/未覆盖符号在 t_max 处所占比例单独报告
    """
    if t_max < 4:
        raise ArgumentError("t_max 不能小于 4")
    if m < 1:
        raise ArgumentError("m 必须为正整数")
    settings = settings or Settings()
    runs = itineraries(sys, mu, partition, m * t_max, n_orbits, seed, "entropy.block", settings, workers)
    codes = runs.codes[:, runs.kept]
    rows = _block_rows(codes, t_max, m)
    t_star = _slope_t(rows)
    slope = rows[t_star - 1]["increment"]

    batch_slopes = []
    for idx in _batches(codes.shape[1], settings.block_batches):
        H_t, _ = word_entropy(codes[: m * t_star, idx])
        H_prev, _ = word_entropy(codes[: m * (t_star - 1), idx]) if t_star > 1 else (0.0, 0)
        batch_slopes.append(H_t - H_prev)

    undersampled = all(row["undersampled"] for row in rows)
    token_share = float(np.mean(codes < 0)) if codes.size else 0.0
    if undersampled:
        logger.warning("分块熵欠采样: %d 条轨道", codes.shape[1])
    if token_share > 0:
        logger.info("截断/未覆盖符号占比 %.3g", token_share)
    return BlockEntropy(
        rows,
        slope,
        _batch_stderr(batch_slopes),
        t_star,
        undersampled,
        token_share,
        int(codes.shape[1]),
        runs.escape_statistics(),
        m,
    )


@dataclass
class ConditionalEntropy:
    """H_μ(g⁻¹𝒫 | 𝒫) 的插入估计"""

    value: float
    stderr: float
    m: int
    n_pairs: int
    escape_statistics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "m": self.m,
            "n_pairs": self.n_pairs,
            "escape_statistics": dict(self.escape_statistics),
        }


def _paired_codes(sys, mu, partition, m, n_orbits, seed, stage, settings, workers):
    if isinstance(partition, AdaptivePartition) and partition.params.m != m:
        raise ArgumentError(f"分划使用 m = {partition.params.m}，与 m = {m} 不一致")
    runs = itineraries(sys, mu, partition, m + 1, n_orbits, seed, stage, settings, workers)
    kept = runs.kept
    return runs, runs.codes[0, kept], runs.codes[m, kept]


def conditional_entropy(
    sys: SmoothSystem,
    mu: InvariantMeasure,
    partition: Partition,
    m: int,
    n_orbits: int,
    seed: int = 0,
    settings: Optional[Settings] = None,
    workers: int = 1,
) -> ConditionalEntropy:
    """H(g(x) 的符号 | x 的符号)，g = f^m，来自成对样本 (x, g(x))"""
    if m < 1:
        raise ArgumentError("m 必须为正整数")
    settings = settings or Settings()
    runs, x_codes, gx_codes = _paired_codes(sys, mu, partition, m, n_orbits, seed, "entropy.conditional", settings, workers)
    value = conditional_plugin(x_codes, gx_codes)
    batch = [conditional_plugin(x_codes[idx], gx_codes[idx]) for idx in _batches(len(x_codes), settings.block_batches)]
    return ConditionalEntropy(value, _batch_stderr(batch), m, int(len(x_codes)), runs.escape_statistics())


# ---- I/II 分解 ----

def bound_constants(partition: AdaptivePartition) -> Dict[str, float]:
    """c、C₀、C₂、C₃；c 取 4^d·√d^d"""
    params, d = partition.params, partition.dim
    b = params.b
    c = 4.0 ** d * math.sqrt(d) ** d
    C0 = params.c0(d)
    C2 = C0 * (math.ceil(4 * b * math.sqrt(d)) + 2) ** d
    C3 = c * b ** 2 * (math.ceil(4 * math.sqrt(d)) + 2) ** d * (4 * math.ceil(b * d)) ** d
    return {"c": c, "C0": C0, "C2": C2, "C3": C3}


@dataclass
class DecompositionReport:
    """H(g⁻¹𝒫|𝒫) = I + II₁,₁ + II₁,₂ + II₂ 的经验值、上界与所用常数"""

    I: float
    II1_1: float
    II1_2: float
    II2: float
    conditional_entropy: float
    stderr: Dict[str, float]
    bounds: Dict[str, float]
    constants: Dict[str, float]
    violations: List[str]
    level_jump_max: Optional[int]
    L: Optional[float]
    l_check: Optional[ConstraintCheck]
    excluded_cells: int
    excluded_pairs: int
    n_pairs: int
    exterior_integral: float

    @property
    def total(self) -> float:
        return self.I + self.II1_1 + self.II1_2 + self.II2

    @property
    def chain_total(self) -> float:
        """1+(C₁m+1)e⁻¹ + 2(log C₂+4) + log C₃ + ∫log‖(D_x g)^∧‖dμ"""
        return self.bounds["I"] + self.bounds["II2"] + self.bounds["II1_2"] + self.bounds["II1_1"]

    @property
    def chain_rate(self) -> float:
        return self.chain_total / self.constants["m"]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "I": self.I,
            "II1_1": self.II1_1,
            "II1_2": self.II1_2,
            "II2": self.II2,
            "total": self.total,
            "conditional_entropy": self.conditional_entropy,
            "stderr": dict(self.stderr),
            "bounds": dict(self.bounds),
            "constants": dict(self.constants),
            "violations": list(self.violations),
            "level_jump_max": self.level_jump_max,
            "L": self.L,
            "l_check": self.l_check.to_dict() if self.l_check else None,
            "excluded_cells": self.excluded_cells,
            "excluded_pairs": self.excluded_pairs,
            "n_pairs": self.n_pairs,
            "exterior_integral": self.exterior_integral,
            "chain_total": self.chain_total,
            "chain_rate": self.chain_rate,
        }


def _decompose(x_codes, x_levels, gx_codes, gx_levels, n: int) -> Dict[str, float]:
    """按 (x 的单元, g(x) 的层级) 分组的条件熵拆分"""
    N = len(x_codes)
    if N == 0:
        return {"I": 0.0, "II1_1": 0.0, "II1_2": 0.0, "II2": 0.0}
    I = conditional_plugin(x_codes, gx_levels)
    terms = {"II1_1": 0.0, "II1_2": 0.0, "II2": 0.0}
    groups = np.vstack([x_codes, gx_levels]).T
    keys, inverse = np.unique(groups, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    for g, (code, gx_level) in enumerate(keys):
        members = inverse == g
        H, _ = word_entropy(gx_codes[members][None, :])
        weight = members.sum() / N
        x_level = x_levels[members][0]
        if x_level != n or code < 0:
            terms["II2"] += weight * H
        elif gx_level == n:
            terms["II1_1"] += weight * H
        else:
            terms["II1_2"] += weight * H
    return {"I": I, **terms}


def decomposition_report(
    sys: SmoothSystem,
    mu: InvariantMeasure,
    partition: AdaptivePartition,
    n_orbits: int,
    seed: int = 0,
    settings: Optional[Settings] = None,
    workers: int = 1,
) -> DecompositionReport:
    """
    I = H(S(g x) | 𝒫(x))，II = H(𝒫(g x) | 𝒫(x)) − I，按 x 所在层与 g(x) 所在层拆为 II₂、II₁,₁、II₁,₂

    C₁ 取实测的最大层级跳跃除以 m 向上取整；样本数少于 min_cell_count 的单元剔除并计数；
    任何一项超过其上界 3 个标准误以上记为违反
    """
    if not isinstance(partition, AdaptivePartition):
        raise ArgumentError("分解诊断需要自适应分划")
    settings = settings or Settings()
    params = partition.params
    m, n = params.m, params.n
    runs, x_codes, gx_codes = _paired_codes(sys, mu, partition, m, n_orbits, seed, "entropy.decomposition", settings, workers)

    values, counts = np.unique(x_codes, return_counts=True)
    sparse = values[counts < settings.min_cell_count]
    keep = ~np.isin(x_codes, sparse)
    excluded_pairs = int((~keep).sum())
    x_codes, gx_codes = x_codes[keep], gx_codes[keep]
    x_levels = partition.level_of_code(x_codes)
    gx_levels = partition.level_of_code(gx_codes)

    terms = _decompose(x_codes, x_levels, gx_codes, gx_levels, n)
    batches = [
        _decompose(x_codes[idx], x_levels[idx], gx_codes[idx], gx_levels[idx], n)
        for idx in _batches(len(x_codes), settings.block_batches)
    ]
    stderr = {name: _batch_stderr([b[name] for b in batches]) for name in terms}

    valid = (x_codes >= 0) & (gx_codes >= 0)
    jumps = gx_levels[valid] - x_levels[valid]
    level_jump_max = int(jumps.max()) if len(jumps) else None
    C1 = max(1, math.ceil(max(level_jump_max or 0, 0) / m))
    L = float(np.percentile(x_levels[x_levels >= 0], L_PERCENTILE)) if np.any(x_levels >= 0) else None
    l_check = check_l(params, L) if L is not None else None

    starts = runs.starts[runs.kept][keep]
    growth, escaped = exterior_log_growth(sys, starts, m) if len(starts) else (np.empty(0), np.empty(0))
    growth = growth[np.isfinite(growth)]
    exterior_integral = float(growth.mean()) if len(growth) else float("nan")

    constants = {**bound_constants(partition), "C1": float(C1), "m": float(m)}
    bounds = {
        "I": 1 + (C1 * m + 1) / math.e,
        "II2": math.log(constants["C2"]) + 4,
        "II1_2": math.log(constants["C2"]) + 4,
        "II1_1": math.log(constants["C3"]) + exterior_integral,
    }
    violations = [name for name in bounds if terms[name] > bounds[name] + 3 * stderr[name]]
    if violations:
        logger.warning("分解诊断超出上界: %s", ", ".join(violations))
    return DecompositionReport(
        terms["I"],
        terms["II1_1"],
        terms["II1_2"],
        terms["II2"],
        conditional_plugin(x_codes, gx_codes),
        stderr,
        bounds,
        constants,
        violations,
        level_jump_max,
        L,
        l_check,
        int(len(sparse)),
        excluded_pairs,
        int(len(x_codes)),
        exterior_integral,
    )


# ---- 盒子相交计数 ----

def _image(A: np.ndarray, box: BoxElement) -> Tuple[np.ndarray, np.ndarray]:
    """线性像 A(box) = c + M·[−1, 1]^d"""
    center = A @ (box.anchor + box.frame @ box.center_offset)
    M = A @ box.frame @ np.diag(box.half_widths)
    return center, M


def _separating_axes(M: np.ndarray) -> np.ndarray:
    d = M.shape[0]
    axes = list(np.eye(d))
    if d == 2:
        axes += [np.array([-col[1], col[0]]) for col in M.T]
    elif d == 3:
        cols = list(M.T)
        axes += [np.cross(u, v) for u, v in itertools.combinations(cols, 2)]
        axes += [np.cross(e, col) for e in np.eye(3) for col in cols]
    scale = max(float(np.abs(M).max()), 1.0)
    kept = [axis / np.linalg.norm(axis) for axis in axes if np.linalg.norm(axis) > 1e-12 * scale]
    return np.array(kept)


def _grid_candidates(center: np.ndarray, M: np.ndarray, beta: float) -> np.ndarray:
    reach = np.abs(M).sum(axis=1)
    lo = np.floor((center - reach) / beta).astype(np.int64)
    hi = np.ceil((center + reach) / beta).astype(np.int64) - 1
    hi = np.maximum(hi, lo)
    total = int(np.prod(hi - lo + 1))
    if total > MAX_GRID_CANDIDATES:
        raise ResolutionError(f"候选格子数 {total} 超过上限", smallest_tested=beta)
    ranges = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    return np.array(list(itertools.product(*ranges)), dtype=np.int64)


def _sampled_count(center: np.ndarray, M: np.ndarray, beta: float, per_axis: int = 8, rounds: int = 4) -> int:
    d = M.shape[0]
    seen: set = set()
    for _ in range(rounds):
        t = np.linspace(-1.0, 1.0, per_axis)
        grid = np.array(list(itertools.product(t, repeat=d)))
        images = center + grid @ M.T
        before = len(seen)
        seen.update(map(tuple, np.floor(images / beta).astype(np.int64).tolist()))
        if len(seen) == before:
            break
        per_axis *= 2
    return len(seen)


def box_intersection_count(A, box: BoxElement, grid_beta: float) -> int:
    """
    ξ_β 中与 A(box) 相交的格子数

    d ≤ 3 用分离轴定理精确判定，非退化 A 只计内部相交，退化 A 用闭集判定；
    d > 3 退回采样并逐轮加密，结果是下界
    """
    if grid_beta <= 0:
        raise ArgumentError("grid_beta 必须为正")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (box.dim, box.dim):
        raise ArgumentError("矩阵维数与盒子不一致")
    center, M = _image(A, box)
    d = box.dim
    if d > 3:
        logger.debug("d = %d，盒子相交计数使用采样近似", d)
        return _sampled_count(center, M, grid_beta)

    degenerate = abs(np.linalg.det(M)) <= 1e-12 * max(float(np.abs(M).max()), 1e-300) ** d
    axes = _separating_axes(M)
    cells = _grid_candidates(center, M, grid_beta)
    cube_centers = (cells + 0.5) * grid_beta
    tol = 1e-12 * max(grid_beta, float(np.abs(M).max()))

    gap = np.abs(cube_centers @ axes.T - center @ axes.T)
    reach = np.abs(axes @ M).sum(axis=1)[None, :] + grid_beta / 2 * np.abs(axes).sum(axis=1)[None, :]
    if degenerate:
        overlap = np.all(gap <= reach + tol, axis=1)
    else:
        overlap = np.all(gap < reach - tol, axis=1)
    return int(overlap.sum())


# ---- 可达单元计数 ----

@dataclass
class ReachableCells:
    """g 作用下一个 E_n 单元打到的 E_n 单元数与 C₃·‖(D_x g)^∧‖"""

    cell: Tuple[int, int, Optional[int]]
    hits: int
    bound: float
    exterior_norm: float
    probes: int
    escaped: int

    @property
    def ok(self) -> bool:
        return self.hits <= self.bound

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cell": list(self.cell),
            "hits": self.hits,
            "bound": self.bound,
            "exterior_norm": self.exterior_norm,
            "probes": self.probes,
            "escaped": self.escaped,
            "ok": self.ok,
        }


def _cell_box(partition: AdaptivePartition, cell: Tuple[int, int, Optional[int]]) -> BoxElement:
    s, i, j = cell
    cube = partition.levels[s].cube(i)
    if partition.params.l == 0:
        return cube
    return subdivide_box(cube, partition.params.l)[j or 0]


def count_reachable_cells(
    sys: SmoothSystem,
    partition: AdaptivePartition,
    cell: Union[Tuple[int, int, Optional[int]], int],
    n_probe: int = 1000,
    seed: int = 0,
) -> ReachableCells:
    """
    在单元内取 n_probe 个探针，统计 g(探针) 落入的不同 E_n 单元数（真实数目的下界），
    与锚点处的 C₃·‖(D_x g)^∧‖ 比较

    Raises:
        ArgumentError: 单元不在 E_n 内或探针数不足 10³
        DomainError: 单元内没有可用探针
    """
    if n_probe < 1000:
        raise ArgumentError("探针数不能少于 1000")
    if not isinstance(cell, tuple):
        decoded = partition.decode(int(cell))
        if not isinstance(decoded, tuple):
            raise ArgumentError(f"编码 {cell} 不是单元")
        cell = decoded
    params = partition.params
    if cell[0] != params.n:
        raise ArgumentError("单元必须位于 E_n 内")
    box = _cell_box(partition, cell)
    rng = StreamKeys(seed).generator("entropy.reachable", cell[1], cell[2] or 0)

    local = rng.uniform(-1.0, 1.0, size=(n_probe, box.dim)) * box.half_widths + box.center_offset
    probes = partition.sys.domain.metric.exp(np.repeat(box.anchor[None, :], n_probe, axis=0), local @ box.frame.T)
    inside = sys.domain.contains(probes)
    probes = probes[inside]
    m = params.m
    orbit, escaped_at = sys.trajectory(probes, 2 * m)
    codes = partition.orbit_codes(orbit)
    own = codes[0] == partition.encode(cell)
    if not own.any():
        raise DomainError(f"单元 {cell} 内没有可用探针")
    images = codes[m][own & (escaped_at < 0)]
    in_En = images[(images >= 0) & (partition.level_of_code(images) == params.n)]
    hits = int(len(np.unique(in_En)))

    anchor = box.anchor[None, :]
    jac = np.eye(box.dim)
    point = anchor
    for _ in range(m):
        jac = sys.jacobians(point)[0] @ jac
        point = sys.apply(point)
    norm = exterior_norm(jac)
    C3 = bound_constants(partition)["C3"]
    return ReachableCells(cell, hits, C3 * norm, norm, int(own.sum()), int((escaped_at[own] >= 0).sum()))


def reachable_cells_survey(
    sys: SmoothSystem,
    partition: AdaptivePartition,
    n_cells: int = 1000,
    n_probe: int = 1000,
    seed: int = 0,
) -> Dict[str, Any]:
    """在 E_n 的单元中按种子抽取 n_cells 个做可达计数，汇总违反次数"""
    net = partition.levels.get(partition.params.n)
    if net is None or net.size == 0:
        return {"cells": 0, "violations": 0, "max_ratio": None}
    rng = StreamKeys(seed).generator("entropy.survey")
    total = net.size * partition.cells_per_cube
    chosen = np.sort(rng.choice(total, size=min(n_cells, total), replace=False))
    results = []
    for code in chosen:
        i, j = divmod(int(code), partition.cells_per_cube)
        try:
            results.append(count_reachable_cells(sys, partition, (partition.params.n, i, j if partition.params.l else None), n_probe, seed))
        except DomainError:
            continue
    violations = sum(not r.ok for r in results)
    ratios = [r.hits / r.bound for r in results if r.bound > 0]
    return {
        "cells": len(results),
        "violations": violations,
        "max_ratio": max(ratios) if ratios else None,
        "max_hits": max((r.hits for r in results), default=0),
    }
