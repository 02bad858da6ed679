"""
几何模块
图卡层面的黎曼几何原语：到边界与无穷远的距离、指数映射的正则半径、盒子、ε-网与覆盖数
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import ArgumentError, DomainError, ResolutionError
from .settings import GEOM_TOL, Settings

logger = logging.getLogger(__name__)

Point = np.ndarray
PointFunction = Callable[[np.ndarray], np.ndarray]

# 估计型剖面的格点每轴至少取这么多个
_LATTICE_PER_AXIS = 256


def as_points(x: Union[Sequence[float], np.ndarray, float], dim: int) -> np.ndarray:
    """把单点或点集整理成 (k, d) 数组"""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, dim) if arr.size == dim else arr.reshape(-1, 1)
    if arr.shape[-1] != dim:
        raise ArgumentError(f"点的维数应为 {dim}，实际为 {arr.shape[-1]}")
    return arr


def box_tolerance(half_width: float) -> float:
    """几何比较容差，对极小的盒子按比例收缩"""
    return min(GEOM_TOL, 1e-9 * float(half_width))


class EuclideanMetric:
    """欧氏图卡：指数映射是平移"""

    kind = "euclidean"
    boxsize: Optional[float] = None

    def exp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return x + v

    def exp_inverse(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return y - x

    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.exp_inverse(x, y), axis=-1)

    def frame(self, x: np.ndarray) -> np.ndarray:
        return np.eye(np.asarray(x).shape[-1])

    def derivative_norms(self, y: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ones = np.ones(len(v))
        return ones, ones


class PeriodicMetric(EuclideanMetric):
    """平坦环面：按周期取最短差向量"""

    kind = "periodic"

    def __init__(self, period: float = 1.0):
        self.period = float(period)
        self.boxsize = self.period

    def exp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.mod(x + v, self.period)

    def exp_inverse(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        diff = y - x
        return diff - self.period * np.round(diff / self.period)


class CustomMetric:
    """
    用户提供的度量数据

    exp_map(x, v) 与 exp_inverse(x, y) 对 v、y 的行向量化；
    derivative_norms(y, v) 返回 (‖D_v exp_y‖, ‖D exp_y^{-1}‖ 在 exp_y(v) 处) 两个数组
    """

    kind = "custom"
    boxsize: Optional[float] = None

    def __init__(
        self,
        exp_map: Callable[[np.ndarray, np.ndarray], np.ndarray],
        exp_inverse: Callable[[np.ndarray, np.ndarray], np.ndarray],
        derivative_norms: Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]],
        distance: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
        frame: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        self._exp = exp_map
        self._exp_inverse = exp_inverse
        self._derivative_norms = derivative_norms
        self._distance = distance
        self._frame = frame

    def exp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self._exp(x, v)

    def exp_inverse(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self._exp_inverse(x, y)

    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self._distance is not None:
            return self._distance(x, y)
        return np.linalg.norm(self._exp_inverse(x, y), axis=-1)

    def frame(self, x: np.ndarray) -> np.ndarray:
        if self._frame is not None:
            return np.asarray(self._frame(x), dtype=float)
        return np.eye(np.asarray(x).shape[-1])

    def derivative_norms(self, y: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self._derivative_norms(y, v)

    @property
    def has_chart_distance(self) -> bool:
        return self._distance is None


Metric = Union[EuclideanMetric, PeriodicMetric, CustomMetric]


@dataclass(eq=False)
class ChartDomain:
    """
    d 维图卡区域

    boundary_distance 与 membership 对 (k, d) 点集向量化；
    lower/upper 为区域的包围盒（允许无穷）
    """

    dim: int
    boundary_distance: PointFunction
    reference_point: np.ndarray
    membership: PointFunction
    metric: Metric = field(default_factory=EuclideanMetric)
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    name: str = "chart"

    def __post_init__(self):
        if self.dim < 1:
            raise ArgumentError("维数必须为正整数")
        self.reference_point = np.asarray(self.reference_point, dtype=float).reshape(self.dim)
        self.lower = np.full(self.dim, -np.inf) if self.lower is None else np.asarray(self.lower, float).reshape(self.dim)
        self.upper = np.full(self.dim, np.inf) if self.upper is None else np.asarray(self.upper, float).reshape(self.dim)

    @property
    def metric_kind(self) -> str:
        return self.metric.kind

    @property
    def boundaryless(self) -> bool:
        return bool(np.isinf(self.boundary_distance(self.reference_point[None, :])[0]))

    def points(self, x) -> np.ndarray:
        return as_points(x, self.dim)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """是否属于 M∖∂M"""
        pts = self.points(points)
        finite = np.all(np.isfinite(pts), axis=-1)
        inside = np.zeros(len(pts), dtype=bool)
        if finite.any():
            inside[finite] = np.asarray(self.membership(pts[finite]), dtype=bool)
        return inside

    def boundary_distances(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.boundary_distance(self.points(points)), dtype=float)

    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.metric.distance(np.asarray(x, float), np.asarray(y, float))

    def _inverse_reference(self, pts: np.ndarray) -> np.ndarray:
        to_reference = self.metric.distance(pts, self.reference_point[None, :])
        with np.errstate(divide="ignore"):
            return np.where(to_reference > 0, 1.0 / np.where(to_reference > 0, to_reference, 1.0), np.inf)

    def d0_values(self, points: np.ndarray) -> np.ndarray:
        """min{d(x,∂M), 1/d(x,x₀)}，x = x₀ 时第二项取 +∞"""
        pts = self.points(points)
        return np.minimum(self.boundary_distances(pts), self._inverse_reference(pts))

    def inverse_branch(self, points: np.ndarray) -> np.ndarray:
        """d₀ 由 1/d(x,x₀) 一项取到的点"""
        pts = self.points(points)
        return self._inverse_reference(pts) < self.boundary_distances(pts)

    def unit_coordinates(self, points: np.ndarray) -> np.ndarray:
        """把图卡坐标逐轴压到 [0, 1]，供默认测试函数使用"""
        pts = self.points(points)
        out = np.empty_like(pts)
        for axis in range(self.dim):
            lo, hi, x = self.lower[axis], self.upper[axis], pts[:, axis]
            if np.isfinite(lo) and np.isfinite(hi):
                out[:, axis] = (x - lo) / (hi - lo)
            elif np.isfinite(lo):
                out[:, axis] = (x - lo) / (1.0 + x - lo)
            elif np.isfinite(hi):
                out[:, axis] = 1.0 / (1.0 + hi - x)
            else:
                out[:, axis] = 0.5 + np.arctan(x) / np.pi
        return out

    def window_bounds(self, radius: float) -> Tuple[np.ndarray, np.ndarray]:
        """包围盒与以 x₀ 为中心、半径 radius 的方窗之交"""
        if self.metric.kind == "periodic":
            return self.lower.copy(), self.upper.copy()
        lower = np.maximum(self.lower, self.reference_point - radius)
        upper = np.minimum(self.upper, self.reference_point + radius)
        return lower, upper

    # ---- 构造方法 ----

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float], reference_point=None, name: str = "box") -> "ChartDomain":
        lo = np.asarray(lower, dtype=float).ravel()
        hi = np.asarray(upper, dtype=float).ravel()
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ArgumentError("盒子上下界不合法")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ArgumentError("盒子上下界必须有限")
        x0 = (lo + hi) / 2 if reference_point is None else reference_point

        def boundary_distance(p):
            return np.min(np.minimum(p - lo, hi - p), axis=-1)

        def membership(p):
            return np.all((p > lo) & (p < hi), axis=-1)

        return cls(len(lo), boundary_distance, x0, membership, EuclideanMetric(), lo, hi, name)

    @classmethod
    def interval(cls, lo: float = 0.0, hi: float = 1.0, reference_point=None, name: str = "interval") -> "ChartDomain":
        return cls.box([lo], [hi], reference_point, name)

    @classmethod
    def half_line(cls, lo: float = 0.0, reference_point: float = 1.0, name: str = "half_line") -> "ChartDomain":
        lo = float(lo)
        if reference_point <= lo:
            raise ArgumentError("参考点必须在区域内部")

        def boundary_distance(p):
            return p[:, 0] - lo

        def membership(p):
            return p[:, 0] > lo

        return cls(1, boundary_distance, [reference_point], membership, EuclideanMetric(), [lo], [np.inf], name)

    @classmethod
    def euclidean(cls, dim: int, reference_point=None, name: str = "euclidean") -> "ChartDomain":
        x0 = np.zeros(dim) if reference_point is None else reference_point

        def boundary_distance(p):
            return np.full(len(p), np.inf)

        def membership(p):
            return np.ones(len(p), dtype=bool)

        return cls(dim, boundary_distance, x0, membership, EuclideanMetric(), None, None, name)

    @classmethod
    def torus(cls, dim: int = 1, period: float = 1.0, reference_point=None, name: str = "torus") -> "ChartDomain":
        x0 = np.full(dim, period / 2) if reference_point is None else reference_point

        def boundary_distance(p):
            return np.full(len(p), np.inf)

        def membership(p):
            return np.all((p >= 0) & (p < period), axis=-1)

        return cls(dim, boundary_distance, x0, membership, PeriodicMetric(period), np.zeros(dim), np.full(dim, period), name)

    @classmethod
    def custom(
        cls,
        dim: int,
        metric: CustomMetric,
        boundary_distance: PointFunction,
        membership: PointFunction,
        reference_point,
        lower=None,
        upper=None,
        name: str = "custom",
    ) -> "ChartDomain":
        return cls(dim, boundary_distance, reference_point, membership, metric, lower, upper, name)


def _checked_point(domain: ChartDomain, x) -> np.ndarray:
    pts = domain.points(x)
    if len(pts) != 1:
        raise ArgumentError("只接受单个点")
    if not domain.contains(pts)[0]:
        raise DomainError(f"点 {pts[0].tolist()} 不在 M∖∂M 内")
    return pts


def d0(domain: ChartDomain, x) -> float:
    """
    d₀(x,∂M) = min{d(x,∂M), d⁻¹(x,x₀)}

    Args:
        domain: 图卡区域
        x: 区域内部的点

    Returns:
        非负实数；无边界且 x = x₀ 时为 +∞
    """
    return float(domain.d0_values(_checked_point(domain, x))[0])


def d_star(domain: ChartDomain, x) -> float:
    """d_* = min{d₀, 1}"""
    return min(d0(domain, x), 1.0)


# ---- ε-网与覆盖 ----

def lexicographic_order(points: np.ndarray) -> np.ndarray:
    """按坐标字典序排列的下标，第 0 轴优先"""
    return np.lexsort(points.T[::-1])


def net_indices(
    points: np.ndarray,
    eps: float,
    tol: float = GEOM_TOL,
    metric: Optional[Metric] = None,
) -> np.ndarray:
    """
    按给定顺序贪心选出极大 ε-分离子集

    Returns:
        被选中点的下标（按选入顺序）
    """
    n = len(points)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    metric = metric or EuclideanMetric()

    if isinstance(metric, CustomMetric) and not metric.has_chart_distance:
        accepted = [0]
        for idx in range(1, n):
            dist = metric.distance(points[idx][None, :], points[accepted])
            if np.all(dist > eps + tol):
                accepted.append(idx)
        return np.asarray(accepted, dtype=np.int64)

    tree = cKDTree(points, boxsize=metric.boxsize)
    blocked = np.zeros(n, dtype=bool)
    accepted = []
    for idx in range(n):
        if blocked[idx]:
            continue
        accepted.append(idx)
        blocked[tree.query_ball_point(points[idx], eps + tol)] = True
    return np.asarray(accepted, dtype=np.int64)


def separated_net(
    points_source: Union[np.ndarray, Callable[[], np.ndarray]],
    eps: float,
    region: Optional[PointFunction] = None,
    domain: Optional[ChartDomain] = None,
    order: str = "lexicographic",
    tol: float = GEOM_TOL,
) -> np.ndarray:
    """
    构造样本相对的极大 ε-分离集 F(M₁, ε)

    Args:
        points_source: 候选点数组，或返回候选点数组的采样函数
        eps: 分离尺度
        region: 区域谓词，只保留满足的候选点
        domain: 提供度量；默认欧氏
        order: "lexicographic" 按坐标字典序，"given" 按输入顺序
        tol: 比较容差

    Returns:
        网点数组 (k, d)；候选为空时返回空数组
    """
    if eps <= 0:
        raise ArgumentError("eps 必须为正")
    raw = points_source() if callable(points_source) else points_source
    points = np.asarray(raw, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1 if domain is None else domain.dim)
    if region is not None and len(points):
        points = points[np.asarray(region(points), dtype=bool)]
    if len(points) == 0:
        return points.reshape(0, points.shape[-1] if points.ndim == 2 else 1)
    if order == "lexicographic":
        points = points[lexicographic_order(points)]
    elif order != "given":
        raise ArgumentError(f"未知排序方式: {order}")
    chosen = net_indices(points, eps, tol, domain.metric if domain else None)
    return points[chosen]


def greedy_cover_count(points: np.ndarray, radius: float, metric: Optional[Metric] = None, tol: float = GEOM_TOL) -> int:
    """
    用半径 radius 的球贪心覆盖点集，返回所用球数（最小覆盖数的上界）

    未覆盖的点 p 按字典序取出，新球的中心放在 p + r·e₁
    """
    if len(points) == 0:
        return 0
    metric = metric or EuclideanMetric()
    points = points[lexicographic_order(points)]
    tree = cKDTree(points, boxsize=metric.boxsize)
    covered = np.zeros(len(points), dtype=bool)
    shift = np.zeros(points.shape[1])
    shift[0] = radius
    count = 0
    for idx in range(len(points)):
        if covered[idx]:
            continue
        center = points[idx] + shift
        if metric.boxsize is not None:
            center = np.mod(center, metric.boxsize)
        covered[tree.query_ball_point(center, radius + tol)] = True
        covered[idx] = True
        count += 1
    return count


def default_c01(b: float, d: int) -> int:
    """C₀,₁ 的默认取值 (2⌈b√d⌉ + 1)^d"""
    return int((2 * math.ceil(b * math.sqrt(d)) + 1) ** d)


def covering_count_bound(r: float, eps: float, C01: float, d: int) -> int:
    """
    #F(B(x,r), ε) ≤ C₀,₁⌈r/ε⌉^d

    Args:
        r: 球半径（不超过正则半径）
        eps: 分离尺度
        C01: 常数 C₀,₁
        d: 维数

    Returns:
        整数上界
    """
    if r <= 0 or eps <= 0:
        raise ArgumentError("r 与 eps 必须为正")
    ratio = max(1, math.ceil(r / eps - GEOM_TOL))
    return int(math.ceil(C01 * ratio ** d - GEOM_TOL))


# ---- 正则半径与容量 ----

@dataclass(frozen=True)
class RegularityConfig:
    """正则半径的计算口径"""

    b: float = 1.0
    policy: str = "pure-norm"
    bisection_tol: float = 1e-3
    directions: int = 16
    radial_samples: int = 8

    def __post_init__(self):
        if self.b < 1:
            raise ArgumentError("b 必须不小于 1")
        if self.policy not in ("pure-norm", "clip"):
            raise ArgumentError(f"未知的正则半径策略: {self.policy}")


def _sphere_directions(d: int, count: int) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    eye = np.eye(d)
    rng = np.random.Generator(np.random.Philox(key=d))
    extra = rng.standard_normal((max(count - 2 * d, 0), d))
    extra /= np.linalg.norm(extra, axis=1, keepdims=True)
    return np.vstack([eye, -eye, extra])


def _admissible(metric: Metric, y: np.ndarray, r: float, config: RegularityConfig) -> bool:
    dirs = _sphere_directions(len(y), config.directions)
    scales = np.linspace(1.0 / config.radial_samples, 1.0, config.radial_samples) * r
    vectors = (scales[:, None, None] * dirs[None, :, :]).reshape(-1, len(y))
    norm_exp, norm_inv = metric.derivative_norms(y, vectors)
    bound = config.b * (1 + 1e-12)
    return bool(np.all(np.asarray(norm_exp) <= bound) and np.all(np.asarray(norm_inv) <= bound))


def _custom_radius(domain: ChartDomain, config: RegularityConfig, y: np.ndarray) -> float:
    if _admissible(domain.metric, y, 1.0, config):
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > config.bisection_tol:
        mid = (lo + hi) / 2
        if _admissible(domain.metric, y, mid, config):
            lo = mid
        else:
            hi = mid
    if lo <= 0:
        raise ResolutionError(f"点 {y.tolist()} 处找不到满足导数界的半径", smallest_tested=hi)
    return lo


def regular_radius_values(domain: ChartDomain, config: RegularityConfig, points: np.ndarray) -> np.ndarray:
    """对一批内部点计算 ϱ_b"""
    pts = domain.points(points)
    if domain.metric_kind == "custom":
        values = np.array([_custom_radius(domain, config, p) for p in pts])
    else:
        values = np.ones(len(pts))
    if config.policy == "clip":
        values = np.minimum(values, domain.boundary_distances(pts))
    return values


def regular_radius_point(domain: ChartDomain, config: RegularityConfig, y) -> float:
    """
    正则半径 ϱ_b(y)

    欧氏图卡的导数范数恒为 1，"pure-norm" 策略下为 1，"clip" 策略下截到边界距离；
    自定义度量在 (0, 1] 上二分，容差 config.bisection_tol
    """
    pts = _checked_point(domain, y)
    return float(regular_radius_values(domain, config, pts)[0])


@dataclass(frozen=True)
class SublevelEstimate:
    """子水平集上的网格估计"""

    value: float
    resolution: float
    n_points: int
    truncated: bool


def _axis_ranges(lower: np.ndarray, upper: np.ndarray, anchor: np.ndarray, spacing: float):
    ranges = []
    for lo, hi, x in zip(lower, upper, anchor):
        k_lo = math.ceil((lo - x) / spacing)
        k_hi = math.floor((hi - x) / spacing)
        ranges.append(x + spacing * np.arange(k_lo, k_hi + 1))
    return ranges


def _lattice_size(lower: np.ndarray, upper: np.ndarray, anchor: np.ndarray, spacing: float) -> int:
    return int(np.prod([max(len(r), 1) for r in _axis_ranges(lower, upper, anchor, spacing)]))


def _lattice(domain: ChartDomain, lower: np.ndarray, upper: np.ndarray, spacing: float, max_points: int) -> np.ndarray:
    """以 x₀ 为锚点、间距 spacing 的格点，只保留区域内部的点"""
    ranges = _axis_ranges(lower, upper, domain.reference_point, spacing)
    total = int(np.prod([max(len(r), 1) for r in ranges]))
    if total > max_points:
        raise ResolutionError(f"格点数 {total} 超过上限 {max_points}", smallest_tested=spacing)
    if any(len(r) == 0 for r in ranges):
        return np.empty((0, domain.dim))
    grid = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    return grid[domain.contains(grid)]


def _sublevel_window(domain: ChartDomain, threshold: float, window: float):
    reach = np.inf if threshold <= 0 else 1.0 / threshold
    radius = min(reach, window)
    lower, upper = domain.window_bounds(radius)
    truncated = bool(
        reach > window
        and domain.metric_kind != "periodic"
        and (np.any(domain.lower < domain.reference_point - window) or np.any(domain.upper > domain.reference_point + window))
    )
    return lower, upper, truncated


def _sublevel_points(domain, x_pts, threshold, spacing, lower, upper, max_points) -> np.ndarray:
    grid = _lattice(domain, lower, upper, spacing, max_points) if spacing > 0 else np.empty((0, domain.dim))
    if len(grid):
        grid = grid[domain.d0_values(grid) >= threshold * (1 - 1e-12)]
    return np.vstack([x_pts, grid])


def regular_radius_sublevel(
    domain: ChartDomain,
    config: RegularityConfig,
    x,
    sample_budget: int,
    settings: Optional[Settings] = None,
) -> SublevelEstimate:
    """
    ρ_b(x)：子水平集 {y : d₀(y) ≥ d₀(x)} 上 ϱ_b 的网格最小值

    Args:
        domain: 图卡区域
        config: 正则半径口径
        x: 区域内部的点
        sample_budget: 格点预算
        settings: 窗口半径等配置

    Returns:
        估计值与所用网格分辨率
    """
    if sample_budget < 1:
        raise ArgumentError("sample_budget 必须为正")
    settings = settings or Settings()
    x_pts = _checked_point(domain, x)
    threshold = float(domain.d0_values(x_pts)[0])
    lower, upper, truncated = _sublevel_window(domain, threshold, settings.sublevel_window)

    extent = np.maximum(upper - lower, 0.0)
    positive = extent[extent > 0]
    spacing = float(np.prod(positive) / sample_budget) ** (1.0 / len(positive)) if len(positive) else 0.0
    points = _sublevel_points(domain, x_pts, threshold, spacing, lower, upper, max(sample_budget * 4, 16))
    if len(points) == 0:
        raise DomainError("子水平集采样为空")

    values = regular_radius_values(domain, config, points)
    return SublevelEstimate(float(values.min()), spacing, len(points), truncated)


def tankage(
    domain: ChartDomain,
    config: RegularityConfig,
    x,
    grid_resolution: float,
    settings: Optional[Settings] = None,
) -> int:
    """
    N_b(x)：用半径 ρ_b(x) 的球贪心覆盖子水平集的离散化，返回球数

    Raises:
        ResolutionError: 网格分辨率不小于 ρ_b(x)
    """
    if grid_resolution <= 0:
        raise ArgumentError("grid_resolution 必须为正")
    settings = settings or Settings()
    x_pts = _checked_point(domain, x)
    threshold = float(domain.d0_values(x_pts)[0])
    lower, upper, _ = _sublevel_window(domain, threshold, settings.sublevel_window)
    points = _sublevel_points(domain, x_pts, threshold, grid_resolution, lower, upper, settings.sublevel_max_points)

    rho = float(regular_radius_values(domain, config, points).min())
    if grid_resolution >= rho:
        raise ResolutionError(f"网格分辨率 {grid_resolution} 不小于正则半径 {rho}", smallest_tested=grid_resolution)
    return max(1, greedy_cover_count(points, rho, domain.metric))


@dataclass(frozen=True, eq=False)
class RegularityProfile:
    """
    正则性剖面：b、ϱ_b、ρ_b、N_b

    三个函数都对 (k, d) 点集向量化
    """

    b: float
    rho_point: PointFunction
    rho_sublevel: PointFunction
    tankage: PointFunction
    mode: str
    details: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def trivial(cls, b: float = 1.0) -> "RegularityProfile":
        """ρ_b ≡ 1, N_b ≡ 1"""

        def ones(points):
            return np.ones(len(np.atleast_2d(points)))

        return cls(b, ones, ones, ones, "analytic", {"kind": "trivial"})

    @classmethod
    def analytic(cls, b: float, rho_point: PointFunction, rho_sublevel: PointFunction, tankage: PointFunction) -> "RegularityProfile":
        return cls(b, rho_point, rho_sublevel, tankage, "analytic", {"kind": "closed-form"})

    @classmethod
    def estimated(
        cls,
        domain: ChartDomain,
        config: Optional[RegularityConfig] = None,
        settings: Optional[Settings] = None,
    ) -> "RegularityProfile":
        """
        在以 x₀ 为锚点的固定格点上制表

        ρ_b 取按 d₀ 排序后的后缀最小值（构造上单调），N_b 在阈值阶梯 2^{-k·step} 上贪心覆盖
        """
        config = config or RegularityConfig()
        settings = settings or Settings()
        window = settings.sublevel_window
        lower, upper = domain.window_bounds(window)
        extent = upper - lower

        spacing = min(settings.sublevel_resolution, float(extent.min()) / _LATTICE_PER_AXIS)
        while _lattice_size(lower, upper, domain.reference_point, spacing) > settings.sublevel_max_points:
            spacing *= 1.05
        lattice = _lattice(domain, lower, upper, spacing, settings.sublevel_max_points)
        if len(lattice) == 0:
            raise DomainError("格点与区域内部不相交")

        d0s = domain.d0_values(lattice)
        rho = regular_radius_values(domain, config, lattice)
        order = np.argsort(d0s, kind="stable")
        d0_sorted = d0s[order]
        suffix_min = np.minimum.accumulate(rho[order][::-1])[::-1]

        def sublevel_rho(threshold):
            idx = np.searchsorted(d0_sorted, np.asarray(threshold) * (1 - 1e-12), side="left")
            safe = np.minimum(idx, len(d0_sorted) - 1)
            return np.where(idx < len(d0_sorted), suffix_min[safe], np.inf)

        finite = d0_sorted[np.isfinite(d0_sorted)]
        step = settings.threshold_ladder_step
        if len(finite):
            k_start = math.floor(-math.log2(finite.max()) / step)
            k_end = math.ceil(-math.log2(finite.min()) / step)
            thresholds = 2.0 ** (-step * np.arange(k_start, k_end + 1))
        else:
            thresholds = np.array([1.0])
        counts = []
        for t in thresholds:
            members = lattice[d0s >= t * (1 - 1e-12)]
            radius = float(sublevel_rho(t))
            counts.append(max(1, greedy_cover_count(members, radius, domain.metric)) if len(members) else 1)
        counts = np.maximum.accumulate(np.asarray(counts, dtype=np.int64))
        thresholds_asc = thresholds[::-1]
        counts_asc = counts[::-1]

        truncated = bool(
            domain.metric_kind != "periodic"
            and (np.any(domain.lower < domain.reference_point - window) or np.any(domain.upper > domain.reference_point + window))
        )
        logger.debug("估计型正则剖面: %d 个格点, 间距 %.3g, 阈值 %d 级", len(lattice), spacing, len(thresholds))

        def rho_point(points):
            return regular_radius_values(domain, config, points)

        def rho_sublevel(points):
            pts = domain.points(points)
            return np.minimum(sublevel_rho(domain.d0_values(pts)), regular_radius_values(domain, config, pts))

        def tankage_values(points):
            t = domain.d0_values(domain.points(points))
            idx = np.searchsorted(thresholds_asc, t * (1 + 1e-12), side="right") - 1
            return counts_asc[np.clip(idx, 0, len(counts_asc) - 1)].astype(float)

        details = {
            "kind": "lattice",
            "policy": config.policy,
            "resolution": spacing,
            "lattice_points": int(len(lattice)),
            "window": window,
            "truncated": truncated,
            "thresholds": int(len(thresholds)),
        }
        return cls(config.b, rho_point, rho_sublevel, tankage_values, "estimated", details)


# ---- 盒子 ----

@dataclass(frozen=True, eq=False)
class BoxElement:
    """
    Γ(exp⁻¹(y); a₁,…,a_d)：锚点切空间中以 center_offset 为中心、半宽 half_widths 的盒子
    """

    anchor: np.ndarray
    frame: np.ndarray
    center_offset: np.ndarray
    half_widths: np.ndarray
    level: int = 0
    net_index: int = 0
    cell_index: Optional[int] = None

    def __post_init__(self):
        d = len(self.anchor)
        if self.frame.shape != (d, d):
            raise ArgumentError("标架维数与锚点不一致")
        if np.max(np.abs(self.frame.T @ self.frame - np.eye(d))) > 1e-12:
            raise ArgumentError("标架必须正交规范")
        if np.any(self.half_widths <= 0):
            raise ArgumentError("半宽必须为正")

    @classmethod
    def cube(cls, anchor, a: float, frame=None, level: int = 0, net_index: int = 0) -> "BoxElement":
        """Γ_x(a)：以锚点为中心的立方体"""
        anchor = np.asarray(anchor, dtype=float).ravel()
        d = len(anchor)
        frame = np.eye(d) if frame is None else np.asarray(frame, dtype=float)
        return cls(anchor, frame, np.zeros(d), np.full(d, float(a)), level, net_index)

    @property
    def dim(self) -> int:
        return len(self.anchor)

    @property
    def volume(self) -> float:
        return float(np.prod(2 * self.half_widths))

    def center(self, metric: Optional[Metric] = None) -> np.ndarray:
        metric = metric or EuclideanMetric()
        return metric.exp(self.anchor[None, :], (self.frame @ self.center_offset)[None, :])[0]

    def local_coordinates(self, points: np.ndarray, metric: Optional[Metric] = None) -> np.ndarray:
        """exp⁻¹ 后在标架下、相对中心的坐标"""
        metric = metric or EuclideanMetric()
        v = metric.exp_inverse(self.anchor[None, :], np.atleast_2d(points))
        return v @ self.frame - self.center_offset

    def contains(self, points: np.ndarray, metric: Optional[Metric] = None, tol: Optional[float] = None) -> np.ndarray:
        tol = box_tolerance(self.half_widths.min()) if tol is None else tol
        u = self.local_coordinates(points, metric)
        return np.all(np.abs(u) <= self.half_widths + tol, axis=-1)

    def vertices(self) -> np.ndarray:
        """欧氏图卡下的 2^d 个顶点"""
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=self.dim)))
        local = self.center_offset + signs * self.half_widths
        return self.anchor + local @ self.frame.T


def subdivide_box(box: BoxElement, l: int) -> list:
    """
    把立方体 Γ_x(a) 均分为 2^{l·d} 个子立方体

    子立方体半宽 a/2^l，中心偏移 k·a/2^l，k 取 1−2^l 到 2^l−1 的奇数；
    子格序号按 itertools.product 顺序（第 0 轴最慢）
    """
    if l <= 0:
        raise ArgumentError("细分层数 l 必须为正整数")
    side = 2 ** l
    odd = np.arange(1 - side, side, 2, dtype=float)
    half = box.half_widths / side
    cells = []
    for j, ks in enumerate(itertools.product(range(side), repeat=box.dim)):
        offset = box.center_offset + odd[list(ks)] * half
        cells.append(BoxElement(box.anchor, box.frame, offset, half.copy(), box.level, box.net_index, j))
    return cells
