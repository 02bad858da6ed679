"""
动力系统模块
映射求值、精确雅可比、迭代、导数余环、外幂范数以及条件 (A) 的畸变检验
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ArgumentError, EscapeError
from .geometry import ChartDomain

logger = logging.getLogger(__name__)

# 对角元低于此值视为退化，对应指数取 -inf
DEGENERATE_DIAGONAL = 1e-300
NEG_INF = float("-inf")


class SmoothSystem:
    """C¹ 映射 f: U → M∖∂M"""

    def __init__(
        self,
        name: str,
        domain: ChartDomain,
        map: Callable[[np.ndarray], np.ndarray],
        jacobian: Callable[[np.ndarray], np.ndarray],
        in_u: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        breakpoints: Sequence[float] = (),
        branch: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        jitter: float = 0.0,
        constant_derivative: bool = False,
        description: str = "",
    ):
        """
        初始化系统

        Args:
            name: 系统名称
            domain: 图卡区域
            map: 对 (k, d) 点集向量化的 f
            jacobian: 返回 (k, d, d) 的 D_x f
            in_u: 定义域 U 的谓词，默认与 M∖∂M 相同
            breakpoints: 一维映射的间断点，供求积切分
            branch: 光滑分支编号，供有限差分检查避开间断
            jitter: 影子轨道扰动幅度，只在传入随机流时生效
            constant_derivative: 导数范数是否为常数
            description: 说明
        """
        self.name = name
        self.domain = domain
        self._map = map
        self._jacobian = jacobian
        self._in_u = in_u
        self.breakpoints = tuple(float(b) for b in breakpoints)
        self._branch = branch
        self.jitter = float(jitter)
        self.constant_derivative = constant_derivative
        self.description = description

    def __repr__(self) -> str:
        return f"SmoothSystem(name={self.name!r}, dim={self.dim})"

    @property
    def dim(self) -> int:
        return self.domain.dim

    def in_u(self, points: np.ndarray) -> np.ndarray:
        pts = self.domain.points(points)
        inside = self.domain.contains(pts)
        if self._in_u is not None and inside.any():
            inside[inside] = np.asarray(self._in_u(pts[inside]), dtype=bool)
        return inside

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self._map(self.domain.points(points)), dtype=float)

    def jacobians(self, points: np.ndarray) -> np.ndarray:
        jac = np.asarray(self._jacobian(self.domain.points(points)), dtype=float)
        return jac.reshape(-1, self.dim, self.dim)

    def branch(self, points: np.ndarray) -> np.ndarray:
        if self._branch is None:
            return np.zeros(len(points), dtype=np.int64)
        return np.asarray(self._branch(points))

    def step(self, points: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """
        走一步；给定随机流且系统声明了扰动幅度时，叠加不超过 jitter 的影子扰动，
        扰动后的点若离开 U 则改为反向扰动
        """
        image = self.apply(points)
        if self.jitter <= 0 or rng is None or len(image) == 0:
            return image
        kick = rng.uniform(0.0, self.jitter, size=image.shape)
        forward = image + kick
        bad = ~self.in_u(forward)
        if bad.any():
            forward[bad] = image[bad] - kick[bad]
        return forward

    def trajectory(
        self,
        points: np.ndarray,
        m: int,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        批量轨道 x, f(x), …, f^m(x)

        Returns:
            (轨道数组 (m+1, k, d), 逃逸步 (k,)，未逃逸为 -1)；逃逸后的位置填 nan
        """
        pts = self.domain.points(points)
        k = len(pts)
        orbit = np.full((m + 1, k, self.dim), np.nan)
        escaped_at = np.full(k, -1, dtype=np.int64)

        alive = self.in_u(pts) if m > 0 else self.domain.contains(pts)
        escaped_at[~alive] = 0
        orbit[0, alive] = pts[alive]
        current = pts[alive]
        index = np.flatnonzero(alive)
        for j in range(1, m + 1):
            if len(index) == 0:
                break
            image = self.step(current, rng)
            ok = self.in_u(image) if j < m else self.domain.contains(image)
            escaped_at[index[~ok]] = j
            index = index[ok]
            current = image[ok]
            orbit[j, index] = current
        return orbit, escaped_at


@dataclass(frozen=True)
class DistortionParams:
    """条件 (A) 的常数 0 < α < 1，C > 1，a > 1"""

    alpha: float
    C: float
    a: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ArgumentError("alpha 必须在 (0, 1) 内")
        if self.C <= 1 or self.a <= 1:
            raise ArgumentError("C 与 a 必须大于 1")


def _escape(step: int, x) -> EscapeError:
    return EscapeError(int(step), f"点 {np.asarray(x).ravel().tolist()} 的轨道在第 {step} 步逃逸")


def iterate(sys: SmoothSystem, x, m: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    f^m(x)，m = 0 为恒等

    Raises:
        EscapeError: 轨道离开 U 或到达边界
    """
    if m < 0:
        raise ArgumentError("m 不能为负")
    orbit, escaped_at = sys.trajectory(sys.domain.points(x)[:1], m, rng)
    if escaped_at[0] >= 0:
        raise _escape(escaped_at[0], x)
    return orbit[m, 0]


def spectral_norms(jacobians: np.ndarray) -> np.ndarray:
    """批量谱范数"""
    return np.linalg.norm(jacobians, ord=2, axis=(-2, -1))


def cocycle_jacobian_norms(sys: SmoothSystem, x, m: int) -> Tuple[List[float], float]:
    """
    沿 m 步轨道的 ‖D_{f^j(x)} f‖ 以及 Π‖·‖*（每个因子下截到 1）
    """
    if m < 0:
        raise ArgumentError("m 不能为负")
    orbit, escaped_at = sys.trajectory(sys.domain.points(x)[:1], m)
    if escaped_at[0] >= 0:
        raise _escape(escaped_at[0], x)
    if m == 0:
        return [], 1.0
    norms = spectral_norms(sys.jacobians(orbit[:m, 0]))
    starred = float(np.exp(np.sum(np.log(np.maximum(norms, 1.0)))))
    return norms.tolist(), starred


def log_exterior_norm_from_singular_values(singular_values: np.ndarray) -> np.ndarray:
    """max_κ Σ_{i≤κ} log σ_i，沿最后一轴"""
    with np.errstate(divide="ignore"):
        logs = np.log(singular_values)
    return np.max(np.cumsum(logs, axis=-1), axis=-1)


def exterior_norm(A: np.ndarray) -> float:
    """
    ‖A^∧‖ = max_{1≤κ≤d} ‖A^{∧κ}‖ = max_κ Π_{i≤κ} σ_i

    κ 从 1 开始，空积不计入
    """
    s = np.linalg.svd(np.atleast_2d(np.asarray(A, dtype=float)), compute_uv=False)
    return float(np.max(np.cumprod(s)))


def mgs_qr(Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    批量修正 Gram–Schmidt 分解 Z = QR，R 的对角元取正

    对角元低于 DEGENERATE_DIAGONAL 的列记为 0，并用标准基补全 Q
    """
    Z = np.array(Z, dtype=float, copy=True)
    k, d, _ = Z.shape
    Q = np.zeros_like(Z)
    R = np.zeros_like(Z)
    for j in range(d):
        v = Z[:, :, j]
        for i in range(j):
            r = np.einsum("kd,kd->k", Q[:, :, i], v)
            R[:, i, j] = r
            v = v - r[:, None] * Q[:, :, i]
        norm = np.linalg.norm(v, axis=1)
        degenerate = norm < DEGENERATE_DIAGONAL
        safe = np.where(degenerate, 1.0, norm)
        Q[:, :, j] = v / safe[:, None]
        R[:, j, j] = np.where(degenerate, 0.0, norm)
        for row in np.flatnonzero(degenerate):
            Q[row, :, j] = _completion(Q[row, :, :j])
    return Q, R


def _completion(basis: np.ndarray) -> np.ndarray:
    d = basis.shape[0]
    best = None
    for e in np.eye(d):
        w = e - basis @ (basis.T @ e)
        if best is None or np.linalg.norm(w) > np.linalg.norm(best):
            best = w
    return best / np.linalg.norm(best)


def exterior_log_growth(
    sys: SmoothSystem,
    points: np.ndarray,
    m: int,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    批量 log‖(D_x f^m)^∧‖

    用 QR 累积三角因子并单独记录对数尺度，从不形成原始乘积

    Returns:
        (对数外幂范数 (k,)，逃逸步 (k,))
    """
    if m < 1:
        raise ArgumentError("m 必须为正整数")
    orbit, escaped_at = sys.trajectory(points, m, rng)
    k, d = orbit.shape[1], sys.dim
    ok = escaped_at < 0
    values = np.full(k, np.nan)
    if not ok.any():
        return values, escaped_at

    Q = np.repeat(np.eye(d)[None, :, :], ok.sum(), axis=0)
    R_acc = Q.copy()
    log_scale = np.zeros(ok.sum())
    for j in range(m):
        Q, R = mgs_qr(sys.jacobians(orbit[j, ok]) @ Q)
        R_acc = R @ R_acc
        scale = np.max(np.abs(R_acc), axis=(1, 2))
        scale = np.where(scale > 0, scale, 1.0)
        R_acc = R_acc / scale[:, None, None]
        log_scale += np.log(scale)

    s = np.linalg.svd(R_acc, compute_uv=False)
    with np.errstate(divide="ignore"):
        logs = np.log(s) + log_scale[:, None]
    values[ok] = np.max(np.cumsum(logs, axis=-1), axis=-1)
    return values, escaped_at


def exterior_norm_growth(sys: SmoothSystem, x, m: int, rng: Optional[np.random.Generator] = None) -> float:
    """log‖(D_x f^m)^∧‖"""
    values, escaped_at = exterior_log_growth(sys, sys.domain.points(x)[:1], m, rng)
    if escaped_at[0] >= 0:
        raise _escape(escaped_at[0], x)
    return float(values[0])


def jacobian_defect(sys: SmoothSystem, points: np.ndarray, h: float = 1e-6) -> Tuple[float, int]:
    """
    中心差分与解析雅可比的最大相对误差

    差分模板跨越分支间断或离开 U 的点不参与比较

    Returns:
        (最大相对误差, 参与比较的点数)
    """
    pts = sys.domain.points(points)
    pts = pts[sys.in_u(pts)]
    d = sys.dim
    jac = sys.jacobians(pts)
    fd = np.zeros_like(jac)
    usable = np.ones(len(pts), dtype=bool)
    base_branch = sys.branch(pts)
    for axis in range(d):
        step = h * np.maximum(1.0, np.abs(pts[:, axis]))
        plus, minus = pts.copy(), pts.copy()
        plus[:, axis] += step
        minus[:, axis] -= step
        usable &= sys.in_u(plus) & sys.in_u(minus)
        usable &= (sys.branch(plus) == base_branch) & (sys.branch(minus) == base_branch)
        safe_plus = np.where(usable[:, None], plus, pts)
        safe_minus = np.where(usable[:, None], minus, pts)
        fd[:, :, axis] = (sys.apply(safe_plus) - sys.apply(safe_minus)) / (2 * step[:, None])
    if not usable.any():
        return 0.0, 0
    scale = np.maximum(spectral_norms(jac[usable]), 1e-300)
    errors = spectral_norms(fd[usable] - jac[usable]) / scale
    return float(errors.max()), int(usable.sum())


# ---- 条件 (A) ----

@dataclass(frozen=True)
class SamplePlan:
    """
    畸变检验的采样计划

    一半的基点取自 sampler（通常是不变测度），另一半向边界/无穷远按对数间隔加压
    """

    n_points: int = 10_000
    pairs_per_point: int = 1
    boundary_fraction: float = 0.5
    log_decades: float = 12.0
    seed: int = 0


@dataclass
class DistortionReport:
    """畸变检验结果：只能证伪，不能证明"""

    max_ratio: float
    passed: bool
    n_pairs: int
    skipped: int
    witnesses: List[Dict[str, float]] = field(default_factory=list)
    params: Optional[DistortionParams] = None

    def to_dict(self) -> Dict:
        return {
            "max_ratio": self.max_ratio,
            "passed": self.passed,
            "n_pairs": self.n_pairs,
            "skipped": self.skipped,
            "witnesses": self.witnesses,
            "params": None if self.params is None else vars(self.params).copy(),
            "kind": "empirical-falsifier",
        }


def stress_points(domain: ChartDomain, rng: np.random.Generator, n: int, decades: float) -> np.ndarray:
    """向边界与无穷远按对数间隔堆积的点；decades 不为正时只在包围盒内均匀取点"""
    d = domain.dim
    points = np.empty((n, d))
    for axis in range(d):
        lo, hi = domain.lower[axis], domain.upper[axis]
        x0 = domain.reference_point[axis]
        if np.isfinite(lo) and np.isfinite(hi):
            points[:, axis] = rng.uniform(lo, hi, n)
        else:
            points[:, axis] = x0 + rng.uniform(-1.0, 1.0, n)
    if domain.metric_kind == "periodic" or decades <= 0:
        return points
    axes = rng.integers(0, d, n)
    sides = rng.integers(0, 2, n)
    depth = 10.0 ** (-rng.uniform(0.0, decades, n))
    for idx in range(n):
        axis, side = axes[idx], sides[idx]
        lo, hi = domain.lower[axis], domain.upper[axis]
        width = hi - lo if np.isfinite(hi - lo) else 1.0
        if side == 0:
            points[idx, axis] = lo + depth[idx] * width if np.isfinite(lo) else domain.reference_point[axis] - 1.0 / depth[idx]
        else:
            points[idx, axis] = hi - depth[idx] * width if np.isfinite(hi) else domain.reference_point[axis] + 1.0 / depth[idx]
    return points


def check_distortion_A(
    sys: SmoothSystem,
    params: DistortionParams,
    sample_plan: Optional[SamplePlan] = None,
    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None,
) -> DistortionReport:
    """
    条件 (A) 的经验证伪

    q(x,y) = |‖D_x f‖ − ‖D_y f‖| / d(x,y)^α，r(x) = C·d₀(x,∂M)^{−a}，
    y 取自 B(x, min{1, d₀(x)^a})；max q/r ≤ 1 视为通过

    Args:
        sys: 动力系统
        params: (α, C, a)
        sample_plan: 采样计划
        sampler: 基点采样函数 (rng, n) -> 点集，默认在包围盒内均匀

    Returns:
        DistortionReport
    """
    plan = sample_plan or SamplePlan()
    rng = np.random.Generator(np.random.Philox(key=plan.seed))
    domain = sys.domain
    n_stress = int(round(plan.n_points * plan.boundary_fraction))
    n_base = plan.n_points - n_stress
    if sampler is not None:
        base = sampler(rng, n_base)
    else:
        base = stress_points(domain, rng, n_base, 0.0)
    candidates = np.vstack([np.asarray(base, dtype=float).reshape(-1, sys.dim), stress_points(domain, rng, n_stress, plan.log_decades)])
    candidates = candidates[sys.in_u(candidates)]
    x = np.repeat(candidates, plan.pairs_per_point, axis=0)

    d0x = domain.d0_values(x)
    radius = np.minimum(1.0, d0x ** params.a)
    direction = rng.standard_normal(x.shape)
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    y = x + direction * (radius * rng.uniform(0.0, 1.0, len(x)) ** (1.0 / sys.dim))[:, None]

    dist = domain.distance(x, y)
    admissible = (radius > 0) & (dist > 0) & sys.in_u(y)
    skipped = int((~admissible).sum()) + (plan.n_points * plan.pairs_per_point - len(x))
    x, y, d0x, dist = x[admissible], y[admissible], d0x[admissible], dist[admissible]
    if len(x) == 0:
        return DistortionReport(0.0, True, 0, skipped, [], params)

    numerator = np.abs(spectral_norms(sys.jacobians(x)) - spectral_norms(sys.jacobians(y)))
    q = numerator / dist ** params.alpha
    with np.errstate(over="ignore"):
        r = params.C * d0x ** (-params.a)
    ratio = q / r
    top = np.argsort(ratio)[::-1][:5]
    witnesses = [
        {"x": x[i].tolist(), "y": y[i].tolist(), "q": float(q[i]), "r": float(r[i]), "ratio": float(ratio[i])}
        for i in top
    ]
    max_ratio = float(ratio.max())
    logger.info("条件 (A) 检验 %s: max q/r = %.4g，有效样本对 %d，跳过 %d", sys.name, max_ratio, len(x), skipped)
    return DistortionReport(max_ratio, max_ratio <= 1.0, int(len(x)), skipped, witnesses, params)


def default_distortion_params(sys: SmoothSystem) -> DistortionParams:
    """常数导数范数的系统用温和常数，其余用 (0.5, 100, 3)"""
    if sys.constant_derivative:
        return DistortionParams(alpha=0.99, C=1.01, a=1.01)
    return DistortionParams(alpha=0.5, C=100.0, a=3.0)


def log_plus(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(values), 0.0)


def log_abs(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.abs(np.log(values))


def per_application(value: float, m: int) -> float:
    """f^m 的量换算为每次 f 的速率"""
    return value / m if math.isfinite(value) else value
