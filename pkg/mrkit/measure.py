"""
不变测度模块
解析密度与经验测度的采样、积分、不变性检验以及条件 (B) 的可积性报告
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ArgumentError, DivergenceError, DomainError, EscapeError
from .geometry import ChartDomain, RegularityProfile
from .quadrature import EndpointSubstitution, integrate_interval
from .settings import Settings
from .streams import StreamKeys
from .system import SmoothSystem, log_abs, log_plus, spectral_norms

logger = logging.getLogger(__name__)

PointFunction = Callable[[np.ndarray], np.ndarray]

# 不变性检验的容差
QUADRATURE_INVARIANCE_TOL = 1e-3
MONTE_CARLO_SIGMAS = 3.0
# 反函数求样本时 CDF 表的节点数与二分次数
_CDF_TABLE_SIZE = 2049
_BISECTION_STEPS = 40


class InvariantMeasure:
    """不变测度基类"""

    kind = "abstract"

    def __init__(self, name: str, dim: int):
        self.name = name
        self.dim = dim

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, dim={self.dim})"


class AnalyticDensity(InvariantMeasure):
    """
    一维解析密度

    density 可以不归一，构造时用求积算出归一化常数
    """

    kind = "analytic_density"

    def __init__(
        self,
        name: str,
        density: Callable[[np.ndarray], np.ndarray],
        lower: float,
        upper: float,
        ppf: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        breakpoints: Sequence[float] = (),
        settings: Optional[Settings] = None,
    ):
        """
        初始化解析密度

        Args:
            name: 名称
            density: 对一维数组向量化的（未归一）密度
            lower: 支撑下端，可为 -inf
            upper: 支撑上端，可为 +inf
            ppf: 闭式分位函数；缺省时用 CDF 表 + 二分
            breakpoints: 密度的间断点
            settings: 求积预算

        Raises:
            DomainError: 密度不可归一化
        """
        super().__init__(name, 1)
        self.lower, self.upper = float(lower), float(upper)
        self._density = density
        self._ppf = ppf
        self.breakpoints = tuple(breakpoints)
        self.settings = settings or Settings()

        result = integrate_interval(density, self.lower, self.upper, self.breakpoints, self.settings.quadrature_nodes)
        if result.diverged or not math.isfinite(result.value) or result.value <= 0:
            raise DomainError(f"密度 {name} 不可归一化")
        self.normalization = result.value
        self._cdf_table: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x > self.lower) & (x < self.upper)
        out = np.zeros_like(x)
        out[inside] = self._density(x[inside]) / self.normalization
        return out

    def _table(self) -> Tuple[np.ndarray, np.ndarray]:
        if self._cdf_table is None:
            sub = EndpointSubstitution(self.lower, self.upper)
            t = np.linspace(0.0, 1.0, _CDF_TABLE_SIZE)
            xs = sub.x(t)
            xs[0], xs[-1] = self.lower, self.upper
            cdf = np.zeros_like(xs)
            budget = max(100, self.settings.quadrature_nodes // _CDF_TABLE_SIZE)
            for i in range(1, len(xs) - 1):
                cdf[i] = cdf[i - 1] + integrate_interval(
                    self.pdf, xs[i - 1], xs[i], self.breakpoints, budget, detect_divergence=False
                ).value
            cdf[-1] = 1.0
            self._cdf_table = (xs, np.minimum(cdf, 1.0))
        return self._cdf_table

    def ppf(self, u: np.ndarray) -> np.ndarray:
        """分位函数"""
        if self._ppf is not None:
            return self._ppf(u)
        xs, cdf = self._table()
        idx = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(xs) - 2)
        lo, hi = xs[idx], xs[idx + 1]
        lo = np.where(np.isfinite(lo), lo, np.minimum(hi - 1.0, -1.0))
        hi = np.where(np.isfinite(hi), hi, np.maximum(lo + 1.0, 1.0) * 1e6)
        base = cdf[idx]
        nodes, weights = np.polynomial.legendre.leggauss(8)
        for _ in range(_BISECTION_STEPS):
            mid = (lo + hi) / 2
            left = xs[idx]
            left = np.where(np.isfinite(left), left, mid - 1.0)
            half = (mid - left) / 2
            pts = half[:, None] * nodes[None, :] + ((mid + left) / 2)[:, None]
            mass = base + half * (self.pdf(pts) @ weights)
            below = mass < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return (lo + hi) / 2

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(n)
        x = self.ppf(u)
        return np.clip(x, np.nextafter(self.lower, np.inf), np.nextafter(self.upper, -np.inf)).reshape(-1, 1)


class ProductDensity(InvariantMeasure):
    """一维解析密度的乘积；积分只用 Monte Carlo"""

    kind = "analytic_density"

    def __init__(self, name: str, factors: Sequence[AnalyticDensity]):
        super().__init__(name, len(factors))
        self.factors = list(factors)

    def pdf(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        out = np.ones(len(pts))
        for axis, factor in enumerate(self.factors):
            out *= factor.pdf(pts[:, axis])
        return out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.column_stack([factor.sample(n, rng)[:, 0] for factor in self.factors])


class EmpiricalMeasure(InvariantMeasure):
    """由样本点（通常是一条长轨道）给出的经验测度"""

    kind = "empirical"

    def __init__(self, name: str, points: np.ndarray):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if len(pts) == 0:
            raise DomainError("经验测度的样本不能为空")
        super().__init__(name, pts.shape[1])
        self.points = pts

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.points[rng.integers(0, len(self.points), n)]

    @classmethod
    def from_orbit(
        cls,
        sys: SmoothSystem,
        x,
        n: int,
        burn_in: int = 1000,
        rng: Optional[np.random.Generator] = None,
        name: Optional[str] = None,
    ) -> "EmpiricalMeasure":
        """
        Birkhoff 采样：μ-典型点的一条长轨道

        Raises:
            EscapeError: 轨道逃逸
        """
        orbit, escaped_at = sys.trajectory(sys.domain.points(x)[:1], burn_in + n - 1, rng)
        if escaped_at[0] >= 0:
            raise EscapeError(int(escaped_at[0]), f"Birkhoff 采样轨道在第 {escaped_at[0]} 步逃逸")
        return cls(name or f"{sys.name}-orbit", orbit[burn_in:, 0])

    @classmethod
    def from_file(cls, path: Union[str, Path], dim: int = 1, name: Optional[str] = None) -> "EmpiricalMeasure":
        """
        读取样本文件：.csv 每行一个点；其他扩展名按小端 float64 二进制、每点 dim 列读取
        """
        path = Path(path)
        try:
            if path.suffix.lower() == ".csv":
                data = np.loadtxt(path, delimiter=",", ndmin=2)
            else:
                data = np.fromfile(path, dtype="<f8").reshape(-1, dim)
        except OSError as e:
            raise DomainError(f"无法读取样本文件 {path}: {str(e)}")
        except ValueError as e:
            raise DomainError(f"样本文件 {path} 格式错误: {str(e)}")
        if data.shape[1] != dim:
            raise DomainError(f"样本文件 {path} 的列数为 {data.shape[1]}，应为 {dim}")
        return cls(name or path.stem, data)


# ---- 内置密度 ----

LN2 = math.log(2.0)


def uniform(lower: float = 0.0, upper: float = 1.0, settings: Optional[Settings] = None) -> AnalyticDensity:
    return AnalyticDensity(
        "uniform",
        lambda x: np.ones_like(x),
        lower,
        upper,
        ppf=lambda u: lower + (upper - lower) * u,
        settings=settings,
    )


def gauss_density(settings: Optional[Settings] = None) -> AnalyticDensity:
    """1/((1+x) ln 2)，Gauss 映射的不变密度"""
    return AnalyticDensity(
        "gauss",
        lambda x: 1.0 / ((1.0 + x) * LN2),
        0.0,
        1.0,
        ppf=lambda u: np.exp2(u) - 1.0,
        settings=settings,
    )


def noncompact_gauss_density(settings: Optional[Settings] = None) -> AnalyticDensity:
    """1/(ln 2 · y(y+1))，Gauss 密度在 y = 1/x 下的推前"""
    return AnalyticDensity(
        "gauss_noncompact",
        lambda y: 1.0 / (LN2 * y * (y + 1.0)),
        1.0,
        np.inf,
        ppf=lambda u: 1.0 / (np.exp2(1.0 - u) - 1.0),
        settings=settings,
    )


def arcsine(settings: Optional[Settings] = None) -> AnalyticDensity:
    """1/(π√(x(1−x)))，满 logistic 映射的不变密度"""
    return AnalyticDensity(
        "arcsine",
        lambda x: 1.0 / (np.pi * np.sqrt(x * (1.0 - x))),
        0.0,
        1.0,
        ppf=lambda u: np.sin(np.pi * u / 2) ** 2,
        settings=settings,
    )


def product_uniform(dim: int = 2, settings: Optional[Settings] = None) -> ProductDensity:
    return ProductDensity("product_uniform", [uniform(0.0, 1.0, settings) for _ in range(dim)])


NAMED_DENSITIES = {
    "uniform": uniform,
    "gauss": gauss_density,
    "gauss_noncompact": noncompact_gauss_density,
    "arcsine": arcsine,
    "product_uniform": product_uniform,
}


# ---- 采样与积分 ----

def sample(mu: InvariantMeasure, n: int, seed: int = 0, stage: str = "measure.sample") -> np.ndarray:
    """
    从 μ 抽取 n 个点，给定种子可复现

    Args:
        mu: 不变测度
        n: 样本数
        seed: 64位种子
        stage: 子随机流标签

    Returns:
        (n, d) 点集
    """
    if n < 1:
        raise ArgumentError("样本数必须为正整数")
    return mu.sample(n, StreamKeys(seed).generator(stage))


@dataclass
class IntegralEstimate:
    """积分估计"""

    value: float
    uncertainty: float
    method: str
    diverged: bool = False
    evaluations: int = 0
    excluded_mass: float = 0.0
    cutoffs: List[float] = field(default_factory=list)

    @property
    def finite(self) -> bool:
        return not self.diverged and math.isfinite(self.value)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value if math.isfinite(self.value) else None,
            "uncertainty": self.uncertainty if math.isfinite(self.uncertainty) else None,
            "method": self.method,
            "diverged": self.diverged,
            "evaluations": self.evaluations,
            "excluded_mass": self.excluded_mass,
        }


def _uses_quadrature(mu: InvariantMeasure) -> bool:
    return isinstance(mu, AnalyticDensity)


def integrate(
    mu: InvariantMeasure,
    phi: Callable[[np.ndarray], np.ndarray],
    budget: Optional[int] = None,
    seed: int = 0,
    breakpoints: Sequence[float] = (),
    settings: Optional[Settings] = None,
    stage: str = "measure.integrate",
) -> IntegralEstimate:
    """
    ∫ φ dμ

    一维解析密度用 scipy 的 quad（带截断序列的发散检测）；其余用 Monte Carlo 并给出标准误。
    φ 接受 (k, d) 点集。发散时返回带标记的估计而不是数值

    Args:
        mu: 测度
        phi: 被积函数
        budget: 求值预算，至少 100
        seed: Monte Carlo 种子
        breakpoints: φ 的间断点（只用于求积）
        settings: 默认预算
        stage: 子随机流标签
    """
    settings = settings or Settings()
    if _uses_quadrature(mu):
        budget = settings.quadrature_nodes if budget is None else budget
        if budget < 100:
            raise ArgumentError("积分预算不能少于 100")

        def integrand(x):
            return phi(x.reshape(-1, 1)) * mu.pdf(x)

        result = integrate_interval(integrand, mu.lower, mu.upper, tuple(breakpoints) + mu.breakpoints, budget)
        return IntegralEstimate(result.value, result.error, "quadrature", result.diverged, result.nodes, 0.0, result.cutoffs)

    budget = settings.monte_carlo_samples if budget is None else budget
    if budget < 100:
        raise ArgumentError("积分预算不能少于 100")
    if isinstance(mu, EmpiricalMeasure) and budget >= len(mu.points):
        points = mu.points
        method = "empirical-average"
    else:
        points = sample(mu, budget, seed, stage)
        method = "monte-carlo"
    values = np.asarray(phi(points), dtype=float)
    if not np.all(np.isfinite(values)):
        return IntegralEstimate(float("nan"), float("inf"), method, True, len(points))
    stderr = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return IntegralEstimate(float(values.mean()), stderr, method, False, len(points))


# ---- 不变性 ----

TestFunction = Tuple[str, Callable[[np.ndarray], np.ndarray]]


def default_test_functions(domain: ChartDomain) -> List[TestFunction]:
    """
    单位坐标下的光滑阶跃 tanh((u−c)/0.05)、低阶矩 (2u−1)^k 与高斯鼓包
    """
    functions: List[TestFunction] = []

    def on_axis(axis, g):
        return lambda points: g(domain.unit_coordinates(points)[:, axis])

    for axis in range(domain.dim):
        for c in (0.25, 0.5, 0.75):
            functions.append((f"step[{axis}]@{c}", on_axis(axis, lambda u, c=c: np.tanh((u - c) / 0.05))))
        for k in (1, 2, 3):
            functions.append((f"moment[{axis}]^{k}", on_axis(axis, lambda u, k=k: (2 * u - 1) ** k)))
        for c in (0.2, 0.8):
            functions.append((f"bump[{axis}]@{c}", on_axis(axis, lambda u, c=c: np.exp(-(((u - c) / 0.1) ** 2)))))
    if domain.dim >= 2:

        def mixed(points):
            u = domain.unit_coordinates(points)
            return (2 * u[:, 0] - 1) * (2 * u[:, 1] - 1)

        functions.append(("mixed[0,1]", mixed))
    return functions


@dataclass
class InvarianceReport:
    """不变性检验结果"""

    max_defect: float
    passed: bool
    tolerance: float
    method: str
    defects: Dict[str, float] = field(default_factory=dict)
    excluded_mass: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "max_defect": self.max_defect,
            "passed": self.passed,
            "tolerance": self.tolerance,
            "method": self.method,
            "defects": dict(self.defects),
            "excluded_mass": self.excluded_mass,
        }


def _pushforward(sys: SmoothSystem, phi, escapes: List[int]):
    def composed(points):
        image = sys.apply(points)
        ok = sys.domain.contains(image)
        out = np.zeros(len(points))
        if ok.any():
            out[ok] = phi(image[ok])
        if not ok.all():
            escapes.append(int((~ok).sum()))
        return out

    return composed


def _escape_indicator(sys: SmoothSystem):
    def indicator(points):
        return (~sys.domain.contains(sys.apply(points))).astype(float)

    return indicator


def check_invariance(
    mu: InvariantMeasure,
    sys: SmoothSystem,
    test_functions: Optional[Sequence[TestFunction]] = None,
    budget: Optional[int] = None,
    seed: int = 0,
    settings: Optional[Settings] = None,
) -> InvarianceReport:
    """
    max_φ |∫φ∘f dμ − ∫φ dμ|

    求积时容差 1e-3；Monte Carlo 时用同一批样本的差值，容差为 3 倍标准误

    Returns:
        InvarianceReport，φ∘f 求值时逃逸的质量单独报告
    """
    settings = settings or Settings()
    functions = list(test_functions) if test_functions else default_test_functions(sys.domain)
    if not functions:
        raise ArgumentError("测试函数不能为空")

    defects: Dict[str, float] = {}
    escapes: List[int] = []
    if _uses_quadrature(mu):
        for name, phi in functions:
            after = integrate(mu, _pushforward(sys, phi, escapes), budget, seed, sys.breakpoints, settings)
            before = integrate(mu, phi, budget, seed, (), settings)
            defects[name] = abs(after.value - before.value)
        excluded = integrate(mu, _escape_indicator(sys), budget, seed, sys.breakpoints, settings).value if escapes else 0.0
        max_defect = max(defects.values())
        tolerance = QUADRATURE_INVARIANCE_TOL
        passed = max_defect <= tolerance
        method = "quadrature"
    else:
        n = settings.monte_carlo_samples if budget is None else budget
        points = sample(mu, n, seed, "measure.invariance")
        image = sys.apply(points)
        ok = sys.domain.contains(image)
        excluded = float(1.0 - ok.mean())
        passed = True
        tolerance = 0.0
        for name, phi in functions:
            diff = phi(image[ok]) - phi(points[ok])
            defects[name] = abs(float(diff.mean()))
            stderr = float(diff.std(ddof=1) / math.sqrt(len(diff))) if len(diff) > 1 else 0.0
            tolerance = max(tolerance, MONTE_CARLO_SIGMAS * stderr)
            passed = passed and defects[name] <= MONTE_CARLO_SIGMAS * stderr + 1e-12
        max_defect = max(defects.values())
        method = "monte-carlo"

    logger.info("不变性检验 %s/%s: 最大偏差 %.3g (%s)", sys.name, mu.name, max_defect, "通过" if passed else "未通过")
    return InvarianceReport(max_defect, passed, tolerance, method, defects, excluded)


# ---- 条件 (B) ----

B_COMPONENTS = ("log_plus_derivative", "log_d0", "log_rho", "log_tankage")


@dataclass
class IntegrabilityReport:
    """条件 (B) 的四个积分及其最大值的积分"""

    components: Dict[str, IntegralEstimate]
    maximum: IntegralEstimate
    status: str
    failed_component: Optional[str] = None
    method: str = "quadrature"
    details: Dict[str, Any] = field(default_factory=dict)

    def require_finite(self) -> None:
        """
        Raises:
            DivergenceError: 某一分量发散
        """
        if self.status != "pass":
            raise DivergenceError(self.failed_component or "maximum")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "components": {name: est.to_dict() for name, est in self.components.items()},
            "maximum": self.maximum.to_dict(),
            "status": self.status,
            "failed_component": self.failed_component,
            "method": self.method,
            "details": dict(self.details),
        }


def integrability_integrands(sys: SmoothSystem, profile: RegularityProfile) -> Dict[str, PointFunction]:
    """条件 (B) 的四个被积函数"""
    domain = sys.domain
    return {
        "log_plus_derivative": lambda p: log_plus(spectral_norms(sys.jacobians(p))),
        "log_d0": lambda p: log_abs(domain.d0_values(p)),
        "log_rho": lambda p: log_abs(profile.rho_sublevel(p)),
        "log_tankage": lambda p: np.log(np.maximum(profile.tankage(p), 1.0)),
    }


def condition_B_report(
    mu: InvariantMeasure,
    sys: SmoothSystem,
    profile: RegularityProfile,
    budget: Optional[int] = None,
    seed: int = 0,
    settings: Optional[Settings] = None,
) -> IntegrabilityReport:
    """
    分别估计 ∫log⁺‖D_x f‖dμ、∫|log d₀|dμ、∫|log ρ_b|dμ、∫log N_b dμ 以及四者最大值的积分

    任一分量被判定发散时状态为 "fail" 并给出分量名
    """
    integrands = integrability_integrands(sys, profile)

    def maximum(points):
        return np.max(np.vstack([f(points) for f in integrands.values()]), axis=0)

    components = {
        name: integrate(mu, f, budget, seed, (), settings, stage=f"condition_b.{name}")
        for name, f in integrands.items()
    }
    top = integrate(mu, maximum, budget, seed, (), settings, stage="condition_b.maximum")

    failed = next((name for name, est in components.items() if not est.finite), None)
    if failed is None and not top.finite:
        failed = "maximum"
    status = "pass" if failed is None else "fail"
    if failed:
        logger.warning("条件 (B) 未通过: %s 分量发散", failed)
    return IntegrabilityReport(
        components,
        top,
        status,
        failed,
        "quadrature" if _uses_quadrature(mu) else "monte-carlo",
        {"profile": dict(profile.details), "profile_mode": profile.mode},
    )
