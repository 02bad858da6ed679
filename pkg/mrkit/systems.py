"""
内置系统
基准映射以及由多项式/有理函数系数表声明的用户映射
"""

import math
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .exceptions import ArgumentError
from .geometry import ChartDomain
from .system import SmoothSystem

# 二进制类映射的影子扰动幅度
SHADOW_JITTER = 2.0 ** -52
# Gauss 映射求积时切分的 1/k 个数
GAUSS_BREAKPOINTS = 1024

GOLDEN = (math.sqrt(5) - 1) / 2


def _constant_jacobian(matrix: np.ndarray):
    matrix = np.asarray(matrix, dtype=float)

    def jacobian(points):
        return np.broadcast_to(matrix, (len(points),) + matrix.shape).copy()

    return jacobian


def doubling() -> SmoothSystem:
    """x → 2x mod 1"""
    return SmoothSystem(
        "doubling",
        ChartDomain.interval(0.0, 1.0, reference_point=[0.5]),
        lambda p: np.mod(2 * p, 1.0),
        _constant_jacobian([[2.0]]),
        breakpoints=[0.5],
        branch=lambda p: np.floor(2 * p[:, 0]).astype(np.int64),
        jitter=SHADOW_JITTER,
        constant_derivative=True,
        description="倍增映射，边界 + 常导数",
    )


def _fractional(p):
    return p - np.floor(p)


def gauss() -> SmoothSystem:
    """x → 1/x − ⌊1/x⌋"""
    return SmoothSystem(
        "gauss",
        ChartDomain.interval(0.0, 1.0, reference_point=[0.5]),
        lambda p: _fractional(1.0 / p),
        lambda p: (-1.0 / p ** 2).reshape(-1, 1, 1),
        breakpoints=[1.0 / k for k in range(2, GAUSS_BREAKPOINTS + 1)],
        branch=lambda p: np.floor(1.0 / p[:, 0]).astype(np.int64),
        description="Gauss 映射，边界 + 无界导数",
    )


def noncompact_gauss() -> SmoothSystem:
    """Gauss 映射经 x → 1/x 共轭到 (1, ∞)：y → 1/frac(y)"""
    return SmoothSystem(
        "gauss_noncompact",
        ChartDomain.half_line(1.0, reference_point=2.0),
        lambda p: 1.0 / _fractional(p),
        lambda p: (-1.0 / _fractional(p) ** 2).reshape(-1, 1, 1),
        breakpoints=[float(k) for k in range(2, GAUSS_BREAKPOINTS + 1)],
        branch=lambda p: np.floor(p[:, 0]).astype(np.int64),
        description="(1, ∞) 上的 Gauss 共轭，非紧 + 边界",
    )


def logistic4() -> SmoothSystem:
    """x → 4x(1−x)"""
    return SmoothSystem(
        "logistic4",
        ChartDomain.interval(0.0, 1.0, reference_point=[0.5]),
        lambda p: 4 * p * (1 - p),
        lambda p: (4 - 8 * p).reshape(-1, 1, 1),
        description="满 logistic 映射，导数在 1/2 处为零",
    )


def tent() -> SmoothSystem:
    """x → 1 − |1 − 2x|"""
    return SmoothSystem(
        "tent",
        ChartDomain.interval(0.0, 1.0, reference_point=[0.5]),
        lambda p: 1 - np.abs(1 - 2 * p),
        lambda p: np.where(p < 0.5, 2.0, -2.0).reshape(-1, 1, 1),
        breakpoints=[0.5],
        branch=lambda p: (p[:, 0] >= 0.5).astype(np.int64),
        jitter=SHADOW_JITTER,
        constant_derivative=True,
        description="帐篷映射",
    )


def rotation(angle: float = GOLDEN) -> SmoothSystem:
    """圆周旋转 x → x + θ mod 1（无边界图卡）"""
    return SmoothSystem(
        "rotation",
        ChartDomain.torus(1),
        lambda p: np.mod(p + angle, 1.0),
        _constant_jacobian([[1.0]]),
        branch=lambda p: (p[:, 0] + angle >= 1.0).astype(np.int64),
        constant_derivative=True,
        description="无边界有界系统，熵与指数均为 0",
    )


def product_doubling() -> SmoothSystem:
    """(x, y) → (2x mod 1, 2y mod 1)"""
    return SmoothSystem(
        "product_doubling",
        ChartDomain.box([0.0, 0.0], [1.0, 1.0]),
        lambda p: np.mod(2 * p, 1.0),
        _constant_jacobian(2.0 * np.eye(2)),
        branch=lambda p: (2 * np.floor(2 * p[:, 0]) + np.floor(2 * p[:, 1])).astype(np.int64),
        jitter=SHADOW_JITTER,
        constant_derivative=True,
        description="二维乘积倍增映射，检验外幂",
    )


def linear(matrix: Sequence[Sequence[float]], domain: Optional[ChartDomain] = None, name: str = "linear") -> SmoothSystem:
    """线性映射 x → Ax，默认定义在无边界的 ℝ^d 上"""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ArgumentError("线性映射的矩阵必须是方阵")
    domain = domain or ChartDomain.euclidean(A.shape[0])
    singular = np.linalg.svd(A, compute_uv=False)
    return SmoothSystem(
        name,
        domain,
        lambda p: p @ A.T,
        _constant_jacobian(A),
        constant_derivative=bool(np.allclose(singular, singular[0])),
        description=f"线性映射 {A.tolist()}",
    )


def identity(domain: Optional[ChartDomain] = None) -> SmoothSystem:
    domain = domain or ChartDomain.interval(0.0, 1.0)
    return linear(np.eye(domain.dim), domain, name="identity")


def polynomial(
    coefficients: Sequence[float],
    domain: Optional[ChartDomain] = None,
    modulo: bool = False,
    name: str = "polynomial",
) -> SmoothSystem:
    """
    一维多项式映射 f(x) = Σ c_k x^k，可选取模 1

    Args:
        coefficients: 按升幂排列的系数表
        domain: 图卡区域，默认 (0, 1)
        modulo: 是否取模 1
        name: 系统名称
    """
    if len(coefficients) == 0:
        raise ArgumentError("系数表不能为空")
    poly = Polynomial(np.asarray(coefficients, dtype=float))
    deriv = poly.deriv()
    domain = domain or ChartDomain.interval(0.0, 1.0, reference_point=[0.5])
    if domain.dim != 1:
        raise ArgumentError("系数表映射只支持一维")

    def mapping(p):
        value = poly(p)
        return np.mod(value, 1.0) if modulo else value

    return SmoothSystem(
        name,
        domain,
        mapping,
        lambda p: deriv(p).reshape(-1, 1, 1),
        branch=(lambda p: np.floor(poly(p[:, 0])).astype(np.int64)) if modulo else None,
        description=f"多项式映射 {list(coefficients)}" + ("（模 1）" if modulo else ""),
    )


def rational(
    numerator: Sequence[float],
    denominator: Sequence[float],
    domain: Optional[ChartDomain] = None,
    modulo: bool = False,
    name: str = "rational",
) -> SmoothSystem:
    """一维有理映射 f = p/q，导数 (p′q − pq′)/q²；q 的零点不属于 U"""
    if len(numerator) == 0 or len(denominator) == 0:
        raise ArgumentError("系数表不能为空")
    p = Polynomial(np.asarray(numerator, dtype=float))
    q = Polynomial(np.asarray(denominator, dtype=float))
    dp, dq = p.deriv(), q.deriv()
    domain = domain or ChartDomain.interval(0.0, 1.0, reference_point=[0.5])
    if domain.dim != 1:
        raise ArgumentError("系数表映射只支持一维")

    def mapping(x):
        value = p(x) / q(x)
        return np.mod(value, 1.0) if modulo else value

    def jacobian(x):
        return ((dp(x) * q(x) - p(x) * dq(x)) / q(x) ** 2).reshape(-1, 1, 1)

    return SmoothSystem(
        name,
        domain,
        mapping,
        jacobian,
        in_u=lambda x: np.abs(q(x[:, 0])) > 0,
        branch=(lambda x: np.floor(p(x[:, 0]) / q(x[:, 0])).astype(np.int64)) if modulo else None,
        description=f"有理映射 {list(numerator)}/{list(denominator)}" + ("（模 1）" if modulo else ""),
    )


BUILTIN_SYSTEMS = {
    "doubling": doubling,
    "gauss": gauss,
    "gauss_noncompact": noncompact_gauss,
    "logistic4": logistic4,
    "tent": tent,
    "rotation": rotation,
    "product_doubling": product_doubling,
}
