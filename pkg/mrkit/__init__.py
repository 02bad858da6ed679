"""
mrkit
Margulis-Ruelle 不等式的数值验证工具：Lyapunov 谱、自适应分划、熵估计与验证流水线
"""

try:
    from ._version import __version__
except ImportError:
    # 如果 _version.py 不存在，使用默认版本
    __version__ = "0.1.0"

__author__ = "mrkit开发者"

from .client import MRClient
from .exceptions import (
    ArgumentError,
    ConfigError,
    DivergenceError,
    DomainError,
    EmitError,
    EscapeError,
    MRKitError,
    ResolutionError,
    StageError,
)
from .geometry import ChartDomain, RegularityConfig, RegularityProfile
from .lyapunov import SpectrumEstimate, positive_sum_integral, spectrum
from .measure import check_invariance, condition_B_report, integrate
from .partition import AdaptivePartition, LevelParams, ReferencePartition, build_partition, partition_entropy
from .registry import BENCHMARKS, BenchmarkSpec, get_benchmark, load_benchmark_config
from .report import check_schema, emit
from .settings import Settings
from .system import SmoothSystem, check_distortion_A, exterior_norm
from .verification import VerificationReport, VerificationService

__all__ = [
    "MRClient",
    "VerificationService",
    "VerificationReport",
    "BenchmarkSpec",
    "BENCHMARKS",
    "get_benchmark",
    "load_benchmark_config",
    "Settings",
    "ChartDomain",
    "RegularityConfig",
    "RegularityProfile",
    "SmoothSystem",
    "check_distortion_A",
    "exterior_norm",
    "check_invariance",
    "condition_B_report",
    "integrate",
    "spectrum",
    "positive_sum_integral",
    "SpectrumEstimate",
    "LevelParams",
    "AdaptivePartition",
    "ReferencePartition",
    "build_partition",
    "partition_entropy",
    "emit",
    "check_schema",
    "MRKitError",
    "DomainError",
    "ArgumentError",
    "ConfigError",
    "ResolutionError",
    "EscapeError",
    "DivergenceError",
    "StageError",
    "EmitError",
]
