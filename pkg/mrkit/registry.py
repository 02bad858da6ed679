"""
基准注册表
内置基准的系统、测度、正则剖面、参考分划与已知答案，以及声明式配置文件的读取
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .exceptions import ArgumentError, ConfigError, MRKitError
from .geometry import ChartDomain, RegularityConfig, RegularityProfile
from .measure import NAMED_DENSITIES, EmpiricalMeasure, InvariantMeasure
from .partition import LevelParams, ReferencePartition, check_l1
from .settings import Settings
from .streams import StreamKeys
from .system import DistortionParams, SmoothSystem, default_distortion_params
from .systems import BUILTIN_SYSTEMS, polynomial, rational

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
# ε_{s_max} 不低于此值，避免下溢
MIN_EPSILON_LOG2 = -990
GAUSS_ENTROPY = math.pi ** 2 / (6 * math.log(2))


@dataclass(frozen=True)
class Budgets:
    """各阶段的样本与轨道预算"""

    invariance: Optional[int] = None
    integrability: Optional[int] = None
    distortion_pairs: int = 10_000
    spectrum_orbits: int = 100
    horizon: int = 10_000
    partition_samples: int = 10_000
    entropy_orbits: int = 20_000
    t_max: int = 8
    decomposition_orbits: int = 10_000
    survey_cells: int = 20
    survey_probes: int = 1000

    def validate(self) -> None:
        for name, value in self.__dict__.items():
            if value is not None and value <= 0:
                raise ConfigError(f"预算 {name} 必须为正")


@dataclass(frozen=True)
class BenchmarkSpec:
    """
    一次验证所需的全部声明

    system / measure / profile / reference 都是可序列化的字典，由本模块的构造函数解析
    """

    name: str
    system: Dict[str, Any]
    measure: Dict[str, Any]
    profile: Dict[str, Any] = field(default_factory=lambda: {"mode": "trivial", "b": 1.0})
    level: Dict[str, Any] = field(default_factory=lambda: {"m": 1, "n": 2, "l": 0, "s_max": 24})
    distortion: Optional[Dict[str, float]] = None
    reference: Optional[Dict[str, Any]] = None
    budgets: Budgets = field(default_factory=Budgets)
    answers: Dict[str, float] = field(default_factory=dict)
    sweep: Dict[str, List[int]] = field(default_factory=lambda: {"n": [2], "l": [0, 1], "m": [1]})
    seed: int = 0
    description: str = ""

    def validate(self) -> None:
        """
        Raises:
            ConfigError: 引用无法解析或预算非正
        """
        self.budgets.validate()
        build_system(self)
        for key in ("n", "l", "m"):
            if not self.sweep.get(key):
                raise ConfigError(f"扫描网格 {key} 不能为空")
        for key in ("m", "n", "l", "s_max"):
            if key not in self.level:
                raise ConfigError(f"分划参数缺少 {key}")

    def with_seed(self, seed: int) -> "BenchmarkSpec":
        return replace(self, seed=seed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "system": dict(self.system),
            "measure": dict(self.measure),
            "profile": dict(self.profile),
            "level": dict(self.level),
            "distortion": dict(self.distortion) if self.distortion else None,
            "reference": dict(self.reference) if self.reference else None,
            "budgets": dict(self.budgets.__dict__),
            "answers": dict(self.answers),
            "sweep": {k: list(v) for k, v in self.sweep.items()},
            "seed": self.seed,
        }


# ---- 构造 ----

def _domain(entry: Optional[Dict[str, Any]]) -> Optional[ChartDomain]:
    if not entry:
        return None
    if "interval" in entry:
        lo, hi = entry["interval"]
        return ChartDomain.interval(float(lo), float(hi), reference_point=entry.get("reference_point"))
    if "half_line" in entry:
        return ChartDomain.half_line(float(entry["half_line"]), float(entry.get("reference_point", entry["half_line"] + 1)))
    if "box" in entry:
        lower, upper = entry["box"]
        return ChartDomain.box(lower, upper, reference_point=entry.get("reference_point"))
    if "torus" in entry:
        return ChartDomain.torus(int(entry["torus"]), float(entry.get("period", 1.0)))
    if "euclidean" in entry:
        return ChartDomain.euclidean(int(entry["euclidean"]))
    raise ConfigError(f"无法识别的区域声明: {entry}")


def build_system(spec: BenchmarkSpec) -> SmoothSystem:
    """
    解析系统声明：内置名称，或多项式/有理函数系数表

    Raises:
        ConfigError: 名称未注册或系数表不合法
    """
    entry = spec.system
    try:
        if "builtin" in entry:
            name = entry["builtin"]
            if name not in BUILTIN_SYSTEMS:
                raise ConfigError(f"未注册的系统: {name}")
            return BUILTIN_SYSTEMS[name](**entry.get("params", {}))
        if "polynomial" in entry:
            table = entry["polynomial"]
            return polynomial(
                table["coefficients"], _domain(entry.get("domain")), bool(table.get("modulo", False)), entry.get("name", spec.name)
            )
        if "rational" in entry:
            table = entry["rational"]
            return rational(
                table["numerator"],
                table["denominator"],
                _domain(entry.get("domain")),
                bool(table.get("modulo", False)),
                entry.get("name", spec.name),
            )
    except (KeyError, TypeError, ArgumentError) as e:
        raise ConfigError(f"系统声明错误: {str(e)}")
    raise ConfigError(f"无法识别的系统声明: {entry}")


def build_measure(spec: BenchmarkSpec, sys: SmoothSystem, settings: Optional[Settings] = None) -> InvariantMeasure:
    """
    解析测度声明：命名密度、样本文件或 Birkhoff 轨道

    Raises:
        ConfigError: 名称未注册或文件无法读取
    """
    entry = spec.measure
    settings = settings or Settings()
    try:
        if "density" in entry:
            name = entry["density"]
            if name not in NAMED_DENSITIES:
                raise ConfigError(f"未注册的密度: {name}")
            return NAMED_DENSITIES[name](**entry.get("params", {}), settings=settings)
        if "empirical" in entry:
            table = entry["empirical"]
            return EmpiricalMeasure.from_file(table["path"], int(table.get("dim", sys.dim)))
        if "orbit" in entry:
            table = entry["orbit"]
            rng = StreamKeys(spec.seed).generator("registry.orbit")
            x0 = table.get("x0", sys.domain.reference_point.tolist())
            return EmpiricalMeasure.from_orbit(sys, x0, int(table.get("n", 100_000)), int(table.get("burn_in", settings.burn_in)), rng)
    except (KeyError, TypeError) as e:
        raise ConfigError(f"测度声明错误: {str(e)}")
    except MRKitError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"测度构造失败: {str(e)}")
    raise ConfigError(f"无法识别的测度声明: {entry}")


def build_profile(spec: BenchmarkSpec, sys: SmoothSystem, settings: Optional[Settings] = None) -> RegularityProfile:
    entry = spec.profile
    b = float(entry.get("b", 1.0))
    mode = entry.get("mode", "trivial")
    if mode == "trivial":
        return RegularityProfile.trivial(b)
    if mode == "estimated":
        config = RegularityConfig(b=b, policy=entry.get("policy", "pure-norm"))
        return RegularityProfile.estimated(sys.domain, config, settings)
    raise ConfigError(f"未知的剖面模式: {mode}")


def build_reference(spec: BenchmarkSpec, sys: SmoothSystem) -> Optional[ReferencePartition]:
    entry = spec.reference
    if not entry:
        return None
    kind = entry.get("kind", "dyadic")
    if kind == "dyadic":
        return ReferencePartition.dyadic(sys.domain, int(entry.get("depth", 1)))
    if kind == "cf_digits":
        return ReferencePartition.cf_digits(sys.domain, int(entry.get("max_digit", 2 ** 62)))
    if kind == "integer_part":
        return ReferencePartition.integer_part(sys.domain, int(entry.get("max_digit", 2 ** 62)))
    raise ConfigError(f"未知的参考分划: {kind}")


def distortion_params(spec: BenchmarkSpec, sys: SmoothSystem) -> DistortionParams:
    if spec.distortion:
        return DistortionParams(float(spec.distortion["alpha"]), float(spec.distortion["C"]), float(spec.distortion["a"]))
    return default_distortion_params(sys)


def level_params(
    spec: BenchmarkSpec,
    sys: SmoothSystem,
    m: Optional[int] = None,
    n: Optional[int] = None,
    l: Optional[int] = None,
) -> LevelParams:
    """
    由声明与 (A) 的常数得到 LevelParams；未给 l₁ 时取最小可行值，s_max 截到 ε 不下溢
    """
    entry = spec.level
    dist = distortion_params(spec, sys)
    m = int(entry["m"] if m is None else m)
    n = int(entry["n"] if n is None else n)
    l = int(entry["l"] if l is None else l)
    b = float(spec.profile.get("b", 1.0))
    draft = LevelParams(m, n, int(entry.get("l1", 1)), l, b, dist.alpha, dist.C, dist.a, max(n, int(entry["s_max"])))
    l1 = entry.get("l1") or check_l1(draft, sys.dim).minimal
    if l1 is None:
        raise ConfigError("找不到满足约束的 l₁")
    cap = int(-MIN_EPSILON_LOG2 // (int(l1) * sys.dim))
    s_max = max(n, min(int(entry["s_max"]), cap))
    return draft.replace(l1=int(l1), s_max=s_max)


# ---- 内置基准 ----

LOG2 = math.log(2.0)

BENCHMARKS: Dict[str, BenchmarkSpec] = {
    "doubling": BenchmarkSpec(
        "doubling",
        {"builtin": "doubling"},
        {"density": "uniform"},
        level={"m": 1, "n": 2, "l": 0, "s_max": 24},
        reference={"kind": "dyadic", "depth": 1},
        answers={"entropy": LOG2, "positive_sum": LOG2},
        sweep={"n": [2], "l": [0, 1, 2, 3], "m": [1, 2, 4]},
        description="边界 + 常导数",
    ),
    "gauss": BenchmarkSpec(
        "gauss",
        {"builtin": "gauss"},
        {"density": "gauss"},
        level={"m": 1, "n": 3, "l": 0, "s_max": 40},
        reference={"kind": "cf_digits", "max_digit": 8},
        answers={"entropy": GAUSS_ENTROPY, "positive_sum": GAUSS_ENTROPY},
        sweep={"n": [3], "l": [0, 1], "m": [1]},
        description="边界 + 无界导数",
    ),
    "gauss_noncompact": BenchmarkSpec(
        "gauss_noncompact",
        {"builtin": "gauss_noncompact"},
        {"density": "gauss_noncompact"},
        profile={"mode": "estimated", "b": 1.0, "policy": "pure-norm"},
        level={"m": 1, "n": 4, "l": 0, "s_max": 40},
        reference={"kind": "integer_part", "max_digit": 8},
        answers={"entropy": GAUSS_ENTROPY, "positive_sum": GAUSS_ENTROPY},
        sweep={"n": [4], "l": [0, 1], "m": [1]},
        description="非紧 + 边界：Gauss 映射在 (1, ∞) 上的共轭",
    ),
    "logistic4": BenchmarkSpec(
        "logistic4",
        {"builtin": "logistic4"},
        {"density": "arcsine"},
        level={"m": 1, "n": 4, "l": 0, "s_max": 40},
        reference={"kind": "dyadic", "depth": 1},
        answers={"entropy": LOG2, "positive_sum": LOG2},
        sweep={"n": [4], "l": [0, 1], "m": [1]},
        description="边界 + 导数零点",
    ),
    "tent": BenchmarkSpec(
        "tent",
        {"builtin": "tent"},
        {"density": "uniform"},
        level={"m": 1, "n": 2, "l": 0, "s_max": 24},
        reference={"kind": "dyadic", "depth": 1},
        answers={"entropy": LOG2, "positive_sum": LOG2},
        sweep={"n": [2], "l": [0, 1, 2], "m": [1]},
        description="边界",
    ),
    "product_doubling": BenchmarkSpec(
        "product_doubling",
        {"builtin": "product_doubling"},
        {"density": "product_uniform"},
        level={"m": 1, "n": 2, "l": 0, "s_max": 24},
        reference={"kind": "dyadic", "depth": 1},
        budgets=Budgets(horizon=2000, entropy_orbits=40_000, t_max=5),
        answers={"entropy": 2 * LOG2, "positive_sum": 2 * LOG2},
        sweep={"n": [2], "l": [0, 1], "m": [1]},
        description="二维，检验外幂",
    ),
    "rotation": BenchmarkSpec(
        "rotation",
        {"builtin": "rotation"},
        {"density": "uniform"},
        level={"m": 1, "n": 1, "l": 0, "s_max": 8},
        reference={"kind": "dyadic", "depth": 1},
        budgets=Budgets(t_max=256),
        answers={"entropy": 0.0, "positive_sum": 0.0},
        sweep={"n": [1], "l": [0, 1], "m": [1]},
        description="无边界有界系统",
    ),
}


@dataclass
class Workbench:
    """一个基准解析后的全部对象"""

    spec: BenchmarkSpec
    system: SmoothSystem
    measure: InvariantMeasure
    profile: RegularityProfile
    reference: Optional[ReferencePartition]
    distortion: DistortionParams
    settings: Settings

    def level_params(self, m: Optional[int] = None, n: Optional[int] = None, l: Optional[int] = None) -> LevelParams:
        return level_params(self.spec, self.system, m, n, l)


def build_workbench(spec: BenchmarkSpec, settings: Optional[Settings] = None) -> Workbench:
    """
    Raises:
        ConfigError: 任何引用无法解析
    """
    settings = settings or Settings()
    spec.validate()
    system = build_system(spec)
    return Workbench(
        spec,
        system,
        build_measure(spec, system, settings),
        build_profile(spec, system, settings),
        build_reference(spec, system),
        distortion_params(spec, system),
        settings,
    )


def get_benchmark(name: str) -> BenchmarkSpec:
    """
    Raises:
        ConfigError: 未注册的基准
    """
    if name not in BENCHMARKS:
        raise ConfigError(f"未注册的基准: {name}，可选: {', '.join(sorted(BENCHMARKS))}")
    return BENCHMARKS[name]


def load_benchmark_config(path: Union[str, Path]) -> BenchmarkSpec:
    """
    读取 JSON 配置（schema_version = 1）

    可以用 "extends" 继承一个内置基准，只覆盖给出的字段

    Raises:
        ConfigError: 文件无法读取、版本不符或声明无法解析
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"无法读取配置文件 {path}: {str(e)}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"配置文件 {path} 解析失败: {str(e)}")
    if not isinstance(document, dict):
        raise ConfigError("配置文件顶层必须是对象")
    if document.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"不支持的 schema_version: {document.get('schema_version')}")

    base = get_benchmark(document["extends"]) if "extends" in document else None
    fields: Dict[str, Any] = {}
    for key in ("system", "measure", "profile", "level", "distortion", "reference", "answers", "sweep"):
        if key in document:
            fields[key] = document[key]
    if "budgets" in document:
        try:
            fields["budgets"] = replace(base.budgets if base else Budgets(), **document["budgets"])
        except TypeError as e:
            raise ConfigError(f"预算声明错误: {str(e)}")
    if "seed" in document:
        fields["seed"] = int(document["seed"])
    name = document.get("name", base.name if base else path.stem)

    if base is not None:
        spec = replace(base, name=name, **fields)
    else:
        if "system" not in fields or "measure" not in fields:
            raise ConfigError("配置文件必须声明 system 与 measure")
        spec = BenchmarkSpec(name, **fields)
    spec.validate()
    logger.info("已读取配置 %s: 基准 %s", path, spec.name)
    return spec


def resolve(target: str) -> BenchmarkSpec:
    """基准名或配置文件路径"""
    if target.endswith(".json") or Path(target).is_file():
        return load_benchmark_config(target)
    return get_benchmark(target)
