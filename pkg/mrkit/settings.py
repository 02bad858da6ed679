"""
运行配置
预算、容差以及并行分块参数
"""

import dataclasses
import os
from dataclasses import dataclass
from typing import Any, Dict

from .exceptions import ConfigError

# 所有几何比较使用的绝对容差
GEOM_TOL = 1e-12


@dataclass(frozen=True)
class Settings:
    """工具包运行配置"""

    quadrature_nodes: int = 100_000
    monte_carlo_samples: int = 1_000_000
    burn_in: int = 1000
    geom_tol: float = GEOM_TOL
    chunk_size: int = 256
    sublevel_window: float = 4096.0
    sublevel_resolution: float = 0.25
    sublevel_max_points: int = 262_144
    threshold_ladder_step: float = 0.5
    min_cell_count: int = 2
    block_batches: int = 10

    ENV_PREFIX = "MRKIT_"

    @classmethod
    def from_env(cls, environ=None) -> "Settings":
        """
        从环境变量读取覆盖值

        Args:
            environ: 环境变量字典，默认 os.environ

        Returns:
            配置对象
        """
        environ = os.environ if environ is None else environ
        overrides: Dict[str, Any] = {}
        for field in dataclasses.fields(cls):
            key = cls.ENV_PREFIX + field.name.upper()
            if key not in environ:
                continue
            try:
                overrides[field.name] = type(field.default)(environ[key])
            except ValueError:
                raise ConfigError(f"环境变量 {key} 格式错误: {environ[key]}")
        return cls().replace(**overrides)

    def replace(self, **changes) -> "Settings":
        """返回修改了部分字段的新配置"""
        unknown = set(changes) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigError(f"未知配置项: {sorted(unknown)}")
        new = dataclasses.replace(self, **changes)
        new.validate()
        return new

    def validate(self) -> None:
        """检查预算为正"""
        for name in (
            "quadrature_nodes",
            "monte_carlo_samples",
            "chunk_size",
            "block_batches",
            "sublevel_max_points",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} 必须为正整数")
        if self.burn_in < 0:
            raise ConfigError("burn_in 不能为负")
        if self.geom_tol <= 0 or self.sublevel_resolution <= 0 or self.sublevel_window <= 0:
            raise ConfigError("容差、分辨率和窗口半径必须为正")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)
