"""
mrkit异常类
"""


class MRKitError(Exception):
    """工具包基础异常类"""
    pass


class DomainError(MRKitError):
    """点不在 M∖∂M 内，或子水平集采样为空"""
    pass


class ArgumentError(MRKitError, ValueError):
    """参数异常"""
    pass


class ConfigError(MRKitError):
    """配置文件或注册表名称异常"""
    pass


class ResolutionError(MRKitError):
    """网格或二分分辨率不足"""
    def __init__(self, message, smallest_tested=None):
        self.smallest_tested = smallest_tested
        super().__init__(message)


class EscapeError(MRKitError):
    """轨道离开 U 或到达边界"""
    def __init__(self, step, message=None, statistics=None):
        self.step = step
        self.statistics = statistics or {}
        super().__init__(message or f"轨道在第 {step} 步逃逸")


class DivergenceError(MRKitError):
    """积分在加密过程中发散"""
    def __init__(self, component, message=None):
        self.component = component
        super().__init__(message or f"积分发散: {component}")


class StageError(MRKitError):
    """流水线阶段失败"""
    def __init__(self, stage, message, partial=None):
        self.stage = stage
        self.message = message
        self.partial = partial
        super().__init__(f"阶段 {stage} 失败: {message}")


class EmitError(MRKitError):
    """报告写出失败"""
    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{message}: {path}")
