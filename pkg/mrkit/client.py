"""
mrkit客户端
提供统一的阶段调用接口
"""

import json
import logging
import time
from typing import Any, Callable, Dict, Optional, TypeVar

from .entropy import (
    BlockEntropy,
    ConditionalEntropy,
    DecompositionReport,
    block_entropy,
    conditional_entropy,
    decomposition_report,
    reachable_cells_survey,
)
from .exceptions import MRKitError, StageError
from .lyapunov import OrbitAverage, SpectrumEstimate, positive_sum_integral, spectrum
from .measure import IntegrabilityReport, InvarianceReport, check_invariance, condition_B_report
from .partition import (
    AdaptivePartition,
    LevelParams,
    OverlapCheck,
    Partition,
    PartitionEntropy,
    build_partition,
    partition_entropy,
)
from .registry import BenchmarkSpec, Workbench, build_workbench
from .report import jsonable
from .settings import Settings
from .streams import StreamKeys
from .system import DistortionReport, SamplePlan, check_distortion_A

logger = logging.getLogger(__name__)

T = TypeVar("T")


def configure_logging(debug: bool = False) -> None:
    """给 mrkit 日志器挂一个标准错误输出的处理器"""
    root = logging.getLogger("mrkit")
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
        root.addHandler(handler)
    root.setLevel(logging.DEBUG if debug else logging.INFO)


class MRClient:
    """mrkit客户端"""

    def __init__(self, seed: int = 0, workers: int = 1, debug: bool = False, settings: Optional[Settings] = None):
        """
        初始化客户端

        Args:
            seed: 64位种子，所有随机流由它派生
            workers: 工作线程数（只影响耗时）
            debug: 是否开启调试模式
            settings: 预算与容差，缺省读取 MRKIT_* 环境变量
        """
        self.seed = int(seed)
        self.workers = max(1, int(workers))
        self.debug = debug
        self.settings = settings or Settings.from_env()
        self.settings.validate()
        self.keys = StreamKeys(self.seed)
        if debug:
            configure_logging(debug=True)

    def _run_stage(
        self,
        stage: str,
        func: Callable[..., T],
        *args: Any,
        partial: Optional[Dict[str, Any]] = None,
        inputs: Optional[Dict[str, Any]] = None,
        **kwargs: Any,
    ) -> T:
        """
        执行一个流水线阶段

        Args:
            stage: 阶段名
            func: 阶段函数
            partial: 已完成阶段的部分报告，失败时随异常带出
            inputs: 调试模式下打印的阶段输入摘要

        Returns:
            阶段结果

        Raises:
            StageError: 阶段失败
        """
        started = time.perf_counter()
        try:
            if self.debug:
                logger.debug(f"阶段 {stage} 输入: {json.dumps(jsonable(inputs or {}), ensure_ascii=False, indent=2)}")

            result = func(*args, **kwargs)

            if self.debug and hasattr(result, "to_dict"):
                logger.debug(f"阶段 {stage} 输出: {json.dumps(jsonable(result.to_dict()), ensure_ascii=False, indent=2)}")
            logger.info("阶段 %s 完成，用时 %.2fs", stage, time.perf_counter() - started)
            return result

        except StageError:
            raise
        except MRKitError as e:
            raise StageError(stage, str(e), partial) from e
        except Exception as e:
            raise StageError(stage, f"未知错误: {str(e)}", partial) from e

    def workbench(self, spec: BenchmarkSpec) -> Workbench:
        """
        解析基准声明

        Args:
            spec: 基准声明

        Returns:
            Workbench
        """
        return self._run_stage("setup", build_workbench, spec, self.settings, inputs=spec.to_dict())

    def check_invariance(self, bench: Workbench, partial: Optional[Dict[str, Any]] = None) -> InvarianceReport:
        """
        检验 μ 的不变性

        Args:
            bench: 基准对象
            partial: 部分报告

        Returns:
            InvarianceReport
        """
        return self._run_stage(
            "invariance",
            check_invariance,
            bench.measure,
            bench.system,
            None,
            bench.spec.budgets.invariance,
            self.seed,
            self.settings,
            partial=partial,
            inputs={"measure": bench.measure.name, "budget": bench.spec.budgets.invariance},
        )

    def condition_b(self, bench: Workbench, partial: Optional[Dict[str, Any]] = None) -> IntegrabilityReport:
        """
        条件 (B) 的可积性报告

        Args:
            bench: 基准对象
            partial: 部分报告

        Returns:
            IntegrabilityReport
        """
        return self._run_stage(
            "condition_b",
            condition_B_report,
            bench.measure,
            bench.system,
            bench.profile,
            bench.spec.budgets.integrability,
            self.seed,
            self.settings,
            partial=partial,
            inputs={"profile": bench.profile.mode, "budget": bench.spec.budgets.integrability},
        )

    def condition_a(self, bench: Workbench, partial: Optional[Dict[str, Any]] = None) -> DistortionReport:
        """
        条件 (A) 的经验证伪，基点一半取自 μ

        Args:
            bench: 基准对象
            partial: 部分报告

        Returns:
            DistortionReport
        """
        plan = SamplePlan(n_points=bench.spec.budgets.distortion_pairs, seed=self.keys.generate_key("condition_a"))
        return self._run_stage(
            "condition_a",
            check_distortion_A,
            bench.system,
            bench.distortion,
            plan,
            lambda rng, n: bench.measure.sample(n, rng),
            partial=partial,
            inputs={"params": vars(bench.distortion), "n_points": plan.n_points},
        )

    def spectrum(self, bench: Workbench, x, n: Optional[int] = None, reorth_every: int = 1) -> SpectrumEstimate:
        """
        单个初始点的 Lyapunov 谱

        Args:
            bench: 基准对象
            x: 初始点
            n: 轨道长度，缺省取基准的 horizon
            reorth_every: 每隔多少步做一次 QR

        Returns:
            SpectrumEstimate
        """
        n = n or bench.spec.budgets.horizon
        return self._run_stage(
            "spectrum",
            spectrum,
            bench.system,
            x,
            n,
            reorth_every,
            self.settings.burn_in,
            self.keys.generator("spectrum"),
            inputs={"x": x, "n": n, "reorth_every": reorth_every},
        )

    def positive_sum(self, bench: Workbench, partial: Optional[Dict[str, Any]] = None) -> OrbitAverage:
        """
        ∫Σλ⁺dμ

        Args:
            bench: 基准对象
            partial: 部分报告

        Returns:
            OrbitAverage
        """
        budgets = bench.spec.budgets
        return self._run_stage(
            "spectrum",
            positive_sum_integral,
            bench.system,
            bench.measure,
            budgets.horizon,
            budgets.spectrum_orbits,
            self.seed,
            1,
            self.settings,
            self.workers,
            partial=partial,
            inputs={"horizon": budgets.horizon, "n_orbits": budgets.spectrum_orbits},
        )

    def build_partition(
        self, bench: Workbench, params: LevelParams, partial: Optional[Dict[str, Any]] = None
    ) -> AdaptivePartition:
        """
        构造自适应分划

        Args:
            bench: 基准对象
            params: 分划参数
            partial: 部分报告

        Returns:
            AdaptivePartition
        """
        return self._run_stage(
            "partition",
            build_partition,
            bench.system,
            bench.measure,
            bench.profile,
            params,
            bench.spec.budgets.partition_samples,
            self.seed,
            self.settings,
            self.workers,
            partial=partial,
            inputs=params.to_dict(),
        )

    def partition_entropy(self, partition: AdaptivePartition, partial: Optional[Dict[str, Any]] = None) -> PartitionEntropy:
        return self._run_stage("partition", partition_entropy, partition, partial=partial, inputs={"l": partition.params.l})

    def overlap_check(
        self, partition: AdaptivePartition, max_centers: Optional[int] = None, partial: Optional[Dict[str, Any]] = None
    ) -> OverlapCheck:
        """球与同层立方体相交数的检查"""
        return self._run_stage(
            "partition", partition.overlap_check, max_centers, partial=partial, inputs={"max_centers": max_centers}
        )

    def block_entropy(
        self,
        bench: Workbench,
        partition: Partition,
        m: int = 1,
        t_max: Optional[int] = None,
        partial: Optional[Dict[str, Any]] = None,
    ) -> BlockEntropy:
        """
        分块熵斜率

        Args:
            bench: 基准对象
            partition: 参考分划或自适应分划
            m: 按 f^m 的块符号计算
            t_max: 最大块长，缺省取基准预算
            partial: 部分报告

        Returns:
            BlockEntropy
        """
        budgets = bench.spec.budgets
        t_max = t_max or budgets.t_max
        return self._run_stage(
            "entropy",
            block_entropy,
            bench.system,
            bench.measure,
            partition,
            t_max,
            budgets.entropy_orbits,
            self.seed,
            self.settings,
            self.workers,
            m,
            partial=partial,
            inputs={"t_max": t_max, "m": m, "n_orbits": budgets.entropy_orbits},
        )

    def conditional_entropy(
        self, bench: Workbench, partition: Partition, m: int, partial: Optional[Dict[str, Any]] = None
    ) -> ConditionalEntropy:
        budgets = bench.spec.budgets
        return self._run_stage(
            "entropy",
            conditional_entropy,
            bench.system,
            bench.measure,
            partition,
            m,
            budgets.entropy_orbits,
            self.seed,
            self.settings,
            self.workers,
            partial=partial,
            inputs={"m": m, "n_orbits": budgets.entropy_orbits},
        )

    def decomposition(
        self, bench: Workbench, partition: AdaptivePartition, partial: Optional[Dict[str, Any]] = None
    ) -> DecompositionReport:
        """
        I/II 分解诊断

        Args:
            bench: 基准对象
            partition: 自适应分划
            partial: 部分报告

        Returns:
            DecompositionReport
        """
        return self._run_stage(
            "decomposition",
            decomposition_report,
            bench.system,
            bench.measure,
            partition,
            bench.spec.budgets.decomposition_orbits,
            self.seed,
            self.settings,
            self.workers,
            partial=partial,
            inputs={"n_orbits": bench.spec.budgets.decomposition_orbits, **partition.params.to_dict()},
        )

    def reachable_survey(
        self, bench: Workbench, partition: AdaptivePartition, partial: Optional[Dict[str, Any]] = None
    ) -> Dict[str, Any]:
        budgets = bench.spec.budgets
        return self._run_stage(
            "decomposition",
            reachable_cells_survey,
            bench.system,
            partition,
            budgets.survey_cells,
            budgets.survey_probes,
            self.seed,
            partial=partial,
            inputs={"cells": budgets.survey_cells, "probes": budgets.survey_probes},
        )
