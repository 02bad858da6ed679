"""
验证服务模块
执行 Margulis-Ruelle 不等式的完整验证流水线与参数扫描
"""

import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from .client import MRClient
from .exceptions import ArgumentError, StageError
from .partition import AdaptivePartition
from .registry import BenchmarkSpec, Workbench

logger = logging.getLogger(__name__)

MARGIN_SIGMAS = 3.0
# 插入估计的偏差余量
MARGIN_SLACK = 0.01
# 每层检查球与立方体相交数的样本上限
OVERLAP_CENTERS = 2000


def _combined(*stderrs: Optional[float]) -> float:
    return math.sqrt(sum((s or 0.0) ** 2 for s in stderrs))


def row_violated(row: Dict[str, Any]) -> bool:
    """扫描行的 margin 低于 −(3σ + 余量)"""
    if row.get("status") != "ok" or row.get("margin") is None:
        return False
    lhs_stderr = row["block_stderr"] if row.get("block_rate") is not None else row["conditional_stderr"]
    return row["margin"] < -(MARGIN_SIGMAS * _combined(row["rhs_stderr"], lhs_stderr) + MARGIN_SLACK)


def runtime_metadata(client: MRClient) -> Dict[str, Any]:
    """运行元数据；timestamp 不参与确定性比较"""
    from . import __version__

    return {
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
        "seed": client.seed,
        "settings": client.settings.to_dict(),
    }


@dataclass
class VerificationReport:
    """
    一次验证的记录：左端熵估计、右端正指数积分、margin 以及各阶段的诊断

    margin 由存储的字段现算，部分报告缺少两端时为 None
    """

    benchmark: str
    seed: int
    lhs: Dict[str, Any] = field(default_factory=dict)
    rhs: Dict[str, Any] = field(default_factory=dict)
    invariance: Optional[Dict[str, Any]] = None
    condition_a: Optional[Dict[str, Any]] = None
    condition_b: Optional[Dict[str, Any]] = None
    partition: Optional[Dict[str, Any]] = None
    decomposition: Optional[Dict[str, Any]] = None
    reachable: Optional[Dict[str, Any]] = None
    checks: Dict[str, Any] = field(default_factory=dict)
    sweep: List[Dict[str, Any]] = field(default_factory=list)
    answers: Dict[str, float] = field(default_factory=dict)
    tables: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    runtime: Dict[str, Any] = field(default_factory=dict)
    status: str = "complete"
    failed_stage: Optional[str] = None
    error: Optional[str] = None
    snapshot: Optional[AdaptivePartition] = field(default=None, repr=False, compare=False)

    @property
    def margin(self) -> Optional[float]:
        if "estimate" not in self.rhs or "best" not in self.lhs:
            return None
        return self.rhs["estimate"] - self.lhs["best"]

    @property
    def margin_stderr(self) -> Optional[float]:
        if self.margin is None:
            return None
        return _combined(self.rhs.get("stderr"), self.lhs.get("best_stderr"))

    @property
    def tolerance(self) -> Optional[float]:
        if self.margin_stderr is None:
            return None
        return MARGIN_SIGMAS * self.margin_stderr + MARGIN_SLACK

    @property
    def violated(self) -> bool:
        return self.margin is not None and self.margin < -self.tolerance

    @property
    def ok(self) -> bool:
        return self.status == "complete" and not self.violated

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": 1,
            "benchmark": self.benchmark,
            "seed": self.seed,
            "status": self.status,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "lhs": dict(self.lhs),
            "rhs": dict(self.rhs),
            "margin": self.margin,
            "margin_stderr": self.margin_stderr,
            "tolerance": self.tolerance,
            "violated": self.violated,
            "answers": dict(self.answers),
            "invariance": self.invariance,
            "condition_a": self.condition_a,
            "condition_b": self.condition_b,
            "partition": self.partition,
            "decomposition": self.decomposition,
            "reachable": self.reachable,
            "checks": dict(self.checks),
            "sweep": [dict(row) for row in self.sweep],
            "tables": {name: [dict(row) for row in rows] for name, rows in self.tables.items()},
            "runtime": dict(self.runtime),
        }


@dataclass
class SweepReport:
    """(n, l, m) 网格上的左右两端与趋势标注"""

    benchmark: str
    seed: int
    rows: List[Dict[str, Any]] = field(default_factory=list)
    annotations: Dict[str, Any] = field(default_factory=dict)
    rhs: Dict[str, Any] = field(default_factory=dict)
    runtime: Dict[str, Any] = field(default_factory=dict)

    @property
    def tables(self) -> Dict[str, List[Dict[str, Any]]]:
        return {"sweep": self.rows}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": 1,
            "benchmark": self.benchmark,
            "seed": self.seed,
            "rhs": dict(self.rhs),
            "rows": [dict(row) for row in self.rows],
            "annotations": dict(self.annotations),
            "runtime": dict(self.runtime),
        }


class VerificationService:
    """验证服务"""

    def __init__(self, client: MRClient):
        """
        初始化验证服务

        Args:
            client: mrkit客户端实例
        """
        self.client = client

    def run_verification(self, spec: BenchmarkSpec, include_sweep: bool = False) -> VerificationReport:
        """
        完整验证：不变性 → (B) → (A) → 正指数积分 → 分划 → 熵 → 分解诊断 → margin

        Args:
            spec: 基准声明
            include_sweep: 是否附带 (n, l, m) 扫描

        Returns:
            VerificationReport

        Raises:
            StageError: 阶段失败，异常带有阶段名与部分报告
        """
        client = self.client
        report = VerificationReport(spec.name, client.seed, answers=dict(spec.answers), runtime=runtime_metadata(client))
        try:
            self._pipeline(spec, report)
        except StageError as e:
            report.status = "partial"
            report.failed_stage = e.stage
            report.error = e.message
            e.partial = report.to_dict()
            logger.error("验证 %s 在阶段 %s 中止: %s", spec.name, e.stage, e.message)
            raise
        if include_sweep:
            report.sweep = self.sweep(spec).rows
            report.tables["sweep"] = report.sweep
        logger.info(
            "验证 %s: lhs = %.6g, rhs = %.6g, margin = %.4g ± %.2g%s",
            spec.name,
            report.lhs["best"],
            report.rhs["estimate"],
            report.margin,
            report.margin_stderr,
            "（违反）" if report.violated else "",
        )
        return report

    def _pipeline(self, spec: BenchmarkSpec, report: VerificationReport) -> None:
        client = self.client
        bench = client.workbench(spec)

        report.invariance = client.check_invariance(bench, report.to_dict()).to_dict()
        condition_b = client.condition_b(bench, report.to_dict())
        report.condition_b = condition_b.to_dict()
        report.condition_a = client.condition_a(bench, report.to_dict()).to_dict()

        rhs = client.positive_sum(bench, report.to_dict())
        report.rhs = {
            "estimate": rhs.estimate,
            "stderr": rhs.stderr,
            "horizon": rhs.horizon,
            "n_orbits": rhs.n_orbits,
            "escape_statistics": dict(rhs.escape_statistics),
            "analytic": spec.answers.get("positive_sum"),
        }
        report.tables["spectrum"] = rhs.rows

        params = bench.level_params()
        partition = client.build_partition(bench, params, report.to_dict())
        entropy_rows = []
        for l in sorted(set(spec.sweep.get("l", [])) | {params.l}):
            refined = partition.with_refinement(l)
            entropy = client.partition_entropy(refined, report.to_dict())
            entropy_rows.append({"n": params.n, "l": l, "m": params.m, "cells": refined.n_cells, **entropy.to_dict()})
        overlap = client.overlap_check(partition, OVERLAP_CENTERS, report.to_dict())
        report.partition = {**partition.to_dict(include_anchors=False), "entropy_sweep": entropy_rows, "overlap": overlap.to_dict()}
        report.snapshot = partition

        report.lhs = self._lhs(bench, partition, report)

        decomposition = client.decomposition(bench, partition, report.to_dict())
        report.decomposition = decomposition.to_dict()
        if params.n in partition.levels:
            report.reachable = client.reachable_survey(bench, partition, report.to_dict())
        else:
            report.reachable = {"cells": 0, "violations": 0, "max_ratio": None, "empty_level_n": True}
        report.checks["decomposition_within_bounds"] = not decomposition.violations
        report.checks["partition_entropy_within_bound"] = all(row["gap"] >= 0 for row in entropy_rows)
        report.checks["overlap_within_bound"] = overlap.ok
        report.checks["condition_b"] = condition_b.status
        report.checks["condition_a"] = report.condition_a["passed"]
        report.checks["invariance"] = report.invariance["passed"]

    def _lhs(self, bench: Workbench, partition: AdaptivePartition, report: VerificationReport) -> Dict[str, Any]:
        """左端：参考分划的分块熵斜率；没有参考分划时取未欠采样的自适应斜率最大者"""
        client = self.client
        params = partition.params
        adaptive = client.block_entropy(bench, partition, partial=report.to_dict())
        conditional = client.conditional_entropy(bench, partition, params.m, report.to_dict())
        lhs: Dict[str, Any] = {
            "adaptive_block_slope": adaptive.slope,
            "adaptive_block_stderr": adaptive.slope_stderr,
            "adaptive_undersampled": adaptive.undersampled,
            "conditional": conditional.value / params.m,
            "conditional_stderr": conditional.stderr / params.m,
            "token_share": adaptive.token_share,
        }
        if params.m == 1 and adaptive.slope_t >= 2:
            lhs_check = conditional.value >= adaptive.slope - MARGIN_SIGMAS * _combined(conditional.stderr, adaptive.slope_stderr)
            report.checks["conditional_dominates_block"] = bool(lhs_check)
        else:
            report.checks["conditional_dominates_block"] = None

        if bench.reference is not None:
            block = client.block_entropy(bench, bench.reference, partial=report.to_dict())
            lhs.update(
                {
                    "block_slope": block.slope,
                    "block_stderr": block.slope_stderr,
                    "reference": bench.reference.name,
                    "undersampled": block.undersampled,
                    "best": block.slope,
                    "best_stderr": block.slope_stderr,
                    "source": f"block:{bench.reference.name}",
                }
            )
            rows = block.rows
        else:
            candidates = [adaptive] if not adaptive.undersampled else []
            for l in sorted(set(bench.spec.sweep.get("l", [])) - {params.l}):
                extra = client.block_entropy(bench, partition.with_refinement(l), partial=report.to_dict())
                if not extra.undersampled:
                    candidates.append(extra)
            if candidates:
                best = max(candidates, key=lambda b: b.slope)
                lhs.update({"best": best.slope, "best_stderr": best.slope_stderr, "source": "block:adaptive"})
            else:
                lhs.update({"best": lhs["conditional"], "best_stderr": lhs["conditional_stderr"], "source": "conditional"})
            lhs.update({"block_slope": adaptive.slope, "block_stderr": adaptive.slope_stderr, "reference": None})
            rows = adaptive.rows
        report.tables["entropy_vs_t"] = [dict(row, partition=lhs["reference"] or "adaptive") for row in rows]
        lhs["analytic"] = bench.spec.answers.get("entropy")
        return lhs

    def sweep(self, spec: BenchmarkSpec, grid: Optional[Dict[str, List[int]]] = None) -> SweepReport:
        """
        在 (n, l, m) 网格上逐格计算分划熵、条件熵率与分块熵率

        单格失败记录在行内，扫描继续

        Args:
            spec: 基准声明
            grid: {"n": [...], "l": [...], "m": [...]}，缺省取基准的扫描网格

        Returns:
            SweepReport

        Raises:
            ArgumentError: 网格为空
        """
        grid = grid or spec.sweep
        if not all(grid.get(key) for key in ("n", "l", "m")):
            raise ArgumentError("扫描网格不能为空")
        client = self.client
        bench = client.workbench(spec)
        rhs = client.positive_sum(bench)
        report = SweepReport(
            spec.name,
            client.seed,
            rhs={"estimate": rhs.estimate, "stderr": rhs.stderr},
            runtime=runtime_metadata(client),
        )

        rates: Dict[int, Dict[str, Any]] = {}
        for m in sorted(grid["m"]):
            if bench.reference is None:
                continue
            try:
                block = client.block_entropy(bench, bench.reference, m=m)
                rates[m] = {"rate": block.rate, "stderr": block.rate_stderr, "undersampled": block.undersampled}
            except StageError as e:
                rates[m] = {"rate": None, "stderr": None, "error": e.message}

        for m in sorted(grid["m"]):
            for n in sorted(grid["n"]):
                base = {"n": n, "m": m}
                try:
                    partition = client.build_partition(bench, bench.level_params(m=m, n=n, l=0))
                except StageError as e:
                    report.rows.extend({**base, "l": l, "status": "failed", "error": e.message} for l in sorted(grid["l"]))
                    continue
                for l in sorted(grid["l"]):
                    report.rows.append(self._sweep_cell(bench, partition.with_refinement(l), rates.get(m), rhs.estimate, rhs.stderr))

        report.annotations = self._annotate(report.rows, rates)
        return report

    def _sweep_cell(self, bench: Workbench, partition: AdaptivePartition, rate, rhs: float, rhs_stderr: float) -> Dict[str, Any]:
        params = partition.params
        row: Dict[str, Any] = {"n": params.n, "l": params.l, "m": params.m, "status": "ok"}
        row["empty_level_n"] = params.n not in partition.levels
        row["cells"] = partition.n_cells
        try:
            entropy = self.client.partition_entropy(partition)
            conditional = self.client.conditional_entropy(bench, partition, params.m)
        except StageError as e:
            row.update({"status": "failed", "error": e.message})
            return row
        row.update(
            {
                "partition_entropy": entropy.entropy,
                "partition_bound": entropy.bound + entropy.truncation_correction,
                "conditional_rate": conditional.value / params.m,
                "conditional_stderr": conditional.stderr / params.m,
                "block_rate": rate["rate"] if rate else None,
                "block_stderr": rate["stderr"] if rate else None,
                "rhs": rhs,
                "rhs_stderr": rhs_stderr,
            }
        )
        lhs = row["block_rate"] if row["block_rate"] is not None else row["conditional_rate"]
        row["lhs"] = lhs
        row["margin"] = rhs - lhs
        return row

    @staticmethod
    def _annotate(rows: List[Dict[str, Any]], rates: Dict[int, Dict[str, Any]]) -> Dict[str, Any]:
        """固定 (n, m) 时分划熵关于 l 不减；不同 m 的每步熵率在 3σ 内一致"""
        monotone: Dict[str, bool] = {}
        groups: Dict[tuple, List[Dict[str, Any]]] = {}
        for row in rows:
            if row["status"] == "ok":
                groups.setdefault((row["n"], row["m"]), []).append(row)
        for (n, m), members in sorted(groups.items()):
            values = [r["partition_entropy"] for r in sorted(members, key=lambda r: r["l"])]
            monotone[f"n={n},m={m}"] = all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

        usable = {m: r for m, r in rates.items() if r.get("rate") is not None}
        agree = all(
            abs(usable[i]["rate"] - usable[j]["rate"]) <= MARGIN_SIGMAS * _combined(usable[i]["stderr"], usable[j]["stderr"]) + MARGIN_SLACK
            for i in usable
            for j in usable
            if i < j
        )
        return {
            "entropy_nondecreasing_in_l": monotone,
            "rates_by_m": {str(m): r for m, r in sorted(rates.items())},
            "rates_agree": agree if len(usable) > 1 else None,
            "failed_cells": sum(row["status"] != "ok" for row in rows),
            "empty_level_n_cells": sum(bool(row.get("empty_level_n")) for row in rows),
        }
