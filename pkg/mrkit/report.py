"""
报告输出模块
JSON 全量报告、CSV 表格、SVG 分划快照与收敛图，以及报告结构校验
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from matplotlib import colormaps
from matplotlib.figure import Figure
from matplotlib.patches import Polygon

from .exceptions import ArgumentError, EmitError

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv", "svg")
SCHEMA_PATH = Path(__file__).parent / "schema" / "verification_report.v1.json"
SUMMARY_COLUMNS = ("benchmark", "seed", "lhs", "lhs_stderr", "rhs", "rhs_stderr", "margin", "margin_stderr", "violated")


def jsonable(value: Any) -> Any:
    """
    转为可写入 JSON 的结构

    NaN 写为 null，±inf 写为字符串 "inf"/"-inf"，numpy 数组与标量转为 Python 对象
    """
    if hasattr(value, "to_dict") and not isinstance(value, type):
        return jsonable(value.to_dict())
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def dumps(report: Any) -> str:
    return json.dumps(jsonable(report), ensure_ascii=False, indent=2)


def without_timestamp(document: Dict[str, Any]) -> Dict[str, Any]:
    """去掉 runtime.timestamp 后的副本，用于确定性比较"""
    out = dict(document)
    if isinstance(out.get("runtime"), dict):
        out["runtime"] = {k: v for k, v in out["runtime"].items() if k != "timestamp"}
    return out


# ---- 结构校验 ----

_TYPES = {
    "object": dict,
    "array": list,
    "string": str,
    "boolean": bool,
    "null": type(None),
}


def _type_ok(value: Any, expected: Union[str, List[str]]) -> bool:
    for name in [expected] if isinstance(expected, str) else expected:
        if name == "number" and isinstance(value, (int, float)) and not isinstance(value, bool):
            return True
        if name == "integer" and isinstance(value, int) and not isinstance(value, bool):
            return True
        if name in _TYPES and isinstance(value, _TYPES[name]):
            return True
    return False


def load_schema() -> Dict[str, Any]:
    return json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))


def check_schema(document: Any, schema: Optional[Dict[str, Any]] = None, path: str = "$") -> List[str]:
    """
    按 type / required / properties / items 子集校验，返回错误列表（空表示通过）
    """
    schema = load_schema() if schema is None else schema
    errors: List[str] = []
    if "type" in schema and not _type_ok(document, schema["type"]):
        return [f"{path}: 类型应为 {schema['type']}"]
    if isinstance(document, dict):
        for key in schema.get("required", []):
            if key not in document:
                errors.append(f"{path}: 缺少字段 {key}")
        for key, sub in schema.get("properties", {}).items():
            if key in document:
                errors.extend(check_schema(document[key], sub, f"{path}.{key}"))
    if isinstance(document, list) and "items" in schema:
        for i, item in enumerate(document):
            errors.extend(check_schema(item, schema["items"], f"{path}[{i}]"))
    return errors


# ---- CSV ----

def _write_csv(path: Path, rows: Sequence[Dict[str, Any]], columns: Optional[Sequence[str]] = None) -> Path:
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(key for key in row if key not in columns)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: jsonable(row.get(key)) for key in columns})
    return path


def summary_row(document: Dict[str, Any]) -> Dict[str, Any]:
    lhs = document.get("lhs") or {}
    rhs = document.get("rhs") or {}
    return {
        "benchmark": document.get("benchmark"),
        "seed": document.get("seed"),
        "lhs": lhs.get("best"),
        "lhs_stderr": lhs.get("best_stderr"),
        "rhs": rhs.get("estimate"),
        "rhs_stderr": rhs.get("stderr"),
        "margin": document.get("margin"),
        "margin_stderr": document.get("margin_stderr"),
        "violated": document.get("violated"),
    }


# ---- SVG ----

def _cell_polygons(partition) -> Iterable:
    """(编码, 层级, 多边形顶点)；一维时层级作纵坐标画成条带"""
    for s in sorted(partition.levels):
        cells_per_cube = partition.cells_per_cube
        for k, box in enumerate(partition.boxes(s)):
            i, j = divmod(k, cells_per_cube)
            code = partition.encode((s, i, j if partition.params.l else None))
            corners = box.vertices()
            if partition.dim == 1:
                lo, hi = float(corners.min()), float(corners.max())
                xy = [(lo, s), (hi, s), (hi, s + 0.8), (lo, s + 0.8)]
            else:
                xy = corners[[0, 1, 3, 2], :2]
            yield code, s, xy


def partition_svg(partition, path: Path) -> int:
    """
    分划快照：每个单元一个多边形，按层级着色，gid 为 cell-<编码>

    Returns:
        多边形数
    """
    if partition.dim > 2:
        raise ArgumentError("分划快照只支持一维和二维")
    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot(1, 1, 1)
    levels = sorted(partition.levels) or [partition.params.n]
    cmap = colormaps["viridis"]
    span = max(levels[-1] - levels[0], 1)
    count = 0
    for code, s, xy in _cell_polygons(partition):
        color = cmap((s - levels[0]) / span)
        ax.add_patch(Polygon(xy, closed=True, facecolor=color, edgecolor="black", linewidth=0.2, gid=f"cell-{code}"))
        count += 1
    domain = partition.sys.domain
    lower = np.where(np.isfinite(domain.lower), domain.lower, partition.samples.min(axis=0))
    upper = np.where(np.isfinite(domain.upper), domain.upper, partition.samples.max(axis=0))
    ax.set_xlim(lower[0], upper[0])
    if partition.dim == 2:
        ax.set_ylim(lower[1], upper[1])
        ax.set_aspect("equal")
    else:
        ax.set_ylim(levels[0], levels[-1] + 1)
        ax.set_ylabel("level s")
    ax.set_title(f"{partition.sys.name}: n={partition.params.n}, l={partition.params.l}, {count} cells")
    fig.savefig(path, format="svg", metadata={"Date": None})
    return count


def convergence_svg(document: Dict[str, Any], path: Path) -> None:
    """分块熵 H_t/t 与增量随 t 的变化、正指数和的轨道累计平均，以右端为参照线"""
    fig = Figure(figsize=(10, 4))
    ax1 = fig.add_subplot(1, 2, 1)
    ax2 = fig.add_subplot(1, 2, 2)
    rhs = (document.get("rhs") or {}).get("estimate")
    tables = document.get("tables") or {}

    rows = tables.get("entropy_vs_t") or []
    if rows:
        t = [row["t"] for row in rows]
        ax1.plot(t, [row["H_per_t"] for row in rows], "o-", label="H_t / t")
        ax1.plot(t, [row["increment"] for row in rows], "s--", label="H_t − H_{t−1}")
    if rhs is not None:
        ax1.axhline(rhs, color="red", linewidth=1, label="∫Σλ⁺dμ")
    ax1.set_xlabel("t")
    ax1.set_title("entropy")
    ax1.legend(fontsize=8)

    spectrum_rows = [row for row in tables.get("spectrum") or [] if row.get("positive_sum") is not None]
    values = np.array([row["positive_sum"] for row in spectrum_rows], dtype=float)
    values = values[np.isfinite(values)]
    if len(values):
        running = np.cumsum(values) / np.arange(1, len(values) + 1)
        ax2.plot(np.arange(1, len(values) + 1), running, "-", label="running mean")
    if rhs is not None:
        ax2.axhline(rhs, color="red", linewidth=1)
    ax2.set_xlabel("orbits")
    ax2.set_title("Σλ⁺")
    ax2.legend(fontsize=8)
    fig.savefig(path, format="svg", metadata={"Date": None})


# ---- 写出 ----

def emit(report: Any, formats: Sequence[str] = FORMATS, out_dir: Union[str, Path] = ".", prefix: Optional[str] = None) -> List[Path]:
    """
    写出报告

    Args:
        report: VerificationReport、SweepReport，或已经是字典的部分报告
        formats: json / csv / svg 的子集
        out_dir: 输出目录，不存在时创建
        prefix: 文件名前缀，缺省取基准名

    Returns:
        写出的文件路径

    Raises:
        ArgumentError: 未知格式
        EmitError: 写文件失败
    """
    unknown = [f for f in formats if f not in FORMATS]
    if unknown:
        raise ArgumentError(f"未知的输出格式: {', '.join(unknown)}")
    document = jsonable(report)
    out = Path(out_dir)
    prefix = prefix or str(document.get("benchmark", "report"))
    written: List[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "json" in formats:
            path = out / f"{prefix}.json"
            path.write_text(json.dumps(document, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
            written.append(path)
        if "csv" in formats:
            if "lhs" in document:
                written.append(_write_csv(out / f"{prefix}_summary.csv", [summary_row(document)], SUMMARY_COLUMNS))
            tables = dict(document.get("tables") or {})
            if "rows" in document:
                tables["sweep"] = document["rows"]
            for name, rows in tables.items():
                written.append(_write_csv(out / f"{prefix}_{name}.csv", rows))
        if "svg" in formats:
            snapshot = getattr(report, "snapshot", None)
            if snapshot is not None and snapshot.dim <= 2:
                path = out / f"{prefix}_partition.svg"
                partition_svg(snapshot, path)
                written.append(path)
            if "tables" in document:
                path = out / f"{prefix}_convergence.svg"
                convergence_svg(document, path)
                written.append(path)
    except OSError as e:
        raise EmitError(getattr(e, "filename", None) or out, f"写出失败 ({e.strerror or e})")
    for path in written:
        logger.info("已写出 %s", path)
    return written
