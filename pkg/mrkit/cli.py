"""
命令行入口
verify / spectrum / entropy / partition / check-conditions / sweep
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .client import MRClient, configure_logging
from .exceptions import ConfigError, MRKitError, StageError
from .registry import BENCHMARKS, resolve
from .report import FORMATS, dumps, emit, summary_row
from .verification import VerificationService, row_violated

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_FATAL = 2


def _formats(value: str) -> List[str]:
    formats = [f.strip() for f in value.split(",") if f.strip()]
    unknown = [f for f in formats if f not in FORMATS]
    if unknown:
        raise argparse.ArgumentTypeError(f"未知的输出格式: {', '.join(unknown)}")
    return formats


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("target", help=f"基准名（{', '.join(sorted(BENCHMARKS))}）或 JSON 配置文件路径")
    parser.add_argument("--seed", type=int, default=None, help="64位种子，缺省取基准声明中的种子")
    parser.add_argument("--workers", type=int, default=1, help="工作线程数，只影响耗时")
    parser.add_argument("--out", default=None, help="输出目录；缺省只向标准输出打印")
    parser.add_argument("--format", type=_formats, default=list(FORMATS), help="输出格式，逗号分隔: json,csv,svg")
    parser.add_argument("--debug", action="store_true", help="打印调试日志与阶段输入输出")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrkit", description="Margulis-Ruelle 不等式数值验证工具")
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", help="完整验证流水线")
    _common(verify)
    verify.add_argument("--sweep", action="store_true", help="附带 (n, l, m) 扫描")

    spectrum = sub.add_parser("spectrum", help="Lyapunov 谱或正指数和的积分")
    _common(spectrum)
    spectrum.add_argument("--x", type=float, nargs="+", default=None, help="单个初始点；缺省对 μ 积分")
    spectrum.add_argument("--n", type=int, default=None, help="轨道长度")
    spectrum.add_argument("--reorth", type=int, default=1, help="重正交化间隔")

    entropy = sub.add_parser("entropy", help="分块熵与条件熵")
    _common(entropy)
    entropy.add_argument("--t-max", type=int, default=None, help="最大块长")
    entropy.add_argument("--m", type=int, default=1, help="按 f^m 计算")
    entropy.add_argument("--partition", choices=("reference", "adaptive"), default="reference")

    partition = sub.add_parser("partition", help="构造自适应分划并报告分划熵")
    _common(partition)
    partition.add_argument("--n", type=int, default=None)
    partition.add_argument("--l", type=int, default=None)
    partition.add_argument("--m", type=int, default=None)

    conditions = sub.add_parser("check-conditions", help="不变性、条件 (A) 与条件 (B)")
    _common(conditions)

    sweep = sub.add_parser("sweep", help="(n, l, m) 网格扫描")
    _common(sweep)
    sweep.add_argument("--n", type=int, nargs="+", default=None)
    sweep.add_argument("--l", type=int, nargs="+", default=None)
    sweep.add_argument("--m", type=int, nargs="+", default=None)
    return parser


def _write(document, args, prefix: Optional[str] = None) -> None:
    if args.out:
        emit(document, args.format, args.out, prefix)
    else:
        print(dumps(document))


def _verify(client: MRClient, spec, args) -> int:
    service = VerificationService(client)
    report = service.run_verification(spec, include_sweep=args.sweep)
    if args.out:
        emit(report, args.format, args.out)
    print(dumps(summary_row(report.to_dict())))
    return EXIT_OK if report.ok else EXIT_VIOLATION


def _spectrum(client: MRClient, spec, args) -> int:
    bench = client.workbench(spec)
    if args.x is not None:
        _write(client.spectrum(bench, args.x, args.n, args.reorth), args, f"{spec.name}_spectrum")
        return EXIT_OK
    average = client.positive_sum(bench)
    document = {"benchmark": spec.name, **average.to_dict(), "tables": {"spectrum": average.rows}}
    _write(document, args, f"{spec.name}_spectrum")
    return EXIT_OK


def _entropy(client: MRClient, spec, args) -> int:
    bench = client.workbench(spec)
    if args.partition == "reference" and bench.reference is not None:
        partition = bench.reference
    else:
        partition = client.build_partition(bench, bench.level_params(m=args.m))
    block = client.block_entropy(bench, partition, m=args.m if args.partition == "reference" else 1, t_max=args.t_max)
    conditional = client.conditional_entropy(bench, partition, args.m)
    document = {
        "benchmark": spec.name,
        "block": block.to_dict(),
        "conditional": conditional.to_dict(),
        "tables": {"entropy_vs_t": block.rows},
    }
    _write(document, args, f"{spec.name}_entropy")
    return EXIT_OK


class _Snapshot(dict):
    """带分划快照的字典报告"""

    def __init__(self, document: Dict, snapshot):
        super().__init__(document)
        self.snapshot = snapshot


def _partition(client: MRClient, spec, args) -> int:
    bench = client.workbench(spec)
    partition = client.build_partition(bench, bench.level_params(m=args.m, n=args.n, l=args.l))
    entropy = client.partition_entropy(partition)
    document = {"benchmark": spec.name, "partition": partition.to_dict(include_anchors=False), "entropy": entropy.to_dict()}
    if args.out:
        emit(_Snapshot(document, partition), args.format, args.out, f"{spec.name}_partition")
    else:
        print(dumps(document))
    return EXIT_OK


def _conditions(client: MRClient, spec, args) -> int:
    bench = client.workbench(spec)
    document = {
        "benchmark": spec.name,
        "invariance": client.check_invariance(bench).to_dict(),
        "condition_a": client.condition_a(bench).to_dict(),
        "condition_b": client.condition_b(bench).to_dict(),
    }
    _write(document, args, f"{spec.name}_conditions")
    return EXIT_OK


def _sweep(client: MRClient, spec, args) -> int:
    grid = dict(spec.sweep)
    for key in ("n", "l", "m"):
        if getattr(args, key):
            grid[key] = getattr(args, key)
    report = VerificationService(client).sweep(spec, grid)
    _write(report, args, f"{spec.name}_sweep")
    return EXIT_VIOLATION if any(row_violated(row) for row in report.rows) else EXIT_OK


COMMANDS = {
    "verify": _verify,
    "spectrum": _spectrum,
    "entropy": _entropy,
    "partition": _partition,
    "check-conditions": _conditions,
    "sweep": _sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.debug)
    try:
        spec = resolve(args.target)
        if args.seed is not None:
            spec = spec.with_seed(args.seed)
        client = MRClient(seed=spec.seed, workers=args.workers, debug=args.debug)
        return COMMANDS[args.command](client, spec, args)
    except StageError as e:
        logger.error(str(e))
        if args.out and e.partial is not None:
            emit(e.partial, ["json"], args.out, f"{Path(args.target).stem}_partial")
        return EXIT_FATAL
    except ConfigError as e:
        logger.error(f"配置错误: {str(e)}")
        return EXIT_FATAL
    except MRKitError as e:
        logger.error(str(e))
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
