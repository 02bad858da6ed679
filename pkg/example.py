"""
mrkit使用示例
"""

from dataclasses import replace

from mrkit import MRClient, MRKitError, StageError, VerificationService, get_benchmark
from mrkit.entropy import block_entropy
from mrkit.measure import uniform
from mrkit.partition import ReferencePartition
from mrkit.report import emit
from mrkit.systems import doubling

def basic_usage():
    """基础使用示例"""

    # 初始化客户端
    client = MRClient(
        seed=7,        # 所有随机流由它派生
        workers=4,     # 工作线程数，只影响耗时
        debug=True     # 开启调试模式
    )

    try:
        # 完整验证倍增映射
        service = VerificationService(client)
        report = service.run_verification(get_benchmark("doubling"))
        print("左端 h_μ(f):", report.lhs["best"], "±", report.lhs["best_stderr"])
        print("右端 ∫Σλ⁺dμ:", report.rhs["estimate"], "±", report.rhs["stderr"])
        print("margin:", report.margin, "违反" if report.violated else "通过")

        # 写出 JSON / CSV / SVG
        paths = emit(report, out_dir="out")
        print("已写出:", [str(p) for p in paths])

    except MRKitError as e:
        print(f"错误: {e}")

def service_usage():
    """分阶段调用示例"""

    client = MRClient(seed=7)
    bench = client.workbench(get_benchmark("gauss"))

    try:
        print("=== 条件检查 ===")
        print("不变性:", client.check_invariance(bench).passed)
        print("条件 (B):", client.condition_b(bench).status)
        print("条件 (A):", client.condition_a(bench).passed)

        print("=== Lyapunov 谱 ===")
        estimate = client.spectrum(bench, 0.3, 10_000)
        print("单条轨道:", estimate.exponents)
        average = client.positive_sum(bench)
        print("∫Σλ⁺dμ:", average.estimate, "±", average.stderr)

        print("=== 自适应分划 ===")
        partition = client.build_partition(bench, bench.level_params())
        entropy = client.partition_entropy(partition)
        print(f"{partition.n_cells} 个单元, H_μ(𝒫) = {entropy.entropy:.4f}, 上界余量 {entropy.gap:.4f}")

        print("=== 熵 ===")
        block = client.block_entropy(bench, bench.reference)
        print("参考分划分块熵斜率:", block.slope, "±", block.slope_stderr)
        conditional = client.conditional_entropy(bench, partition, 1)
        print("H(g⁻¹𝒫|𝒫):", conditional.value)

    except MRKitError as e:
        print(f"分阶段示例执行失败: {e}")

def advanced_usage():
    """参数扫描与直接调用数值函数"""

    client = MRClient(seed=11, workers=4)
    service = VerificationService(client)

    try:
        # (n, l, m) 网格扫描
        sweep = service.sweep(get_benchmark("doubling"), {"n": [2], "l": [0, 1, 2], "m": [1, 2]})
        for row in sweep.rows:
            print(row["n"], row["l"], row["m"], row.get("partition_entropy"), row.get("conditional_rate"))
        print("分划熵关于 l 不减:", sweep.annotations["entropy_nondecreasing_in_l"])

        # 不经客户端直接调用
        block = block_entropy(doubling(), uniform(), ReferencePartition.dyadic(doubling().domain), 8, 20_000, seed=1)
        for row in block.rows:
            print(f"t={row['t']}: H_t/t = {row['H_per_t']:.4f}")

    except MRKitError as e:
        print(f"高级示例执行失败: {e}")

def error_handling_example():
    """错误处理示例"""

    client = MRClient(seed=0)
    spec = get_benchmark("doubling")
    # l₁ = 1 不满足层级约束，分划阶段会失败
    broken = replace(spec, level={**spec.level, "l1": 1})

    try:
        VerificationService(client).run_verification(broken)
        print("这行不会被执行到")

    except StageError as e:
        print("捕获到阶段异常:", e)
        print(f"失败阶段: {e.stage}")
        print(f"已完成部分: {e.partial['status']}, 右端 = {e.partial['rhs'].get('estimate')}")

    except MRKitError as e:
        print(f"其他错误: {e}")

if __name__ == "__main__":
    print("=== mrkit使用示例 ===\n")
    print("1. 基础使用示例")
    print("2. 分阶段调用示例")
    print("3. 高级使用示例")
    print("4. 错误处理示例")

    import sys
    if len(sys.argv) > 1:
        example_num = sys.argv[1]
    else:
        example_num = "1"

    examples = {
        "1": basic_usage,
        "2": service_usage,
        "3": advanced_usage,
        "4": error_handling_example,
    }
    if example_num in examples:
        examples[example_num]()
    else:
        print("未知示例编号")
