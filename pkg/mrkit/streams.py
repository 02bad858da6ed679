"""
随机流模块
由一个64位种子派生可复现、互相独立的计数器型子随机流
"""

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar, Union

import numpy as np

T = TypeVar("T")

Label = Union[str, int]


class StreamKeys:
    """子随机流密钥派生"""

    def __init__(self, seed: int):
        """
        初始化密钥派生

        Args:
            seed: 64位种子
        """
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def generate_key(self, *labels: Label) -> int:
        """
        生成子流密钥

        Args:
            labels: 阶段名、分块序号等标签

        Returns:
            128位 Philox 密钥
        """
        # 拼接字符串：seed + 各标签
        key_str = "/".join([str(self.seed)] + [str(label) for label in labels])

        digest = hashlib.sha1(key_str.encode("utf-8")).digest()
        return int.from_bytes(digest[:16], "little")

    def generator(self, *labels: Label) -> np.random.Generator:
        """
        获取子随机流

        Args:
            labels: 阶段名、分块序号等标签

        Returns:
            基于 Philox 的随机数生成器
        """
        return np.random.Generator(np.random.Philox(key=self.generate_key(*labels)))


def chunk_bounds(total: int, chunk_size: int) -> List[range]:
    """把 [0, total) 切成固定大小的分块，切法与工作线程数无关"""
    return [range(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]


def chunked_map(
    func: Callable[[range, np.random.Generator], T],
    total: int,
    keys: StreamKeys,
    stage: str,
    chunk_size: int = 256,
    workers: int = 1,
) -> List[T]:
    """
    在固定分块上并行执行任务，按分块顺序合并

    Args:
        func: 任务函数，参数为分块下标范围与该分块专属的随机流
        total: 总条目数
        keys: 密钥派生器
        stage: 阶段标签
        chunk_size: 分块大小
        workers: 工作线程数（只影响耗时，不影响结果）

    Returns:
        各分块结果，按分块序号排列
    """
    chunks = chunk_bounds(total, chunk_size)
    jobs = [(chunk, keys.generator(stage, index)) for index, chunk in enumerate(chunks)]

    if workers <= 1 or len(jobs) <= 1:
        return [func(chunk, rng) for chunk, rng in jobs]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(func, chunk, rng) for chunk, rng in jobs]
        return [future.result() for future in futures]
