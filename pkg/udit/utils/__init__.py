import hashlib
import os
from typing import Optional, Sequence

import numpy as np
import torch

from udit.constants import SEED_ENV_VAR
from udit.exceptions import ConfigurationError


def resolve_seed(explicit: Optional[int] = None, configured: Optional[int] = None):
    """按 ``--seed`` > 配置文件 > 环境变量 ``UDIT_SEED`` > 0 的顺序决定种子。"""
    for candidate in (explicit, configured, os.environ.get(SEED_ENV_VAR)):
        if candidate is None or candidate == "":
            continue
        try:
            return int(candidate)
        except (TypeError, ValueError):
            raise ConfigurationError("seed must be an integer, got {!r}".format(candidate))
    return 0


def counter_rng(seed: int, index: int) -> np.random.Generator:
    """返回以 (seed, index) 为键的计数器型随机数生成器。

    每个样本的随机流只取决于自身的键，与生成顺序和并行度无关。
    """
    if not 0 <= seed < 2**64 or not 0 <= index < 2**64:
        raise ConfigurationError("seed and index must fit in 64 bits")
    return np.random.Generator(np.random.Philox(key=(seed << 64) | index))


def torch_generator(seed: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator


def derive_seed(base: int, *parts) -> int:
    """由基础种子和若干标签派生一个稳定的 63 位子种子。"""
    digest = hashlib.sha256(repr((int(base),) + tuple(parts)).encode('utf-8'))
    return int.from_bytes(digest.digest()[:8], 'big') >> 1


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def parse_int_list(value) -> Sequence[int]:
    """将 ``"2,8,16"`` 或 ``[2, 8, 16]`` 解析为整数元组。"""
    if isinstance(value, str):
        parts = [part for part in value.replace(' ', '').split(',') if part]
    elif isinstance(value, int):
        parts = [value]
    else:
        parts = list(value)
    try:
        return tuple(int(part) for part in parts)
    except (TypeError, ValueError):
        raise ConfigurationError("expected a list of integers, got {!r}".format(value))
