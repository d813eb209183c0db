"""检查点归档的读写。

归档是一个 zip 文件，包含两个成员：

- ``manifest.json``：格式版本、检查点类型、每个命名数组的形状以及调用方提供的
  元数据（结构超参数、损失权重、种子、迭代次数等）；
- ``state.pt``：``torch.save`` 写出的 ``{"arrays": {...}, "extra": {...}}``，
  ``extra`` 存放优化器矩估计、随机数状态等非参数状态。

读取时逐一核对数组的名称和形状，任何不一致都会引发 :class:`CheckpointError`。
"""
import io
import json
import os
import zipfile
from dataclasses import dataclass, field
from logging import getLogger
from typing import Any, Dict, Mapping, Optional

import torch
from torch import nn

from udit.constants import (
    CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MANIFEST_MEMBER, CHECKPOINT_STATE_MEMBER
)
from udit.exceptions import CheckpointError


_log = getLogger(__name__)


@dataclass
class Checkpoint:
    manifest: Dict[str, Any]
    arrays: Dict[str, torch.Tensor]
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def kind(self):
        return self.manifest.get('kind')


def module_arrays(module: nn.Module, prefix='') -> Dict[str, torch.Tensor]:
    return {
        prefix + name: tensor.detach().cpu().clone()
        for name, tensor in module.state_dict().items()
    }


def restore_module(module: nn.Module, arrays: Mapping[str, torch.Tensor], prefix=''):
    """把 ``arrays`` 中以 ``prefix`` 开头的数组载入 ``module``，形状必须完全一致。"""
    expected = module.state_dict()
    selected = {
        name[len(prefix):]: tensor for name, tensor in arrays.items() if name.startswith(prefix)
    }
    missing = sorted(set(expected) - set(selected))
    unexpected = sorted(set(selected) - set(expected))
    if missing or unexpected:
        raise CheckpointError("checkpoint arrays do not match {}: missing {}, unexpected {}".format(
            type(module).__name__, missing[:5], unexpected[:5]))
    for name, tensor in selected.items():
        if tuple(tensor.shape) != tuple(expected[name].shape):
            raise CheckpointError("array {}{} has shape {}, architecture expects {}".format(
                prefix, name, tuple(tensor.shape), tuple(expected[name].shape)))
    module.load_state_dict(selected, strict=True)


def save_checkpoint(path, kind: str, arrays: Mapping[str, torch.Tensor],
                    manifest: Optional[Mapping[str, Any]] = None,
                    extra: Optional[Mapping[str, Any]] = None):
    """原子地写出检查点归档：先写临时文件，再替换目标路径。"""
    full_manifest = dict(manifest or {})
    full_manifest.update({
        'format_version': CHECKPOINT_FORMAT_VERSION,
        'kind': kind,
        'arrays': {name: list(tensor.shape) for name, tensor in arrays.items()},
    })

    buffer = io.BytesIO()
    torch.save({'arrays': dict(arrays), 'extra': dict(extra or {})}, buffer)

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = '{}.tmp'.format(path)
    with zipfile.ZipFile(tmp_path, 'w', compression=zipfile.ZIP_STORED) as archive:
        archive.writestr(
            CHECKPOINT_MANIFEST_MEMBER, json.dumps(full_manifest, indent=2, sort_keys=True))
        archive.writestr(CHECKPOINT_STATE_MEMBER, buffer.getvalue())
    os.replace(tmp_path, path)
    _log.debug("检查点已写入 %s (%d 个数组)", path, len(arrays))
    return path


def read_manifest(path) -> Dict[str, Any]:
    try:
        with zipfile.ZipFile(path) as archive:
            return json.loads(archive.read(CHECKPOINT_MANIFEST_MEMBER).decode('utf-8'))
    except FileNotFoundError:
        raise CheckpointError("checkpoint not found: {}".format(path))
    except (zipfile.BadZipFile, KeyError, ValueError) as exc:
        raise CheckpointError("unreadable checkpoint {}: {}".format(path, exc))


def load_checkpoint(path, kind: Optional[str] = None) -> Checkpoint:
    manifest = read_manifest(path)
    if manifest.get('format_version') != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError("{}: unsupported format_version {!r}".format(
            path, manifest.get('format_version')))
    if kind is not None and manifest.get('kind') != kind:
        raise CheckpointError("{}: expected a {!r} checkpoint, found {!r}".format(
            path, kind, manifest.get('kind')))

    try:
        with zipfile.ZipFile(path) as archive:
            payload = archive.read(CHECKPOINT_STATE_MEMBER)
        state = torch.load(io.BytesIO(payload), map_location='cpu', weights_only=True)
    except (zipfile.BadZipFile, KeyError, RuntimeError, EOFError) as exc:
        raise CheckpointError("unreadable checkpoint {}: {}".format(path, exc))

    arrays = state.get('arrays', {})
    declared = manifest.get('arrays', {})
    if set(arrays) != set(declared):
        raise CheckpointError("{}: arrays {} do not match the manifest".format(
            path, sorted(set(arrays) ^ set(declared))[:5]))
    for name, tensor in arrays.items():
        if list(tensor.shape) != list(declared[name]):
            raise CheckpointError("{}: array {} has shape {}, manifest declares {}".format(
                path, name, list(tensor.shape), declared[name]))
    return Checkpoint(manifest=manifest, arrays=arrays, extra=state.get('extra', {}))
