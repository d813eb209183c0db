"""语义提取器 h(x)：属性分类器、1×1×D 降维层、D 值扫描与选择。

分类器是一个从零训练的四级卷积网络，``stageN`` 是各级输出的命名接入点，
``stage4`` 的空间尺寸为输入的 1/8，恰好位于全局池化和线性层之前。
提取器在接入点之后接一层 1×1×D 卷积，训练完成后整体冻结。
"""
import copy
import json
import math
import os
from dataclasses import dataclass, field
from logging import INFO, getLogger
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from udit.constants import CLASSIFIER_VALIDATION_FRACTION, DEFAULT_TAP_POINT
from udit.datasets import AttributeSpec
from udit.exceptions import (
    ArgumentError, CheckpointError, ConfigurationError, DataError, StateError
)
from udit.log_helpers import make_timing_logger
from udit.nets import ConvBlock, check_image, global_average_pool, init_weights
from udit.serialization import load_checkpoint, module_arrays, restore_module, save_checkpoint
from udit.utils import derive_seed, torch_generator


_log = getLogger(__name__)
log_time = make_timing_logger(_log, level=INFO)

CLASSIFIER_KIND = 'attribute_classifier'
EXTRACTOR_KIND = 'semantic_extractor'
TAP_POINTS = ('stage1', 'stage2', 'stage3', 'stage4')
CLASSIFIER_BASE_CHANNELS = 16

# 选择 D 时比较精度所允许的浮点误差
_SELECTION_SLACK = 1e-9


class AttributeClassifier(nn.Module):
    """卷积主干 + 全局平均池化 + 线性分类头。"""

    def __init__(self, attribute: AttributeSpec, base_channels=CLASSIFIER_BASE_CHANNELS):
        super(AttributeClassifier, self).__init__()
        self.attribute = attribute
        self.base_channels = base_channels
        self.accuracy = None
        b = base_channels
        self.stages = nn.ModuleDict([
            ('stage1', ConvBlock(3, b, 3, 1, 1, activation='relu')),
            ('stage2', ConvBlock(b, 2 * b, 4, 2, 1, activation='relu')),
            ('stage3', ConvBlock(2 * b, 4 * b, 4, 2, 1, activation='relu')),
            ('stage4', ConvBlock(4 * b, 4 * b, 4, 2, 1, activation='relu')),
        ])
        self.head = nn.Linear(4 * b, len(attribute.values))

    @property
    def n_classes(self):
        return len(self.attribute.values)

    def tap_channels(self, tap_point):
        if tap_point not in TAP_POINTS:
            raise ConfigurationError("unknown tap point {!r}, expected one of {}".format(
                tap_point, TAP_POINTS))
        return self.stages[tap_point].conv.out_channels

    def features(self, x, tap_point=DEFAULT_TAP_POINT):
        """返回 ``tap_point`` 处的特征图。"""
        self.tap_channels(tap_point)
        for name, stage in self.stages.items():
            x = stage(x)
            if name == tap_point:
                return x

    def forward(self, x):
        return self.head(global_average_pool(self.features(x, 'stage4')).flatten(1))

    def probabilities(self, x):
        return F.softmax(self(x), dim=1)


class SemanticExtractor(nn.Module):
    """冻结的分类器主干 → 1×1×D 降维卷积；``head`` 只在扫描微调时使用。"""

    def __init__(self, backbone: AttributeClassifier, reduction_dim: int,
                 tap_point=DEFAULT_TAP_POINT):
        super(SemanticExtractor, self).__init__()
        if reduction_dim < 1:
            raise ArgumentError("reduction dim must be positive, got {}".format(reduction_dim))
        self.backbone = backbone
        self.tap_point = tap_point
        self.reduction_dim = reduction_dim
        self.reduction = nn.Conv2d(backbone.tap_channels(tap_point), reduction_dim, 1)
        self.head = nn.Linear(reduction_dim, backbone.n_classes)
        self.accuracy = None
        self._frozen = False
        for parameter in self.backbone.parameters():
            parameter.requires_grad_(False)

    @property
    def attribute(self):
        return self.backbone.attribute

    @property
    def frozen(self):
        return self._frozen

    def freeze(self):
        for parameter in self.parameters():
            parameter.requires_grad_(False)
        self.eval()
        self._frozen = True
        return self

    def forward(self, x):
        return self.reduction(self.backbone.features(x, self.tap_point))

    def logits(self, x):
        return self.head(global_average_pool(self(x)).flatten(1))


@dataclass
class SweepResult:
    grid: Tuple[int, ...]
    accuracy: Dict[int, float]
    extractors: Dict[int, SemanticExtractor] = field(
        default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self.grid = tuple(self.grid)
        if not self.grid:
            raise ArgumentError("sweep grid must not be empty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ArgumentError("sweep grid must be strictly increasing, got {}".format(self.grid))
        if set(self.accuracy) != set(self.grid):
            raise ArgumentError("sweep needs exactly one accuracy per grid point")

    def to_dict(self):
        return {
            'grid': list(self.grid),
            'accuracy': {str(dim): self.accuracy[dim] for dim in self.grid},
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            grid=tuple(int(dim) for dim in data['grid']),
            accuracy={int(dim): float(acc) for dim, acc in data['accuracy'].items()},
        )


def _as_tensors(dataset):
    if isinstance(dataset, (tuple, list)):
        images, labels = dataset
    else:
        images, labels = dataset.tensors()
    labels = torch.as_tensor(labels, dtype=torch.long)
    if len(images) != len(labels):
        raise DataError("got {} images but {} labels".format(len(images), len(labels)))
    return images, labels


def split_validation(n: int, seed: int, fraction=CLASSIFIER_VALIDATION_FRACTION):
    """按种子打乱后切出验证集，返回 (训练下标, 验证下标)。"""
    if n < 2:
        raise DataError("need at least two samples to split, got {}".format(n))
    order = torch.randperm(n, generator=torch_generator(derive_seed(seed, 'split')))
    n_val = min(n - 1, max(1, int(round(n * fraction))))
    return order[n_val:], order[:n_val]


def _fit(forward: Callable, parameters, images, labels, epochs, batch_size, lr, generator):
    optimizer = torch.optim.Adam(parameters, lr=lr)
    for _ in range(epochs):
        order = torch.randperm(len(images), generator=generator)
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            optimizer.zero_grad()
            loss = F.cross_entropy(forward(images[batch]), labels[batch])
            loss.backward()
            optimizer.step()


def accuracy_percent(forward: Callable, images, labels, batch_size=64) -> float:
    correct = 0
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            logits = forward(images[start:start + batch_size])
            correct += int((logits.argmax(dim=1) == labels[start:start + batch_size]).sum())
    return 100.0 * correct / len(images)


def train_attribute_classifier(dataset, attribute: AttributeSpec, epochs: int = 5,
                               seed: int = 0, batch_size: int = 32, lr: float = 1e-3,
                               base_channels: int = CLASSIFIER_BASE_CHANNELS
                               ) -> AttributeClassifier:
    """在带 ``attribute`` 标签的数据上训练分类器，验证精度（百分比）记在 ``accuracy``。

    ``dataset`` 可以是 :class:`~udit.datasets.DomainDataset`，也可以是
    ``(images, labels)`` 张量对。
    """
    images, labels = _as_tensors(dataset)
    classes = torch.unique(labels)
    if len(classes) < 2:
        raise DataError("attribute {!r}: training data contains a single class".format(
            attribute.name))
    if int(labels.min()) < 0 or int(labels.max()) >= len(attribute.values):
        raise DataError("labels fall outside the values of attribute {!r}".format(attribute.name))
    if epochs < 1:
        raise ArgumentError("epochs must be at least 1")

    train_idx, val_idx = split_validation(len(images), seed)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        classifier = AttributeClassifier(attribute, base_channels)
        classifier.apply(init_weights)

    with log_time("训练属性分类器 %s (%d 个样本, %d 轮)", attribute.name, len(train_idx), epochs):
        _fit(classifier, classifier.parameters(), images[train_idx], labels[train_idx],
             epochs, batch_size, lr, torch_generator(derive_seed(seed, 'batches')))
    classifier.eval()
    classifier.accuracy = accuracy_percent(classifier, images[val_idx], labels[val_idx])
    _log.info("属性 %s 分类器验证精度 %.2f%%", attribute.name, classifier.accuracy)
    return classifier


def build_extractor(classifier: AttributeClassifier, reduction_dim: int,
                    tap_point=DEFAULT_TAP_POINT, seed: int = 0) -> SemanticExtractor:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        extractor = SemanticExtractor(copy.deepcopy(classifier), reduction_dim, tap_point)
        extractor.reduction.apply(init_weights)
        extractor.head.apply(init_weights)
    return extractor


def sweep_reduction_dim(classifier: AttributeClassifier, dataset, grid: Sequence[int],
                        epochs: int = 1, seed: int = 0, tap_point=DEFAULT_TAP_POINT,
                        batch_size: int = 32, lr: float = 1e-3) -> SweepResult:
    """对每个 D 接一层新的 1×1×D 卷积，冻结主干只微调降维层与分类头，记录验证精度。

    每个 D 的随机流由 ``(seed, D)`` 派生，结果与扫描顺序无关。
    """
    grid = tuple(int(dim) for dim in grid)
    if not grid:
        raise ArgumentError("sweep grid must not be empty")
    images, labels = _as_tensors(dataset)
    train_idx, val_idx = split_validation(len(images), seed)

    accuracy, extractors = {}, {}
    for dim in grid:
        dim_seed = derive_seed(seed, 'sweep', dim)
        extractor = build_extractor(classifier, dim, tap_point, dim_seed)
        trainable = list(extractor.reduction.parameters()) + list(extractor.head.parameters())
        with log_time("微调 D=%d", dim):
            _fit(extractor.logits, trainable, images[train_idx], labels[train_idx],
                 epochs, batch_size, lr, torch_generator(dim_seed))
        extractor.freeze()
        extractor.accuracy = accuracy_percent(extractor.logits, images[val_idx], labels[val_idx])
        accuracy[dim] = extractor.accuracy
        extractors[dim] = extractor
        _log.info("D=%d 验证精度 %.2f%%", dim, extractor.accuracy)
    return SweepResult(grid=grid, accuracy=accuracy, extractors=extractors)


def select_reduction_dim(sweep: SweepResult, tau: float) -> int:
    """精度不低于 最高精度 − ``tau`` 的最小 D。"""
    if not sweep.grid:
        raise ArgumentError("cannot select from an empty sweep")
    if math.isnan(tau) or tau < 0:
        raise ArgumentError("tau must be non-negative, got {}".format(tau))
    threshold = max(sweep.accuracy.values()) - tau - _SELECTION_SLACK
    return next(dim for dim in sweep.grid if sweep.accuracy[dim] >= threshold)


def extract_semantics(extractor: SemanticExtractor, image: torch.Tensor) -> torch.Tensor:
    """``(N, 3, H, W)`` 图像 → ``(N, D, H', W')`` 语义特征。

    参数不求导，但梯度会流回输入图像，供语义约束损失使用。
    """
    if not extractor.frozen:
        raise StateError("semantic extractor must be frozen before use")
    check_image(image)
    return extractor(image)


# ---------------------------------------------------------------------------
# 持久化


def _classifier_manifest(classifier: AttributeClassifier):
    return {
        'attribute': classifier.attribute.to_dict(),
        'base_channels': classifier.base_channels,
        'accuracy': classifier.accuracy,
    }


def save_classifier(classifier: AttributeClassifier, path):
    return save_checkpoint(
        path, CLASSIFIER_KIND, module_arrays(classifier), _classifier_manifest(classifier))


def _build_classifier(manifest) -> AttributeClassifier:
    try:
        attribute = AttributeSpec.from_dict(manifest['attribute'])
        base_channels = int(manifest['base_channels'])
    except (KeyError, TypeError, ValueError, ConfigurationError) as exc:
        raise CheckpointError("classifier manifest is incomplete: {}".format(exc))
    classifier = AttributeClassifier(attribute, base_channels)
    classifier.accuracy = manifest.get('accuracy')
    return classifier


def load_classifier(path) -> AttributeClassifier:
    checkpoint = load_checkpoint(path, kind=CLASSIFIER_KIND)
    classifier = _build_classifier(checkpoint.manifest)
    restore_module(classifier, checkpoint.arrays)
    return classifier.eval()


def sidecar_path(path):
    return os.path.splitext(path)[0] + '.json'


def save_extractor(extractor: SemanticExtractor, path, tau: Optional[float] = None,
                   sweep: Optional[SweepResult] = None):
    """写出提取器检查点和同名 ``.json`` 说明文件。"""
    manifest = _classifier_manifest(extractor.backbone)
    manifest.update({
        'reduction_dim': extractor.reduction_dim,
        'tap_point': extractor.tap_point,
        'extractor_accuracy': extractor.accuracy,
    })
    save_checkpoint(path, EXTRACTOR_KIND, module_arrays(extractor), manifest)

    sidecar = {
        'attribute': extractor.attribute.name,
        'D': extractor.reduction_dim,
        'tau': tau,
        'tap_point': extractor.tap_point,
        'sweep': sweep.to_dict() if sweep is not None else None,
        'accuracy': extractor.accuracy,
    }
    with open(sidecar_path(path), 'w', encoding='utf-8') as handle:
        json.dump(sidecar, handle, indent=2, sort_keys=True)
    return path


def load_extractor(path) -> SemanticExtractor:
    checkpoint = load_checkpoint(path, kind=EXTRACTOR_KIND)
    manifest = checkpoint.manifest
    backbone = _build_classifier(manifest)
    try:
        extractor = SemanticExtractor(
            backbone, int(manifest['reduction_dim']), manifest['tap_point'])
    except (KeyError, TypeError, ValueError, ConfigurationError) as exc:
        raise CheckpointError("extractor manifest is incomplete: {}".format(exc))
    restore_module(extractor, checkpoint.arrays)
    extractor.accuracy = manifest.get('extractor_accuracy')
    return extractor.freeze()


def parameter_snapshot(module: nn.Module) -> Mapping[str, torch.Tensor]:
    """参数的独立副本，用于比较训练前后参数是否逐位一致。"""
    return {name: tensor.detach().clone() for name, tensor in module.state_dict().items()}
