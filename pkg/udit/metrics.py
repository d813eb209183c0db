"""偏差鲁棒性与多样性评估：误分类率、置信度下降、特征距离、多样性协议。

所有度量都是纯函数；逐对结果按固定顺序用 ``math.fsum`` 汇总。
"""
import math
from dataclasses import asdict, dataclass, fields
from itertools import combinations
from logging import INFO, getLogger
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from udit.constants import (
    DEFAULT_SAMPLES_PER_INPUT, DIRECTIONS, DIVERSITY_INPUT_COUNT, DIVERSITY_PAIR_COUNT
)
from udit.datasets import AttributeSpec, DomainDataset
from udit.exceptions import ArgumentError, DataError, ShapeError
from udit.log_helpers import make_timing_logger
from udit.nets import global_average_pool
from udit.semext import AttributeClassifier, SemanticExtractor, extract_semantics
from udit.utils import derive_seed, torch_generator


_log = getLogger(__name__)
log_time = make_timing_logger(_log, level=INFO)

Label = Union[int, str]
Pair = Tuple[torch.Tensor, torch.Tensor, Label]

_EVAL_BATCH_SIZE = 32


class MetricClassifier(object):
    """评估用分类器 f(x)：网络输出 logits，``probabilities`` 给出概率单纯形。"""

    def __init__(self, network: nn.Module, attribute: AttributeSpec,
                 calibration: Optional[float] = None):
        self.network = network.eval()
        self.attribute = attribute
        self.calibration = calibration

    @classmethod
    def from_classifier(cls, classifier: AttributeClassifier):
        return cls(classifier, classifier.attribute, classifier.accuracy)

    def label_index(self, label: Label) -> int:
        if isinstance(label, str):
            return self.attribute.index(label)
        if not 0 <= int(label) < len(self.attribute.values):
            raise ArgumentError("label {} is outside attribute {!r}".format(
                label, self.attribute.name))
        return int(label)

    def probabilities(self, images: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return F.softmax(self.network(images).double(), dim=1)


def _unpack(f: MetricClassifier, pairs: Sequence[Pair], name):
    if not pairs:
        raise ArgumentError("{} needs at least one pair".format(name))
    originals = torch.stack([pair[0] for pair in pairs])
    translated = torch.stack([pair[1] for pair in pairs])
    if originals.shape != translated.shape:
        raise ShapeError("original and translated images differ in shape")
    labels = [f.label_index(pair[2]) for pair in pairs]
    return originals, translated, labels


def misclassification_rate(f: MetricClassifier, pairs: Sequence[Pair]) -> float:
    """翻译结果的预测标签与源图像真实标签不一致的比例。"""
    _, translated, labels = _unpack(f, pairs, 'misclassification_rate')
    predicted = f.probabilities(translated).argmax(dim=1).tolist()
    flipped = sum(1 for p, label in zip(predicted, labels) if p != label)
    return flipped / len(labels)


def drop_in_confidence(f: MetricClassifier, pairs: Sequence[Pair]) -> float:
    """真实标签概率的平均下降 p_true(x) − p_true(x_trans)。"""
    originals, translated, labels = _unpack(f, pairs, 'drop_in_confidence')
    p_orig = f.probabilities(originals)
    p_trans = f.probabilities(translated)
    drops = [float(p_orig[i, label] - p_trans[i, label]) for i, label in enumerate(labels)]
    return math.fsum(drops) / len(drops)


def _embed(embedder: Callable, images: torch.Tensor) -> torch.Tensor:
    with torch.no_grad():
        features = embedder(images)
    if features.dim() != 2:
        raise ShapeError("embedder must return (N, F) features, got {}".format(
            tuple(features.shape)))
    return features.double()


def feature_distance(embedder: Callable, x: torch.Tensor, x_trans: torch.Tensor) -> torch.Tensor:
    """L2 归一化特征之间的欧氏距离，逐对返回，取值 [0, 2]。

    单张图像（无批维度）按批大小 1 处理。
    """
    if x.shape != x_trans.shape:
        raise ShapeError("inputs differ in shape: {} vs {}".format(
            tuple(x.shape), tuple(x_trans.shape)))
    if x.dim() == 3:
        x, x_trans = x.unsqueeze(0), x_trans.unsqueeze(0)
    a = F.normalize(_embed(embedder, x), dim=1)
    b = F.normalize(_embed(embedder, x_trans), dim=1)
    return (a - b).norm(dim=1)


class RandomFeatureTrunk(nn.Module):
    """固定随机权重的卷积主干，作为感知距离的特征空间。

    每一级特征沿通道单位化并乘以 1/sqrt(HW) 后拼接，因此两张图像特征的
    欧氏距离平方等于各级逐位置差异的均值之和。
    """

    def __init__(self, channels=(16, 32, 64), seed=0):
        super(RandomFeatureTrunk, self).__init__()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            stages, previous = [], 3
            for width in channels:
                stages.append(nn.Sequential(nn.Conv2d(previous, width, 3, 2, 1), nn.ReLU()))
                previous = width
            self.stages = nn.ModuleList(stages)
        for parameter in self.parameters():
            parameter.requires_grad_(False)
        self.eval()

    def forward(self, images):
        parts = []
        x = images
        for stage in self.stages:
            x = stage(x)
            height, width = x.shape[-2:]
            unit = F.normalize(x, dim=1, eps=1e-10)
            parts.append(unit.flatten(1) / math.sqrt(height * width))
        return torch.cat(parts, dim=1)


class PooledEmbedder(object):
    """语义提取器特征的全局平均池化，用作身份特征。"""

    def __init__(self, extractor: SemanticExtractor):
        self.extractor = extractor.freeze()

    def __call__(self, images):
        with torch.no_grad():
            return global_average_pool(extract_semantics(self.extractor, images)).flatten(1)


class IdentityTranslator(object):
    """原样返回输入的“翻译器”，用于校准各项度量。"""

    direction = None

    def __call__(self, images, generator=None):
        return images.clone()

    def samples(self, image, k, seed):
        if image.dim() == 3:
            image = image.unsqueeze(0)
        return image.repeat(k, 1, 1, 1)


class DiversityResult(NamedTuple):
    mean: float
    n_pairs: int


def _sample_pairs(k, pair_count, seed):
    candidates = list(combinations(range(k), 2))
    if len(candidates) <= pair_count:
        return candidates
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(candidates), size=pair_count, replace=False).tolist())
    return [candidates[i] for i in chosen]


def diversity_protocol(translator, feature_extractor: Callable, inputs,
                       k: int = DEFAULT_SAMPLES_PER_INPUT,
                       pair_count: int = DIVERSITY_PAIR_COUNT, seed: int = 0) -> DiversityResult:
    """每个输入取 ``k`` 个翻译，不放回地抽取 ``pair_count`` 个无序输出对，
    返回全部输出对特征距离的均值与实际对数。

    ``translator`` 需提供 ``samples(image, k, seed)``；若 C(k, 2) 小于
    ``pair_count``，则使用全部输出对。
    """
    if k < 2:
        raise ArgumentError("diversity needs at least 2 samples per input, got {}".format(k))
    if pair_count < 1:
        raise ArgumentError("pair_count must be positive")
    if len(inputs) == 0:
        raise ArgumentError("diversity needs at least one input image")

    distances = []
    for position, image in enumerate(inputs):
        outputs = translator.samples(image, k, derive_seed(seed, 'diversity', position))
        features = _embed(feature_extractor, outputs)
        for i, j in _sample_pairs(k, pair_count, derive_seed(seed, 'pairs', position)):
            distances.append(float((features[i] - features[j]).norm()))
    return DiversityResult(math.fsum(distances) / len(distances), len(distances))


def wanted_success_rate(f: MetricClassifier, translated: torch.Tensor,
                        target_value: Label) -> float:
    """翻译结果被判为目标域想要属性取值的比例。"""
    if len(translated) == 0:
        raise ArgumentError("wanted_success_rate needs at least one image")
    target = f.label_index(target_value)
    predicted = f.probabilities(translated).argmax(dim=1)
    return int((predicted == target).sum()) / len(translated)


@dataclass
class BiasReport:
    direction: Optional[str]
    filter: Optional[Dict[str, str]]
    misclassification_rate: float
    drop_in_confidence: float
    feature_distance: float
    diversity: float
    n_inputs: int
    n_samples_per_input: int
    seed: int = 0
    model_checksum: Optional[str] = None
    method: Optional[str] = None
    wanted_success_rate: Optional[float] = None
    n_diversity_pairs: int = 0

    def __post_init__(self):
        if not 0 <= self.misclassification_rate <= 1:
            raise ArgumentError("misclassification_rate out of range")
        if not -1 <= self.drop_in_confidence <= 1:
            raise ArgumentError("drop_in_confidence out of range")
        if self.feature_distance < 0 or self.diversity < 0:
            raise ArgumentError("distances must be non-negative")
        if self.n_inputs < 1 or self.n_samples_per_input < 1:
            raise ArgumentError("report counts must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {item.name for item in fields(cls)}
        return cls(**{key: value for key, value in data.items() if key in known})


def _batches(dataset: DomainDataset, batch_size=_EVAL_BATCH_SIZE):
    for start in range(0, len(dataset), batch_size):
        records = dataset.records[start:start + batch_size]
        yield records, torch.stack([dataset[i][0] for i in range(start, start + len(records))])


def evaluate(translator, classifiers: Dict[str, MetricClassifier], embedder: Callable,
             test_set: DomainDataset, direction: Optional[str] = None,
             filter: Optional[Dict[str, str]] = None, seed: int = 0,
             k: int = DEFAULT_SAMPLES_PER_INPUT, diversity_inputs: int = DIVERSITY_INPUT_COUNT,
             diversity_extractor: Optional[Callable] = None,
             target_value: Optional[str] = None, method: Optional[str] = None,
             model_checksum: Optional[str] = None) -> BiasReport:
    """在源域测试集上汇总全部度量。

    ``classifiers['unwanted']`` 是不想改变属性的分类器，必需；
    ``classifiers['wanted']`` 与 ``target_value`` 同时给出时计算想要属性的翻译成功率。
    """
    if direction is not None and direction not in DIRECTIONS:
        raise ArgumentError("direction must be one of {}".format(DIRECTIONS))
    if 'unwanted' not in classifiers:
        raise ArgumentError("evaluate needs an 'unwanted' classifier")
    unwanted = classifiers['unwanted']
    wanted = classifiers.get('wanted')

    if filter:
        test_set = test_set.filter(**filter)
    if len(test_set) == 0:
        raise DataError("no test samples match filter {}".format(filter))

    generator = torch_generator(derive_seed(seed, 'evaluate'))
    pairs: List[Pair] = []
    distances, translated_all = [], []
    with log_time("评估 %d 个样本 (%s)", len(test_set), direction):
        for records, images in _batches(test_set):
            translated = translator(images, generator)
            translated_all.append(translated)
            distances.extend(feature_distance(embedder, images, translated).tolist())
            for record, x, x_trans in zip(records, images, translated):
                pairs.append((x, x_trans, record.labels[unwanted.attribute.name]))

        diversity_images = [test_set[i][0] for i in range(min(diversity_inputs, len(test_set)))]
        diversity = diversity_protocol(
            translator, diversity_extractor or RandomFeatureTrunk(seed=0),
            diversity_images, k=k, seed=seed)

    success = None
    if wanted is not None and target_value is not None:
        success = wanted_success_rate(wanted, torch.cat(translated_all), target_value)

    return BiasReport(
        direction=direction,
        filter=dict(filter) if filter else None,
        misclassification_rate=misclassification_rate(unwanted, pairs),
        drop_in_confidence=drop_in_confidence(unwanted, pairs),
        feature_distance=math.fsum(distances) / len(distances),
        diversity=diversity.mean,
        n_inputs=len(pairs),
        n_samples_per_input=k,
        seed=seed,
        model_checksum=model_checksum,
        method=method,
        wanted_success_rate=success,
        n_diversity_pairs=diversity.n_pairs,
    )
