"""合成有偏双域数据集的生成、加载与校验。

目录布局::

    <root>/labels.csv
    <root>/A/manifest.json
    <root>/A/images/00000.png
    <root>/B/manifest.json
    <root>/B/images/00000.png

``labels.csv`` 的表头为 ``path,domain,<attr1>,<attr2>,...``，``path`` 相对于 ``<root>``。
"""
import csv
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from logging import INFO, getLogger
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
from PIL import Image, ImageDraw
from torch.utils.data import Dataset

from udit.constants import (
    DOMAINS, IMAGES_DIRNAME, LABELS_FILENAME, MANIFEST_FILENAME,
    SUPPORTED_IMAGE_SIZES
)
from udit.exceptions import ConfigurationError, DataError
from udit.log_helpers import make_timing_logger
from udit.utils import counter_rng, derive_seed
from udit.utils.concurrency import parallel_map


_log = getLogger(__name__)
log_time = make_timing_logger(_log, level=INFO)

WANTED = 'wanted'
UNWANTED = 'unwanted'


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str
    values: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, 'values', tuple(self.values))
        if not self.name:
            raise ConfigurationError("attribute name must be non-empty")
        if self.kind not in (WANTED, UNWANTED):
            raise ConfigurationError(
                "attribute {!r}: kind must be 'wanted' or 'unwanted', got {!r}".format(
                    self.name, self.kind))
        if len(self.values) < 2:
            raise ConfigurationError(
                "attribute {!r} needs at least two values".format(self.name))
        if len(set(self.values)) != len(self.values):
            raise ConfigurationError(
                "attribute {!r} has duplicate values".format(self.name))

    def index(self, value):
        try:
            return self.values.index(value)
        except ValueError:
            raise DataError("{!r} is not a value of attribute {!r}".format(value, self.name))

    def to_dict(self):
        return {'name': self.name, 'kind': self.kind, 'values': list(self.values)}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(name=data['name'], kind=data['kind'], values=tuple(data['values']))
        except (KeyError, TypeError) as exc:
            raise ConfigurationError("invalid attribute spec {!r}: {}".format(data, exc))


@dataclass(frozen=True, eq=True)
class SampleRecord:
    image_path: str
    domain: str
    labels: Dict[str, str] = field(hash=False)

    def key(self):
        """可哈希的记录键，用于多重集合比较。"""
        return (self.image_path, self.domain, tuple(sorted(self.labels.items())))


@dataclass
class DomainManifest:
    """一个域的样本构成：每个属性取值组合对应的样本数。

    ``counts`` 的键是按 ``attributes`` 顺序排列的取值元组。
    """

    domain: str
    attributes: Tuple[AttributeSpec, ...]
    counts: Dict[Tuple[str, ...], int]
    seed: int = 0
    image_size: int = 64

    @property
    def total(self):
        return sum(self.counts.values())

    def cells(self):
        """按清单顺序逐个产生 (标签字典, 数量)。"""
        names = [attr.name for attr in self.attributes]
        for values, count in self.counts.items():
            yield dict(zip(names, values)), count

    def marginal(self, attribute_name):
        names = [attr.name for attr in self.attributes]
        position = names.index(attribute_name)
        marginal = Counter()
        for values, count in self.counts.items():
            marginal[values[position]] += count
        return {value: count for value, count in marginal.items() if count}

    def to_dict(self):
        names = [attr.name for attr in self.attributes]
        return {
            'domain': self.domain,
            'image_size': self.image_size,
            'seed': self.seed,
            'attributes': [attr.to_dict() for attr in self.attributes],
            'counts': [
                {'labels': dict(zip(names, values)), 'count': count}
                for values, count in self.counts.items()
            ],
        }

    @classmethod
    def from_dict(cls, data, attributes=None):
        try:
            if attributes is None:
                attributes = tuple(AttributeSpec.from_dict(a) for a in data['attributes'])
            names = [attr.name for attr in attributes]
            counts = {}
            for cell in data['counts']:
                labels = cell['labels']
                if set(labels) != set(names):
                    raise ConfigurationError(
                        "count cell {!r} does not match attributes {!r}".format(labels, names))
                counts[tuple(labels[name] for name in names)] = int(cell['count'])
            return cls(
                domain=data['domain'],
                attributes=tuple(attributes),
                counts=counts,
                seed=int(data.get('seed', 0)),
                image_size=int(data.get('image_size', 64)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError("invalid domain manifest: {}".format(exc))

    def save(self, path):
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write('\n')

    @classmethod
    def load(cls, path):
        with open(path, encoding='utf-8') as handle:
            return cls.from_dict(json.load(handle))


@dataclass(frozen=True)
class RenderStyle:
    """合成形状的渲染参数。

    ``fills`` 把填充属性的取值映射为 (纹理, RGB)，纹理为 ``flat`` 或 ``striped``。
    抖动幅度均为相对图像边长的比例（旋转为角度）。
    """

    shape_attribute: str = 'shape'
    fill_attribute: str = 'fill'
    shapes: Tuple[str, ...] = ('circle', 'square', 'triangle')
    fills: Mapping[str, Tuple[str, Tuple[int, int, int]]] = field(
        default_factory=lambda: {
            'flat-blue': ('flat', (40, 90, 220)),
            'striped-red': ('striped', (210, 40, 40)),
            'flat-red': ('flat', (210, 40, 40)),
            'striped-blue': ('striped', (40, 90, 220)),
        }
    )
    background: Tuple[int, int, int] = (235, 235, 235)
    stripe_color: Tuple[int, int, int] = (250, 250, 250)
    position_jitter: float = 0.08
    rotation_jitter: float = 20.0
    hue_jitter: int = 12
    scale_range: Tuple[float, float] = (0.5, 0.7)
    stripe_period: float = 0.125

    def to_dict(self):
        return {
            'shape_attribute': self.shape_attribute,
            'fill_attribute': self.fill_attribute,
            'shapes': list(self.shapes),
            'fills': {name: [texture, list(rgb)] for name, (texture, rgb) in self.fills.items()},
            'background': list(self.background),
            'stripe_color': list(self.stripe_color),
            'position_jitter': self.position_jitter,
            'rotation_jitter': self.rotation_jitter,
            'hue_jitter': self.hue_jitter,
            'scale_range': list(self.scale_range),
            'stripe_period': self.stripe_period,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        if 'fills' in data:
            data['fills'] = {
                name: (texture, tuple(rgb)) for name, (texture, rgb) in data['fills'].items()
            }
        for key in ('shapes', 'background', 'stripe_color', 'scale_range'):
            if key in data:
                data[key] = tuple(data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError("invalid render style: {}".format(exc))


@dataclass
class BiasedDatasetConfig:
    attributes: Tuple[AttributeSpec, ...]
    domains: Dict[str, DomainManifest]
    render_style: RenderStyle = field(default_factory=RenderStyle)
    biased: bool = True
    workers: int = 1

    def validate(self):
        wanted = [attr for attr in self.attributes if attr.kind == WANTED]
        unwanted = [attr for attr in self.attributes if attr.kind == UNWANTED]
        if len(wanted) != 1:
            raise ConfigurationError("exactly one wanted attribute is required")
        if not unwanted:
            raise ConfigurationError("at least one unwanted attribute is required")
        if sorted(self.domains) != sorted(DOMAINS):
            raise ConfigurationError("domains must be exactly {}".format(DOMAINS))

        for name, manifest in self.domains.items():
            if manifest.domain != name:
                raise ConfigurationError(
                    "manifest for domain {} is labelled {}".format(name, manifest.domain))
            if tuple(manifest.attributes) != tuple(self.attributes):
                raise ConfigurationError(
                    "domain {} does not share the dataset attribute schema".format(name))
            if manifest.image_size not in SUPPORTED_IMAGE_SIZES:
                raise ConfigurationError(
                    "image_size must be one of {}".format(SUPPORTED_IMAGE_SIZES))
            for values, count in manifest.counts.items():
                if count < 0:
                    raise ConfigurationError("negative count for {!r}".format(values))
                for attr, value in zip(self.attributes, values):
                    if value not in attr.values:
                        raise ConfigurationError(
                            "{!r} is not a value of attribute {!r}".format(value, attr.name))
            if manifest.total < 2:
                raise ConfigurationError(
                    "domain {} needs at least two samples, got {}".format(name, manifest.total))

        a, b = self.domains['A'], self.domains['B']
        if _normalized(a.marginal(wanted[0].name)) == _normalized(b.marginal(wanted[0].name)):
            raise ConfigurationError(
                "wanted attribute {!r} has the same marginal in both domains".format(
                    wanted[0].name))
        if self.biased and all(
            _normalized(a.marginal(attr.name)) == _normalized(b.marginal(attr.name))
            for attr in unwanted
        ):
            raise ConfigurationError(
                "biased=true but unwanted-attribute marginals are aligned across domains")

        style = self.render_style
        names = {attr.name: attr for attr in self.attributes}
        for attr_name, table in ((style.shape_attribute, style.shapes),
                                 (style.fill_attribute, style.fills)):
            if attr_name not in names:
                raise ConfigurationError(
                    "render style refers to unknown attribute {!r}".format(attr_name))
            missing = [value for value in names[attr_name].values if value not in table]
            if missing:
                raise ConfigurationError(
                    "render style cannot draw {!r} values {}".format(attr_name, missing))

    def to_dict(self):
        return {
            'attributes': [attr.to_dict() for attr in self.attributes],
            'domains': {name: m.to_dict() for name, m in sorted(self.domains.items())},
            'render_style': self.render_style.to_dict(),
            'biased': self.biased,
            'workers': self.workers,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            attributes = tuple(AttributeSpec.from_dict(a) for a in data['attributes'])
            domains = {
                name: DomainManifest.from_dict(dict(manifest, domain=name), attributes)
                for name, manifest in data['domains'].items()
            }
        except (KeyError, TypeError, AttributeError) as exc:
            raise ConfigurationError("invalid dataset config: {}".format(exc))
        return cls(
            attributes=attributes,
            domains=domains,
            render_style=RenderStyle.from_dict(data.get('render_style')),
            biased=bool(data.get('biased', True)),
            workers=int(data.get('workers', 1)),
        )


def _normalized(marginal):
    total = float(sum(marginal.values()))
    return {value: round(count / total, 9) for value, count in marginal.items()}


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str
    domain: Optional[str] = None

    def __str__(self):
        prefix = "[{}] ".format(self.domain) if self.domain else ""
        return "{}{}: {}".format(prefix, self.kind, self.detail)


# ---------------------------------------------------------------------------
# 渲染


def _shape_polygon(shape, cx, cy, radius, angle):
    if shape == 'square':
        corners = 4
        offset = math.pi / 4
    elif shape == 'triangle':
        corners = 3
        offset = math.pi / 2
    else:
        raise ConfigurationError("unknown shape {!r}".format(shape))
    return [
        (cx + radius * math.cos(offset + angle + 2 * math.pi * k / corners),
         cy - radius * math.sin(offset + angle + 2 * math.pi * k / corners))
        for k in range(corners)
    ]


def render_sample(style: RenderStyle, labels: Mapping[str, str], size: int,
                  rng: np.random.Generator) -> Image.Image:
    """按标签渲染一张 ``size``×``size`` 的 RGB 图像。

    随机量全部取自 ``rng``，固定的 ``rng`` 给出逐像素相同的结果。
    """
    shape = labels[style.shape_attribute]
    texture, rgb = style.fills[labels[style.fill_attribute]]

    cx = size / 2 + rng.uniform(-style.position_jitter, style.position_jitter) * size
    cy = size / 2 + rng.uniform(-style.position_jitter, style.position_jitter) * size
    angle = math.radians(rng.uniform(-style.rotation_jitter, style.rotation_jitter))
    radius = rng.uniform(*style.scale_range) * size / 2
    noise = rng.integers(-style.hue_jitter, style.hue_jitter + 1, size=3)
    phase = rng.uniform(0, style.stripe_period * size)

    mask = Image.new('L', (size, size), 0)
    draw = ImageDraw.Draw(mask)
    if shape == 'circle':
        draw.ellipse((cx - radius, cy - radius, cx + radius, cy + radius), fill=255)
    else:
        draw.polygon(_shape_polygon(shape, cx, cy, radius, angle), fill=255)

    color = np.clip(np.asarray(rgb, dtype=np.int64) + noise, 0, 255).astype(np.uint8)
    pixels = np.empty((size, size, 3), dtype=np.uint8)
    pixels[...] = color
    if texture == 'striped':
        yy, xx = np.mgrid[0:size, 0:size]
        half_period = style.stripe_period * size / 2
        bands = np.floor((xx + yy + phase) / half_period).astype(np.int64) % 2 == 1
        pixels[bands] = style.stripe_color
    elif texture != 'flat':
        raise ConfigurationError("unknown texture {!r}".format(texture))

    image = Image.new('RGB', (size, size), tuple(style.background))
    image.paste(Image.fromarray(pixels), (0, 0), mask)
    return image


def _relative_image_path(domain, index):
    return '{}/{}/{:05d}.png'.format(domain, IMAGES_DIRNAME, index)


def generate_biased_shapes(config: BiasedDatasetConfig,
                           out_dir) -> Tuple[DomainManifest, DomainManifest]:
    """生成一个有偏双域数据集并写入 ``out_dir``。

    结果仅由 (config, seed) 决定：相同种子重复生成得到字节相同的标签文件
    和逐像素相同的图像，与 ``workers`` 的取值无关。
    """
    config.validate()
    names = [attr.name for attr in config.attributes]

    rows = []
    for domain in DOMAINS:
        manifest = config.domains[domain]
        os.makedirs(os.path.join(out_dir, domain, IMAGES_DIRNAME), exist_ok=True)

        plan = []
        for labels, count in manifest.cells():
            for _ in range(count):
                plan.append((len(plan), labels))

        def render(item, manifest=manifest, domain=domain):
            index, labels = item
            rng = counter_rng(manifest.seed, index)
            image = render_sample(config.render_style, labels, manifest.image_size, rng)
            relative = _relative_image_path(domain, index)
            image.save(os.path.join(out_dir, relative), format='PNG')
            return relative

        with log_time("生成域 %s 的 %d 张图像", domain, len(plan)):
            paths = parallel_map(render, plan, workers=config.workers)

        for relative, (_, labels) in zip(paths, plan):
            rows.append([relative, domain] + [labels[name] for name in names])

        manifest.save(os.path.join(out_dir, domain, MANIFEST_FILENAME))

    with open(os.path.join(out_dir, LABELS_FILENAME), 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['path', 'domain'] + names)
        writer.writerows(rows)

    _log.info("数据集已写入 %s (A=%d, B=%d)", out_dir,
              config.domains['A'].total, config.domains['B'].total)
    return config.domains['A'], config.domains['B']


def biased_shapes_preset(image_size: int = 64, seed: int = 0) -> Dict[str, BiasedDatasetConfig]:
    """按固定比例生成的合成数据划分。

    想要改变的属性是填充外观（纯色蓝 / 条纹红），不想改变的属性是形状。
    ``train`` 中 B 域被刻意偏向方形（1330 对 70），``test`` 和 ``classifier``
    两个划分不带偏差，并使用互不相同的派生种子。
    """
    attributes = (
        AttributeSpec('fill', WANTED, ('flat-blue', 'striped-red')),
        AttributeSpec('shape', UNWANTED, ('circle', 'square')),
    )

    def manifest(split, domain, counts):
        return DomainManifest(
            domain=domain,
            attributes=attributes,
            counts=counts,
            seed=derive_seed(seed, split, domain),
            image_size=image_size,
        )

    def split(name, counts_a, counts_b, biased):
        return BiasedDatasetConfig(
            attributes=attributes,
            domains={
                'A': manifest(name, 'A', counts_a),
                'B': manifest(name, 'B', counts_b),
            },
            biased=biased,
        )

    return {
        'train': split(
            'train',
            {('flat-blue', 'circle'): 1330, ('flat-blue', 'square'): 70},
            {('striped-red', 'square'): 1330, ('striped-red', 'circle'): 70},
            biased=True,
        ),
        'test': split(
            'test',
            {('flat-blue', 'circle'): 100, ('flat-blue', 'square'): 100},
            {('striped-red', 'circle'): 100, ('striped-red', 'square'): 100},
            biased=False,
        ),
        'classifier': split(
            'classifier',
            {('flat-blue', 'circle'): 250, ('flat-blue', 'square'): 250},
            {('striped-red', 'circle'): 250, ('striped-red', 'square'): 250},
            biased=False,
        ),
    }


def generate_splits(splits: Mapping[str, BiasedDatasetConfig], out_dir):
    """把每个划分写入 ``<out_dir>/<split>/``，返回 划分名 → 清单对。"""
    return {
        name: generate_biased_shapes(config, os.path.join(out_dir, name))
        for name, config in splits.items()
    }


# ---------------------------------------------------------------------------
# 加载与校验


def _read_labels(root):
    path = os.path.join(root, LABELS_FILENAME)
    if not os.path.exists(path):
        raise DataError("labels file not found: {}".format(path))
    with open(path, encoding='utf-8', newline='') as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("labels file is empty: {}".format(path))
        rows = [row for row in reader if row]
    return header, rows


def _read_manifest(root, domain):
    path = os.path.join(root, domain, MANIFEST_FILENAME)
    if not os.path.exists(path):
        raise DataError("manifest not found: {}".format(path))
    try:
        return DomainManifest.load(path)
    except (ValueError, ConfigurationError) as exc:
        raise DataError("invalid manifest {}: {}".format(path, exc))


def read_schema(root) -> Tuple[AttributeSpec, ...]:
    return _read_manifest(root, DOMAINS[0]).attributes


def read_manifest(root, domain) -> DomainManifest:
    return _read_manifest(root, domain)


def load_domain(root, domain) -> List[SampleRecord]:
    """按标签文件顺序返回 ``domain`` 的全部样本记录。"""
    if domain not in DOMAINS:
        raise DataError("unknown domain {!r}".format(domain))
    manifest = _read_manifest(root, domain)
    header, rows = _read_labels(root)

    names = [attr.name for attr in manifest.attributes]
    if header != ['path', 'domain'] + names:
        raise DataError(
            "labels header {} does not match attribute schema {}".format(header, names))

    records = []
    for row in rows:
        if len(row) != len(header):
            raise DataError("malformed labels row {!r}".format(row))
        if row[1] != domain:
            continue
        labels = dict(zip(names, row[2:]))
        for attr in manifest.attributes:
            if labels[attr.name] not in attr.values:
                raise DataError("{}: label {!r} is not a value of attribute {!r}".format(
                    row[0], labels[attr.name], attr.name))
        if not os.path.isfile(os.path.join(root, row[0])):
            raise DataError("missing image: {}".format(row[0]))
        records.append(SampleRecord(image_path=row[0], domain=domain, labels=labels))

    if len(records) != manifest.total:
        raise DataError("domain {} has {} records but the manifest declares {}".format(
            domain, len(records), manifest.total))
    return records


def _check_image(path, image_size):
    try:
        with Image.open(path) as image:
            image.load()
            mode, (width, height) = image.mode, image.size
    except Exception as exc:
        return Violation('undecodable image', '{}: {}'.format(path, exc))
    if mode != 'RGB' or width != height or width != image_size:
        return Violation('bad image size', '{}: {} {}x{}, expected RGB {}x{}'.format(
            path, mode, width, height, image_size, image_size))
    return None


def validate_manifest(root) -> List[Violation]:
    """检查 ``root`` 下的数据集，返回违规列表；全部不变量成立时返回空列表。"""
    violations = []
    manifests = {}
    for domain in DOMAINS:
        path = os.path.join(root, domain, MANIFEST_FILENAME)
        if not os.path.exists(path):
            violations.append(Violation('missing manifest', path, domain))
            continue
        try:
            manifests[domain] = DomainManifest.load(path)
        except (ValueError, ConfigurationError) as exc:
            violations.append(Violation('invalid manifest', str(exc), domain))

    if len(manifests) == len(DOMAINS):
        if manifests['A'].attributes != manifests['B'].attributes:
            violations.append(Violation(
                'schema mismatch', 'domains A and B use different attribute schemas'))

    try:
        header, rows = _read_labels(root)
    except DataError as exc:
        violations.append(Violation('missing labels', str(exc)))
        return violations

    for domain, manifest in manifests.items():
        names = [attr.name for attr in manifest.attributes]
        if any(count < 0 for count in manifest.counts.values()):
            violations.append(Violation('negative count', 'manifest has negative counts', domain))
        if manifest.total < 2:
            violations.append(Violation(
                'degenerate manifest', 'total count {} < 2'.format(manifest.total), domain))
        if manifest.image_size not in SUPPORTED_IMAGE_SIZES:
            violations.append(Violation(
                'bad image size', 'manifest image_size {}'.format(manifest.image_size), domain))
        if header != ['path', 'domain'] + names:
            violations.append(Violation(
                'schema mismatch', 'labels header {} vs attributes {}'.format(header, names),
                domain))
            continue

        observed = Counter()
        for row in rows:
            if len(row) != len(header):
                violations.append(Violation('malformed row', repr(row), domain))
                continue
            if row[1] != domain:
                continue
            values = tuple(row[2:])
            unknown = [
                (attr.name, value) for attr, value in zip(manifest.attributes, values)
                if value not in attr.values
            ]
            if unknown:
                violations.append(Violation(
                    'unknown label', '{}: {}'.format(row[0], unknown), domain))
            observed[values] += 1

            image_path = os.path.join(root, row[0])
            if not os.path.isfile(image_path):
                violations.append(Violation('missing image', row[0], domain))
                continue
            problem = _check_image(image_path, manifest.image_size)
            if problem is not None:
                violations.append(Violation(problem.kind, problem.detail, domain))

        declared = {values: count for values, count in manifest.counts.items() if count}
        if dict(observed) != declared:
            cells = sorted(set(observed) | set(declared))
            detail = ', '.join(
                '{}: manifest {} vs labels {}'.format(
                    '/'.join(cell), declared.get(cell, 0), observed.get(cell, 0))
                for cell in cells if declared.get(cell, 0) != observed.get(cell, 0)
            )
            violations.append(Violation('count mismatch', detail, domain))

    return violations


def load_image(path) -> torch.Tensor:
    """读取 PNG 并返回取值在 [-1, 1] 的 ``(3, H, W)`` float32 张量。"""
    try:
        with Image.open(path) as image:
            array = np.asarray(image.convert('RGB'), dtype=np.float32)
    except Exception as exc:
        raise DataError("cannot decode image {}: {}".format(path, exc))
    return torch.from_numpy(array / 127.5 - 1.0).permute(2, 0, 1).contiguous()


def save_image(tensor: torch.Tensor, path):
    """把 [-1, 1] 范围的 ``(3, H, W)`` 张量写为 8 位 RGB PNG。"""
    array = ((tensor.detach().cpu().clamp(-1, 1) + 1.0) * 127.5).round()
    array = array.to(torch.uint8).permute(1, 2, 0).numpy()
    Image.fromarray(array).save(path, format='PNG')


def load_images(root, records: Sequence[SampleRecord]) -> torch.Tensor:
    return torch.stack([load_image(os.path.join(root, r.image_path)) for r in records])


class DomainDataset(Dataset):
    """样本记录上的 torch 数据集，返回 (图像张量, 标签下标)。

    未指定 ``attribute`` 时标签下标为 -1。
    """

    def __init__(self, root, records: Sequence[SampleRecord],
                 attribute: Optional[AttributeSpec] = None):
        self.root = root
        self.records = list(records)
        self.attribute = attribute

    def __len__(self):
        return len(self.records)

    def label_index(self, record):
        if self.attribute is None:
            return -1
        return self.attribute.index(record.labels[self.attribute.name])

    def __getitem__(self, index):
        record = self.records[index]
        image = load_image(os.path.join(self.root, record.image_path))
        return image, self.label_index(record)

    def labels(self):
        return torch.tensor([self.label_index(r) for r in self.records], dtype=torch.long)

    def tensors(self):
        """一次性载入全部图像，返回 (images, labels)。"""
        return load_images(self.root, self.records), self.labels()

    def filter(self, **labels):
        kept = [
            r for r in self.records
            if all(r.labels.get(name) == value for name, value in labels.items())
        ]
        return DomainDataset(self.root, kept, self.attribute)
