"""训练目标的各项损失及其加权总和。

所有重建类损失与语义约束均取逐元素绝对误差的均值。
"""
import math
from dataclasses import asdict, dataclass, fields
from typing import Mapping, Sequence

import torch

from udit.constants import (
    DEFAULT_LAMBDA_C, DEFAULT_LAMBDA_S, DEFAULT_LAMBDA_U, DEFAULT_LAMBDA_X
)
from udit.exceptions import ArgumentError, ConfigurationError, ShapeError


@dataclass(frozen=True)
class LossWeights:
    lambda_x: float = DEFAULT_LAMBDA_X
    lambda_c: float = DEFAULT_LAMBDA_C
    lambda_s: float = DEFAULT_LAMBDA_S
    lambda_u: float = DEFAULT_LAMBDA_U

    def __post_init__(self):
        for item in fields(self):
            value = getattr(self, item.name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise ConfigurationError("{} must be a number, got {!r}".format(item.name, value))
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(
                    "{} must be finite and non-negative, got {}".format(item.name, value))
            object.__setattr__(self, item.name, value)

    @property
    def is_baseline(self):
        return self.lambda_u == 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {item.name for item in fields(cls)}
        if unknown:
            raise ConfigurationError("unknown loss weights: {}".format(sorted(unknown)))
        return cls(**data)


# 参与加权总和的分项，按目标函数中的顺序排列。
TERM_NAMES = (
    'gan_A', 'gan_B',
    'recon_x_A', 'recon_x_B',
    'recon_c_A', 'recon_c_B',
    'recon_s_A', 'recon_s_B',
    'sem_A', 'sem_B',
)


@dataclass(frozen=True)
class LossBreakdown:
    """一步训练的各项损失值。``dis_A``/``dis_B`` 为判别器目标，不计入 ``total``。"""

    gan_A: float
    gan_B: float
    recon_x_A: float
    recon_x_B: float
    recon_c_A: float
    recon_c_B: float
    recon_s_A: float
    recon_s_B: float
    sem_A: float
    sem_B: float
    total: float
    dis_A: float = 0.0
    dis_B: float = 0.0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**{item.name: data[item.name] for item in fields(cls) if item.name in data})

    def is_finite(self):
        return all(math.isfinite(value) for value in asdict(self).values())


def _check_scores(scores: Sequence[torch.Tensor], name):
    if not scores:
        raise ArgumentError("{} must contain at least one score map".format(name))
    for score in scores:
        if score.numel() == 0:
            raise ArgumentError("{} contains an empty score map".format(name))


def _check_pair(a: torch.Tensor, b: torch.Tensor, name):
    if a.shape != b.shape:
        raise ShapeError("{}: shapes {} and {} differ".format(name, tuple(a.shape), tuple(b.shape)))
    if a.numel() == 0:
        raise ArgumentError("{}: empty input".format(name))


def adversarial_loss_d(d_scores_fake: Sequence[torch.Tensor],
                       d_scores_real: Sequence[torch.Tensor]) -> torch.Tensor:
    """判别器的最小二乘目标 ½E[D(fake)²] + E[(D(real)−1)²]，对各尺度取均值。"""
    _check_scores(d_scores_fake, 'd_scores_fake')
    _check_scores(d_scores_real, 'd_scores_real')
    if len(d_scores_fake) != len(d_scores_real):
        raise ArgumentError("fake and real score lists have different lengths")
    per_scale = [
        0.5 * fake.pow(2).mean() + (real - 1).pow(2).mean()
        for fake, real in zip(d_scores_fake, d_scores_real)
    ]
    return torch.stack(per_scale).mean()


def adversarial_loss_g(d_scores_fake: Sequence[torch.Tensor]) -> torch.Tensor:
    """生成器一侧的 E[(D(fake)−1)²]，对各尺度取均值。"""
    _check_scores(d_scores_fake, 'd_scores_fake')
    return torch.stack([(fake - 1).pow(2).mean() for fake in d_scores_fake]).mean()


def _mean_l1(a, b, name):
    _check_pair(a, b, name)
    return (a - b).abs().mean()


def image_recon_loss(x: torch.Tensor, x_rec: torch.Tensor) -> torch.Tensor:
    return _mean_l1(x_rec, x, 'image_recon_loss')


def content_recon_loss(c: torch.Tensor, c_rec: torch.Tensor) -> torch.Tensor:
    return _mean_l1(c_rec, c, 'content_recon_loss')


def style_recon_loss(s_sampled: torch.Tensor, s_rec: torch.Tensor) -> torch.Tensor:
    return _mean_l1(s_rec, s_sampled, 'style_recon_loss')


def semantic_constraint_loss(u_src: torch.Tensor, u_trans: torch.Tensor) -> torch.Tensor:
    """源图像与翻译结果的语义特征之差。

    源特征不回传梯度，梯度只流向翻译图像一侧。
    """
    return _mean_l1(u_trans, u_src.detach(), 'semantic_constraint_loss')


def weighted_total(terms: Mapping[str, torch.Tensor], weights: LossWeights):
    """按目标函数对各分项加权求和。``terms`` 必须包含 ``TERM_NAMES`` 中的每一项。"""
    missing = [name for name in TERM_NAMES if name not in terms]
    if missing:
        raise ArgumentError("missing loss terms: {}".format(missing))
    return (
        terms['gan_A'] + terms['gan_B']
        + weights.lambda_x * (terms['recon_x_A'] + terms['recon_x_B'])
        + weights.lambda_c * (terms['recon_c_A'] + terms['recon_c_B'])
        + weights.lambda_s * (terms['recon_s_A'] + terms['recon_s_B'])
        + weights.lambda_u * (terms['sem_A'] + terms['sem_B'])
    )


def _as_float(value):
    if isinstance(value, torch.Tensor):
        return float(value.detach().item())
    return float(value)


def total_loss(terms: Mapping[str, torch.Tensor], weights: LossWeights,
               dis_A=0.0, dis_B=0.0) -> LossBreakdown:
    total = weighted_total(terms, weights)
    values = {name: _as_float(terms[name]) for name in TERM_NAMES}
    return LossBreakdown(
        total=_as_float(total), dis_A=_as_float(dis_A), dis_B=_as_float(dis_B), **values)
