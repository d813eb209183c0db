"""翻译器的全部神经网络组件。

张量一律采用 NCHW 布局：图像为 ``(N, 3, H, W)``、取值 [-1, 1]；内容码为
``(N, 4b, H/8, W/8)``；风格码为 ``(N, style_dim)``。``b`` 为 ``base_channels``，
默认 64，此时各层形状与附录结构表一致。
"""
from dataclasses import asdict, dataclass
from typing import List, NamedTuple, Optional, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from udit.constants import (
    BASE_CHANNELS, INIT_STD, LRELU_SLOPE, N_DISCRIMINATOR_SCALES, N_RES_BLOCKS,
    NORM_EPS, STYLE_DIM, SUPPORTED_IMAGE_SIZES
)
from udit.exceptions import ArgumentError, ConfigurationError, ShapeError, StateError


# 方差的下限，保证常数特征图上 sqrt 的梯度有限。
_VAR_FLOOR = 1e-20


class ContentCode(NamedTuple):
    features: torch.Tensor
    # 每个池化阶段一个索引张量，按编码顺序排列；未启用池化索引时为 None。
    indices: Optional[Tuple[torch.Tensor, torch.Tensor, torch.Tensor]] = None


class AdaInParams(NamedTuple):
    mu: torch.Tensor
    sigma: torch.Tensor


@dataclass(frozen=True)
class ModelSpec:
    """两个域共用的结构超参数。"""

    image_size: int = 64
    use_pooling_indices: bool = True
    style_dim: int = STYLE_DIM
    base_channels: int = BASE_CHANNELS
    n_res: int = N_RES_BLOCKS
    n_scales: int = N_DISCRIMINATOR_SCALES
    seed: int = 0

    def __post_init__(self):
        if self.image_size not in SUPPORTED_IMAGE_SIZES:
            raise ConfigurationError(
                "image_size must be one of {}, got {}".format(
                    SUPPORTED_IMAGE_SIZES, self.image_size))
        for name in ('style_dim', 'base_channels', 'n_scales'):
            if getattr(self, name) < 1:
                raise ConfigurationError("{} must be positive".format(name))
        if self.n_res < 0:
            raise ConfigurationError("n_res must be non-negative")

    @property
    def content_channels(self):
        return 4 * self.base_channels

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {key: value for key, value in data.items() if key in cls.__dataclass_fields__}
        return cls(**known)


def init_weights(module):
    """截断正态（std 0.02）初始化卷积与全连接权重，偏置置零。"""
    if isinstance(module, (nn.Conv2d, nn.Linear)):
        nn.init.trunc_normal_(module.weight, std=INIT_STD, a=-2 * INIT_STD, b=2 * INIT_STD)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def check_image(image: torch.Tensor):
    if image.dim() != 4 or image.shape[1] != 3:
        raise ShapeError("expected an (N, 3, H, W) image batch, got {}".format(
            tuple(image.shape)))
    height, width = image.shape[-2:]
    if height != width or height not in SUPPORTED_IMAGE_SIZES:
        raise ShapeError("image must be square with side in {}, got {}x{}".format(
            SUPPORTED_IMAGE_SIZES, height, width))


def global_average_pool(x: torch.Tensor) -> torch.Tensor:
    return x.mean(dim=(2, 3), keepdim=True)


def pool_with_indices(x: torch.Tensor):
    """2×2、步长 2 的最大池化，同时返回每个窗口最大值的位置。"""
    if x.dim() != 4:
        raise ShapeError("expected an (N, C, H, W) tensor, got {}".format(tuple(x.shape)))
    height, width = x.shape[-2:]
    if height % 2 or width % 2:
        raise ShapeError("pooling needs even spatial dims, got {}x{}".format(height, width))
    return F.max_pool2d(x, kernel_size=2, stride=2, return_indices=True)


def unpool_with_indices(y: torch.Tensor, indices: torch.Tensor) -> torch.Tensor:
    """把 ``y`` 的每个值放回 ``indices`` 记录的位置，其余位置为零。"""
    if y.shape != indices.shape:
        raise ShapeError("values {} and indices {} differ in shape".format(
            tuple(y.shape), tuple(indices.shape)))
    height, width = y.shape[-2:]
    return F.max_unpool2d(y, indices, kernel_size=2, stride=2,
                          output_size=(2 * height, 2 * width))


def adain_apply(features: torch.Tensor, params: AdaInParams, eps: float = NORM_EPS):
    """逐通道标准化 ``features`` 后以 ``sigma`` 缩放、以 ``mu`` 平移。

    分母为逐通道（总体）标准差加 ``eps``。
    """
    if features.dim() != 4:
        raise ShapeError("expected an (N, C, H, W) tensor, got {}".format(
            tuple(features.shape)))
    n, c = features.shape[:2]
    mu, sigma = params
    if mu.shape != (n, c) or sigma.shape != (n, c):
        raise ShapeError("AdaIN parameters {} / {} do not match features {}".format(
            tuple(mu.shape), tuple(sigma.shape), tuple(features.shape)))

    mean = features.mean(dim=(2, 3), keepdim=True)
    var = features.var(dim=(2, 3), keepdim=True, unbiased=False)
    std = var.clamp_min(_VAR_FLOOR).sqrt()
    normalized = (features - mean) / (std + eps)
    return normalized * sigma.view(n, c, 1, 1) + mu.view(n, c, 1, 1)


def _activation(name):
    if name == 'relu':
        return nn.ReLU(inplace=False)
    if name == 'lrelu':
        return nn.LeakyReLU(LRELU_SLOPE, inplace=False)
    if name == 'tanh':
        return nn.Tanh()
    if name == 'none':
        return nn.Identity()
    raise ConfigurationError("unknown activation {!r}".format(name))


class ConvBlock(nn.Module):
    """卷积 → 可选实例归一化（无仿射参数）→ 激活。"""

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0,
                 norm='none', activation='none'):
        super(ConvBlock, self).__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size, stride, padding)
        if norm == 'in':
            self.norm = nn.InstanceNorm2d(out_channels, affine=False, eps=NORM_EPS)
        elif norm == 'none':
            self.norm = nn.Identity()
        else:
            raise ConfigurationError("unknown norm {!r}".format(norm))
        self.activation = _activation(activation)

    def forward(self, x):
        return self.activation(self.norm(self.conv(x)))


class ResBlock(nn.Module):
    def __init__(self, channels):
        super(ResBlock, self).__init__()
        self.block = nn.Sequential(
            ConvBlock(channels, channels, 3, 1, 1, norm='in', activation='relu'),
            ConvBlock(channels, channels, 3, 1, 1, norm='in', activation='none'),
        )

    def forward(self, x):
        return x + self.block(x)


class AdaInResBlock(nn.Module):
    def __init__(self, channels):
        super(AdaInResBlock, self).__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)

    def forward(self, x, params: AdaInParams):
        out = F.relu(adain_apply(self.conv1(x), params))
        out = adain_apply(self.conv2(out), params)
        return x + out


class ContentEncoder(nn.Module):
    """三级 7×7 卷积 + IN + 2×2 最大池化，随后若干 IN 残差块。"""

    def __init__(self, base_channels=BASE_CHANNELS, n_res=N_RES_BLOCKS):
        super(ContentEncoder, self).__init__()
        b = base_channels
        self.stages = nn.ModuleList([
            ConvBlock(3, b, 7, 1, 3, norm='in', activation='relu'),
            ConvBlock(b, 2 * b, 7, 1, 3, norm='in', activation='relu'),
            ConvBlock(2 * b, 4 * b, 7, 1, 3, norm='in', activation='relu'),
        ])
        self.res = nn.Sequential(*[ResBlock(4 * b) for _ in range(n_res)])

    def forward(self, image, record_indices=True) -> ContentCode:
        x = image
        indices = []
        for stage in self.stages:
            x, index = pool_with_indices(stage(x))
            indices.append(index)
        features = self.res(x)
        return ContentCode(features, tuple(indices) if record_indices else None)


class StyleEncoder(nn.Module):
    """卷积 + ReLU（无归一化）→ 全局平均池化 → 1×1 卷积到 ``style_dim``。"""

    def __init__(self, base_channels=BASE_CHANNELS, style_dim=STYLE_DIM):
        super(StyleEncoder, self).__init__()
        b = base_channels
        self.trunk = nn.Sequential(
            ConvBlock(3, b, 7, 1, 3, activation='relu'),
            ConvBlock(b, 2 * b, 4, 2, 1, activation='relu'),
            ConvBlock(2 * b, 4 * b, 4, 2, 1, activation='relu'),
        )
        self.head = nn.Conv2d(4 * b, style_dim, 1, 1, 0)

    def forward(self, image):
        return self.head(global_average_pool(self.trunk(image))).flatten(1)


class AdaInAffine(nn.Module):
    """风格码 → (mu, sigma)。两个输出头共享前两层。"""

    def __init__(self, style_dim=STYLE_DIM, channels=4 * BASE_CHANNELS):
        super(AdaInAffine, self).__init__()
        self.shared = nn.Sequential(
            nn.Linear(style_dim, channels), nn.ReLU(),
            nn.Linear(channels, channels), nn.ReLU(),
        )
        self.mu = nn.Linear(channels, channels)
        self.sigma = nn.Linear(channels, channels)

    def forward(self, style) -> AdaInParams:
        hidden = self.shared(style)
        return AdaInParams(self.mu(hidden), self.sigma(hidden))


class Decoder(nn.Module):
    """AdaIN 残差块，随后三级 反池化（或最近邻上采样）+ 7×7 卷积。"""

    def __init__(self, base_channels=BASE_CHANNELS, n_res=N_RES_BLOCKS,
                 use_pooling_indices=True):
        super(Decoder, self).__init__()
        b = base_channels
        self.use_pooling_indices = use_pooling_indices
        self.res = nn.ModuleList([AdaInResBlock(4 * b) for _ in range(n_res)])
        self.stages = nn.ModuleList([
            ConvBlock(4 * b, 2 * b, 7, 1, 3, norm='in', activation='relu'),
            ConvBlock(2 * b, b, 7, 1, 3, norm='in', activation='relu'),
            ConvBlock(b, 3, 7, 1, 3, norm='none', activation='tanh'),
        ])

    def forward(self, content: ContentCode, params: AdaInParams):
        x = content.features
        for block in self.res:
            x = block(x, params)

        if self.use_pooling_indices:
            if content.indices is None:
                raise StateError("decoder runs with pooling indices but none were given")
            side_info = list(reversed(content.indices))
        for position, stage in enumerate(self.stages):
            if self.use_pooling_indices:
                x = unpool_with_indices(x, side_info[position])
            else:
                x = F.interpolate(x, scale_factor=2, mode='nearest')
            x = stage(x)
        return x


class Generator(nn.Module):
    """一个域的 内容编码器、风格编码器、仿射网络与解码器。"""

    def __init__(self, spec: ModelSpec):
        super(Generator, self).__init__()
        self.spec = spec
        self.content_encoder = ContentEncoder(spec.base_channels, spec.n_res)
        self.style_encoder = StyleEncoder(spec.base_channels, spec.style_dim)
        self.affine = AdaInAffine(spec.style_dim, spec.content_channels)
        self.decoder = Decoder(spec.base_channels, spec.n_res, spec.use_pooling_indices)

    def content_encode(self, image) -> ContentCode:
        check_image(image)
        return self.content_encoder(image, record_indices=self.spec.use_pooling_indices)

    def style_encode(self, image) -> torch.Tensor:
        check_image(image)
        return self.style_encoder(image)

    def adain_affine(self, style) -> AdaInParams:
        if style.dim() != 2 or style.shape[1] != self.spec.style_dim:
            raise ShapeError("expected an (N, {}) style code, got {}".format(
                self.spec.style_dim, tuple(style.shape)))
        return self.affine(style)

    def decode(self, content: ContentCode, style) -> torch.Tensor:
        features = content.features
        if features.dim() != 4 or features.shape[1] != self.spec.content_channels:
            raise ShapeError("expected content with {} channels, got {}".format(
                self.spec.content_channels, tuple(features.shape)))
        if style.shape[0] != features.shape[0]:
            raise ShapeError("content batch {} and style batch {} differ".format(
                features.shape[0], style.shape[0]))
        return self.decoder(content, self.adain_affine(style))


class PatchDiscriminator(nn.Module):
    def __init__(self, base_channels=BASE_CHANNELS):
        super(PatchDiscriminator, self).__init__()
        b = base_channels
        self.model = nn.Sequential(
            ConvBlock(3, b, 4, 2, 1, activation='lrelu'),
            ConvBlock(b, 2 * b, 4, 2, 1, activation='lrelu'),
            ConvBlock(2 * b, 4 * b, 4, 2, 1, activation='lrelu'),
            ConvBlock(4 * b, 8 * b, 4, 2, 1, activation='lrelu'),
            nn.Conv2d(8 * b, 1, 1, 1, 0),
        )

    def forward(self, x):
        return self.model(x)


class MultiScaleDiscriminator(nn.Module):
    """同一结构在原尺度以及 2×、4× 下采样输入上各有一份独立参数。"""

    def __init__(self, base_channels=BASE_CHANNELS, n_scales=N_DISCRIMINATOR_SCALES):
        super(MultiScaleDiscriminator, self).__init__()
        self.scales = nn.ModuleList([PatchDiscriminator(base_channels) for _ in range(n_scales)])

    def forward(self, image) -> List[torch.Tensor]:
        outputs = []
        x = image
        for position, discriminator in enumerate(self.scales):
            if position:
                x = F.avg_pool2d(x, 3, stride=2, padding=1, count_include_pad=False)
            outputs.append(discriminator(x))
        return outputs


def discriminate_multiscale(discriminator: MultiScaleDiscriminator, image) -> List[torch.Tensor]:
    check_image(image)
    return discriminator(image)


def sample_style(n: int, generator: Optional[torch.Generator] = None,
                 style_dim: int = STYLE_DIM, dtype=torch.float32) -> torch.Tensor:
    """从标准正态分布独立采样 ``n`` 个风格码。"""
    if n < 1:
        raise ArgumentError("n must be at least 1, got {}".format(n))
    return torch.randn(n, style_dim, generator=generator, dtype=dtype)


class TranslationModel(nn.Module):
    """A、B 两个域的生成器与判别器。"""

    def __init__(self, spec: ModelSpec):
        super(TranslationModel, self).__init__()
        self.spec = spec
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(spec.seed)
            self.gen_a = Generator(spec)
            self.gen_b = Generator(spec)
            self.dis_a = MultiScaleDiscriminator(spec.base_channels, spec.n_scales)
            self.dis_b = MultiScaleDiscriminator(spec.base_channels, spec.n_scales)
            self.apply(init_weights)

    def generator(self, domain) -> Generator:
        return {'A': self.gen_a, 'B': self.gen_b}[domain]

    def discriminator(self, domain) -> MultiScaleDiscriminator:
        return {'A': self.dis_a, 'B': self.dis_b}[domain]

    def parameter_groups(self):
        generators = list(self.gen_a.parameters()) + list(self.gen_b.parameters())
        discriminators = list(self.dis_a.parameters()) + list(self.dis_b.parameters())
        return generators, discriminators
