"""翻译模型的训练循环、检查点与推理时翻译。

每一步先更新两个判别器，再更新两个生成器（编码器、仿射网络与解码器）。
串行模式下同一配置与种子的损失轨迹逐位可复现，从检查点续训与不中断训练一致。
"""
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from logging import INFO, getLogger
from typing import Optional, Tuple

import torch

from udit.constants import (
    BASE_CHANNELS, CHECKPOINT_DIRNAME, CHECKPOINT_NAME_TEMPLATE, DEFAULT_BATCH_SIZE,
    DEFAULT_BETAS, DEFAULT_CHECKPOINT_EVERY, DEFAULT_LAMBDA_C, DEFAULT_LAMBDA_S,
    DEFAULT_LAMBDA_U, DEFAULT_LAMBDA_X, DEFAULT_LOG_EVERY, DEFAULT_LR, DIRECTIONS,
    FAILURE_FILENAME, FINAL_CHECKPOINT_FILENAME, N_RES_BLOCKS, TRAIN_LOG_FILENAME
)
from udit.datasets import load_domain, load_images, read_manifest, validate_manifest
from udit.exceptions import (
    ArgumentError, CheckpointError, ConfigurationError, DataError, TrainingError, serialize
)
from udit.log_helpers import JsonLinesLog, make_timing_logger
from udit.losses import (
    LossWeights, adversarial_loss_d, adversarial_loss_g, content_recon_loss, image_recon_loss,
    semantic_constraint_loss, style_recon_loss, total_loss, weighted_total
)
from udit.nets import ContentCode, ModelSpec, TranslationModel, check_image, sample_style
from udit.semext import SemanticExtractor, extract_semantics, load_extractor
from udit.serialization import load_checkpoint, module_arrays, restore_module, save_checkpoint
from udit.utils import torch_generator


_log = getLogger(__name__)
log_time = make_timing_logger(_log, level=INFO)

MODEL_KIND = 'translation_model'


@dataclass
class TrainConfig:
    dataset_root: str
    out_dir: str = '.'
    lambda_x: float = DEFAULT_LAMBDA_X
    lambda_c: float = DEFAULT_LAMBDA_C
    lambda_s: float = DEFAULT_LAMBDA_S
    lambda_u: float = DEFAULT_LAMBDA_U
    use_pooling_indices: bool = True
    extractor_path: Optional[str] = None
    iterations: int = 5000
    batch_size: int = DEFAULT_BATCH_SIZE
    lr_g: float = DEFAULT_LR
    lr_d: float = DEFAULT_LR
    seed: int = 0
    checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY
    log_every: int = DEFAULT_LOG_EVERY
    base_channels: int = BASE_CHANNELS
    n_res: int = N_RES_BLOCKS
    resume_from: Optional[str] = None
    serial: bool = True

    def __post_init__(self):
        self.validate()

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_x, self.lambda_c, self.lambda_s, self.lambda_u)

    def validate(self):
        weights = self.weights
        if weights.lambda_u > 0 and not self.extractor_path:
            raise ConfigurationError("lambda_u > 0 requires extractor_path")
        for name in ('iterations', 'batch_size', 'checkpoint_every', 'log_every'):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigurationError("{} must be a positive integer, got {!r}".format(
                    name, value))
        for name in ('lr_g', 'lr_d'):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
                raise ConfigurationError("{} must be a positive number, got {!r}".format(
                    name, value))
        if not self.dataset_root:
            raise ConfigurationError("dataset_root is required")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {item.name for item in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError("unknown training options: {}".format(sorted(unknown)))
        if 'dataset_root' not in data:
            raise ConfigurationError("dataset_root is required")
        return cls(**data)


@dataclass
class TrainState:
    model: TranslationModel
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    weights: LossWeights
    extractor: Optional[SemanticExtractor] = None
    iteration: int = 0
    generator: torch.Generator = field(default_factory=torch.Generator)


def create_state(spec: ModelSpec, weights: LossWeights,
                 extractor: Optional[SemanticExtractor] = None,
                 lr_g=DEFAULT_LR, lr_d=DEFAULT_LR, seed: Optional[int] = None) -> TrainState:
    if weights.lambda_u > 0 and extractor is None:
        raise ConfigurationError("lambda_u > 0 requires a semantic extractor")
    if extractor is not None:
        extractor.freeze()
    model = TranslationModel(spec)
    gen_params, dis_params = model.parameter_groups()
    return TrainState(
        model=model,
        opt_g=torch.optim.Adam(gen_params, lr=lr_g, betas=DEFAULT_BETAS, weight_decay=0),
        opt_d=torch.optim.Adam(dis_params, lr=lr_d, betas=DEFAULT_BETAS, weight_decay=0),
        weights=weights,
        extractor=extractor,
        generator=torch_generator(spec.seed if seed is None else seed),
    )


def _set_requires_grad(module, flag):
    for parameter in module.parameters():
        parameter.requires_grad_(flag)


def _semantic_term(state, source, translated):
    if state.extractor is None:
        return torch.zeros((), dtype=source.dtype)
    return semantic_constraint_loss(
        extract_semantics(state.extractor, source), extract_semantics(state.extractor, translated))


def train_step(state: TrainState, batch_a: torch.Tensor, batch_b: torch.Tensor):
    """一次判别器更新加一次生成器更新，返回 (state, LossBreakdown)。

    ``recon_c_A``、``recon_s_A``、``sem_A`` 等以源域命名：例如 ``sem_A`` 比较
    A 域图像与其 A→B 翻译结果的语义特征。
    """
    check_image(batch_a)
    check_image(batch_b)
    model = state.model
    gen_a, gen_b = model.gen_a, model.gen_b
    style_dim = model.spec.style_dim
    # 目标域的随机风格：s_b 用于 A→B，s_a 用于 B→A
    s_b = sample_style(len(batch_a), state.generator, style_dim, batch_a.dtype)
    s_a = sample_style(len(batch_b), state.generator, style_dim, batch_b.dtype)

    # 判别器
    _set_requires_grad(model.dis_a, True)
    _set_requires_grad(model.dis_b, True)
    with torch.no_grad():
        x_ab = gen_b.decode(gen_a.content_encode(batch_a), s_b)
        x_ba = gen_a.decode(gen_b.content_encode(batch_b), s_a)
    dis_a = adversarial_loss_d(model.dis_a(x_ba), model.dis_a(batch_a))
    dis_b = adversarial_loss_d(model.dis_b(x_ab), model.dis_b(batch_b))
    loss_d = dis_a + dis_b
    if not torch.isfinite(loss_d):
        raise TrainingError(
            "non-finite discriminator loss at iteration {}".format(state.iteration + 1),
            breakdown={'dis_A': float(dis_a), 'dis_B': float(dis_b)},
            iteration=state.iteration + 1)
    state.opt_d.zero_grad()
    loss_d.backward()
    state.opt_d.step()

    # 生成器
    _set_requires_grad(model.dis_a, False)
    _set_requires_grad(model.dis_b, False)
    try:
        c_a = gen_a.content_encode(batch_a)
        c_b = gen_b.content_encode(batch_b)
        x_aa = gen_a.decode(c_a, gen_a.style_encode(batch_a))
        x_bb = gen_b.decode(c_b, gen_b.style_encode(batch_b))
        x_ab = gen_b.decode(c_a, s_b)
        x_ba = gen_a.decode(c_b, s_a)
        c_ab, s_ab = gen_b.content_encode(x_ab), gen_b.style_encode(x_ab)
        c_ba, s_ba = gen_a.content_encode(x_ba), gen_a.style_encode(x_ba)

        terms = {
            'gan_A': adversarial_loss_g(model.dis_a(x_ba)),
            'gan_B': adversarial_loss_g(model.dis_b(x_ab)),
            'recon_x_A': image_recon_loss(batch_a, x_aa),
            'recon_x_B': image_recon_loss(batch_b, x_bb),
            'recon_c_A': content_recon_loss(c_a.features, c_ab.features),
            'recon_c_B': content_recon_loss(c_b.features, c_ba.features),
            'recon_s_A': style_recon_loss(s_b, s_ab),
            'recon_s_B': style_recon_loss(s_a, s_ba),
            'sem_A': _semantic_term(state, batch_a, x_ab),
            'sem_B': _semantic_term(state, batch_b, x_ba),
        }
        total = weighted_total(terms, state.weights)
        breakdown = total_loss(terms, state.weights, dis_a, dis_b)
        if not breakdown.is_finite():
            raise TrainingError(
                "non-finite loss at iteration {}".format(state.iteration + 1),
                breakdown=breakdown, iteration=state.iteration + 1)
        state.opt_g.zero_grad()
        total.backward()
        state.opt_g.step()
    finally:
        _set_requires_grad(model.dis_a, True)
        _set_requires_grad(model.dis_b, True)

    state.iteration += 1
    return state, breakdown


# ---------------------------------------------------------------------------
# 检查点


def save_training_checkpoint(state: TrainState, path, config: Optional[TrainConfig] = None):
    manifest = {
        'spec': state.model.spec.to_dict(),
        'weights': state.weights.to_dict(),
        'seed': state.model.spec.seed,
        'iteration': state.iteration,
    }
    if config is not None:
        manifest['config'] = config.to_dict()
    extra = {
        'opt_g': state.opt_g.state_dict(),
        'opt_d': state.opt_d.state_dict(),
        'generator': state.generator.get_state(),
        'iteration': state.iteration,
    }
    with log_time("写入检查点 %s", path):
        return save_checkpoint(path, MODEL_KIND, module_arrays(state.model), manifest, extra)


def _spec_from_manifest(manifest) -> ModelSpec:
    try:
        return ModelSpec.from_dict(manifest['spec'])
    except (KeyError, TypeError, ConfigurationError) as exc:
        raise CheckpointError("checkpoint has no usable model spec: {}".format(exc))


def load_training_checkpoint(path, state: TrainState) -> TrainState:
    """把检查点中的参数、优化器矩估计、随机数状态与迭代数恢复到 ``state``。"""
    checkpoint = load_checkpoint(path, kind=MODEL_KIND)
    spec = _spec_from_manifest(checkpoint.manifest)
    if spec != state.model.spec:
        raise CheckpointError("checkpoint architecture {} does not match {}".format(
            spec.to_dict(), state.model.spec.to_dict()))
    restore_module(state.model, checkpoint.arrays)
    try:
        state.opt_g.load_state_dict(checkpoint.extra['opt_g'])
        state.opt_d.load_state_dict(checkpoint.extra['opt_d'])
        state.generator.set_state(checkpoint.extra['generator'])
        state.iteration = int(checkpoint.extra['iteration'])
    except (KeyError, ValueError, RuntimeError) as exc:
        raise CheckpointError("{}: cannot restore training state: {}".format(path, exc))
    return state


def load_translation_model(path) -> TranslationModel:
    checkpoint = load_checkpoint(path, kind=MODEL_KIND)
    model = TranslationModel(_spec_from_manifest(checkpoint.manifest))
    restore_module(model, checkpoint.arrays)
    return model.eval()


# ---------------------------------------------------------------------------
# 训练循环


def _load_domain_images(root, domain):
    with log_time("载入域 %s 的图像", domain):
        return load_images(root, load_domain(root, domain))


def _sample_batch(images, batch_size, generator):
    return images[torch.randint(len(images), (batch_size,), generator=generator)]


def _trim_log(path, iteration):
    """续训时丢弃检查点之后的日志记录。"""
    if not os.path.exists(path):
        return
    records = [r for r in JsonLinesLog.read(path) if r.get('iteration', 0) <= iteration]
    with JsonLinesLog(path, truncate=True) as log:
        for record in records:
            log.write(record)


def _write_failure(out_dir, exc):
    path = os.path.join(out_dir, FAILURE_FILENAME)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(serialize(exc), handle, indent=2, sort_keys=True)
    return path


def train(config: TrainConfig) -> str:
    """按配置训练并返回最终检查点路径。"""
    config.validate()
    violations = validate_manifest(config.dataset_root)
    if violations:
        raise DataError("dataset {} is invalid: {}".format(
            config.dataset_root, '; '.join(str(v) for v in violations[:5])))
    if not config.serial:
        return _run(config)
    enabled = torch.are_deterministic_algorithms_enabled()
    warn_only = torch.is_deterministic_algorithms_warn_only_enabled()
    torch.use_deterministic_algorithms(True, warn_only=True)
    try:
        return _run(config)
    finally:
        torch.use_deterministic_algorithms(enabled, warn_only=warn_only)


def _run(config: TrainConfig) -> str:
    image_size = read_manifest(config.dataset_root, 'A').image_size
    spec = ModelSpec(
        image_size=image_size,
        use_pooling_indices=config.use_pooling_indices,
        base_channels=config.base_channels,
        n_res=config.n_res,
        seed=config.seed,
    )
    images_a = _load_domain_images(config.dataset_root, 'A')
    images_b = _load_domain_images(config.dataset_root, 'B')
    extractor = load_extractor(config.extractor_path) if config.extractor_path else None
    state = create_state(spec, config.weights, extractor, config.lr_g, config.lr_d)

    checkpoint_dir = os.path.join(config.out_dir, CHECKPOINT_DIRNAME)
    os.makedirs(checkpoint_dir, exist_ok=True)
    log_path = os.path.join(config.out_dir, TRAIN_LOG_FILENAME)
    if config.resume_from:
        load_training_checkpoint(config.resume_from, state)
        _trim_log(log_path, state.iteration)
        _log.info("从 %s 续训 (迭代 %d)", config.resume_from, state.iteration)

    with JsonLinesLog(log_path, truncate=not config.resume_from) as log, \
            log_time("训练 %d 次迭代", config.iterations - state.iteration):
        while state.iteration < config.iterations:
            batch_a = _sample_batch(images_a, config.batch_size, state.generator)
            batch_b = _sample_batch(images_b, config.batch_size, state.generator)
            try:
                state, breakdown = train_step(state, batch_a, batch_b)
            except TrainingError as exc:
                _log.error("训练失败: %s", exc)
                _write_failure(config.out_dir, exc)
                raise

            record = {'iteration': state.iteration}
            record.update(breakdown.to_dict())
            log.write(record)
            if state.iteration % config.log_every == 0:
                _log.info("迭代 %d: total=%.4f dis_A=%.4f dis_B=%.4f", state.iteration,
                          breakdown.total, breakdown.dis_A, breakdown.dis_B)
            if state.iteration % config.checkpoint_every == 0:
                save_training_checkpoint(state, os.path.join(
                    checkpoint_dir, CHECKPOINT_NAME_TEMPLATE.format(state.iteration)), config)

    final_path = os.path.join(config.out_dir, FINAL_CHECKPOINT_FILENAME)
    save_training_checkpoint(state, final_path, config)
    return final_path


# ---------------------------------------------------------------------------
# 推理


def parse_direction(direction) -> Tuple[str, str]:
    if direction not in DIRECTIONS:
        raise ArgumentError("direction must be one of {}, got {!r}".format(DIRECTIONS, direction))
    source, target = direction.split('->')
    return source, target


def _repeat_content(content: ContentCode, k) -> ContentCode:
    indices = None
    if content.indices is not None:
        indices = tuple(index.repeat(k, 1, 1, 1) for index in content.indices)
    return ContentCode(content.features.repeat(k, 1, 1, 1), indices)


def translate(model: TranslationModel, image: torch.Tensor, k: int, seed: int,
              direction='A->B') -> torch.Tensor:
    """把一张图像与 ``k`` 个随机风格码组合，返回 ``(k, 3, H, W)``。

    不使用语义提取器。
    """
    if k < 1:
        raise ArgumentError("k must be at least 1, got {}".format(k))
    if image.dim() == 3:
        image = image.unsqueeze(0)
    if image.shape[0] != 1:
        raise ArgumentError("translate takes a single image, got a batch of {}".format(
            image.shape[0]))
    source, target = parse_direction(direction)
    styles = sample_style(k, torch_generator(seed), model.spec.style_dim, image.dtype)
    with torch.no_grad():
        content = model.generator(source).content_encode(image)
        return model.generator(target).decode(_repeat_content(content, k), styles)


class ModelTranslator(object):
    """把训练好的模型包装成评估所需的翻译器接口。"""

    def __init__(self, model: TranslationModel, direction='A->B'):
        self.model = model.eval()
        self.direction = direction
        self.source, self.target = parse_direction(direction)

    def __call__(self, images: torch.Tensor, generator: Optional[torch.Generator] = None):
        """每张输入配一个随机风格，返回同样形状的翻译结果。"""
        styles = sample_style(len(images), generator, self.model.spec.style_dim, images.dtype)
        with torch.no_grad():
            content = self.model.generator(self.source).content_encode(images)
            return self.model.generator(self.target).decode(content, styles)

    def samples(self, image: torch.Tensor, k: int, seed: int):
        return translate(self.model, image, k, seed, self.direction)
