import pytest
import torch
from torch import nn

from udit.exceptions import ConfigurationError, ShapeError, StateError
from udit.nets import (
    AdaInAffine, AdaInParams, ContentCode, ContentEncoder, Decoder, Generator,
    ModelSpec, MultiScaleDiscriminator, PatchDiscriminator, StyleEncoder,
    TranslationModel, adain_apply, discriminate_multiscale, global_average_pool,
    pool_with_indices, sample_style, unpool_with_indices
)
from udit.testing.utils import random_images
from udit.utils import torch_generator


def zero_biases(module):
    for submodule in module.modules():
        if isinstance(submodule, (nn.Conv2d, nn.Linear)) and submodule.bias is not None:
            nn.init.zeros_(submodule.bias)


class TestModelSpec(object):

    def test_defaults(self):
        spec = ModelSpec()
        assert spec.style_dim == 8
        assert spec.content_channels == 256

    @pytest.mark.parametrize('kwargs', [
        {'image_size': 96},
        {'style_dim': 0},
        {'n_res': -1},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            ModelSpec(**kwargs)

    def test_dict_round_trip(self, tiny_spec):
        assert ModelSpec.from_dict(tiny_spec.to_dict()) == tiny_spec


class TestPooling(object):

    def test_window_max(self):
        x = torch.tensor([[[[1., 2.], [3., 4.]]]])
        pooled, indices = pool_with_indices(x)
        assert pooled.item() == 4
        assert indices.item() == 3

    def test_unpool_places_values(self):
        # 逐窗口的标量循环
        generator = torch.Generator().manual_seed(0)
        for _ in range(1000):
            x = torch.randn(1, 4, 8, 8, generator=generator)
            pooled, indices = pool_with_indices(x)
            restored = unpool_with_indices(pooled, indices)

            expected = [[[0.0] * 8 for _ in range(8)] for _ in range(4)]
            maxima = [[[0.0] * 4 for _ in range(4)] for _ in range(4)]
            for c, plane in enumerate(x[0].tolist()):
                for i in range(0, 8, 2):
                    for j in range(0, 8, 2):
                        window = [(plane[i + di][j + dj], i + di, j + dj)
                                  for di in range(2) for dj in range(2)]
                        value, row, col = max(window, key=lambda item: item[0])
                        expected[c][row][col] = value
                        maxima[c][i // 2][j // 2] = value
            assert pooled[0].tolist() == maxima
            assert restored[0].tolist() == expected

    def test_odd_dims(self):
        with pytest.raises(ShapeError):
            pool_with_indices(torch.zeros(1, 1, 5, 4))

    def test_unpool_shape_mismatch(self):
        pooled, indices = pool_with_indices(torch.randn(1, 2, 4, 4))
        with pytest.raises(ShapeError):
            unpool_with_indices(pooled[:, :1], indices)


class TestAdaIn(object):

    def test_standardizes(self):
        torch.manual_seed(0)
        x = torch.randn(2, 3, 8, 8) * 4 + 2
        params = AdaInParams(torch.zeros(2, 3), torch.ones(2, 3))
        out = adain_apply(x, params)
        assert torch.allclose(out.mean(dim=(2, 3)), torch.zeros(2, 3), atol=1e-5)
        assert torch.allclose(out.std(dim=(2, 3), unbiased=False), torch.ones(2, 3), atol=1e-4)

    def test_zero_sigma(self):
        torch.manual_seed(0)
        x = torch.randn(1, 2, 4, 4)
        params = AdaInParams(torch.tensor([[1.5, -2.0]]), torch.zeros(1, 2))
        out = adain_apply(x, params)
        assert torch.equal(out[0, 0], torch.full((4, 4), 1.5))
        assert torch.equal(out[0, 1], torch.full((4, 4), -2.0))

    def test_output_moments(self):
        generator = torch.Generator().manual_seed(1)
        for _ in range(100):
            x = torch.randn(1, 4, 16, 16, generator=generator, dtype=torch.float64)
            x = (x - x.mean(dim=(2, 3), keepdim=True)) / x.std(dim=(2, 3), keepdim=True,
                                                               unbiased=False)
            scale = 0.1 + 2.9 * torch.rand(1, 4, 1, 1, generator=generator, dtype=torch.float64)
            shift = torch.randn(1, 4, 1, 1, generator=generator, dtype=torch.float64)
            mu = torch.randn(1, 4, generator=generator, dtype=torch.float64)
            sigma = torch.rand(1, 4, generator=generator, dtype=torch.float64) * 2 - 1
            out = adain_apply(x * scale + shift, AdaInParams(mu, sigma))

            for c in range(4):
                values = out[0, c].flatten().tolist()
                mean = sum(values) / len(values)
                std = (sum((v - mean) ** 2 for v in values) / len(values)) ** 0.5
                assert abs(mean - float(mu[0, c])) <= 1e-4
                assert abs(std - abs(float(sigma[0, c]))) <= 1e-4

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adain_apply(torch.zeros(1, 3, 4, 4), AdaInParams(torch.zeros(1, 2), torch.ones(1, 2)))


class TestContentEncoder(object):

    @pytest.mark.parametrize(('size', 'side'), [(64, 8), (128, 16)])
    def test_output_shape(self, size, side):
        encoder = ContentEncoder(base_channels=64, n_res=1)
        code = encoder(torch.zeros(1, 3, size, size))
        assert code.features.shape == (1, 256, side, side)
        assert [index.shape[-1] for index in code.indices] == [size // 2, size // 4, side]

    def test_zero_image_zero_features(self):
        encoder = ContentEncoder(base_channels=4, n_res=1)
        zero_biases(encoder)
        code = encoder(torch.zeros(1, 3, 64, 64))
        assert torch.equal(code.features, torch.zeros_like(code.features))

    def test_without_indices(self):
        code = ContentEncoder(base_channels=4, n_res=0)(
            torch.zeros(1, 3, 64, 64), record_indices=False)
        assert code.indices is None


class TestStyleEncoder(object):

    def test_length_eight(self):
        encoder = StyleEncoder(base_channels=4)
        assert encoder(random_images(2, 128)).shape == (2, 8)

    def test_deterministic(self):
        encoder = StyleEncoder(base_channels=4)
        image = random_images(1)
        assert torch.equal(encoder(image), encoder(image.clone()))

    def test_global_average_pool(self):
        x = torch.full((1, 3, 5, 5), 2.5)
        assert torch.equal(global_average_pool(x), torch.full((1, 3, 1, 1), 2.5))


class TestAdaInAffine(object):

    def test_zero_style(self):
        affine = AdaInAffine(style_dim=8, channels=16)
        for head in (affine.mu, affine.sigma):
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)
        params = affine(torch.zeros(2, 8))
        assert torch.equal(params.mu, torch.zeros(2, 16))
        assert torch.equal(params.sigma, torch.zeros(2, 16))

    def test_heads_share_trunk(self):
        affine = AdaInAffine(style_dim=8, channels=16)
        shared = set(map(id, affine.shared.parameters()))
        assert len(shared) == 4
        assert not shared & set(map(id, affine.mu.parameters()))


class TestDecoder(object):

    def test_output_shape(self):
        decoder = Decoder(base_channels=64, n_res=1)
        encoder = ContentEncoder(base_channels=64, n_res=1)
        code = encoder(torch.zeros(1, 3, 128, 128))
        params = AdaInParams(torch.zeros(1, 256), torch.ones(1, 256))
        image = decoder(code, params)
        assert image.shape == (1, 3, 128, 128)
        assert image.min() >= -1 and image.max() <= 1

    def test_missing_indices(self):
        decoder = Decoder(base_channels=4, n_res=0)
        code = ContentCode(torch.zeros(1, 16, 8, 8))
        with pytest.raises(StateError):
            decoder(code, AdaInParams(torch.zeros(1, 16), torch.ones(1, 16)))

    def test_upsampling_mode(self):
        decoder = Decoder(base_channels=4, n_res=0, use_pooling_indices=False)
        code = ContentCode(torch.zeros(1, 16, 8, 8))
        image = decoder(code, AdaInParams(torch.zeros(1, 16), torch.ones(1, 16)))
        assert image.shape == (1, 3, 64, 64)


class TestGenerator(object):

    @pytest.mark.parametrize('use_pooling_indices', [True, False])
    def test_round_trip_shape(self, tiny_spec, use_pooling_indices):
        spec = ModelSpec(**dict(tiny_spec.to_dict(), use_pooling_indices=use_pooling_indices))
        generator = Generator(spec)
        image = random_images(2)
        out = generator.decode(generator.content_encode(image), generator.style_encode(image))
        assert out.shape == image.shape

    @pytest.mark.parametrize('shape', [(2, 1, 64, 64), (3, 64, 64), (1, 3, 64, 32), (1, 3, 96, 96)])
    def test_wrong_input(self, tiny_spec, shape):
        with pytest.raises(ShapeError):
            Generator(tiny_spec).content_encode(torch.zeros(shape))

    def test_wrong_style(self, tiny_spec):
        generator = Generator(tiny_spec)
        content = generator.content_encode(random_images(1))
        with pytest.raises(ShapeError):
            generator.decode(content, torch.zeros(1, 5))
        with pytest.raises(ShapeError):
            generator.decode(content, torch.zeros(2, 8))


class TestDiscriminator(object):

    def test_scale_shapes(self):
        discriminator = MultiScaleDiscriminator(base_channels=4)
        maps = discriminate_multiscale(discriminator, random_images(2, 128))
        assert [m.shape for m in maps] == [(2, 1, 8, 8), (2, 1, 4, 4), (2, 1, 2, 2)]

    def test_scales_have_separate_weights(self):
        discriminator = MultiScaleDiscriminator(base_channels=4)
        weights = [d.model[0].conv.weight for d in discriminator.scales]
        assert len({id(w) for w in weights}) == 3

    def test_zero_weights(self):
        discriminator = PatchDiscriminator(base_channels=4)
        for parameter in discriminator.parameters():
            nn.init.zeros_(parameter)
        out = discriminator(torch.full((1, 3, 64, 64), 0.3))
        assert torch.equal(out, torch.zeros_like(out))


class TestSampleStyle(object):

    def test_single(self):
        assert sample_style(1).shape == (1, 8)

    def test_moments(self):
        codes = sample_style(10000, torch_generator(0))
        assert codes.mean(dim=0).abs().max() <= 0.05
        variance = codes.var(dim=0)
        assert variance.min() >= 0.94 and variance.max() <= 1.06

    def test_seeded(self):
        assert torch.equal(sample_style(4, torch_generator(9)), sample_style(4, torch_generator(9)))

    def test_invalid(self):
        with pytest.raises(ValueError):
            sample_style(0)


class TestTranslationModel(object):

    def test_seeded_init(self, tiny_spec):
        first, second = TranslationModel(tiny_spec), TranslationModel(tiny_spec)
        for name, tensor in first.state_dict().items():
            assert torch.equal(second.state_dict()[name], tensor)

    def test_seed_does_not_leak(self, tiny_spec):
        torch.manual_seed(123)
        expected = torch.rand(3)
        torch.manual_seed(123)
        TranslationModel(tiny_spec)
        assert torch.equal(torch.rand(3), expected)

    def test_parameter_groups(self, tiny_spec):
        model = TranslationModel(tiny_spec)
        generators, discriminators = model.parameter_groups()
        assert len(generators) + len(discriminators) == len(list(model.parameters()))
        assert model.generator('A') is model.gen_a
        assert model.discriminator('B') is model.dis_b
