import csv
import os
from collections import Counter

import numpy as np
import pytest
import torch
from PIL import Image

from udit.constants import LABELS_FILENAME, MANIFEST_FILENAME
from udit.datasets import (
    AttributeSpec, BiasedDatasetConfig, DomainDataset, DomainManifest, RenderStyle,
    biased_shapes_preset, generate_biased_shapes, load_domain, load_image,
    read_schema, render_sample, save_image, validate_manifest
)
from udit.exceptions import ConfigurationError, DataError
from udit.testing.utils import FILL, SHAPE, small_biased_config
from udit.utils import counter_rng, sha256_file


class TestAttributeSpec(object):

    def test_index(self):
        assert SHAPE.index('square') == 1

    def test_unknown_value(self):
        with pytest.raises(DataError):
            SHAPE.index('hexagon')

    @pytest.mark.parametrize(('kind', 'values'), [
        ('sideways', ('a', 'b')),
        ('wanted', ('a',)),
        ('wanted', ('a', 'a')),
    ])
    def test_invalid(self, kind, values):
        with pytest.raises(ConfigurationError):
            AttributeSpec('attr', kind, values)

    def test_dict_round_trip(self):
        assert AttributeSpec.from_dict(FILL.to_dict()) == FILL


class TestBiasedDatasetConfig(object):

    def test_preset_counts(self):
        train = biased_shapes_preset()['train']
        a, b = train.domains['A'], train.domains['B']

        assert a.counts == {('flat-blue', 'circle'): 1330, ('flat-blue', 'square'): 70}
        assert b.counts == {('striped-red', 'square'): 1330, ('striped-red', 'circle'): 70}
        assert a.total == b.total == 1400
        train.validate()

    def test_preset_splits_use_distinct_seeds(self):
        preset = biased_shapes_preset(seed=3)
        seeds = {
            (name, domain): config.domains[domain].seed
            for name, config in preset.items() for domain in 'AB'
        }
        assert len(set(seeds.values())) == len(seeds)
        for config in preset.values():
            config.validate()

    def test_empty_domain(self, shapes_config):
        shapes_config.domains['A'].counts = {('flat-blue', 'circle'): 0}
        with pytest.raises(ConfigurationError):
            shapes_config.validate()

    def test_same_wanted_marginal(self, shapes_config):
        shapes_config.domains['B'].counts = {
            ('flat-blue', 'square'): 6, ('flat-blue', 'circle'): 2}
        with pytest.raises(ConfigurationError) as exc:
            shapes_config.validate()
        assert "same marginal" in str(exc.value)

    def test_same_wanted_proportions_different_sizes(self, shapes_config):
        shapes_config.domains['A'].counts = {('flat-blue', 'circle'): 16}
        shapes_config.domains['B'].counts = {
            ('flat-blue', 'square'): 12, ('flat-blue', 'circle'): 4}
        with pytest.raises(ConfigurationError) as exc:
            shapes_config.validate()
        assert "same marginal" in str(exc.value)

    def test_single_sample_domain(self, shapes_config, tmp_path):
        shapes_config.domains['A'].counts = {('flat-blue', 'circle'): 1}
        with pytest.raises(ConfigurationError) as exc:
            generate_biased_shapes(shapes_config, str(tmp_path / 'out'))
        assert "at least two samples" in str(exc.value)
        assert not os.path.exists(str(tmp_path / 'out'))

    def test_smallest_domains_pass_validate_manifest(self, tmp_path):
        config = small_biased_config(major=1, minor=1)
        config.biased = False
        generate_biased_shapes(config, str(tmp_path))
        assert validate_manifest(str(tmp_path)) == []

    def test_biased_requires_skewed_unwanted_marginal(self, shapes_config):
        shapes_config.domains['B'].counts = {
            ('striped-red', 'circle'): 6, ('striped-red', 'square'): 2}
        with pytest.raises(ConfigurationError):
            shapes_config.validate()
        shapes_config.biased = False
        shapes_config.validate()

    def test_unknown_value(self, shapes_config):
        shapes_config.domains['A'].counts[('flat-blue', 'hexagon')] = 1
        with pytest.raises(ConfigurationError):
            shapes_config.validate()

    def test_undrawable_value(self):
        config = small_biased_config()
        config.render_style = RenderStyle(shapes=('circle',))
        with pytest.raises(ConfigurationError) as exc:
            config.validate()
        assert "cannot draw" in str(exc.value)

    def test_dict_round_trip(self, shapes_config):
        restored = BiasedDatasetConfig.from_dict(shapes_config.to_dict())
        assert restored.to_dict() == shapes_config.to_dict()


class TestRenderSample(object):

    def test_deterministic(self):
        style = RenderStyle()
        labels = {'shape': 'square', 'fill': 'striped-red'}
        first = render_sample(style, labels, 64, counter_rng(1, 2))
        second = render_sample(style, labels, 64, counter_rng(1, 2))
        assert first.size == (64, 64)
        assert first.mode == 'RGB'
        assert np.array_equal(np.asarray(first), np.asarray(second))

    def test_shapes_differ(self):
        style = RenderStyle()
        circle = render_sample(style, {'shape': 'circle', 'fill': 'flat-blue'},
                               64, counter_rng(1, 2))
        square = render_sample(style, {'shape': 'square', 'fill': 'flat-blue'},
                               64, counter_rng(1, 2))
        assert not np.array_equal(np.asarray(circle), np.asarray(square))


class TestGenerateBiasedShapes(object):

    def test_files_on_disk(self, shapes_root, shapes_config):
        for domain in 'AB':
            images = os.listdir(os.path.join(shapes_root, domain, 'images'))
            assert len(images) == shapes_config.domains[domain].total
            assert os.path.exists(os.path.join(shapes_root, domain, MANIFEST_FILENAME))

        with open(os.path.join(shapes_root, LABELS_FILENAME)) as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ['path', 'domain', 'fill', 'shape']
        assert len(rows) == 1 + 16

    def test_one_sample_per_cell(self, tmp_path):
        config = small_biased_config(major=1, minor=1)
        config.biased = False
        generate_biased_shapes(config, str(tmp_path))
        count = sum(
            len(os.listdir(str(tmp_path / domain / 'images'))) for domain in 'AB')
        assert count == 4

    def test_repeatable(self, tmp_path, shapes_config):
        generate_biased_shapes(shapes_config, str(tmp_path / 'first'))
        shapes_config.workers = 3
        generate_biased_shapes(shapes_config, str(tmp_path / 'second'))

        assert sha256_file(str(tmp_path / 'first' / LABELS_FILENAME)) == sha256_file(
            str(tmp_path / 'second' / LABELS_FILENAME))
        for name in sorted(os.listdir(str(tmp_path / 'first' / 'A' / 'images'))):
            first = load_image(str(tmp_path / 'first' / 'A' / 'images' / name))
            second = load_image(str(tmp_path / 'second' / 'A' / 'images' / name))
            assert torch.equal(first, second)

    def test_invalid_config_writes_nothing(self, tmp_path, shapes_config):
        shapes_config.domains['A'].counts = {}
        with pytest.raises(ConfigurationError):
            generate_biased_shapes(shapes_config, str(tmp_path / 'out'))
        assert not os.path.exists(str(tmp_path / 'out'))


class TestLoadDomain(object):

    def test_record_count(self, shapes_root):
        records = load_domain(shapes_root, 'A')
        assert len(records) == 8
        assert Counter(r.labels['shape'] for r in records) == {'circle': 6, 'square': 2}
        assert read_schema(shapes_root) == (FILL, SHAPE)

    def test_missing_image(self, shapes_root):
        records = load_domain(shapes_root, 'B')
        os.remove(os.path.join(shapes_root, records[3].image_path))

        with pytest.raises(DataError) as exc:
            load_domain(shapes_root, 'B')
        assert records[3].image_path in str(exc.value)

    def test_shuffled_labels(self, shapes_root):
        original = Counter(r.key() for r in load_domain(shapes_root, 'A'))

        path = os.path.join(shapes_root, LABELS_FILENAME)
        with open(path) as handle:
            header, *rows = handle.readlines()
        rng = np.random.default_rng(0)
        order = rng.permutation(len(rows))
        with open(path, 'w') as handle:
            handle.writelines([header] + [rows[i] for i in order])

        assert Counter(r.key() for r in load_domain(shapes_root, 'A')) == original

    def test_schema_mismatch(self, shapes_root):
        path = os.path.join(shapes_root, LABELS_FILENAME)
        with open(path) as handle:
            lines = handle.readlines()
        lines[0] = 'path,domain,colour,shape\n'
        with open(path, 'w') as handle:
            handle.writelines(lines)

        with pytest.raises(DataError) as exc:
            load_domain(shapes_root, 'A')
        assert "attribute schema" in str(exc.value)

    def test_unknown_domain(self, shapes_root):
        with pytest.raises(DataError):
            load_domain(shapes_root, 'C')


class TestValidateManifest(object):

    def test_valid(self, shapes_root):
        assert validate_manifest(shapes_root) == []

    def test_count_edited(self, shapes_root):
        path = os.path.join(shapes_root, 'A', MANIFEST_FILENAME)
        manifest = DomainManifest.load(path)
        manifest.counts[('flat-blue', 'circle')] += 1
        manifest.save(path)

        violations = validate_manifest(shapes_root)
        assert [v.kind for v in violations] == ['count mismatch']
        assert violations[0].domain == 'A'

    def test_corrupt_png(self, shapes_root):
        record = load_domain(shapes_root, 'B')[0]
        path = os.path.join(shapes_root, record.image_path)
        with open(path, 'rb') as handle:
            data = handle.read()
        with open(path, 'wb') as handle:
            handle.write(data[:len(data) // 3])

        violations = validate_manifest(shapes_root)
        assert [v.kind for v in violations] == ['undecodable image']

    def test_wrong_image_size(self, shapes_root):
        record = load_domain(shapes_root, 'A')[0]
        Image.new('RGB', (32, 32)).save(os.path.join(shapes_root, record.image_path))

        assert [v.kind for v in validate_manifest(shapes_root)] == ['bad image size']

    def test_missing_labels(self, shapes_root):
        os.remove(os.path.join(shapes_root, LABELS_FILENAME))
        assert [v.kind for v in validate_manifest(shapes_root)] == ['missing labels']


class TestImages(object):

    def test_range_and_layout(self, shapes_root):
        record = load_domain(shapes_root, 'A')[0]
        image = load_image(os.path.join(shapes_root, record.image_path))
        assert image.shape == (3, 64, 64)
        assert image.dtype == torch.float32
        assert image.min() >= -1 and image.max() <= 1

    def test_save_and_load(self, tmp_path):
        levels = torch.arange(256, dtype=torch.float32) / 127.5 - 1
        image = levels.view(1, 16, 16).repeat(3, 1, 1)
        path = str(tmp_path / 'image.png')
        save_image(image, path)
        assert torch.allclose(load_image(path), image, atol=1e-6)

    def test_undecodable(self, tmp_path):
        path = tmp_path / 'broken.png'
        path.write_bytes(b'garbage')
        with pytest.raises(DataError):
            load_image(str(path))


class TestDomainDataset(object):

    def test_labels_and_items(self, shapes_root):
        dataset = DomainDataset(shapes_root, load_domain(shapes_root, 'A'), SHAPE)
        assert len(dataset) == 8
        image, label = dataset[0]
        assert image.shape == (3, 64, 64)
        assert label in (0, 1)
        assert dataset.labels().tolist().count(0) == 6

    def test_no_attribute(self, shapes_root):
        dataset = DomainDataset(shapes_root, load_domain(shapes_root, 'A'))
        assert set(dataset.labels().tolist()) == {-1}

    def test_filter(self, shapes_root):
        dataset = DomainDataset(shapes_root, load_domain(shapes_root, 'A'), SHAPE)
        squares = dataset.filter(shape='square')
        assert len(squares) == 2
        assert squares.labels().tolist() == [1, 1]
        assert len(dataset.filter(shape='triangle')) == 0

    def test_tensors(self, shapes_root):
        dataset = DomainDataset(shapes_root, load_domain(shapes_root, 'B'), FILL)
        images, labels = dataset.tensors()
        assert images.shape == (8, 3, 64, 64)
        assert labels.tolist() == [1] * 8
