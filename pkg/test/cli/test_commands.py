import json
import os

import pytest
import torch

from udit.cli.main import run
from udit.constants import (
    CHECKPOINT_DIRNAME, CLASSIFIER_FILENAME, EFFECTIVE_CONFIG_FILENAME, EXTRACTOR_FILENAME,
    FINAL_CHECKPOINT_FILENAME, METRIC_CLASSIFIER_FILENAME, REPORTS_FILENAME, SWEEP_FILENAME,
    TRAIN_LOG_FILENAME
)
from udit.datasets import load_domain, load_image, validate_manifest
from udit.metrics import BiasReport
from udit.semext import (
    AttributeClassifier, build_extractor, load_classifier, load_extractor, save_classifier,
    save_extractor
)
from udit.testing.utils import SHAPE, small_biased_config, state_equal


TINY_TRAINING = [
    '--iterations', '2',
    '--lambda-u', '0',
    '--batch-size', '2',
    '--checkpoint-every', '1',
    '--log-every', '1',
    '--base-channels', '4',
    '--n-res', '1',
]


def last_json_line(capsys):
    return json.loads(capsys.readouterr()[0].strip().splitlines()[-1])


@pytest.fixture
def classifier_path(tmp_path):
    torch.manual_seed(0)
    return save_classifier(
        AttributeClassifier(SHAPE, base_channels=4), str(tmp_path / CLASSIFIER_FILENAME))


@pytest.fixture
def trained_model(shapes_root, tmp_path):
    out = str(tmp_path / 'baseline')
    code = run(['train', '--dataset-root', shapes_root, '--out', out] + TINY_TRAINING)
    assert code == 0
    return os.path.join(out, FINAL_CHECKPOINT_FILENAME)


class TestDatagen(object):

    def test_dataset_config(self, tmp_path, capsys):
        config = tmp_path / 'dataset.json'
        config.write_text(json.dumps({'dataset': small_biased_config().to_dict()}))
        out = str(tmp_path / 'data')

        assert run(['datagen', '--config', str(config), '--out', out]) == 0

        assert validate_manifest(out) == []
        assert len(load_domain(out, 'A')) == 8
        assert last_json_line(capsys)['splits'] == {'.': {'A': 8, 'B': 8}}
        assert os.path.exists(os.path.join(out, EFFECTIVE_CONFIG_FILENAME))

    def test_unknown_preset(self, tmp_path):
        code = run(['datagen', '--preset', 'mnist', '--out', str(tmp_path)])
        assert code == 2

    def test_unknown_split(self, tmp_path):
        code = run(['datagen', '--splits', '[train, holdout]', '--out', str(tmp_path)])
        assert code == 2


class TestTrainExtractor(object):

    def test_classifier_only(self, shapes_root, tmp_path, capsys):
        out = str(tmp_path / 'extractor')
        code = run([
            'train-extractor', '--dataset-root', shapes_root, '--out', out,
            '--classifier-only', '--epochs', '1', '--base-channels', '4',
        ])
        assert code == 0

        result = last_json_line(capsys)
        assert result['attribute'] == 'shape'
        assert 'selected_D' not in result
        assert load_classifier(os.path.join(out, CLASSIFIER_FILENAME)).attribute == SHAPE
        assert not os.path.exists(os.path.join(out, EXTRACTOR_FILENAME))

    def test_sweep(self, shapes_root, tmp_path, capsys):
        out = str(tmp_path / 'extractor')
        code = run([
            'train-extractor', '--dataset-root', shapes_root, '--out', out,
            '--grid', '2,4', '--tau', '100', '--epochs', '1', '--base-channels', '4',
        ])
        assert code == 0

        result = last_json_line(capsys)
        # tau 足够大时选最小的 D
        assert result['selected_D'] == 2
        assert sorted(result['sweep']['grid']) == [2, 4]
        extractor = load_extractor(os.path.join(out, EXTRACTOR_FILENAME))
        assert extractor.reduction_dim == 2
        assert extractor.frozen
        with open(os.path.join(out, SWEEP_FILENAME)) as handle:
            assert json.load(handle)['selected_D'] == 2

        metric = load_classifier(result['metric_classifier_path'])
        assert result['metric_classifier_path'] == os.path.join(out, METRIC_CLASSIFIER_FILENAME)
        assert not state_equal(metric, extractor.backbone)

    def test_without_metric_classifier(self, shapes_root, tmp_path, capsys):
        out = str(tmp_path / 'extractor')
        code = run([
            'train-extractor', '--dataset-root', shapes_root, '--out', out,
            '--classifier-only', '--no-metric-classifier', '--epochs', '1',
            '--base-channels', '4',
        ])
        assert code == 0
        assert 'metric_classifier_path' not in last_json_line(capsys)
        assert not os.path.exists(os.path.join(out, METRIC_CLASSIFIER_FILENAME))

    def test_unknown_attribute(self, shapes_root, tmp_path):
        code = run([
            'train-extractor', '--dataset-root', shapes_root, '--out', str(tmp_path),
            '--attribute', 'colour', '--classifier-only',
        ])
        assert code == 2

    def test_needs_dataset_root(self, tmp_path):
        assert run(['train-extractor', '--out', str(tmp_path)]) == 2


class TestTrain(object):

    def test_baseline(self, trained_model, capsys):
        out = os.path.dirname(trained_model)

        assert os.path.exists(trained_model)
        assert sorted(os.listdir(os.path.join(out, CHECKPOINT_DIRNAME))) == [
            'iter_000001.ckpt', 'iter_000002.ckpt']
        with open(os.path.join(out, TRAIN_LOG_FILENAME)) as handle:
            assert len(handle.readlines()) == 2
        with open(os.path.join(out, EFFECTIVE_CONFIG_FILENAME)) as handle:
            assert json.load(handle)['lambda_u'] == 0

    def test_semantic_term_needs_extractor(self, shapes_root, tmp_path, capsys):
        code = run(['train', '--dataset-root', shapes_root, '--out', str(tmp_path)])
        assert code == 2
        assert 'extractor_path' in capsys.readouterr()[1]

    def test_missing_dataset(self, tmp_path):
        missing = str(tmp_path / 'missing')
        code = run(['train', '--dataset-root', missing, '--out', str(tmp_path)] + TINY_TRAINING)
        assert code == 3

    def test_unknown_override(self, shapes_root, tmp_path):
        code = run([
            'train', '--dataset-root', shapes_root, '--out', str(tmp_path), '--momentum', '0.9'])
        assert code == 2


class TestTranslate(object):

    def test_samples(self, trained_model, shapes_root, tmp_path, capsys):
        out = str(tmp_path / 'translations')
        source = os.path.join(shapes_root, 'A', 'images', '00000.png')
        code = run([
            'translate', '--checkpoint', trained_model, '--input', source,
            '-k', '3', '--out', out,
        ])
        assert code == 0

        outputs = last_json_line(capsys)['outputs']
        assert len(outputs) == 3
        for path in outputs:
            assert load_image(path).shape == (3, 64, 64)

    def test_wrong_checkpoint_kind(self, classifier_path, shapes_root, tmp_path):
        source = os.path.join(shapes_root, 'A', 'images', '00000.png')
        code = run([
            'translate', '--checkpoint', classifier_path, '--input', source,
            '--out', str(tmp_path),
        ])
        assert code == 4

    def test_needs_input(self, trained_model, tmp_path):
        code = run(['translate', '--checkpoint', trained_model, '--out', str(tmp_path)])
        assert code == 2


class TestEvaluate(object):

    def test_identity(self, shapes_root, classifier_path, tmp_path, capsys):
        out = str(tmp_path / 'eval')
        code = run([
            'evaluate', '--dataset-root', shapes_root, '--classifier', classifier_path,
            '--out', out, '--k', '2', '--diversity-inputs', '2',
        ])
        assert code == 0

        with open(os.path.join(out, REPORTS_FILENAME)) as handle:
            reports = [BiasReport.from_dict(item) for item in json.load(handle)]
        assert [r.direction for r in reports] == ['A->B', 'B->A']
        for report in reports:
            assert report.method == 'identity'
            assert report.drop_in_confidence == 0
            assert report.feature_distance == 0
            assert report.diversity == 0
            assert report.n_inputs == 8

    def test_filter(self, shapes_root, classifier_path, tmp_path):
        out = str(tmp_path / 'eval')
        code = run([
            'evaluate', '--dataset-root', shapes_root, '--classifier', classifier_path,
            '--out', out, '--k', '2', '--diversity-inputs', '1',
            '--directions', '[A->B]', '--filter={shape: square}',
        ])
        assert code == 0

        with open(os.path.join(out, REPORTS_FILENAME)) as handle:
            (report,) = json.load(handle)
        assert report['n_inputs'] == 2
        assert report['filter'] == {'shape': 'square'}

    def test_needs_classifier(self, shapes_root, tmp_path):
        code = run(['evaluate', '--dataset-root', shapes_root, '--out', str(tmp_path)])
        assert code == 2

    def test_rejects_extractor_backbone(self, shapes_root, classifier_path, tmp_path):
        extractor = build_extractor(load_classifier(classifier_path), 2)
        extractor.freeze()
        extractor_path = save_extractor(extractor, str(tmp_path / EXTRACTOR_FILENAME))

        code = run([
            'evaluate', '--dataset-root', shapes_root, '--classifier', classifier_path,
            '--extractor', extractor_path, '--out', str(tmp_path / 'eval'),
        ])
        assert code == 2
        assert not os.path.exists(str(tmp_path / 'eval' / REPORTS_FILENAME))

    def test_pipeline(self, trained_model, shapes_root, classifier_path, tmp_path):
        out = str(tmp_path / 'eval')
        code = run([
            'evaluate', '--dataset-root', shapes_root, '--classifier', classifier_path,
            '--baseline', trained_model, '--udit', trained_model,
            '--out', out, '--k', '2', '--diversity-inputs', '2',
        ])
        assert code == 0

        reports_path = os.path.join(out, REPORTS_FILENAME)
        with open(reports_path) as handle:
            reports = json.load(handle)
        assert [(r['method'], r['direction']) for r in reports] == [
            ('baseline', 'A->B'), ('baseline', 'B->A'), ('udit', 'A->B'), ('udit', 'B->A')]
        assert len({r['model_checksum'] for r in reports}) == 1
        assert all(r['n_diversity_pairs'] == 2 for r in reports)

        charts = str(tmp_path / 'charts')
        assert run(['report', reports_path, '--out', charts]) == 0
        assert os.path.exists(os.path.join(charts, 'feature_distance.svg'))
