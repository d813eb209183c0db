import json
import os
from logging import getLogger

from udit.constants import (
    CLASSIFIER_FILENAME, EXTRACTOR_FILENAME, METRIC_CLASSIFIER_FILENAME, SWEEP_FILENAME
)
from udit.datasets import UNWANTED, DomainDataset, load_domain, read_schema
from udit.exceptions import ConfigurationError
from udit.semext import (
    save_classifier, save_extractor, select_reduction_dim, sweep_reduction_dim,
    train_attribute_classifier
)
from udit.utils import derive_seed, parse_int_list


_log = getLogger(__name__)


def _pick_attribute(schema, name):
    if name is None:
        return next(attr for attr in schema if attr.kind == UNWANTED)
    for attr in schema:
        if attr.name == name:
            return attr
    raise ConfigurationError("dataset has no attribute {!r}; known: {}".format(
        name, [attr.name for attr in schema]))


def main(args, config):
    root = config['dataset_root']
    if not root:
        raise ConfigurationError("train-extractor needs dataset_root")
    attribute = _pick_attribute(read_schema(root), config['attribute'])
    records = [record for domain in config['domains'] for record in load_domain(root, domain)]
    data = DomainDataset(root, records, attribute).tensors()

    def fit(seed):
        return train_attribute_classifier(
            data, attribute,
            epochs=config['epochs'],
            seed=seed,
            batch_size=config['batch_size'],
            lr=config['lr'],
            base_channels=config['base_channels'],
        )

    classifier = fit(config['seed'])
    classifier_path = save_classifier(classifier, os.path.join(args.out, CLASSIFIER_FILENAME))
    result = {
        'attribute': attribute.name,
        'classifier_accuracy': classifier.accuracy,
        'classifier_path': classifier_path,
    }

    # 评估用的分类器与提取器主干各自独立训练
    if config['metric_classifier']:
        metric = fit(derive_seed(config['seed'], 'metric'))
        result.update({
            'metric_classifier_accuracy': metric.accuracy,
            'metric_classifier_path': save_classifier(
                metric, os.path.join(args.out, METRIC_CLASSIFIER_FILENAME)),
        })

    if not config['classifier_only']:
        sweep = sweep_reduction_dim(
            classifier, data, parse_int_list(config['grid']),
            epochs=config['finetune_epochs'],
            seed=config['seed'],
            tap_point=config['tap_point'],
            batch_size=config['batch_size'],
            lr=config['lr'],
        )
        dim = select_reduction_dim(sweep, config['tau'])
        extractor_path = os.path.join(args.out, EXTRACTOR_FILENAME)
        save_extractor(sweep.extractors[dim], extractor_path, tau=config['tau'], sweep=sweep)
        result.update({
            'sweep': sweep.to_dict(),
            'tau': config['tau'],
            'selected_D': dim,
            'extractor_path': extractor_path,
        })
        _log.info("选中 D = %d", dim)

    with open(os.path.join(args.out, SWEEP_FILENAME), 'w', encoding='utf-8') as handle:
        json.dump(result, handle, indent=2, sort_keys=True)
    print(json.dumps(result, sort_keys=True))
