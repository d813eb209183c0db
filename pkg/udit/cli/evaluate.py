import json
import os
from logging import getLogger

import torch

from udit.constants import REPORTS_FILENAME
from udit.datasets import DomainDataset, load_domain, read_manifest
from udit.exceptions import ConfigurationError
from udit.metrics import (
    IdentityTranslator, MetricClassifier, PooledEmbedder, RandomFeatureTrunk, evaluate
)
from udit.semext import load_classifier, load_extractor
from udit.trainer import ModelTranslator, load_translation_model, parse_direction
from udit.utils import sha256_file


_log = getLogger(__name__)


def _target_value(root, domain, classifier):
    """目标域中想要属性最常见的取值。"""
    if classifier is None:
        return None
    marginal = read_manifest(root, domain).marginal(classifier.attribute.name)
    return max(sorted(marginal), key=lambda value: marginal[value])


def _shares_backbone(classifier, extractor):
    """分类器权重与提取器主干完全相同：指标会与约束项循环依赖。"""
    own, backbone = classifier.state_dict(), extractor.backbone.state_dict()
    return own.keys() == backbone.keys() and all(
        torch.equal(own[key], backbone[key]) for key in own)


def _methods(config):
    methods = [(name, config[name]) for name in ('baseline', 'udit') if config[name]]
    return methods or [('identity', None)]


def main(args, config):
    root = config['dataset_root']
    if not root:
        raise ConfigurationError("evaluate needs dataset_root")
    if not config['classifier']:
        raise ConfigurationError("evaluate needs an unwanted-attribute classifier")
    if config['filter'] is not None and not isinstance(config['filter'], dict):
        raise ConfigurationError("filter must be a mapping of attribute to value")

    unwanted = load_classifier(config['classifier'])
    classifiers = {'unwanted': MetricClassifier.from_classifier(unwanted)}
    if config['wanted_classifier']:
        classifiers['wanted'] = MetricClassifier.from_classifier(
            load_classifier(config['wanted_classifier']))
    if config['extractor_path']:
        extractor = load_extractor(config['extractor_path'])
        if _shares_backbone(unwanted, extractor):
            raise ConfigurationError(
                "classifier {} is the backbone of extractor {}; use an independently trained "
                "metric classifier".format(config['classifier'], config['extractor_path']))
        embedder = PooledEmbedder(extractor)
    else:
        _log.warning("未给出语义提取器，特征距离改用随机卷积特征")
        embedder = RandomFeatureTrunk(seed=0)

    reports = []
    for method, path in _methods(config):
        model = load_translation_model(path) if path else None
        checksum = sha256_file(path) if path else None
        for direction in config['directions']:
            source, target = parse_direction(direction)
            test_set = DomainDataset(root, load_domain(root, source))
            translator = ModelTranslator(model, direction) if model else IdentityTranslator()
            report = evaluate(
                translator, classifiers, embedder, test_set,
                direction=direction,
                filter=config['filter'],
                seed=config['seed'],
                k=config['k'],
                diversity_inputs=config['diversity_inputs'],
                target_value=_target_value(root, target, classifiers.get('wanted')),
                method=method,
                model_checksum=checksum,
            )
            _log.info("%s %s: 误分类率 %.3f, 置信度下降 %.3f, 特征距离 %.3f", method, direction,
                      report.misclassification_rate, report.drop_in_confidence,
                      report.feature_distance)
            reports.append(report)

    data = [report.to_dict() for report in reports]
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, REPORTS_FILENAME), 'w', encoding='utf-8') as handle:
        json.dump(data, handle, indent=2, sort_keys=True)
    print(json.dumps(data, sort_keys=True))
