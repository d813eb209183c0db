import json
import os
from logging import getLogger

from udit.datasets import (
    BiasedDatasetConfig, biased_shapes_preset, generate_biased_shapes, generate_splits
)
from udit.exceptions import ConfigurationError


_log = getLogger(__name__)

PRESETS = {'biased-shapes': biased_shapes_preset}


def main(args, config):
    if config['dataset']:
        dataset = BiasedDatasetConfig.from_dict(config['dataset'])
        dataset.workers = config['workers']
        manifests = {'.': generate_biased_shapes(dataset, args.out)}
    else:
        try:
            preset = PRESETS[config['preset']]
        except KeyError:
            raise ConfigurationError("unknown preset {!r}, expected one of {}".format(
                config['preset'], sorted(PRESETS)))
        splits = preset(image_size=config['image_size'], seed=config['seed'])
        unknown = sorted(set(config['splits']) - set(splits))
        if unknown:
            raise ConfigurationError("unknown splits {}, expected some of {}".format(
                unknown, sorted(splits)))
        selected = {name: splits[name] for name in config['splits']}
        for split in selected.values():
            split.workers = config['workers']
        manifests = generate_splits(selected, args.out)

    summary = {
        name: {manifest.domain: manifest.total for manifest in pair}
        for name, pair in manifests.items()
    }
    print(json.dumps({'out': os.path.abspath(args.out), 'splits': summary}, sort_keys=True))
