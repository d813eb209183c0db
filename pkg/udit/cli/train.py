import json

from udit.constants import LOGGING_CONFIG_KEY
from udit.trainer import TrainConfig, train


def main(args, config):
    options = {key: value for key, value in config.items() if key != LOGGING_CONFIG_KEY}
    options['out_dir'] = args.out
    path = train(TrainConfig.from_dict(options))
    print(json.dumps({'checkpoint': path}))
