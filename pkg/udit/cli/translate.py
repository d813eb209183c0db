import json
import os

from udit.datasets import load_image, save_image
from udit.exceptions import ConfigurationError
from udit.trainer import load_translation_model, translate


def main(args, config):
    for key in ('checkpoint', 'input'):
        if not config[key]:
            raise ConfigurationError("translate needs {}".format(key))
    model = load_translation_model(config['checkpoint'])
    outputs = translate(
        model, load_image(config['input']), config['k'], config['seed'], config['direction'])

    os.makedirs(args.out, exist_ok=True)
    paths = []
    for index, image in enumerate(outputs):
        path = os.path.join(args.out, 'translation_{:02d}.png'.format(index))
        save_image(image, path)
        paths.append(path)
    print(json.dumps({'outputs': paths}))
