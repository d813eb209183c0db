import yaml

from udit.exceptions import CommandError

from .main import load_config_file


def main(args):
    if not args.config:
        raise CommandError("show-config needs --config")
    config = load_config_file(args.config)
    print(yaml.safe_dump(config, default_flow_style=False, sort_keys=True))
