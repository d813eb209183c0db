import argparse
import json
import logging
import logging.config
import os
import re
import sys
from functools import partial

import regex
import yaml

from udit import __version__
from udit.constants import EFFECTIVE_CONFIG_FILENAME, LOGGING_CONFIG_KEY, SEED_CONFIG_KEY
from udit.exceptions import ConfigurationError, UditError
from udit.utils import resolve_seed

from . import commands


_log = logging.getLogger(__name__)


ENV_VAR_MATCHER = regex.compile(
    r"""
    \$\{                # 匹配 ${
    (                   # 第一个捕获组：变量名
        [^{}:\s]+       # 变量名，不包含 {,},: 或空格
    )
    (?:                 # 非捕获的可选组，用于默认值
        :               # 匹配 :
        (               # 第二个捕获组：默认值
            (?:
                [^{}]   # 任何非括号字符
            |
                \{      # 字面量 {
                (?2)    # 递归第二个捕获组，允许默认值中嵌套 ${...}
                \}      # 字面量 }
            )*
        )
    )?
    \}                  # 匹配结束 }
    """,
    regex.VERBOSE,
)

IMPLICIT_ENV_VAR_MATCHER = re.compile(
    r"""
        .*          # 任意前缀
        \$\{.*\}    # ${...}
        .*          # 任意后缀
    """,
    re.VERBOSE,
)


def _replace_env_var(match):
    env_var, default = match.groups()
    value = os.environ.get(env_var, None)
    if value is None:
        # 未进入默认值捕获组时 regex 返回 None
        value = default or ""
        while IMPLICIT_ENV_VAR_MATCHER.match(value):
            value = ENV_VAR_MATCHER.sub(_replace_env_var, value)
    return value


def env_var_constructor(loader, node, raw=False):
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigurationError("environment variables can only expand scalars")

    raw_value = loader.construct_scalar(node)
    value = ENV_VAR_MATCHER.sub(_replace_env_var, raw_value)
    if value == raw_value:
        return value
    return value if raw else yaml.safe_load(value)


def setup_yaml_parser():
    yaml.add_constructor("!env_var", env_var_constructor, yaml.SafeLoader)
    yaml.add_constructor(
        "!raw_env_var", partial(env_var_constructor, raw=True), yaml.SafeLoader
    )
    yaml.add_implicit_resolver(
        "!env_var", IMPLICIT_ENV_VAR_MATCHER, Loader=yaml.SafeLoader
    )


def _common_arguments():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="JSON 或 YAML 配置文件")
    parent.add_argument("--out", default=".", help="输出目录")
    parent.add_argument("--seed", type=int, help="随机种子，缺省时读取配置或 UDIT_SEED")
    verbosity = parent.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="输出调试日志")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="只输出警告和错误")
    return parent


def setup_parser():
    """设置 argparser 以及 commands 中定义的全部子命令。"""
    parser = argparse.ArgumentParser(prog="udit", allow_abbrev=False)
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", metavar="<subcommand>")
    subparsers.required = True

    parent = _common_arguments()
    for command in commands.commands:
        command_parser = subparsers.add_parser(
            command.name,
            description=command.__doc__,
            help=(command.__doc__ or "").strip().split("\n")[0],
            parents=[parent],
            allow_abbrev=False,
        )
        command.init_parser(command_parser)
        command_parser.set_defaults(
            main=command.main, command_cls=command, command_parser=command_parser)
    return parser


def parse_overrides(parser, command, tokens):
    """把剩余的 ``--key value`` / ``--key=value`` 解析为配置覆盖项，值按 YAML 解析。

    键必须属于子命令的配置模式，否则按未知参数处理（打印用法并以 2 退出）。
    """
    overrides = {}
    tokens = list(tokens)
    while tokens:
        token = tokens.pop(0)
        if not token.startswith("--") or token == "--":
            parser.error("unrecognized arguments: {}".format(token))
        key, sep, value = token[2:].partition("=")
        key = key.replace("-", "_")
        if key not in command.schema():
            parser.error("unrecognized arguments: {}".format(token))
        if not sep:
            if not tokens:
                parser.error("argument {}: expected a value".format(token))
            value = tokens.pop(0)
        try:
            overrides[key] = yaml.safe_load(value)
        except yaml.YAMLError as exc:
            raise ConfigurationError("cannot parse value for {}: {}".format(key, exc))
    return overrides


def load_config_file(path):
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigurationError("cannot read config file {}: {}".format(path, exc))
    except yaml.YAMLError as exc:
        raise ConfigurationError("cannot parse config file {}: {}".format(path, exc))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError("config file {} must contain a mapping".format(path))
    return data


def build_config(command, args, overrides):
    """默认值 < 配置文件 < 命令行覆盖项 < ``--seed``。"""
    config = dict(command.defaults)
    from_file = load_config_file(args.config)
    unknown = sorted(set(from_file) - command.schema())
    if unknown and command.strict:
        raise ConfigurationError("unknown config keys for {}: {}".format(command.name, unknown))
    config.update(from_file)
    for key in command.schema():
        value = getattr(args, key, None)
        if value is not None and key != SEED_CONFIG_KEY:
            config[key] = value
    config.update(overrides)
    config[SEED_CONFIG_KEY] = resolve_seed(args.seed, config.get(SEED_CONFIG_KEY))
    return config


def setup_logging(config, verbose=False, quiet=False):
    logging_config = config.get(LOGGING_CONFIG_KEY)
    if logging_config:
        logging.config.dictConfig(logging_config)
    else:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    elif quiet:
        logging.getLogger().setLevel(logging.WARNING)


def write_effective_config(out_dir, config):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, EFFECTIVE_CONFIG_FILENAME)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(config, handle, indent=2, sort_keys=True, default=str)
    return path


def run(argv=None):
    """执行一条命令行，返回退出码。"""
    parser = setup_parser()
    setup_yaml_parser()
    try:
        args, unknown_args = parser.parse_known_args(argv)
        command = args.command_cls
        overrides = parse_overrides(args.command_parser, command, unknown_args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    except UditError as exc:
        print("Error: {}".format(exc), file=sys.stderr)
        return exc.exit_code

    try:
        config = build_config(command, args, overrides)
        setup_logging(config, args.verbose, args.quiet)
        if command.writes_output:
            write_effective_config(args.out, config)
        command.main(args, config)
    except UditError as exc:
        print("Error: {}".format(exc), file=sys.stderr)
        return exc.exit_code
    except Exception:
        _log.exception("命令 %s 意外失败", command.name)
        return 1
    return 0


def main():
    sys.exit(run())
