"""子命令在此处定义，导入语句内联，以避免一个子命令触发其他子命令的导入
（例如 ``show-config`` 不需要载入 torch）。

每个命令的 ``defaults`` 同时是它的配置模式：配置文件和 ``--key value``
覆盖项只能使用其中的键（以及公共键 ``seed``、``LOGGING``）。
"""

import argparse

from udit.constants import (
    DEFAULT_BATCH_SIZE, DEFAULT_CHECKPOINT_EVERY, DEFAULT_LOG_EVERY, DEFAULT_LR,
    DEFAULT_SAMPLES_PER_INPUT, DEFAULT_SWEEP_GRID, DEFAULT_TAP_POINT, DIRECTIONS,
    DIVERSITY_INPUT_COUNT, LOGGING_CONFIG_KEY, SEED_CONFIG_KEY
)

from .actions import FlagAction


COMMON_KEYS = frozenset([SEED_CONFIG_KEY, LOGGING_CONFIG_KEY])


class Command(object):
    name = ""
    defaults = {}
    writes_output = True
    strict = True

    @classmethod
    def schema(cls):
        return set(cls.defaults) | COMMON_KEYS

    @staticmethod
    def init_parser(parser: argparse.ArgumentParser):
        return parser

    @staticmethod
    def main(args: argparse.Namespace, config: dict):
        # 使用内联导入以避免触发其他子命令的导入。
        raise NotImplementedError  # pragma: no cover


class Datagen(Command):
    """生成合成的有偏形状数据集。

    默认写出 train、test、classifier 三个划分；给出 ``dataset`` 配置时按其生成单个数据集。
    """

    name = "datagen"
    defaults = {
        "preset": "biased-shapes",
        "image_size": 64,
        "splits": ["train", "test", "classifier"],
        "workers": 1,
        "dataset": None,
    }

    @staticmethod
    def init_parser(parser):
        parser.add_argument("--image-size", dest="image_size", type=int, help="64 或 128")
        parser.add_argument("--workers", type=int, help="并行渲染的线程数")
        return parser

    @staticmethod
    def main(args, config):
        from .datagen import main

        main(args, config)


class TrainExtractor(Command):
    """训练属性分类器，扫描降维维度 D 并保存选中的语义提取器。"""

    name = "train-extractor"
    defaults = {
        "dataset_root": None,
        "attribute": None,
        "domains": ["A", "B"],
        "epochs": 5,
        "finetune_epochs": 1,
        "grid": list(DEFAULT_SWEEP_GRID),
        "tau": 1.0,
        "tap_point": DEFAULT_TAP_POINT,
        "batch_size": 32,
        "lr": 1e-3,
        "base_channels": 16,
        "classifier_only": False,
        "metric_classifier": True,
    }

    @staticmethod
    def init_parser(parser):
        parser.add_argument("--dataset-root", dest="dataset_root", help="分类器数据集目录")
        parser.add_argument("--attribute", help="目标属性，缺省为不想改变的属性")
        parser.add_argument("--grid", help="逗号分隔的 D 值，例如 2,8,16")
        parser.add_argument("--tau", type=float, help="选择 D 时允许的精度损失（百分点）")
        parser.add_argument(
            "--classifier-only", dest="classifier_only", action=FlagAction,
            help="只训练并保存分类器，不做 D 扫描")
        parser.add_argument(
            "--metric-classifier", dest="metric_classifier", action=FlagAction,
            help="另外以不同种子训练一个用于评估指标的分类器")
        return parser

    @staticmethod
    def main(args, config):
        from .train_extractor import main

        main(args, config)


class Train(Command):
    """训练翻译模型。"""

    name = "train"
    defaults = {
        "dataset_root": None,
        "lambda_x": 10.0,
        "lambda_c": 1.0,
        "lambda_s": 1.0,
        "lambda_u": 1.0,
        "use_pooling_indices": True,
        "extractor_path": None,
        "iterations": 5000,
        "batch_size": DEFAULT_BATCH_SIZE,
        "lr_g": DEFAULT_LR,
        "lr_d": DEFAULT_LR,
        "checkpoint_every": DEFAULT_CHECKPOINT_EVERY,
        "log_every": DEFAULT_LOG_EVERY,
        "base_channels": 64,
        "n_res": 6,
        "resume_from": None,
        "serial": True,
    }

    @staticmethod
    def init_parser(parser):
        parser.add_argument("--dataset-root", dest="dataset_root", help="训练数据集目录")
        parser.add_argument("--extractor", dest="extractor_path", help="语义提取器检查点")
        parser.add_argument("--iterations", type=int, help="总迭代次数")
        parser.add_argument("--resume-from", dest="resume_from", help="续训的检查点")
        parser.add_argument(
            "--pooling-indices", dest="use_pooling_indices", action=FlagAction,
            help="解码器是否使用池化索引")
        parser.add_argument(
            "--serial", dest="serial", action=FlagAction, help="串行确定性模式")
        return parser

    @staticmethod
    def main(args, config):
        from .train import main

        main(args, config)


class Translate(Command):
    """用训练好的模型把一张图像翻译成 k 个样本。"""

    name = "translate"
    defaults = {
        "checkpoint": None,
        "input": None,
        "k": 1,
        "direction": DIRECTIONS[0],
    }

    @staticmethod
    def init_parser(parser):
        parser.add_argument("--checkpoint", help="翻译模型检查点")
        parser.add_argument("--input", help="输入 PNG 图像")
        parser.add_argument("-k", dest="k", type=int, help="样本数")
        parser.add_argument("--direction", choices=DIRECTIONS, help="翻译方向")
        return parser

    @staticmethod
    def main(args, config):
        from .translate import main

        main(args, config)


class Evaluate(Command):
    """在留出测试集上计算偏差报告。

    同时给出 ``--baseline`` 与 ``--udit`` 时输出成对比较；都不给时评估恒等翻译器。
    """

    name = "evaluate"
    defaults = {
        "dataset_root": None,
        "baseline": None,
        "udit": None,
        "classifier": None,
        "wanted_classifier": None,
        "extractor_path": None,
        "directions": list(DIRECTIONS),
        "filter": None,
        "k": DEFAULT_SAMPLES_PER_INPUT,
        "diversity_inputs": DIVERSITY_INPUT_COUNT,
    }

    @staticmethod
    def init_parser(parser):
        parser.add_argument("--dataset-root", dest="dataset_root", help="测试集目录")
        parser.add_argument("--baseline", help="基线模型检查点（lambda_u = 0）")
        parser.add_argument("--udit", help="带语义约束的模型检查点")
        parser.add_argument("--classifier", help="不想改变属性的分类器检查点")
        parser.add_argument(
            "--wanted-classifier", dest="wanted_classifier", help="想要改变属性的分类器检查点")
        parser.add_argument(
            "--extractor", dest="extractor_path", help="用于特征距离的语义提取器检查点")
        return parser

    @staticmethod
    def main(args, config):
        from .evaluate import main

        main(args, config)


class Report(Command):
    """把偏差报告绘制成分组柱状图，并写出多样性表。"""

    name = "report"
    defaults = {
        "reports": [],
        "png": False,
    }

    @staticmethod
    def init_parser(parser):
        parser.add_argument(
            "reports_args", nargs="*", metavar="REPORT", help="evaluate 输出的 JSON 文件")
        parser.add_argument("--png", action=FlagAction, help="同时输出 PNG")
        return parser

    @staticmethod
    def main(args, config):
        from .report import main

        main(args, config)


class ShowConfig(Command):
    """以 YAML 字符串的形式输出展开环境变量之后的配置文件。

    这对于查看从环境变量加载值的配置文件非常有用。
    """

    name = "show-config"
    writes_output = False
    strict = False

    @classmethod
    def schema(cls):
        return set()

    @staticmethod
    def main(args, config):
        from .show_config import main

        main(args)


commands = Command.__subclasses__()  # pylint: disable=E1101
