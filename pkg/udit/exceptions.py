import inspect
from collections.abc import Iterable


class UditError(Exception):
    """所有 udit 异常的基类。``exit_code`` 是命令行遇到该异常时的退出码。"""

    exit_code = 1


class ConfigurationError(UditError):
    exit_code = 2


class CommandError(UditError):
    """从子命令中引发，以将错误报告回用户。"""

    exit_code = 2


class ArgumentError(UditError, ValueError):
    """函数参数不满足前置条件（例如空列表）。"""

    exit_code = 2


class DataError(UditError):
    """数据集文件缺失、无法解码或与属性模式不一致。"""

    exit_code = 3


class CheckpointError(UditError):
    """检查点归档损坏，或数组形状与清单不一致。"""

    exit_code = 4


class ShapeError(UditError, ValueError):
    exit_code = 4


class StateError(UditError):
    """对象处于不允许当前操作的状态，例如索引模式下缺少池化索引。"""


class TrainingError(UditError):
    """训练过程中出现非有限损失。``breakdown`` 为出错那一步的损失分解。"""

    def __init__(self, message, breakdown=None, iteration=None):
        self.breakdown = breakdown
        self.iteration = iteration
        super(TrainingError, self).__init__(message)


def get_module_path(exc_type):
    """返回 `exc_type` 的点分模块路径，包括类名。

    e.g.::

        >>> get_module_path(DataError)
        >>> "udit.exceptions.DataError"

    """
    module = inspect.getmodule(exc_type)
    return "{}.{}".format(module.__name__, exc_type.__name__)


def safe_for_serialization(value):
    """在准备将值序列化为 JSON 时进行转换。

    字符串、数字和 ``None`` 原样返回；映射和可迭代对象的条目递归处理；
    其他值进行字符串化，如果失败则使用回退值。
    """

    if value is None or isinstance(value, (str, bool, int, float)):
        return value
    if isinstance(value, dict):
        return {
            str(safe_for_serialization(key)): safe_for_serialization(val)
            for key, val in value.items()
        }
    if hasattr(value, 'to_dict'):
        return safe_for_serialization(value.to_dict())
    if isinstance(value, Iterable):
        return list(map(safe_for_serialization, value))

    try:
        return str(value)
    except Exception:
        return "[__str__ failed]"


def serialize(exc):
    """将异常序列化为表示它的数据字典，用于写入诊断文件。"""

    data = {
        "exc_type": type(exc).__name__,
        "exc_path": get_module_path(type(exc)),
        "exc_args": list(map(safe_for_serialization, exc.args)),
        "value": safe_for_serialization(exc),
        "exit_code": getattr(exc, 'exit_code', 1),
    }
    if isinstance(exc, TrainingError):
        data["iteration"] = exc.iteration
        data["breakdown"] = safe_for_serialization(exc.breakdown)
    return data
