import json
import logging
import os
import time
from contextlib import contextmanager


def make_timing_logger(logger, precision=3, level=logging.DEBUG):
    """返回一个计时记录器。

    用法::

        >>> logger = logging.getLogger('udit.trainer')
        >>> log_time = make_timing_logger(
        ...     logger, level=logging.INFO, precision=2)
        >>>
        >>> with log_time("生成域 %s", "A"):
        ...     render()
        INFO:udit.trainer:生成域 A in 1.00s
    """

    @contextmanager
    def log_time(msg, *args):
        """在上下文块退出时，记录 `msg` 和 `*args` 以及（简单的挂钟）计时信息。"""
        start_time = time.perf_counter()

        try:
            yield
        finally:
            message = "{} in %0.{}fs".format(msg, precision)
            duration = time.perf_counter() - start_time
            args = args + (duration,)
            logger.log(level, message, *args)

    return log_time


class JsonLinesLog(object):
    """按行追加 JSON 记录的日志文件，每条记录写入后立即刷新。

    续训时以追加模式打开，因此中断前后的记录首尾相接。
    """

    def __init__(self, path, truncate=False):
        self.path = path
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        self._handle = open(path, 'w' if truncate else 'a', encoding='utf-8')

    def write(self, record):
        self._handle.write(json.dumps(record, sort_keys=True) + "\n")
        self._handle.flush()

    def close(self):
        self._handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

    @staticmethod
    def read(path):
        with open(path, encoding='utf-8') as handle:
            return [json.loads(line) for line in handle if line.strip()]
