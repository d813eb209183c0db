from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from typing import Callable, Iterable, List, TypeVar


T = TypeVar("T")
R = TypeVar("R")


def fail_fast_imap(executor, call: Callable[[T], R], items: Iterable[T]):
    """对给定列表中的每个项运行一个函数，逐个生成每个函数结果，其中函数调用
    由提供的执行器调度。

    如果任何函数引发异常，则所有尚未开始的调用将被取消，并将异常抛给调用者。
    结果按完成顺序产生。

    :param executor: 用于调度函数调用的 :class:`concurrent.futures.Executor`
    :param call: 要调用的函数，期望从给定列表中接收一个项
    """
    pending = {executor.submit(call, item) for item in items}

    while pending:
        done, pending = wait(pending, return_when=FIRST_EXCEPTION)
        for future in done:
            exc = future.exception()
            if exc is not None:
                # 取消其余尚未开始的调用。
                for ongoing in pending:
                    ongoing.cancel()
                raise exc
            yield future.result()


def parallel_map(call: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """按输入顺序返回 ``call`` 作用于每一项的结果。

    ``workers <= 1`` 时在当前线程中串行执行。
    """
    items = list(items)
    if workers <= 1:
        return [call(item) for item in items]

    indexed = list(enumerate(items))
    results = {}

    def run(pair):
        index, item = pair
        return index, call(item)

    with ThreadPoolExecutor(max_workers=workers) as executor:
        for index, result in fail_fast_imap(executor, run, indexed):
            results[index] = result
    return [results[index] for index in range(len(items))]
