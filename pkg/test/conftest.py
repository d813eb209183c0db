import pytest


@pytest.fixture(autouse=True)
def single_thread_torch():
    import torch

    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    yield
    torch.set_num_threads(threads)
