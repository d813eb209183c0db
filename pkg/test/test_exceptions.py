import json

import pytest

from udit.exceptions import (
    ArgumentError, CheckpointError, CommandError, ConfigurationError, DataError,
    ShapeError, StateError, TrainingError, UditError, get_module_path,
    safe_for_serialization, serialize
)
from udit.losses import LossBreakdown


class CustomError(Exception):
    pass


@pytest.mark.parametrize(('exc_type', 'exit_code'), [
    (UditError, 1),
    (ConfigurationError, 2),
    (CommandError, 2),
    (ArgumentError, 2),
    (DataError, 3),
    (CheckpointError, 4),
    (ShapeError, 4),
    (StateError, 1),
    (TrainingError, 1),
])
def test_exit_codes(exc_type, exit_code):
    assert exc_type.exit_code == exit_code
    assert issubclass(exc_type, UditError)


def test_argument_errors_are_value_errors():
    assert issubclass(ArgumentError, ValueError)
    assert issubclass(ShapeError, ValueError)


def test_get_module_path():
    assert get_module_path(DataError) == "udit.exceptions.DataError"
    assert get_module_path(CustomError) == "test.test_exceptions.CustomError"


def test_serialize():

    exc = CustomError('something went wrong')

    assert serialize(exc) == {
        'exc_type': 'CustomError',
        'exc_path': 'test.test_exceptions.CustomError',
        'exc_args': ['something went wrong'],
        'value': 'something went wrong',
        'exit_code': 1,
    }


def test_serialize_training_error():
    breakdown = LossBreakdown(
        gan_A=float('nan'), gan_B=0.5, recon_x_A=0.1, recon_x_B=0.1,
        recon_c_A=0.2, recon_c_B=0.2, recon_s_A=0.3, recon_s_B=0.3,
        sem_A=0.0, sem_B=0.0, total=float('nan'))
    exc = TrainingError("non-finite loss", breakdown=breakdown, iteration=7)

    data = serialize(exc)

    assert data['exc_type'] == 'TrainingError'
    assert data['iteration'] == 7
    assert data['breakdown']['gan_B'] == 0.5
    assert data['breakdown']['recon_c_A'] == 0.2
    # 可以写成 JSON
    json.dumps(data)


def test_serialize_bad_str():

    class BadStr(object):
        def __str__(self):
            raise Exception('boom')

    exc = CustomError(BadStr())
    data = serialize(exc)
    assert data['exc_args'] == ['[__str__ failed]']


@pytest.mark.parametrize(('value', 'expected'), [
    (None, None),
    ('a', 'a'),
    (1, 1),
    (0.5, 0.5),
    ((1, 2), [1, 2]),
    ({1: (2,)}, {'1': [2]}),
    (CustomError, str(CustomError)),
])
def test_safe_for_serialization(value, expected):
    assert safe_for_serialization(value) == expected
