import logging
import math
import platform

import pytest

import hyperflow


def test_callbacks(caplog):
    result1 = []
    result2 = []

    cb = hyperflow.Callback()
    cb.connect(result1.append)
    cb.connect(result1.append)   # repeated intentionally
    cb.connect(result2.append)
    assert len(cb) == 3

    assert cb.run('lol') is None
    assert result1 == ['lol', 'lol']
    assert result2 == ['lol']
    result1.clear()
    result2.clear()

    if platform.python_implementation() == 'PyPy':
        # in pypy, [].append == [].append
        result1.append('woot')
        cb.disconnect(result1.append)
        result1.clear()
    else:
        cb.disconnect(result1.append)

    assert cb.run('wut') is None
    assert result1 == result2 == ['wut']
    result1.clear()
    result2.clear()

    cb.disconnect(result1.append)
    cb.disconnect(result2.append)
    assert cb.run('wat wat') is None
    assert result1 == result2 == []
    assert len(cb) == 0

    with pytest.raises(ValueError):
        cb.disconnect(result1)

    assert not caplog.records

    def broken_callback(whatever):
        1 / 0

    stuff = []
    cb.connect(broken_callback)
    cb.connect(stuff.append)
    with caplog.at_level(logging.ERROR, logger='hyperflow'):
        assert cb.run('wat') is None    # doesn't raise an error
    assert not stuff                # running callbacks stopped because error
    assert '\n    cb.connect(broken_callback)\n' in caplog.text
    assert 'ZeroDivisionError' in caplog.text


def test_callback_break(caplog):
    stuff = []

    def non_breaking():
        stuff.append('no break')

    def breaking():
        stuff.append('break')
        return 'break'

    def wat():
        stuff.append('wat')
        return 'wat'

    cb = hyperflow.Callback()
    cb.connect(non_breaking)
    cb.connect(breaking)
    cb.connect(non_breaking)
    assert cb.run() == 'break'
    assert stuff == ['no break', 'break']
    stuff.clear()

    cb2 = hyperflow.Callback()
    cb2.connect(wat)
    cb2.connect(non_breaking)
    with caplog.at_level(logging.ERROR, logger='hyperflow'):
        assert cb2.run() is None
    assert stuff == ['wat']
    assert '\n    cb2.connect(wat)\n' in caplog.text
    assert "ValueError: expected None or 'break', got 'wat'" in caplog.text


def test_empty_callback_is_falsy_but_not_none():
    # solvers compare against None because of this
    cb = hyperflow.Callback()
    assert not cb
    assert cb is not None
    assert repr(cb) == '<Callback with 0 connections>'


def test_options():
    opts = hyperflow.Options()
    assert opts['tol'] == 1e-8
    assert opts['multistart'] is True
    assert len(opts) == len(list(opts))

    opts['max_iter'] = 5
    assert opts['max_iter'] == 5
    with pytest.raises(ValueError, match='expected an integer'):
        opts['max_iter'] = 5.5
    with pytest.raises(ValueError, match='expected an integer'):
        opts['max_iter'] = True
    with pytest.raises(ValueError, match='must be positive'):
        opts['tol'] = 0
    with pytest.raises(ValueError, match='penalty_fraction'):
        opts['penalty_fraction'] = 1
    with pytest.raises(ValueError, match='at least 3'):
        opts['max_nodes'] = 2
    with pytest.raises(KeyError):
        opts['nonsense']
    with pytest.raises(TypeError):
        del opts['tol']
    with pytest.raises(TypeError):
        opts(tol=1)

    copy = opts.copy(tol=1e-3)
    assert copy['tol'] == 1e-3
    assert copy['max_iter'] == 5
    assert opts['tol'] == 1e-8
    assert 'max_iter=5' in repr(opts)


def test_integrator_options():
    opts = hyperflow.IntegratorOptions()
    assert opts['step_floor'] is None
    opts['step_floor'] = 1e-3
    assert opts['step_floor'] == 1e-3
    opts['step_floor'] = None
    with pytest.raises(ValueError, match='step_floor must be positive'):
        opts['step_floor'] = -1
    with pytest.raises(ValueError, match='unknown integration method'):
        opts['method'] = 'Euler'
    opts['method'] = 'RK45'
    opts['max_step'] = math.inf


def test_from_json():
    assert hyperflow.from_json([float], [1, 2]) == [1.0, 2.0]
    assert hyperflow.from_json({'a': (int, str)}, {'a': [1, 'b']}) == {
        'a': (1, 'b')}

    with pytest.raises(ValueError, match=r'^x\[0\]: expected a number'):
        hyperflow.from_json([float], ['1', '2'], 'x')
    with pytest.raises(ValueError, match='NaN'):
        hyperflow.from_json(float, math.nan)
    with pytest.raises(ValueError, match='expected true or false'):
        hyperflow.from_json(bool, 1)
    with pytest.raises(ValueError, match='list of 2 items'):
        hyperflow.from_json((float, float), [1, 2, 3])
    with pytest.raises(ValueError, match="unknown key 'b'"):
        hyperflow.from_json({'a': int}, {'b': 1})
    with pytest.raises(TypeError):
        hyperflow.from_json(complex, 1)


def test_errors():
    error = hyperflow.ValidationError(['first', 'second'])
    assert error.problems == ['first', 'second']
    assert str(error) == 'first; second'
    assert hyperflow.ValidationError('oops').problems == ['oops']
    assert isinstance(error, ValueError)

    assert hyperflow.NumericalError('bad').diagnostics == {}
    singular = hyperflow.SingularityError('hit', 1, 2.5)
    assert (singular.index, singular.time) == (1, 2.5)
    assert issubclass(hyperflow.CollisionApproach, hyperflow.SingularityError)
    assert issubclass(hyperflow.FormatError, ValueError)
