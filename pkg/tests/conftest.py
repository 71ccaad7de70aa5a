import numpy as np
import pytest

import hyperflow


@pytest.fixture
def static_center():
    return hyperflow.make_static_center(1.0)


@pytest.fixture
def binary():
    return hyperflow.make_circular_binary(0.5, 0.5, 1.0)


@pytest.fixture
def unequal_binary():
    return hyperflow.make_circular_binary(0.8, 0.2, 1.0, phase=0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fast_options():
    # coarse enough that a minimization takes a fraction of a second
    return hyperflow.Options(nodes_per_period=32, max_iter=3000,
                             phase_grid=4, golden_iter=4, max_periods=8)


@pytest.fixture
def restore_threads():
    """Put the thread count back to 1 when the test is done."""
    yield
    hyperflow.set_threads(1)


@pytest.fixture
def handy_callback():
    def handy_callback_decorator(function):
        def result(*args, **kwargs):
            return_value = function(*args, **kwargs)
            result.ran += 1
            return return_value

        result.ran = 0
        result.ran_once = (lambda: result.ran == 1)
        return result

    return handy_callback_decorator
