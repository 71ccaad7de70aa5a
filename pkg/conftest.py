import os

import numpy as np
import pytest

import hyperflow


# doctest collection imports every module, and these two can't be imported:
# __main__ runs the program and plotting needs matplotlib
collect_ignore = [os.path.join('hyperflow', '__main__.py')]
try:
    import matplotlib    # noqa
except ImportError:
    collect_ignore.append(os.path.join('hyperflow', 'extras', 'plotting.py'))

# doctests expect numpy 1.x scalar reprs (1.0, not np.float64(1.0))
if int(np.__version__.split('.')[0]) >= 2:
    np.set_printoptions(legacy='1.25')


# https://docs.pytest.org/en/latest/doctest.html#the-doctest-namespace-fixture
@pytest.fixture(autouse=True)
def add_hyperflow(doctest_namespace):
    doctest_namespace['hyperflow'] = hyperflow
    doctest_namespace['np'] = np


# the following url is on 2 lines because pep8 line length
#
# https://docs.pytest.org/en/latest/example/simple.html#control-skipping-of-tes
# ts-according-to-command-line-option
def pytest_addoption(parser):
    parser.addoption(
        "--skipslow", action="store_true", default=False,
        help="skip tests that run whole continuations"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--skipslow"):
        skip_slow = pytest.mark.skip(reason="--skipslow was used")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(skip_slow)
