import threading
import time

import pytest

import hyperflow


def test_set_threads_checks(restore_threads):
    assert hyperflow.get_threads() == 1
    with pytest.raises(TypeError):
        hyperflow.set_threads(2.0)
    with pytest.raises(TypeError):
        hyperflow.set_threads(True)
    with pytest.raises(ValueError):
        hyperflow.set_threads(0)
    hyperflow.set_threads(3)
    assert hyperflow.get_threads() == 3


def test_order_is_kept(restore_threads):
    def slow_square(x):
        # later items finish first
        time.sleep(0.01 * (5 - x))
        return x * x

    hyperflow.set_threads(4)
    assert hyperflow.map_concurrently(slow_square, range(5)) == [
        0, 1, 4, 9, 16]


def test_single_thread_runs_in_caller(restore_threads):
    hyperflow.set_threads(1)
    threads = hyperflow.map_concurrently(
        lambda item: threading.current_thread(), range(3))
    assert threads == [threading.current_thread()] * 3


def test_first_error_wins(restore_threads, handy_callback):
    @handy_callback
    def fail_on_odd(x):
        if x % 2:
            raise ValueError(x)
        return x

    hyperflow.set_threads(3)
    with pytest.raises(ValueError) as error:
        hyperflow.map_concurrently(fail_on_odd, range(6))
    assert error.value.args == (1,)
    assert fail_on_odd.ran == 3     # the even items, all calls finished


def test_nested_calls_dont_deadlock(restore_threads):
    outer_threads = []

    def inner(x):
        return threading.current_thread()

    def outer(x):
        outer_threads.append(threading.current_thread())
        return set(hyperflow.map_concurrently(inner, range(4)))

    hyperflow.set_threads(2)
    results = hyperflow.map_concurrently(outer, range(2))
    # nested grids run in the worker that asked for them
    assert [len(thread_set) for thread_set in results] == [1, 1]
    assert all(thread is not threading.main_thread()
               for thread in outer_threads)
