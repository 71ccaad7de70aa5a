import logging
import math

import numpy as np
import pytest

import hyperflow
from hyperflow import _hyperbolic


@pytest.fixture
def escape_options():
    return hyperflow.Options(nodes_per_period=32, phase_grid=2,
                             golden_iter=8, max_periods=4, multistart=False)


@pytest.fixture
def short_schedule():
    return hyperflow.ContinuationSchedule(4, [8, 16, 32], 2,
                                          tol_position=0.05,
                                          tol_velocity=0.05)


def test_query():
    query = hyperflow.HyperbolicQuery(0.5, -math.pi / 2, (2, 1))
    assert query.theta == pytest.approx(1.5 * math.pi)
    assert query.x == 2 + 1j
    assert query.direction == 'forward'
    assert query.to_json()['x'] == [2, 1]
    assert 'forward' in repr(query)

    with pytest.raises(ValueError, match='h must be positive'):
        hyperflow.HyperbolicQuery(0, 0, 2)
    with pytest.raises(ValueError, match='direction'):
        hyperflow.HyperbolicQuery(1, 0, 2, direction='sideways')


def test_schedule(static_center):
    schedule = hyperflow.ContinuationSchedule(4, [8, 16], 2)
    assert schedule.to_json() == {'R2': 4, 'radii': [8, 16], 'window': 2,
                                  'tol_position': 1e-5,
                                  'tol_velocity': 1e-4}
    schedule.check(static_center, 2)
    with pytest.raises(ValueError, match='R2 must be at least 6'):
        schedule.check(static_center, 5)

    scaled = schedule.scaled(2, 4)
    assert scaled.radii == [16, 32]
    assert scaled.window == 8
    assert scaled.tol_velocity == pytest.approx(1e-4 / 2)

    with pytest.raises(ValueError, match='at least one radius'):
        hyperflow.ContinuationSchedule(4, [], 2)
    with pytest.raises(ValueError, match='strictly increasing'):
        hyperflow.ContinuationSchedule(4, [8, 8], 2)
    with pytest.raises(ValueError, match='bigger than R2'):
        hyperflow.ContinuationSchedule(10, [8, 16], 2)
    with pytest.raises(ValueError, match='window'):
        hyperflow.ContinuationSchedule(4, [8, 16], 0)


def test_default_schedule(static_center, binary):
    schedule = hyperflow.default_schedule(static_center, 1)
    # R1 = sqrt(2) for a static center
    assert schedule.R2 == pytest.approx(4)
    assert schedule.radii == pytest.approx([4 * 2**n for n in range(1, 9)])
    assert schedule.window == 2

    far = hyperflow.default_schedule(binary, (10, 0), count=3)
    assert far.R2 == 11
    assert far.radii == [22, 44, 88]
    assert far.window == pytest.approx(4 * math.pi)


def test_ray_target_and_exit_time():
    assert hyperflow.ray_target(math.pi / 2, 3) == pytest.approx(3j)
    with pytest.raises(ValueError):
        hyperflow.ray_target(0, 0)

    path = hyperflow.Path([0, 1, 2], [1, 3j, -5])
    assert hyperflow.first_exit_time(path, 2) == 0.5
    assert hyperflow.first_exit_time(path, 0.5) == 0
    with pytest.raises(LookupError):
        hyperflow.first_exit_time(path, 6)


def test_t_x_must_be_in_first_period(static_center, short_schedule):
    query = hyperflow.HyperbolicQuery(2, 0, 2, t_x=1.0)
    with pytest.raises(ValueError, match='t_x must be in'):
        hyperflow.solve_forward(static_center, query, short_schedule)


def test_continuation_error(static_center, escape_options):
    query = hyperflow.HyperbolicQuery(2, 0, 2)
    schedule = hyperflow.ContinuationSchedule(4, [8], 2)
    with pytest.raises(hyperflow.ContinuationError) as error:
        hyperflow.solve_forward(static_center, query, schedule,
                                escape_options)
    [step] = error.value.history
    assert step.n == 1 and step.radius == 8
    assert step.window_change is None
    assert step.action > 0


def test_radial_floor_warning(static_center, caplog):
    # the floor is sqrt(1.5*m/R2) = 0.61 for R2 = 4
    t = np.linspace(0, 10, 41)
    slow = hyperflow.Path(t, 4 + 0.3 * t)
    fast = hyperflow.Path(t, 4 + 2 * t)

    with caplog.at_level(logging.WARNING, logger='hyperflow._hyperbolic'):
        assert _hyperbolic._radial_floor_ok(static_center, fast, 0.0, 4)
    assert not caplog.records

    with caplog.at_level(logging.WARNING, logger='hyperflow._hyperbolic'):
        assert not _hyperbolic._radial_floor_ok(static_center, slow, 0.0, 4)
    [record] = caplog.records
    assert 'below the floor' in record.getMessage()


@pytest.mark.slow
def test_radial_escape(static_center, short_schedule, escape_options):
    query = hyperflow.HyperbolicQuery(2, 0, (2, 0))
    solution = hyperflow.solve_forward(static_center, query, short_schedule,
                                       escape_options)
    assert solution.verified
    assert solution.path.start == 0
    assert solution.path.z[0] == pytest.approx(2)
    assert 2 <= len(solution.history) <= 3
    assert all(step.bound_ok and step.floor_ok for step in solution.history)
    assert abs(np.exp(1j * solution.estimate.theta_inf) - 1) < 1e-3
    assert solution.estimate.v_inf == pytest.approx(2, rel=1e-2)
    assert solution.el_residual < 1e-2
    assert solution.target_velocity == pytest.approx(2)

    as_json = solution.to_json()
    assert as_json['verified'] is True
    assert len(as_json['history']) == len(solution.history)

    backward = hyperflow.solve_backward(
        static_center, hyperflow.HyperbolicQuery(2, 0, (2, 0)),
        short_schedule, escape_options)
    assert backward.query.direction == 'backward'
    assert backward.path.end == 0
    assert backward.path.z[-1] == pytest.approx(2)
    assert backward.target_velocity == pytest.approx(-2)
    assert np.allclose(backward.path.z[::-1], solution.path.z, atol=1e-6)


@pytest.mark.slow
def test_period_is_blown_up(short_schedule, escape_options):
    slow_center = hyperflow.make_static_center(1.0, period=2.0)
    query = hyperflow.HyperbolicQuery(2, math.pi / 2, 2j, t_x=0.5)
    solution = hyperflow.solve_forward(slow_center, query, short_schedule,
                                       escape_options)
    assert solution.system is slow_center
    assert solution.query.h == pytest.approx(2)
    assert solution.query.t_x == pytest.approx(0.5)
    assert solution.path.start == pytest.approx(0.5)
    assert solution.path.z[0] == pytest.approx(2j)
    assert solution.estimate.v_inf == pytest.approx(2, rel=1e-2)
    assert solution.history[0].radius == pytest.approx(8)


def test_rescale(static_center):
    times = np.arange(20.0)
    path = hyperflow.Path(times, 2 + 3 * times)
    result = hyperflow.MinimizeResult(
        path, hyperflow.action(static_center, path, 0.5), 0.0,
        hyperflow.min_primary_distance(static_center, path), 3,
        'converged', hyperflow.quadrature_plan(static_center, path), 0.5)
    series = hyperflow.polar_series(path)
    certificate, omega, estimate = hyperflow.estimate_asymptotics(
        series, static_center, tail_fraction=1)
    solution = hyperflow.HyperbolicSolution(
        hyperflow.HyperbolicQuery(0.5, 0, 2), static_center, path, result,
        certificate, omega, estimate, [])

    assert hyperflow.rescale_general_period(solution, 1) is solution
    with pytest.raises(ValueError):
        hyperflow.rescale_general_period(solution, 0)

    rescaled = hyperflow.rescale_general_period(solution, 8.0)
    assert rescaled.path.times.tolist() == (path.times / 8).tolist()
    assert np.allclose(rescaled.path.z, path.z / 4)
    # speeds double, so energies go up by 4
    assert rescaled.query.h == pytest.approx(2.0)
    assert rescaled.action == pytest.approx(solution.action / 2)
    assert rescaled.certificate.r1 == pytest.approx(certificate.r1 / 4)
