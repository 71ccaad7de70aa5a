import math
import types

import numpy as np
import pytest

import hyperflow


def test_problems():
    problem = hyperflow.FixedEndProblem((2, 0), 5, 0, 3)
    assert problem.x == 2 and problem.y == 5
    assert problem.duration == 3
    assert problem.with_h(0.5).h == 0.5
    with pytest.raises(ValueError, match='t2 must be greater'):
        hyperflow.FixedEndProblem(1, 2, 3, 3)
    with pytest.raises(ValueError, match='finite'):
        hyperflow.FixedEndProblem(1, math.inf, 0, 1)
    with pytest.raises(ValueError):
        hyperflow.FixedEndProblem(1, 2, 0, 1, h=-1)

    free = hyperflow.FreeTimeProblem(1, 2j, 0.25)
    assert free.s2 is None
    assert 's2=free' in repr(free)
    with pytest.raises(ValueError, match='h must be positive'):
        hyperflow.FreeTimeProblem(1, 2, 0, 0, h=0)


def test_time_grid(binary):
    opts = hyperflow.Options()
    short = hyperflow.time_grid(binary, 0, 0.01, opts)
    assert len(short) == 17
    assert short[0] == 0 and short[-1] == 0.01

    assert len(hyperflow.time_grid(binary, 0, 2 * binary.period, opts)) == 129
    assert len(hyperflow.time_grid(binary, 0, 1e6, opts)) == opts['max_nodes']


def test_guesses(static_center, caplog):
    chord = hyperflow.straight_chord(static_center, 3, 3j, 0, 2)
    assert np.allclose(np.diff(chord.z) / np.diff(chord.times), (3j - 3) / 2)

    arc = hyperflow.initial_guess_via_arc(static_center, 3, 3j, 0, 2)
    assert arc.z[0] == 3 and arc.z[-1] == 3j
    assert arc.at(1.0) == pytest.approx(3 * np.exp(0.25j * math.pi))
    assert not caplog.records

    # out to the turning point and back in on the same ray
    there_and_back = hyperflow.initial_guess_via_arc(static_center, 4, 4, 0,
                                                     2, radius=8)
    assert there_and_back.at(1.0) == pytest.approx(8)
    assert np.allclose(there_and_back.z.imag, 0)
    assert there_and_back.at(0.5) == pytest.approx(there_and_back.at(1.5))

    with pytest.raises(ValueError, match='both be at the origin'):
        hyperflow.initial_guess_via_arc(static_center, 0, 0, 0, 1)
    with pytest.raises(ValueError, match='radius'):
        hyperflow.initial_guess_via_arc(static_center, 3, 4, 0, 1, radius=2)

    hyperflow.initial_guess_via_arc(static_center, 1, 1j, 0, 1)
    assert 'may be poor' in caplog.text


def test_arc_guess_bound(static_center):
    # |x| = |y| = R = 10, duration 10, m = 1
    guess = hyperflow.initial_guess_via_arc(static_center, 10, 10j, 0, 10)
    bound = hyperflow.fixed_end_action_bound(10, 10, 1)
    assert bound == 172
    assert hyperflow.action(static_center, guess).total <= bound


def test_matches_shooting(static_center):
    problem = hyperflow.FixedEndProblem((2, 0), (5, 0), 0, 3)
    guess = hyperflow.straight_chord(static_center, 2, 5, 0, 3)
    result = hyperflow.minimize_fixed_end(static_center, problem, guess)
    assert result.status == 'converged'
    assert result.action <= hyperflow.action(static_center, guess).total

    orbit, oracle = hyperflow.shoot_fixed_end(static_center, 2, 5, 0, 3, 1)
    assert result.action == pytest.approx(oracle, rel=1e-5)
    times = np.linspace(0.5, 2.5, 5)
    assert np.max(np.abs(result.path.at(times) - orbit.at(times))) < 1e-3
    assert result.el_residual < 1e-2
    assert result.distance.d_min >= 2 - 1e-9


def test_true_solution_is_kept(static_center):
    conic = hyperflow.kepler_conic(1.0, 0.5, 3.0, orientation=0.3)
    times = np.linspace(-2, 2, 257)
    exact = conic.path(times)
    problem = hyperflow.FixedEndProblem(exact.z[0], exact.z[-1], -2, 2)
    start = hyperflow.Path(times, exact.z)
    start_action = hyperflow.action(static_center, start).total
    result = hyperflow.minimize_fixed_end(static_center, problem, start)
    assert result.action <= start_action
    assert result.action == pytest.approx(start_action, rel=1e-6)
    assert np.max(np.abs(result.path.z - exact.z)) < 1e-3


def test_h_shifts_action_by_duration(binary):
    problem = hyperflow.FixedEndProblem(4, 4j, 0, 5)
    guess = hyperflow.straight_chord(binary, 4, 4j, 0, 5)
    plain = hyperflow.minimize_fixed_end(binary, problem, guess)
    shifted = hyperflow.minimize_fixed_end(binary, problem.with_h(2), guess)
    assert shifted.action - plain.action == pytest.approx(10, rel=1e-7)
    assert np.max(np.abs(shifted.path.z - plain.path.z)) < 1e-6


def test_guess_must_match(binary):
    problem = hyperflow.FixedEndProblem(4, 4j, 0, 5)
    with pytest.raises(ValueError, match='guess is on'):
        hyperflow.minimize_fixed_end(
            binary, problem, hyperflow.straight_chord(binary, 4, 4j, 0, 4))
    with pytest.raises(ValueError, match='start position'):
        hyperflow.minimize_fixed_end(
            binary, problem, hyperflow.straight_chord(binary, 3, 4j, 0, 5))
    with pytest.raises(ValueError, match='interior node'):
        hyperflow.minimize_fixed_end(binary, problem,
                                     hyperflow.Path([0, 5], [4, 4j]))


def test_arc_bound_on_binary(binary, rng):
    R = 6.0
    low = math.sqrt(2) * binary.far_field.R1
    for attempt in range(4):
        radii = low + (R - low) * rng.random(2)
        angles = 2 * math.pi * rng.random(2)
        x, y = radii * np.exp(1j * angles)
        bound = hyperflow.fixed_end_action_bound(R, 10, binary.total_mass)
        guess = hyperflow.initial_guess_via_arc(binary, x, y, 0, 10)
        assert hyperflow.action(binary, guess).total <= bound
        result = hyperflow.minimize_fixed_end(
            binary, hyperflow.FixedEndProblem(x, y, 0, 10), guess)
        assert result.action <= bound


def test_iterations_are_published(binary):
    records = []
    hyperflow.on_descent_iteration.connect(records.append)
    try:
        problem = hyperflow.FixedEndProblem(4, 4j, 0, 5)
        guess = hyperflow.straight_chord(binary, 4, 4j, 0, 5)
        result = hyperflow.minimize_fixed_end(binary, problem, guess)
    finally:
        hyperflow.on_descent_iteration.disconnect(records.append)

    assert records
    assert set(records[0]) == {'iter', 'action', 'grad_norm', 'd_min'}
    assert records[-1]['action'] == pytest.approx(result.action, rel=1e-9)

    # a callback of its own replaces the global one
    def stop(record):
        return 'break'

    callback = hyperflow.Callback()
    callback.connect(stop)
    interrupted = hyperflow.minimize_fixed_end(binary, problem, guess,
                                               on_iteration=callback)
    assert interrupted.status == 'interrupted'
    assert interrupted.iterations == 0


@pytest.mark.slow
def test_el_residual_shrinks_with_grid(binary):
    problem = hyperflow.FixedEndProblem(4, -1 + 4j, 0, 10)
    guess = hyperflow.straight_chord(binary, 4, -1 + 4j, 0, 10)
    levels = hyperflow.refinement_study(binary, problem, guess, levels=3)
    residuals = [level.el_residual for level in levels]
    assert [len(level.path) for level in levels] == [103, 205, 409]
    assert residuals[1] < residuals[0] / 2.5
    assert residuals[2] < residuals[1] / 2.5
    assert all(level.distance.d_min > 1e-3 for level in levels)


def test_refine_grid_stops(binary):
    opts = hyperflow.Options(refine_tol=1e-3)
    problem = hyperflow.FixedEndProblem(4, 4j, 0, 5)
    guess = hyperflow.straight_chord(binary, 4, 4j, 0, 5, opts)
    levels = hyperflow.refine_grid(binary, problem, guess, opts)
    assert 2 <= len(levels) <= 1 + opts['max_refinements']
    last, previous = levels[-1], levels[-2]
    assert abs(last.action - previous.action) < 1e-3 * abs(previous.action)

    tiny = opts.copy(max_nodes=60)
    assert len(hyperflow.refine_grid(binary, problem, guess.resampled(
        np.linspace(0, 5, 50)), tiny)) == 1


def test_golden_section():
    calls = []

    def solve(u):
        calls.append(u)
        return types.SimpleNamespace(action=(u - 0.3)**2)

    u, result = hyperflow.golden_section(solve, 0, 1, 30)
    assert u == pytest.approx(0.3, abs=1e-5)
    assert result.action == min((v - 0.3)**2 for v in calls)
    assert len(calls) == 32


def test_big_h_picks_shortest_duration(static_center):
    problem = hyperflow.FreeTimeProblem(2, 5, 0, 0.5, h=1000)
    result, n = hyperflow.minimize_free_time(static_center, problem)
    assert n == 0
    assert result.periods == 0
    assert result.path.duration == pytest.approx(0.5)
    assert [item['n'] for item in result.details['durations']] == [0]


def test_free_time_enumeration(binary, fast_options):
    problem = hyperflow.FreeTimeProblem(4, -4, 0, 1.0, h=0.5)
    result, n = hyperflow.minimize_free_time(binary, problem, fast_options)
    tried = result.details['durations']
    assert n in [item['n'] for item in tried]
    assert all(result.action <= item['action'] + 1e-12 for item in tried)
    assert result.path.duration == pytest.approx(1.0 + n * binary.period)

    # nothing that wasn't tried could have won
    chord = 8.0
    best_action = result.action
    untried = set(range(fast_options['max_periods'])) - {
        item['n'] for item in tried}
    for k in untried:
        duration = 1.0 + k * binary.period
        assert chord**2 / (2 * duration) + 0.5 * duration > best_action - 1e-9

    with pytest.raises(ValueError):
        hyperflow.minimize_free_time(binary, types.SimpleNamespace(h=0))


@pytest.mark.slow
def test_radial_kepler_free_time(static_center):
    opts = hyperflow.Options(nodes_per_period=32, phase_grid=4,
                             golden_iter=10, max_periods=6,
                             multistart=False)
    problem = hyperflow.FreeTimeProblem((2, 0), (20, 0), 0, None, h=0.5)
    result, n = hyperflow.minimize_free_time(static_center, problem, opts)
    oracle, duration = hyperflow.kepler_oracle_radial_action(1, 0.5, 2, 20)
    assert result.action == pytest.approx(oracle, rel=1e-4)
    assert result.path.duration == pytest.approx(duration, abs=0.05)
    assert 0 <= result.details['arrival_phase'] < 1


@pytest.mark.slow
def test_static_center_phase_doesnt_matter(static_center, fast_options):
    s2, best = hyperflow.optimize_arrival_phase(static_center, 3, 3j, 0.0,
                                                1.0, fast_options)
    assert 0 <= s2 < static_center.period
    fixed, n = hyperflow.minimize_free_time(
        static_center, hyperflow.FreeTimeProblem(3, 3j, 0.0, 0.0, 1.0),
        fast_options)
    # the phase grid contains s2 = s1
    assert best.action <= fixed.action + 1e-9

    single = fast_options.copy(phase_grid=1)
    s2, result = hyperflow.optimize_arrival_phase(static_center, 3, 3j, 0.0,
                                                  1.0, single)
    assert s2 == 0.0
    assert result.action == pytest.approx(fixed.action, rel=1e-12)


def test_subpath_minimality(binary):
    problem = hyperflow.FixedEndProblem(4, 4j, 0, 5)
    guess = hyperflow.straight_chord(binary, 4, 4j, 0, 5)
    result = hyperflow.minimize_fixed_end(binary, problem, guess)
    report = hyperflow.check_subpath_minimality(binary, result, 0.0,
                                                n_samples=5, seed=1)
    assert len(report.excesses) == len(report.intervals) == 5
    assert -1e-12 <= report.max_excess < 1e-4

    whole = hyperflow.check_subpath_minimality(
        binary, result, 0.0, intervals=[(0, len(result.path) - 1)])
    assert whole.max_excess < 1e-10

    # a bump in the middle makes the path worse than the minimizer
    bump = np.exp(-((result.path.times - 2.5) / 0.3)**2) * 0.1j
    bump[[0, -1]] = 0
    bumped = hyperflow.MinimizeResult(
        result.path.with_positions(result.path.z + bump), result.breakdown,
        result.grad_norm, result.distance, 0, 'converged', result.plan, 0.0)
    middle = len(result.path) // 2
    report = hyperflow.check_subpath_minimality(
        binary, bumped, 0.0, intervals=[(middle - 20, middle + 20)])
    assert report.max_excess > 1e-4

    with pytest.raises(ValueError, match='bad node index'):
        hyperflow.check_subpath_minimality(binary, result, 0.0,
                                           intervals=[(3, 4)])


def test_lipschitz_check(binary):
    problem = hyperflow.FixedEndProblem(4, 4j, 0, 5)
    check = hyperflow.lipschitz_check(binary, problem, 0.01, direction=1j)
    assert check.constant > 0
    assert check.half_step_constant == pytest.approx(check.constant, rel=0.1)
    with pytest.raises(ValueError):
        hyperflow.lipschitz_check(binary, problem, 0)


def test_collision_escape_passes_good_results(binary):
    problem = hyperflow.FixedEndProblem(4, 4j, 0, 5)
    guess = hyperflow.straight_chord(binary, 4, 4j, 0, 5)
    result = hyperflow.minimize_fixed_end(binary, problem, guess)
    assert result.status == 'converged'
    assert hyperflow.collision_escape(binary, result, 0.0) is result


def test_proximity_penalty(binary):
    path = hyperflow.straight_chord(binary, 3, -3 + 1j, 0, 2)
    penalty = hyperflow.proximity_penalty(binary, [0, 1], 0.1)
    value, gradient = penalty(path)
    assert value > 0
    assert gradient.shape == (len(path) - 2,)

    eps = 1e-7
    step = np.zeros(len(path), dtype=complex)
    step[5] = eps
    plus = penalty(path.with_positions(path.z + step))[0]
    minus = penalty(path.with_positions(path.z - step))[0]
    assert gradient[4].real == pytest.approx((plus - minus) / (2 * eps),
                                             rel=1e-5)
