import collections
import logging
import math

import numpy as np
import scipy.linalg

import hyperflow
from hyperflow._action import (
    _value_and_gradient, action, min_primary_distance, quadrature_plan)
from hyperflow._config import Options
from hyperflow._descent import Descent
from hyperflow._path import Path
from hyperflow._structures import on_descent_iteration
from hyperflow._threads import map_concurrently
from hyperflow._verify import el_residual

log = logging.getLogger(__name__)

SubpathReport = collections.namedtuple(
    'SubpathReport', 'max_excess excesses intervals')
SubpathReport.__doc__ = """What :func:`check_subpath_minimality` returns.

``intervals`` is a list of ``(t_start, t_end)`` pairs and ``excesses`` has
the relative action excess of the original path on each of them.
"""

LipschitzEstimate = collections.namedtuple(
    'LipschitzEstimate', 'constant half_step_constant base_action')

# the descent replans the quadrature at most this many times
MAX_REPLANS = 3


def _position(value):
    if isinstance(value, (tuple, list)):
        return complex(*value)
    return complex(value)


class FixedEndProblem:
    """Go from *x* at time *t1* to *y* at time *t2* with energy *h*.

    >>> FixedEndProblem((2, 0), (5, 0), 0, 3)
    <FixedEndProblem: (2+0j) at t=0 to (5+0j) at t=3, h=0>
    """

    def __init__(self, x, y, t1, t2, h=0.0):
        self.x = _position(x)
        self.y = _position(y)
        self.t1 = float(t1)
        self.t2 = float(t2)
        self.h = float(h)
        if not (math.isfinite(abs(self.x)) and math.isfinite(abs(self.y))):
            raise ValueError("endpoints must be finite, got %r and %r"
                             % (self.x, self.y))
        if not self.t2 > self.t1:
            raise ValueError("t2 must be greater than t1, got t1=%r and "
                             "t2=%r" % (t1, t2))
        if not self.h >= 0:
            raise ValueError("h must not be negative, not %r" % (h,))

    def __repr__(self):
        return '<%s: %r at t=%g to %r at t=%g, h=%g>' % (
            type(self).__name__, self.x, self.t1, self.y, self.t2, self.h)

    @property
    def duration(self):
        return self.t2 - self.t1

    def with_h(self, h):
        return FixedEndProblem(self.x, self.y, self.t1, self.t2, h)


class FreeTimeProblem:
    """Go from *x* to *y* with any duration that makes the arrival time
    ``s2`` modulo the period.

    The departure time is *s1*. If *s2* is None, the arrival phase is free
    and :func:`minimize_free_time` optimizes it too. *max_periods* limits
    how many durations are tried, and defaults to the ``max_periods``
    option.
    """

    def __init__(self, x, y, s1, s2=None, h=1.0, max_periods=None):
        self.x = _position(x)
        self.y = _position(y)
        self.s1 = float(s1)
        self.s2 = None if s2 is None else float(s2)
        self.h = float(h)
        self.max_periods = max_periods
        if not self.h > 0:
            raise ValueError("h must be positive, not %r" % (h,))

    def __repr__(self):
        s2 = 'free' if self.s2 is None else '%g' % self.s2
        return '<%s: %r to %r, s1=%g, s2=%s, h=%g>' % (
            type(self).__name__, self.x, self.y, self.s1, s2, self.h)


class MinimizeResult:
    """The outcome of a minimization.

    .. attribute:: path

        The minimizing :class:`.Path`.

    .. attribute:: breakdown

        The :class:`.ActionBreakdown` of the path.

    .. attribute:: grad_norm

        The largest gradient of the action per unit time at a node, which
        is how badly the path fails to solve the equations of motion.

    .. attribute:: el_residual

        See :func:`.el_residual`. This is NaN for paths with less than 3
        interior nodes.

    .. attribute:: distance

        A :class:`.DistanceRecord` of the closest approach to a primary.

    .. attribute:: status

        ``'converged'``, ``'max-iter'``, ``'collision-suspected'`` or
        ``'interrupted'``.

    .. attribute:: periods

        For free-time minimizations, the number of whole periods in the
        minimizing duration. Otherwise None.

    .. attribute:: details

        A dict of extra information, like the durations that a free-time
        search tried.
    """

    def __init__(self, path, breakdown, grad_norm, distance, iterations,
                 status, plan, h, el=math.nan):
        self.path = path
        self.breakdown = breakdown
        self.grad_norm = grad_norm
        self.distance = distance
        self.iterations = iterations
        self.status = status
        self.plan = plan
        self.h = h
        self.periods = None
        self.details = {}
        self.el_residual = el

    def __repr__(self):
        return '<%s: %s, action %.12g, %d nodes>' % (
            type(self).__name__, self.status, self.action, len(self.path))

    @property
    def action(self):
        return self.breakdown.total

    def to_json(self):
        return {
            'status': self.status,
            'action': self.breakdown._asdict(),
            'grad_norm': self.grad_norm,
            'el_residual': self.el_residual,
            'iterations': self.iterations,
            'nodes': len(self.path),
            'd_min': self.distance._asdict(),
            'periods': self.periods,
        }


def fixed_end_action_bound(R, duration, m):
    """An upper bound for the least action between two points.

    It holds for ``h = 0`` when both points are at distance between
    ``sqrt(2)*R1`` and *R* from the origin.

    >>> fixed_end_action_bound(10, 10, 1)
    172.0
    """
    return 16 * R**2 / duration + 12 * m * duration / R


def free_time_action_bound(R, h, m, R1):
    """An upper bound for the least free-time action between two points.

    It holds for any phases when both points are at distance between
    ``sqrt(2)*R1`` and *R* from the origin.
    """
    return (16 + h) * R + 6 * m + 3 * math.sqrt(2) * m / R1 + h


def time_grid(system, t1, t2, opts=None):
    """Uniformly spaced node times for a path on ``[t1, t2]``.

    The spacing comes from the ``nodes_per_period`` option, and there are at
    most ``max_nodes`` nodes and at least 17.
    """
    if opts is None:
        opts = Options()
    segments = math.ceil(opts['nodes_per_period'] * (t2 - t1)
                         / system.period - 1e-9)
    segments = min(max(segments, 16), opts['max_nodes'] - 1)
    return np.linspace(t1, t2, segments + 1)


def straight_chord(system, x, y, t1, t2, opts=None):
    """The path that moves from *x* to *y* with constant velocity."""
    times = time_grid(system, t1, t2, opts)
    s = (times - t1) / (t2 - t1)
    return Path(times, _position(x) + s * (_position(y) - _position(x)))


def _merge_times(grid, extra):
    # union, dropping grid nodes that would make tiny segments
    extra = np.asarray(extra, dtype=float)
    spacing = np.min(np.diff(grid))
    close = np.min(np.abs(grid[:, np.newaxis] - extra), axis=1) < 0.1 * spacing
    close[[0, -1]] = False
    return np.union1d(grid[~close], extra)


def _leg_profile(t, t_start, t_middle, mu):
    # lambda(t) on [t_start, t_middle], goes from 0 to 1 through mu at tau
    a = mu**1.5
    b = (1 - mu)**1.5
    tau = t_start + a / (a + b) * (t_middle - t_start)
    result = np.empty_like(t)
    before = t <= tau
    result[before] = mu * (1 - ((tau - t[before]) / (tau - t_start))**(2/3))
    result[~before] = mu + (1 - mu) * (
        (t[~before] - tau) / (t_middle - tau))**(2/3)
    return result, tau


def initial_guess_via_arc(system, x, y, t1, t2, opts=None, radius=None):
    """A two-leg guess that goes from *x* to a turning point and then to *y*.

    The turning point is at distance *radius* (default ``max(|x|, |y|)``)
    on the ray that halves the angle between *x* and *y*. Both legs are
    straight, but they slow down near their closest approach to the
    origin with a 2/3 power law, which keeps the potential integrable even
    if a leg passes through the origin. The turn happens at the middle time.

    If *x* and *y* are far enough from the origin, the action of this path
    with ``h = 0`` is at most ``fixed_end_action_bound(radius, t2 - t1, m)``.
    """
    x = _position(x)
    y = _position(y)
    if x == 0 and y == 0:
        raise ValueError("x and y can't both be at the origin")
    if not t2 > t1:
        raise ValueError("t2 must be greater than t1, got t1=%r and t2=%r"
                         % (t1, t2))
    if radius is None:
        radius = max(abs(x), abs(y))
    if radius < max(abs(x), abs(y)):
        raise ValueError("radius %g is less than max(|x|, |y|) = %g"
                         % (radius, max(abs(x), abs(y))))
    limit = math.sqrt(2) * system.far_field.R1
    if min(abs(x), abs(y)) < limit:
        log.warning("endpoints closer than sqrt(2)*R1 = %g to the origin, "
                    "the arc guess may be poor", limit)

    unit = (x / abs(x) if x else 0) + (y / abs(y) if y else 0)
    if abs(unit) < 1e-12:
        # antipodal, either perpendicular direction halves the angle
        unit = 1j * x / abs(x)
    turn = radius * unit / abs(unit)

    middle = 0.5 * (t1 + t2)
    grid = time_grid(system, t1, t2, opts)
    mu_out = abs(x) / (abs(x) + radius)
    mu_back = abs(y) / (abs(y) + radius)
    tau_out = _leg_profile(np.array([t1]), t1, middle, mu_out)[1]
    # the second leg is the first one backwards in time from t2
    tau_back = t1 + t2 - _leg_profile(np.array([t1]), t1, middle, mu_back)[1]
    times = _merge_times(grid, [tau_out, middle, tau_back])

    positions = np.empty(times.shape, dtype=complex)
    first = times <= middle
    lam, _ = _leg_profile(times[first], t1, middle, mu_out)
    positions[first] = (1 - lam) * x + lam * turn
    lam, _ = _leg_profile(t1 + t2 - times[~first], t1, middle, mu_back)
    positions[~first] = (1 - lam) * y + lam * turn
    positions[0] = x
    positions[-1] = y
    return Path(times, positions)


def _check_guess(problem, guess):
    scale = max(1.0, abs(problem.t1), abs(problem.t2))
    if (abs(guess.start - problem.t1) > 1e-12 * scale
            or abs(guess.end - problem.t2) > 1e-12 * scale):
        raise ValueError("guess is on [%g, %g], but the problem is on "
                         "[%g, %g]" % (guess.start, guess.end,
                                       problem.t1, problem.t2))
    for name, given, wanted in [('start', guess.z[0], problem.x),
                                ('end', guess.z[-1], problem.y)]:
        if abs(given - wanted) > 1e-12 * max(1.0, abs(wanted)):
            raise ValueError("guess %s position %r doesn't match %r"
                             % (name, complex(given), wanted))
    if len(guess) < 3:
        raise ValueError("guess needs at least one interior node")


def _kinetic_preconditioner(times):
    # inverse of the kinetic part of the Hessian, same for x and y
    dt = np.diff(times)
    inverse = 1 / dt
    banded = np.zeros((2, len(times) - 2))
    banded[1] = inverse[:-1] + inverse[1:]
    banded[0, 1:] = -inverse[1:-1]
    count = len(times) - 2

    def precondition(vector):
        columns = vector.reshape(2, count).T
        return scipy.linalg.solveh_banded(banded, columns).T.ravel()

    return precondition


class _FixedEndObjective:
    # the discrete action as a function of the interior nodes as a real vector

    def __init__(self, system, problem, times, plan, order, penalty=None,
                 weight=0.0):
        self.system = system
        self.problem = problem
        self.times = times
        self.plan = plan
        self.order = order
        self.penalty = penalty
        self.weight = weight
        self.count = len(times) - 2
        dt = np.diff(times)
        self.dual_weights = 0.5 * (dt[:-1] + dt[1:])

    def path(self, vector):
        interior = vector[:self.count] + 1j * vector[self.count:]
        positions = np.concatenate(
            [[self.problem.x], interior, [self.problem.y]])
        return Path(self.times, positions)

    def vector(self, path):
        return np.concatenate([path.z[1:-1].real, path.z[1:-1].imag])

    def __call__(self, vector):
        path = self.path(vector)
        value, gradient = _value_and_gradient(
            self.system, path, self.problem.h, self.plan, self.order)
        if self.weight:
            extra, extra_gradient = self.penalty(path)
            value += self.weight * extra
            gradient = gradient + self.weight * extra_gradient
        return value, np.concatenate([gradient.real, gradient.imag])

    def grad_norm(self, gradient):
        components = gradient[:self.count] + 1j * gradient[self.count:]
        if not components.size:
            return 0.0
        return float(np.max(np.abs(components) / self.dual_weights))


def proximity_penalty(system, indices, scale):
    """Make a function that measures how close a path comes to primaries.

    The returned function takes a :class:`.Path` and returns ``(value,
    gradient)``, where the value is a time integral of
    ``(scale/|z - q_i|)**2`` over the interior nodes, summed over the
    primaries in *indices*, and the gradient is a complex array with one
    element per interior node.
    """
    indices = list(indices)

    def penalty(path):
        dt = np.diff(path.times)
        weights = 0.5 * (dt[:-1] + dt[1:])
        t = path.times[1:-1]
        diff = path.z[1:-1, np.newaxis] - system.positions(t)[:, indices]
        squared = np.abs(diff)**2
        if np.any(squared == 0):
            raise hyperflow.SingularityError(
                "path node is exactly at a primary")
        value = math.fsum(weights @ (scale**2 / squared))
        gradient = -2 * scale**2 * np.sum(diff / squared**2, axis=1)
        return value, weights * gradient

    return penalty


def guard_distance(system, opts):
    """Closest approach that doesn't make a result collision-suspected."""
    return opts['guard_factor'] * system.length_scale


def _penalty_stages(opts):
    # (weight, iteration budget) pairs, the weight decays to zero
    budget = max(1, int(opts['penalty_fraction'] * opts['max_iter'] / 4))
    return [(opts['penalty_weight'] * (4 - k) / 4, budget) for k in range(4)]


def minimize_fixed_end(system, problem, guess, opts=None, accept=None,
                       on_iteration=None, plan=None, penalty=None):
    """Minimize the action from *guess* with the ends held fixed.

    Only the interior nodes of *guess* move, and the node times stay the
    same. The action never increases during the descent, so the result's
    action is at most the action of *guess*.

    If *accept* is given, it is called with trial paths, and the descent
    never moves to a path for which it returns False. *on_iteration* is a
    :class:`.Callback` that is ran after each iteration with a dict of
    ``iter``, ``action``, ``grad_norm`` and ``d_min``; returning ``'break'``
    from it stops the minimization. The default is
    :data:`hyperflow.on_descent_iteration`.

    A *penalty* function (see :func:`proximity_penalty`) is added to the
    action during the first iterations with a weight that decreases from
    the ``penalty_weight`` option to zero. The ``penalty_fraction`` option
    says which fraction of ``max_iter`` this takes. The rest of the
    iterations minimize the plain action.

    Returns a :class:`MinimizeResult`. Its status is
    ``'collision-suspected'`` when the converged path comes closer to a
    primary than the collision guard.
    """
    if opts is None:
        opts = Options()
    _check_guess(problem, guess)
    if on_iteration is None:
        on_iteration = on_descent_iteration
    times = guess.times
    positions = np.array(guess.z)
    positions[[0, -1]] = [problem.x, problem.y]
    path = Path(times, positions)

    if plan is None:
        plan = quadrature_plan(system, path)
    plan = np.asarray(plan)
    tol = opts['tol'] * max(1.0, float(np.max(np.abs(path.z))))

    def monitor(vector):
        return {'d_min': min_primary_distance(
            system, objective.path(vector)).d_min}

    check = None
    if accept is not None:
        def check(vector):
            return accept(objective.path(vector))

    def descend(weight, budget):
        nonlocal objective
        objective = _FixedEndObjective(
            system, problem, times, plan, opts['quad_order'], penalty,
            weight)
        descent = Descent(
            objective, precondition=_kinetic_preconditioner(times),
            accept=check, grad_norm=objective.grad_norm, monitor=monitor,
            memory=opts['memory'], tol=tol, max_iter=budget,
            on_iteration=on_iteration)
        return descent.run(objective.vector(path))

    objective = None
    iterations = 0
    stages = [] if penalty is None else _penalty_stages(opts)
    for weight, budget in stages:
        outcome = descend(weight, budget)
        iterations += outcome.iterations
        path = objective.path(outcome.x)
        if outcome.status == 'interrupted':
            break
    else:
        for replan in range(MAX_REPLANS + 1):
            outcome = descend(0.0, max(0, opts['max_iter'] - iterations))
            iterations += outcome.iterations
            path = objective.path(outcome.x)
            if outcome.status == 'interrupted':
                break

            new_plan = quadrature_plan(system, path)
            if np.all(new_plan <= plan) or iterations >= opts['max_iter']:
                break
            log.debug("path moved closer to a primary, replanning "
                      "quadrature")
            plan = np.maximum(plan, new_plan)

    status = outcome.status
    if status == 'stalled':
        log.warning("line search stalled with gradient norm %g, tolerance "
                    "is %g", outcome.grad_norm, tol)
        status = 'max-iter'

    distance = min_primary_distance(system, path)
    if (status == 'converged'
            and distance.d_min <= guard_distance(system, opts)):
        status = 'collision-suspected'

    breakdown = action(system, path, problem.h, plan, opts['quad_order'])
    try:
        el = el_residual(system, path)
    except ValueError:
        el = math.nan
    except hyperflow.SingularityError:
        el = math.inf

    log.debug("fixed-end minimization: %s after %d iterations, action %.15g",
              status, iterations, breakdown.total)
    return MinimizeResult(path, breakdown, outcome.grad_norm, distance,
                          iterations, status, plan, problem.h, el)


def refine_grid(system, problem, guess, opts=None):
    """Minimize, then keep doubling the grid and minimizing again.

    Doubling stops when the relative action change is less than the
    ``refine_tol`` option, after ``max_refinements`` doublings or when the
    grid would get more than ``max_nodes`` nodes. Returns a list of
    :class:`MinimizeResult` objects, one for each grid.
    """
    if opts is None:
        opts = Options()
    results = [minimize_fixed_end(system, problem, guess, opts)]
    for level in range(opts['max_refinements']):
        previous = results[-1]
        if 2 * len(previous.path) - 1 > opts['max_nodes']:
            log.info("not refining beyond %d nodes", len(previous.path))
            break
        results.append(minimize_fixed_end(
            system, problem, previous.path.refined(), opts))
        change = abs(results[-1].action - previous.action)
        if change < opts['refine_tol'] * abs(previous.action):
            break
    return results


def refinement_study(system, problem, guess, opts=None, levels=3):
    """Minimize on *levels* grids, each twice as fine as the previous.

    The Euler-Lagrange residuals of the results should shrink by about 4
    on every doubling.
    """
    if opts is None:
        opts = Options()
    results = [minimize_fixed_end(system, problem, guess, opts)]
    while len(results) < levels:
        results.append(minimize_fixed_end(
            system, problem, results[-1].path.refined(), opts))
    for result in results:
        log.info("%5d nodes: action %.12g, Euler-Lagrange residual %g",
                 len(result.path), result.action, result.el_residual)
    return results


def _dilated(path, t1, duration, times):
    # stretch path to [t1, t1 + duration] and put nodes at times
    stretched = t1 + (path.times - path.start) * (duration / path.duration)
    stretched[[0, -1]] = [times[0], times[-1]]
    return Path(stretched, path.z).resampled(times)


def _duration_order(problem, period, cap):
    # candidate (n, duration) pairs sorted by the action lower bound
    base = (problem.s2 - problem.s1) % period
    if base < 1e-12 * period:
        base = 0.0
    first = 1 if base == 0 else 0
    chord = abs(problem.y - problem.x)

    def lower_bound(n):
        duration = base + n * period
        return chord**2 / (2 * duration) + problem.h * duration

    best = max(first, int(round((chord / math.sqrt(2 * problem.h) - base)
                                / period)))
    low = high = best
    order = [best]
    while len(order) < cap:
        below = low - 1 if low - 1 >= first else None
        above = high + 1
        if below is not None and lower_bound(below) <= lower_bound(above):
            order.append(below)
            low = below
        else:
            order.append(above)
            high = above
    return [(n, base + n * period, lower_bound(n)) for n in order]


def _better(candidate, best, n, best_n):
    if best is None:
        return True
    tie = 1e-10 * max(1.0, abs(best.action))
    if candidate.action < best.action - tie:
        return True
    return abs(candidate.action - best.action) <= tie and n < best_n


def _best_of(results):
    good = [r for r in results if r.status == 'converged']
    return min(good or results, key=lambda r: r.action)


def _default_initial(system, opts):
    # the fresh starting paths of a free-time search
    def initial(fixed, first):
        starts = [straight_chord(system, fixed.x, fixed.y, fixed.t1,
                                 fixed.t2, opts)]
        if first and (fixed.x != 0 or fixed.y != 0):
            starts.append(initial_guess_via_arc(
                system, fixed.x, fixed.y, fixed.t1, fixed.t2, opts))
        return starts

    return initial


def minimize_free_time(system, problem, opts=None, guess=None, solver=None,
                       initial=None):
    """Minimize over the durations ``s2 - s1 + n*T`` for whole numbers n.

    Every duration gets a fixed-end minimization, warm started from the
    closest duration solved so far by stretching it in time. A duration
    is skipped once no path of that duration can beat the best action
    found, because the action is at least ``|y - x|**2/(2*d) + h*d``. When
    two durations give the same action, the smaller n wins.

    A *guess* path from *x* to *y* of any duration is stretched to each
    duration and tried too. Returns ``(result, n)``. If the problem's
    arrival phase is free, this calls :func:`optimize_arrival_phase`.

    *solver* and *initial* change how a single duration is handled.
    ``solver(fixed_problem, start_path)`` must return a
    :class:`MinimizeResult`, and defaults to :func:`minimize_fixed_end`.
    ``initial(fixed_problem, first)`` returns a list of starting paths
    that don't come from other durations; *first* is True when no
    duration has been solved yet. The default gives the straight chord and,
    for the first duration, :func:`initial_guess_via_arc`. With the
    ``multistart`` option turned off, these are used only when there is
    nothing to warm start from.
    """
    if opts is None:
        opts = Options()
    if not problem.h > 0:
        raise ValueError("h must be positive, not %r" % (problem.h,))
    if problem.s2 is None:
        s2, result = optimize_arrival_phase(
            system, problem.x, problem.y, problem.s1, problem.h, opts, guess,
            solver, initial)
        return result, result.periods

    if solver is None:
        def solver(fixed, start):
            return minimize_fixed_end(system, fixed, start, opts)
    if initial is None:
        initial = _default_initial(system, opts)

    cap = problem.max_periods or opts['max_periods']
    period = system.period
    t1 = problem.s1
    best = best_n = None
    solved = {}
    tried = []

    for n, duration, bound in _duration_order(problem, period, cap):
        if best is not None and bound > best.action:
            log.debug("stopping at n=%d, action bound %g exceeds %g",
                      n, bound, best.action)
            break
        fixed = FixedEndProblem(problem.x, problem.y, t1, t1 + duration,
                                problem.h)
        times = time_grid(system, t1, t1 + duration, opts)
        starts = []
        if solved:
            nearest = min(solved, key=lambda k: abs(k - n))
            starts.append(_dilated(solved[nearest].path, t1, duration,
                                   times))
        if guess is not None:
            starts.append(_dilated(guess, t1, duration, times))
        if opts['multistart'] or not starts:
            starts.extend(initial(fixed, not solved))

        results = map_concurrently(lambda start: solver(fixed, start),
                                   starts)
        result = _best_of(results)
        solved[n] = result
        tried.append({'n': n, 'duration': duration,
                      'action': result.action, 'status': result.status})
        log.debug("n=%d, duration %g: action %.12g", n, duration,
                  result.action)
        if _better(result, best, n, best_n):
            best, best_n = result, n
    else:
        log.warning("tried %d durations without reaching the action bound",
                    cap)

    best.periods = best_n
    best.details['durations'] = sorted(tried, key=lambda item: item['n'])
    log.info("free-time minimum at n=%d (duration %g), action %.12g",
             best_n, best.path.duration, best.action)
    return best, best_n


def golden_section(solve, low, high, iterations):
    """Minimize ``solve(u).action`` over ``low <= u <= high``.

    *solve* returns a :class:`MinimizeResult`. Returns ``(u, result)`` for
    the smallest action seen, which may be at one of the first two
    evaluations.
    """
    ratio = (math.sqrt(5) - 1) / 2
    c = high - ratio * (high - low)
    d = low + ratio * (high - low)
    fc, fd = map_concurrently(solve, [c, d])
    seen = [(c, fc), (d, fd)]
    for iteration in range(iterations):
        if fc.action < fd.action:
            high, d, fd = d, c, fc
            c = high - ratio * (high - low)
            fc = solve(c)
            seen.append((c, fc))
        else:
            low, c, fc = c, d, fd
            d = low + ratio * (high - low)
            fd = solve(d)
            seen.append((d, fd))
    return min(seen, key=lambda item: item[1].action)


def optimize_arrival_phase(system, x, y, s1, h, opts=None, guess=None,
                           solver=None, initial=None):
    """Find the arrival phase that gives the least free-time action.

    The phases ``s1 + j*T/G`` for ``j = 0, ..., G-1`` are tried first,
    where G is the ``phase_grid`` option, and the best one is refined with
    golden-section search. *guess*, *solver* and *initial* are passed to
    :func:`minimize_free_time`. Returns ``(s2, result)``.
    """
    if opts is None:
        opts = Options()
    if not h > 0:
        raise ValueError("h must be positive, not %r" % (h,))
    period = system.period
    count = opts['phase_grid']
    x = _position(x)
    y = _position(y)

    def solve(offset):
        s2 = (s1 + offset) % period
        problem = FreeTimeProblem(x, y, s1, s2, h)
        return minimize_free_time(system, problem, opts, guess, solver,
                                  initial)[0]

    offsets = [j * period / count for j in range(count)]
    grid = map_concurrently(solve, offsets)
    best_j = min(range(count), key=lambda j: grid[j].action)
    best_offset, best = offsets[best_j], grid[best_j]
    log.info("phase grid: best offset %g of %d, action %.12g",
             best_offset, count, best.action)

    if count > 1:
        offset, result = golden_section(
            solve, best_offset - period / count,
            best_offset + period / count, opts['golden_iter'])
        if result.action < best.action:
            best_offset, best = offset, result

    s2 = (s1 + best_offset) % period
    best.details['arrival_phase'] = s2
    log.info("arrival phase %g, action %.12g", s2, best.action)
    return s2, best


def check_subpath_minimality(system, result, h, n_samples=20, opts=None,
                             seed=0, intervals=None):
    """Check that pieces of a minimizer can't be improved either.

    Random pieces between nodes are minimized again with their ends fixed,
    and the relative amount that the minimization lowers the action is
    reported. For a true minimizer this is about as small as the grid
    error. *intervals* can be a list of ``(first node index, last node
    index)`` pairs to use instead of random ones.
    """
    if opts is None:
        opts = Options()
    path = result.path
    n = len(path)
    if intervals is None:
        rng = np.random.default_rng(seed)
        intervals = []
        for sample in range(n_samples):
            i = int(rng.integers(0, n - 2))
            j = int(rng.integers(i + 2, n))
            intervals.append((i, j))

    excesses = []
    times = []
    for i, j in intervals:
        if not 0 <= i < j - 1 < n - 1:
            raise ValueError("bad node index interval (%d, %d)" % (i, j))
        piece = Path(path.times[i:j + 1], path.z[i:j + 1])
        plan = result.plan[i:j]
        original = action(system, piece, h, plan, opts['quad_order']).total
        problem = FixedEndProblem(piece.z[0], piece.z[-1], piece.start,
                                  piece.end, h)
        again = minimize_fixed_end(system, problem, piece, opts, plan=plan)
        excesses.append((original - again.action) / max(abs(original),
                                                        1e-300))
        times.append((piece.start, piece.end))

    return SubpathReport(max(excesses), excesses, times)


def lipschitz_check(system, problem, delta, opts=None, direction=1):
    """Estimate how fast the least fixed-end action changes with *y*.

    The end point is moved by *delta* and by ``delta/2`` in *direction*,
    and the changes of the minimized action divided by the moves are
    returned as a :class:`LipschitzEstimate` together with the action at the
    original end point. The two estimates should be close.
    """
    if opts is None:
        opts = Options()
    if not delta > 0:
        raise ValueError("delta must be positive, not %r" % (delta,))
    unit = complex(direction) / abs(direction)
    guess = straight_chord(system, problem.x, problem.y, problem.t1,
                           problem.t2, opts)
    base = minimize_fixed_end(system, problem, guess, opts)
    s = (base.path.times - problem.t1) / problem.duration

    def moved(step):
        y = problem.y + step * unit
        start = Path(base.path.times, base.path.z + s * (step * unit))
        moved_problem = FixedEndProblem(problem.x, y, problem.t1,
                                        problem.t2, problem.h)
        return minimize_fixed_end(system, moved_problem, start, opts).action

    full, half = map_concurrently(moved, [delta, delta / 2])
    return LipschitzEstimate(abs(full - base.action) / delta,
                             abs(half - base.action) / (delta / 2),
                             base.action)


def _winding_keeper(system, index, t_start, t_end, sign):
    # accepts paths whose winding around a primary on a window stays on
    # one side of zero and within one turn
    from hyperflow._collision import argument_increment, relative_path

    def accept(path):
        inside = (path.times >= t_start) & (path.times <= t_end)
        relative = relative_path(path, system, index).z[inside]
        if np.any(relative == 0):
            return False
        try:
            increment = argument_increment(relative)
        except (hyperflow.RefinementNeeded, hyperflow.SingularityError):
            return False
        return 0 < sign * increment < 2 * math.pi

    return accept


def collision_escape(system, result, h, opts=None, delta=None, epsilon=None):
    """Push a collision-suspected minimizer off the primary and minimize again.

    Results with other statuses are returned as is. Otherwise two paths
    that go around the primary in opposite directions are built with
    :func:`.local_deform`, both are minimized without letting them change
    direction around the primary, and the one with less action is
    returned if it has less action than *result*. If that doesn't work,
    *result* is returned and a warning is logged.
    """
    from hyperflow._collision import (
        _event_from_nodes, argument_increment, fit_asymptotics, local_deform,
        relative_path)

    if opts is None:
        opts = Options()
    if result.status != 'collision-suspected':
        return result

    path = result.path
    index = result.distance.index
    t0 = result.distance.time
    spacing = float(np.max(np.diff(path.times)))
    room = min(t0 - path.start, path.end - t0)
    if room < 2 * spacing:
        log.warning("near-collision at t=%g is too close to an end of the "
                    "path to deform", t0)
        return result

    if delta is None:
        delta = min(room / 2, 0.1 * system.period, 8 * spacing)
    if epsilon is None:
        epsilon = 0.25 * system.length_scale

    try:
        event = fit_asymptotics(path, system, index, t0, delta,
                                guard=guard_distance(system, opts) * 10)
    except ValueError:
        event = _event_from_nodes(path, system, index, t0)

    for attempt in range(4):
        try:
            deformed = local_deform(path, system, event, delta, epsilon)
            break
        except hyperflow.ProximityError:
            delta /= 2
    else:
        log.warning("could not deform the path around t=%g", t0)
        return result

    problem = FixedEndProblem(path.z[0], path.z[-1], path.start, path.end, h)

    def redescend(item):
        sign, start = item
        accept = _winding_keeper(system, index, t0 - delta, t0 + delta, sign)
        deformed_result = minimize_fixed_end(system, problem, start, opts,
                                             accept=accept)
        inside = ((deformed_result.path.times >= t0 - delta)
                  & (deformed_result.path.times <= t0 + delta))
        deformed_result.details['winding'] = argument_increment(
            relative_path(deformed_result.path, system, index).z[inside])
        deformed_result.details['winding_sign'] = sign
        return deformed_result

    candidates = map_concurrently(redescend, list(zip([1, -1], deformed)))
    for candidate in candidates:
        log.info("deformation with winding sign %+d: action %.12g (%s)",
                 candidate.details['winding_sign'], candidate.action,
                 candidate.status)
    best = min(candidates, key=lambda r: r.action)
    if best.action >= result.action:
        log.warning("deformations did not lower the action %.12g",
                    result.action)
        return result
    best.details['collision_event'] = event.to_json()
    return best
