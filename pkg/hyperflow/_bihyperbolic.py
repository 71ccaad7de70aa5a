import collections
import logging
import math

import numpy as np

import hyperflow
from hyperflow._action import concatenate, min_primary_distance
from hyperflow._asymptotics import estimate_asymptotics, polar_series
from hyperflow._collision import argument_increment, fit_asymptotics
from hyperflow._config import Options
from hyperflow._ephemeris import reflect_system
from hyperflow._hyperbolic import (
    _kepler_tail, _window_change, first_exit_time, ray_target)
from hyperflow._minimize import (
    FreeTimeProblem, _merge_times, _position, collision_escape,
    golden_section, guard_distance, minimize_fixed_end, minimize_free_time,
    proximity_penalty, time_grid)
from hyperflow._path import Path
from hyperflow._threads import map_concurrently
from hyperflow._verify import el_residual

log = logging.getLogger(__name__)

CrossingTimes = collections.namedtuple('CrossingTimes', 's_x s_y')
CrossingTimes.__doc__ = """The first and last times when a path is at the
crossing radius, see :func:`crossing_times`."""

EscapeEnd = collections.namedtuple(
    'EscapeEnd', 'certificate omega_bound estimate')
EscapeEnd.__doc__ = """What :func:`.estimate_asymptotics` found about one end
of a bi-hyperbolic solution. The incoming end is described with time
reversed, so its ``theta_inf`` is the direction that the body comes from.
"""

BiStep = collections.namedtuple('BiStep', [
    'n', 'radii', 'action', 'winding', 's_x', 's_y', 'tau_x', 'tau_y',
    'duration', 'phases', 'periods', 'floor_ok', 'window_change', 'status',
    'untied_action'])
BiStep.__doc__ = """One step of :func:`solve_bihyperbolic`.

``tau_x`` is the last time before ``s_x`` and ``tau_y`` the first time
after ``s_y`` when the path is at distance ``R2`` from the origin.
``window_change`` is like in :class:`.ContinuationStep`.
"""

# |nu| at least this much means that the path is tied
TIED_THRESHOLD = 0.5

# a tied path goes at least this far, in the same units as positions
MIN_TIED_LENGTH = 2.0

# loop nodes per turn in tied_guess
NODES_PER_TURN = 32


class TiedClass:
    """Paths that wind *nu_target* more times around primary *i0* than
    around primary *i1* while they are near the primaries.

    >>> TiedClass(0, 1, -1)
    <TiedClass: primary 0 vs primary 1, nu=-1>
    >>> TiedClass(0, 0, 1)
    Traceback (most recent call last):
      ...
    ValueError: i0 and i1 must be different primaries, both are 0
    """

    def __init__(self, i0, i1, nu_target):
        for name, value in [('i0', i0), ('i1', i1), ('nu_target', nu_target)]:
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError("%s must be an integer, not %r"
                                % (name, value))
        if i0 == i1:
            raise ValueError("i0 and i1 must be different primaries, both "
                             "are %d" % i0)
        if min(i0, i1) < 0:
            raise ValueError("primary indexes must not be negative, got %d "
                             "and %d" % (i0, i1))
        if abs(nu_target) < 1:
            raise ValueError("nu_target must be a nonzero integer, not %r"
                             % (nu_target,))
        self.i0 = i0
        self.i1 = i1
        self.nu_target = nu_target

    def __repr__(self):
        return '<%s: primary %d vs primary %d, nu=%d>' % (
            type(self).__name__, self.i0, self.i1, self.nu_target)

    def check(self, system):
        """Raise :class:`ValueError` if *system* doesn't have the primaries.
        """
        if max(self.i0, self.i1) >= len(system):
            raise ValueError("system has %d primaries, can't use primaries "
                             "%d and %d" % (len(system), self.i0, self.i1))

    def matches(self, nu):
        """True if the relative winding *nu* rounds to the target."""
        return math.isfinite(nu) and round(nu) == self.nu_target

    def to_json(self):
        return {'i0': self.i0, 'i1': self.i1, 'nu_target': self.nu_target}


class BiQuery:
    """What bi-hyperbolic solution to look for.

    The solution comes in from the direction *theta_minus* and escapes
    toward *theta_plus* with energy *h*, and belongs to the *tied* class (a
    :class:`TiedClass`). *radii* is a list of ``(|x|, |y|)`` pairs that
    the continuation goes through, and they must grow. The continuation
    has converged when successive solutions differ by less than
    *tol_position* and *tol_velocity* on a time *window* around the middle
    of the part near the primaries. None means a default that
    :func:`solve_bihyperbolic` picks for the system.
    """

    def __init__(self, h, theta_minus, theta_plus, tied, radii=None,
                 R2=None, window=None, tol_position=1e-5, tol_velocity=1e-4):
        if not h > 0:
            raise ValueError("h must be positive, not %r" % (h,))
        if not isinstance(tied, TiedClass):
            raise TypeError("tied must be a TiedClass, not %r" % (tied,))
        if radii is not None:
            radii = [(float(a), float(b)) for a, b in radii]
            if not radii:
                raise ValueError("radii must not be empty")
            for old, new in zip(radii, radii[1:]):
                if not (new[0] >= old[0] and new[1] >= old[1]
                        and new != old):
                    raise ValueError("radii must grow, got %r after %r"
                                     % (new, old))
        if window is not None and not window > 0:
            raise ValueError("window must be positive, not %r" % (window,))
        self.h = float(h)
        self.theta_minus = float(theta_minus) % (2 * math.pi)
        self.theta_plus = float(theta_plus) % (2 * math.pi)
        self.tied = tied
        self.radii = radii
        self.R2 = None if R2 is None else float(R2)
        self.window = None if window is None else float(window)
        self.tol_position = tol_position
        self.tol_velocity = tol_velocity

    def __repr__(self):
        return '<%s: h=%g, theta %g -> %g, %r>' % (
            type(self).__name__, self.h, self.theta_minus, self.theta_plus,
            self.tied)

    def to_json(self):
        return {'h': self.h, 'theta_minus': self.theta_minus,
                'theta_plus': self.theta_plus, 'tied': self.tied.to_json(),
                'radii': self.radii, 'R2': self.R2, 'window': self.window,
                'tol_position': self.tol_position,
                'tol_velocity': self.tol_velocity}


def _envelope_radius(system):
    # at least twice as far as any primary gets, plus one
    return max(system.R0, 2 * system.R0 - 1)


def _path_length(path):
    return float(np.sum(np.abs(np.diff(path.z))))


def crossing_times(path, R0):
    """Find when *path* first and last is at distance *R0* from the origin.

    Distances are interpolated linearly between nodes. If the path only
    touches the circle at one node, both times are the same.

    >>> path = Path([0, 1, 2, 3, 4], [3, 2, 1, 2, 3])
    >>> crossing_times(path, 2)
    CrossingTimes(s_x=1.0, s_y=3.0)
    >>> crossing_times(path, 0.5)
    Traceback (most recent call last):
      ...
    LookupError: path never gets closer than 0.5 to the origin
    """
    r = np.abs(path.z)
    inside = np.flatnonzero(r <= R0)
    if not inside.size:
        raise LookupError("path never gets closer than %g to the origin"
                          % R0)

    first = int(inside[0])
    if first == 0:
        s_x = path.start
    else:
        fraction = (r[first - 1] - R0) / (r[first - 1] - r[first])
        s_x = path.times[first - 1] + fraction * (
            path.times[first] - path.times[first - 1])

    last = int(inside[-1])
    if last == len(path) - 1:
        s_y = path.end
    else:
        fraction = (R0 - r[last]) / (r[last + 1] - r[last])
        s_y = path.times[last] + fraction * (
            path.times[last + 1] - path.times[last])
    return CrossingTimes(float(s_x), float(s_y))


def relative_winding(path, system, i0, i1, crossing):
    """How many more times *path* winds around primary *i0* than *i1*.

    Only the part of the path between the :class:`CrossingTimes` is used.
    The result is in full turns and it is positive for counter-clockwise
    winding around *i0*. A path is tied when the absolute value is at
    least one half. Raises :class:`hyperflow.RefinementNeeded` if the path
    turns too fast around a primary between two nodes.
    """
    if not crossing.s_y > crossing.s_x:
        return 0.0
    piece = path.segment(crossing.s_x, crossing.s_y)
    q = system.positions(piece.times)
    w0 = argument_increment(piece.z - q[:, i0])
    w1 = argument_increment(piece.z - q[:, i1])
    return (w0 - w1) / (2 * math.pi)


def _winding_of(path, system, tied, envelope, refinements=3):
    # like relative_winding, but refine the path if it's too coarse
    for attempt in range(refinements + 1):
        crossing = crossing_times(path, envelope)
        try:
            return relative_winding(path, system, tied.i0, tied.i1,
                                    crossing), crossing
        except hyperflow.RefinementNeeded:
            if attempt == refinements:
                raise
            path = path.refined()


def _unit(z):
    return z / abs(z) if z else 0j


def winding_penalty(system, tied, R):
    """Make a penalty function that pulls the relative winding to a target.

    The returned function takes a :class:`.Path` and returns ``(value,
    gradient)`` like :func:`.proximity_penalty` does. The value is
    ``(nu - tied.nu_target)**2``, where *nu* is the
    :func:`relative_winding` between the :func:`crossing_times` of radius
    *R*. Moving a node between the crossings doesn't change *nu*, so only
    the nodes next to the two crossings get a nonzero gradient. Paths must
    cross the radius *R* like :func:`crossing_times` requires.
    """
    def penalty(path):
        crossing = crossing_times(path, R)
        nu = relative_winding(path, system, tied.i0, tied.i1, crossing)
        miss = nu - tied.nu_target
        dnu = np.zeros(len(path), dtype=complex)
        if crossing.s_y > crossing.s_x:
            inside = np.flatnonzero(np.abs(path.z) <= R)
            first = int(inside[0])
            last = int(inside[-1])
            ends = [(-1, first - 1, first), (1, last, last + 1)]
            for sign, a, b in ends:
                # a crossing at the first or last node doesn't move
                if a >= 0 and b < len(path):
                    _crossing_gradient(system, tied, path, R, sign, a, b, dnu)
        return miss**2, 2 * miss * dnu[1:-1]

    return penalty


def _crossing_gradient(system, tied, path, R, sign, a, b, out):
    # the winding changes by sign*(arg(u - q0) - arg(u - q1))/2pi when the
    # crossing point u moves, and u and its time depend on nodes a and b
    za, zb = path.z[a], path.z[b]
    ra, rb = abs(za), abs(zb)
    ta, tb = path.times[a], path.times[b]
    f = (ra - R) / (ra - rb)
    s = np.array([ta + f * (tb - ta)])
    u = za + f * (zb - za)
    q = system.positions(s)[0]
    qdot = system.velocities(s)[0]

    du = 0j
    df = 0.0
    for index, weight in [(tied.i0, 1), (tied.i1, -1)]:
        w = u - q[index]
        du += weight / w
        df += weight * ((zb - za - qdot[index] * (tb - ta)) / w).imag
    du *= sign / (2 * math.pi)
    df *= sign / (2 * math.pi)

    # d arg(w) = Im(dw/w) has the gradient 1j/conj(w), and d|z| has z/|z|
    out[a] += ((1 - f) * 1j * np.conj(du)
               + df * (R - rb) / (ra - rb)**2 * _unit(za))
    out[b] += (f * 1j * np.conj(du)
               + df * (ra - R) / (ra - rb)**2 * _unit(zb))


def _loop_path(system, tied, x, y, times, a, b, radius, start, sweep):
    q = system.positions(times)[:, tied.i0]
    qa, qb = system.positions(np.array([a, b]))[:, tied.i0]
    pa = qa + radius * np.exp(1j * start)
    pb = qb + radius * np.exp(1j * (start + sweep))

    positions = np.empty(times.shape, dtype=complex)
    before = times < a
    after = times > b
    loop = ~before & ~after
    s = (times[before] - times[0]) / (a - times[0])
    positions[before] = x + s * (pa - x)
    phi = start + sweep * (times[loop] - a) / (b - a)
    positions[loop] = q[loop] + radius * np.exp(1j * phi)
    s = (times[after] - b) / (times[-1] - b)
    positions[after] = pb + s * (y - pb)
    positions[0] = x
    positions[-1] = y
    return Path(times, positions)


def tied_guess(system, x, y, t1, t2, tied, opts=None):
    """A path from *x* at *t1* to *y* at *t2* in the *tied* class.

    The path goes straight toward primary ``tied.i0`` during the first
    third of the time, loops around it on a circle of radius
    ``rho0/4`` during the second third, and goes straight to *y*. The
    number of loops is adjusted until the relative winding rounds to the
    target. Raises :class:`hyperflow.InitializationError` if that doesn't
    work or the path comes too close to a primary.
    """
    if opts is None:
        opts = Options()
    tied.check(system)
    x = _position(x)
    y = _position(y)
    if not t2 > t1:
        raise ValueError("t2 must be greater than t1, got t1=%r and t2=%r"
                         % (t1, t2))
    envelope = _envelope_radius(system)
    if min(abs(x), abs(y)) < envelope:
        raise ValueError("x and y must be at least %g from the origin, got "
                         "%r and %r" % (envelope, x, y))

    a = t1 + (t2 - t1) / 3
    b = t2 - (t2 - t1) / 3
    radius = 0.25 * system.rho0
    turns = abs(tied.nu_target) + 1
    loop_times = np.linspace(a, b, NODES_PER_TURN * turns + 1)
    times = _merge_times(time_grid(system, t1, t2, opts), loop_times)
    guard = guard_distance(system, opts)

    qa, qb = system.positions(np.array([a, b]))[:, tied.i0]
    base = np.angle(x - qa)
    beta = np.angle((y - qb) / (x - qa))
    for rotation in [0.0, math.pi / 2, -math.pi / 2]:
        start = base + rotation
        sweep = beta - rotation + 2 * math.pi * tied.nu_target
        nu = math.nan
        for adjustment in range(3):
            path = _loop_path(system, tied, x, y, times, a, b, radius,
                              start, sweep)
            try:
                nu, crossing = _winding_of(path, system, tied, envelope)
            except (hyperflow.RefinementNeeded, hyperflow.SingularityError):
                break
            if tied.matches(nu):
                break
            sweep += 2 * math.pi * (tied.nu_target - round(nu))
        else:
            continue

        if (tied.matches(nu)
                and min_primary_distance(system, path).d_min > 10 * guard):
            log.debug("tied guess on [%g, %g] winds %.3f turns", t1, t2, nu)
            return path

    raise hyperflow.InitializationError(
        "could not build a path from %r to %r on [%g, %g] that winds %d "
        "times more around primary %d than around primary %d"
        % (x, y, t1, t2, tied.nu_target, tied.i0, tied.i1))


def _tied_hooks(system, tied, opts, envelope):
    # the solver and initial hooks of minimize_free_time for a tied class
    def accept(path):
        try:
            crossing = crossing_times(path, envelope)
            nu = relative_winding(path, system, tied.i0, tied.i1, crossing)
        except (LookupError, hyperflow.RefinementNeeded,
                hyperflow.SingularityError):
            return False
        return tied.matches(nu)

    winding = winding_penalty(system, tied, envelope)
    proximity = proximity_penalty(system, [tied.i0, tied.i1],
                                  0.1 * system.length_scale)

    def penalty(path):
        value, gradient = winding(path)
        extra, extra_gradient = proximity(path)
        return value + extra, gradient + extra_gradient

    def initial(fixed, first):
        return [tied_guess(system, fixed.x, fixed.y, fixed.t1, fixed.t2,
                           tied, opts)]

    def solver(fixed, start):
        if not accept(start):
            # stretched warm starts can end up in another class
            start = initial(fixed, False)[0]
        return minimize_fixed_end(system, fixed, start, opts, accept=accept,
                                  penalty=penalty)

    return solver, initial


def _handle_collision(system, tied, h, opts, result):
    if result.status != 'collision-suspected':
        return result

    index = result.distance.index
    t0 = result.distance.time
    path = result.path
    if index not in (tied.i0, tied.i1):
        escaped = collision_escape(system, result, h, opts)
        if escaped is not result:
            escaped.periods = result.periods
            escaped.details = dict(result.details, **escaped.details)
        return escaped

    log.warning("tied minimizer collides with primary %d at t=%g", index, t0)
    result.details['tied_collision'] = True
    window = min(t0 - path.start, path.end - t0, 0.1 * system.period)
    try:
        event = fit_asymptotics(path, system, index, t0, window,
                                guard=10 * guard_distance(system, opts))
    except ValueError as e:
        log.warning("could not fit the collision: %s", e)
    else:
        result.details['collision_event'] = event.to_json()
    return result


def minimize_tied(system, x, y, tied, h, opts=None, guess=None, phases=None):
    """Minimize the free-time action from *x* to *y* in the *tied* class.

    Both the departure phase and the arrival phase are optimized: first on
    a grid of ``phase_grid**2`` phase pairs, and then with golden-section
    search on one phase at a time. For each phase pair, all durations are
    tried like in :func:`.minimize_free_time`. Descent steps that would
    change the relative winding are rejected. During the first
    iterations, :func:`winding_penalty` pulls the winding toward the target
    and the path is also pushed away from the two primaries. If
    *phases* is a ``(s1, s2)`` pair, only those phases are used.

    The result's ``details`` dict gets the ``winding``, the ``crossing``
    times, the ``phases`` and the path ``length``. With the
    ``compare_untied`` option, the least action without the winding
    constraint goes to ``details['untied_action']``. A collision with one
    of the two tied primaries is allowed, and it makes ``details`` contain
    ``tied_collision`` and a ``collision_event`` when the power law fit
    works. Collisions with other primaries go to :func:`.collision_escape`.
    """
    if opts is None:
        opts = Options()
    if not h > 0:
        raise ValueError("h must be positive, not %r" % (h,))
    tied.check(system)
    x = _position(x)
    y = _position(y)
    envelope = _envelope_radius(system)
    for name, point in [('x', x), ('y', y)]:
        if abs(point) < envelope:
            raise ValueError("%s must be at least %g from the origin, got %r"
                             % (name, envelope, point))

    solver, initial = _tied_hooks(system, tied, opts, envelope)
    period = system.period

    def solve(s1, offset):
        problem = FreeTimeProblem(x, y, s1, (s1 + offset) % period, h)
        result = minimize_free_time(system, problem, opts, guess, solver,
                                    initial)[0]
        result.details['phases'] = (s1, problem.s2)
        return result

    if phases is not None:
        s1, s2 = (float(phase) for phase in phases)
        best = solve(s1, s2 - s1)
    else:
        count = opts['phase_grid']
        step = period / count
        cells = [(j * step, k * step)
                 for j in range(count) for k in range(count)]
        results = map_concurrently(lambda cell: solve(*cell), cells)
        index = min(range(len(cells)), key=lambda i: results[i].action)
        (s1, offset), best = cells[index], results[index]
        log.info("phase grid: best phases (%g, %g), action %.12g",
                 s1, (s1 + offset) % period, best.action)

        if count > 1:
            iterations = opts['golden_iter']
            u, result = golden_section(lambda u: solve(u, offset),
                                       s1 - step, s1 + step, iterations)
            if result.action < best.action:
                s1, best = u, result
            u, result = golden_section(lambda u: solve(s1, u),
                                       offset - step, offset + step,
                                       iterations)
            if result.action < best.action:
                offset, best = u, result

    best = _handle_collision(system, tied, h, opts, best)
    nu, crossing = _winding_of(best.path, system, tied, envelope)
    length = _path_length(best.path)
    best.details.update(winding=nu, tied=abs(nu) >= TIED_THRESHOLD,
                        crossing=crossing._asdict(), length=length)
    if not tied.matches(nu):
        log.warning("tied minimizer winds %.3f times, expected %d",
                    nu, tied.nu_target)
    if length < MIN_TIED_LENGTH:
        log.warning("tied minimizer is only %g long", length)

    if opts['compare_untied']:
        s1, s2 = best.details['phases']
        untied = minimize_free_time(
            system, FreeTimeProblem(x, y, s1, s2, h), opts,
            guess=best.path)[0]
        best.details['untied_action'] = untied.action
        if best.action < untied.action:
            log.warning("tied action %.12g is less than the untied action "
                        "%.12g, the untied search missed a minimum",
                        best.action, untied.action)

    log.info("tied minimum: action %.12g, winding %.4f, %s",
             best.action, nu, best.status)
    return best


class BiHyperbolicSolution:
    """A bi-hyperbolic solution found by :func:`solve_bihyperbolic`.

    .. attribute:: minus
                   plus

        :class:`EscapeEnd` tuples for the incoming and the outgoing end.

    .. attribute:: crossing

        The :class:`CrossingTimes` of the solution.

    .. attribute:: winding

        The relative winding, see :func:`relative_winding`.

    .. attribute:: dips

        How many separate times the path comes closer to a primary than
        the collision guard.

    .. attribute:: verified

        True if escape is certified at both ends.
    """

    def __init__(self, query, system, result, minus, plus, history, dips):
        self.query = query
        self.system = system
        self.result = result
        self.path = result.path
        self.action = result.action
        self.minus = minus
        self.plus = plus
        self.history = history
        self.dips = dips
        self.crossing = CrossingTimes(**result.details['crossing'])
        self.winding = result.details['winding']
        self.tied = query.tied.matches(self.winding)
        self.untied_action = result.details.get('untied_action')
        self.verified = bool(minus.certificate.valid
                             and plus.certificate.valid)
        try:
            self.el_residual = el_residual(system, self.path)
        except (ValueError, hyperflow.SingularityError):
            self.el_residual = math.nan
        self.distance = min_primary_distance(system, self.path)

    def __repr__(self):
        state = 'verified' if self.verified else 'unverified'
        return '<%s: %s, winding %.3f, %d steps>' % (
            type(self).__name__, state, self.winding, len(self.history))

    @property
    def brackets(self):
        """``(s_y - s_x, tau_y - s_y, s_x - tau_x)`` for every step."""
        return [(step.s_y - step.s_x, step.tau_y - step.s_y,
                 step.s_x - step.tau_x) for step in self.history]

    def _end_json(self, end, theta):
        estimate = None
        if end.estimate is not None:
            estimate = end.estimate._asdict()
            estimate['theta_inf_mod_2pi'] = (
                end.estimate.theta_inf % (2 * math.pi))
            estimate['theta_target'] = theta
            estimate['v_target'] = math.sqrt(2 * self.query.h)
        return {
            'certificate': end.certificate._asdict(),
            'omega_bound': (None if end.omega_bound is None
                            else end.omega_bound._asdict()),
            'estimate': estimate,
        }

    def to_json(self):
        return {
            'query': self.query.to_json(),
            'verified': self.verified,
            'action': self.action,
            'untied_action': self.untied_action,
            'winding': self.winding,
            'tied': self.tied,
            'crossing': self.crossing._asdict(),
            'dips': self.dips,
            'el_residual': self.el_residual,
            'd_min': self.distance._asdict(),
            'collision_event': self.result.details.get('collision_event'),
            'minus': self._end_json(self.minus, self.query.theta_minus),
            'plus': self._end_json(self.plus, self.query.theta_plus),
            'brackets': [list(item) for item in self.brackets],
            'history': [step._asdict() for step in self.history],
        }


def _default_plan(system, count=8):
    # (R2, radii) when the query doesn't say
    R2 = max(2 * math.sqrt(2) * system.far_field.R1,
             _envelope_radius(system))
    return R2, [(R2 * 2**n, R2 * 2**n) for n in range(1, count + 1)]


def _outer_times(path, crossing, R2):
    # tau_x and tau_y around the crossing times
    if crossing.s_y < path.end:
        tau_y = first_exit_time(path.segment(crossing.s_y, path.end), R2)
    else:
        tau_y = path.end
    if crossing.s_x > path.start:
        before = path.segment(path.start, crossing.s_x).reflected(crossing.s_x)
        tau_x = 2 * crossing.s_x - first_exit_time(before, R2)
    else:
        tau_x = path.start
    return tau_x, tau_y


def _outer_floor_ok(system, path, tau_x, tau_y, R2):
    floor = math.sqrt(1.5 * system.total_mass / R2)
    series = polar_series(path)
    outward = series.rdot[series.times >= tau_y]
    inward = series.rdot[series.times <= tau_x]
    ok = True
    if outward.size and np.min(outward) < floor:
        log.warning("radial velocity %g after t=%g is below %g",
                    np.min(outward), tau_y, floor)
        ok = False
    if inward.size and np.max(inward) > -floor:
        log.warning("radial velocity %g before t=%g is above %g",
                    np.max(inward), tau_x, -floor)
        ok = False
    return ok


def _count_dips(system, path, guard):
    # separate runs of nodes closer than guard to some primary
    q = system.positions(path.times)
    near = np.min(np.abs(path.z[:, np.newaxis] - q), axis=1) < guard
    dips = int(near[0]) + int(np.count_nonzero(near[1:] & ~near[:-1]))
    if dips == 0 and min_primary_distance(system, path).d_min < guard:
        dips = 1
    return dips


def _extended_guess(system, previous, h, theta_minus, theta_plus, rx, ry):
    # previous solution with radial Kepler legs added to the ends that moved
    m = system.total_mass
    spacing = system.period / 64
    guess = previous
    if ry > abs(previous.z[-1]) * (1 + 1e-12):
        tail = _kepler_tail(m, h, theta_plus, abs(previous.z[-1]), ry,
                            previous.end, spacing)
        guess = concatenate(guess, tail)
    if rx > abs(previous.z[0]) * (1 + 1e-12):
        head = _kepler_tail(m, h, theta_minus, abs(previous.z[0]), rx, 0.0,
                            spacing)
        guess = concatenate(head.reflected(0.0).shifted(previous.start),
                            guess)
    return guess


def _central_change(system, old, old_center, new, new_center, window, opts):
    # compare on a window around the middle, moving old by whole periods
    period = system.period
    old = old.shifted(round((new_center - old_center) / period) * period)
    start = max(new_center - window / 2, old.start, new.start)
    return _window_change(old, new, start, window, system, opts)


def solve_bihyperbolic(system, query, opts=None):
    """Find a bi-hyperbolic solution in the query's tied class.

    Tied minimizers from ``|x|*e^(i*theta_minus)`` to
    ``|y|*e^(i*theta_plus)`` are computed with :func:`minimize_tied` for
    the radius pairs of the query. Each one is warm started from the
    previous one with radial Kepler legs added to both ends. When two
    successive minimizers agree on the window around the middle of their
    crossing times, the last one is returned as a
    :class:`BiHyperbolicSolution` with escape estimates for both ends.
    Raises :class:`hyperflow.ContinuationError` with the history if that
    doesn't happen.
    """
    if opts is None:
        opts = Options()
    query.tied.check(system)
    R2, radii = _default_plan(system)
    if query.R2 is not None:
        R2 = query.R2
    if query.radii is not None:
        radii = query.radii
    if min(min(pair) for pair in radii) <= R2:
        raise ValueError("radii must be bigger than R2 = %g" % R2)
    window = query.window or 2 * system.period
    envelope = _envelope_radius(system)

    history = []
    previous = previous_center = None
    for n, (rx, ry) in enumerate(radii, start=1):
        x = ray_target(query.theta_minus, rx)
        y = ray_target(query.theta_plus, ry)
        guess = None
        if previous is not None:
            guess = _extended_guess(system, previous.path, query.h,
                                    query.theta_minus, query.theta_plus,
                                    rx, ry)

        result = minimize_tied(system, x, y, query.tied, query.h, opts,
                               guess=guess)
        path = result.path
        crossing = crossing_times(path, envelope)
        center = 0.5 * (crossing.s_x + crossing.s_y)
        tau_x, tau_y = _outer_times(path, crossing, R2)
        floor_ok = _outer_floor_ok(system, path, tau_x, tau_y, R2)

        change = None
        if previous is not None:
            change = _central_change(system, previous.path, previous_center,
                                     path, center, window, opts)
        history.append(BiStep(
            n, (rx, ry), result.action, result.details['winding'],
            crossing.s_x, crossing.s_y, tau_x, tau_y, path.duration,
            result.details['phases'], result.periods, floor_ok, change,
            result.status, result.details.get('untied_action')))
        log.info("bi-hyperbolic step %d: radii (%g, %g), action %.10g, "
                 "winding %.3f, window change %s", n, rx, ry, result.action,
                 result.details['winding'], change)

        if (change is not None and change[0] < query.tol_position
                and change[1] < query.tol_velocity):
            break
        previous, previous_center = result, center
    else:
        raise hyperflow.ContinuationError(
            "no convergence after %d radius pairs, last window change %s"
            % (len(radii), history[-1].window_change), history)

    plus = EscapeEnd(*estimate_asymptotics(polar_series(path), system))
    minus = EscapeEnd(*estimate_asymptotics(
        polar_series(path.reflected(center)),
        reflect_system(system, center)))
    for name, end in [('incoming', minus), ('outgoing', plus)]:
        if not end.certificate.valid:
            log.warning("escape of the %s end could not be certified", name)

    dips = _count_dips(system, path, guard_distance(system, opts))
    if dips > 1:
        log.warning("solution comes near primaries %d separate times", dips)
    return BiHyperbolicSolution(query, system, result, minus, plus, history,
                                dips)
