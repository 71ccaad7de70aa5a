import collections
import logging
import math

import numpy as np

import hyperflow
from hyperflow._action import concatenate, min_primary_distance
from hyperflow._asymptotics import estimate_asymptotics, polar_series
from hyperflow._config import Options
from hyperflow._ephemeris import blow_up_system, reflect_system
from hyperflow._minimize import (
    collision_escape, free_time_action_bound, optimize_arrival_phase,
    time_grid)
from hyperflow._path import Path
from hyperflow._verify import el_residual, radial_kepler_time

log = logging.getLogger(__name__)

ContinuationStep = collections.namedtuple('ContinuationStep', [
    'n', 'radius', 'action', 'action_bound', 'bound_ok', 'tau_y',
    'duration', 'arrival_phase', 'periods', 'floor_ok', 'window_change',
    'status'])
ContinuationStep.__doc__ = """One step of a continuation.

``window_change`` is a ``(positions, velocities)`` pair of the largest
changes on the convergence window compared to the previous step, or None
for the first step. ``bound_ok`` and ``floor_ok`` tell whether the action
bound and the radial velocity floor held.
"""

# most tail nodes in a warm start, it is resampled anyway
MAX_TAIL_NODES = 512


def _position(value):
    if isinstance(value, (tuple, list)):
        return complex(*value)
    return complex(value)


class HyperbolicQuery:
    """What hyperbolic solution to look for.

    The solution starts at *x* at time *t_x*, and escapes with energy *h*
    toward the angle *theta* (or arrives from that angle, for *direction*
    ``'backward'``). Angles are reduced modulo ``2*pi``.
    """

    def __init__(self, h, theta, x, t_x=0.0, direction='forward'):
        if not h > 0:
            raise ValueError("h must be positive, not %r" % (h,))
        if direction not in ('forward', 'backward'):
            raise ValueError("direction must be 'forward' or 'backward', "
                             "not %r" % (direction,))
        self.h = float(h)
        self.theta = float(theta) % (2 * math.pi)
        self.x = _position(x)
        self.t_x = float(t_x)
        self.direction = direction

    def __repr__(self):
        return '<%s: %s, h=%g, theta=%g, x=%r, t_x=%g>' % (
            type(self).__name__, self.direction, self.h, self.theta,
            self.x, self.t_x)

    def to_json(self):
        return {'h': self.h, 'theta': self.theta,
                'x': [self.x.real, self.x.imag], 't_x': self.t_x,
                'direction': self.direction}


class ContinuationSchedule:
    """Radii of the targets that a continuation goes through.

    *R2* is the inner radius, *radii* is an increasing list of target
    distances from the origin, and *window* is the length of the time
    window after the start where successive solutions are compared.
    The continuation has converged when positions change less than
    *tol_position* and velocities less than *tol_velocity* there.
    """

    def __init__(self, R2, radii, window, tol_position=1e-5,
                 tol_velocity=1e-4):
        radii = [float(radius) for radius in radii]
        if not radii:
            raise ValueError("the schedule needs at least one radius")
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("radii must be strictly increasing, got %r"
                             % (radii,))
        if not radii[0] > R2 > 0:
            raise ValueError("radii must be bigger than R2 = %r > 0" % (R2,))
        if not window > 0:
            raise ValueError("window must be positive, not %r" % (window,))
        self.R2 = float(R2)
        self.radii = radii
        self.window = float(window)
        self.tol_position = tol_position
        self.tol_velocity = tol_velocity

    def __repr__(self):
        return '<%s: R2=%g, %d radii up to %g>' % (
            type(self).__name__, self.R2, len(self.radii), self.radii[-1])

    def check(self, system, x):
        """Raise :class:`ValueError` if *R2* is too small for the system."""
        needed = max(2 * math.sqrt(2) * system.far_field.R1, abs(x) + 1)
        if self.R2 < needed * (1 - 1e-12):
            raise ValueError("R2 must be at least %g, not %g"
                             % (needed, self.R2))

    def scaled(self, length, time):
        return ContinuationSchedule(
            self.R2 * length, [radius * length for radius in self.radii],
            self.window * time, self.tol_position * length,
            self.tol_velocity * length / time)

    def to_json(self):
        return {'R2': self.R2, 'radii': self.radii, 'window': self.window,
                'tol_position': self.tol_position,
                'tol_velocity': self.tol_velocity}


def default_schedule(system, x, count=8):
    """The default :class:`ContinuationSchedule` for starting at *x*.

    ``R2 = max(2*sqrt(2)*R1, |x| + 1)``, the radii are ``R2*2**n`` for
    ``n = 1, ..., count``, and the window is two periods.
    """
    R2 = max(2 * math.sqrt(2) * system.far_field.R1, abs(_position(x)) + 1)
    return ContinuationSchedule(R2, [R2 * 2**n for n in range(1, count + 1)],
                                2 * system.period)


class HyperbolicSolution:
    """A hyperbolic solution found by continuation.

    .. attribute:: path

        The solution as a :class:`.Path` that starts at *x* (or ends there,
        for backward solutions).

    .. attribute:: certificate
                   omega_bound
                   estimate

        The :class:`.EscapeCertificate`, :class:`.OmegaBound` and
        :class:`.AsymptoticEstimate` of the escaping end. For backward
        solutions, these describe the path with time reversed.

    .. attribute:: history

        A list of :class:`ContinuationStep` objects.

    .. attribute:: verified

        False if escape could not be certified. The solution is returned
        anyway, but it may not be hyperbolic.
    """

    def __init__(self, query, system, path, result, certificate,
                 omega_bound, estimate, history, action=None):
        self.query = query
        self.system = system
        self.path = path
        self.result = result
        self.certificate = certificate
        self.omega_bound = omega_bound
        self.estimate = estimate
        self.history = history
        self.action = result.action if action is None else action
        self.verified = bool(certificate.valid)
        try:
            self.el_residual = el_residual(system, path)
        except (ValueError, hyperflow.SingularityError):
            self.el_residual = math.nan
        self.distance = min_primary_distance(system, path)

    def __repr__(self):
        state = 'verified' if self.verified else 'unverified'
        return '<%s: %s, %d steps>' % (type(self).__name__, state,
                                       len(self.history))

    @property
    def target_velocity(self):
        """``+-sqrt(2h)`` times the unit vector toward theta."""
        sign = 1 if self.query.direction == 'forward' else -1
        return sign * math.sqrt(2 * self.query.h) * complex(
            math.cos(self.query.theta), math.sin(self.query.theta))

    def to_json(self):
        estimate = None
        if self.estimate is not None:
            estimate = self.estimate._asdict()
            estimate['theta_inf_mod_2pi'] = (
                self.estimate.theta_inf % (2 * math.pi))
            estimate['v_target'] = math.sqrt(2 * self.query.h)
        return {
            'query': self.query.to_json(),
            'verified': self.verified,
            'action': self.action,
            'el_residual': self.el_residual,
            'd_min': self.distance._asdict(),
            'certificate': self.certificate._asdict(),
            'omega_bound': (None if self.omega_bound is None
                            else self.omega_bound._asdict()),
            'estimate': estimate,
            'history': [step._asdict() for step in self.history],
        }


def ray_target(theta, R):
    """Return the point at distance *R* from the origin in direction *theta*.

    >>> ray_target(0, 5)
    (5+0j)
    """
    if not R > 0:
        raise ValueError("R must be positive, not %r" % (R,))
    return R * complex(math.cos(theta), math.sin(theta))


def first_exit_time(path, R2):
    """When the path first reaches distance *R2* from the origin.

    The distance is interpolated linearly between nodes. Paths that start
    outside *R2* give their start time. Raises :class:`LookupError` if the
    path never gets that far.
    """
    r = np.abs(path.z)
    outside = np.flatnonzero(r >= R2)
    if not outside.size:
        raise LookupError("path never reaches distance %g" % R2)
    k = int(outside[0])
    if k == 0:
        return path.start
    fraction = (R2 - r[k - 1]) / (r[k] - r[k - 1])
    return float(path.times[k - 1]
                 + fraction * (path.times[k] - path.times[k - 1]))


def _kepler_tail(m, h, theta, r_start, r_end, t_start, spacing):
    # radial Kepler escape from r_start to r_end, starting at t_start
    offset = radial_kepler_time(m, h, r_start)
    duration = radial_kepler_time(m, h, r_end) - offset
    count = min(MAX_TAIL_NODES, max(2, math.ceil(duration / spacing)))
    r = np.linspace(r_start, r_end, count + 1)
    times = t_start + np.array([radial_kepler_time(m, h, radius) - offset
                                for radius in r])
    return Path(times, r * complex(math.cos(theta), math.sin(theta)))


def _window_change(old, new, t_start, window, system, opts):
    # largest position and velocity changes on [t_start, t_start + window]
    end = min(t_start + window, old.end, new.end)
    times = time_grid(system, t_start, end, opts)
    dz = np.max(np.abs(old.at(times) - new.at(times)))
    old_v = old.node_velocities()
    new_v = new.node_velocities()
    dv = np.max(np.abs(
        np.interp(times, old.times, old_v.real)
        + 1j * np.interp(times, old.times, old_v.imag)
        - np.interp(times, new.times, new_v.real)
        - 1j * np.interp(times, new.times, new_v.imag)))
    return float(dz), float(dv)


def _radial_floor_ok(system, path, tau_y, R2):
    floor = math.sqrt(1.5 * system.total_mass / R2)
    series = polar_series(path)
    after = series.times >= tau_y
    if not np.any(after):
        return True
    lowest = float(np.min(series.rdot[after]))
    if lowest < floor:
        log.warning("radial velocity %g after t=%g is below the floor %g",
                    lowest, tau_y, floor)
        return False
    return True


def _continue(system, query, schedule, opts):
    # the continuation on a unit period system with 0 <= t_x < 1
    m = system.total_mass
    R1 = system.far_field.R1
    x = query.x
    history = []
    previous = None
    spacing = system.period / opts['nodes_per_period']

    for n, radius in enumerate(schedule.radii, start=1):
        y = ray_target(query.theta, radius)
        guess = None
        if previous is not None:
            tail = _kepler_tail(m, query.h, query.theta, abs(previous.z[-1]),
                                radius, previous.end, spacing)
            guess = concatenate(previous, tail)

        s2, result = optimize_arrival_phase(system, x, y, query.t_x, query.h,
                                            opts, guess=guess)
        if result.status == 'collision-suspected':
            result = collision_escape(system, result, query.h, opts)
        path = result.path

        bound = free_time_action_bound(radius, query.h, m, R1)
        bound_ok = result.action <= bound
        if not bound_ok:
            log.warning("action %g at radius %g is above the bound %g",
                        result.action, radius, bound)
        tau_y = first_exit_time(path, schedule.R2)
        floor_ok = _radial_floor_ok(system, path, tau_y, schedule.R2)

        change = None
        if previous is not None:
            change = _window_change(previous, path, query.t_x,
                                    schedule.window, system, opts)
        history.append(ContinuationStep(
            n, radius, result.action, bound, bound_ok, tau_y, path.duration,
            s2, result.periods, floor_ok, change, result.status))
        log.info("continuation step %d: radius %g, action %.10g, duration "
                 "%g, window change %s", n, radius, result.action,
                 path.duration, change)

        if (change is not None and change[0] < schedule.tol_position
                and change[1] < schedule.tol_velocity):
            return result, history
        previous = path

    raise hyperflow.ContinuationError(
        "no convergence after %d radii, last window change %s"
        % (len(schedule.radii), history[-1].window_change), history)


def _scale_step(step, length, time):
    # convert a step to the units of a system blown up by 1/time
    change = step.window_change
    if change is not None:
        change = (change[0] * length, change[1] * length / time)
    return step._replace(
        radius=step.radius * length, action=step.action * length**2 / time,
        action_bound=step.action_bound * length**2 / time,
        tau_y=step.tau_y * time, duration=step.duration * time,
        arrival_phase=step.arrival_phase * time, window_change=change)


def rescale_general_period(solution, scale, system=None):
    """Map a solution of a blown up system back to the original system.

    *solution* is a :class:`HyperbolicSolution` of the system blown up by
    *scale* (see :func:`.blow_up_system`). Times get divided by *scale*,
    positions get multiplied by ``scale**(-2/3)`` and velocities by
    ``scale**(1/3)``, so the energy becomes ``scale**(2/3)`` times the
    blown up energy. *system* is the original system, and it defaults to
    the solution's system blown up by ``1/scale``.
    """
    if not scale > 0:
        raise ValueError("scale must be positive, not %r" % (scale,))
    if scale == 1:
        return solution
    if system is None:
        system = blow_up_system(solution.system, 1 / scale)

    length = scale**(-2/3)
    time = 1 / scale
    speed = length / time
    path = solution.path
    velocities = None
    if path.velocities is not None:
        velocities = path.velocities * speed
    new_path = Path(path.times * time, path.z * length, velocities)

    query = solution.query
    new_query = HyperbolicQuery(query.h * speed**2, query.theta,
                                query.x * length, query.t_x * time,
                                query.direction)

    certificate = solution.certificate._replace(
        t1=solution.certificate.t1 * time,
        r1=solution.certificate.r1 * length,
        rdot1=solution.certificate.rdot1 * speed,
        threshold=solution.certificate.threshold * speed,
        v_floor=solution.certificate.v_floor * speed,
        violations=[t * time for t in solution.certificate.violations])
    omega_bound = estimate = None
    if solution.omega_bound is not None:
        omega_bound = solution.omega_bound._replace(
            bound=solution.omega_bound.bound * length * speed,
            measured_sup=solution.omega_bound.measured_sup * length * speed)
    if solution.estimate is not None:
        estimate = solution.estimate._replace(
            v_inf=solution.estimate.v_inf * speed,
            v_error=solution.estimate.v_error * speed,
            omega_bound=solution.estimate.omega_bound * length * speed)

    result = solution.result
    history = [_scale_step(step, length, time) for step in solution.history]
    return HyperbolicSolution(new_query, system, new_path, result,
                              certificate, omega_bound, estimate, history,
                              solution.action * length**2 / time)


def solve_forward(system, query, schedule=None, opts=None):
    """Find a solution that starts at ``query.x`` and escapes toward
    ``query.theta`` with energy ``query.h``.

    Free-time minimizers from *x* to points farther and farther along the
    ray are computed, each warm started from the previous one extended
    with a Kepler escape. When two successive minimizers agree on the
    schedule's window, the last one is returned as a
    :class:`HyperbolicSolution`. Raises :class:`hyperflow.ContinuationError`
    if that doesn't happen.

    Systems whose period is not 1 are blown up to period 1 for the
    computation, and the result is mapped back with
    :func:`rescale_general_period`. The default *schedule* comes from
    :func:`default_schedule`.

    Every :class:`ContinuationStep` in the history says whether the action
    stayed below :func:`.free_time_action_bound` (``bound_ok``) and whether
    the radial velocity stayed above the escape floor after leaving the
    radius ``R2`` (``floor_ok``). A failed check is logged as a warning and
    the continuation goes on, so callers that need the checks look at the
    history.
    """
    if opts is None:
        opts = Options()
    if schedule is None:
        schedule = default_schedule(system, query.x)
    schedule.check(system, query.x)

    if not 0 <= query.t_x < system.period:
        raise ValueError("t_x must be in [0, %g), not %r"
                         % (system.period, query.t_x))
    scale = 1 / system.period
    unit = blow_up_system(system, scale)
    length = scale**(2/3)
    unit_query = HyperbolicQuery(query.h * scale**(-2/3), query.theta,
                                 query.x * length, query.t_x * scale)
    unit_schedule = schedule.scaled(length, scale)

    try:
        result, history = _continue(unit, unit_query, unit_schedule, opts)
    except hyperflow.ContinuationError as e:
        e.history = [_scale_step(step, 1 / length, 1 / scale)
                     for step in e.history]
        raise

    certificate, omega_bound, estimate = estimate_asymptotics(
        polar_series(result.path), unit)
    if not certificate.valid:
        log.warning("escape could not be certified, returning an unverified "
                    "solution")
    solution = HyperbolicSolution(unit_query, unit, result.path, result,
                                  certificate, omega_bound, estimate,
                                  history)
    return rescale_general_period(solution, scale, system)


def solve_backward(system, query, schedule=None, opts=None):
    """Like :func:`solve_forward`, but for a solution that arrives at
    ``query.x`` at time ``query.t_x`` from the direction ``query.theta``.

    The motion of the primaries is reversed in time around ``t_x``, a
    forward solution is computed for that, and it is reversed back.
    """
    reversed_system = reflect_system(system, query.t_x)
    forward = HyperbolicQuery(query.h, query.theta, query.x, query.t_x)
    solution = solve_forward(reversed_system, forward, schedule, opts)
    backward_query = HyperbolicQuery(query.h, query.theta, query.x,
                                     query.t_x, 'backward')
    return HyperbolicSolution(
        backward_query, system, solution.path.reflected(query.t_x),
        solution.result, solution.certificate, solution.omega_bound,
        solution.estimate, solution.history, solution.action)
