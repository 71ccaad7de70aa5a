import logging
import math

import numpy as np

import hyperflow
from hyperflow._action import action, min_primary_distance, quadrature_plan
from hyperflow._config import Options
from hyperflow._ephemeris import blow_up_system, make_static_center
from hyperflow._minimize import (
    FixedEndProblem, minimize_fixed_end, proximity_penalty)
from hyperflow._path import Path

log = logging.getLogger(__name__)

# fraction of the blown up window where the deformation fades out
COLLAR_FRACTION = 0.05


def _unit(value, name):
    value = complex(*value) if isinstance(value, (tuple, list)) else complex(
        value)
    if abs(abs(value) - 1) > 1e-9:
        raise ValueError("%s must be a unit vector, got %r with length %g"
                         % (name, value, abs(value)))
    return value / abs(value)


def _finite_or_none(value):
    return float(value) if math.isfinite(value) else None


class CollisionEvent:
    """A collision or near-collision of a path with a primary.

    .. attribute:: t0

        Time of the collision.

    .. attribute:: i0

        Index of the primary.

    .. attribute:: sigma_minus
                   sigma_plus

        Unit vectors (complex numbers) that the path approaches from and
        leaves toward, relative to the primary.

    .. attribute:: E0

        The binary energy (see :func:`binary_energy`) near the collision,
        or NaN if it wasn't measured.

    .. attribute:: exponent
                   coefficient

        The fitted power law ``|z - q| = coefficient*|t - t0|**exponent``.
        For genuine collisions these approach 2/3 and ``(9m/2)**(1/3)``.

    .. attribute:: residuals

        A dict with the largest relative deviation from the fitted law on
        each side of the collision.
    """

    def __init__(self, t0, i0, sigma_minus, sigma_plus, E0=math.nan,
                 exponent=2/3, coefficient=math.nan, residuals=None):
        self.t0 = float(t0)
        self.i0 = int(i0)
        self.sigma_minus = _unit(sigma_minus, 'sigma_minus')
        self.sigma_plus = _unit(sigma_plus, 'sigma_plus')
        self.E0 = E0
        self.exponent = exponent
        self.coefficient = coefficient
        self.residuals = {} if residuals is None else residuals

    def __repr__(self):
        return '<%s: primary %d at t=%g, exponent %.4g>' % (
            type(self).__name__, self.i0, self.t0, self.exponent)

    def to_json(self):
        return {
            't0': self.t0,
            'i0': self.i0,
            'sigma_minus': [self.sigma_minus.real, self.sigma_minus.imag],
            'sigma_plus': [self.sigma_plus.real, self.sigma_plus.imag],
            'E0': _finite_or_none(self.E0),
            'exponent': _finite_or_none(self.exponent),
            'coefficient': _finite_or_none(self.coefficient),
            'residuals': {key: _finite_or_none(value)
                          for key, value in self.residuals.items()},
        }


class BlowUpFrame:
    """A path and a system seen through the blow-up around a time.

    Times become ``scale*(t - t0)`` and positions get multiplied by
    ``scale**(2/3)``. The *plan* is the quadrature plan of the original
    path, and :meth:`action` uses it so that the blown up action is
    exactly comparable with the original one.
    """

    def __init__(self, scale, t0, path, system, plan):
        self.scale = scale
        self.t0 = t0
        self.path = path
        self.system = system
        self.plan = plan

    def __repr__(self):
        return '<%s: scale %g around t=%g>' % (
            type(self).__name__, self.scale, self.t0)

    def action(self, h=0.0, order=4):
        if self.system is None:
            raise ValueError("this frame has no system")
        return action(self.system, self.path, h, self.plan, order)


def relative_path(path, system, i0):
    """Return *path* as seen from primary *i0*.

    Velocities are made relative too if the path has them.
    """
    q = system.positions(path.times)[:, i0]
    velocities = None
    if path.velocities is not None:
        velocities = path.velocities - system.velocities(path.times)[:, i0]
    return Path(path.times, path.z - q, velocities)


def absolute_path(relative, system, i0):
    """The inverse of :func:`relative_path`."""
    q = system.positions(relative.times)[:, i0]
    velocities = None
    if relative.velocities is not None:
        velocities = (relative.velocities
                      + system.velocities(relative.times)[:, i0])
    return Path(relative.times, relative.z + q, velocities)


def argument_increment(values):
    """Total change of the argument along an array of complex numbers.

    Consecutive values are assumed to turn less than half a turn, so this
    raises :class:`hyperflow.RefinementNeeded` if some step turns exactly
    half a turn, and :class:`hyperflow.SingularityError` for zeros.

    >>> import numpy as np
    >>> loop = np.exp(2j * np.pi * np.linspace(0, 1, 9))
    >>> round(argument_increment(loop) / np.pi, 12)
    2.0
    """
    values = np.asarray(values, dtype=complex)
    if np.any(values == 0):
        raise hyperflow.SingularityError("argument of zero")
    steps = np.angle(values[1:] / values[:-1])
    if np.any(np.abs(steps) >= math.pi - 1e-12):
        raise hyperflow.RefinementNeeded(
            "consecutive values turn by half a turn, the grid is too coarse")
    return float(math.fsum(steps))


def binary_energy(path, system, i0, t):
    """The Kepler energy of the path relative to primary *i0* at time *t*.

    This is ``|v|**2/2 - m/|z|`` where *z* and *v* are the position and
    velocity relative to the primary. Velocities come from the path if it
    has them, and from differences otherwise. Between nodes, the energy is
    interpolated linearly.
    """
    relative = relative_path(path, system, i0)
    z = relative.z
    t = np.asarray(t, dtype=float)
    if np.any((t < path.start) | (t > path.end)):
        raise ValueError("t is outside [%g, %g]" % (path.start, path.end))

    right = np.clip(np.searchsorted(path.times, t), 1, len(path) - 1)
    for index in np.unique(np.concatenate([np.ravel(right - 1),
                                           np.ravel(right)])):
        if z[index] == 0:
            raise hyperflow.SingularityError(
                "path is at primary %d at t=%g" % (i0, path.times[index]),
                i0, float(path.times[index]))

    with np.errstate(divide='ignore'):
        velocities = relative.node_velocities()
        energies = (0.5 * np.abs(velocities)**2
                    - system.masses[i0] / np.abs(z))
    energies = np.where(np.isfinite(energies), energies, 0.0)
    result = np.interp(t, path.times, energies)
    return result.item() if result.ndim == 0 else result


def homothetic_coefficient(m):
    return (4.5 * m)**(1/3)


def homothetic_action(m, T):
    """The action of :func:`parabolic_homothetic` on ``[-T, T]``.

    >>> round(homothetic_action(6, 1), 9)
    24.0
    """
    if not (m > 0 and T > 0):
        raise ValueError("m and T must be positive, got %r and %r" % (m, T))
    return 12 * m * T**(1/3) / homothetic_coefficient(m)


def parabolic_homothetic(m, sigma_minus, sigma_plus, T_half, nodes=64):
    """The parabolic collision-ejection solution of the Kepler problem.

    The position is ``(9m/2)**(1/3) |s|**(2/3)`` times *sigma_minus* for
    ``s <= 0`` and times *sigma_plus* for ``s >= 0``, on ``[-T_half,
    T_half]``. Each side has *nodes* segments, spaced so that the distance
    to the origin grows by the same amount on every segment.

    >>> path = parabolic_homothetic(2/9, 1, 1, 1.0)
    >>> round(abs(path.z[-1]), 12)
    1.0
    """
    sigma_minus = _unit(sigma_minus, 'sigma_minus')
    sigma_plus = _unit(sigma_plus, 'sigma_plus')
    if not T_half > 0:
        raise ValueError("T_half must be positive, not %r" % (T_half,))
    if nodes < 1:
        raise ValueError("need at least 1 node per side, not %d" % nodes)

    s = T_half * (np.arange(1, nodes + 1) / nodes)**1.5
    c = homothetic_coefficient(m)
    times = np.concatenate([-s[::-1], [0.0], s])
    positions = np.concatenate([c * s[::-1]**(2/3) * sigma_minus, [0j],
                                c * s**(2/3) * sigma_plus])
    return Path(times, positions)


def _side_fit(dt, z):
    # fit log|z| = log(coefficient) + exponent*log|dt|
    exponent, log_coefficient = np.polyfit(np.log(dt), np.log(np.abs(z)), 1)
    return exponent, math.exp(log_coefficient)


def _direction(dt, z, skip=3):
    # Richardson extrapolated direction from nodes skip and 2*skip out
    k = min(skip, len(z) - 1)
    k2 = min(2 * skip, len(z) - 1)
    first = z[k] / abs(z[k])
    if k2 == k:
        return first
    second = z[k2] / abs(z[k2])
    guess = (dt[k2] * first - dt[k] * second) / (dt[k2] - dt[k])
    if abs(guess) < 0.5:
        return first
    return guess / abs(guess)


def fit_asymptotics(path, system, i0, t0, window, guard=None):
    """Fit the power law of a collision with primary *i0* near *t0*.

    The distance to the primary is fitted against ``|t - t0|`` on both
    sides of *t0* within *window* with least squares in log-log
    coordinates. The directions come from nodes a few steps away from
    *t0*, extrapolated toward *t0*.

    Raises :class:`ValueError` if the path doesn't get closer than *guard*
    (default ``1e-2`` times the system length scale) to the primary in the
    window, or if either side has less than 6 nodes.
    """
    if guard is None:
        guard = 1e-2 * system.length_scale
    if not window > 0:
        raise ValueError("window must be positive, not %r" % (window,))

    relative = relative_path(path, system, i0)
    inside = np.abs(relative.times - t0) <= window
    if not np.any(inside) or np.min(np.abs(relative.z[inside])) >= guard:
        raise ValueError("path doesn't come closer than %g to primary %d "
                         "near t=%g" % (guard, i0, t0))

    dt = relative.times - t0
    fits = {}
    directions = {}
    residuals = {}
    energies = []
    for side, mask in [('minus', inside & (dt < 0)),
                       ('plus', inside & (dt > 0))]:
        mask &= relative.z != 0
        side_dt = np.abs(dt[mask])
        side_z = relative.z[mask]
        if side_dt.size < 6:
            raise ValueError("only %d nodes on the %s side of t=%g, need at "
                             "least 6" % (side_dt.size, side, t0))
        order = np.argsort(side_dt)
        side_dt = side_dt[order]
        side_z = side_z[order]

        exponent, coefficient = _side_fit(side_dt, side_z)
        direction = _direction(side_dt, side_z)
        law = coefficient * side_dt**exponent * direction
        fits[side] = (exponent, coefficient)
        directions[side] = direction
        residuals[side] = float(np.max(np.abs(side_z - law) / np.abs(side_z)))

        node = np.flatnonzero(mask)[order[min(3, side_dt.size - 1)]]
        try:
            energies.append(binary_energy(path, system, i0,
                                          path.times[node]))
        except hyperflow.SingularityError:
            pass

    exponent = 0.5 * (fits['minus'][0] + fits['plus'][0])
    coefficient = 0.5 * (fits['minus'][1] + fits['plus'][1])
    E0 = float(np.mean(energies)) if energies else math.nan
    event = CollisionEvent(t0, i0, directions['minus'], directions['plus'],
                           E0, exponent, coefficient, residuals)
    log.debug("collision fit: %r, coefficient %g", event, coefficient)
    return event


def _event_from_nodes(path, system, i0, t0):
    # a rough event from the nodes next to t0, for when fitting isn't possible
    relative = relative_path(path, system, i0)
    before = np.flatnonzero((relative.times < t0) & (relative.z != 0))
    after = np.flatnonzero((relative.times > t0) & (relative.z != 0))
    if not (before.size and after.size):
        raise ValueError("no nodes on both sides of t=%g" % t0)
    sigma_minus = relative.z[before[-1]] / abs(relative.z[before[-1]])
    sigma_plus = relative.z[after[0]] / abs(relative.z[after[0]])
    return CollisionEvent(
        t0, i0, sigma_minus, sigma_plus,
        coefficient=homothetic_coefficient(system.masses[i0]))


def blow_up_path(path, t0, scale, system=None, delta=None):
    """Blow up *path* around time *t0* by *scale*.

    The result is a :class:`BlowUpFrame` with times ``scale*(t - t0)`` and
    positions multiplied by ``scale**(2/3)``. If *delta* is given, only the
    part of the path on ``[t0 - delta, t0 + delta]`` is used. If *system*
    is given, the frame gets the blown up system, and its action with
    ``h = 0`` is ``scale**(1/3)`` times the action of the original path.
    """
    if not scale > 0:
        raise ValueError("scale must be positive, not %r" % (scale,))
    if delta is not None:
        path = path.segment(t0 - delta, t0 + delta)

    velocities = None
    if path.velocities is not None:
        velocities = scale**(-1/3) * path.velocities
    blown = Path(scale * (path.times - t0), scale**(2/3) * path.z,
                 velocities)

    new_system = plan = None
    if system is not None:
        new_system = blow_up_system(system, scale, t0)
        plan = quadrature_plan(system, path)
    return BlowUpFrame(scale, t0, blown, new_system, plan)


def _target_increment(sigma_minus, sigma_plus, winding_sign):
    # the one argument increment from sigma_minus to sigma_plus in the class
    turn = math.atan2((sigma_plus / sigma_minus).imag,
                      (sigma_plus / sigma_minus).real)
    if winding_sign > 0:
        return turn if turn > 0 else turn + 2 * math.pi
    return turn if turn < 0 else turn - 2 * math.pi


def _arc_guess(start, end, T, increment, nodes):
    times = np.linspace(-T, T, nodes + 1)
    fraction = (times + T) / (2 * T)
    log_radius = ((1 - fraction) * math.log(abs(start))
                  + fraction * math.log(abs(end)))
    radius = np.exp(log_radius) * (0.5 + 0.5 * (times / T)**2)
    angle = np.angle(start) + increment * fraction
    positions = radius * np.exp(1j * angle)
    positions[[0, -1]] = [start, end]
    return Path(times, positions)


def kepler_deform_arcs(m, boundary, T=1.0, winding_sign=1, opts=None,
                       nodes=128):
    """Find a collision-free Kepler arc between the ends of a collision.

    *boundary* is a pair of positions, usually ``(zeta(-T), zeta(T))`` of
    :func:`parabolic_homothetic`. The arc minimizes the action around a
    center of mass *m* among paths from the first position at ``-T`` to
    the second at ``T`` that go counter-clockwise around the center
    (*winding_sign* 1) or clockwise (*winding_sign* -1), less than a full
    turn. Steps that would move the path across the center are rejected.

    The two ends can't point in the same direction, because then the
    collision path itself is the best path around the center. That raises
    :class:`NotImplementedError`. If the arc doesn't have less action than
    the parabolic collision path, :class:`hyperflow.NumericalError` is
    raised.
    """
    if opts is None:
        opts = Options()
    if winding_sign not in (1, -1):
        raise ValueError("winding_sign must be 1 or -1, not %r"
                         % (winding_sign,))
    if not T > 0:
        raise ValueError("T must be positive, not %r" % (T,))
    start, end = (complex(value) for value in boundary)
    if start == 0 or end == 0:
        raise ValueError("boundary positions must not be at the center")
    sigma_minus = start / abs(start)
    sigma_plus = end / abs(end)
    if abs(sigma_minus - sigma_plus) < 1e-9:
        raise NotImplementedError(
            "can't deform a collision that leaves in the direction it came "
            "from")

    increment = _target_increment(sigma_minus, sigma_plus, winding_sign)
    center = make_static_center(m, period=2 * T)
    problem = FixedEndProblem(start, end, -T, T, 0.0)

    def in_class(path):
        try:
            return abs(argument_increment(path.z) - increment) < math.pi
        except (hyperflow.SingularityError, hyperflow.RefinementNeeded):
            return False

    guess = _arc_guess(start, end, T, increment, nodes)
    penalty = proximity_penalty(center, [0], 0.25 * min(abs(start),
                                                        abs(end)))
    result = minimize_fixed_end(center, problem, guess, opts,
                                accept=in_class, penalty=penalty)

    reference = homothetic_action(m, T)
    log.debug("Kepler arc with winding sign %+d: action %.12g, collision "
              "path %.12g", winding_sign, result.action, reference)
    if not result.action < reference:
        raise hyperflow.NumericalError(
            "Kepler arc did not lower the action", {
                'arc_action': result.action,
                'homothetic_action': reference,
                'status': result.status,
                'iterations': result.iterations,
            })
    return result.path


def _blend(s, T):
    # 1 inside the window, fading linearly to 0 over the collars
    return np.clip((T - np.abs(s)) / (COLLAR_FRACTION * T), 0, 1)


def local_deform(path, system, event, delta, epsilon, T=1.0, opts=None):
    """Replace a collision with two paths that go around the primary.

    On ``[t0 - delta, t0 + delta]``, the path is blown up so that the
    window becomes ``[-T, T]``, the difference between a
    :func:`kepler_deform_arcs` arc and the :func:`parabolic_homothetic`
    collision is added, and the result is blown back down. Outside the
    window the paths don't change. Returns ``(eta_plus, eta_minus)``, that
    go around the primary counter-clockwise and clockwise.

    Raises :class:`hyperflow.ProximityError` if the paths would move
    farther than *epsilon* from *path*, or if the window is so big that
    the deformation runs into something. A smaller *delta* usually helps.
    """
    if not (delta > 0 and epsilon > 0):
        raise ValueError("delta and epsilon must be positive, got %r and %r"
                         % (delta, epsilon))
    t0 = event.t0
    i0 = event.i0
    if not path.start < t0 - delta < t0 + delta < path.end:
        raise ValueError("window [%g, %g] is not inside [%g, %g]"
                         % (t0 - delta, t0 + delta, path.start, path.end))

    m = system.masses[i0]
    scale = T / delta
    others = [j for j in range(len(system)) if j != i0]
    window = path.segment(t0 - delta, t0 + delta)
    if others:
        q = system.positions(window.times)[:, others]
        closest = float(np.min(np.abs(window.z[:, np.newaxis] - q)))
        if closest < system.rho0 / 2:
            raise hyperflow.ProximityError(
                "another primary is %g away in the window, more than "
                "rho0/2 = %g is needed" % (closest, system.rho0 / 2))

    reference = parabolic_homothetic(m, event.sigma_minus, event.sigma_plus,
                                     T)
    boundary = (reference.z[0], reference.z[-1])
    arcs = [kepler_deform_arcs(m, boundary, T, sign, opts)
            for sign in (1, -1)]

    results = []
    for sign, arc in zip((1, -1), arcs):
        dense = path.with_nodes(t0 + arc.times / scale)
        relative = relative_path(dense, system, i0)
        s = scale * (relative.times - t0)
        inside = np.abs(s) < T
        s_inside = s[inside]
        homothetic = (homothetic_coefficient(m) * np.abs(s_inside)**(2/3)
                      * np.where(s_inside < 0, event.sigma_minus,
                                 event.sigma_plus))
        correction = np.zeros(len(relative), dtype=complex)
        correction[inside] = (scale**(-2/3) * _blend(s_inside, T)
                              * (arc.at(s_inside) - homothetic))

        moved = float(np.max(np.abs(correction)))
        if moved > epsilon:
            raise hyperflow.ProximityError(
                "deformation moves the path by %g, more than epsilon = %g"
                % (moved, epsilon))

        deformed = Path(relative.times, relative.z + correction)
        window_z = deformed.z[np.abs(s) <= T]
        try:
            winding = argument_increment(window_z)
        except (hyperflow.SingularityError, hyperflow.RefinementNeeded):
            raise hyperflow.ProximityError(
                "deformed path runs into primary %d" % i0) from None
        if not 0 < sign * winding < 2 * math.pi:
            raise hyperflow.ProximityError(
                "deformed path winds %g around primary %d, expected the "
                "other way" % (winding, i0))

        eta = Path(dense.times, dense.z + correction)
        distance = min_primary_distance(system, eta)
        if distance.d_min == 0:
            raise hyperflow.ProximityError(
                "deformed path hits primary %d" % distance.index)
        log.debug("deformation with winding sign %+d: winding %g, moved %g",
                  sign, winding, moved)
        results.append(eta)

    return tuple(results)
