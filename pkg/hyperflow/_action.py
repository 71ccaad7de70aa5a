import collections
import functools
import math

import numpy as np
import scipy.optimize

import hyperflow
from hyperflow._ephemeris import _field
from hyperflow._path import Path

ActionBreakdown = collections.namedtuple(
    'ActionBreakdown', 'kinetic potential h_term total')
ActionBreakdown.__doc__ = """The parts of the action of a path.

``total`` is ``kinetic + potential + h_term``, and ``h_term`` is ``h``
times the duration of the path.
"""

DistanceRecord = collections.namedtuple('DistanceRecord', 'd_min time index')
DistanceRecord.__doc__ = """How close a path gets to the primaries.

``index`` is the index of the closest primary and ``time`` is when the
closest approach happens.
"""

# segments closer than this times the length scale get split into panels
NEAR_FRACTION = 0.05
MAX_PANELS = 256


@functools.lru_cache()
def _gauss_legendre(order):
    # nodes and weights on [0, 1]
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1) / 2, w / 2


def _as_position(z):
    if isinstance(z, tuple):
        return complex(*z)
    return z


def _raise_if_singular(system, z, t, q):
    hits = np.argwhere((z[..., np.newaxis] - q) == 0)
    if hits.size:
        *where, index = hits[0]
        time = float(t[tuple(where)])
        raise hyperflow.SingularityError(
            "position %r is exactly at primary %d at t=%g"
            % (complex(z[tuple(where)]), index, time), int(index), time)


def _evaluate(system, z, t):
    z = np.asarray(_as_position(z), dtype=complex)
    t = np.broadcast_to(np.asarray(t, dtype=float), z.shape)
    q = system.positions(t)
    _raise_if_singular(system, z, t, q)
    return z, t, q


def _maybe_scalar(array):
    if np.ndim(array) == 0:
        return array.item()
    return array


def potential_U(system, z, t):
    """The potential ``sum(m_i/|z - q_i(t)|)``.

    *z* can be a complex number, an ``(x, y)`` tuple or an array of complex
    numbers.

    >>> import hyperflow
    >>> potential_U(hyperflow.make_static_center(1.0), 2+0j, 0.0)
    0.5
    """
    z, t, q = _evaluate(system, z, t)
    return _maybe_scalar(_field(system.masses, q, z)[0])


def force(system, z, t):
    """The gradient of :func:`potential_U` as a complex number.

    This is the acceleration of the massless body.
    """
    z, t, q = _evaluate(system, z, t)
    return _maybe_scalar(_field(system.masses, q, z)[1])


def split_W(system, z, t):
    """Return ``U(z, t) - m/|z|``, the potential minus its Kepler part."""
    z, t, q = _evaluate(system, z, t)
    if np.any(z == 0):
        raise hyperflow.SingularityError("W is undefined at the origin")
    return _maybe_scalar(
        _field(system.masses, q, z)[0] - system.total_mass / np.abs(z))


def _potential_dt(system, z, t, q):
    diff = z[..., np.newaxis] - q
    qdot = system.velocities(t)
    dot = (np.conj(diff) * qdot).real
    return np.sum(system.masses * dot / np.abs(diff)**3, axis=-1)


def potential_dt(system, z, t):
    """The partial time derivative of the potential at a fixed position."""
    z, t, q = _evaluate(system, z, t)
    return _maybe_scalar(_potential_dt(system, z, t, q))


def quadrature_plan(system, path):
    """Decide how many quadrature panels each segment of *path* gets.

    Segments that stay farther than a small fraction of the system's
    length scale from every primary get one panel. Closer segments are
    split into panels that are small compared to the closest distance.
    """
    s = np.linspace(0, 1, 9)
    z = path.z[:-1, np.newaxis] + s * np.diff(path.z)[:, np.newaxis]
    t = path.times[:-1, np.newaxis] + s * np.diff(path.times)[:, np.newaxis]
    relative = z[..., np.newaxis] - system.positions(t)
    dist = np.abs(relative)

    closest = np.min(dist, axis=1)             # (segments, primaries)
    d = np.min(closest, axis=1)
    j = np.argmin(closest, axis=1)
    rows = np.arange(len(d))
    length = np.abs(relative[rows, -1, j] - relative[rows, 0, j])

    plan = np.ones(len(d), dtype=int)
    near = d < NEAR_FRACTION * system.length_scale
    with np.errstate(divide='ignore', invalid='ignore'):
        wanted = np.ceil(4 * length / d)
    wanted = np.where(np.isfinite(wanted), wanted, MAX_PANELS)
    plan[near] = np.clip(wanted[near], 2, MAX_PANELS).astype(int)
    return plan


def _panel_nodes(panels, order):
    # quadrature points and weights on [0, 1] for a segment split in panels
    x, w = _gauss_legendre(order)
    starts = np.arange(panels)[:, np.newaxis]
    return ((starts + x) / panels).ravel(), np.tile(w / panels, panels)


def _segment_groups(path, plan, order):
    # yields (segment indices, s, weights), one group per panel count
    if plan is None:
        raise TypeError("plan is None")
    plan = np.asarray(plan)
    if plan.shape != (len(path) - 1,):
        raise ValueError("quadrature plan has %d entries, path has %d "
                         "segments" % (plan.size, len(path) - 1))
    for panels in np.unique(plan):
        segments = np.flatnonzero(plan == panels)
        s, w = _panel_nodes(int(panels), order)
        yield segments, s, w


def _quadrature_points(system, path, segments, s):
    dz = path.z[segments + 1] - path.z[segments]
    dt = path.times[segments + 1] - path.times[segments]
    z = path.z[segments, np.newaxis] + s * dz[:, np.newaxis]
    t = path.times[segments, np.newaxis] + s * dt[:, np.newaxis]
    q = system.positions(t)
    _raise_if_singular(system, z, t, q)
    return z, t, q, dt


def _segment_potentials(system, path, plan, order):
    result = np.empty(len(path) - 1)
    for segments, s, w in _segment_groups(path, plan, order):
        z, t, q, dt = _quadrature_points(system, path, segments, s)
        potential = _field(system.masses, q, z)[0]
        result[segments] = dt * (potential @ w)
    return result


def action(system, path, h=0.0, plan=None, order=4):
    """Compute the action of *path* as an :class:`ActionBreakdown`.

    The kinetic part is exact for the piecewise linear path. The potential
    part uses Gauss-Legendre quadrature with *order* points per panel, and
    *plan* says how many panels each segment gets (see
    :func:`quadrature_plan`, which is used by default).

    >>> import hyperflow
    >>> center = hyperflow.make_static_center(1.0)
    >>> path = Path([0, 2], [10, 12])
    >>> action(center, path).kinetic
    1.0
    """
    if plan is None:
        plan = quadrature_plan(system, path)
    dz = np.diff(path.z)
    dt = np.diff(path.times)
    kinetic = math.fsum(np.abs(dz)**2 / (2 * dt))
    potential = math.fsum(_segment_potentials(system, path, plan, order))
    h_term = h * (path.end - path.start)
    return ActionBreakdown(kinetic, potential, h_term,
                           kinetic + potential + h_term)


def action_gradient(system, path, h=0.0, plan=None, order=4):
    """Differentiate :func:`action` with respect to the path.

    Returns ``(gradient, duration_derivative)``. The gradient is a complex
    array with one ``dA/dx + i dA/dy`` per interior node. The duration
    derivative is the derivative of the action when all node times are
    stretched away from the first node time, with the positions fixed.
    """
    if plan is None:
        plan = quadrature_plan(system, path)
    n = len(path)
    dz = np.diff(path.z)
    dt = np.diff(path.times)
    velocity = dz / dt
    duration = path.end - path.start

    node_grad = np.zeros(n, dtype=complex)
    node_grad[:-1] -= velocity
    node_grad[1:] += velocity

    kinetic = np.abs(dz)**2 / (2 * dt)
    d_duration = -math.fsum(kinetic) / duration + h

    for segments, s, w in _segment_groups(path, plan, order):
        z, t, q, seg_dt = _quadrature_points(system, path, segments, s)
        potential, forces = _field(system.masses, q, z)
        # dU/dz along the segment, split between its two end nodes
        weighted = seg_dt[:, np.newaxis] * w * forces
        np.add.at(node_grad, segments, weighted @ (1 - s))
        np.add.at(node_grad, segments + 1, weighted @ s)

        dtime = _potential_dt(system, z, t, q)
        stretch = (t - path.start) / duration
        d_duration += math.fsum(seg_dt * (potential @ w) / duration)
        d_duration += math.fsum(seg_dt * ((dtime * stretch) @ w))

    return node_grad[1:-1], d_duration


def _value_and_gradient(system, path, h, plan, order):
    # total action and interior gradient in one quadrature pass
    dz = np.diff(path.z)
    dt = np.diff(path.times)
    velocity = dz / dt
    node_grad = np.zeros(len(path), dtype=complex)
    node_grad[:-1] -= velocity
    node_grad[1:] += velocity

    potentials = np.empty(len(dt))
    for segments, s, w in _segment_groups(path, plan, order):
        z, t, q, seg_dt = _quadrature_points(system, path, segments, s)
        potential, forces = _field(system.masses, q, z)
        potentials[segments] = seg_dt * (potential @ w)
        weighted = seg_dt[:, np.newaxis] * w * forces
        np.add.at(node_grad, segments, weighted @ (1 - s))
        np.add.at(node_grad, segments + 1, weighted @ s)

    total = (math.fsum(np.abs(dz)**2 / (2 * dt)) + math.fsum(potentials)
             + h * (path.end - path.start))
    return total, node_grad[1:-1]


def _distance_along(system, path, segment, index, s):
    z0, z1 = path.z[segment], path.z[segment + 1]
    t0, t1 = path.times[segment], path.times[segment + 1]
    t = t0 + s * (t1 - t0)
    return abs(z0 + s * (z1 - z0) - system.positions(t)[index])


def min_primary_distance(system, path, samples=8):
    """Find the closest approach of *path* to any primary.

    Every segment is sampled at *samples* + 1 points, and the best few
    candidates are polished with a bounded scalar minimization. Returns a
    :class:`DistanceRecord`.
    """
    s = np.linspace(0, 1, samples + 1)
    z = path.z[:-1, np.newaxis] + s * np.diff(path.z)[:, np.newaxis]
    t = path.times[:-1, np.newaxis] + s * np.diff(path.times)[:, np.newaxis]
    dist = np.abs(z[..., np.newaxis] - system.positions(t))

    flat = dist.reshape(-1)
    best_flat = int(np.argmin(flat))
    segment, k, index = np.unravel_index(best_flat, dist.shape)
    best = (float(flat[best_flat]), float(t[segment, k]), int(index))
    if best[0] == 0:
        return DistanceRecord(*best)

    # polish the closest few (segment, primary) pairs
    per_pair = np.min(dist, axis=1)
    candidates = np.argsort(per_pair, axis=None)[:3]
    for flat_pair in candidates:
        segment, index = np.unravel_index(flat_pair, per_pair.shape)
        k = int(np.argmin(dist[segment, :, index]))
        low = s[max(k - 1, 0)]
        high = s[min(k + 1, samples)]
        found = scipy.optimize.minimize_scalar(
            functools.partial(_distance_along, system, path, segment, index),
            bounds=(low, high), method='bounded',
            options={'xatol': 1e-12})
        if found.fun < best[0]:
            time = path.times[segment] + found.x * (
                path.times[segment + 1] - path.times[segment])
            best = (float(found.fun), float(time), int(index))

    return DistanceRecord(*best)


def concatenate(a, b, period=None):
    """Join two paths, moving *b* in time so that it starts where *a* ends.

    With a *period*, *b* may be moved by any whole number of periods. Without
    a period, *b* must already start at the end time of *a*. The end
    position of *a* and the start position of *b* must be the same.

    >>> joined = concatenate(Path([0, 1], [0, 1]), Path([3, 4], [1, 2]),
    ...                      period=1.0)
    >>> joined.times.tolist()
    [0.0, 1.0, 2.0]
    """
    shift = a.end - b.start
    if period is None:
        if abs(shift) > 1e-12 * max(1.0, abs(a.end)):
            raise ValueError("second path starts at t=%g, not at t=%g"
                             % (b.start, a.end))
    else:
        periods = shift / period
        if abs(periods - round(periods)) > 1e-9:
            raise ValueError(
                "junction times %g and %g differ by %g periods, which is not "
                "a whole number" % (a.end, b.start, periods))

    junction = a.z[-1]
    if abs(b.z[0] - junction) > 1e-12 * max(1.0, abs(junction)):
        raise ValueError("paths don't meet: first ends at %r, second starts "
                         "at %r" % (complex(junction), complex(b.z[0])))

    times = np.concatenate([a.times, a.end + (b.times[1:] - b.start)])
    positions = np.concatenate([a.z, b.z[1:]])
    velocities = None
    if a.velocities is not None and b.velocities is not None:
        velocities = np.concatenate([a.velocities, b.velocities[1:]])
    return Path(times, positions, velocities)
