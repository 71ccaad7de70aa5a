import collections
import logging
import math

import numpy as np

import hyperflow

log = logging.getLogger(__name__)

EscapeCertificate = collections.namedtuple(
    'EscapeCertificate', 't1 r1 rdot1 threshold v_floor valid violations')
EscapeCertificate.__doc__ = """What :func:`check_escape` returns.

``valid`` means that ``r1 >= R1`` and ``rdot1 >= threshold``, which
guarantees that the radial velocity stays above ``v_floor = rdot1/2``
forever. ``violations`` is a list of node times after ``t1`` where the
radial velocity was measured below the floor anyway, which means that
the grid or the far-field constants are not good enough.
"""

OmegaBound = collections.namedtuple('OmegaBound', 'bound measured_sup ok')
OmegaBound.__doc__ = """What :func:`angular_momentum_bound` returns.

``ok`` is True if the largest measured angular momentum after ``t1`` is
within the bound, allowing for rounding errors.
"""

AsymptoticEstimate = collections.namedtuple(
    'AsymptoticEstimate',
    'theta_inf theta_bound v_inf v_error omega_bound')
AsymptoticEstimate.__doc__ = """Limits of the direction and speed of an
escaping path, with error bounds.

``theta_bound`` is guaranteed if the escape certificate holds, while
``v_error`` is an estimate.
"""

# how much the measured angular momentum may exceed its bound
OMEGA_SLACK = 1e-6


def _derivative_weights(offsets):
    # weights w with sum(w*f(t + offsets)) ~ f'(t), one row per node
    spacing = np.max(np.abs(offsets), axis=1, keepdims=True)
    scaled = offsets / spacing
    powers = np.arange(offsets.shape[1])
    matrix = scaled[:, np.newaxis, :] ** powers[np.newaxis, :, np.newaxis]
    rhs = np.zeros(offsets.shape)
    rhs[:, 1] = 1
    weights = np.linalg.solve(matrix, rhs[..., np.newaxis])[..., 0]
    return weights / spacing


def five_point_velocities(times, z):
    """Differentiate *z* with 5-point stencils, one-sided at the ends.

    This is 4th order accurate also when the nodes are not equally spaced.

    >>> t = np.linspace(0, 1, 11)
    >>> v = five_point_velocities(t, t**3 + 0j)
    >>> bool(np.allclose(v.real, 3 * t**2))
    True
    """
    times = np.asarray(times, dtype=float)
    z = np.asarray(z)
    n = times.size
    if n < 5:
        raise ValueError("need at least 5 nodes, got %d" % n)
    first = np.clip(np.arange(n) - 2, 0, n - 5)
    stencil = first[:, np.newaxis] + np.arange(5)
    offsets = times[stencil] - times[:, np.newaxis]
    weights = _derivative_weights(offsets)
    return np.sum(weights * z[stencil], axis=1)


class PolarSeries:
    """A path in polar coordinates.

    .. attribute:: times
                   r
                   theta
                   rdot
                   omega
                   speed

        Arrays with one element per node. ``theta`` changes continuously,
        so it can go beyond ``2*pi``, and ``omega`` is the angular
        momentum ``r**2 * dtheta/dt``.
    """

    def __init__(self, times, r, theta, rdot, omega, speed):
        self.times = times
        self.r = r
        self.theta = theta
        self.rdot = rdot
        self.omega = omega
        self.speed = speed

    def __repr__(self):
        return '<%s: %d nodes, r from %g to %g>' % (
            type(self).__name__, self.times.size, self.r[0], self.r[-1])

    def __len__(self):
        return self.times.size

    def index_at(self, t):
        """The index of the node at time *t*.

        Raises :class:`LookupError` if there is no node at that time.
        """
        index = int(np.argmin(np.abs(self.times - t)))
        scale = max(1.0, abs(t))
        if abs(self.times[index] - t) > 1e-9 * scale:
            raise LookupError("no node at t=%g" % t)
        return index

    def positions(self):
        return self.r * np.exp(1j * self.theta)

    def columns(self):
        """A dict of the ``t,r,theta,rdot,omega,speed`` columns."""
        return collections.OrderedDict([
            ('t', self.times), ('r', self.r), ('theta', self.theta),
            ('rdot', self.rdot), ('omega', self.omega),
            ('speed', self.speed)])


def polar_series(path):
    """Convert a :class:`.Path` to a :class:`PolarSeries`.

    Velocities come from the path if it has them, and from
    :func:`five_point_velocities` otherwise.

    >>> import hyperflow
    >>> t = np.linspace(0, 1, 21)
    >>> circle = hyperflow.Path(t, 2 * np.exp(1j * t))
    >>> series = polar_series(circle)
    >>> bool(np.allclose(series.omega, 4))
    True
    """
    z = path.z
    if np.any(z == 0):
        index = int(np.flatnonzero(z == 0)[0])
        raise hyperflow.SingularityError(
            "path goes through the origin at t=%g" % path.times[index],
            None, float(path.times[index]))
    steps = np.angle(z[1:] / z[:-1])
    if np.any(np.abs(steps) >= math.pi - 1e-12):
        index = int(np.flatnonzero(np.abs(steps) >= math.pi - 1e-12)[0])
        raise hyperflow.RefinementNeeded(
            "the path turns half a turn around the origin between t=%g and "
            "t=%g" % (path.times[index], path.times[index + 1]))

    theta = np.concatenate([[np.angle(z[0])],
                            np.angle(z[0]) + np.cumsum(steps)])
    if path.velocities is not None:
        velocities = path.velocities
    else:
        velocities = five_point_velocities(path.times, z)

    r = np.abs(z)
    rdot = (np.conj(z) * velocities).real / r
    omega = (np.conj(z) * velocities).imag
    return PolarSeries(np.array(path.times), r, theta, rdot, omega,
                       np.abs(velocities))


def radial_escape_threshold(m, r, C=None):
    """The radial velocity above which escape is guaranteed.

    This is ``sqrt(6*m/r)``, or ``sqrt(3*(m + C)/r)`` for a force that
    differs from Kepler's by at most ``C/r**3``. The two agree when
    ``C == m``.

    >>> radial_escape_threshold(1, 6)
    1.0
    """
    if not r > 0:
        raise ValueError("r must be positive, not %r" % (r,))
    if C is None:
        return math.sqrt(6 * m / r)
    return math.sqrt(3 * (m + C) / r)


def check_escape(series, system, t1):
    """Check that escape is guaranteed from time *t1* on.

    Returns an :class:`EscapeCertificate`. An invalid certificate is not an
    error, because many paths start escaping only later.
    """
    k = series.index_at(t1)
    m = system.total_mass
    r1 = float(series.r[k])
    rdot1 = float(series.rdot[k])
    threshold = radial_escape_threshold(m, r1)
    valid = r1 >= system.far_field.R1 and rdot1 >= threshold

    violations = []
    if valid:
        later = series.rdot[k + 1:] <= rdot1 / 2
        violations = series.times[k + 1:][later].tolist()
        if violations:
            log.warning("radial velocity dropped below %g at %d nodes after "
                        "t=%g, first at t=%g", rdot1 / 2, len(violations),
                        t1, violations[0])
    return EscapeCertificate(float(series.times[k]), r1, rdot1, threshold,
                             rdot1 / 2, valid, violations)


def angular_momentum_bound(series, t1, v0, alpha2):
    """Bound the angular momentum of an escaping path after *t1*.

    *v0* is the radial velocity floor of the escape, and *alpha2* bounds
    the non-Kepler force as ``alpha2/r**3``. The bound is ``|omega(t1)| +
    alpha2/(v0*r(t1))``, and it is compared against the measured
    angular momentum. Returns an :class:`OmegaBound`.

    For a static center *alpha2* is 0 and the bound is exact.
    """
    if not v0 > 0:
        raise ValueError("v0 must be positive, not %r" % (v0,))
    k = series.index_at(t1)
    bound = abs(float(series.omega[k])) + alpha2 / (v0 * series.r[k])
    measured = float(np.max(np.abs(series.omega[k:])))
    ok = measured <= bound + OMEGA_SLACK
    if not ok:
        log.warning("angular momentum %g exceeds its bound %g after t=%g",
                    measured, bound, t1)
    return OmegaBound(float(bound), measured, ok)


def angle_change_bound(omega, C, v0, r):
    """How much the angle of an escaping path can still change.

    *omega* bounds the angular momentum, *C* bounds the non-Kepler force
    and *v0* is the radial velocity floor, from radius *r* on.

    >>> angle_change_bound(0, 1, 1, 10)
    0.01
    """
    if not (v0 > 0 and r > 0):
        raise ValueError("v0 and r must be positive, got %r and %r"
                         % (v0, r))
    return abs(omega) / (v0 * r) + C / (v0**2 * r**2)


def limit_angle(series, t1, v0, omega_bound, C):
    """Estimate the direction that an escaping path goes to.

    Returns ``(theta, bound)`` where *theta* is the angle at the last node
    and *bound* is :func:`angle_change_bound` at the last node. *C* bounds
    the non-Kepler force, use ``alpha2`` of the system's far field.
    """
    series.index_at(t1)
    bound = angle_change_bound(omega_bound, C, v0, float(series.r[-1]))
    return float(series.theta[-1]), bound


def limit_speed(series, system, tail_fraction=0.25, omega_bound=None):
    """Estimate the speed that an escaping path approaches.

    The last *tail_fraction* of the nodes is used. Kinetic energy minus the
    Kepler potential, ``speed**2 - 2*m/r``, is fitted as a line in
    ``1/r`` and extrapolated to ``1/r = 0``. Returns ``(v_inf, error)``,
    where the error is the largest fit residual converted to speed plus
    ``omega_bound/r`` at the last node. By default, *omega_bound* is the
    largest angular momentum in the tail.
    """
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must be in (0, 1], not %r"
                         % (tail_fraction,))
    count = int(math.ceil(tail_fraction * len(series)))
    if count < 10:
        raise ValueError("the tail has %d nodes, need at least 10" % count)

    r = series.r[-count:]
    excess = series.speed[-count:]**2 - 2 * system.total_mass / r
    slope, intercept = np.polyfit(1 / r, excess, 1)
    if not intercept > 0:
        raise hyperflow.NumericalError(
            "the path doesn't seem to escape with positive energy",
            {'extrapolated_speed_squared': float(intercept)})

    v_inf = math.sqrt(intercept)
    residual = float(np.max(np.abs(excess - (slope / r + intercept))))
    if omega_bound is None:
        omega_bound = float(np.max(np.abs(series.omega[-count:])))
    error = residual / (2 * v_inf) + abs(omega_bound) / r[-1]
    return v_inf, float(error)


def _first_escape_node(series, system):
    m = system.total_mass
    R1 = system.far_field.R1
    thresholds = np.sqrt(6 * m / series.r)
    good = (series.r >= R1) & (series.rdot >= thresholds)
    # later nodes must not fall below the floor either
    for k in np.flatnonzero(good):
        if np.all(series.rdot[k + 1:] > series.rdot[k] / 2):
            return int(k)
    return None


def estimate_asymptotics(series, system, t1=None, tail_fraction=0.25):
    """Certify escape and estimate the limits of an escaping path.

    If *t1* is None, the first node from which escape can be certified is
    used. Returns ``(certificate, omega_bound, estimate)`` with an
    :class:`EscapeCertificate`, an :class:`OmegaBound` and an
    :class:`AsymptoticEstimate`. If escape can't be certified, the
    certificate is invalid and the other two are None.
    """
    if t1 is None:
        k = _first_escape_node(series, system)
        if k is None:
            log.warning("escape could not be certified at any node")
            k = len(series) - 1
        t1 = float(series.times[k])

    certificate = check_escape(series, system, t1)
    if not certificate.valid:
        return certificate, None, None

    alpha2 = system.far_field.alpha2
    omega = angular_momentum_bound(series, t1, certificate.v_floor, alpha2)
    theta, theta_bound = limit_angle(series, t1, certificate.v_floor,
                                     omega.bound, alpha2)
    v_inf, v_error = limit_speed(series, system, tail_fraction, omega.bound)
    estimate = AsymptoticEstimate(theta, theta_bound, v_inf, v_error,
                                  omega.bound)
    log.info("escape certified from t=%g: theta %.8g +- %.3g, speed %.8g "
             "+- %.3g", t1, theta, theta_bound, v_inf, v_error)
    return certificate, omega, estimate
