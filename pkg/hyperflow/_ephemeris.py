import collections
import json
import logging
import math

import numpy as np

import hyperflow

log = logging.getLogger(__name__)

FarField = collections.namedtuple('FarField', 'R1 alpha1 alpha2')
FarField.__doc__ = """The far-field constants of a :class:`PrimarySystem`.

For every ``|z| >= R1`` and every time, ``|W(z, t)| <= alpha1/|z|**2 <=
m/|z|`` and ``|grad W(z, t)| <= alpha2/|z|**3 <= m/|z|**2``, where ``W`` is
the part of the potential that is not ``m/|z|``.
"""


def _field(masses, q, z):
    """Return ``(U, grad U)`` for complex positions.

    *q* has shape ``z.shape + (N,)``. The gradient is a complex number
    ``dU/dx + i dU/dy``, which is also the force on the massless body.
    """
    diff = z[..., np.newaxis] - q
    dist = np.abs(diff)
    with np.errstate(divide='ignore', invalid='ignore'):
        potential = np.sum(masses / dist, axis=-1)
        force = -np.sum(masses * diff / dist**3, axis=-1)
    return potential, force


class PrimarySystem:
    """The massive bodies of the restricted problem and their motion.

    Don't create these directly, use :func:`make_circular_binary`,
    :func:`make_static_center`, :func:`load_sampled_periodic` or one of the
    transformations like :func:`blow_up_system`. Positions are complex
    numbers ``x + iy``, and evaluating at an array of times returns an
    array of shape ``times.shape + (N,)``.

    >>> system = make_circular_binary(0.5, 0.5, 1.0)
    >>> system
    <PrimarySystem 'circular binary': 2 bodies, period 6.28319>
    >>> np.abs(system.positions(0.0))
    array([0.5, 0.5])
    >>> system.R0
    1.5

    These objects never change after creating them, so they can be shared
    between threads.
    """

    def __init__(self, masses, period, positions, velocities, accelerations,
                 *, name='custom', newton_tol=1e-8, check=True):
        masses = np.array(masses, dtype=float)
        if masses.ndim != 1 or masses.size == 0:
            raise ValueError("expected a non-empty list of masses, got %r"
                             % (masses,))
        if not np.all(masses > 0):
            raise ValueError("masses must be positive, got %r"
                             % (masses.tolist(),))
        if not period > 0:
            raise ValueError("period must be positive, not %r" % (period,))

        masses.flags.writeable = False
        self.masses = masses
        self.period = float(period)
        self.name = name
        self.newton_tol = newton_tol
        self.total_mass = float(masses.sum())
        self._positions = positions
        self._velocities = velocities
        self._accelerations = accelerations
        self._far_field = None

        grid = self.sample_times(256)
        q = self.positions(grid)
        self.R0 = float(np.max(np.abs(q))) + 1.0
        if masses.size == 1:
            self.rho0 = math.inf
        else:
            i, j = np.triu_indices(masses.size, 1)
            self.rho0 = float(np.min(np.abs(q[:, i] - q[:, j])))

        if check:
            self.check()

    def __repr__(self):
        return '<%s %r: %d bodies, period %g>' % (
            type(self).__name__, self.name, len(self), self.period)

    def __len__(self):
        return self.masses.size

    @property
    def length_scale(self):
        """``min(rho0, R0)``, the size that collision guards are relative to.
        """
        return min(self.rho0, self.R0)

    @property
    def far_field(self):
        """The :class:`FarField` constants, computed when first needed."""
        if self._far_field is None:
            self._far_field = far_field_constants(self)
        return self._far_field

    def sample_times(self, n):
        return np.arange(n) * (self.period / n)

    def positions(self, t):
        return self._positions(np.asarray(t, dtype=float))

    def velocities(self, t):
        return self._velocities(np.asarray(t, dtype=float))

    def accelerations(self, t):
        return self._accelerations(np.asarray(t, dtype=float))

    def newton_residual(self, t):
        """Largest violation of Newton's equations at the given times."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        q = self.positions(t)
        acc = self.accelerations(t)
        residual = acc.copy()
        for i in range(len(self)):
            for j in range(len(self)):
                if i != j:
                    diff = q[:, i] - q[:, j]
                    residual[:, i] += self.masses[j] * diff / np.abs(diff)**3
        return float(np.max(np.abs(residual)))

    def check(self, n=256):
        """Raise :exc:`hyperflow.ValidationError` unless the motion is valid.

        This checks periodicity, that no two bodies collide and that the
        motion solves Newton's equations, all on a grid of *n* times.
        """
        problems = []
        t = self.sample_times(n)
        q = self.positions(t)
        if q.shape != t.shape + (len(self),):
            raise ValueError("position evaluator returned shape %r, "
                             "expected %r" % (q.shape, t.shape + (len(self),)))

        shifted = self.positions(t + self.period)
        scale = max(1.0, float(np.max(np.abs(q))))
        drift = float(np.max(np.abs(shifted - q))) / scale
        if drift > 1e-10:
            problems.append("motion is not %g-periodic (relative mismatch %g)"
                            % (self.period, drift))

        if not self.rho0 > 0:
            problems.append("primaries collide (minimum separation %g)"
                            % self.rho0)
        else:
            residual = self.newton_residual(t)
            if not residual <= self.newton_tol:
                problems.append(
                    "Newton residual %g exceeds tolerance %g"
                    % (residual, self.newton_tol))

        if problems:
            raise hyperflow.ValidationError(problems)


def make_circular_binary(m1, m2, d, phase=0.0):
    """Two bodies on circular orbits around their barycenter at the origin.

    The angular speed is ``sqrt((m1 + m2)/d**3)``. At time 0 the second body
    is at angle *phase* and the first body is on the opposite side.

    >>> binary = make_circular_binary(1, 1, 2)
    >>> round(binary.period / math.pi, 12)
    4.0
    """
    for name, value in [('m1', m1), ('m2', m2), ('d', d)]:
        if not value > 0:
            raise ValueError("%s must be positive, not %r" % (name, value))

    total = m1 + m2
    omega = math.sqrt(total / d**3)
    # barycentric offsets, body 1 opposite to body 2
    offsets = np.array([-m2 / total * d, m1 / total * d])

    def positions(t):
        return np.multiply.outer(np.exp(1j * (omega * t + phase)), offsets)

    def velocities(t):
        return 1j * omega * positions(t)

    def accelerations(t):
        return -omega**2 * positions(t)

    return PrimarySystem([m1, m2], 2 * math.pi / omega, positions, velocities,
                         accelerations, name='circular binary')


def make_static_center(m, period=1.0):
    """One body of mass *m* sitting at the origin.

    This is the Kepler problem. The *period* can be anything, it only
    matters for the time grids that the solvers create.
    """
    if not m > 0:
        raise ValueError("m must be positive, not %r" % (m,))

    def zeros(t):
        return np.zeros(np.shape(t) + (1,), dtype=complex)

    return PrimarySystem([m], period, zeros, zeros, zeros,
                         name='static center')


def load_sampled_periodic(samples, period, masses, newton_tol=1e-8):
    """Create a system from positions sampled uniformly over one period.

    *samples* is a list of ``(t, positions)`` pairs where *positions* has
    one ``(x, y)`` pair per body. The samples are interpolated with a
    truncated Fourier series, and derivatives come from differentiating
    the series.

    The first sample must be at time 0 and the spacing must be
    ``period/len(samples)``. A sample at time *period* is allowed if it
    equals the first sample, and it is ignored.
    """
    if not period > 0:
        raise ValueError("period must be positive, not %r" % (period,))

    times = np.array([float(t) for t, _ in samples])
    try:
        points = np.array([np.asarray(bodies, dtype=float)
                           for _, bodies in samples])
    except ValueError as e:
        raise hyperflow.FormatError(
            "samples have different numbers of bodies") from e
    if points.ndim != 3 or points.shape[2] != 2:
        raise hyperflow.FormatError(
            "expected [x, y] pairs for every body, got shape %r"
            % (points.shape,))
    positions = points[..., 0] + 1j * points[..., 1]
    if positions.shape[1] != len(masses):
        raise hyperflow.FormatError("got %d masses but %d bodies"
                                    % (len(masses), positions.shape[1]))

    if len(times) >= 2 and abs(times[-1] - period) <= 1e-9 * period:
        scale = max(1.0, float(np.max(np.abs(positions))))
        if np.max(np.abs(positions[-1] - positions[0])) > 1e-9 * scale:
            raise hyperflow.FormatError(
                "sample at t=%g does not match the sample at t=0, "
                "the data is not periodic" % period)
        times = times[:-1]
        positions = positions[:-1]

    n = len(times)
    if n < 16:
        raise ValueError("need at least 16 samples per body, got %d" % n)
    if times[0] != 0:
        raise hyperflow.FormatError("first sample must be at t=0, not %r"
                                    % times[0])
    if times[-1] >= period:
        raise hyperflow.FormatError(
            "last sample must be before t=%g, not at %r" % (period, times[-1]))
    expected = np.arange(n) * (period / n)
    if np.max(np.abs(times - expected)) > 1e-9 * period:
        raise hyperflow.FormatError(
            "sample times must be uniform with spacing %g" % (period / n))

    coefficients = np.fft.fft(positions, axis=0) / n
    frequencies = np.fft.fftfreq(n, d=1.0 / n) * (2 * math.pi / period)

    def series(t, order):
        phases = np.exp(1j * t[..., np.newaxis] * frequencies)
        return (phases * (1j * frequencies)**order) @ coefficients

    return PrimarySystem(
        masses, period,
        lambda t: series(t, 0), lambda t: series(t, 1),
        lambda t: series(t, 2), name='sampled', newton_tol=newton_tol)


def load_sampled_file(path, newton_tol=1e-8):
    """Read a JSON file of samples for :func:`load_sampled_periodic`.

    The file contains an object like
    ``{"T": ..., "masses": [...], "samples": [{"t": ..., "bodies": [[x, y],
    ...]}, ...]}``.
    """
    with open(path, 'r', encoding='utf-8') as file:
        try:
            content = json.load(file)
        except json.JSONDecodeError as e:
            raise hyperflow.FormatError(
                "%s: invalid JSON at line %d column %d: %s"
                % (path, e.lineno, e.colno, e.msg)) from e

    try:
        samples = [(item['t'], item['bodies']) for item in content['samples']]
        return load_sampled_periodic(samples, content['T'], content['masses'],
                                     newton_tol=newton_tol)
    except (KeyError, TypeError) as e:
        raise hyperflow.FormatError(
            "%s: missing or invalid field %s" % (path, e)) from e


def _far_field_sup(system, radius):
    # sup of |W| |z|**2 and |grad W| |z|**3 over |z| >= radius, on a grid
    radii = radius * 2.0**np.arange(16)
    radii = radii[:max(4, int(np.searchsorted(radii, 50 * system.R0)) + 1)]
    angles = np.exp(2j * math.pi * np.arange(256) / 256)
    z = (radii[:, np.newaxis] * angles).ravel()
    m = system.total_mass

    alpha1 = alpha2 = 0.0
    for t in system.sample_times(64):
        q = np.broadcast_to(system.positions(t), z.shape + (len(system),))
        potential, force = _field(system.masses, q, z)
        absz = np.abs(z)
        w = potential - m / absz
        grad_w = force + m * z / absz**3
        alpha1 = max(alpha1, float(np.max(np.abs(w) * absz**2)))
        alpha2 = max(alpha2, float(np.max(np.abs(grad_w) * absz**3)))
    return alpha1, alpha2


def far_field_constants(system, margin=1.1):
    """Find a :class:`FarField` for the system by sampling.

    The sups of ``|W| |z|**2`` and ``|grad W| |z|**3`` are sampled on
    circles of doubling radius, 256 angles and 64 times per period, and
    multiplied by *margin*. The radius ``R1`` starts at ``sqrt(2)*R0`` and
    grows until ``alpha1/R1 <= m`` and ``alpha2/R1 <= m``.

    >>> far_field_constants(make_static_center(1.0))
    FarField(R1=1.4142135623730951, alpha1=0.0, alpha2=0.0)
    """
    if not margin >= 1:
        raise ValueError("margin must be at least 1, not %r" % (margin,))

    m = system.total_mass
    R1 = math.sqrt(2) * system.R0
    for attempt in range(60):
        alpha1, alpha2 = _far_field_sup(system, R1)
        alpha1 *= margin
        alpha2 *= margin
        needed = max(alpha1, alpha2) / m
        if R1 >= needed:
            break
        R1 = max(needed, 1.5 * R1)
    else:   # pragma: no cover
        raise hyperflow.NumericalError(
            "far-field constants did not settle", {'R1': R1})

    if R1 > 1e3 * system.R0:
        log.warning("R1 = %g is more than 1000*R0 = %g", R1, 1e3 * system.R0)
    return FarField(R1, alpha1, alpha2)


def blow_up_system(system, scale, t0=0.0):
    """Return the system with positions ``scale**(2/3) q(t0 + s/scale)``.

    The new period is ``scale*T`` and the masses stay the same, so the
    result solves Newton's equations too. A scale of 1 with *t0* = 0
    returns *system*.

    >>> binary = make_circular_binary(0.5, 0.5, 1.0)
    >>> round(blow_up_system(binary, 1 / binary.period).period, 12)
    1.0
    """
    if not scale > 0:
        raise ValueError("scale must be positive, not %r" % (scale,))
    if scale == 1 and t0 == 0:
        return system

    length = scale**(2/3)

    def positions(s):
        return length * system.positions(t0 + s / scale)

    def velocities(s):
        return scale**(-1/3) * system.velocities(t0 + s / scale)

    def accelerations(s):
        return scale**(-4/3) * system.accelerations(t0 + s / scale)

    # residuals scale like the accelerations
    return PrimarySystem(
        system.masses, scale * system.period, positions, velocities,
        accelerations, name='%s blown up by %g' % (system.name, scale),
        newton_tol=system.newton_tol * max(1.0, scale**(-4/3)))


def reflect_system(system, t_center):
    """Return the time-reflected system ``q(2*t_center - t)``.

    This is a periodic solution of Newton's equations if *system* is.
    """
    def positions(t):
        return system.positions(2 * t_center - t)

    def velocities(t):
        return -system.velocities(2 * t_center - t)

    def accelerations(t):
        return system.accelerations(2 * t_center - t)

    return PrimarySystem(
        system.masses, system.period, positions, velocities, accelerations,
        name='%s reflected at t=%g' % (system.name, t_center),
        newton_tol=system.newton_tol)
