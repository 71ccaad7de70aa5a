"""Oracles that don't depend on the minimizers.

Everything here solves the equations of motion directly or uses closed-form
Kepler solutions, so the results can be compared against minimized paths.
"""

import logging
import math

import numpy as np
import scipy.integrate
import scipy.optimize

import hyperflow
from hyperflow._action import force, potential_U, potential_dt
from hyperflow._config import TypedOptions, from_json
from hyperflow._ephemeris import _field
from hyperflow._path import Path

log = logging.getLogger(__name__)

_METHODS = ('RK45', 'DOP853', 'Radau', 'LSODA')


class _FloatOrNone:

    @staticmethod
    def from_json(value):
        if value is None:
            return None
        return from_json(float, value, 'step_floor')


class IntegratorOptions(TypedOptions):
    """Options for :func:`integrate_ode`.

    >>> opts = IntegratorOptions(rtol=1e-8)
    >>> opts['method']
    'DOP853'
    >>> opts['atol'] = -1
    Traceback (most recent call last):
      ...
    ValueError: atol must be positive, not -1.0

    ``step_floor`` is the distance to a primary where integration stops
    with :exc:`hyperflow.CollisionApproach`. ``None`` means ``1e-6`` times
    the length scale of the system.
    """

    _types = {
        'rtol': float,
        'atol': float,
        'max_step': float,
        'dense': bool,
        'step_floor': _FloatOrNone,
        'method': str,
    }
    _defaults = {
        'rtol': 1e-10,
        'atol': 1e-12,
        'max_step': math.inf,
        'dense': True,
        'step_floor': None,
        'method': 'DOP853',
    }
    _positive = frozenset(['rtol', 'atol', 'max_step'])

    def _validate(self, option, value):
        if option == 'method' and value not in _METHODS:
            raise ValueError("unknown integration method %r, should be one "
                             "of %s" % (value, ', '.join(_METHODS)))
        if option == 'step_floor' and value is not None and not value > 0:
            raise ValueError("step_floor must be positive, not %r" % (value,))


def _equations(system):
    masses = system.masses

    def rhs(t, state):
        z = np.asarray(complex(state[0], state[1]))
        acc = _field(masses, system.positions(t), z)[1]
        return [state[2], state[3], acc.real, acc.imag]

    return rhs


def _approach_event(system, floor):
    def near_primary(t, state):
        z = complex(state[0], state[1])
        return float(np.min(np.abs(z - system.positions(t)))) - floor

    near_primary.terminal = True
    near_primary.direction = -1
    return near_primary


def _floor(system, opts):
    if opts['step_floor'] is None:
        return 1e-6 * system.length_scale
    return opts['step_floor']


def _solve(system, z0, v0, t_span, opts, dense):
    floor = _floor(system, opts)
    z0 = complex(z0)
    v0 = complex(v0)
    distance = float(np.min(np.abs(z0 - system.positions(t_span[0]))))
    if distance <= floor:
        raise hyperflow.SingularityError(
            "initial position %r is within %g of a primary" % (z0, floor),
            int(np.argmin(np.abs(z0 - system.positions(t_span[0])))),
            float(t_span[0]))

    solution = scipy.integrate.solve_ivp(
        _equations(system), t_span, [z0.real, z0.imag, v0.real, v0.imag],
        method=opts['method'], rtol=opts['rtol'], atol=opts['atol'],
        max_step=opts['max_step'], dense_output=dense,
        events=[_approach_event(system, floor)])
    if solution.status == -1:
        raise hyperflow.NumericalError(
            "integration failed: " + solution.message,
            {'t': float(solution.t[-1]), 'method': opts['method']})
    return solution


def _to_path(times, states):
    times = np.asarray(times)
    z = states[0] + 1j * states[1]
    v = states[2] + 1j * states[3]
    if times[0] > times[-1]:
        times, z, v = times[::-1], z[::-1], v[::-1]
    return Path(times, z, v)


def integrate_ode(system, z0, v0, t_span, opts=None, times=None, n_out=1001):
    """Integrate the equations of motion of the massless body.

    Integration starts at ``t_span[0]`` from position *z0* and velocity
    *v0*; *t_span* may also run backwards in time. The result is a
    :class:`Path` with velocities, sampled at the given *times* or at
    *n_out* uniformly spaced times. Paths are always returned with
    increasing times.

    If the body gets closer to a primary than the step floor,
    :exc:`hyperflow.CollisionApproach` is raised, and its ``path``
    attribute has the orbit up to that point.

    >>> import hyperflow
    >>> center = hyperflow.make_static_center(1.0)
    >>> orbit = integrate_ode(center, 1, 1j, (0, 2*math.pi))
    >>> abs(orbit.z[-1] - 1) < 1e-8
    True
    """
    if opts is None:
        opts = IntegratorOptions()
    t0, t1 = map(float, t_span)
    if t0 == t1:
        raise ValueError("empty time span [%g, %g]" % (t0, t1))
    dense = opts['dense'] or times is not None
    solution = _solve(system, z0, v0, (t0, t1), opts, dense)
    reached = float(solution.t[-1])

    if times is not None:
        times = np.asarray(times, dtype=float)
        low, high = sorted([t0, reached])
        inside = times[(times >= low) & (times <= high)]
    elif dense:
        count = n_out
        if solution.status == 1:
            count = max(2, int(round(n_out * (reached - t0) / (t1 - t0))))
        inside = np.linspace(t0, reached, count)
    else:
        inside = solution.t

    if solution.status == 1:
        state = solution.y[:, -1]
        z = complex(state[0], state[1])
        index = int(np.argmin(np.abs(z - system.positions(reached))))
        partial = None
        if inside.size >= 2:
            partial = _to_path(inside, solution.sol(inside) if dense
                               else solution.y)
        log.info("orbit came within the step floor of primary %d at t=%g",
                 index, reached)
        raise hyperflow.CollisionApproach(
            "orbit came too close to primary %d at t=%g" % (index, reached),
            index, reached, partial,
            (reached, z, complex(state[2], state[3])))

    if dense:
        return _to_path(inside, solution.sol(inside))
    return _to_path(solution.t, solution.y)


def el_residual(system, path):
    """How badly a path violates the equations of motion.

    The acceleration at every interior node is estimated with second
    differences, which works with nonuniform node times too. Returns the
    largest ``|acceleration - force|`` divided by the largest force.
    """
    if len(path) - 2 < 3:
        raise ValueError("need at least 3 interior nodes, got %d"
                         % (len(path) - 2))
    t = path.times
    z = path.z
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    acceleration = 2 * ((z[2:] - z[1:-1]) / h1
                        - (z[1:-1] - z[:-2]) / h0) / (h0 + h1)
    forces = force(system, z[1:-1], t[1:-1])
    return float(np.max(np.abs(acceleration - forces))
                 / np.max(np.abs(forces)))


def kepler_energy(z, v, m):
    """Return ``|v|**2/2 - m/|z|``."""
    return 0.5 * np.abs(v)**2 - m / np.abs(z)


def angular_momentum(z, v):
    """The angular momentum per unit mass, ``z ∧ v``."""
    return (np.conj(z) * v).imag


def _solve_hyperbolic_kepler(e, M):
    # e*sinh(H) - H = M, Newton with a bisection bracket
    M = np.asarray(M, dtype=float)
    absM = np.abs(M)
    with np.errstate(divide='ignore'):
        hi = np.minimum(np.cbrt(6 * absM),
                        np.arcsinh(absM / (e - 1)) if e > 1 else np.inf)
    hi = hi * (1 + 1e-12) + 1e-300
    lo = np.zeros_like(hi)
    H = 0.5 * hi
    for iteration in range(200):
        f = e * np.sinh(H) - H - absM
        lo = np.where(f < 0, H, lo)
        hi = np.where(f > 0, H, hi)
        with np.errstate(divide='ignore', invalid='ignore'):
            newton = H - f / (e * np.cosh(H) - 1)
        bad = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
        new_H = np.where(bad, 0.5 * (lo + hi), newton)
        done = np.all(np.abs(new_H - H) <= 1e-13 * np.maximum(1, H))
        H = new_H
        if done:
            break
    else:   # pragma: no cover
        raise hyperflow.NumericalError(
            "hyperbolic Kepler equation did not converge", {'e': e})
    return np.sign(M) * H


class KeplerConic:
    """An exact hyperbolic Kepler orbit around a fixed mass at the origin.

    Create these with :func:`kepler_conic`. The orbit has energy ``h`` and
    angular momentum ``ell``, the closest approach is at time ``t_peri``
    in the direction ``orientation``. With ``ell == 0`` the orbit is a
    straight radial line through the origin that collides at ``t_peri``.
    """

    def __init__(self, m, h, ell, orientation, t_peri):
        self.m = m
        self.h = h
        self.ell = ell
        self.orientation = orientation
        self.t_peri = t_peri
        self.a = m / (2 * h)
        self.e = math.sqrt(1 + 2 * h * ell**2 / m**2)
        self.mean_motion = math.sqrt(m / self.a**3)

    def __repr__(self):
        return ('<KeplerConic: m=%g, h=%g, ell=%g, e=%g>'
                % (self.m, self.h, self.ell, self.e))

    @property
    def v_inf(self):
        return math.sqrt(2 * self.h)

    def state(self, t):
        """Return ``(position, velocity)`` at time *t* as complex numbers."""
        t = np.asarray(t, dtype=float)
        a, e = self.a, self.e
        H = _solve_hyperbolic_kepler(
            e, self.mean_motion * (t - self.t_peri))
        r = a * (e * np.cosh(H) - 1)
        rotation = np.exp(1j * self.orientation)

        if self.ell == 0:
            with np.errstate(divide='ignore'):
                rdot = np.sign(t - self.t_peri) * np.sqrt(
                    2 * self.h + 2 * self.m / r)
            return r * rotation, rdot * rotation

        side = math.copysign(1, self.ell)
        b = a * math.sqrt(e**2 - 1)
        Hdot = self.mean_motion * a / r
        z = a * (e - np.cosh(H)) + 1j * side * b * np.sinh(H)
        v = -a * np.sinh(H) * Hdot + 1j * side * b * np.cosh(H) * Hdot
        return z * rotation, v * rotation

    def path(self, times):
        z, v = self.state(times)
        return Path(times, z, v)


def kepler_conic(m, h, ell, orientation=0.0, t_peri=0.0):
    """Create a :class:`KeplerConic`.

    >>> conic = kepler_conic(1.0, 0.5, 2.0)
    >>> conic.v_inf
    1.0
    >>> z, v = conic.state(0.0)
    >>> round(float(angular_momentum(z, v)), 12)
    2.0
    """
    if not m > 0:
        raise ValueError("m must be positive, not %r" % (m,))
    if not h > 0:
        raise NotImplementedError(
            "only hyperbolic orbits (h > 0) are supported, got h=%r" % (h,))
    return KeplerConic(m, h, ell, orientation, t_peri)


def kepler_oracle_radial_action(m, h, r0, r1):
    """Action and duration of the radial escape from *r0* to *r1*.

    The escape has energy *h* and no angular momentum around a fixed mass
    *m*, so ``dr/dt = sqrt(2h + 2m/r)``. Returns ``(action, duration)``
    where the action includes the ``h*duration`` term. Both are computed
    with adaptive quadrature.

    >>> action, duration = kepler_oracle_radial_action(0, 0.5, 1, 3)
    >>> round(action, 12), round(duration, 12)
    (2.0, 2.0)
    """
    if not 0 < r0 < r1:
        raise ValueError("expected 0 < r0 < r1, got r0=%r and r1=%r"
                         % (r0, r1))
    if not h > 0:
        raise ValueError("h must be positive, not %r" % (h,))
    if m < 0:
        raise ValueError("m must not be negative, not %r" % (m,))

    def speed(r):
        return math.sqrt(2 * h + 2 * m / r)

    duration, _ = scipy.integrate.quad(
        lambda r: 1 / speed(r), r0, r1, epsabs=0, epsrel=1e-12, limit=200)
    # kinetic + potential + h is speed**2 along the escape
    action, _ = scipy.integrate.quad(
        speed, r0, r1, epsabs=0, epsrel=1e-12, limit=200)
    return action, duration


def radial_kepler_time(m, h, r):
    """Time that the radial escape of :func:`kepler_oracle_radial_action`
    takes from the origin to radius *r*.

    >>> radial_kepler_time(0, 2, 4.0)
    2.0
    """
    r = np.asarray(r, dtype=float)
    if not h > 0:
        raise ValueError("h must be positive, not %r" % (h,))
    if m == 0:
        return _scalar(r / math.sqrt(2 * h))
    a = 2 * h
    b = 2 * m
    result = (np.sqrt(r * (a * r + b)) / a
              - b / a**1.5 * np.arcsinh(np.sqrt(a * r / b)))
    return _scalar(result)


def _scalar(array):
    if np.ndim(array) == 0:
        return float(array)
    return array


def shoot_fixed_end(system, x, y, t1, t2, v_guess, opts=None, n_out=1001):
    """Find the orbit from *x* at *t1* to *y* at *t2* by shooting.

    The initial velocity is solved with :func:`scipy.optimize.fsolve`,
    starting from *v_guess*. Returns ``(path, action)``, where *action* is
    the action of the orbit with ``h = 0``, integrated together with the
    orbit.
    """
    if not t2 > t1:
        raise ValueError("t2 must be greater than t1, got t1=%r and t2=%r"
                         % (t1, t2))
    if opts is None:
        opts = IntegratorOptions()
    y = complex(y)

    def miss(v):
        try:
            solution = _solve(system, x, complex(*v), (t1, t2), opts, False)
        except hyperflow.SingularityError:
            return [1e6, 1e6]
        if solution.status == 1:
            return [1e6, 1e6]
        end = complex(solution.y[0, -1], solution.y[1, -1]) - y
        return [end.real, end.imag]

    guess = complex(v_guess)
    v, info, status, message = scipy.optimize.fsolve(
        miss, [guess.real, guess.imag], xtol=1e-13, full_output=True)
    error = abs(complex(*miss(v)))
    if status != 1 and error > 1e-9 * max(1.0, abs(y)):
        raise hyperflow.NumericalError(
            "shooting did not converge: " + message,
            {'miss': error, 'v': complex(*v)})

    path = integrate_ode(system, x, complex(*v), (t1, t2), opts, n_out=n_out)
    return path, _orbit_action(system, path, complex(*v), opts)


def _orbit_action(system, path, v0, opts):
    # integrates |v|**2/2 + U together with the orbit
    rhs = _equations(system)
    masses = system.masses

    def with_action(t, state):
        z = np.asarray(complex(state[0], state[1]))
        potential = _field(masses, system.positions(t), z)[0]
        kinetic = 0.5 * (state[2]**2 + state[3]**2)
        return rhs(t, state[:4]) + [kinetic + float(potential)]

    z0 = complex(path.z[0])
    solution = scipy.integrate.solve_ivp(
        with_action, (path.start, path.end),
        [z0.real, z0.imag, v0.real, v0.imag, 0.0],
        method=opts['method'], rtol=opts['rtol'], atol=opts['atol'],
        max_step=opts['max_step'])
    return float(solution.y[4, -1])


def work_of_primaries(system, path):
    """Energy given to the massless body by the moving primaries.

    This is ``-∫ dU/dt dt`` along *path* with the partial time derivative
    at a fixed position, and for a solution of the equations of motion it
    equals the change of ``|v|**2/2 - U``. The integral uses Simpson's rule
    on the nodes, so the path should be finely sampled.
    """
    values = potential_dt(system, path.z, path.times)
    return -float(scipy.integrate.simpson(values, x=path.times))


def total_energy(system, path):
    """``|v|**2/2 - U`` at every node of *path*."""
    velocities = path.node_velocities()
    return 0.5 * np.abs(velocities)**2 - potential_U(
        system, path.z, path.times)
