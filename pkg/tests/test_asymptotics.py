import math

import numpy as np
import pytest

import hyperflow

# asymptotic direction of kepler_conic(1, 0.5, 2), eccentricity sqrt(5)
THETA_INF = math.atan2(2, -1)


@pytest.fixture
def outgoing():
    conic = hyperflow.kepler_conic(1.0, 0.5, 2.0)
    return conic.path(np.linspace(0, 40, 401))


def test_five_point_velocities():
    t = np.array([0, 0.1, 0.35, 0.4, 0.9, 1.3, 2.0])
    z = t**4 - 1j * t**2
    v = hyperflow.five_point_velocities(t, z)
    assert np.allclose(v, 4 * t**3 - 2j * t)
    with pytest.raises(ValueError, match='at least 5'):
        hyperflow.five_point_velocities(t[:4], z[:4])


def test_polar_series():
    # a spiral that goes around twice
    t = np.linspace(0, 4 * math.pi, 200)
    spiral = hyperflow.Path(t, (1 + t) * np.exp(1j * t))
    series = hyperflow.polar_series(spiral)
    assert len(series) == 200
    assert series.theta[-1] == pytest.approx(4 * math.pi)
    assert np.allclose(series.positions(), spiral.z)
    assert np.allclose(series.rdot, 1, atol=1e-3)
    assert np.allclose(series.omega, (1 + t)**2, rtol=1e-3)
    assert list(series.columns()) == ['t', 'r', 'theta', 'rdot', 'omega',
                                      'speed']
    assert series.index_at(t[10]) == 10
    with pytest.raises(LookupError):
        series.index_at(0.01)

    with pytest.raises(hyperflow.SingularityError):
        hyperflow.polar_series(hyperflow.Path([0, 1, 2], [1, 0, 1j]))
    with pytest.raises(hyperflow.RefinementNeeded):
        hyperflow.polar_series(hyperflow.Path([0, 1], [1, -1]))


def test_escape_threshold():
    assert hyperflow.radial_escape_threshold(1, 6) == 1
    assert hyperflow.radial_escape_threshold(2, 3, C=2) == 2
    with pytest.raises(ValueError):
        hyperflow.radial_escape_threshold(1, 0)


def test_check_escape(static_center, outgoing):
    series = hyperflow.polar_series(outgoing)
    certificate = hyperflow.check_escape(series, static_center, 10.0)
    assert certificate.valid
    assert certificate.violations == []
    assert certificate.v_floor == certificate.rdot1 / 2
    assert certificate.threshold == pytest.approx(
        math.sqrt(6 / certificate.r1))

    # at the closest approach the radial velocity is zero
    assert not hyperflow.check_escape(series, static_center, 0.0).valid
    with pytest.raises(LookupError):
        hyperflow.check_escape(series, static_center, 10.05)


def test_angular_momentum_bound(static_center, outgoing):
    series = hyperflow.polar_series(outgoing)
    bound = hyperflow.angular_momentum_bound(series, 10.0, 0.5, 0.0)
    assert bound.bound == pytest.approx(2)
    assert bound.ok

    bigger = hyperflow.angular_momentum_bound(series, 10.0, 0.5, 1.0)
    assert bigger.bound > bound.bound
    with pytest.raises(ValueError):
        hyperflow.angular_momentum_bound(series, 10.0, 0, 0.0)

    assert hyperflow.angle_change_bound(2, 0, 1, 10) == pytest.approx(0.2)
    assert hyperflow.angle_change_bound(-2, 0, 1, 10) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        hyperflow.angle_change_bound(1, 1, 1, 0)


def test_limit_angle_and_speed(static_center, outgoing):
    series = hyperflow.polar_series(outgoing)
    certificate = hyperflow.check_escape(series, static_center, 10.0)
    alpha2 = static_center.far_field.alpha2
    theta, bound = hyperflow.limit_angle(series, 10.0, certificate.v_floor,
                                         2.0, alpha2)
    assert abs(theta - THETA_INF) <= bound
    assert bound < 0.1
    # the non-Kepler force bound has no default
    with pytest.raises(TypeError):
        hyperflow.limit_angle(series, 10.0, certificate.v_floor, 2.0)

    v_inf, error = hyperflow.limit_speed(series, static_center)
    assert v_inf == pytest.approx(1.0, rel=1e-9)
    assert error == pytest.approx(2 / series.r[-1], rel=1e-3)

    with pytest.raises(ValueError):
        hyperflow.limit_speed(series, static_center, tail_fraction=0)
    with pytest.raises(ValueError, match='at least 10'):
        hyperflow.limit_speed(series, static_center, tail_fraction=0.01)


def test_limit_speed_of_bound_motion(static_center):
    r = np.linspace(10, 20, 20)
    zeros = np.zeros(20)
    series = hyperflow.PolarSeries(np.arange(20.0), r, zeros, zeros, zeros,
                                   np.sqrt(3 / r - 0.01))
    with pytest.raises(hyperflow.NumericalError) as error:
        hyperflow.limit_speed(series, static_center, tail_fraction=1)
    assert error.value.diagnostics['extrapolated_speed_squared'] < 0


def test_estimate_asymptotics(static_center, outgoing):
    series = hyperflow.polar_series(outgoing)
    certificate, omega, estimate = hyperflow.estimate_asymptotics(
        series, static_center)
    assert certificate.valid
    assert certificate.t1 < 10
    assert omega.ok
    assert abs(estimate.theta_inf - THETA_INF) <= estimate.theta_bound
    assert estimate.v_inf == pytest.approx(1.0, rel=1e-9)


def test_estimate_without_escape(static_center, caplog):
    conic = hyperflow.kepler_conic(1.0, 0.5, 2.0)
    incoming = hyperflow.polar_series(conic.path(np.linspace(-40, -1, 100)))
    certificate, omega, estimate = hyperflow.estimate_asymptotics(
        incoming, static_center)
    assert not certificate.valid
    assert omega is None and estimate is None
    assert 'could not be certified' in caplog.text
