"""Hyperflow finds escape orbits of a massless body by minimizing action."""
# flake8: noqa

__version__ = '0.1'


# these are defined here so that error messages say hyperflow.SomeError
# instead of hyperflow._something.SomeError
class SingularityError(ArithmeticError):
    """Raised when something is evaluated exactly at a primary.

    The ``index`` attribute is the index of the primary (or ``None`` when the
    singular point is the origin), and ``time`` is the time of the
    coincidence.
    """

    def __init__(self, message, index=None, time=None):
        super().__init__(message)
        self.index = index
        self.time = time


class CollisionApproach(SingularityError):
    """Raised when an integrated orbit gets too close to a primary.

    The ``path`` attribute contains what was integrated before stopping, and
    ``state`` is ``(t, z, v)`` at the stopping time.
    """

    def __init__(self, message, index, time, path, state):
        super().__init__(message, index, time)
        self.path = path
        self.state = state


class FormatError(ValueError):
    """Raised when input data is structured wrong, e.g. a bad sample file."""


class ValidationError(ValueError):
    """Raised when input data is well-formed but doesn't make sense.

    The ``problems`` attribute is a list of strings, one for each problem.
    All problems are collected before raising this, so fixing the first
    one and trying again is not necessary.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        super().__init__('; '.join(problems))
        self.problems = list(problems)


class NumericalError(RuntimeError):
    """Raised when a computation produces garbage, like NaN.

    The ``diagnostics`` attribute is a dict with details about what went
    wrong.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = {} if diagnostics is None else diagnostics


class ContinuationError(RuntimeError):
    """Raised when a continuation runs out of steps without converging.

    The ``history`` attribute is a list of the steps done so far.
    """

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


class RefinementNeeded(ValueError):
    """Raised when a path is too coarse for tracking angles reliably."""


class ProximityError(ValueError):
    """Raised when a deformation can't stay close enough to the input path.

    Trying again with a smaller window usually helps.
    """


class InitializationError(RuntimeError):
    """Raised when an initial guess of the requested kind can't be built."""


from hyperflow._structures import Callback, on_descent_iteration
from hyperflow._config import Options, from_json
from hyperflow._threads import set_threads, get_threads, map_concurrently
from hyperflow._ephemeris import (
    FarField, PrimarySystem, make_circular_binary, make_static_center,
    load_sampled_periodic, load_sampled_file, far_field_constants,
    blow_up_system, reflect_system)
from hyperflow._path import Path, read_path_csv, write_path_csv
from hyperflow._action import (
    ActionBreakdown, DistanceRecord, potential_U, split_W, force,
    potential_dt, quadrature_plan, action, action_gradient,
    min_primary_distance, concatenate)
from hyperflow._verify import (
    IntegratorOptions, integrate_ode, el_residual, KeplerConic, kepler_conic,
    kepler_oracle_radial_action, radial_kepler_time, kepler_energy,
    angular_momentum, shoot_fixed_end, work_of_primaries, total_energy)
from hyperflow._descent import Descent
from hyperflow._minimize import (
    FixedEndProblem, FreeTimeProblem, MinimizeResult, SubpathReport,
    fixed_end_action_bound, free_time_action_bound, time_grid,
    straight_chord, initial_guess_via_arc, minimize_fixed_end, refine_grid,
    refinement_study, minimize_free_time, optimize_arrival_phase,
    check_subpath_minimality, lipschitz_check, collision_escape,
    proximity_penalty, guard_distance, golden_section, LipschitzEstimate)
from hyperflow._collision import (
    CollisionEvent, BlowUpFrame, relative_path, absolute_path,
    binary_energy, parabolic_homothetic, homothetic_action, fit_asymptotics,
    blow_up_path, kepler_deform_arcs, local_deform, argument_increment)
from hyperflow._asymptotics import (
    PolarSeries, EscapeCertificate, OmegaBound, AsymptoticEstimate,
    polar_series, radial_escape_threshold, check_escape,
    angular_momentum_bound, angle_change_bound, limit_angle, limit_speed,
    estimate_asymptotics, five_point_velocities)
from hyperflow._hyperbolic import (
    HyperbolicQuery, ContinuationSchedule, ContinuationStep,
    HyperbolicSolution, ray_target, first_exit_time, default_schedule,
    solve_forward, solve_backward, rescale_general_period)
from hyperflow._bihyperbolic import (
    TiedClass, CrossingTimes, BiQuery, BiHyperbolicSolution, crossing_times,
    relative_winding, winding_penalty, tied_guess, minimize_tied,
    solve_bihyperbolic)
from hyperflow import extras
