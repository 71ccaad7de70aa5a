import argparse
import csv
import json
import logging
import math
import os
import sys
import threading

import numpy as np

import hyperflow
from hyperflow._config import Options, from_json
from hyperflow._verify import IntegratorOptions

log = logging.getLogger(__name__)

SCHEMA_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                           'summary.schema.json')
DEFAULT_OUT = 'hyperflow-out'
PROBLEMS = ('minimize', 'hyperbolic', 'bihyperbolic', 'verify')

_POINT = (float, float)
_TYPES = {
    'ephemeris': {
        'family': str, 'm': float, 'period': float, 'm1': float,
        'm2': float, 'd': float, 'phase': float, 'file': str,
        'newton_tol': float,
    },
    'minimize': {
        'x': _POINT, 'y': _POINT, 'h': float, 't1': float, 't2': float,
        's1': float, 's2': float, 'guess': str, 'refine': bool,
        'subpath_samples': int,
    },
    'hyperbolic': {
        'h': float, 'theta': float, 'x': _POINT, 't_x': float,
        'direction': str,
    },
    'bihyperbolic': {
        'h': float, 'theta_minus': float, 'theta_plus': float, 'i0': int,
        'i1': int, 'nu_target': int, 'radii': [_POINT], 'R2': float,
        'window': float, 'tol_position': float, 'tol_velocity': float,
    },
    'verify': {'solution': str, 'threshold': float},
    'schedule': {
        'R2': float, 'radii': [float], 'window': float,
        'tol_position': float, 'tol_velocity': float,
    },
}
# keys that may be null in the config file
_NULLABLE = {('minimize', 's2')}
_REQUIRED = {
    'ephemeris': ['family'],
    'minimize': ['x', 'y'],
    'hyperbolic': ['h', 'theta', 'x'],
    'bihyperbolic': ['h', 'theta_minus', 'theta_plus', 'i0', 'i1',
                     'nu_target'],
    'verify': ['solution'],
}
_FAMILY_KEYS = {
    'static_center': {'m', 'period'},
    'circular_binary': {'m1', 'm2', 'd', 'phase'},
    'sampled': {'file', 'newton_tol'},
}


class RunConfig:
    """A checked configuration file.

    .. attribute:: system

        The :class:`.PrimarySystem`.

    .. attribute:: command

        The problem block's name, or None if there is no problem block.

    .. attribute:: block

        The problem block as a dict with converted values.

    .. attribute:: query

        The object that the problem block describes, e.g. a
        :class:`.HyperbolicQuery`.
    """

    def __init__(self, raw, system, command, block, query, schedule, options,
                 integrator, out, seed):
        self.raw = raw
        self.system = system
        self.command = command
        self.block = block
        self.query = query
        self.schedule = schedule
        self.options = options
        self.integrator = integrator
        self.out = out
        self.seed = seed

    def __repr__(self):
        return '<%s: %s on %r>' % (type(self).__name__, self.command,
                                   self.system)


def _convert_block(name, value, problems):
    # convert every key separately so that all problems get reported
    if not isinstance(value, dict):
        problems.append("%s: expected an object, got %r" % (name, value))
        return None
    result = {}
    for key, item in value.items():
        if key not in _TYPES[name]:
            problems.append("%s: unknown key %r" % (name, key))
        elif item is None and (name, key) in _NULLABLE:
            result[key] = None
        else:
            try:
                result[key] = from_json(_TYPES[name][key], item,
                                        '%s.%s' % (name, key))
            except ValueError as e:
                problems.append(str(e))
    for key in _REQUIRED.get(name, []):
        if key not in value:
            problems.append("%s: missing %r" % (name, key))
    return result


def _convert_options(cls, name, value, problems):
    options = cls()
    if not isinstance(value, dict):
        problems.append("%s: expected an object, got %r" % (name, value))
        return options
    for key, item in value.items():
        try:
            options[key] = item
        except KeyError:
            problems.append("%s: unknown option %r" % (name, key))
        except ValueError as e:
            problems.append("%s: %s" % (name, e))
    return options


def _make_system(block, base_dir, problems):
    family = block['family']
    if family not in _FAMILY_KEYS:
        problems.append("ephemeris: unknown family %r, should be one of %s"
                        % (family, ', '.join(sorted(_FAMILY_KEYS))))
        return None
    for key in sorted(set(block) - _FAMILY_KEYS[family] - {'family'}):
        problems.append("ephemeris: %r doesn't go with family %r"
                        % (key, family))

    try:
        if family == 'static_center':
            return hyperflow.make_static_center(block.get('m', 1.0),
                                                block.get('period', 1.0))
        if family == 'circular_binary':
            return hyperflow.make_circular_binary(
                block.get('m1', 0.5), block.get('m2', 0.5),
                block.get('d', 1.0), block.get('phase', 0.0))
        if 'file' not in block:
            problems.append("ephemeris: missing 'file'")
            return None
        path = os.path.join(base_dir, block['file'])
        if not os.path.isfile(path):
            problems.append("ephemeris: file not found: %s" % path)
            return None
        return hyperflow.load_sampled_file(
            path, newton_tol=block.get('newton_tol', 1e-8))
    except hyperflow.ValidationError as e:
        problems.extend('ephemeris: ' + problem for problem in e.problems)
    except ValueError as e:
        problems.append('ephemeris: %s' % e)
    return None


def _make_query(command, block, system, base_dir, problems):
    # the object that describes the problem, or None after a problem
    try:
        if command == 'minimize':
            if 't2' in block:
                for key in ['s1', 's2']:
                    if key in block:
                        raise ValueError("%r doesn't go with 't2', use t1 "
                                         "and t2 or s1 and s2" % key)
                if block.get('guess', 'chord') not in ('chord', 'arc'):
                    raise ValueError("guess must be 'chord' or 'arc', not "
                                     "%r" % block['guess'])
                return hyperflow.FixedEndProblem(
                    block['x'], block['y'], block.get('t1', 0.0),
                    block['t2'], block.get('h', 0.0))
            return hyperflow.FreeTimeProblem(
                block['x'], block['y'], block.get('s1', 0.0),
                block.get('s2'), block.get('h', 1.0))

        if command == 'hyperbolic':
            # solve_forward wants the start time within the first period
            t_x = block.get('t_x', 0.0) % system.period
            return hyperflow.HyperbolicQuery(
                block['h'], block['theta'], block['x'], t_x,
                block.get('direction', 'forward'))

        if command == 'bihyperbolic':
            tied = hyperflow.TiedClass(block['i0'], block['i1'],
                                       block['nu_target'])
            tied.check(system)
            return hyperflow.BiQuery(
                block['h'], block['theta_minus'], block['theta_plus'], tied,
                block.get('radii'), block.get('R2'), block.get('window'),
                block.get('tol_position', 1e-5),
                block.get('tol_velocity', 1e-4))

        assert command == 'verify'
        path = os.path.join(base_dir, block['solution'])
        if not os.path.isfile(path):
            raise ValueError("file not found: %s" % path)
        if not block.get('threshold', 1e-3) > 0:
            raise ValueError("threshold must be positive, not %r"
                             % block['threshold'])
        return path
    except (ValueError, TypeError) as e:
        problems.append('%s: %s' % (command, e))
        return None


def _make_schedule(block, system, query, problems):
    try:
        if block is None:
            return hyperflow.default_schedule(system, query.x)
        default = hyperflow.default_schedule(system, query.x)
        R2 = block.get('R2', default.R2)
        radii = block.get('radii', [R2 * 2**n for n in range(1, 9)])
        schedule = hyperflow.ContinuationSchedule(
            R2, radii, block.get('window', default.window),
            block.get('tol_position', 1e-5), block.get('tol_velocity', 1e-4))
        schedule.check(system, query.x)
        return schedule
    except ValueError as e:
        problems.append('schedule: %s' % e)
        return None


def parse_config(text, base_dir='.', require_problem=True):
    """Parse and check the JSON text of a configuration file.

    Files named in the configuration are relative to *base_dir*. Raises
    :exc:`hyperflow.FormatError` for invalid JSON and
    :exc:`hyperflow.ValidationError` with every problem found otherwise.
    Returns a :class:`RunConfig`.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise hyperflow.FormatError(
            "invalid JSON at line %d column %d: %s"
            % (e.lineno, e.colno, e.msg)) from e
    if not isinstance(raw, dict):
        raise hyperflow.ValidationError(
            "expected a JSON object, got %s" % type(raw).__name__)

    problems = []
    known = set(PROBLEMS) | {'ephemeris', 'options', 'integrator',
                             'schedule', 'out', 'seed'}
    for key in sorted(set(raw) - known):
        problems.append("unknown key %r" % key)

    commands = [name for name in PROBLEMS if name in raw]
    if len(commands) > 1:
        problems.append("expected one problem block, got %s"
                        % ', '.join(commands))
    elif require_problem and not commands:
        problems.append("expected one of the problem blocks %s"
                        % ', '.join(PROBLEMS))
    command = commands[0] if len(commands) == 1 else None

    system = None
    if 'ephemeris' not in raw:
        problems.append("missing 'ephemeris'")
    else:
        block = _convert_block('ephemeris', raw['ephemeris'], problems)
        if block is not None and 'family' in block:
            system = _make_system(block, base_dir, problems)

    options = _convert_options(Options, 'options', raw.get('options', {}),
                               problems)
    integrator = _convert_options(IntegratorOptions, 'integrator',
                                  raw.get('integrator', {}), problems)

    seed = 0
    if 'seed' in raw:
        try:
            seed = from_json(int, raw['seed'], 'seed')
            if not 0 <= seed < 2**64:
                problems.append("seed must be in [0, 2**64), not %d" % seed)
        except ValueError as e:
            problems.append(str(e))
    out = raw.get('out', DEFAULT_OUT)
    if not isinstance(out, str):
        problems.append("out: expected a string, got %r" % (out,))

    block = query = schedule = None
    if command is not None:
        block = _convert_block(command, raw[command], problems)
        missing = block is None or any(
            key not in block for key in _REQUIRED[command])
        if system is not None and not missing:
            query = _make_query(command, block, system, base_dir, problems)
    if 'schedule' in raw:
        if command != 'hyperbolic':
            problems.append("'schedule' is only for hyperbolic problems")
        schedule_block = _convert_block('schedule', raw['schedule'],
                                        problems)
    else:
        schedule_block = None
    if command == 'hyperbolic' and query is not None:
        schedule = _make_schedule(schedule_block, system, query, problems)

    if problems:
        raise hyperflow.ValidationError(problems)
    return RunConfig(raw, system, command, block, query, schedule, options,
                     integrator, out, seed)


def _clean(value):
    # something that json.dumps takes with allow_nan=False
    if isinstance(value, dict):
        return {str(key): _clean(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(item) for item in value]
    if isinstance(value, np.ndarray):
        return [_clean(item) for item in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (complex, np.complexfloating)):
        return [_clean(value.real), _clean(value.imag)]
    if value is None or isinstance(value, str):
        return value
    raise TypeError("can't convert %r to JSON" % (value,))


def _write_csv(filename, columns):
    # columns is a list of (name, values) pairs
    names = [name for name, values in columns]
    arrays = [np.asarray(values, dtype=float) for name, values in columns]
    with open(filename, 'w', newline='', encoding='utf-8') as file:
        writer = csv.writer(file)
        writer.writerow(names)
        for row in zip(*arrays):
            writer.writerow(['%.17g' % value for value in row])


class _Artifacts:
    """Writes the output files of a run to a directory."""

    def __init__(self, directory):
        self.directory = directory
        os.makedirs(os.path.join(directory, 'plotdata'), exist_ok=True)
        self._lock = threading.Lock()
        self._log_file = None

    def filename(self, *parts):
        return os.path.join(self.directory, *parts)

    def start_log(self):
        self._log_file = open(self.filename('solve_log.jsonl'), 'w',
                              encoding='utf-8')
        hyperflow.on_descent_iteration.connect(self._log_iteration)

    def stop_log(self):
        if self._log_file is not None:
            hyperflow.on_descent_iteration.disconnect(self._log_iteration)
            self._log_file.close()
            self._log_file = None

    def _log_iteration(self, record):
        line = json.dumps(_clean(record), sort_keys=True)
        with self._lock:
            self._log_file.write(line + '\n')

    def path(self, path, system):
        velocities = path.node_velocities()
        hyperflow.write_path_csv(
            hyperflow.Path(path.times, path.z, velocities),
            self.filename('solution.csv'))

        series = hyperflow.polar_series(path)
        q = system.positions(path.times)
        dmin = np.min(np.abs(path.z[:, np.newaxis] - q), axis=1)
        columns = list(series.columns().items()) + [('dmin', dmin)]
        _write_csv(self.filename('diagnostics.csv'), columns)

        _write_csv(self.filename('plotdata', 'trajectory.csv'),
                   [('t', path.times), ('x', path.z.real),
                    ('y', path.z.imag)])
        self.primaries(system, path.times)

    def primaries(self, system, times):
        q = system.positions(times)
        columns = [('t', times)]
        for index in range(len(system)):
            columns.append(('x%d' % index, q[:, index].real))
            columns.append(('y%d' % index, q[:, index].imag))
        _write_csv(self.filename('plotdata', 'primaries.csv'), columns)

    def history(self, steps, fields):
        columns = [(name, [getattr(step, name) for step in steps])
                   for name in fields]
        _write_csv(self.filename('plotdata', 'history.csv'), columns)

    def summary(self, summary):
        text = json.dumps(_clean(summary), indent=2, sort_keys=True,
                          allow_nan=False)
        with open(self.filename('summary.json'), 'w',
                  encoding='utf-8') as file:
            file.write(text + '\n')

    def error(self, error, code):
        content = {'error': type(error).__name__, 'message': str(error),
                   'exit_code': code, 'details': _error_details(error)}
        with open(self.filename('error.json'), 'w', encoding='utf-8') as file:
            json.dump(_clean(content), file, indent=2, sort_keys=True)
            file.write('\n')


def _error_details(error):
    if isinstance(error, hyperflow.ValidationError):
        return {'problems': error.problems}
    if isinstance(error, hyperflow.ContinuationError):
        return {'history': [step._asdict() for step in error.history]}
    if isinstance(error, hyperflow.NumericalError):
        return error.diagnostics
    if isinstance(error, hyperflow.SingularityError):
        return {'index': error.index, 'time': error.time}
    return None


def _system_json(system):
    far = system.far_field
    return {
        'name': system.name, 'masses': system.masses, 'period': system.period,
        'R0': system.R0, 'rho0': system.rho0, 'length_scale':
        system.length_scale, 'far_field': far._asdict(),
    }


def _angle(value):
    return {'raw': value, 'mod_2pi': value % (2 * math.pi)}


def _run_check(config, artifacts):
    system = config.system
    system.check()
    times = system.sample_times(256)
    artifacts.primaries(system, times)
    return {'newton_residual': system.newton_residual(times), 'ok': True}


def _run_minimize(config, artifacts):
    system = config.system
    problem = config.query
    opts = config.options
    block = config.block
    refinement = None

    if isinstance(problem, hyperflow.FixedEndProblem):
        if block.get('guess', 'chord') == 'arc':
            guess = hyperflow.initial_guess_via_arc(
                system, problem.x, problem.y, problem.t1, problem.t2, opts)
        else:
            guess = hyperflow.straight_chord(
                system, problem.x, problem.y, problem.t1, problem.t2, opts)
        if block.get('refine', False):
            levels = hyperflow.refine_grid(system, problem, guess, opts)
            result = levels[-1]
            refinement = [{'nodes': len(level.path), 'action': level.action,
                           'el_residual': level.el_residual}
                          for level in levels]
        else:
            result = hyperflow.minimize_fixed_end(system, problem, guess,
                                                  opts)
    else:
        result = hyperflow.minimize_free_time(system, problem, opts)[0]

    if result.status == 'collision-suspected':
        result = hyperflow.collision_escape(system, result, problem.h, opts)

    summary = result.to_json()
    summary['details'] = result.details
    summary['refinement'] = refinement
    samples = block.get('subpath_samples', 0)
    if samples:
        report = hyperflow.check_subpath_minimality(
            system, result, problem.h, samples, opts, seed=config.seed)
        summary['subpath'] = report._asdict()
    artifacts.path(result.path, system)
    return summary


def _run_hyperbolic(config, artifacts):
    query = config.query
    if query.direction == 'forward':
        solution = hyperflow.solve_forward(config.system, query,
                                           config.schedule, config.options)
    else:
        solution = hyperflow.solve_backward(config.system, query,
                                            config.schedule, config.options)
    summary = solution.to_json()
    summary['schedule'] = config.schedule.to_json()
    summary['angles'] = {'theta': _angle(config.block['theta'])}
    if solution.estimate is not None:
        summary['angles']['theta_inf'] = _angle(solution.estimate.theta_inf)
    artifacts.path(solution.path, config.system)
    artifacts.history(solution.history,
                      ['n', 'radius', 'action', 'action_bound', 'duration'])
    return summary


def _run_bihyperbolic(config, artifacts):
    solution = hyperflow.solve_bihyperbolic(config.system, config.query,
                                            config.options)
    summary = solution.to_json()
    angles = {'theta_minus': _angle(config.block['theta_minus']),
              'theta_plus': _angle(config.block['theta_plus'])}
    for name, end in [('minus', solution.minus), ('plus', solution.plus)]:
        if end.estimate is not None:
            angles['theta_inf_' + name] = _angle(end.estimate.theta_inf)
    summary['angles'] = angles
    artifacts.path(solution.path, config.system)
    artifacts.history(solution.history,
                      ['n', 'action', 'winding', 's_x', 's_y', 'duration'])
    return summary


def _run_verify(config, artifacts):
    system = config.system
    path = hyperflow.read_path_csv(config.query)
    threshold = config.block.get('threshold', 1e-3)
    summary = {
        'solution': config.query,
        'nodes': len(path),
        'el_residual': hyperflow.el_residual(system, path),
        'threshold': threshold,
        'd_min': hyperflow.min_primary_distance(system, path)._asdict(),
    }
    if path.velocities is not None:
        energy = hyperflow.total_energy(system, path)
        work = hyperflow.work_of_primaries(system, path)
        summary['energy_change'] = float(energy[-1] - energy[0])
        summary['work_of_primaries'] = work

    length = float(np.sum(np.abs(np.diff(path.z))))
    try:
        orbit = hyperflow.integrate_ode(
            system, path.z[0], path.node_velocities()[0],
            (path.start, path.end), config.integrator, times=path.times)
    except hyperflow.CollisionApproach as e:
        summary['shooting'] = {'collision': True, 'index': e.index,
                               'time': e.time}
    else:
        miss = abs(orbit.z[-1] - path.z[-1])
        summary['shooting'] = {'collision': False, 'miss': miss,
                               'relative_miss': miss / max(length, 1e-300)}

    summary['passed'] = summary['el_residual'] <= threshold
    artifacts.path(path, system)
    if not summary['passed']:
        raise hyperflow.NumericalError(
            "Euler-Lagrange residual %g is above the threshold %g"
            % (summary['el_residual'], threshold), summary)
    return summary


_RUNNERS = {
    'check': _run_check,
    'minimize': _run_minimize,
    'hyperbolic': _run_hyperbolic,
    'bihyperbolic': _run_bihyperbolic,
    'verify': _run_verify,
}


def exit_code(error):
    """The exit status of the command line program for an exception."""
    if isinstance(error, hyperflow.ContinuationError):
        return 3
    if isinstance(error, (hyperflow.NumericalError,
                          hyperflow.SingularityError,
                          hyperflow.InitializationError,
                          hyperflow.RefinementNeeded,
                          hyperflow.ProximityError)):
        return 4
    if isinstance(error, (ValueError, LookupError, OSError)):
        return 2
    raise error


def run(config, command=None, plot=False):
    """Solve the configured problem and write the results.

    *command* is ``'check'`` for checking the ephemeris only, and defaults
    to the configuration's problem block. Returns the exit status.
    """
    command = command or config.command
    artifacts = _Artifacts(config.out)
    summary = {'command': command, 'version': hyperflow.__version__,
               'seed': config.seed, 'ephemeris': _system_json(config.system),
               'config': config.raw}

    artifacts.start_log()
    try:
        summary['result'] = _RUNNERS[command](config, artifacts)
    except Exception as e:
        code = exit_code(e)
        if command == 'verify' and isinstance(e, hyperflow.NumericalError):
            # a failed check still gets its numbers written
            summary['result'] = e.diagnostics
            artifacts.summary(summary)
        artifacts.error(e, code)
        log.error("%s: %s", type(e).__name__, e)
        return code
    finally:
        artifacts.stop_log()

    artifacts.summary(summary)
    if plot:
        _plot(artifacts, config.system)
    log.info("wrote results to %s", config.out)
    return 0


def _plot(artifacts, system):
    from hyperflow.extras import plotting

    path = hyperflow.read_path_csv(artifacts.filename('solution.csv'))
    plotting.plot_solution(path, system,
                           artifacts.filename('plotdata', 'solution.png'))
    plotting.plot_diagnostics(hyperflow.polar_series(path),
                              artifacts.filename('plotdata', 'polar.png'))


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', required=True,
                        help="JSON configuration file")
    common.add_argument('--out', help="output directory, overrides the "
                        "configuration file")
    common.add_argument('--threads', type=int, default=1,
                        help="worker threads for grids of solves")
    common.add_argument('--seed', type=int,
                        help="random seed, overrides the configuration file")
    common.add_argument('--verbose', action='store_true',
                        help="log every iteration")
    common.add_argument('--plot', action='store_true',
                        help="also draw PNG plots, needs matplotlib")

    parser = argparse.ArgumentParser(
        prog='hyperflow', description="Find hyperbolic and bi-hyperbolic "
        "orbits of a massless body by minimizing action.")
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + hyperflow.__version__)
    subparsers = parser.add_subparsers(dest='command', required=True)

    ephemeris = subparsers.add_parser('ephemeris', help="ephemeris tools")
    ephemeris_commands = ephemeris.add_subparsers(dest='action',
                                                  required=True)
    ephemeris_commands.add_parser('check', parents=[common],
                                  help="check the motion of the primaries")
    for name in PROBLEMS:
        subparsers.add_parser(name, parents=[common],
                              help="solve a %s problem" % name)
    return parser


def _load(args):
    try:
        with open(args.config, 'r', encoding='utf-8') as file:
            text = file.read()
    except OSError as e:
        raise hyperflow.ValidationError("can't read %s: %s"
                                        % (args.config, e.strerror)) from e
    base_dir = os.path.dirname(os.path.abspath(args.config))
    checking = args.command == 'ephemeris'
    config = parse_config(text, base_dir, require_problem=not checking)
    if not checking and config.command != args.command:
        raise hyperflow.ValidationError(
            "the configuration file has a %s block, not %s"
            % (config.command, args.command))
    if args.out is not None:
        config.out = args.out
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise hyperflow.ValidationError(
                "--seed must be in [0, 2**64), not %d" % args.seed)
        config.seed = args.seed
    return config


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(name)s %(levelname)s: %(message)s')

    try:
        hyperflow.set_threads(args.threads)
        config = _load(args)
    except (ValueError, TypeError) as e:
        out = args.out or DEFAULT_OUT
        os.makedirs(out, exist_ok=True)
        artifacts = _Artifacts(out)
        code = 2
        artifacts.error(e, code)
        print("hyperflow: %s" % e, file=sys.stderr)
        return code

    command = 'check' if args.command == 'ephemeris' else args.command
    code = run(config, command, args.plot)
    if code != 0:
        with open(os.path.join(config.out, 'error.json'), 'r',
                  encoding='utf-8') as file:
            print("hyperflow: %s" % json.load(file)['message'],
                  file=sys.stderr)
    return code
