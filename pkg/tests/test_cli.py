import json

import numpy as np
import pytest

import hyperflow
from hyperflow import _cli

jsonschema = pytest.importorskip('jsonschema')

STATIC = {'family': 'static_center', 'm': 1.0}
FAST = {'nodes_per_period': 32, 'max_iter': 2000}


def write_config(tmp_path, content):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(content), encoding='utf-8')
    return str(path)


def load_json(path):
    with open(str(path), 'r', encoding='utf-8') as file:
        return json.load(file)


def check_summary(out):
    with open(_cli.SCHEMA_FILE, 'r', encoding='utf-8') as file:
        schema = json.load(file)
    summary = load_json(out / 'summary.json')
    jsonschema.validate(summary, schema)
    return summary


def test_parse_config(tmp_path):
    config = _cli.parse_config(json.dumps({
        'ephemeris': {'family': 'circular_binary', 'm1': 0.8, 'm2': 0.2},
        'hyperbolic': {'h': 1, 'theta': 0.5, 'x': [3, 0], 't_x': 7.5},
        'options': {'phase_grid': 4},
        'seed': 3,
    }))
    assert config.command == 'hyperbolic'
    assert config.system.masses.tolist() == [0.8, 0.2]
    assert config.options['phase_grid'] == 4
    assert config.seed == 3
    assert config.out == _cli.DEFAULT_OUT
    # start times are moved to the first period
    assert config.query.t_x == pytest.approx(7.5 % config.system.period)
    assert config.schedule.R2 == hyperflow.default_schedule(
        config.system, 3).R2
    assert 'hyperbolic' in repr(config)

    free = _cli.parse_config(json.dumps({
        'ephemeris': STATIC,
        'minimize': {'x': [2, 0], 'y': [0, 3], 's2': None},
    }))
    assert isinstance(free.query, hyperflow.FreeTimeProblem)


def test_parse_config_collects_problems():
    with pytest.raises(hyperflow.ValidationError) as error:
        _cli.parse_config(json.dumps({
            'ephemeris': {'family': 'static_center', 'd': 2},
            'minimize': {'x': [2, 0], 'y': 'far away'},
            'options': {'max_iter': 'lots', 'nonsense': 1},
            'seed': -1,
            'colour': 'blue',
        }))
    problems = error.value.problems
    assert "unknown key 'colour'" in problems
    assert "ephemeris: 'd' doesn't go with family 'static_center'" \
        in problems
    assert "options: unknown option 'nonsense'" in problems
    assert any(problem.startswith('minimize.y:') for problem in problems)
    assert any('max_iter' in problem for problem in problems)
    assert any('seed must be in' in problem for problem in problems)


@pytest.mark.parametrize('content, message', [
    ({'minimize': {'x': [2, 0], 'y': [0, 2]}}, "missing 'ephemeris'"),
    ({'ephemeris': STATIC}, 'expected one of the problem blocks'),
    ({'ephemeris': STATIC, 'verify': {'solution': 'a.csv'},
      'minimize': {'x': [2, 0], 'y': [0, 2]}}, 'expected one problem block'),
    ({'ephemeris': {'family': 'triangle'}, 'verify': {'solution': 'a.csv'}},
     'unknown family'),
    ({'ephemeris': STATIC, 'minimize': {'x': [2, 0], 'y': [0, 2], 't2': 1,
                                        's1': 0}}, "doesn't go with 't2'"),
    ({'ephemeris': STATIC, 'verify': {'solution': 'nope.csv'}},
     'file not found'),
    ({'ephemeris': STATIC, 'minimize': {'x': [2, 0], 'y': [0, 2]},
      'schedule': {'R2': 10}}, 'only for hyperbolic'),
])
def test_bad_configs(tmp_path, content, message):
    with pytest.raises(hyperflow.ValidationError, match=message):
        _cli.parse_config(json.dumps(content), str(tmp_path))


def test_invalid_json():
    with pytest.raises(hyperflow.FormatError, match='line 1 column'):
        _cli.parse_config('{"ephemeris": ')
    with pytest.raises(hyperflow.ValidationError, match='got list'):
        _cli.parse_config('[1, 2]')


def test_exit_code():
    assert _cli.exit_code(hyperflow.ContinuationError('oops', [])) == 3
    assert _cli.exit_code(hyperflow.NumericalError('oops')) == 4
    assert _cli.exit_code(hyperflow.SingularityError('oops')) == 4
    assert _cli.exit_code(hyperflow.ProximityError('oops')) == 4
    assert _cli.exit_code(hyperflow.ValidationError('oops')) == 2
    assert _cli.exit_code(LookupError('oops')) == 2
    with pytest.raises(ZeroDivisionError):
        _cli.exit_code(ZeroDivisionError('oops'))


def test_version(capsys):
    with pytest.raises(SystemExit) as error:
        _cli.main(['--version'])
    assert error.value.code == 0
    assert hyperflow.__version__ in capsys.readouterr().out


def test_ephemeris_check(tmp_path):
    config = write_config(tmp_path, {'ephemeris': {
        'family': 'circular_binary', 'm1': 0.5, 'm2': 0.5}})
    out = tmp_path / 'out'
    assert _cli.main(['ephemeris', 'check', '--config', config,
                      '--out', str(out)]) == 0
    summary = check_summary(out)
    assert summary['command'] == 'check'
    assert summary['result']['ok'] is True
    assert summary['result']['newton_residual'] < 1e-10
    assert summary['ephemeris']['masses'] == [0.5, 0.5]
    header = (out / 'plotdata' / 'primaries.csv').read_text().splitlines()[0]
    assert header == 't,x0,y0,x1,y1'


def test_minimize(tmp_path):
    config = write_config(tmp_path, {
        'ephemeris': STATIC,
        'minimize': {'x': [2, 0], 'y': [0, 2], 't2': 2},
        'options': FAST,
        'out': str(tmp_path / 'out'),
    })
    assert _cli.main(['minimize', '--config', config]) == 0
    out = tmp_path / 'out'
    summary = check_summary(out)
    assert summary['result']['nodes'] == len(
        hyperflow.read_path_csv(str(out / 'solution.csv')))
    assert (out / 'diagnostics.csv').read_text().startswith(
        't,r,theta,rdot,omega,speed,dmin')
    assert (out / 'plotdata' / 'trajectory.csv').exists()
    assert not (out / 'error.json').exists()

    solution = hyperflow.read_path_csv(str(out / 'solution.csv'))
    assert solution.z[0] == 2 and solution.z[-1] == 2j
    assert solution.velocities is not None


def test_wrong_command(tmp_path, capsys):
    config = write_config(tmp_path, {
        'ephemeris': STATIC, 'minimize': {'x': [2, 0], 'y': [0, 2]}})
    out = tmp_path / 'out'
    assert _cli.main(['verify', '--config', config, '--out', str(out)]) == 2
    error = load_json(out / 'error.json')
    assert error['exit_code'] == 2
    assert error['error'] == 'ValidationError'
    assert 'has a minimize block' in error['details']['problems'][0]
    assert 'hyperflow: ' in capsys.readouterr().err


def test_bad_config_file(tmp_path):
    config = tmp_path / 'config.json'
    config.write_text('{"ephemeris": {"family": ', encoding='utf-8')
    out = tmp_path / 'out'
    assert _cli.main(['minimize', '--config', str(config),
                      '--out', str(out)]) == 2
    error = load_json(out / 'error.json')
    assert error['error'] == 'FormatError'
    assert error['details'] is None
    assert not (out / 'summary.json').exists()


def test_verify(tmp_path):
    conic = hyperflow.kepler_conic(1.0, 0.5, 2.0)
    exact = conic.path(np.linspace(-2, 2, 401))
    hyperflow.write_path_csv(exact, str(tmp_path / 'exact.csv'))
    config = write_config(tmp_path, {
        'ephemeris': STATIC, 'verify': {'solution': 'exact.csv'}})

    out = tmp_path / 'out'
    assert _cli.main(['verify', '--config', config, '--out', str(out),
                      '--seed', '7']) == 0
    summary = check_summary(out)
    assert summary['seed'] == 7
    result = summary['result']
    assert result['passed'] is True
    assert result['nodes'] == 401
    assert result['shooting']['collision'] is False
    assert result['shooting']['relative_miss'] < 1e-6
    assert abs(result['energy_change']) < 1e-6
    assert result['work_of_primaries'] == 0


def test_failed_verify(tmp_path):
    conic = hyperflow.kepler_conic(1.0, 0.5, 2.0)
    exact = conic.path(np.linspace(-2, 2, 401))
    wobbly = exact.with_positions(exact.z + 1e-3 * np.sin(40 * exact.times))
    hyperflow.write_path_csv(wobbly, str(tmp_path / 'wobbly.csv'))
    config = write_config(tmp_path, {
        'ephemeris': STATIC,
        'verify': {'solution': 'wobbly.csv', 'threshold': 1e-3}})

    out = tmp_path / 'out'
    assert _cli.main(['verify', '--config', config, '--out', str(out)]) == 4
    summary = check_summary(out)
    assert summary['result']['passed'] is False
    assert 'energy_change' not in summary['result']
    error = load_json(out / 'error.json')
    assert error['error'] == 'NumericalError'
    assert error['exit_code'] == 4
    assert error['details']['el_residual'] > 1e-3
