import os
import sys

import numpy as np
import pytest

import hyperflow
from hyperflow import _cli


def test_nice_import_error(monkeypatch, tmp_path):
    old_modules = sys.modules.copy()
    try:
        for module in list(sys.modules):
            if (module.split('.')[0] == 'matplotlib'
                    or module == 'hyperflow.extras.plotting'):
                del sys.modules[module]

        with open(os.path.join(str(tmp_path), 'matplotlib.py'), 'w') as bad:
            bad.write('raise ImportError("oh no")')

        monkeypatch.syspath_prepend(str(tmp_path))
        with pytest.raises(ImportError) as error:
            import hyperflow.extras.plotting     # noqa

        assert str(error.value) == (
            "oh no. Maybe try 'pip install hyperflow[plot]' to fix this?")
    finally:
        sys.modules.update(old_modules)


PNG_MAGIC = b'\x89PNG'


def test_plots(tmp_path, binary):
    pytest.importorskip('matplotlib')
    from hyperflow.extras import plotting

    conic = hyperflow.kepler_conic(1.0, 0.5, 2.0)
    path = conic.path(np.linspace(-3, 3, 101))
    orbit = os.path.join(str(tmp_path), 'orbit.png')
    plotting.plot_solution(path, binary, orbit, title="a conic")
    polar = os.path.join(str(tmp_path), 'polar.png')
    plotting.plot_diagnostics(hyperflow.polar_series(path), polar)

    for filename in [orbit, polar]:
        with open(filename, 'rb') as file:
            assert file.read(4) == PNG_MAGIC


def test_plot_option(tmp_path):
    pytest.importorskip('matplotlib')
    conic = hyperflow.kepler_conic(1.0, 0.5, 2.0)
    hyperflow.write_path_csv(conic.path(np.linspace(-2, 2, 201)),
                             str(tmp_path / 'conic.csv'))
    config = tmp_path / 'config.json'
    config.write_text('{"ephemeris": {"family": "static_center"}, '
                      '"verify": {"solution": "conic.csv"}}')

    out = tmp_path / 'out'
    assert _cli.main(['verify', '--config', str(config), '--out', str(out),
                      '--plot']) == 0
    assert (out / 'plotdata' / 'solution.png').exists()
    assert (out / 'plotdata' / 'polar.png').exists()
