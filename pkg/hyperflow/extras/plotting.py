"""PNG plots of solutions, needs matplotlib.

Example::

    from hyperflow.extras import plotting

    plotting.plot_solution(solution.path, system, 'orbit.png')
    plotting.plot_diagnostics(hyperflow.polar_series(solution.path),
                              'polar.png')
"""

# see pyproject.toml
try:
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure
except ImportError as e:
    raise ImportError(str(e) + ". Maybe try 'pip install hyperflow[plot]' "
                      "to fix this?").with_traceback(e.__traceback__) from None

import numpy as np


def _save(figure, filename):
    # no pyplot, so that this works in threads and without a display
    FigureCanvasAgg(figure)
    figure.savefig(filename, dpi=120)


def plot_solution(path, system, filename, title=None):
    """Draw *path* and the orbits of the primaries during it to a PNG file.

    Every primary's position at the end of the path is marked with a dot.
    """
    figure = Figure(figsize=(6, 6))
    axes = figure.add_subplot(1, 1, 1)
    axes.plot(path.z.real, path.z.imag, color='black', linewidth=1,
              label='massless body')

    times = np.linspace(path.start, path.end, 2000)
    q = system.positions(times)
    for index in range(len(system)):
        line, = axes.plot(q[:, index].real, q[:, index].imag, linewidth=0.7,
                          label='primary %d' % index)
        axes.plot(q[-1, index].real, q[-1, index].imag, 'o',
                  color=line.get_color())

    axes.set_aspect('equal', adjustable='datalim')
    axes.set_xlabel('x')
    axes.set_ylabel('y')
    axes.legend(loc='best', fontsize='small')
    if title is not None:
        axes.set_title(title)
    _save(figure, filename)


def plot_diagnostics(series, filename):
    """Plot ``r``, ``rdot`` and the angular momentum of a
    :class:`.PolarSeries` against time to a PNG file.
    """
    figure = Figure(figsize=(7, 8))
    columns = [('r', series.r), ('rdot', series.rdot),
               ('angular momentum', series.omega)]
    for row, (name, values) in enumerate(columns, start=1):
        axes = figure.add_subplot(len(columns), 1, row)
        axes.plot(series.times, values, linewidth=1)
        axes.set_ylabel(name)
        axes.grid(True, alpha=0.3)
    axes.set_xlabel('t')
    figure.tight_layout()
    _save(figure, filename)
