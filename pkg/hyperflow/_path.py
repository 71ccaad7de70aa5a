import csv

import numpy as np


def _as_complex(positions):
    positions = np.asarray(positions)
    if np.iscomplexobj(positions) or positions.ndim == 1:
        return positions.astype(complex)
    positions = positions.astype(float)
    if positions.ndim != 2 or positions.shape[1] != 2:
        raise ValueError("expected complex positions or (x, y) pairs, got "
                         "an array of shape %r" % (positions.shape,))
    return positions[:, 0] + 1j * positions[:, 1]


def _readonly(array):
    array = np.array(array)
    array.flags.writeable = False
    return array


class Path:
    """A trajectory of the massless body, linear between nodes.

    *times* must be strictly increasing, and *positions* can be complex
    numbers ``x + iy`` or ``(x, y)`` pairs. Integrated orbits also know
    their *velocities* at the nodes; paths that come from the minimizers
    don't.

    >>> path = Path([0, 1, 3], [0, 1, 1+2j])
    >>> path
    <Path: 3 nodes on [0, 3]>
    >>> complex(path.at(2.0))
    (1+1j)
    >>> path.xy.tolist()
    [[0.0, 0.0], [1.0, 0.0], [1.0, 2.0]]

    Paths are immutable, all methods that "change" the path return a new
    path.
    """

    def __init__(self, times, positions, velocities=None):
        times = np.asarray(times, dtype=float)
        positions = _as_complex(positions)
        if times.ndim != 1 or times.shape != positions.shape:
            raise ValueError("got %d times but %d positions"
                             % (times.size, positions.size))
        if times.size < 2:
            raise ValueError("a path needs at least 2 nodes, got %d"
                             % times.size)
        if not (np.all(np.isfinite(times))
                and np.all(np.isfinite(positions))):
            raise ValueError("path contains non-finite values")
        if not np.all(np.diff(times) > 0):
            raise ValueError("path times must be strictly increasing")

        if velocities is not None:
            velocities = _as_complex(velocities)
            if velocities.shape != positions.shape:
                raise ValueError("got %d positions but %d velocities"
                                 % (positions.size, velocities.size))
            velocities = _readonly(velocities)

        self.times = _readonly(times)
        self.z = _readonly(positions)
        self.velocities = velocities

    def __repr__(self):
        return '<%s: %d nodes on [%g, %g]>' % (
            type(self).__name__, len(self), self.start, self.end)

    def __len__(self):
        return self.times.size

    @property
    def start(self):
        return float(self.times[0])

    @property
    def end(self):
        return float(self.times[-1])

    @property
    def duration(self):
        return self.end - self.start

    @property
    def xy(self):
        """The positions as an array of ``(x, y)`` rows."""
        return np.column_stack([self.z.real, self.z.imag])

    def at(self, t):
        """Return the position at time *t*, or an array for an array of times.
        """
        real = np.interp(t, self.times, self.z.real)
        imag = np.interp(t, self.times, self.z.imag)
        return real + 1j * imag

    def shifted(self, dt):
        return Path(self.times + dt, self.z, self.velocities)

    def with_positions(self, positions):
        return Path(self.times, positions)

    def resampled(self, times):
        """Interpolate the path at new node *times*."""
        times = np.asarray(times, dtype=float)
        if times[0] < self.start or times[-1] > self.end:
            raise ValueError("can't resample [%g, %g] outside [%g, %g]"
                             % (times[0], times[-1], self.start, self.end))
        return Path(times, self.at(times))

    def with_nodes(self, extra_times):
        """Add nodes without changing the path as a function of time."""
        extra = np.asarray(extra_times, dtype=float)
        extra = extra[(extra > self.start) & (extra < self.end)]
        times = np.union1d(self.times, extra)
        # the old nodes keep their exact positions
        positions = self.at(times)
        old = np.searchsorted(times, self.times)
        positions[old] = self.z
        return Path(times, positions)

    def refined(self):
        """Insert a node in the middle of every segment."""
        return self.with_nodes(0.5 * (self.times[1:] + self.times[:-1]))

    def segment(self, t_start, t_end):
        """The part of the path between two times, with nodes at both ends."""
        if not self.start <= t_start < t_end <= self.end:
            raise ValueError("[%g, %g] is not inside [%g, %g]"
                             % (t_start, t_end, self.start, self.end))
        full = self.with_nodes([t_start, t_end])
        keep = (full.times >= t_start) & (full.times <= t_end)
        return Path(full.times[keep], full.z[keep])

    def reflected(self, t_center):
        """Return the path run backwards in time around *t_center*."""
        velocities = None
        if self.velocities is not None:
            velocities = -self.velocities[::-1]
        return Path(2 * t_center - self.times[::-1], self.z[::-1], velocities)

    def node_velocities(self):
        """Velocities at the nodes.

        Stored velocities are returned if there are any. Otherwise they are
        estimated with second order differences, which are one-sided at the
        ends.
        """
        if self.velocities is not None:
            return self.velocities
        t = self.times
        z = self.z
        if len(self) == 2:
            slope = (z[1] - z[0]) / (t[1] - t[0])
            return np.array([slope, slope])
        return np.gradient(z, t, edge_order=2)


def write_path_csv(path, filename, extra_columns=None):
    """Write *path* to a CSV file with ``t,x,y`` columns.

    Velocities are written as ``vx,vy`` columns if the path has them.
    *extra_columns* can be a dict of ``{name: values}`` for more columns.
    Numbers are written with 17 significant digits, so reading the file
    back gives exactly the same floats.
    """
    header = ['t', 'x', 'y']
    columns = [path.times, path.z.real, path.z.imag]
    if path.velocities is not None:
        header += ['vx', 'vy']
        columns += [path.velocities.real, path.velocities.imag]
    for name, values in (extra_columns or {}).items():
        header.append(name)
        columns.append(np.asarray(values, dtype=float))

    with open(filename, 'w', newline='', encoding='utf-8') as file:
        writer = csv.writer(file)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow(['%.17g' % value for value in row])


def read_path_csv(filename):
    """Read a file written by :func:`write_path_csv`.

    Columns other than ``t,x,y,vx,vy`` are ignored.
    """
    with open(filename, 'r', newline='', encoding='utf-8') as file:
        reader = csv.reader(file)
        header = next(reader)
        rows = [[float(value) for value in row] for row in reader if row]

    for name in ['t', 'x', 'y']:
        if name not in header:
            raise ValueError("%s: no %r column" % (filename, name))
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    column = {name: data[:, index] for index, name in enumerate(header)}

    velocities = None
    if 'vx' in column and 'vy' in column:
        velocities = column['vx'] + 1j * column['vy']
    return Path(column['t'], column['x'] + 1j * column['y'], velocities)
