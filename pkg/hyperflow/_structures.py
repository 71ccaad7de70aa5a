import logging
import os
import traceback

import hyperflow

log = logging.getLogger(__name__)


def _is_from_hyperflow(traceback_frame_summary):
    prefix = os.path.normcase(hyperflow.__path__[0]).rstrip(os.sep) + os.sep
    return traceback_frame_summary.filename.startswith(prefix)


class Callback:
    """A list of functions that a solver calls with progress records.

    >>> seen = []
    >>> c = Callback()
    >>> c.connect(seen.append)
    >>> c.run({'iter': 1, 'action': 12.5})
    >>> seen
    [{'iter': 1, 'action': 12.5}]

    :attr:`hyperflow.Descent.on_iteration` and
    :data:`hyperflow.on_descent_iteration` are callbacks like this.
    """

    def __init__(self):
        self._connections = []

    def __repr__(self):
        return '<%s with %d connections>' % (
            type(self).__name__, len(self._connections))

    def __len__(self):
        """The number of connected functions.

        Solvers check this to skip preparing values that nobody looks at.
        """
        return len(self._connections)

    def connect(self, function, args=(), kwargs=None):
        """Call ``function(*run_args, *args, **kwargs)`` on every :meth:`run`.

        >>> c = Callback()
        >>> c.connect(print, args=['done'], kwargs={'sep': ', '})
        >>> c.run('iteration 3')
        iteration 3, done

        The function should return ``None`` or ``'break'``. Returning
        ``'break'`` skips the remaining functions and makes :meth:`run`
        return ``'break'``, which solvers take as a request to stop.
        """
        stack = traceback.extract_stack()
        while stack and _is_from_hyperflow(stack[-1]):
            del stack[-1]
        where = ''.join(traceback.format_list(stack))

        if kwargs is None:
            kwargs = {}
        self._connections.append((function, tuple(args), kwargs, where))

    def disconnect(self, function):
        """Undo the latest :meth:`connect` of *function*.

        >>> c = Callback()
        >>> c.connect(print, ['first'])
        >>> c.connect(print, ['second'])
        >>> c.disconnect(print)
        >>> c.run()
        first
        """
        for index in reversed(range(len(self._connections))):
            # bound methods compare equal but aren't the same object
            if self._connections[index][0] == function:
                del self._connections[index]
                return
        raise ValueError("not connected: %r" % (function,))

    def run(self, *args):
        """Call the connected functions in the order they were connected.

        Returns ``'break'`` if one of them did, and ``None`` otherwise. An
        exception from a connected function is logged along with the place
        where the function was connected, and the rest are skipped.
        """
        for function, extra_args, kwargs, where in self._connections:
            try:
                result = function(*(args + extra_args), **kwargs)
                if result == 'break':
                    return 'break'
                if result is not None:
                    raise ValueError(
                        "expected None or 'break', got %r" % (result,))
            except Exception:
                first_line, rest = traceback.format_exc().split('\n', 1)
                log.error("%s\nconnected here:\n%s%s", first_line, where,
                          rest.rstrip())
                return None
        return None


# runs after every iteration of every minimization that wasn't given its own
# on_iteration callback, the command line program logs these
on_descent_iteration = Callback()
