import collections
import logging

import numpy as np

import hyperflow
from hyperflow._structures import Callback

log = logging.getLogger(__name__)

DescentResult = collections.namedtuple(
    'DescentResult', 'x value gradient grad_norm iterations status')
DescentResult.__doc__ = """What :meth:`Descent.run` returns.

``status`` is ``'converged'``, ``'max-iter'``, ``'interrupted'`` or
``'stalled'``. Stalling means that the line search found no step that
decreases the value, which happens when rounding errors dominate.
"""

ARMIJO = 1e-4
MAX_HALVINGS = 50


def _max_abs(gradient):
    return float(np.max(np.abs(gradient))) if gradient.size else 0.0


class Descent:
    """Limited-memory BFGS descent with a backtracking line search.

    *function* takes a real vector and returns ``(value, gradient)``. The
    iteration stops when ``grad_norm(gradient) <= tol``; the default norm is
    the largest absolute component.

    *precondition* is a function that multiplies a vector by an
    approximate inverse Hessian. It is the starting point of the curvature
    approximation, and the default is the identity. If *accept* is given,
    trial points for which ``accept(x)`` returns False are treated like
    points where the value didn't decrease, so the descent never leaves the
    set of accepted points.

    Values never increase from one iteration to the next.

    .. attribute:: on_iteration

        A :class:`.Callback` that runs with a dict argument after every
        iteration. The dict has ``iter``, ``action`` and ``grad_norm`` keys,
        and the keys from the *monitor* function if one was given. If a
        connected function returns ``'break'``, the descent stops with
        status ``'interrupted'``.
    """

    def __init__(self, function, *, precondition=None, accept=None,
                 grad_norm=None, monitor=None, memory=10, tol=1e-8,
                 max_iter=10000, on_iteration=None):
        self.function = function
        self.precondition = precondition
        self.accept = accept
        self.grad_norm = _max_abs if grad_norm is None else grad_norm
        self.monitor = monitor
        self.memory = memory
        self.tol = tol
        self.max_iter = max_iter
        if on_iteration is None:
            on_iteration = Callback()
        self.on_iteration = on_iteration

    def __repr__(self):
        return '<%s: memory=%d, tol=%g, max_iter=%d>' % (
            type(self).__name__, self.memory, self.tol, self.max_iter)

    def _evaluate(self, x):
        value, gradient = self.function(x)
        value = float(value)
        gradient = np.asarray(gradient, dtype=float)
        if not (np.isfinite(value) and np.all(np.isfinite(gradient))):
            raise hyperflow.NumericalError(
                "objective is not finite", {
                    'value': value,
                    'bad_gradient_components': int(
                        np.sum(~np.isfinite(gradient))),
                    'x_norm': float(np.max(np.abs(x))),
                })
        return value, gradient

    def _apply_h0(self, vector):
        if self.precondition is None:
            return vector.copy()
        return self.precondition(vector)

    def _direction(self, gradient, pairs):
        # the two-loop recursion
        q = gradient.copy()
        alphas = []
        for s, y, rho in reversed(pairs):
            alpha = rho * (s @ q)
            q -= alpha * y
            alphas.append(alpha)

        r = self._apply_h0(q)
        if pairs:
            s, y, rho = pairs[-1]
            hy = self._apply_h0(y)
            r *= (s @ y) / (y @ hy)

        for (s, y, rho), alpha in zip(pairs, reversed(alphas)):
            beta = rho * (y @ r)
            r += (alpha - beta) * s
        return -r

    def _line_search(self, x, value, gradient, direction):
        slope = gradient @ direction
        norm = self.grad_norm(gradient)
        step = 1.0
        for halving in range(MAX_HALVINGS):
            trial = x + step * direction
            if self.accept is None or self.accept(trial):
                try:
                    new_value, new_gradient = self._evaluate(trial)
                except hyperflow.SingularityError:
                    new_value = None

                if new_value is not None:
                    if new_value <= value + ARMIJO * step * slope:
                        return trial, new_value, new_gradient
                    # rounding errors hide decreases near the minimum
                    if (new_value <= value
                            and self.grad_norm(new_gradient) < norm):
                        return trial, new_value, new_gradient
            step *= 0.5
        return None

    def _publish(self, iteration, x, value, norm):
        if not len(self.on_iteration):
            return None
        record = {'iter': iteration, 'action': value, 'grad_norm': norm}
        if self.monitor is not None:
            record.update(self.monitor(x))
        return self.on_iteration.run(record)

    def run(self, x0):
        """Minimize starting at *x0*, and return a :class:`DescentResult`."""
        x = np.array(x0, dtype=float)
        if self.accept is not None and not self.accept(x):
            raise ValueError("the starting point is not accepted")
        value, gradient = self._evaluate(x)
        pairs = collections.deque(maxlen=self.memory)
        status = 'max-iter'

        iteration = 0
        while True:
            norm = self.grad_norm(gradient)
            if self._publish(iteration, x, value, norm) == 'break':
                status = 'interrupted'
                break
            if norm <= self.tol:
                status = 'converged'
                break
            if iteration >= self.max_iter:
                break

            direction = self._direction(gradient, pairs)
            if gradient @ direction >= 0:
                pairs.clear()
                direction = -self._apply_h0(gradient)
            step = self._line_search(x, value, gradient, direction)
            if step is None and pairs:
                log.debug("line search failed at iteration %d, dropping "
                          "curvature pairs", iteration)
                pairs.clear()
                step = self._line_search(
                    x, value, gradient, -self._apply_h0(gradient))
            if step is None:
                status = 'stalled'
                break

            new_x, new_value, new_gradient = step
            s = new_x - x
            y = new_gradient - gradient
            sy = s @ y
            if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
                pairs.append((s, y, 1 / sy))
            x, value, gradient = new_x, new_value, new_gradient
            iteration += 1

        log.debug("descent finished after %d iterations: %s, value %.15g, "
                  "gradient norm %g", iteration, status, value, norm)
        return DescentResult(x, value, gradient, norm, iteration, status)
