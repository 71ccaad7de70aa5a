import collections.abc
import math
import numbers


def from_json(type_spec, value, where='value'):
    """Check and convert a value loaded with :func:`json.loads`.

    ``float``, ``int``, ``bool`` and ``str`` are checked directly,
    ``[spec]`` means a list of items, ``(spec1, spec2)`` means a list with
    exactly that many items, and ``{'key': spec}`` means an object whose
    keys must be a subset of the spec's keys.

    >>> from_json((float, float), [1, 2.5])
    (1.0, 2.5)
    >>> from_json({'h': float, 'name': str}, {'h': 1})
    {'h': 1.0}
    >>> from_json(int, 2.5, where='seed')
    Traceback (most recent call last):
      ...
    ValueError: seed: expected an integer, got 2.5

    Classes with a ``from_json`` class method are supported too, that is
    called with the value.
    """
    if type_spec is bool:
        if not isinstance(value, bool):
            raise ValueError("%s: expected true or false, got %r"
                             % (where, value))
        return value

    # bool is a subclass of int, so True must not pass as 1
    if type_spec is int:
        if isinstance(value, bool) or not isinstance(value, numbers.Integral):
            raise ValueError("%s: expected an integer, got %r"
                             % (where, value))
        return int(value)

    if type_spec is float:
        if isinstance(value, bool) or not isinstance(value, numbers.Real):
            raise ValueError("%s: expected a number, got %r" % (where, value))
        if math.isnan(value):
            raise ValueError("%s: expected a number, got NaN" % where)
        return float(value)

    if type_spec is str:
        if not isinstance(value, str):
            raise ValueError("%s: expected a string, got %r" % (where, value))
        return value

    if isinstance(type_spec, type):
        if hasattr(type_spec, 'from_json'):
            return type_spec.from_json(value)
        raise TypeError("unknown type specification " + repr(type_spec))

    if isinstance(type_spec, list):
        # [float] -> [1.0, 2.0, 3.0]
        (item_spec,) = type_spec
        if not isinstance(value, list):
            raise ValueError("%s: expected a list, got %r" % (where, value))
        return [from_json(item_spec, item, '%s[%d]' % (where, index))
                for index, item in enumerate(value)]

    if isinstance(type_spec, tuple):
        # (float, float) -> (1.0, 2.0)
        if not isinstance(value, list) or len(value) != len(type_spec):
            raise ValueError("%s: expected a list of %d items, got %r"
                             % (where, len(type_spec), value))
        return tuple(from_json(spec, item, '%s[%d]' % (where, index))
                     for index, (spec, item)
                     in enumerate(zip(type_spec, value)))

    if isinstance(type_spec, dict):
        # {'a': int} -> {'a': 1}, unknown keys are errors
        if not isinstance(value, dict):
            raise ValueError("%s: expected an object, got %r"
                             % (where, value))
        result = {}
        for key, item in value.items():
            if key not in type_spec:
                raise ValueError("%s: unknown key %r" % (where, key))
            result[key] = from_json(type_spec[key], item,
                                    '%s.%s' % (where, key))
        return result

    raise TypeError("unknown type specification " + repr(type_spec))


class TypedOptions(collections.abc.MutableMapping):
    """A dict-like object of options that have fixed names and types.

    Subclasses set ``_types`` to ``{name: type spec}`` and ``_defaults`` to
    ``{name: default value}``. Unknown names are :exc:`KeyError`\\ s, just like
    with dicts.
    """

    _types = {}
    _defaults = {}
    # names of options that must be > 0
    _positive = frozenset()

    def __init__(self, **kwargs):
        self._values = dict(self._defaults)
        for key, value in kwargs.items():
            self[key] = value

    def __repr__(self):
        return '<%s: %s>' % (type(self).__name__, ', '.join(
            '%s=%r' % pair for pair in sorted(self._values.items())))

    def __call__(self, *args, **kwargs):
        raise TypeError("use options['name'] = value, "
                        "not options(name=value)")

    def _check_option(self, option):
        if option not in self._types:
            raise KeyError(option)

    def __setitem__(self, option, value):
        self._check_option(option)
        value = from_json(self._types[option], value, option)
        if option in self._positive and not value > 0:
            raise ValueError("%s must be positive, not %r" % (option, value))
        self._validate(option, value)
        self._values[option] = value

    def _validate(self, option, value):
        """Raise ValueError if a type-checked *value* is not allowed."""

    def __getitem__(self, option):
        self._check_option(option)
        return self._values[option]

    # MutableMapping requires that there is a __delitem__
    def __delitem__(self, option):
        raise TypeError("options cannot be deleted")

    def __iter__(self):
        return iter(self._types)

    def __len__(self):
        return len(self._types)

    def copy(self, **changes):
        """Return a new options object of the same type with some changes.

        >>> opts = Options(tol=1e-6)
        >>> opts.copy(max_iter=5)['tol']
        1e-06
        """
        result = type(self)()
        result._values.update(self._values)
        for key, value in changes.items():
            result[key] = value
        return result


class Options(TypedOptions):
    """Options for the minimizers and the continuation drivers.

    >>> opts = Options()
    >>> opts['phase_grid']
    8
    >>> opts['phase_grid'] = 4
    >>> opts['nonsense'] = 1
    Traceback (most recent call last):
      ...
    KeyError: 'nonsense'

    See the :ref:`option table <options>` for what the options do.
    """

    _types = {
        'tol': float,
        'max_iter': int,
        'memory': int,
        'guard_factor': float,
        'nodes_per_period': int,
        'max_nodes': int,
        'refine_tol': float,
        'max_refinements': int,
        'phase_grid': int,
        'golden_iter': int,
        'max_periods': int,
        'quad_order': int,
        'penalty_weight': float,
        'penalty_fraction': float,
        'multistart': bool,
        'compare_untied': bool,
    }
    _defaults = {
        'tol': 1e-8,
        'max_iter': 10000,
        'memory': 10,
        'guard_factor': 1e-3,
        'nodes_per_period': 64,
        'max_nodes': 4097,
        'refine_tol': 1e-6,
        'max_refinements': 4,
        'phase_grid': 8,
        'golden_iter': 12,
        'max_periods': 64,
        'quad_order': 4,
        'penalty_weight': 1.0,
        'penalty_fraction': 0.2,
        'multistart': True,
        'compare_untied': True,
    }
    _positive = frozenset([
        'tol', 'max_iter', 'memory', 'guard_factor', 'nodes_per_period',
        'max_nodes', 'refine_tol', 'phase_grid', 'golden_iter',
        'max_periods', 'quad_order'])

    def _validate(self, option, value):
        if option == 'max_nodes' and value < 3:
            raise ValueError("max_nodes must be at least 3")
        if option == 'penalty_fraction' and not 0 <= value < 1:
            raise ValueError("penalty_fraction must be in [0, 1), not %r"
                             % (value,))
