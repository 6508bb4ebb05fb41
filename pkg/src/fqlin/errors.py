"""Common base class for all domain errors raised by this package.

The CLI maps any ``FqlinError`` to exit code 1; genuine bugs propagate.
"""


class FqlinError(Exception):
    pass
