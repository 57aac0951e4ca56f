"""Exception taxonomy.

Two buckets matter operationally: problems with what the caller handed us
(bad files, bad flags, inconsistent shapes -- exit code 2 at the CLI) and
everything else (exit code 1).
"""


class LesionkitError(Exception):
    """Base class for all errors raised by this package."""


class InputError(LesionkitError):
    """Invalid input: unreadable/ill-formed files, bad arguments, shape or
    label-range violations.  Maps to CLI exit code 2."""
