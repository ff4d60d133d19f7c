"""Exception hierarchy shared by the library and the CLI."""


class DbarError(Exception):
    """Base class for all errors raised by :mod:`dbar`."""


class UsageError(DbarError, ValueError):
    """Invalid arguments, malformed specs or configs (CLI exit code 2)."""


class HardCapError(DbarError):
    """The envelope cut points were needed beyond the hard depth cap."""


class BacktrackLimitError(DbarError):
    """The backward search for the regeneration time exceeded its budget."""


class UndefinedKernelError(DbarError):
    """A finite-order kernel was requested at a depth carrying zero mixture weight."""
