"""Exception hierarchy shared by all modules.

Two families matter for exit codes: ``InputError`` (and subclasses) means
the caller supplied something invalid and maps to exit code 2 in the CLI;
``NumericError`` (and subclasses) means a computation broke down and maps
to exit code 3.
"""


class BhcError(Exception):
    """Base class for all package errors."""


class InputError(BhcError):
    """Invalid argument, file, or configuration supplied by the caller."""


class ParseError(InputError):
    """Malformed data file; message names the offending row."""


class ScopeError(InputError):
    """Requested operation outside the supported scope (e.g. quadrature in d > 1)."""


class NumericError(BhcError):
    """A numeric computation produced non-finite or degenerate results."""


class DegenerateInputError(NumericError):
    """Input is structurally valid but numerically degenerate (e.g. all-zero Gram)."""


class SolverError(NumericError):
    """An iterative solver failed beyond its built-in safeguards."""
