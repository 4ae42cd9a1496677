"""Exception hierarchy shared by every module.

All input problems derive from :class:`InputError` (CLI exit code 1);
infeasibility derives from :class:`InfeasibleError` (CLI exit code 2).
"""


class ModclError(Exception):
    pass


class InputError(ModclError, ValueError):
    pass


class InfeasibleError(ModclError):
    pass


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateName(ParseError):
    pass


class UnknownGroup(ParseError):
    pass


class UnknownLabel(ParseError):
    pass


class TautologicalClause(ParseError):
    pass


class EmptyClause(ParseError):
    pass


class LabelSpaceMismatch(InputError):
    pass


class TooManyVars(InputError):
    pass


class Unsatisfiable(InfeasibleError):
    """The requirement conjunction has no model."""

    def __init__(self, message, clause_index=None):
        self.clause_index = clause_index
        super().__init__(message)


class HardUnsat(InfeasibleError):
    """No assignment satisfies the hard clauses of a MaxSAT problem."""
